//! Nelder–Mead simplex search with dimension-adaptive coefficients.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iters: usize,
    /// Convergence when the simplex diameter (max-norm) falls below this.
    pub x_tol: f64,
    /// ... and the spread of objective values falls below this.
    pub f_tol: f64,
    /// Rebuild the simplex around the best vertex this many times after
    /// convergence, to escape premature collapse.
    pub polish_restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            x_tol: 1e-7,
            f_tol: 1e-11,
            polish_restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iters: usize,
    pub evals: usize,
    pub converged: bool,
}

struct Coefficients {
    reflect: f64,
    expand: f64,
    contract: f64,
    shrink: f64,
}

impl Coefficients {
    fn for_dim(d: usize) -> Self {
        let d = d.max(2) as f64;
        Self {
            reflect: 1.0,
            expand: 1.0 + 2.0 / d,
            contract: 0.75 - 1.0 / (2.0 * d),
            shrink: 1.0 - 1.0 / d,
        }
    }
}

fn initial_simplex(x0: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut s = vec![x0.to_vec()];
    for (i, &h) in steps.iter().enumerate() {
        let mut v = x0.to_vec();
        v[i] += h;
        s.push(v);
    }
    s
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Minimize `f` from `x0` with per-coordinate initial steps. Non-finite objective
/// values are treated as `+∞`.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: &SimplexOptions,
) -> SimplexResult {
    let d = x0.len();
    assert_eq!(d, steps.len());
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if d == 0 {
        let v = eval(x0);
        return SimplexResult {
            x: vec![],
            f: v,
            iters: 0,
            evals,
            converged: true,
        };
    }
    let c = Coefficients::for_dim(d);

    let mut simplex = initial_simplex(x0, steps);
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut iters = 0;
    let mut polishes = 0;
    let mut converged = false;

    loop {
        // order vertices, ties by position so the order is deterministic
        let mut idx: Vec<usize> = (0..=d).collect();
        idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();

        let spread = values[d] - values[0];
        if diameter(&simplex) <= opts.x_tol && (spread <= opts.f_tol || !spread.is_finite()) {
            if polishes < opts.polish_restarts {
                polishes += 1;
                let rebuilt: Vec<f64> = steps
                    .iter()
                    .zip(&simplex[0])
                    .map(|(h, x)| (0.1 * h).max(1e-3 * x.abs()).max(10.0 * opts.x_tol))
                    .collect();
                let best = simplex[0].clone();
                let fbest = values[0];
                simplex = initial_simplex(&best, &rebuilt);
                values = std::iter::once(fbest)
                    .chain(simplex[1..].iter().map(|v| eval(v)))
                    .collect();
                continue;
            }
            converged = true;
            break;
        }
        if iters >= opts.max_iters {
            break;
        }
        iters += 1;

        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|v| v[k]).sum::<f64>() / d as f64)
            .collect();
        let towards = |coef: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d])
                .map(|(m, w)| m + coef * (m - w))
                .collect()
        };

        let xr = towards(c.reflect);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = towards(c.reflect * c.expand);
            let fe = eval(&xe);
            if fe < fr {
                simplex[d] = xe;
                values[d] = fe;
            } else {
                simplex[d] = xr;
                values[d] = fr;
            }
            continue;
        }
        if fr < values[d - 1] {
            simplex[d] = xr;
            values[d] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[d] {
            let xc = towards(c.reflect * c.contract);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = towards(-c.contract);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[d].min(fr) {
            simplex[d] = xc;
            values[d] = fc;
            continue;
        }
        // shrink towards the best vertex
        let best = simplex[0].clone();
        for i in 1..=d {
            let v: Vec<f64> = simplex[i]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + c.shrink * (x - b))
                .collect();
            values[i] = eval(&v);
            simplex[i] = v;
        }
    }

    SimplexResult {
        x: simplex[0].clone(),
        f: values[0],
        iters,
        evals,
        converged,
    }
}
