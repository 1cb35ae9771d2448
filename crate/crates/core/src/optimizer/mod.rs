//! Weighted-sum optimization of LoPE parameters and ω sweeps of the
//! power–estimation frontier.
//!
//! For a weight `ω ∈ [0, 1]` the search minimizes `ω·P + (1-ω)·S` over all valid
//! n-step parameter tuples. The ordering constraints on amplitudes and breakpoints
//! are removed by writing every increment as a square (see [`FreeParams`]), so the
//! simplex search runs unconstrained and every point it visits is feasible.

pub mod nelder_mead;

use std::io::{self, Write};

use rayon::prelude::*;

use crate::costs::{estimation_cost, power_cost, CostPoint, QuadratureConfig};
use crate::error::{Error, Result};
use crate::strategies::{format_real, LopeParams, ProblemConfig};
pub use nelder_mead::{SimplexOptions, SimplexResult};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// `ω·P + (1-ω)·S` for a fixed step count and problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedObjective {
    pub omega: f64,
    pub n: usize,
    pub cfg: ProblemConfig,
    pub qc: QuadratureConfig,
}

impl WeightedObjective {
    pub fn new(omega: f64, n: usize, cfg: ProblemConfig, qc: QuadratureConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::InvalidParams(format!("omega must lie in [0, 1], got {omega}")));
        }
        if n == 0 {
            return Err(Error::InvalidParams("step count must be positive".into()));
        }
        qc.validate()?;
        Ok(Self { omega, n, cfg, qc })
    }

    /// `k² = ω / (1 - ω)`; infinite at `ω = 1`.
    pub fn k_squared(&self) -> f64 {
        omega_to_k_squared(self.omega)
    }

    pub fn combine(&self, point: &CostPoint) -> f64 {
        if self.omega == 1.0 {
            return point.power;
        }
        self.omega * point.power + (1.0 - self.omega) * point.estimation
    }
}

pub fn omega_to_k_squared(omega: f64) -> f64 {
    if omega >= 1.0 {
        f64::INFINITY
    } else {
        omega / (1.0 - omega)
    }
}

pub fn k_squared_to_omega(k_squared: f64) -> f64 {
    if k_squared.is_infinite() {
        1.0
    } else {
        k_squared / (k_squared + 1.0)
    }
}

/// Unconstrained encoding of an n-step parameter tuple in `2n - 1` reals:
/// `[s_1, …, s_n, t_2, …, t_n]` with `a_i = Σ_{j≤i} s_j²` and `B_i = Σ_{2≤j≤i} t_j²`.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParams(pub Vec<f64>);

impl FreeParams {
    pub fn steps(&self) -> usize {
        (self.0.len() + 1) / 2
    }

    pub fn encode(p: &LopeParams) -> Self {
        let n = p.steps();
        let mut v = Vec::with_capacity(2 * n - 1);
        let mut prev = 0.0;
        for &a in p.amplitudes() {
            v.push((a - prev).max(0.0).sqrt());
            prev = a;
        }
        for w in p.breakpoints().windows(2) {
            v.push((w[1] - w[0]).max(0.0).sqrt());
        }
        Self(v)
    }

    pub fn decode(&self) -> Result<LopeParams> {
        if self.0.is_empty() || self.0.len() % 2 == 0 {
            return Err(Error::InvalidParams(format!(
                "free parameter vector must have odd length, got {}",
                self.0.len()
            )));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("free parameters"));
        }
        let n = self.steps();
        let mut a = Vec::with_capacity(n);
        let mut acc = 0.0;
        for s in &self.0[..n] {
            acc += s * s;
            a.push(acc);
        }
        let mut b = Vec::with_capacity(n);
        b.push(0.0);
        let mut acc = 0.0;
        for t in &self.0[n..] {
            acc += t * t;
            b.push(acc);
        }
        LopeParams::new(a, b)
    }
}

/// Decodes `fp` and evaluates the weighted objective.
pub fn evaluate_objective(fp: &FreeParams, obj: &WeightedObjective) -> Result<f64> {
    let p = fp.decode()?;
    if p.steps() != obj.n {
        return Err(Error::InvalidParams(format!(
            "free parameters encode {} steps, objective expects {}",
            p.steps(),
            obj.n
        )));
    }
    Ok(obj.combine(&evaluate_point(&p, obj)?))
}

fn evaluate_point(p: &LopeParams, obj: &WeightedObjective) -> Result<CostPoint> {
    if obj.omega == 1.0 {
        // S has zero weight; skip the quadrature
        return Ok(CostPoint {
            power: power_cost(p, &obj.cfg),
            estimation: f64::NAN,
            method: crate::costs::CostMethod::ClosedForm,
            quad_error_estimate: 0.0,
        });
    }
    estimation_cost(p, &obj.cfg, &obj.qc)
}

/// Starting point of a local search.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Cold,
    /// Start from these parameters (padded if they have fewer steps) plus the cold starts.
    Warm(LopeParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    /// Number of cold starts, taken in order from [`cold_starts`].
    pub restarts: usize,
    pub simplex: SimplexOptions,
    pub init: Init,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            simplex: SimplexOptions::default(),
            init: Init::Cold,
        }
    }
}

/// Deterministic, dispersed initial parameter sets scaled by `√Q`.
///
/// The first cycle of eight holds a large-amplitude start concentrated at the
/// origin (two-point-like), a fine uniform quantizer out to `3√Q`, and six
/// intermediate shapes; further starts repeat the cycle with rescaled amplitudes.
pub fn cold_starts(n: usize, cfg: &ProblemConfig, count: usize) -> Vec<LopeParams> {
    let sd = cfg.q().sqrt();
    let frac = |i: usize| if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
    let shape = |k: usize| -> (Vec<f64>, Vec<f64>) {
        match k {
            // large amplitudes, breakpoints crowded at zero
            0 => (
                (0..n).map(|i| sd * (0.8 + 0.1 * frac(i))).collect(),
                (0..n).map(|i| sd * 0.05 * i as f64).collect(),
            ),
            // fine quantizer: equal increments out to 3√Q, amplitude tracks the breakpoint
            1 => {
                let step = 3.0 * sd / n as f64;
                (
                    (0..n).map(|i| step * (i as f64 + 0.5)).collect(),
                    (0..n).map(|i| step * i as f64).collect(),
                )
            }
            // small amplitudes, wide segments
            2 => (
                (0..n).map(|i| sd * 0.05 * (i + 1) as f64).collect(),
                (0..n).map(|i| sd * 0.5 * i as f64).collect(),
            ),
            // zero inner amplitude, outer amplitudes trailing the breakpoints
            3 => {
                let b: Vec<f64> = (0..n).map(|i| sd * 0.9 * i as f64).collect();
                (b.iter().map(|x| 0.7 * x).collect(), b)
            }
            4 => (
                (0..n).map(|i| sd * 0.2 * (i + 1) as f64 / n as f64).collect(),
                (0..n).map(|i| sd * 1.0 * frac(i) * (n > 1) as u8 as f64).collect(),
            ),
            5 => (
                (0..n).map(|i| sd * 0.5 * (i + 1) as f64 / n as f64).collect(),
                (0..n).map(|i| sd * 1.5 * frac(i) * (n > 1) as u8 as f64).collect(),
            ),
            6 => (
                (0..n).map(|i| sd * 0.3 * (i + 1) as f64 / n as f64).collect(),
                (0..n).map(|i| sd * 0.6 * frac(i) * (n > 1) as u8 as f64).collect(),
            ),
            _ => (
                (0..n).map(|i| sd * 1.2 * (i + 1) as f64 / n as f64).collect(),
                (0..n).map(|i| sd * 2.5 * frac(i) * (n > 1) as u8 as f64).collect(),
            ),
        }
    };
    (0..count)
        .map(|k| {
            let (mut a, b) = shape(k % 8);
            let scale = 1.0 + 0.25 * (k / 8) as f64;
            a.iter_mut().for_each(|x| *x *= scale);
            LopeParams::new(a, b).expect("cold start shapes are valid")
        })
        .collect()
}

fn initial_steps(dim: usize, cfg: &ProblemConfig) -> Vec<f64> {
    vec![0.15 * cfg.q().sqrt().sqrt(); dim]
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// One optimized point of a frontier sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierRecord {
    pub omega: f64,
    pub k_squared: f64,
    pub params: LopeParams,
    pub point: CostPoint,
    pub objective_value: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// Set when another record of the same sweep has both lower power and lower MMSE.
    pub dominated: bool,
}

/// Run a local simplex search from every start in parallel and keep the best.
fn search<F>(starts: &[LopeParams], cfg: &ProblemConfig, opts: &SimplexOptions, f: F) -> (SimplexResult, bool)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let results: Vec<SimplexResult> = starts
        .par_iter()
        .map(|p| {
            let x0 = FreeParams::encode(p).0;
            let steps = initial_steps(x0.len(), cfg);
            nelder_mead::minimize(&f, &x0, &steps, opts)
        })
        .collect();
    let any_converged = results.iter().any(|r| r.converged);
    let best = results
        .into_iter()
        .min_by(|a, b| a.f.total_cmp(&b.f).then_with(|| lexicographic(&a.x, &b.x)))
        .expect("at least one start");
    (best, any_converged)
}

fn starting_set(n: usize, cfg: &ProblemConfig, opts: &OptimizeOptions) -> Vec<LopeParams> {
    let mut starts = Vec::new();
    if let Init::Warm(p) = &opts.init {
        starts.push(if p.steps() < n { p.pad_to(n) } else { p.clone() });
    }
    starts.extend(cold_starts(n, cfg, opts.restarts));
    if starts.is_empty() {
        starts.extend(cold_starts(n, cfg, 1));
    }
    starts
}

/// Minimizes the weighted objective; non-convergence is reported in the record.
pub fn optimize_at(obj: &WeightedObjective, opts: &OptimizeOptions) -> Result<FrontierRecord> {
    if let Init::Warm(p) = &opts.init {
        if p.steps() > obj.n {
            return Err(Error::InvalidParams(format!(
                "warm start has {} steps, objective has {}",
                p.steps(),
                obj.n
            )));
        }
    }
    let starts = starting_set(obj.n, &obj.cfg, opts);
    let f = |x: &[f64]| {
        evaluate_objective(&FreeParams(x.to_vec()), obj).unwrap_or(f64::INFINITY)
    };
    let (best, converged) = search(&starts, &obj.cfg, &opts.simplex, f);
    let params = FreeParams(best.x).decode()?;
    let point = estimation_cost(&params, &obj.cfg, &obj.qc)?;
    Ok(FrontierRecord {
        omega: obj.omega,
        k_squared: obj.k_squared(),
        objective_value: obj.combine(&point),
        params,
        point,
        converged,
        restarts_used: starts.len(),
        dominated: false,
    })
}

/// Result of minimizing `S` at a fixed power.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerConstrainedResult {
    pub params: LopeParams,
    pub point: CostPoint,
    pub converged: bool,
}

/// Rescale all amplitudes so the controller spends exactly `target` power.
/// Returns `None` when the controller has no power to rescale.
pub fn rescale_to_power(p: &LopeParams, cfg: &ProblemConfig, target: f64) -> Option<LopeParams> {
    let power = power_cost(p, cfg);
    if !(power > 0.0) {
        return None;
    }
    let c = (target / power).sqrt();
    LopeParams::new(
        p.amplitudes().iter().map(|a| a * c).collect(),
        p.breakpoints().to_vec(),
    )
    .ok()
}

/// Minimize the MMSE over n-step controllers spending exactly `target` power.
///
/// The power constraint is enforced by rescaling the amplitudes of every
/// candidate (power is quadratic in a common amplitude scale), so the search
/// stays unconstrained. `extra_starts` are tried before the cold starts.
pub fn optimize_at_power(
    n: usize,
    cfg: &ProblemConfig,
    qc: &QuadratureConfig,
    target: f64,
    extra_starts: &[LopeParams],
    opts: &OptimizeOptions,
) -> Result<PowerConstrainedResult> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::InvalidParams(format!("target power must be positive, got {target}")));
    }
    let mut starts: Vec<LopeParams> = extra_starts
        .iter()
        .map(|p| if p.steps() < n { p.pad_to(n) } else { p.clone() })
        .collect();
    if let Some(s) = starts.iter().find(|p| p.steps() != n) {
        return Err(Error::InvalidParams(format!(
            "start has {} steps, expected {n}",
            s.steps()
        )));
    }
    starts.extend(cold_starts(n, cfg, opts.restarts));
    let starts: Vec<LopeParams> = starts
        .iter()
        .filter_map(|p| rescale_to_power(p, cfg, target))
        .collect();
    if starts.is_empty() {
        return Err(Error::InvalidParams("no start with positive power".into()));
    }
    let f = |x: &[f64]| -> f64 {
        let Ok(p) = FreeParams(x.to_vec()).decode() else {
            return f64::INFINITY;
        };
        match rescale_to_power(&p, cfg, target) {
            Some(scaled) => estimation_cost(&scaled, cfg, qc)
                .map(|c| c.estimation)
                .unwrap_or(f64::INFINITY),
            None => f64::INFINITY,
        }
    };
    let (best, converged) = search(&starts, cfg, &opts.simplex, f);
    let params = rescale_to_power(&FreeParams(best.x).decode()?, cfg, target)
        .ok_or_else(|| Error::InvalidParams("optimum has zero power".into()))?;
    let point = estimation_cost(&params, cfg, qc)?;
    Ok(PowerConstrainedResult {
        params,
        point,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Options for the first ω (cold).
    pub first: OptimizeOptions,
    /// Cold starts added to the warm start at every later ω.
    pub warm_restarts: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            first: OptimizeOptions::default(),
            warm_restarts: 2,
        }
    }
}

/// Optimized points along an ω grid, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSweep {
    pub n: usize,
    pub records: Vec<FrontierRecord>,
}

/// `start:end:count`, inclusive of both endpoints.
pub fn parse_omega_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |msg: String| Error::Parse {
        line: 1,
        column: 1,
        message: msg,
    };
    if parts.len() != 3 {
        return Err(bad(format!("expected start:end:count, got `{spec}`")));
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad(format!("bad start `{}`", parts[0])))?;
    let end: f64 = parts[1].trim().parse().map_err(|_| bad(format!("bad end `{}`", parts[1])))?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad(format!("bad count `{}`", parts[2])))?;
    if count == 0 {
        return Err(bad("count must be positive".into()));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    Ok((0..count)
        .map(|i| {
            if i + 1 == count {
                end
            } else {
                start + (end - start) * i as f64 / (count - 1) as f64
            }
        })
        .collect())
}

/// Warm-started optimization along a sorted ω grid; dominated points are flagged.
pub fn sweep(
    n: usize,
    cfg: &ProblemConfig,
    qc: &QuadratureConfig,
    omegas: &[f64],
    opts: &SweepOptions,
) -> Result<FrontierSweep> {
    if omegas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParams("omega grid must be sorted".into()));
    }
    let mut records: Vec<FrontierRecord> = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let obj = WeightedObjective::new(omega, n, *cfg, *qc)?;
        let o = match records.last() {
            None => opts.first.clone(),
            Some(prev) => OptimizeOptions {
                restarts: opts.warm_restarts,
                simplex: opts.first.simplex,
                init: Init::Warm(prev.params.clone()),
            },
        };
        records.push(optimize_at(&obj, &o)?);
    }
    let mut sweep = FrontierSweep { n, records };
    sweep.mark_dominated();
    Ok(sweep)
}

impl FrontierSweep {
    pub fn mark_dominated(&mut self) {
        let pts: Vec<(f64, f64)> = self
            .records
            .iter()
            .map(|r| (r.point.power, r.point.estimation))
            .collect();
        const EPS: f64 = 1e-12;
        for (i, r) in self.records.iter_mut().enumerate() {
            let (p, s) = pts[i];
            r.dominated = pts.iter().enumerate().any(|(j, &(pj, sj))| {
                j != i && pj <= p + EPS && sj <= s + EPS && (pj < p - EPS || sj < s - EPS)
            });
        }
    }

    /// Indices `j` where the objective jumps between grid points `j` and `j+1` by
    /// more than ten times the change predicted by its ω-derivative `P - S`.
    /// The objective is concave in ω, so large jumps indicate mode hopping.
    pub fn continuity_violations(&self) -> Vec<usize> {
        self.records
            .windows(2)
            .enumerate()
            .filter_map(|(j, w)| {
                let d_omega = w[1].omega - w[0].omega;
                let slope = (w[0].point.power - w[0].point.estimation)
                    .abs()
                    .max((w[1].point.power - w[1].point.estimation).abs());
                let jump = (w[1].objective_value - w[0].objective_value).abs();
                (jump > 10.0 * slope * d_omega + 1e-9).then_some(j)
            })
            .collect()
    }

    /// Re-run `extra` additional ω values at the midpoints of the grid intervals
    /// where the frontier bends most (largest second difference of S against P).
    pub fn refine_knee(
        &mut self,
        cfg: &ProblemConfig,
        qc: &QuadratureConfig,
        extra: usize,
        opts: &SweepOptions,
    ) -> Result<()> {
        if self.records.len() < 3 || extra == 0 {
            return Ok(());
        }
        let mut scores: Vec<(f64, usize)> = self
            .records
            .windows(3)
            .enumerate()
            .map(|(j, w)| {
                let (p0, s0) = (w[0].point.power, w[0].point.estimation);
                let (p1, s1) = (w[1].point.power, w[1].point.estimation);
                let (p2, s2) = (w[2].point.power, w[2].point.estimation);
                let left = if (p1 - p0).abs() > 1e-12 { (s1 - s0) / (p1 - p0) } else { 0.0 };
                let right = if (p2 - p1).abs() > 1e-12 { (s2 - s1) / (p2 - p1) } else { 0.0 };
                ((right - left).abs(), j + 1)
            })
            .collect();
        scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut new_omegas: Vec<(f64, usize)> = Vec::new();
        for &(_, centre) in scores.iter() {
            for nb in [centre - 1, centre] {
                if new_omegas.len() >= extra {
                    break;
                }
                let mid = 0.5 * (self.records[nb].omega + self.records[nb + 1].omega);
                if !new_omegas.iter().any(|(o, _)| *o == mid) {
                    new_omegas.push((mid, nb));
                }
            }
            if new_omegas.len() >= extra {
                break;
            }
        }
        for (omega, left) in new_omegas {
            let obj = WeightedObjective::new(omega, self.n, *cfg, *qc)?;
            let o = OptimizeOptions {
                restarts: opts.warm_restarts,
                simplex: opts.first.simplex,
                init: Init::Warm(self.records[left].params.clone()),
            };
            let mut rec = optimize_at(&obj, &o)?;
            // also try the right neighbour and keep whichever is better
            let right = OptimizeOptions {
                restarts: 0,
                init: Init::Warm(self.records[left + 1].params.clone()),
                ..o
            };
            let alt = optimize_at(&obj, &right)?;
            if alt.objective_value < rec.objective_value {
                rec = FrontierRecord {
                    restarts_used: rec.restarts_used + alt.restarts_used,
                    ..alt
                };
            } else {
                rec.restarts_used += alt.restarts_used;
            }
            self.records.push(rec);
        }
        self.records.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        self.mark_dominated();
        Ok(())
    }

    /// Frontier CSV: a `schema,1` line, a header, then one row per record.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "schema,{CSV_SCHEMA_VERSION}")?;
        let mut header = vec![
            "omega".to_string(),
            "k_squared".into(),
            "P".into(),
            "S".into(),
            "objective".into(),
            "converged".into(),
        ];
        header.extend((1..=self.n).map(|i| format!("a_{i}")));
        header.extend((1..=self.n).map(|i| format!("B_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![
                format_real(r.omega),
                format_real(r.k_squared),
                format_real(r.point.power),
                format_real(r.point.estimation),
                format_real(r.objective_value),
                format!("{}", r.converged),
            ];
            row.extend(r.params.amplitudes().iter().map(|v| format_real(*v)));
            row.extend(r.params.breakpoints().iter().map(|v| format_real(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
