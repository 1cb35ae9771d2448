#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use witsbench::{LopeParams, ProblemConfig};

/// Adaptive Simpson with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        // stop at the rounding floor of the panel sum
        let floor = 1e-15 * (left.abs() + right.abs());
        if depth == 0 || delta.abs() <= 15.0 * eps.max(floor) {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, eps, 50)
}

/// Simpson over `[a, b]` split into `pieces` equal panels, each refined adaptively.
pub fn simpson_panels<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, pieces: usize, eps: f64) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let lo = a + h * k as f64;
            let hi = if k + 1 == pieces { b } else { lo + h };
            simpson(f, lo, hi, eps / pieces as f64)
        })
        .sum()
}

pub fn npdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn cfg(q: f64, n: f64) -> ProblemConfig {
    ProblemConfig::new(q, n).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid n-step parameters: sorted amplitudes in `[0, a_max]`, sorted
/// breakpoints in `[0, b_max]` with the first at zero.
pub fn random_lope<R: Rng>(r: &mut R, n: usize, a_max: f64, b_max: f64) -> LopeParams {
    let mut a: Vec<f64> = (0..n).map(|_| r.random_range(0.0..a_max)).collect();
    a.sort_by(f64::total_cmp);
    let mut b: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { r.random_range(0.0..b_max) }).collect();
    b.sort_by(f64::total_cmp);
    LopeParams::new(a, b).unwrap()
}
