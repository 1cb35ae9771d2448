//! Closed-form power and estimation costs.
//!
//! For a LoPE controller the joint density of `(X1, Y1)` is a sum of truncated
//! Gaussian pieces, so the observation density `f_Y(y)` and the first moment
//! of the posterior are finite sums of Gaussian integrals:
//!
//! ```text
//! f_Y(y)        = Σ_i (F_{-i}(y) + F_i(y))
//! E[X1 | Y1=y]  = Σ_i (E_{-i}(y) + E_i(y)) / f_Y(y)
//! S             = E[X1²] - ∫ (Σ E)² / (Σ F) dy
//! ```
//!
//! `E[X1²]` is exact; only the last integral is evaluated numerically.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gaussian::{self, cdf_diff};
use crate::quadrature::{self, QuadResult};
pub use crate::quadrature::QuadratureConfig;
use crate::strategies::{segment_probabilities, LopeParams, ProblemConfig, Strategy};

/// Below this observation density the decoder-power integrand is treated as zero.
pub const DENSITY_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMethod {
    ClosedForm,
    MonteCarlo,
}

impl CostMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CostMethod::ClosedForm => "closed_form",
            CostMethod::MonteCarlo => "monte_carlo",
        }
    }
}

/// A point in the power–estimation plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPoint {
    /// `E[U1²]`
    pub power: f64,
    /// `E[(X1 - E[X1|Y1])²]`
    pub estimation: f64,
    pub method: CostMethod,
    pub quad_error_estimate: f64,
}

/// Per-segment terms of the observation density and posterior first moment at one `y`.
///
/// `*_neg[i]` belongs to the left half-line segment `(-B_{i+1}, -B_i]`, `*_pos[i]`
/// to the right one `[B_i, B_{i+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeTerms {
    pub y: f64,
    pub f_neg: Vec<f64>,
    pub f_pos: Vec<f64>,
    pub e_neg: Vec<f64>,
    pub e_pos: Vec<f64>,
}

impl FeTerms {
    pub fn density(&self) -> f64 {
        self.f_neg.iter().chain(&self.f_pos).sum()
    }

    pub fn first_moment(&self) -> f64 {
        self.e_neg.iter().chain(&self.e_pos).sum()
    }
}

/// Constants of the closed-form expressions for one LoPE controller.
#[derive(Debug, Clone)]
pub(crate) struct LopeModel<'a> {
    params: &'a LopeParams,
    cfg: ProblemConfig,
    q: f64,
    n: f64,
    /// `√(Q+N)`
    obs_sd: f64,
    /// `√((Q+N)/(QN))`, inverse posterior standard deviation
    post_prec_sd: f64,
    /// `√(QN) / (2π(Q+N))`
    boundary_coef: f64,
    two_qn: f64,
    q_frac: f64,
    n_frac: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Segment {
    f_neg: f64,
    f_pos: f64,
    e_neg: f64,
    e_pos: f64,
}

impl<'a> LopeModel<'a> {
    pub(crate) fn new(params: &'a LopeParams, cfg: &ProblemConfig) -> Self {
        let (q, n) = (cfg.q(), cfg.n());
        Self {
            params,
            cfg: *cfg,
            q,
            n,
            obs_sd: (q + n).sqrt(),
            post_prec_sd: ((q + n) / (q * n)).sqrt(),
            boundary_coef: (q * n).sqrt() / (2.0 * PI * (q + n)),
            two_qn: 2.0 * q * n,
            q_frac: q / (q + n),
            n_frac: n / (q + n),
        }
    }

    /// `exp(-(Q(x - a - y)² + N x²) / (2QN))`, with 0 at an infinite breakpoint.
    #[inline]
    fn boundary(&self, breakpoint: f64, shifted: f64) -> f64 {
        if breakpoint.is_infinite() {
            return 0.0;
        }
        (-(self.q * shifted * shifted + self.n * breakpoint * breakpoint) / self.two_qn).exp()
    }

    #[inline]
    fn segment(&self, i: usize, y: f64) -> Segment {
        let a = self.params.amplitudes()[i];
        let lo = self.params.breakpoints()[i];
        let hi = self.params.upper_breakpoint(i);
        let r = self.post_prec_sd;

        let w_neg = gaussian::pdf((y - a) / self.obs_sd) / self.obs_sd;
        let w_pos = gaussian::pdf((y + a) / self.obs_sd) / self.obs_sd;

        let c_neg = self.q_frac * (y - a);
        let c_pos = self.q_frac * (y + a);
        let f_neg = w_neg * cdf_diff(r * (lo + c_neg), r * (hi + c_neg));
        let f_pos = w_pos * cdf_diff(r * (lo - c_pos), r * (hi - c_pos));

        let mean_neg = a * self.n_frac + y * self.q_frac;
        let mean_pos = -a * self.n_frac + y * self.q_frac;
        let e_neg = mean_neg * f_neg
            - self.boundary_coef
                * (self.boundary(lo, -lo + a - y) - self.boundary(hi, -hi + a - y));
        let e_pos = mean_pos * f_pos
            - self.boundary_coef * (self.boundary(hi, hi - a - y) - self.boundary(lo, lo - a - y));
        Segment {
            f_neg,
            f_pos,
            e_neg,
            e_pos,
        }
    }

    /// `(Σ F, Σ E)` at `y`.
    #[inline]
    pub(crate) fn sums(&self, y: f64) -> (f64, f64) {
        let mut f = 0.0;
        let mut e = 0.0;
        for i in 0..self.params.steps() {
            let s = self.segment(i, y);
            f += s.f_neg + s.f_pos;
            e += s.e_neg + s.e_pos;
        }
        (f, e)
    }

    pub(crate) fn terms(&self, y: f64) -> FeTerms {
        let n = self.params.steps();
        let mut t = FeTerms {
            y,
            f_neg: Vec::with_capacity(n),
            f_pos: Vec::with_capacity(n),
            e_neg: Vec::with_capacity(n),
            e_pos: Vec::with_capacity(n),
        };
        for i in 0..n {
            let s = self.segment(i, y);
            t.f_neg.push(s.f_neg);
            t.f_pos.push(s.f_pos);
            t.e_neg.push(s.e_neg);
            t.e_pos.push(s.e_pos);
        }
        t
    }

    /// Posterior mean for observations so far out that the density underflows:
    /// the outermost segment dominates and its posterior mean is linear in `y`.
    fn asymptotic_mean(&self, y: f64) -> f64 {
        let a = self.params.max_amplitude();
        y.signum() * (y.abs() * self.q_frac - a * self.n_frac)
    }

    #[inline]
    pub(crate) fn conditional_mean(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let (f, e) = self.sums(y);
        if f < DENSITY_FLOOR {
            return self.asymptotic_mean(y);
        }
        e / f
    }

    /// `(Σ E)² / (Σ F)`
    #[inline]
    fn decoder_power_density(&self, y: f64) -> f64 {
        let (f, e) = self.sums(y);
        if f < DENSITY_FLOOR {
            0.0
        } else {
            e * e / f
        }
    }

    /// `E[X1²]`, exact.
    pub(crate) fn state_second_moment(&self) -> f64 {
        let sd = self.q.sqrt();
        let p = segment_probabilities(self.params, &self.cfg);
        let mut shift = 0.0;
        let mut power = 0.0;
        for (i, (&a, &pi)) in self.params.amplitudes().iter().zip(&p).enumerate() {
            let lo = self.params.breakpoints()[i] / sd;
            let hi = self.params.upper_breakpoint(i) / sd;
            let pdf_hi = if hi.is_infinite() { 0.0 } else { gaussian::pdf(hi) };
            shift += a * (gaussian::pdf(lo) - pdf_hi);
            power += a * a * pi;
        }
        self.q - 4.0 * sd * shift + 2.0 * power
    }

    /// Half-width of the truncated observation domain.
    pub(crate) fn observation_half_width(&self, qc: &QuadratureConfig) -> f64 {
        self.params.max_amplitude() + qc.tail_sigmas * self.obs_sd
    }

    fn initial_panels(&self, half_width: f64) -> usize {
        ((half_width / self.obs_sd).ceil() as usize).clamp(4, 64)
    }

    /// `E[(E[X1|Y1])²]`, integrating the even integrand over `[0, L]` and doubling.
    pub(crate) fn decoder_power(&self, qc: &QuadratureConfig) -> Result<QuadResult> {
        let half_width = self.observation_half_width(qc);
        let r = quadrature::integrate(
            |y| self.decoder_power_density(y),
            0.0,
            half_width,
            self.initial_panels(half_width),
            0.5 * qc.abs_tol,
            qc.rel_tol,
            qc.max_subdivisions,
        )
        .map_err(|e| match e {
            Error::QuadratureNonConvergence {
                estimate,
                error_estimate,
                subdivisions,
            } => Error::QuadratureNonConvergence {
                estimate: 2.0 * estimate,
                error_estimate: 2.0 * error_estimate,
                subdivisions,
            },
            other => other,
        })?;
        Ok(QuadResult {
            value: 2.0 * r.value,
            error_estimate: 2.0 * r.error_estimate,
            subdivisions: r.subdivisions,
        })
    }
}

/// `P = 2 Σ a_i² p_i`
pub fn power_cost(p: &LopeParams, cfg: &ProblemConfig) -> f64 {
    segment_probabilities(p, cfg)
        .iter()
        .zip(p.amplitudes())
        .map(|(pi, a)| 2.0 * a * a * pi)
        .sum()
}

/// All per-segment `F` and `E` terms at observation `y`.
pub fn fe_terms(p: &LopeParams, cfg: &ProblemConfig, y: f64) -> Result<FeTerms> {
    if !y.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    Ok(LopeModel::new(p, cfg).terms(y))
}

/// Density of the channel output `Y1 = X1 + Z1`.
pub fn observation_density(p: &LopeParams, cfg: &ProblemConfig, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    Ok(LopeModel::new(p, cfg).sums(y).0)
}

/// The MMSE decoder `E[X1 | Y1 = y]`.
pub fn conditional_mean(p: &LopeParams, cfg: &ProblemConfig, y: f64) -> Result<f64> {
    if !y.is_finite() {
        return Err(Error::NonFinite("observation"));
    }
    Ok(LopeModel::new(p, cfg).conditional_mean(y))
}

/// The two pieces of the estimation cost, `S = second_moment - decoder_power`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationBreakdown {
    /// `E[X1²]`
    pub second_moment: f64,
    /// `E[(E[X1|Y1])²]`
    pub decoder_power: f64,
    pub quad_error_estimate: f64,
}

impl EstimationBreakdown {
    pub fn estimation(&self) -> f64 {
        self.second_moment - self.decoder_power
    }
}

pub fn estimation_breakdown(
    p: &LopeParams,
    cfg: &ProblemConfig,
    qc: &QuadratureConfig,
) -> Result<EstimationBreakdown> {
    qc.validate()?;
    let model = LopeModel::new(p, cfg);
    let second_moment = model.state_second_moment();
    let decoder = model.decoder_power(qc).map_err(|e| match e {
        Error::QuadratureNonConvergence {
            estimate,
            error_estimate,
            subdivisions,
        } => Error::QuadratureNonConvergence {
            // report the partial estimate of S itself
            estimate: second_moment - estimate,
            error_estimate,
            subdivisions,
        },
        other => other,
    })?;
    Ok(EstimationBreakdown {
        second_moment,
        decoder_power: decoder.value,
        quad_error_estimate: decoder.error_estimate,
    })
}

/// Power and MMSE of a LoPE controller, with the quadrature error of the
/// decoder-power integral attached.
pub fn estimation_cost(
    p: &LopeParams,
    cfg: &ProblemConfig,
    qc: &QuadratureConfig,
) -> Result<CostPoint> {
    let b = estimation_breakdown(p, cfg, qc)?;
    Ok(CostPoint {
        power: power_cost(p, cfg),
        estimation: b.estimation(),
        method: CostMethod::ClosedForm,
        quad_error_estimate: b.quad_error_estimate,
    })
}

/// Estimation cost of the best linear controller at power `P`.
pub fn linear_cost(power: f64, cfg: &ProblemConfig) -> Result<f64> {
    if !(power >= 0.0) {
        return Err(Error::InvalidParams(format!("power must be nonnegative, got {power}")));
    }
    if power >= cfg.q() {
        return Ok(0.0);
    }
    let gap = (cfg.q().sqrt() - power.sqrt()).powi(2);
    Ok(gap * cfg.n() / (gap + cfg.n()))
}

/// `dS_ℓ/dP = -N²(√Q-√P) / (√P [(√Q-√P)² + N]²)` on `(0, Q]`.
pub fn linear_cost_slope(power: f64, cfg: &ProblemConfig) -> Result<f64> {
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidParams(format!("slope needs positive power, got {power}")));
    }
    if power >= cfg.q() {
        return Ok(0.0);
    }
    let d = cfg.q().sqrt() - power.sqrt();
    let denom = d * d + cfg.n();
    Ok(-cfg.n() * cfg.n() * d / (power.sqrt() * denom * denom))
}

/// Lower convex envelope of the linear cost curve on `[0, Q]`.
#[derive(Debug, Clone)]
pub struct GaussianEnvelope {
    cfg: ProblemConfig,
    /// Hull vertices, increasing in power.
    hull: Vec<(f64, f64)>,
}

pub const DEFAULT_ENVELOPE_GRID: usize = 10_000;

impl GaussianEnvelope {
    pub fn new(cfg: &ProblemConfig, grid_size: usize) -> Result<Self> {
        if grid_size < 2 {
            return Err(Error::InvalidParams("envelope grid needs at least 2 points".into()));
        }
        let q = cfg.q();
        let mut hull: Vec<(f64, f64)> = Vec::new();
        for j in 0..grid_size {
            let p = if j + 1 == grid_size {
                q
            } else {
                q * j as f64 / (grid_size - 1) as f64
            };
            let pt = (p, linear_cost(p, cfg)?);
            // monotone chain, keeping only counter-clockwise turns
            while hull.len() >= 2 {
                let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
                let cross = (a.0 - o.0) * (pt.1 - o.1) - (a.1 - o.1) * (pt.0 - o.0);
                if cross <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(pt);
        }
        Ok(Self { cfg: *cfg, hull })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.hull
    }

    pub fn eval(&self, power: f64) -> Result<f64> {
        let curve = linear_cost(power, &self.cfg)?;
        if power >= self.cfg.q() {
            return Ok(0.0);
        }
        let k = self.hull.partition_point(|v| v.0 <= power);
        let (p0, s0) = self.hull[k - 1];
        let (p1, s1) = self.hull[k.min(self.hull.len() - 1)];
        let chord = if p1 > p0 {
            s0 + (s1 - s0) * (power - p0) / (p1 - p0)
        } else {
            s0
        };
        Ok(chord.min(curve))
    }
}

/// Estimation cost of the best Gaussian (randomized linear) scheme, taken as the
/// lower convex envelope of [`linear_cost`] sampled on `grid_size` points.
pub fn gaussian_envelope(power: f64, cfg: &ProblemConfig, grid_size: usize) -> Result<f64> {
    GaussianEnvelope::new(cfg, grid_size)?.eval(power)
}

/// Posterior mean of `X1 = ±a` (equiprobable) observed through Gaussian noise of variance `N`.
#[inline]
pub fn two_point_posterior_mean(a: f64, y: f64, cfg: &ProblemConfig) -> f64 {
    a * (a * y / cfg.n()).tanh()
}

/// Costs of the two-point controller `U1 = a sign(X0) - X0`. The decoder power
/// `E[(a tanh(aY/N))²]` is integrated numerically.
pub fn two_point_cost(a: f64, cfg: &ProblemConfig, qc: &QuadratureConfig) -> Result<CostPoint> {
    qc.validate()?;
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::InvalidParams(format!("two-point amplitude must be nonnegative, got {a}")));
    }
    let q = cfg.q();
    let power = q - 2.0 * a * (2.0 * q / PI).sqrt() + a * a;
    if a == 0.0 {
        return Ok(CostPoint {
            power,
            estimation: 0.0,
            method: CostMethod::ClosedForm,
            quad_error_estimate: 0.0,
        });
    }
    let sd = cfg.n().sqrt();
    let density = |y: f64| {
        0.5 * (gaussian::pdf((y - a) / sd) + gaussian::pdf((y + a) / sd)) / sd
    };
    let half_width = a + qc.tail_sigmas * sd;
    let r = quadrature::integrate(
        // E[X1²|y] - m(y)² = a² sech²(a y / N), integrated without cancellation
        |y| {
            let c = (a * y / cfg.n()).cosh();
            density(y) * a * a / (c * c)
        },
        0.0,
        half_width,
        ((half_width / sd).ceil() as usize).clamp(4, 64),
        0.5 * qc.abs_tol,
        qc.rel_tol,
        qc.max_subdivisions,
    )?;
    Ok(CostPoint {
        power,
        estimation: 2.0 * r.value,
        method: CostMethod::ClosedForm,
        quad_error_estimate: 2.0 * r.error_estimate,
    })
}

/// Closed-form `(P, S)` for any supported controller.
pub fn strategy_cost(s: &Strategy, cfg: &ProblemConfig, qc: &QuadratureConfig) -> Result<CostPoint> {
    s.validate()?;
    match s {
        Strategy::Linear { power } => Ok(CostPoint {
            power: *power,
            estimation: linear_cost(*power, cfg)?,
            method: CostMethod::ClosedForm,
            quad_error_estimate: 0.0,
        }),
        Strategy::TwoPoint { a } => two_point_cost(*a, cfg, qc),
        other => {
            let p = other.as_lope().expect("LoPE family");
            estimation_cost(&p, cfg, qc)
        }
    }
}
