//! Slope diagnostics of the estimation cost near zero power.
//!
//! Both the best linear controller and BPSK have `dS/dP → -∞` as `P → 0⁺`.
//! The linear slope is analytic; the BPSK slope is a central difference in the
//! amplitude `a = √P` mapped through `dS/dP = (dS/da) / (2a)`.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::costs::{estimation_breakdown, estimation_cost, linear_cost_slope, QuadratureConfig};
use crate::error::{Error, Result};
use crate::strategies::{format_real, LopeParams, ProblemConfig};

/// `E[X1²]` under BPSK with amplitude `a`: `Q - 2a√(2Q/π) + a²`.
pub fn t1(a: f64, cfg: &ProblemConfig) -> f64 {
    cfg.q() - 2.0 * a * (2.0 * cfg.q() / PI).sqrt() + a * a
}

/// `S_BPSK(a) = T1(a) - T2(a)` with `T2 = E[(E[X1|Y1])²]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpskDecomposition {
    pub a: f64,
    pub t1: f64,
    pub t2: f64,
    /// MMSE from the general LoPE evaluator.
    pub s: f64,
    pub quad_error_estimate: f64,
}

impl BpskDecomposition {
    /// `|S - (T1 - T2)|`
    pub fn residual(&self) -> f64 {
        (self.s - (self.t1 - self.t2)).abs()
    }
}

pub fn bpsk_decomposition(a: f64, cfg: &ProblemConfig, qc: &QuadratureConfig) -> Result<BpskDecomposition> {
    let p = LopeParams::bpsk(a)?;
    let parts = estimation_breakdown(&p, cfg, qc)?;
    let s = estimation_cost(&p, cfg, qc)?.estimation;
    Ok(BpskDecomposition {
        a,
        t1: t1(a, cfg),
        t2: parts.decoder_power,
        s,
        quad_error_estimate: parts.quad_error_estimate,
    })
}

/// Which cost curve a [`SlopeDiagnostic`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeTag {
    Linear,
    Bpsk,
}

impl SlopeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SlopeTag::Linear => "linear",
            SlopeTag::Bpsk => "bpsk",
        }
    }
}

impl std::str::FromStr for SlopeTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SlopeTag::Linear),
            "bpsk" => Ok(SlopeTag::Bpsk),
            other => Err(Error::Unsupported(format!("unknown slope tag `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeDiagnostic {
    pub tag: SlopeTag,
    /// Strictly decreasing powers.
    pub p_grid: Vec<f64>,
    pub slopes: Vec<f64>,
    /// `|slope[i+1]| / |slope[i]|`
    pub divergence_ratio: Vec<f64>,
}

/// Finite-difference step in `a`.
pub fn bpsk_step(a: f64) -> f64 {
    (1e-4 * a).max(1e-6)
}

/// `dS_BPSK/dP` at `P = a²`.
pub fn bpsk_slope(power: f64, cfg: &ProblemConfig, qc: &QuadratureConfig) -> Result<f64> {
    let a = power.sqrt();
    let h = bpsk_step(a);
    let s = |x: f64| -> Result<f64> { Ok(estimation_cost(&LopeParams::bpsk(x)?, cfg, qc)?.estimation) };
    let ds_da = (s(a + h)? - s(a - h)?) / (2.0 * h);
    Ok(ds_da / (2.0 * a))
}

pub fn slope_diagnostic(
    tag: SlopeTag,
    cfg: &ProblemConfig,
    p_grid: &[f64],
    qc: &QuadratureConfig,
) -> Result<SlopeDiagnostic> {
    if p_grid.is_empty() {
        return Err(Error::InvalidParams("empty power grid".into()));
    }
    if p_grid.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParams("power grid must be strictly decreasing".into()));
    }
    let min = p_grid[p_grid.len() - 1];
    if !(min >= 1e-10) || !p_grid[0].is_finite() {
        return Err(Error::InvalidParams(format!("power grid entries must lie in [1e-10, ∞), got {min}")));
    }
    let slopes = p_grid
        .iter()
        .map(|&p| match tag {
            SlopeTag::Linear => linear_cost_slope(p, cfg),
            SlopeTag::Bpsk => bpsk_slope(p, cfg, qc),
        })
        .collect::<Result<Vec<f64>>>()?;
    let divergence_ratio = slopes.windows(2).map(|w| w[1].abs() / w[0].abs()).collect();
    Ok(SlopeDiagnostic {
        tag,
        p_grid: p_grid.to_vec(),
        slopes,
        divergence_ratio,
    })
}

impl SlopeDiagnostic {
    /// Slopes are negative and grow in magnitude along the grid, and the grid
    /// spans at least three decades.
    pub fn divergence_certified(&self) -> bool {
        let span = self.p_grid[0] / self.p_grid[self.p_grid.len() - 1];
        span >= 1e3 - 1e-9
            && self.slopes.iter().all(|s| *s < 0.0)
            && self.divergence_ratio.iter().all(|r| *r > 1.0)
    }

    /// CSV with a schema line and `P,slope,ratio` rows; the first ratio is empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "schema,1")?;
        writeln!(w, "P,slope,ratio")?;
        for (i, (p, s)) in self.p_grid.iter().zip(&self.slopes).enumerate() {
            let ratio = i
                .checked_sub(1)
                .map(|j| format_real(self.divergence_ratio[j]))
                .unwrap_or_default();
            writeln!(w, "{},{},{ratio}", format_real(*p), format_real(*s))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ProblemConfig {
        ProblemConfig::new(1.0, 0.1).unwrap()
    }

    #[test]
    fn t1_examples() {
        assert_eq!(t1(0.0, &cfg()), 1.0);
        let expected = 1.0 - 0.8 * (2.0 / PI).sqrt() + 0.16;
        assert!((t1(0.4, &cfg()) - expected).abs() < 1e-15);
        let h = 1e-6;
        let d = (t1(h, &cfg()) - t1(-h, &cfg())) / (2.0 * h);
        assert!((d + 2.0 * (2.0 / PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn gaussian_case() {
        let d = bpsk_decomposition(0.0, &cfg(), &QuadratureConfig::default()).unwrap();
        assert!((d.t2 - 1.0 / 1.1).abs() < 1e-9);
        assert!((d.s - 0.1 / 1.1).abs() < 1e-9);
        assert!(d.residual() < 1e-8);
    }

    #[test]
    fn linear_scaling() {
        let d = slope_diagnostic(SlopeTag::Linear, &cfg(), &[1e-2, 1e-4, 1e-6], &QuadratureConfig::default())
            .unwrap();
        assert!(d.slopes.iter().all(|s| *s < 0.0));
        // analytic: 0.84863... / 0.10868... at P = 1e-4 and 1e-2
        assert!((d.divergence_ratio[0] - 7.808).abs() < 1e-3, "{:?}", d.divergence_ratio);
        assert!((d.divergence_ratio[1] - 9.76).abs() < 1e-2, "{:?}", d.divergence_ratio);
        assert_eq!(linear_cost_slope(1.0, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn grid_validation() {
        let qc = QuadratureConfig::default();
        assert!(slope_diagnostic(SlopeTag::Linear, &cfg(), &[1e-4, 1e-2], &qc).is_err());
        assert!(slope_diagnostic(SlopeTag::Linear, &cfg(), &[1e-2, 1e-12], &qc).is_err());
        assert!(slope_diagnostic(SlopeTag::Linear, &cfg(), &[], &qc).is_err());
        assert!("bpsk".parse::<SlopeTag>().is_ok());
        assert!("quadratic".parse::<SlopeTag>().is_err());
    }

    #[test]
    fn csv_layout() {
        let d = slope_diagnostic(SlopeTag::Linear, &cfg(), &[1e-2, 1e-4], &QuadratureConfig::default()).unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "schema,1");
        assert_eq!(lines[1], "P,slope,ratio");
        assert!(lines[2].ends_with(','));
        assert_eq!(lines.len(), 4);
    }
}
