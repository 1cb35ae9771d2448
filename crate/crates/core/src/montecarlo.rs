//! Simulation of the full two-stage system.
//!
//! Samples are split into fixed-size batches; batch `k` draws from a ChaCha
//! stream keyed by `(seed, k)`, so the sample at a given index does not depend
//! on how batches are scheduled across threads. Batch accumulators are merged
//! in batch order, which keeps results bit-identical between serial and
//! parallel runs.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::costs::{two_point_posterior_mean, LopeModel};
use crate::error::{Error, Result};
use crate::strategies::{LopeParams, ProblemConfig, Strategy};

pub const MIN_SAMPLES: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub samples: u64,
    pub seed: u64,
    pub batch: u64,
    /// Pair every draw `(x0, z1)` with `(-x0, -z1)`; standard errors are then
    /// computed over pair averages.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            seed,
            batch: 65_536,
            antithetic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < MIN_SAMPLES {
            return Err(Error::InvalidParams(format!(
                "at least {MIN_SAMPLES} samples required, got {}",
                self.samples
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParams("batch size must be positive".into()));
        }
        if self.antithetic && self.batch % 2 == 1 {
            return Err(Error::InvalidParams(
                "antithetic sampling needs an even batch size".into(),
            ));
        }
        Ok(())
    }

    fn batches(&self) -> u64 {
        self.samples.div_ceil(self.batch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub p_hat: f64,
    pub p_stderr: f64,
    pub s_hat: f64,
    pub s_stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

/// How the second stage turns `y1` into its estimate of `x1`.
#[derive(Clone)]
pub enum Decoder {
    /// The conditional mean `E[X1 | Y1]` for the simulated strategy.
    ExactMmse,
    /// `û = y1`
    Identity,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decoder::ExactMmse => f.write_str("ExactMmse"),
            Decoder::Identity => f.write_str("Identity"),
            Decoder::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.count as f64 * other.count as f64) / count as f64;
        Moments { count, mean, m2 }
    }

    fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }
}

enum ResolvedDecoder<'a> {
    Lope(LopeModel<'a>),
    Linear(f64),
    Constant(f64),
    TwoPoint(f64),
    Identity,
    Custom(&'a (dyn Fn(f64) -> f64 + Send + Sync)),
}

impl ResolvedDecoder<'_> {
    #[inline]
    fn decode(&self, y: f64, cfg: &ProblemConfig) -> f64 {
        match self {
            ResolvedDecoder::Lope(m) => m.conditional_mean(y),
            ResolvedDecoder::Linear(gain) => gain * y,
            ResolvedDecoder::Constant(c) => *c,
            ResolvedDecoder::TwoPoint(a) => two_point_posterior_mean(*a, y, cfg),
            ResolvedDecoder::Identity => y,
            ResolvedDecoder::Custom(f) => f(y),
        }
    }
}

fn resolve<'a>(
    s: &Strategy,
    lope: Option<&'a LopeParams>,
    cfg: &ProblemConfig,
    decoder: &'a Decoder,
) -> Result<ResolvedDecoder<'a>> {
    Ok(match decoder {
        Decoder::Identity => ResolvedDecoder::Identity,
        Decoder::Custom(f) => ResolvedDecoder::Custom(f.as_ref()),
        Decoder::ExactMmse => match s {
            Strategy::Linear { power } if *power > cfg.q() => {
                ResolvedDecoder::Constant((power - cfg.q()).sqrt())
            }
            Strategy::Linear { power } => {
                let var = (cfg.q().sqrt() - power.sqrt()).powi(2);
                ResolvedDecoder::Linear(var / (var + cfg.n()))
            }
            Strategy::TwoPoint { a } => ResolvedDecoder::TwoPoint(*a),
            _ => match lope {
                Some(p) => ResolvedDecoder::Lope(LopeModel::new(p, cfg)),
                None => {
                    return Err(Error::Unsupported(format!(
                        "no exact MMSE decoder for strategy `{}`",
                        s.kind()
                    )))
                }
            },
        },
    })
}

#[inline]
fn draw(rng: &mut ChaCha8Rng, sd_x: f64, sd_z: f64) -> (f64, f64) {
    let x: f64 = rng.sample(StandardNormal);
    let z: f64 = rng.sample(StandardNormal);
    (sd_x * x, sd_z * z)
}

fn batch_rng(seed: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    rng
}

/// Empirical `(P, S)` with standard errors for any strategy/decoder pair.
pub fn simulate(
    s: &Strategy,
    cfg: &ProblemConfig,
    sim: &SimConfig,
    decoder: &Decoder,
) -> Result<SimResult> {
    sim.validate()?;
    s.validate()?;
    let lope = s.as_lope();
    let dec = resolve(s, lope.as_ref(), cfg, decoder)?;
    let (sd_x, sd_z) = (cfg.q().sqrt(), cfg.n().sqrt());

    let one = |x0: f64, z: f64| {
        let u = s.control(x0, cfg);
        let x1 = x0 + u;
        let err = x1 - dec.decode(x1 + z, cfg);
        (u * u, err * err)
    };

    let run_batch = |k: u64| -> (Moments, Moments) {
        let start = k * sim.batch;
        let len = sim.batch.min(sim.samples - start);
        let mut rng = batch_rng(sim.seed, k);
        let (mut pm, mut sm) = (Moments::default(), Moments::default());
        if sim.antithetic {
            for _ in 0..len.div_ceil(2) {
                let (x0, z) = draw(&mut rng, sd_x, sd_z);
                let (p1, s1) = one(x0, z);
                let (p2, s2) = one(-x0, -z);
                pm.push(0.5 * (p1 + p2));
                sm.push(0.5 * (s1 + s2));
            }
        } else {
            for _ in 0..len {
                let (x0, z) = draw(&mut rng, sd_x, sd_z);
                let (p, e) = one(x0, z);
                pm.push(p);
                sm.push(e);
            }
        }
        (pm, sm)
    };

    let parts: Vec<(Moments, Moments)> = (0..sim.batches()).into_par_iter().map(run_batch).collect();
    let (pm, sm) = parts
        .into_iter()
        .fold((Moments::default(), Moments::default()), |(a, b), (c, d)| {
            (a.merge(c), b.merge(d))
        });
    Ok(SimResult {
        p_hat: pm.mean,
        p_stderr: pm.stderr(),
        s_hat: sm.mean,
        s_stderr: sm.stderr(),
        samples: sim.samples,
        seed: sim.seed,
    })
}

/// Binned empirical density of `X1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn centre(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }

    /// Density estimate per bin, normalized by the total number of draws so that
    /// it integrates to the fraction of samples inside the range.
    pub fn density(&self) -> Vec<f64> {
        let scale = 1.0 / (self.total as f64 * self.width());
        self.counts.iter().map(|&c| c as f64 * scale).collect()
    }

    /// Standard error of each density value (binomial bin counts).
    pub fn density_stderr(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts
            .iter()
            .map(|&c| {
                let p = c as f64 / n;
                (p * (1.0 - p) / n).sqrt() / self.width()
            })
            .collect()
    }

    pub fn mass_in_range(&self) -> f64 {
        self.counts.iter().sum::<u64>() as f64 / self.total as f64
    }
}

pub fn empirical_state_histogram(
    s: &Strategy,
    cfg: &ProblemConfig,
    sim: &SimConfig,
    bins: usize,
    range: (f64, f64),
) -> Result<Histogram> {
    sim.validate()?;
    s.validate()?;
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
        return Err(Error::InvalidParams(format!("empty histogram range [{lo}, {hi}]")));
    }
    if bins == 0 {
        return Err(Error::InvalidParams("histogram needs at least one bin".into()));
    }
    let (sd_x, sd_z) = (cfg.q().sqrt(), cfg.n().sqrt());
    let width = (hi - lo) / bins as f64;
    let run_batch = |k: u64| -> Vec<u64> {
        let start = k * sim.batch;
        let len = sim.batch.min(sim.samples - start);
        let mut rng = batch_rng(sim.seed, k);
        let mut counts = vec![0u64; bins];
        let mut record = |x1: f64| {
            if x1 >= lo && x1 < hi {
                let idx = (((x1 - lo) / width) as usize).min(bins - 1);
                counts[idx] += 1;
            }
        };
        if sim.antithetic {
            for j in 0..len.div_ceil(2) {
                let (x0, _) = draw(&mut rng, sd_x, sd_z);
                record(x0 + s.control(x0, cfg));
                if 2 * j + 1 < len {
                    record(-x0 + s.control(-x0, cfg));
                }
            }
        } else {
            for _ in 0..len {
                let (x0, _) = draw(&mut rng, sd_x, sd_z);
                record(x0 + s.control(x0, cfg));
            }
        }
        counts
    };
    let parts: Vec<Vec<u64>> = (0..sim.batches()).into_par_iter().map(run_batch).collect();
    let mut counts = vec![0u64; bins];
    for part in parts {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    Ok(Histogram {
        lo,
        hi,
        counts,
        total: sim.samples,
    })
}
