//! First-stage controller families and the state density they induce.
//!
//! The source `X0 ~ N(0, Q)` is observed perfectly by the first controller, which
//! applies `U1 = γ1(X0)` and produces the state `X1 = X0 + U1`. The second stage
//! only sees `Y1 = X1 + Z1` with `Z1 ~ N(0, N)`; its optimal response is the
//! conditional mean, implemented in [`crate::costs::conditional_mean`].

use std::fmt;

use crate::error::{Error, Result};
use crate::gaussian::{self, cdf_diff};

/// Source and channel variances of the two-stage problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConfig {
    q: f64,
    n: f64,
}

impl ProblemConfig {
    pub fn new(q: f64, n: f64) -> Result<Self> {
        if !q.is_finite() || !n.is_finite() || q <= 0.0 || n <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "variances must be positive and finite (Q = {q}, N = {n})"
            )));
        }
        Ok(Self { q, n })
    }

    /// Variance of the source `X0`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// Variance of the channel noise `Z1`.
    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn snr(&self) -> f64 {
        self.q / self.n
    }

    /// MMSE of estimating the untouched source from the channel output, `QN/(Q+N)`.
    pub fn zero_power_mmse(&self) -> f64 {
        self.q * self.n / (self.q + self.n)
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { q: 1.0, n: 0.1 }
    }
}

/// Amplitudes and breakpoints of an n-step low-power estimation controller.
///
/// On each half-line the controller pushes the source towards zero by a
/// constant amplitude: `U1 = -a_i` for `X0 ∈ [B_i, B_{i+1})` and `U1 = +a_i`
/// for `X0 ∈ (-B_{i+1}, -B_i]`, with `B_{n+1} = ∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct LopeParams {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LopeParams {
    /// Both vectors must have the same nonzero length, `a` must be nondecreasing
    /// and nonnegative, `b` must start at zero and be nondecreasing.
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidParams(format!(
                "amplitude and breakpoint lists must be nonempty and of equal length ({} vs {})",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("LoPE parameters"));
        }
        if a[0] < 0.0 {
            return Err(Error::InvalidParams(format!(
                "first amplitude must be nonnegative, got {}",
                a[0]
            )));
        }
        if b[0] != 0.0 {
            return Err(Error::InvalidParams(format!(
                "first breakpoint must be 0, got {}",
                b[0]
            )));
        }
        if let Some(w) = a.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidParams(format!(
                "amplitudes must be nondecreasing (a_{} = {} > a_{} = {})",
                w + 1,
                a[w],
                w + 2,
                a[w + 1]
            )));
        }
        if let Some(w) = b.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidParams(format!(
                "breakpoints must be nondecreasing (B_{} = {} > B_{} = {})",
                w + 1,
                b[w],
                w + 2,
                b[w + 1]
            )));
        }
        Ok(Self { a, b })
    }

    /// One-step controller `U1 = -a sign(X0)`.
    pub fn bpsk(a: f64) -> Result<Self> {
        Self::new(vec![a], vec![0.0])
    }

    /// The do-nothing controller written as an n-step one.
    pub fn zero(n: usize) -> Self {
        let n = n.max(1);
        Self {
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> usize {
        self.a.len()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.a
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.b
    }

    /// Upper breakpoint of segment `i` (0-based), `+∞` for the last one.
    pub fn upper_breakpoint(&self, i: usize) -> f64 {
        self.b.get(i + 1).copied().unwrap_or(f64::INFINITY)
    }

    pub fn max_amplitude(&self) -> f64 {
        *self.a.last().expect("nonempty")
    }

    /// Same controller with `m - n` empty segments appended at the outermost
    /// breakpoint; the induced map `X0 -> U1` is unchanged.
    pub fn pad_to(&self, m: usize) -> Self {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        let (a_last, b_last) = (*a.last().unwrap(), *b.last().unwrap());
        while a.len() < m {
            a.push(a_last);
            b.push(b_last);
        }
        Self { a, b }
    }

    /// Index of the segment containing `|x0|`: the largest `i` with `B_i <= |x0|`.
    fn segment_of(&self, magnitude: f64) -> usize {
        self.b.partition_point(|&bi| bi <= magnitude) - 1
    }
}

/// A first-stage controller `x0 -> u1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Zero,
    /// Best linear controller at the given power; the gain follows from the power.
    Linear { power: f64 },
    Bpsk { a: f64 },
    TwoPoint { a: f64 },
    Lope(LopeParams),
}

/// `sign` with `sign(0) = +1`.
#[inline]
fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl Strategy {
    pub fn validate(&self) -> Result<()> {
        let check = |v: f64, what: &str| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "{what} must be nonnegative and finite, got {v}"
                )))
            }
        };
        match self {
            Strategy::Zero | Strategy::Lope(_) => Ok(()),
            Strategy::Linear { power } => check(*power, "linear power target"),
            Strategy::Bpsk { a } => check(*a, "BPSK amplitude"),
            Strategy::TwoPoint { a } => check(*a, "two-point amplitude"),
        }
    }

    /// The controller as LoPE parameters, when it belongs to that family.
    pub fn as_lope(&self) -> Option<LopeParams> {
        match self {
            Strategy::Zero => Some(LopeParams::zero(1)),
            Strategy::Bpsk { a } => LopeParams::bpsk(*a).ok(),
            Strategy::Lope(p) => Some(p.clone()),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Strategy::Zero => "zero",
            Strategy::Linear { .. } => "linear",
            Strategy::Bpsk { .. } => "bpsk",
            Strategy::TwoPoint { .. } => "two-point",
            Strategy::Lope(_) => "lope",
        }
    }

    /// Fast path without argument checks; `x0` must be finite.
    #[inline]
    pub(crate) fn control(&self, x0: f64, cfg: &ProblemConfig) -> f64 {
        match self {
            Strategy::Zero => 0.0,
            Strategy::Linear { power } => {
                if *power <= cfg.q() {
                    -(power / cfg.q()).sqrt() * x0
                } else {
                    -x0 + (power - cfg.q()).sqrt()
                }
            }
            Strategy::Bpsk { a } => -a * sign(x0),
            Strategy::TwoPoint { a } => a * sign(x0) - x0,
            Strategy::Lope(p) => -sign(x0) * p.a[p.segment_of(x0.abs())],
        }
    }
}

/// First-stage action `u1 = γ1(x0)`.
pub fn apply_gamma1(s: &Strategy, x0: f64, cfg: &ProblemConfig) -> Result<f64> {
    if !x0.is_finite() {
        return Err(Error::NonFinite("source sample"));
    }
    Ok(s.control(x0, cfg))
}

/// System state `x1 = x0 + γ1(x0)`.
pub fn system_state(s: &Strategy, x0: f64, cfg: &ProblemConfig) -> Result<f64> {
    Ok(x0 + apply_gamma1(s, x0, cfg)?)
}

/// `p_i = Φ(B_{i+1}/√Q) - Φ(B_i/√Q)`, the mass of each segment on one half-line.
pub fn segment_probabilities(p: &LopeParams, cfg: &ProblemConfig) -> Vec<f64> {
    let sd = cfg.q().sqrt();
    (0..p.steps())
        .map(|i| cdf_diff(p.b[i] / sd, p.upper_breakpoint(i) / sd))
        .collect()
}

/// Density of the state `X1` under a LoPE controller: a sum of shifted,
/// truncated copies of the source density, one per half-segment.
pub fn state_density(p: &LopeParams, cfg: &ProblemConfig, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("density argument"));
    }
    let sd = cfg.q().sqrt();
    let mut total = 0.0;
    for (i, &ai) in p.a.iter().enumerate() {
        let (lo, hi) = (p.b[i], p.upper_breakpoint(i));
        // left half-line: X0 ∈ (-B_{i+1}, -B_i] shifted up by a_i
        // the origin itself belongs to the right half-line
        let left_top = if lo == 0.0 { x < ai } else { x <= -lo + ai };
        if x > -hi + ai && left_top {
            total += gaussian::pdf((x - ai) / sd);
        }
        // right half-line: X0 ∈ [B_i, B_{i+1}) shifted down by a_i
        if x >= lo - ai && x < hi - ai {
            total += gaussian::pdf((x + ai) / sd);
        }
    }
    Ok(total / sd)
}

/// Images of the half-segments under `x0 ↦ x0 + U1`, as `(lower, upper, shift)`
/// with the piece density `φ((x + shift)/√Q)/√Q` on the interval.
fn state_pieces(p: &LopeParams) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    p.a.iter().enumerate().flat_map(move |(i, &ai)| {
        let (lo, hi) = (p.b[i], p.upper_breakpoint(i));
        [(-hi + ai, -lo + ai, -ai), (lo - ai, hi - ai, ai)]
    })
}

/// One-sided limits `(f(x⁻), f(x⁺))` of the state density.
pub fn state_density_limits(p: &LopeParams, cfg: &ProblemConfig, x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::NonFinite("density argument"));
    }
    let sd = cfg.q().sqrt();
    let (mut left, mut right) = (0.0, 0.0);
    for (lo, hi, shift) in state_pieces(p) {
        let v = gaussian::pdf((x + shift) / sd);
        if lo < x && x <= hi {
            left += v;
        }
        if lo <= x && x < hi {
            right += v;
        }
    }
    Ok((left / sd, right / sd))
}

/// Samples the state density on the symmetric grid `x_i = (i - (m-1)/2)·h`,
/// `h = 2L/(m-1)`, so that mirrored rows hold exact negatives.
///
/// Every jump of the density inside `[-L, L]` is emitted as two rows with the
/// same `x`, holding the left and right limits, so that the trapezoid rule over
/// the table is exact at discontinuities.
pub fn density_table(p: &LopeParams, cfg: &ProblemConfig, half_width: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::InvalidParams(format!("grid half-width must be positive, got {half_width}")));
    }
    if points < 3 || points % 2 == 0 {
        return Err(Error::InvalidParams(format!("grid needs an odd number of points >= 3, got {points}")));
    }
    let c = ((points - 1) / 2) as f64;
    let h = half_width / c;
    let mut xs: Vec<f64> = (0..points).map(|i| (i as f64 - c) * h).collect();
    for (lo, hi, _) in state_pieces(p) {
        for e in [lo, hi] {
            if e.is_finite() && e.abs() < half_width {
                xs.push(e);
                xs.push(-e);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut rows = Vec::with_capacity(xs.len());
    for x in xs {
        let (left, right) = state_density_limits(p, cfg, x)?;
        rows.push((x, left));
        if right != left {
            rows.push((x, right));
        }
    }
    Ok(rows)
}

/// Shortest text that parses back to exactly `x`; scientific notation outside
/// `[1e-5, 1e16)` in magnitude.
pub fn format_real(x: f64) -> String {
    let m = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&m) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Strategy {
    /// Key-value text form accepted by [`parse_strategy`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind = {}", self.kind())?;
        match self {
            Strategy::Zero => Ok(()),
            Strategy::Linear { power } => writeln!(f, "power = {}", format_real(*power)),
            Strategy::Bpsk { a } | Strategy::TwoPoint { a } => writeln!(f, "a = {}", format_real(*a)),
            Strategy::Lope(p) => {
                writeln!(f, "n = {}", p.steps())?;
                writeln!(f, "a = {}", join(&p.a))?;
                writeln!(f, "B = {}", join(&p.b))
            }
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses a comma separated list of reals; `column` is the 1-based column of
/// the first character of `text` in its line.
pub(crate) fn parse_list(text: &str, line: usize, column: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for item in text.split(',') {
        let lead = item.len() - item.trim_start().len();
        let trimmed = item.trim();
        let value: f64 = trimmed.parse().map_err(|_| {
            parse_err(
                line,
                column + offset + lead,
                format!("expected a number, found `{trimmed}`"),
            )
        })?;
        out.push(value);
        offset += item.len() + 1;
    }
    Ok(out)
}

/// Parses the key-value strategy format:
///
/// ```text
/// # comments and blank lines are ignored
/// kind = lope          # zero | linear | bpsk | two-point | lope
/// n = 2                # lope only, optional consistency check
/// a = 0.2, 0.5         # lope: list; bpsk / two-point: single value
/// B = 0, 0.8           # lope only
/// power = 0.25         # linear only
/// ```
pub fn parse_strategy(text: &str) -> Result<Strategy> {
    let mut kind: Option<(String, usize)> = None;
    let mut n: Option<(usize, usize)> = None;
    let mut a: Option<(Vec<f64>, usize)> = None;
    let mut b: Option<(Vec<f64>, usize)> = None;
    let mut power: Option<(f64, usize)> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let eq = content
            .find('=')
            .ok_or_else(|| parse_err(line, 1, "expected `key = value`"))?;
        let key = content[..eq].trim();
        let rest = &content[eq + 1..];
        let value_col = eq + 2 + (rest.len() - rest.trim_start().len());
        let value = rest.trim();
        match key {
            "kind" => kind = Some((value.to_ascii_lowercase(), line)),
            "n" => {
                let v = value
                    .parse()
                    .map_err(|_| parse_err(line, value_col, format!("invalid step count `{value}`")))?;
                n = Some((v, line));
            }
            "a" => a = Some((parse_list(value, line, value_col)?, line)),
            "B" | "b" => b = Some((parse_list(value, line, value_col)?, line)),
            "power" | "P" => {
                let v = value
                    .parse()
                    .map_err(|_| parse_err(line, value_col, format!("invalid power `{value}`")))?;
                power = Some((v, line));
            }
            other => {
                let col = raw.find(other).map_or(1, |c| c + 1);
                return Err(parse_err(line, col, format!("unknown key `{other}`")));
            }
        }
    }

    let (kind, kind_line) = kind.ok_or_else(|| parse_err(1, 1, "missing `kind`"))?;
    let single = |field: Option<(Vec<f64>, usize)>, what: &str| -> Result<f64> {
        match field {
            Some((v, _)) if v.len() == 1 => Ok(v[0]),
            Some((_, l)) => Err(parse_err(l, 1, format!("{what} takes a single value"))),
            None => Err(parse_err(kind_line, 1, format!("missing `a` for {what}"))),
        }
    };
    let strategy = match kind.as_str() {
        "zero" => Strategy::Zero,
        "linear" => {
            let (p, _) = power.ok_or_else(|| parse_err(kind_line, 1, "missing `power`"))?;
            Strategy::Linear { power: p }
        }
        "bpsk" => Strategy::Bpsk {
            a: single(a, "bpsk")?,
        },
        "two-point" | "two_point" | "twopoint" => Strategy::TwoPoint {
            a: single(a, "two-point")?,
        },
        "lope" => {
            let (a, a_line) = a.ok_or_else(|| parse_err(kind_line, 1, "missing `a`"))?;
            let (b, _) = b.ok_or_else(|| parse_err(kind_line, 1, "missing `B`"))?;
            if let Some((n, n_line)) = n {
                if n != a.len() || n != b.len() {
                    return Err(parse_err(
                        n_line,
                        1,
                        format!("n = {n} but {} amplitudes and {} breakpoints", a.len(), b.len()),
                    ));
                }
            }
            Strategy::Lope(
                LopeParams::new(a, b).map_err(|e| parse_err(a_line, 1, e.to_string()))?,
            )
        }
        other => {
            return Err(parse_err(kind_line, 1, format!("unknown strategy kind `{other}`")));
        }
    };
    strategy
        .validate()
        .map_err(|e| parse_err(kind_line, 1, e.to_string()))?;
    Ok(strategy)
}
