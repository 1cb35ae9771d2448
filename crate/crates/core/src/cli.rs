//! The `witsbench` command-line tool.
//!
//! Every command accepts `--config FILE` with `key = value` lines named after the
//! long flags (`Q = 1`, `lope = a=0.2,0.5 B=0,0.8`, `zero = true`); flags given on
//! the command line take precedence. With `--out DIR` the command writes its data
//! files plus a `manifest.txt` that can be passed back through `--config` to
//! reproduce them.
//!
//! Exit codes: 0 success, 1 validation or I/O failure, 2 usage or parse error,
//! 3 numerical non-convergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::costs::{linear_cost, strategy_cost, GaussianEnvelope, QuadratureConfig};
use crate::error::{Error, Result};
use crate::firstorder::{slope_diagnostic, SlopeTag};
use crate::montecarlo::{simulate, Decoder, SimConfig};
use crate::optimizer::{
    optimize_at, optimize_at_power, parse_omega_grid, sweep, FrontierSweep, Init, OptimizeOptions,
    SimplexOptions, SweepOptions, WeightedObjective,
};
use crate::strategies::{
    density_table, format_real, parse_list, parse_strategy, LopeParams, ProblemConfig, Strategy,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const THREADS_ENV: &str = "WITSBENCH_THREADS";

/// Keys written to manifests that are not flags; ignored when a manifest is
/// read back as a config file.
const MANIFEST_ONLY_KEYS: [&str; 5] = ["command", "version", "output_dir", "outputs", "duration_ms"];

#[derive(Debug, Parser)]
#[command(
    name = "witsbench",
    version,
    about = "Power and estimation costs of LoPE controllers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form power and MMSE of a strategy
    Eval(EvalArgs),
    /// Monte Carlo estimate of power and MMSE
    Simulate(SimulateArgs),
    /// Compare closed form against simulation; fails when any |z| > 4
    Validate(ValidateArgs),
    /// Optimize one n-step controller at a weight or a power level
    Optimize(OptimizeArgs),
    /// Optimize along an ω grid and write the frontier
    Sweep(SweepArgs),
    /// Linear and Gaussian-envelope baseline curves
    Baselines(BaselinesArgs),
    /// Slope diagnostics of S(P) near zero power
    Foc(FocArgs),
    /// Density of the state X1 on a symmetric grid
    Density(DensityArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Source variance
    #[arg(long = "Q", default_value_t = 1.0)]
    q: f64,
    /// Channel noise variance
    #[arg(long = "N", default_value_t = 0.1)]
    n: f64,
    /// key = value file with flag defaults
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (falls back to WITSBENCH_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl Common {
    fn problem(&self) -> Result<ProblemConfig> {
        ProblemConfig::new(self.q, self.n)
    }
}

#[derive(Debug, Args)]
struct QuadArgs {
    #[arg(long, default_value = "1e-10")]
    abs_tol: f64,
    #[arg(long, default_value = "1e-8")]
    rel_tol: f64,
    /// Observation half-width in units of √(Q+N) beyond the largest amplitude
    #[arg(long, default_value_t = 10.0)]
    tail_sigmas: f64,
    #[arg(long, default_value_t = 500)]
    max_subdivisions: usize,
}

impl QuadArgs {
    fn config(&self) -> Result<QuadratureConfig> {
        let qc = QuadratureConfig {
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            tail_sigmas: self.tail_sigmas,
            max_subdivisions: self.max_subdivisions,
        };
        qc.validate()?;
        Ok(qc)
    }
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct StrategyArgs {
    /// U1 = 0
    #[arg(long)]
    zero: bool,
    /// U1 = -a·sign(x0)
    #[arg(long, value_name = "A")]
    bpsk: Option<f64>,
    /// U1 = a·sign(x0) - x0
    #[arg(long = "two-point", value_name = "A")]
    two_point: Option<f64>,
    /// Best linear controller at power P
    #[arg(long, value_name = "P")]
    linear: Option<f64>,
    /// n-step LoPE controller, e.g. `--lope a=0.2,0.5 B=0,0.8`
    #[arg(long, num_args = 2, value_names = ["a=LIST", "B=LIST"], allow_hyphen_values = true)]
    lope: Option<Vec<String>>,
    /// Strategy in key = value form
    #[arg(long = "strategy-file", value_name = "FILE")]
    strategy_file: Option<PathBuf>,
}

impl StrategyArgs {
    fn resolve(&self) -> Result<Strategy> {
        let s = if self.zero {
            Strategy::Zero
        } else if let Some(a) = self.bpsk {
            Strategy::Bpsk { a }
        } else if let Some(a) = self.two_point {
            Strategy::TwoPoint { a }
        } else if let Some(power) = self.linear {
            Strategy::Linear { power }
        } else if let Some(tokens) = &self.lope {
            Strategy::Lope(parse_inline_lope(tokens)?)
        } else if let Some(path) = &self.strategy_file {
            parse_strategy(&fs::read_to_string(path)?)?
        } else {
            return Err(Error::InvalidParams("no strategy given".into()));
        };
        s.validate()?;
        Ok(s)
    }
}

/// Parses `a=LIST B=LIST` (either order); columns count from the start of
/// the two tokens joined by one space.
fn parse_inline_lope(tokens: &[String]) -> Result<LopeParams> {
    let (mut a, mut b) = (None, None);
    let mut column = 1;
    for t in tokens {
        let (key, value) = t.split_once('=').ok_or_else(|| Error::Parse {
            line: 1,
            column,
            message: format!("expected `a=LIST` or `B=LIST`, found `{t}`"),
        })?;
        let list = parse_list(value, 1, column + key.len() + 1)?;
        match key.trim() {
            "a" => a = Some(list),
            "B" | "b" => b = Some(list),
            other => {
                return Err(Error::Parse {
                    line: 1,
                    column,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
        column += t.len() + 1;
    }
    match (a, b) {
        (Some(a), Some(b)) => LopeParams::new(a, b),
        _ => Err(Error::Parse {
            line: 1,
            column: 1,
            message: "both a=LIST and B=LIST are required".into(),
        }),
    }
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if !(v >= 0.0) || v.fract() != 0.0 || v > u64::MAX as f64 {
        return Err(format!("`{s}` is not a nonnegative integer"));
    }
    Ok(v as u64)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DecoderKind {
    Mmse,
    Identity,
}

#[derive(Debug, Args)]
struct SimArgs {
    /// Sample count; scientific notation such as 1e6 is accepted
    #[arg(long, default_value = "1000000", value_parser = parse_count)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 65_536)]
    batch: u64,
    /// Use antithetic pairs (x0, z1), (-x0, -z1)
    #[arg(long)]
    antithetic: bool,
}

impl SimArgs {
    fn config(&self) -> Result<SimConfig> {
        let sim = SimConfig {
            samples: self.samples,
            seed: self.seed,
            batch: self.batch,
            antithetic: self.antithetic,
        };
        sim.validate()?;
        Ok(sim)
    }
}

#[derive(Debug, Args)]
struct OptArgs {
    /// Cold starts per optimization
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long, default_value_t = 4000)]
    max_iters: usize,
    #[arg(long, default_value = "1e-7")]
    x_tol: f64,
    #[arg(long, default_value = "1e-11")]
    f_tol: f64,
}

impl OptArgs {
    fn options(&self) -> OptimizeOptions {
        OptimizeOptions {
            restarts: self.restarts,
            simplex: SimplexOptions {
                max_iters: self.max_iters,
                x_tol: self.x_tol,
                f_tol: self.f_tol,
                ..SimplexOptions::default()
            },
            init: Init::Cold,
        }
    }
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Density grid half-width [default: 6·√Q]
    #[arg(long)]
    half_width: Option<f64>,
    /// Odd number of grid points
    #[arg(long, default_value_t = 6001)]
    points: usize,
}

impl GridArgs {
    fn half_width(&self, cfg: &ProblemConfig) -> f64 {
        self.half_width.unwrap_or(6.0 * cfg.q().sqrt())
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[arg(long, value_enum, default_value_t = DecoderKind::Mmse)]
    decoder: DecoderKind,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    sim: SimArgs,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
#[group(id = "target", required = true, multiple = false, args = ["omega", "power"])]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Number of steps
    #[arg(long = "n")]
    steps: usize,
    /// Weight ω of the objective ω·P + (1-ω)·S
    #[arg(long)]
    omega: Option<f64>,
    /// Minimize S at exactly this power
    #[arg(long)]
    power: Option<f64>,
    #[command(flatten)]
    opt: OptArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Number of steps
    #[arg(long = "n")]
    steps: usize,
    /// ω grid as start:end:count, endpoints included
    #[arg(long, default_value = "0:1:101")]
    omegas: String,
    #[command(flatten)]
    opt: OptArgs,
    /// Cold starts added to the warm start after the first ω
    #[arg(long, default_value_t = 2)]
    warm_restarts: usize,
    /// Extra ω values placed where the frontier bends most
    #[arg(long, default_value_t = 0)]
    refine: usize,
    /// Comma separated ω values whose optimized density is written
    #[arg(long)]
    density_omegas: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct BaselinesArgs {
    #[command(flatten)]
    common: Common,
    /// Power grid as start:end:count
    #[arg(long, default_value = "0:1:101")]
    powers: String,
    #[arg(long, default_value_t = crate::costs::DEFAULT_ENVELOPE_GRID)]
    envelope_grid: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TagArg {
    Linear,
    Bpsk,
}

#[derive(Debug, Args)]
struct FocArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    tag: TagArg,
    /// Strictly decreasing comma separated powers
    #[arg(long, default_value = "1e-2,1e-3,1e-4,1e-5")]
    powers: String,
    #[command(flatten)]
    quad: QuadArgs,
}

#[derive(Debug, Args)]
struct DensityArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[command(flatten)]
    grid: GridArgs,
}

/// What a command produced.
struct Outcome {
    exit: i32,
    files: Vec<(String, String)>,
}

impl Outcome {
    fn ok() -> Self {
        Self {
            exit: EXIT_OK,
            files: Vec::new(),
        }
    }

    fn file(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

/// Runs the tool on a full argument vector (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let matches = match cli_command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let common = common_of(&cli.command);

    let threads = match common.threads.map(Ok).or_else(threads_from_env) {
        Some(Ok(t)) => Some(t),
        Some(Err(msg)) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
        None => None,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };

    let start = Instant::now();
    let result = pool.install(|| dispatch(&cli.command));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => return report(e),
    };
    if let Some(dir) = &common.out {
        if let Err(e) = write_outputs(dir, name, sub, &outcome, pool.current_num_threads(), start) {
            return report(e);
        }
    }
    outcome.exit
}

fn cli_command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.allow_negative_numbers(true))
}

fn report(e: Error) -> i32 {
    eprintln!("error: {e}");
    match e {
        Error::QuadratureNonConvergence { estimate, error_estimate, .. } => {
            eprintln!("partial estimate: {estimate} (error estimate {error_estimate})");
            EXIT_NONCONVERGENCE
        }
        Error::Overflow { .. } => EXIT_NONCONVERGENCE,
        Error::Io(_) => EXIT_VALIDATION,
        Error::NonFinite(_) | Error::InvalidParams(_) | Error::Unsupported(_) | Error::Parse { .. } => EXIT_USAGE,
    }
}

fn threads_from_env() -> Option<std::result::Result<usize, String>> {
    let v = std::env::var(THREADS_ENV).ok()?;
    Some(
        v.trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a nonnegative integer, got `{v}`")),
    )
}

fn common_of(c: &Command) -> &Common {
    match c {
        Command::Eval(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Validate(a) => &a.common,
        Command::Optimize(a) => &a.common,
        Command::Sweep(a) => &a.common,
        Command::Baselines(a) => &a.common,
        Command::Foc(a) => &a.common,
        Command::Density(a) => &a.common,
    }
}

/// Long flag names of a subcommand, keyed by argument id.
fn flag_names(sub: &clap::Command) -> Vec<(String, String)> {
    sub.get_arguments()
        .filter_map(|a| Some((a.get_id().to_string(), a.get_long()?.to_string())))
        .filter(|(_, long)| !matches!(long.as_str(), "help" | "version" | "config" | "out"))
        .collect()
}

/// Splices the `--config` file in as flags placed before the command-line
/// flags, so that the latter win.
fn merge_config(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let (Some(path), Some(sub_name)) = (path, args.get(1)) else {
        return Ok(args);
    };
    let cmd = cli_command();
    let Some(sub) = cmd.find_subcommand(sub_name) else {
        return Ok(args);
    };
    let known: Vec<String> = flag_names(sub).into_iter().map(|(_, l)| l).collect();
    let text = fs::read_to_string(&path)?;
    let skip = given_on_command_line(sub, &args[2..]);
    let tokens = config_tokens(&text, sub_name, &known, &skip)?;
    let mut merged = args[..2].to_vec();
    merged.extend(tokens);
    merged.extend_from_slice(&args[2..]);
    Ok(merged)
}

/// Long flags set on the command line, plus the other members of their
/// mutually exclusive groups.
fn given_on_command_line(sub: &clap::Command, args: &[String]) -> Vec<String> {
    let longs = flag_names(sub);
    let mut given: Vec<String> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .filter(|l| longs.iter().any(|(_, long)| long == l))
        .collect();
    for g in sub.get_groups().filter(|g| !(*g).clone().is_multiple()) {
        let members: Vec<&String> = g
            .get_args()
            .filter_map(|id| longs.iter().find(|(i, _)| i == id.as_str()).map(|(_, l)| l))
            .collect();
        if members.iter().any(|m| given.contains(m)) {
            given.extend(members.into_iter().cloned());
        }
    }
    given
}

fn config_tokens(text: &str, command: &str, known: &[String], skip: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let eq = content.find('=').ok_or_else(|| Error::Parse {
            line,
            column: 1,
            message: "expected `key = value`".into(),
        })?;
        let key = content[..eq].trim();
        let value = content[eq + 1..].trim();
        let key_col = content.len() - content.trim_start().len() + 1;
        if key == "command" && value != command {
            return Err(Error::Parse {
                line,
                column: eq + 2,
                message: format!("config is for `{value}`, not `{command}`"),
            });
        }
        if MANIFEST_ONLY_KEYS.contains(&key) {
            continue;
        }
        if !known.iter().any(|k| k == key) {
            return Err(Error::Parse {
                line,
                column: key_col,
                message: format!("unknown key `{key}` for `{command}`"),
            });
        }
        if skip.iter().any(|k| k == key) {
            continue;
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            _ => {
                out.push(format!("--{key}"));
                out.extend(value.split_whitespace().map(str::to_string));
            }
        }
    }
    Ok(out)
}

fn write_outputs(
    dir: &Path,
    name: &str,
    matches: &clap::ArgMatches,
    outcome: &Outcome,
    threads: usize,
    start: Instant,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (file, contents) in &outcome.files {
        fs::write(dir.join(file), contents)?;
    }
    let cmd = cli_command();
    let sub = cmd.find_subcommand(name).expect("known subcommand");
    let mut m = String::new();
    let _ = writeln!(m, "command = {name}");
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    for (id, long) in flag_names(sub) {
        if long == "threads" {
            let _ = writeln!(m, "threads = {threads}");
            continue;
        }
        if let Some(values) = matches.get_raw(&id) {
            let joined: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
            let _ = writeln!(m, "{long} = {}", joined.join(" "));
        }
    }
    let _ = writeln!(m, "output_dir = {}", dir.display());
    let names: Vec<&str> = outcome.files.iter().map(|(f, _)| f.as_str()).collect();
    let _ = writeln!(m, "outputs = {}", names.join(" "));
    let _ = writeln!(m, "duration_ms = {}", start.elapsed().as_millis());
    fs::write(dir.join(MANIFEST_FILE), m)?;
    Ok(())
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    match cmd {
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Baselines(a) => cmd_baselines(a),
        Command::Foc(a) => cmd_foc(a),
        Command::Density(a) => cmd_density(a),
    }
}

/// Frontier-style CSV text of one record set.
fn frontier_csv(sweep: &FrontierSweep) -> Result<String> {
    let mut buf = Vec::new();
    sweep.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is ASCII"))
}

/// Two-column `x fX` text.
pub fn density_dat(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("x fX\n");
    for (x, f) in rows {
        let _ = writeln!(s, "{} {}", format_real(*x), format_real(*f));
    }
    s
}

fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let qc = a.quad.config()?;
    let s = a.strategy.resolve()?;
    let c = strategy_cost(&s, &cfg, &qc)?;
    let csv = format!(
        "schema,1\nstrategy,P,S,quad_error_estimate\n{},{},{},{}\n",
        s.kind(),
        format_real(c.power),
        format_real(c.estimation),
        format_real(c.quad_error_estimate)
    );
    print!("{csv}");
    let mut o = Outcome::ok();
    o.file("eval.csv", csv);
    Ok(o)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let sim = a.sim.config()?;
    let s = a.strategy.resolve()?;
    let decoder = match a.decoder {
        DecoderKind::Mmse => Decoder::ExactMmse,
        DecoderKind::Identity => Decoder::Identity,
    };
    let r = simulate(&s, &cfg, &sim, &decoder)?;
    let csv = format!(
        "schema,1\nstrategy,P_hat,P_stderr,S_hat,S_stderr,samples,seed\n{},{},{},{},{},{},{}\n",
        s.kind(),
        format_real(r.p_hat),
        format_real(r.p_stderr),
        format_real(r.s_hat),
        format_real(r.s_stderr),
        r.samples,
        r.seed
    );
    print!("{csv}");
    let mut o = Outcome::ok();
    o.file("simulate.csv", csv);
    Ok(o)
}

/// `(closed - mc) / stderr`; zero when both agree exactly.
fn z_score(closed: f64, mc: f64, stderr: f64) -> f64 {
    let d = closed - mc;
    if d == 0.0 {
        0.0
    } else if stderr > 0.0 {
        d / stderr
    } else {
        f64::INFINITY
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let qc = a.quad.config()?;
    let sim = a.sim.config()?;
    let s = a.strategy.resolve()?;
    let closed = strategy_cost(&s, &cfg, &qc)?;
    let mc = simulate(&s, &cfg, &sim, &Decoder::ExactMmse)?;
    let rows = [
        ("P", closed.power, mc.p_hat, mc.p_stderr),
        ("S", closed.estimation, mc.s_hat, mc.s_stderr),
    ];
    let mut csv = String::from("schema,1\nquantity,closed_form,monte_carlo,stderr,z\n");
    let mut pass = true;
    for (q, c, m, se) in rows {
        let z = z_score(c, m, se);
        pass &= z.abs() <= 4.0;
        let _ = writeln!(
            csv,
            "{q},{},{},{},{}",
            format_real(c),
            format_real(m),
            format_real(se),
            format_real(z)
        );
    }
    print!("{csv}");
    println!("validation {}", if pass { "passed" } else { "FAILED" });
    let mut o = Outcome::ok();
    o.file("validate.csv", csv);
    if !pass {
        o.exit = EXIT_VALIDATION;
    }
    Ok(o)
}

fn strategy_text(p: &LopeParams) -> String {
    Strategy::Lope(p.clone()).to_string()
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let qc = a.quad.config()?;
    let opts = a.opt.options();
    let mut o = Outcome::ok();
    let (params, converged) = if let Some(omega) = a.omega {
        let obj = WeightedObjective::new(omega, a.steps, cfg, qc)?;
        let rec = optimize_at(&obj, &opts)?;
        let sweep = FrontierSweep {
            n: a.steps,
            records: vec![rec.clone()],
        };
        let csv = frontier_csv(&sweep)?;
        print!("{csv}");
        o.file("optimized.csv", csv);
        (rec.params, rec.converged)
    } else {
        let target = a.power.expect("group requires omega or power");
        let r = optimize_at_power(a.steps, &cfg, &qc, target, &[], &opts)?;
        let mut csv = String::from("schema,1\ntarget_P,P,S,converged");
        for i in 1..=a.steps {
            let _ = write!(csv, ",a_{i}");
        }
        for i in 1..=a.steps {
            let _ = write!(csv, ",B_{i}");
        }
        let _ = write!(
            csv,
            "\n{},{},{},{}",
            format_real(target),
            format_real(r.point.power),
            format_real(r.point.estimation),
            r.converged
        );
        for v in r.params.amplitudes().iter().chain(r.params.breakpoints()) {
            let _ = write!(csv, ",{}", format_real(*v));
        }
        csv.push('\n');
        print!("{csv}");
        o.file("optimized.csv", csv);
        (r.params, r.converged)
    };
    o.file("strategy.txt", strategy_text(&params));
    let rows = density_table(&params, &cfg, a.grid.half_width(&cfg), a.grid.points)?;
    o.file("density.dat", density_dat(&rows));
    if !converged {
        eprintln!("warning: no start met the convergence tolerance");
        o.exit = EXIT_NONCONVERGENCE;
    }
    Ok(o)
}

fn cmd_sweep(a: &SweepArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let qc = a.quad.config()?;
    let omegas = parse_omega_grid(&a.omegas)?;
    let opts = SweepOptions {
        first: a.opt.options(),
        warm_restarts: a.warm_restarts,
    };
    let mut sw = sweep(a.steps, &cfg, &qc, &omegas, &opts)?;
    sw.refine_knee(&cfg, &qc, a.refine, &opts)?;
    for j in sw.continuity_violations() {
        eprintln!(
            "warning: objective jumps between omega {} and {}",
            sw.records[j].omega,
            sw.records[j + 1].omega
        );
    }
    let mut o = Outcome::ok();
    o.file("frontier.csv", frontier_csv(&sw)?);
    if let Some(list) = &a.density_omegas {
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let w: f64 = item.parse().map_err(|_| Error::Parse {
                line: 1,
                column: 1,
                message: format!("bad omega `{item}` in density list"),
            })?;
            let rec = sw
                .records
                .iter()
                .min_by(|x, y| (x.omega - w).abs().total_cmp(&(y.omega - w).abs()))
                .expect("sweep is non-empty");
            let rows = density_table(&rec.params, &cfg, a.grid.half_width(&cfg), a.grid.points)?;
            o.file(format!("density_omega_{item}.dat"), density_dat(&rows));
        }
    }
    let converged = sw.records.iter().filter(|r| r.converged).count();
    let dominated = sw.records.iter().filter(|r| r.dominated).count();
    println!(
        "points={} converged={} dominated={}",
        sw.records.len(),
        converged,
        dominated
    );
    Ok(o)
}

fn cmd_baselines(a: &BaselinesArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let powers = parse_omega_grid(&a.powers)?;
    let env = GaussianEnvelope::new(&cfg, a.envelope_grid)?;
    let mut csv = String::from("schema,1\nP,S_linear,S_gaussian\n");
    for p in powers {
        let _ = writeln!(
            csv,
            "{},{},{}",
            format_real(p),
            format_real(linear_cost(p, &cfg)?),
            format_real(env.eval(p)?)
        );
    }
    print!("{csv}");
    let mut o = Outcome::ok();
    o.file("baselines.csv", csv);
    Ok(o)
}

fn cmd_foc(a: &FocArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let qc = a.quad.config()?;
    let grid = parse_list(&a.powers, 1, 1)?;
    let tag = match a.tag {
        TagArg::Linear => SlopeTag::Linear,
        TagArg::Bpsk => SlopeTag::Bpsk,
    };
    let d = slope_diagnostic(tag, &cfg, &grid, &qc)?;
    let mut buf = Vec::new();
    d.write_csv(&mut buf)?;
    let csv = String::from_utf8(buf).expect("CSV is ASCII");
    print!("{csv}");
    println!("divergence_certified={}", d.divergence_certified());
    let mut o = Outcome::ok();
    o.file("foc.csv", csv);
    Ok(o)
}

fn cmd_density(a: &DensityArgs) -> Result<Outcome> {
    let cfg = a.common.problem()?;
    let s = a.strategy.resolve()?;
    let p = s.as_lope().ok_or_else(|| {
        Error::Unsupported(format!("the state density of a {} strategy has no density table", s.kind()))
    })?;
    let rows = density_table(&p, &cfg, a.grid.half_width(&cfg), a.grid.points)?;
    let dat = density_dat(&rows);
    if a.common.out.is_none() {
        print!("{dat}");
    } else {
        let mass: f64 = rows
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
            .sum();
        println!("rows={} trapezoid_mass={mass}", rows.len());
    }
    let mut o = Outcome::ok();
    o.file("density.dat", dat);
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inline_lope() {
        let p = parse_inline_lope(&["a=0.2,0.5".into(), "B=0,0.8".into()]).unwrap();
        assert_eq!(p.amplitudes(), &[0.2, 0.5]);
        assert_eq!(p.breakpoints(), &[0.0, 0.8]);
        let p = parse_inline_lope(&["B=0".into(), "a=0.3".into()]).unwrap();
        assert_eq!(p.amplitudes(), &[0.3]);
        match parse_inline_lope(&["a=0.2,x".into(), "B=0,1".into()]) {
            Err(Error::Parse { line: 1, column: 7, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_inline_lope(&["a=0.2".into(), "C=0".into()]) {
            Err(Error::Parse { column: 7, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn config_lines() {
        let known = vec!["Q".to_string(), "zero".into(), "lope".into()];
        let t = config_tokens("# c\nQ = 2\nzero = true\n\nlope = a=0.1 B=0\n", "eval", &known, &[]).unwrap();
        assert_eq!(t, vec!["--Q", "2", "--zero", "--lope", "a=0.1", "B=0"]);
        let t = config_tokens("command = eval\nversion = 1\nzero = false\n", "eval", &known, &[]).unwrap();
        assert!(t.is_empty());
        match config_tokens("Q = 1\n  bogus = 3\n", "eval", &known, &[]) {
            Err(Error::Parse { line: 2, column: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(config_tokens("command = sweep\n", "eval", &known, &[]).is_err());
        assert!(config_tokens("Q 1\n", "eval", &known, &[]).is_err());
    }

    #[test]
    fn z_scores() {
        assert_eq!(z_score(1.0, 1.0, 0.0), 0.0);
        assert!(z_score(1.0, 0.5, 0.0).is_infinite());
        assert_eq!(z_score(1.0, 0.5, 0.25), 2.0);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["witsbench", "eval"]), EXIT_USAGE);
        assert_eq!(run(["witsbench", "eval", "--zero", "--bpsk", "0.1"]), EXIT_USAGE);
        assert_eq!(run(["witsbench", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["witsbench", "eval", "--lope", "a=0.2,x", "B=0,1"]), EXIT_USAGE);
        assert_eq!(run(["witsbench", "eval", "--zero", "--Q", "-1"]), EXIT_USAGE);
    }
}
