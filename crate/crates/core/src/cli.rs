//! Command-line front end. [`run`] parses arguments, writes the report to
//! `out` and returns the process exit code.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analytic::{
    approx_net_key, expansion_condition_allocated, expansion_condition_exact, optimize_block_size,
    optimize_power_of_two, solve_d, ExpansionAnalysis, ProtocolParams, DEFAULT_ALPHA_MAX,
};
use crate::config::{hex_to_bits, FlatConfig};
use crate::error::{domain, Error};
use crate::fock::FockOracle;
use crate::protocol::{
    session_computational, session_info_theoretic, RepetitionCode, SessionStatus,
};
use crate::sim::{run_campaign, ChannelConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const CSV_HEADER: &str = "nbar,eps,D_opt,M,N,delta,capacity_bits,consumed_bits,net_bits";

#[derive(Debug, Parser)]
#[command(name = "covert-keyx", version, about = "Secret key expansion over a covert optical channel")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Key-expansion analysis of one configuration; optimizes D when omitted.
    Analyze(AnalyzeArgs),
    /// Optimal net bits per run over a log-spaced nbar grid, as CSV.
    Sweep(SweepArgs),
    /// Exact enumeration checks on a small number of modes.
    Verify(VerifyArgs),
    /// Monte Carlo of the block channel.
    Simulate(SimulateArgs),
    /// End-to-end key-expansion session from a config file.
    Session(SessionArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    nbar: f64,
    #[arg(long)]
    eps: f64,
    /// Mean signal count; defaults to the normalized value.
    #[arg(long)]
    d: Option<f64>,
    /// Block size.
    #[arg(long = "D")]
    block_size: Option<u64>,
    /// Number of blocks; requires --D. Without it M = N/D is continuous.
    #[arg(long = "M", requires = "block_size")]
    blocks: Option<u64>,
    /// Restrict D and M to powers of two, as sessions do.
    #[arg(long, conflicts_with_all = ["block_size", "blocks"])]
    pow2: bool,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: f64,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 1e-7)]
    nbar_min: f64,
    #[arg(long, default_value_t = 1e-1)]
    nbar_max: f64,
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    eps: Vec<f64>,
    /// Fixed mean signal count; the normalized value when omitted.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
    alpha_max: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Number of modes.
    #[arg(long = "N")]
    modes: usize,
    /// Per-mode signal probability of the i.i.d. protocol.
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 0.5)]
    nbar: f64,
    #[arg(long, default_value_t = 6)]
    cutoff: usize,
    /// Message priors for the secrecy check; uniform over N messages when omitted.
    #[arg(long, value_delimiter = ',')]
    priors: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("click").required(true).args(["nbar", "pc"])))]
struct SimulateArgs {
    #[arg(long)]
    nbar: Option<f64>,
    /// Per-mode stray click probability.
    #[arg(long)]
    pc: Option<f64>,
    #[arg(long = "D", default_value_t = 2)]
    block_size: u64,
    #[arg(long = "M", default_value_t = 1)]
    blocks: u64,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    InfoTheoretic,
    Computational,
}

#[derive(Debug, Args)]
struct SessionArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Lib(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Runs the command line `args` (program name first).
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Session(a) => cmd_session(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Lib(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "I/O error: {e}");
            EXIT_IO
        }
    }
}

/// `key = value` report lines.
struct Report<'a> {
    out: &'a mut dyn Write,
}

impl Report<'_> {
    fn kv(&mut self, key: &str, value: impl Display) -> io::Result<()> {
        writeln!(self.out, "{key} = {value}")
    }
}

fn d_policy(d: Option<f64>) -> (f64, &'static str) {
    match d {
        Some(d) => (d, "fixed"),
        None => (solve_d(), "normalized"),
    }
}

fn cmd_analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Outcome {
    let (d, policy) = d_policy(a.d);
    let (analysis, m_policy) = match (a.block_size, a.blocks) {
        (Some(dd), Some(m)) => {
            let p = ProtocolParams::new(a.nbar, a.eps, d, dd, m, a.alpha_max)?;
            (expansion_condition_allocated(&p)?, "allocated")
        }
        (Some(dd), None) => {
            let p = ProtocolParams::new(a.nbar, a.eps, d, dd, 1, a.alpha_max)?;
            (expansion_condition_exact(&p)?, "continuous")
        }
        _ if a.pow2 => (optimize_power_of_two(a.nbar, a.eps, d, a.alpha_max)?.analysis, "power-of-two"),
        _ => (optimize_block_size(a.nbar, a.eps, d, a.alpha_max)?.analysis, "continuous"),
    };
    let d_choice = if a.block_size.is_some() { "given" } else { "optimized" };

    let mut r = Report { out };
    r.kv("nbar", analysis.nbar)?;
    r.kv("eps", analysis.eps)?;
    r.kv("d", analysis.d)?;
    r.kv("d_policy", policy)?;
    r.kv("alpha_max", analysis.alpha_max)?;
    r.kv("D", analysis.block_size)?;
    r.kv("D_policy", d_choice)?;
    r.kv("M", analysis.blocks)?;
    r.kv("M_policy", m_policy)?;
    write_analysis_body(&mut r, &analysis)?;
    let alpha = analysis.block_size as f64 * analysis.nbar;
    if alpha > 0.0 && alpha <= 1.0 {
        r.kv("approx_net_bits", approx_net_key(alpha, analysis.nbar, analysis.eps)?)?;
    }
    if analysis.net_bits > 0.0 {
        r.kv("status", "expanding")?;
        Ok(EXIT_OK)
    } else {
        r.kv("status", "no expanding configuration")?;
        Ok(EXIT_INFEASIBLE)
    }
}

fn write_analysis_body(r: &mut Report, a: &ExpansionAnalysis) -> io::Result<()> {
    r.kv("N_required", a.modes_required)?;
    r.kv("N", a.blocks * a.block_size as f64)?;
    r.kv("beta", a.beta)?;
    r.kv("p0", a.p0)?;
    r.kv("p_c", a.p_c)?;
    r.kv("delta", a.delta)?;
    r.kv("capacity_bits", a.capacity_bits)?;
    r.kv("consumed_bits", a.consumed_bits)?;
    r.kv("produced_bits", a.produced_bits)?;
    r.kv("net_bits", a.net_bits)?;
    r.kv("condition_exact", a.condition_exact)?;
    r.kv("condition_simplified", a.condition_simplified)?;
    r.kv("in_regime", a.in_regime)?;
    r.kv("meets_bias_target", a.meets_bias_target)
}

/// Log-spaced grid with exact endpoints.
pub fn log_grid(min: f64, max: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = (min.log10(), max.log10());
    (0..points)
        .map(|i| match i {
            0 => min,
            i if i == points - 1 => max,
            i => 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64),
        })
        .collect()
}

/// Nine significant digits.
fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

/// Sweep rows in (nbar ascending, eps as listed) order.
pub fn sweep_rows(
    nbar_min: f64,
    nbar_max: f64,
    points: usize,
    eps_list: &[f64],
    d: f64,
    alpha_max: f64,
) -> crate::Result<Vec<ExpansionAnalysis>> {
    if !(nbar_min > 0.0 && nbar_min < nbar_max && nbar_max.is_finite()) {
        return Err(domain(format!("need 0 < nbar_min < nbar_max, got [{nbar_min}, {nbar_max}]")));
    }
    if points < 2 {
        return Err(domain("a sweep needs at least 2 points"));
    }
    if eps_list.is_empty() || eps_list.iter().any(|&e| !(e > 0.0 && e < 0.5)) {
        return Err(domain("each eps must lie in (0, 1/2)"));
    }
    let cells: Vec<(f64, f64)> = log_grid(nbar_min, nbar_max, points)
        .into_iter()
        .flat_map(|n| eps_list.iter().map(move |&e| (n, e)))
        .collect();
    cells
        .par_iter()
        .map(|&(n, e)| optimize_block_size(n, e, d, alpha_max).map(|o| o.analysis))
        .collect()
}

pub fn sweep_csv(rows: &[ExpansionAnalysis]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for a in rows {
        let fields = [
            sig9(a.nbar),
            sig9(a.eps),
            a.block_size.to_string(),
            sig9(a.blocks),
            sig9(a.modes_required),
            sig9(a.delta),
            sig9(a.capacity_bits),
            sig9(a.consumed_bits),
            sig9(a.net_bits),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Outcome {
    let (d, policy) = d_policy(a.d);
    let rows = sweep_rows(a.nbar_min, a.nbar_max, a.points, &a.eps, d, a.alpha_max)?;
    let csv = sweep_csv(&rows);
    match &a.out {
        None => out.write_all(csv.as_bytes())?,
        Some(path) => {
            std::fs::write(path, &csv)?;
            let mut r = Report { out };
            r.kv("nbar_min", a.nbar_min)?;
            r.kv("nbar_max", a.nbar_max)?;
            r.kv("points", a.points)?;
            r.kv("eps", a.eps.iter().map(f64::to_string).collect::<Vec<_>>().join(","))?;
            r.kv("d", d)?;
            r.kv("d_policy", policy)?;
            r.kv("alpha_max", a.alpha_max)?;
            r.kv("rows", rows.len())?;
            r.kv("out", path.display())?;
        }
    }
    Ok(EXIT_OK)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Outcome {
    let oracle = FockOracle::new(a.nbar, a.cutoff)?;
    let priors = match &a.priors {
        Some(p) => p.clone(),
        None => vec![1.0 / a.modes as f64; a.modes.max(1)],
    };
    let filter = oracle.verify_filter_bound(a.modes, a.q)?;
    let secrecy = oracle.verify_secrecy_bound(a.modes, &priors)?;

    let mut r = Report { out };
    r.kv("N", a.modes)?;
    r.kv("q", a.q)?;
    r.kv("nbar", a.nbar)?;
    r.kv("cutoff", a.cutoff)?;
    r.kv("tail_mass", filter.tail_mass)?;
    r.kv("eps", filter.eps)?;
    r.kv("eps_iid", filter.eps_iid)?;
    r.kv("p0", filter.p0)?;
    r.kv("filter_bound", filter.bound)?;
    r.kv("filter_bound_holds", filter.bound_holds)?;
    r.kv("mixture_sum", filter.mixture_sum)?;
    r.kv("convexity_holds", filter.convexity_holds)?;
    r.kv("decomposition_residual", filter.decomposition_residual)?;
    r.kv("eps_k_nondecreasing", filter.eps_k_nondecreasing)?;
    for (k, e) in filter.eps_k.iter().enumerate() {
        r.kv(&format!("eps_k[{k}]"), e)?;
    }
    r.kv("priors", secrecy.priors.iter().map(f64::to_string).collect::<Vec<_>>().join(","))?;
    for (m, e) in secrecy.eps_per_message.iter().enumerate() {
        r.kv(&format!("eps_m[{m}]"), e)?;
    }
    r.kv("secrecy_lhs", secrecy.lhs)?;
    r.kv("secrecy_rhs", secrecy.rhs)?;
    r.kv("secrecy_holds", secrecy.holds)?;
    let ok = filter.bound_holds && filter.eps_k_nondecreasing && filter.convexity_holds && secrecy.holds;
    Ok(if ok { EXIT_OK } else { EXIT_INFEASIBLE })
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Outcome {
    let (p_click, source) = match (a.nbar, a.pc) {
        (Some(n), _) => {
            if !(n >= 0.0) {
                return Err(domain(format!("nbar must be >= 0, got {n}")).into());
            }
            (n / (1.0 + n), "nbar")
        }
        (None, Some(p)) => (p, "pc"),
        (None, None) => unreachable!("clap requires one of --nbar, --pc"),
    };
    let channel = ChannelConfig::new(a.block_size, a.blocks, p_click)?;
    let rep = run_campaign(&channel, a.trials, a.seed)?;

    let mut r = Report { out };
    if let Some(n) = a.nbar {
        r.kv("nbar", n)?;
    }
    r.kv("p_c", p_click)?;
    r.kv("p_c_source", source)?;
    r.kv("D", a.block_size)?;
    r.kv("M", a.blocks)?;
    r.kv("trials", rep.trials)?;
    r.kv("seed", rep.master_seed)?;
    r.kv("collisions", rep.collision.count)?;
    r.kv("collision_rate", rep.collision.rate)?;
    r.kv("collision_ci95", rep.collision.ci_half_width)?;
    r.kv("symbol_errors", rep.symbol_error.count)?;
    r.kv("symbol_error_rate", rep.symbol_error.rate)?;
    r.kv("symbol_error_ci95", rep.symbol_error.ci_half_width)?;
    r.kv("analytic_delta", rep.analytic_delta)?;
    r.kv("z_score", rep.z_score)?;
    r.kv("consumed_bits_per_run", rep.consumed_bits_per_run)?;
    r.kv("produced_raw_bits_per_run", rep.produced_raw_bits_per_run)?;
    r.kv("total_consumed_bits", rep.total_consumed_bits)?;
    Ok(EXIT_OK)
}

/// Keys accepted in session config files.
pub const SESSION_KEYS: &[&str] = &[
    "nbar",
    "eps",
    "d",
    "alpha_max",
    "D",
    "M",
    "optimize",
    "runs",
    "shared_key",
    "key_bits",
    "key_seed",
    "k0",
    "k0_bits",
    "new_key_bits",
    "repeat",
    "delta_prng",
];

fn config_err(cfg: &FlatConfig, key: &str, msg: impl Into<String>) -> Error {
    Error::Config { line: cfg.line(key), msg: msg.into() }
}

fn session_params(cfg: &FlatConfig) -> crate::Result<ProtocolParams> {
    let nbar: f64 = cfg.require("nbar")?;
    let eps: f64 = cfg.require("eps")?;
    let d = match cfg.get("d")? {
        Some(d) => d,
        None => solve_d(),
    };
    let alpha_max = cfg.get("alpha_max")?.unwrap_or(DEFAULT_ALPHA_MAX);
    match cfg.raw("optimize") {
        Some("pow2") => {
            if cfg.contains("D") || cfg.contains("M") {
                return Err(config_err(cfg, "optimize", "`optimize` excludes explicit `D` and `M`"));
            }
            let opt = optimize_power_of_two(nbar, eps, d, alpha_max)?;
            ProtocolParams::new(nbar, eps, d, opt.block_size, opt.analysis.blocks as u64, alpha_max)
        }
        Some(other) => Err(config_err(cfg, "optimize", format!("unknown optimize policy `{other}`"))),
        None => {
            let block_size = cfg.require("D")?;
            let blocks = cfg.require("M")?;
            ProtocolParams::new(nbar, eps, d, block_size, blocks, alpha_max)
                .map_err(|e| config_err(cfg, "D", e.to_string()))
        }
    }
}

fn key_material(cfg: &FlatConfig, hex_key: &str, len_key: &str, default_len: u64) -> crate::Result<Vec<bool>> {
    if let Some(hex) = cfg.raw(hex_key) {
        if cfg.contains(len_key) {
            return Err(config_err(cfg, len_key, format!("`{len_key}` conflicts with `{hex_key}`")));
        }
        return hex_to_bits(hex).map_err(|m| config_err(cfg, hex_key, m));
    }
    let len: u64 = cfg.get(len_key)?.unwrap_or(default_len);
    let seed: u64 = cfg.get("key_seed")?.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    Ok((0..len).map(|_| rng.random()).collect())
}

fn cmd_session(a: &SessionArgs, out: &mut dyn Write) -> Outcome {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg = FlatConfig::parse(&text, SESSION_KEYS)?;
    let params = session_params(&cfg)?;
    let transcript = match a.mode {
        ModeArg::InfoTheoretic => {
            let runs: u64 = cfg.get("runs")?.unwrap_or(1000);
            let per_run = ChannelConfig::from(&params).key_bits_per_run() as u64;
            let key = key_material(&cfg, "shared_key", "key_bits", runs * per_run)?;
            session_info_theoretic(&params, runs, &key, a.seed)?
        }
        ModeArg::Computational => {
            let k0 = key_material(&cfg, "k0", "k0_bits", 128)?;
            let new_key_bits = cfg.get("new_key_bits")?.unwrap_or(1024);
            let repeat = cfg.get("repeat")?.unwrap_or(1);
            let delta_prng = cfg.get("delta_prng")?.unwrap_or(0.0);
            let code = RepetitionCode::new(params.block_size, repeat)?;
            session_computational(&params, &k0, new_key_bits, &code, delta_prng, a.seed)?
        }
    };
    writeln!(out, "{}", transcript.to_json())?;
    Ok(match transcript.status {
        SessionStatus::Completed => EXIT_OK,
        SessionStatus::Failed | SessionStatus::Aborted => EXIT_INFEASIBLE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["covert-keyx"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    fn field(report: &str, key: &str) -> String {
        let prefix = format!("{key} = ");
        report.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap().to_string()
    }

    #[test]
    fn analyze_examples() {
        let (code, out, _) = run_str(&["analyze", "--nbar", "1e-6", "--eps", "0.1"]);
        assert_eq!(code, EXIT_OK);
        let net: f64 = field(&out, "net_bits").parse().unwrap();
        assert!((net - 4.609789127306267).abs() < 1e-9);
        assert_eq!(field(&out, "condition_exact"), "true");
        assert_eq!(field(&out, "d_policy"), "normalized");
        assert_eq!(field(&out, "alpha_max"), "0.1");

        let (code, out, _) = run_str(&["analyze", "--nbar", "1e-2", "--eps", "0.001"]);
        assert_eq!(code, EXIT_INFEASIBLE);
        assert_eq!(field(&out, "condition_exact"), "false");
        assert_eq!(field(&out, "status"), "no expanding configuration");

        let (code, out, _) = run_str(&["analyze", "--nbar", "1e-4", "--eps", "0.1", "--D", "1"]);
        assert_eq!(code, EXIT_INFEASIBLE);
        assert_eq!(field(&out, "produced_bits"), "0");
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&["analyze", "--nbar", "1e-6"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["analyze", "--nbar", "-1", "--eps", "0.1"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["analyze", "--nbar", "1e-6", "--eps", "0.1", "--M", "4"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn verify_refuses_large_n() {
        let (code, _, err) = run_str(&["verify", "--N", "9"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("cap"), "{err}");
        let (code, out, _) = run_str(&["verify", "--N", "1", "--q", "1", "--nbar", "1"]);
        assert_eq!(code, EXIT_OK);
        let eps: f64 = field(&out, "eps").parse().unwrap();
        assert!((eps - 0.25).abs() < 1e-12);
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = log_grid(1e-7, 1e-1, 50);
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (1e-7, 1e-1));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn csv_format() {
        let rows = sweep_rows(1e-6, 1e-5, 2, &[0.1], solve_d(), DEFAULT_ALPHA_MAX).unwrap();
        let csv = sweep_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[0], "1.00000000e-6");
        assert_eq!(first[2], "100000");
    }
}
