//! Command-line front end. `main` only forwards to [`run`].

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::criteria::eigen_half_criterion;
use crate::error::{QwalkError, Result};
use crate::firstreturn::{cumulative_return, MAX_PATH_STEPS};
use crate::fourier::{divergence_diagnostic, konno_dual_p0, lambda1_comparison, p0_by_quadrature, spectral_curves};
use crate::kac::{basis_density, kac_identity_check, SiteWalkSpec};
use crate::matkernel::{c64, Mat2, C64};
use crate::monitored::{oqw_monitored_series, polya_number, unmonitored_p0_series, uqw_monitored_series, WalkKind};
use crate::walkmodel::{
    first_return_frequency, sample_trajectory, site_distribution, CoinPair, CoinPreset, InitialState, LatticeDensity,
    SpinorField,
};

#[derive(Parser, Debug)]
#[command(name = "qwalk", version, about = "Open and coined quantum walks on the line", args_override_self = true)]
struct Cli {
    /// TOML file whose keys mirror the command-line flags (plus `command`).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// First-return probabilities of the open and unitary walks, step by step.
    FirstReturn(FirstReturnArgs),
    /// Monitored return series with survival mass.
    Monitored(MonitoredArgs),
    /// Site distribution after a number of unmonitored steps.
    Distribution(DistributionArgs),
    /// Fourier-space curves and return probabilities.
    Fourier(FourierArgs),
    /// Closed-form recurrence verdict.
    Criteria(CriteriaArgs),
    /// Expected return time against the stationary state on a finite graph.
    Kac(KacArgs),
    /// Quantum trajectories of the open walk.
    Trajectory(TrajectoryArgs),
}

#[derive(Args, Debug, Clone)]
struct CoinArgs {
    /// hadamard, bitflip, sec7, diag-trichotomy.
    #[arg(long)]
    preset: Option<String>,
    /// Parameter of the bitflip preset.
    #[arg(long)]
    p: Option<f64>,
    /// Inline L as JSON: four [re, im] pairs in row-major order, or nested rows.
    #[arg(long, allow_hyphen_values = true)]
    left: Option<String>,
    /// Inline R, same format as --left.
    #[arg(long, allow_hyphen_values = true)]
    right: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Compare {
    Oqw,
    Uqw,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum WalkArg {
    Oqw,
    Uqw,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Curve {
    Spectrum,
    Lambda1,
    P0,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum P0Method {
    Quadrature,
    Dual,
    Lattice,
    All,
}

#[derive(Args, Debug)]
struct FirstReturnArgs {
    #[command(flatten)]
    coin: CoinArgs,
    /// up, down, balanced, e11, e22, mixed, or JSON [re, im] pairs.
    #[arg(long, default_value = "down", allow_hyphen_values = true)]
    state: String,
    #[arg(long, alias = "horizon", default_value_t = 16)]
    max_steps: usize,
    /// `oqw` for the open walk alone; `uqw` and `both` add the unitary columns.
    #[arg(long, value_enum, default_value = "both")]
    compare: Compare,
    /// Use exhaustive path enumeration instead of monitored evolution.
    #[arg(long)]
    exact: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct MonitoredArgs {
    #[command(flatten)]
    coin: CoinArgs,
    #[arg(long, default_value = "down", allow_hyphen_values = true)]
    state: String,
    #[arg(long, value_enum, default_value = "oqw")]
    walk: WalkArg,
    #[arg(long, default_value_t = 2000)]
    horizon: usize,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct DistributionArgs {
    #[command(flatten)]
    coin: CoinArgs,
    #[arg(long, default_value = "down", allow_hyphen_values = true)]
    state: String,
    #[arg(long, alias = "horizon", default_value_t = 12)]
    time: usize,
    /// Default: both walks when the coin sum is unitary and the state pure.
    #[arg(long, value_enum)]
    walk: Option<WalkArg>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct FourierArgs {
    #[command(flatten)]
    coin: CoinArgs,
    #[arg(long, value_enum, default_value = "spectrum")]
    curve: Curve,
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Exponent for the lambda1 comparison.
    #[arg(long, default_value_t = 100)]
    power: u32,
    #[arg(long, default_value = "down", allow_hyphen_values = true)]
    state: String,
    /// Largest n for the p0 curve.
    #[arg(long, alias = "horizon", default_value_t = 40)]
    max_steps: usize,
    #[arg(long, value_enum, default_value = "all")]
    method: P0Method,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct CriteriaArgs {
    #[command(flatten)]
    coin: CoinArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct KacArgs {
    /// Only `barrier` is available; use --spec for other graphs.
    #[arg(long)]
    preset: Option<String>,
    /// Site walk as JSON: {sites, dim, transitions: [{from, to, matrix}]}.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    p11: f64,
    /// Defaults to --p11.
    #[arg(long)]
    p22: Option<f64>,
    /// Last site of the truncated half-line.
    #[arg(long, default_value_t = 60)]
    sites: usize,
    /// Stay at 0 with the left-move matrix instead of always leaving.
    #[arg(long)]
    retaining: bool,
    #[arg(long, default_value_t = 0)]
    x: usize,
    #[arg(long, default_value_t = 4000)]
    horizon: usize,
    /// Density at x (dimension 2): e11, e22, mixed, or JSON pairs.
    #[arg(long, default_value = "e11", allow_hyphen_values = true)]
    state: String,
    /// Use the basis projector on this index instead of --state.
    #[arg(long)]
    basis: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[command(flatten)]
    coin: CoinArgs,
    #[arg(long, default_value = "down", allow_hyphen_values = true)]
    state: String,
    #[arg(long, default_value_t = 16)]
    horizon: usize,
    /// More than one switches to the first-return frequency summary.
    #[arg(long, default_value_t = 1)]
    trajectories: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutputArgs,
}

/// Apply `QWALK_THREADS` to the global thread pool, if set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("QWALK_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parse arguments, run the command, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<String>,
{
    let args: Vec<String> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn find_config(args: &[String]) -> Option<(usize, usize, String)> {
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            return args.get(i + 1).map(|p| (i, 2, p.clone()));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some((i, 1, p.to_string()));
        }
    }
    None
}

/// Turn `--config file.toml` into ordinary flags placed before the
/// command-line ones, so explicit flags win.
fn expand_config(mut args: Vec<String>) -> Result<Vec<String>> {
    let Some((at, width, path)) = find_config(&args) else {
        return Ok(args);
    };
    args.drain(at..at + width);
    let text = fs::read_to_string(&path).map_err(|e| QwalkError::InvalidInput(format!("cannot read config {path}: {e}")))?;
    let mut table: toml::Table = text.parse().map_err(|e| QwalkError::InvalidInput(format!("config {path}: {e}")))?;
    let from_file = match table.remove("command") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(QwalkError::InvalidInput("config `command` must be a string".into())),
        None => None,
    };
    let has_command = args.get(1).is_some_and(|a| !a.starts_with('-'));
    let command = match (has_command, from_file) {
        (true, Some(c)) if c != args[1] => {
            return Err(QwalkError::InvalidInput(format!("config is for `{c}` but `{}` was requested", args[1])));
        }
        (true, _) => args.remove(1),
        (false, Some(c)) => c,
        (false, None) => return Err(QwalkError::InvalidInput("no command given on the command line or in the config".into())),
    };
    let mut out = vec![args.first().cloned().unwrap_or_else(|| "qwalk".into()), command];
    for (key, value) in table {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            toml::Value::Boolean(true) => out.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::String(s) => out.extend([flag, s]),
            toml::Value::Integer(i) => out.extend([flag, i.to_string()]),
            toml::Value::Float(f) => out.extend([flag, f.to_string()]),
            other => {
                let v = serde_json::to_string(&other).map_err(|e| QwalkError::InvalidInput(e.to_string()))?;
                out.extend([flag, v]);
            }
        }
    }
    out.extend(args.into_iter().skip(1));
    Ok(out)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::FirstReturn(a) => cmd_first_return(a),
        Command::Monitored(a) => cmd_monitored(a),
        Command::Distribution(a) => cmd_distribution(a),
        Command::Fourier(a) => cmd_fourier(a),
        Command::Criteria(a) => cmd_criteria(a),
        Command::Kac(a) => cmd_kac(a),
        Command::Trajectory(a) => cmd_trajectory(a),
    }
}

fn parse_pair(v: &Value) -> Result<C64> {
    match v {
        Value::Number(n) => Ok(c64(n.as_f64().unwrap_or(f64::NAN), 0.0)),
        Value::Array(p) if p.len() == 2 => match (p[0].as_f64(), p[1].as_f64()) {
            (Some(re), Some(im)) => Ok(c64(re, im)),
            _ => Err(QwalkError::InvalidInput("complex entries must be [re, im] numbers".into())),
        },
        _ => Err(QwalkError::InvalidInput(format!("cannot read complex entry {v}"))),
    }
}

/// Flat list of complex entries from `[[re,im],...]`, nested rows, or plain reals.
fn parse_complex_list(text: &str) -> Result<Vec<C64>> {
    let v: Value = serde_json::from_str(text).map_err(|e| QwalkError::InvalidInput(format!("bad JSON `{text}`: {e}")))?;
    let items = v.as_array().ok_or_else(|| QwalkError::InvalidInput("expected a JSON array".into()))?;
    let nested = items.iter().all(|r| r.as_array().is_some_and(|a| a.iter().all(|x| x.is_array())));
    if nested && !items.is_empty() {
        items.iter().flat_map(|r| r.as_array().into_iter().flatten()).map(parse_pair).collect()
    } else {
        items.iter().map(parse_pair).collect()
    }
}

fn parse_mat2(text: &str) -> Result<Mat2> {
    let e = parse_complex_list(text)?;
    if e.len() != 4 {
        return Err(QwalkError::InvalidInput(format!("a 2x2 matrix needs 4 entries, got {}", e.len())));
    }
    Ok(Mat2::from_rows([[e[0], e[1]], [e[2], e[3]]]))
}

fn coin_from(args: &CoinArgs) -> Result<CoinPair> {
    match (&args.preset, &args.left, &args.right) {
        (Some(name), None, None) => Ok(CoinPreset::parse(name.trim(), args.p)?.coin()),
        (None, Some(l), Some(r)) => CoinPair::new(parse_mat2(l)?, parse_mat2(r)?),
        (None, None, None) => Err(QwalkError::InvalidInput("give --preset or both --left and --right".into())),
        (Some(_), _, _) => Err(QwalkError::InvalidInput("--preset cannot be combined with --left/--right".into())),
        _ => Err(QwalkError::InvalidInput("--left and --right must be given together".into())),
    }
}

fn parse_state(text: &str) -> Result<InitialState> {
    let state = if text.trim_start().starts_with('[') {
        let e = parse_complex_list(text)?;
        match e.len() {
            2 => InitialState::Pure([e[0], e[1]]),
            4 => InitialState::Mixed(Mat2::from_rows([[e[0], e[1]], [e[2], e[3]]])),
            n => return Err(QwalkError::InvalidInput(format!("a state needs 2 (spinor) or 4 (density) entries, got {n}"))),
        }
    } else {
        InitialState::named(text.trim())?
    };
    state.validate()?;
    Ok(state)
}

fn check_horizon(n: usize) -> Result<()> {
    if n == 0 {
        return Err(QwalkError::InvalidInput("horizon must be at least 1".into()));
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn emit(out: &OutputArgs, default: Format, csv: impl FnOnce() -> String, json: impl FnOnce() -> Value) -> Result<()> {
    let text = match out.format.unwrap_or(default) {
        Format::Csv => csv(),
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&json()).expect("JSON value serializes");
            s.push('\n');
            s
        }
    };
    match &out.output {
        Some(path) => fs::write(path, text).map_err(|e| QwalkError::InvalidInput(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| QwalkError::InvalidInput(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

#[derive(Serialize)]
struct TableRow {
    steps: usize,
    oqw_term: Option<f64>,
    uqw_term: Option<f64>,
    interference: Option<f64>,
    oqw_cumulative: Option<f64>,
    uqw_cumulative: Option<f64>,
}

fn cmd_first_return(a: FirstReturnArgs) -> Result<()> {
    check_horizon(a.max_steps)?;
    let coin = coin_from(&a.coin)?;
    let state = parse_state(&a.state)?;
    let with_unitary = a.compare != Compare::Oqw;
    let psi = if with_unitary {
        coin.require_unitary_sum()?;
        Some(state.spinor().ok_or_else(|| QwalkError::InvalidInput("the unitary walk needs a pure state".into()))?)
    } else {
        None
    };
    let k_max = a.max_steps / 2;
    let rows: Vec<TableRow> = if a.exact {
        if 2 * k_max > MAX_PATH_STEPS {
            return Err(QwalkError::CostGuardExceeded { steps: 2 * k_max, limit: MAX_PATH_STEPS });
        }
        let effective = if with_unitary { state } else { InitialState::Mixed(state.density()) };
        cumulative_return(&coin, &effective, k_max)?
            .into_iter()
            .map(|r| TableRow {
                steps: r.steps,
                oqw_term: Some(r.oqw_term),
                uqw_term: r.uqw_term,
                interference: r.interference,
                oqw_cumulative: Some(r.oqw_cumulative),
                uqw_cumulative: r.uqw_cumulative,
            })
            .collect()
    } else {
        let horizon = 2 * k_max;
        let o = oqw_monitored_series(&coin, &state.density(), 0, horizon)?;
        let u = psi.map(|p| uqw_monitored_series(&coin, &p, 0, horizon)).transpose()?;
        let oc = o.series.cumulative();
        let uc = u.as_ref().map(|u| u.series.cumulative());
        (1..=k_max)
            .map(|k| {
                let n = 2 * k;
                let ot = o.series.term(n);
                let ut = u.as_ref().map(|u| u.series.term(n));
                TableRow {
                    steps: n,
                    oqw_term: Some(ot),
                    uqw_term: ut,
                    interference: ut.map(|x| x - ot),
                    oqw_cumulative: Some(oc[n]),
                    uqw_cumulative: uc.as_ref().map(|c| c[n]),
                }
            })
            .collect()
    };
    emit(
        &a.out,
        Format::Csv,
        || {
            let mut s = String::from("steps,oqw_term,uqw_term,interference,oqw_cumulative,uqw_cumulative\n");
            for r in &rows {
                s += &format!(
                    "{},{},{},{},{},{}\n",
                    r.steps,
                    opt(r.oqw_term),
                    opt(r.uqw_term),
                    opt(r.interference),
                    opt(r.oqw_cumulative),
                    opt(r.uqw_cumulative)
                );
            }
            s
        },
        || to_json(&rows),
    )
}

fn cmd_monitored(a: MonitoredArgs) -> Result<()> {
    check_horizon(a.horizon)?;
    let coin = coin_from(&a.coin)?;
    let state = parse_state(&a.state)?;
    let (run, walk) = match a.walk {
        WalkArg::Oqw => (oqw_monitored_series(&coin, &state.density(), 0, a.horizon)?, WalkKind::Oqw),
        WalkArg::Uqw => {
            let psi = state.spinor().ok_or_else(|| QwalkError::InvalidInput("the unitary walk needs a pure state".into()))?;
            (uqw_monitored_series(&coin, &psi, 0, a.horizon)?, WalkKind::Uqw)
        }
        WalkArg::Both => return Err(QwalkError::InvalidInput("monitored runs one walk at a time; use --walk oqw or uqw".into())),
    };
    let p0 = unmonitored_p0_series(&coin, &state, walk, a.horizon)?;
    let polya = polya_number(&p0, a.horizon)?;
    let cumulative = run.series.cumulative();
    emit(
        &a.out,
        Format::Csv,
        || {
            let mut s = String::from("n,term,cumulative,survival\n");
            for n in 1..=a.horizon {
                s += &format!("{n},{},{},{}\n", num(run.series.term(n)), num(cumulative[n]), num(run.survival[n]));
            }
            s
        },
        || {
            json!({
                "kind": walk,
                "N": a.horizon,
                "cumulative": run.cumulative(),
                "polya_partial": polya.partial,
                "p0_partial_sum": polya.partial_sum,
                "slope": polya.slope,
                "diverges_hint": polya.diverges_hint,
            })
        },
    )
}

fn cmd_distribution(a: DistributionArgs) -> Result<()> {
    let coin = coin_from(&a.coin)?;
    let state = parse_state(&a.state)?;
    let unitary_ok = coin.flags().unitary_sum && state.spinor().is_some();
    let walk = a.walk.unwrap_or(if unitary_ok { WalkArg::Both } else { WalkArg::Oqw });
    let oqw = matches!(walk, WalkArg::Oqw | WalkArg::Both)
        .then(|| site_distribution(&LatticeDensity::localized(state.density(), 0), a.time, &coin))
        .transpose()?;
    let uqw = if matches!(walk, WalkArg::Uqw | WalkArg::Both) {
        let psi = state.spinor().ok_or_else(|| QwalkError::InvalidInput("the unitary walk needs a pure state".into()))?;
        Some(site_distribution(&SpinorField::localized(psi, 0), a.time, &coin)?)
    } else {
        None
    };
    let t = a.time as i64;
    let sites: Vec<i64> = (-t..=t).collect();
    let get = |m: &Option<std::collections::BTreeMap<i64, f64>>, s: i64| m.as_ref().map(|m| m.get(&s).copied().unwrap_or(0.0));
    emit(
        &a.out,
        Format::Csv,
        || {
            let mut s = String::new();
            match (&oqw, &uqw) {
                (Some(_), Some(_)) => {
                    s += "site,oqw_probability,uqw_probability\n";
                    for &x in &sites {
                        s += &format!("{x},{},{}\n", opt(get(&oqw, x)), opt(get(&uqw, x)));
                    }
                }
                (one, other) => {
                    s += "site,probability\n";
                    let m = if one.is_some() { one } else { other };
                    for &x in &sites {
                        s += &format!("{x},{}\n", opt(get(m, x)));
                    }
                }
            }
            s
        },
        || {
            let rows: Vec<Value> =
                sites.iter().map(|&x| json!({"site": x, "oqw_probability": get(&oqw, x), "uqw_probability": get(&uqw, x)})).collect();
            json!({"time": a.time, "rows": rows})
        },
    )
}

fn cmd_fourier(a: FourierArgs) -> Result<()> {
    match a.curve {
        Curve::Lambda1 => {
            if a.grid == 0 {
                return Err(QwalkError::InvalidInput("grid needs at least one node".into()));
            }
            let rows = lambda1_comparison(a.grid, a.power);
            emit(
                &a.out,
                Format::Csv,
                || {
                    let mut s = String::from("k,lambda1,cos_k,lambda1_pow,cos_pow\n");
                    for r in &rows {
                        s += &format!("{},{},{},{},{}\n", num(r.k), num(r.lambda1), num(r.cos_k), num(r.lambda1_pow), num(r.cos_pow));
                    }
                    s
                },
                || to_json(&rows),
            )
        }
        Curve::Spectrum => {
            let coin = coin_from(&a.coin)?;
            let data = spectral_curves(&coin, a.grid)?;
            emit(
                &a.out,
                Format::Csv,
                || {
                    let mut s = String::from(
                        "k,re_lambda_1,re_lambda_2,re_lambda_3,re_lambda_4,im_lambda_1,im_lambda_2,im_lambda_3,im_lambda_4\n",
                    );
                    for (k, b) in data.k.iter().zip(&data.branches) {
                        let re: Vec<String> = b.iter().map(|z| num(z.re)).collect();
                        let im: Vec<String> = b.iter().map(|z| num(z.im)).collect();
                        s += &format!("{},{},{}\n", num(*k), re.join(","), im.join(","));
                    }
                    s
                },
                || {
                    let rows: Vec<Value> = data
                        .k
                        .iter()
                        .zip(&data.branches)
                        .map(|(k, b)| json!({"k": k, "lambda": b.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()}))
                        .collect();
                    json!({"spectral_radius": data.spectral_radius(), "rows": rows})
                },
            )
        }
        Curve::P0 => {
            check_horizon(a.max_steps)?;
            let coin = coin_from(&a.coin)?;
            let state = parse_state(&a.state)?;
            let rho = state.density();
            let methods: Vec<P0Method> = match a.method {
                P0Method::All => vec![P0Method::Quadrature, P0Method::Dual, P0Method::Lattice],
                m => vec![m],
            };
            let lattice = unmonitored_p0_series(&coin, &state, WalkKind::Oqw, a.max_steps)?;
            let mut rows: Vec<(usize, f64, &'static str)> = Vec::new();
            for n in 0..=a.max_steps {
                let nodes = a.grid.max(n + 2);
                for m in &methods {
                    let (v, name) = match m {
                        P0Method::Quadrature => (p0_by_quadrature(&coin, &rho, n, nodes)?, "quadrature"),
                        P0Method::Dual => (konno_dual_p0(&coin, &rho, n, nodes)?, "dual"),
                        P0Method::Lattice => (if n == 0 { 1.0 } else { lattice.term(n) }, "lattice"),
                        P0Method::All => unreachable!(),
                    };
                    rows.push((n, v, name));
                }
            }
            let even: Vec<f64> = (1..=a.max_steps / 2).map(|m| lattice.term(2 * m)).collect();
            let diag = divergence_diagnostic(&even, None).ok();
            emit(
                &a.out,
                Format::Csv,
                || {
                    let mut s = String::from("n,p0,method\n");
                    for (n, v, m) in &rows {
                        s += &format!("{n},{},{m}\n", num(*v));
                    }
                    s
                },
                || {
                    let r: Vec<Value> = rows.iter().map(|(n, v, m)| json!({"n": n, "p0": v, "method": m})).collect();
                    json!({"rows": r, "diagnostic": diag})
                },
            )
        }
    }
}

fn cmd_criteria(a: CriteriaArgs) -> Result<()> {
    let coin = coin_from(&a.coin)?;
    let v = eigen_half_criterion(&coin)?;
    let value = to_json(&v);
    emit(
        &a.out,
        Format::Json,
        || {
            let mut s = String::from("key,value\n");
            s += &format!("verdict,{}\n", value["verdict"].as_str().unwrap_or_default());
            s += &format!("rule,{}\n", value["rule"].as_str().unwrap_or_default());
            s += &format!("LstarL_1,{}\nLstarL_2,{}\n", num(v.eigenvalues.lstar_l[0]), num(v.eigenvalues.lstar_l[1]));
            s += &format!("RstarR_1,{}\nRstarR_2,{}\n", num(v.eigenvalues.rstar_r[0]), num(v.eigenvalues.rstar_r[1]));
            s += &format!("singular_lower,{}\nsingular_upper,{}\n", num(v.singular_bounds[0]), num(v.singular_bounds[1]));
            s += &format!("pq,{}\n", v.pq);
            for (label, r) in v.per_density_return.iter().flatten() {
                s += &format!("return[{label}],{}\n", num(*r));
            }
            s
        },
        || value.clone(),
    )
}

fn kac_density(a: &KacArgs, dim: usize) -> Result<DMatrix<C64>> {
    if let Some(i) = a.basis {
        if i >= dim {
            return Err(QwalkError::InvalidInput(format!("basis index {i} outside dimension {dim}")));
        }
        return Ok(basis_density(dim, i));
    }
    if dim != 2 {
        return Err(QwalkError::InvalidInput("use --basis for internal dimension other than 2".into()));
    }
    let rho = parse_state(&a.state)?.density();
    Ok(DMatrix::from_fn(2, 2, |i, j| rho[(i, j)]))
}

fn cmd_kac(a: KacArgs) -> Result<()> {
    check_horizon(a.horizon)?;
    let spec = match (&a.preset, &a.spec) {
        (Some(name), None) => match name.trim() {
            "barrier" => SiteWalkSpec::barrier(a.p11, a.p22.unwrap_or(a.p11), a.sites, a.retaining)?,
            "" => return Err(QwalkError::InvalidInput("empty preset name".into())),
            other => return Err(QwalkError::InvalidInput(format!("unknown site-walk preset `{other}`"))),
        },
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| QwalkError::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
            SiteWalkSpec::from_json(&text)?
        }
        (None, None) => SiteWalkSpec::barrier(a.p11, a.p22.unwrap_or(a.p11), a.sites, a.retaining)?,
        (Some(_), Some(_)) => return Err(QwalkError::InvalidInput("--preset and --spec are exclusive".into())),
    };
    let rho = kac_density(&a, spec.dim())?;
    let report = kac_identity_check(&spec, &rho, a.x, a.horizon)?;
    emit(
        &a.out,
        Format::Json,
        || {
            let mut s = String::from("site,E_R,tr_pi_x,inverse_tr_pi_x,gap,tail_mass,return_density_deviation\n");
            s += &format!(
                "{},{},{},{},{},{},{}\n",
                report.site,
                num(report.expected_return_time),
                num(report.stationary_trace),
                num(report.inverse_stationary_trace),
                num(report.gap),
                num(report.tail_mass),
                num(report.return_density_deviation)
            );
            s
        },
        || {
            let mut v = to_json(&report);
            v["E_R"] = json!(report.expected_return_time);
            v["tr_pi_x"] = json!(report.stationary_trace);
            v
        },
    )
}

fn cmd_trajectory(a: TrajectoryArgs) -> Result<()> {
    check_horizon(a.horizon)?;
    let coin = coin_from(&a.coin)?;
    let rho = parse_state(&a.state)?.density();
    if a.trajectories > 1 {
        let freq = first_return_frequency(&coin, rho, a.horizon, a.trajectories, a.seed)?;
        return emit(
            &a.out,
            Format::Csv,
            || format!("trajectories,horizon,seed,first_return_frequency\n{},{},{},{}\n", a.trajectories, a.horizon, a.seed, num(freq)),
            || json!({"trajectories": a.trajectories, "horizon": a.horizon, "seed": a.seed, "first_return_frequency": freq}),
        );
    }
    let t = sample_trajectory(&coin, rho, 0, a.horizon, a.seed)?;
    emit(
        &a.out,
        Format::Csv,
        || {
            let mut s = String::from("n,site,rho_11,rho_12_re,rho_12_im,rho_22\n");
            for (n, (x, d)) in t.positions.iter().zip(&t.densities).enumerate() {
                s += &format!("{n},{x},{},{},{},{}\n", num(d[(0, 0)].re), num(d[(0, 1)].re), num(d[(0, 1)].im), num(d[(1, 1)].re));
            }
            s
        },
        || {
            let densities: Vec<Vec<[f64; 2]>> =
                t.densities.iter().map(|d| d.vec().iter().map(|z| [z.re, z.im]).collect()).collect();
            json!({
                "seed": t.seed,
                "positions": t.positions,
                "densities": densities,
                "first_return_step": t.first_return_step,
            })
        },
    )
}
