//! `cascadelab` command line front end.

use std::fs;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cascadelab::analysis::{self, AnalysisError};
use cascadelab::cascade::CascadeRealization;
use cascadelab::clt::{self, CltError, EnsembleOptions, EnsembleSample, SNAPSHOT_LEVEL};
use cascadelab::moments::MomentTable;
use cascadelab::regime::{self, RegimeError, RegimeReport};
use cascadelab::{catalog, Error, WeightError, WeightSpec};

const REGIME_VIOLATION: &str = "regime_violation";

#[derive(Parser, Debug)]
#[command(name = "cascadelab", version, about = "Simulate and analyse b-adic random cascades")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true, env = "CASCADELAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Weight law as a JSON file, or `@name` for a built-in law.
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run outside the hypotheses of the requested computation.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Regime report and a table of the structure function.
    Classify {
        #[command(flatten)]
        common: Common,
    },
    /// Level-n path as CSV `t,re,im`.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: u32,
        #[arg(long)]
        allow_large_depth: bool,
    },
    /// Ensemble of terminal values as JSON.
    Ensemble {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Kind::Zn)]
        kind: Kind,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        tail: u32,
        /// Keep normalized paths on the level-8 grid.
        #[arg(long)]
        paths: bool,
    },
    /// Exact moment table.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        order: u32,
        #[arg(long, default_value_t = 3)]
        depth: u32,
    },
    /// Free-energy slopes of the oscillations.
    Tau {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: u32,
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0, 4.0])]
        q: Vec<f64>,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        allow_large_depth: bool,
    },
    /// Multifractal time change: curve CSV `g,re,im` and a Hölder estimate.
    Timechange {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: u32,
        /// Exponent of the companion cascade (default: the solved beta).
        #[arg(long)]
        beta: Option<f64>,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        allow_large_depth: bool,
    },
    /// Compare an ensemble with Brownian motion in multifractal time.
    Clt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = CltKind::Zn)]
        kind: CltKind,
        #[arg(long, default_value_t = 12)]
        depth: u32,
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        tail: u32,
        /// Write the raw sample values as a one-column CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
struct Window {
    #[arg(long)]
    level_lo: Option<u32>,
    #[arg(long)]
    level_hi: Option<u32>,
}

impl Window {
    fn resolve(self, default: RangeInclusive<u32>) -> RangeInclusive<u32> {
        self.level_lo.unwrap_or(*default.start())..=self.level_hi.unwrap_or(*default.end())
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Zn,
    Rn,
    Reference,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum CltKind {
    Zn,
    Rn,
}

/// Failures before any module is reached.
#[derive(Debug)]
enum CliError {
    Core(Error),
    Io(String),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
core_from!(WeightError, RegimeError, AnalysisError, CltError, cascadelab::cascade::CascadeError, cascadelab::moments::MomentError);

impl CliError {
    fn report(&self) -> (i32, serde_json::Value) {
        match self {
            CliError::Core(e) => {
                let class = format!("{:?}", e.class()).to_lowercase();
                (e.exit_code(), json!({ "error": { "class": class, "kind": e.kind(), "message": e.to_string() } }))
            }
            CliError::Io(m) => (2, json!({ "error": { "class": "validation", "kind": "Io", "message": m } })),
            CliError::Usage(m) => (2, json!({ "error": { "class": "validation", "kind": "Usage", "message": m } })),
        }
    }
}

fn load_spec(arg: &str) -> Result<WeightSpec, CliError> {
    if let Some(name) = arg.strip_prefix('@') {
        return catalog::by_name(name).ok_or_else(|| CliError::Usage(format!("no built-in law named {name:?}")));
    }
    let text = fs::read_to_string(arg).map_err(|e| CliError::Io(format!("{arg}: {e}")))?;
    Ok(WeightSpec::from_json_str(&text)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn push_note(value: &mut serde_json::Value, note: &str) {
    if let Some(obj) = value.as_object_mut() {
        let notes = obj.entry("notes").or_insert_with(|| json!([]));
        if let Some(list) = notes.as_array_mut() {
            list.push(json!(note));
        }
    }
}

/// Runs `f` under the regime guard, retrying with the guard off when
/// `--force` is given.
fn guarded<T>(
    force: bool,
    violated: &mut bool,
    f: impl Fn(EnsembleOptions) -> Result<T, CltError>,
    opts: EnsembleOptions,
) -> Result<T, CltError> {
    match f(opts) {
        Err(CltError::WrongRegime(_)) if force => {
            *violated = true;
            f(EnsembleOptions { force: true, ..opts })
        }
        other => other,
    }
}

#[derive(Serialize)]
struct PhiRow {
    p: f64,
    #[serde(with = "cascadelab::extended")]
    phi: f64,
}

#[derive(Serialize)]
struct ClassifyOutput {
    #[serde(flatten)]
    report: RegimeReport,
    phi_table: Vec<PhiRow>,
}

fn path_csv(header: &str, rows: impl Iterator<Item = (f64, f64, f64)>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for (a, b, c) in rows {
        s.push_str(&format!("{a},{b},{c}\n"));
    }
    s
}

fn realize(spec: &WeightSpec, depth: u32, seed: u64, allow_large: bool) -> Result<CascadeRealization, CliError> {
    if depth == 0 {
        return Err(CliError::Usage("depth must be at least 1".into()));
    }
    Ok(CascadeRealization::realize_with_guard(spec, depth, seed, allow_large)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Classify { common } => {
            let spec = load_spec(&common.spec)?;
            let report = regime::classify(&spec);
            let phi_table = (0..=32)
                .map(|i| {
                    let p = i as f64 * 0.25;
                    PhiRow { p, phi: spec.phi(p) }
                })
                .collect();
            emit(common.out.as_deref(), &to_json(&ClassifyOutput { report, phi_table }))
        }
        Command::Simulate { common, depth, allow_large_depth } => {
            let spec = load_spec(&common.spec)?;
            let real = realize(&spec, depth, common.seed, allow_large_depth)?;
            let path = real.path(depth)?;
            let rows = path.values.iter().enumerate().map(|(k, z)| (path.time(k), z.re, z.im));
            emit(common.out.as_deref(), &path_csv("t,re,im", rows))
        }
        Command::Ensemble { common, kind, depth, count, tail, paths } => {
            let spec = load_spec(&common.spec)?;
            let opts = EnsembleOptions {
                snapshot_level: paths.then_some(SNAPSHOT_LEVEL),
                force: false,
            };
            let mut violated = false;
            let seed = common.seed;
            let sample: EnsembleSample = match kind {
                Kind::Zn => guarded(common.force, &mut violated, |o| clt::normalized_ensemble_with(&spec, depth, count, seed, o), opts)?,
                Kind::Reference => guarded(common.force, &mut violated, |o| clt::reference_sample_with(&spec, depth, count, seed, o), opts)?,
                Kind::Rn => guarded(
                    common.force,
                    &mut violated,
                    |o| clt::residual_ensemble_with(&spec, depth, tail, count, seed, o),
                    opts,
                )?,
            };
            let mut value = serde_json::to_value(&sample).expect("serializable");
            if violated {
                push_note(&mut value, REGIME_VIOLATION);
            }
            emit(common.out.as_deref(), &to_json(&value))
        }
        Command::Moments { common, order, depth } => {
            let spec = load_spec(&common.spec)?;
            let table = MomentTable::compute(&spec, order, depth)?;
            emit(common.out.as_deref(), &to_json(&table))
        }
        Command::Tau { common, depth, q, window, allow_large_depth } => {
            let spec = load_spec(&common.spec)?;
            let real = realize(&spec, depth, common.seed, allow_large_depth)?;
            let path = real.path(depth)?;
            let w = window.resolve(analysis::default_tau_window(depth));
            let est = analysis::tau_estimate(&path, &q, *w.start(), *w.end())?;
            emit(common.out.as_deref(), &to_json(&est))
        }
        Command::Timechange { common, depth, beta, window, allow_large_depth } => {
            let spec = load_spec(&common.spec)?;
            let beta = match beta {
                Some(b) => b,
                None => regime::solve_beta(&spec).ok_or_else(|| {
                    CliError::from(RegimeError::WrongRegime("no beta with phi(beta) = 0 in [1, 256]".into()))
                })?,
            };
            let real = realize(&spec, depth, common.seed, allow_large_depth)?;
            let curve = analysis::time_change(&real, beta)?;
            let holder = analysis::holder_estimate(&curve, &real, window.resolve(analysis::default_holder_window(depth)))?;
            let rows = curve.knots.iter().map(|(g, z)| (*g, z.re, z.im));
            let csv = path_csv("g,re,im", rows);
            let summary = to_json(&json!({ "beta": beta, "holder": holder }));
            match common.out.as_deref() {
                Some(p) => {
                    emit(Some(p), &csv)?;
                    emit(None, &summary)
                }
                None => emit(None, &csv),
            }
        }
        Command::Clt { common, kind, depth, count, tail, dump } => {
            let spec = load_spec(&common.spec)?;
            let opts = EnsembleOptions::default();
            let mut violated = false;
            let seed = common.seed;
            let sample = match kind {
                CltKind::Zn => guarded(common.force, &mut violated, |o| clt::normalized_ensemble_with(&spec, depth, count, seed, o), opts)?,
                CltKind::Rn => guarded(
                    common.force,
                    &mut violated,
                    |o| clt::residual_ensemble_with(&spec, depth, tail, count, seed, o),
                    opts,
                )?,
            };
            let reference = guarded(common.force, &mut violated, |o| clt::reference_sample_with(&spec, depth, count, seed, o), opts)?;
            let mut report = clt::moment_report(&sample, &[1, 2, 3, 4])?;
            report.ks_statistic = Some(clt::ks_distance(&sample, &reference));
            if violated {
                report.notes.push(REGIME_VIOLATION.into());
            }
            if let Some(p) = dump {
                let mut csv = String::from("value\n");
                for v in &sample.values {
                    csv.push_str(&format!("{v}\n"));
                }
                emit(Some(&p), &csv)?;
            }
            emit(common.out.as_deref(), &to_json(&report))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": { "class": "validation", "kind": "Threads", "message": e.to_string() } }));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, body) = e.report();
            eprintln!("{body}");
            ExitCode::from(code as u8)
        }
    }
}
