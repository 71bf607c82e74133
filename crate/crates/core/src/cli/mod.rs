//! Experiment driver. Each subcommand reads a JSON config, writes its result
//! files plus `manifest.json` into the output directory, and exits with 0 on
//! success, 1 when an asserted identity fails and 2 on a configuration or
//! I/O error.
//!
//! Randomness derives from `(master_seed, subcommand, trial index)` only, so
//! results do not depend on `--workers`.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use config::*;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "microstates", version, about = "Sofic microstate experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file. A top-level `seed` key sets the master seed.
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit SVG plots where the subcommand has one.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relation defects and freeness of a finite quotient.
    CheckSofic(Common),
    /// Empirical window distribution of a microstate and its TV to the product law.
    Empirical(Common),
    /// Bernoulli-walk connection trials between independent good models.
    Connect(Common),
    /// Cocycles, coboundaries and first cohomology over Z/m.
    Cohomology(Common),
    /// Components of the near-cocycle set under δ-adjacency.
    CosetScan(Common),
    /// Coset sampling, the window-law check and the disconnection experiment.
    Popa(Common),
    /// Exact-identity suite; exits 1 if any assertion fails.
    IdentityChecks(Common),
    /// Re-runs the experiment recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: bool,
    },
}

/// Written next to every result set; enough to reproduce it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub master_seed: u64,
    pub config: Value,
    /// Whether SVG plots were requested.
    #[serde(default)]
    pub svg: bool,
    /// Seconds since the Unix epoch; the only field that varies between reruns.
    pub timestamp: u64,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Run(crate::Error),
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Io { .. } => Failure::Run(e),
            other => Failure::Config(other.to_string()),
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<Value, Failure> {
    let Some(path) = path else {
        return Ok(Value::Object(Default::default()));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(value: Value) -> Result<T, Failure> {
    from_value(value).map_err(Failure::Config)
}

/// Splits a top-level `seed` out of the config object.
fn take_seed(value: &mut Value) -> Result<Option<u64>, Failure> {
    match value.as_object_mut().and_then(|o| o.remove("seed")) {
        None => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| Failure::Config("at `seed`: expected an unsigned 64-bit integer".into())),
    }
}

/// Resolves defaults, runs the subcommand and returns the echoed config.
fn execute(name: &str, value: Value, seed: u64, out: &Path, svg: bool) -> Result<(Value, bool), Failure> {
    let (resolved, ok) = match name {
        "check-sofic" => {
            let c: CheckSoficConfig = parse(value)?;
            (echo(&c), commands::check_sofic(&c, out)?)
        }
        "empirical" => {
            let c: EmpiricalConfig = parse(value)?;
            (echo(&c), commands::empirical(&c, seed, out)?)
        }
        "connect" => {
            let c: ConnectConfig = parse::<ConnectConfig>(value)?.resolve(seed)?;
            (echo(&c), commands::connect_cmd(&c, seed, out, svg)?)
        }
        "cohomology" => {
            let c: CohomologyConfig = parse(value)?;
            (echo(&c), commands::cohomology(&c, out)?)
        }
        "coset-scan" => {
            let c: CosetScanConfig = parse(value)?;
            (echo(&c), commands::coset_scan(&c, seed, out, svg)?)
        }
        "popa" => {
            let c: PopaConfig = parse::<PopaConfig>(value)?.resolve(seed)?;
            (echo(&c), commands::popa(&c, seed, out)?)
        }
        "identity-checks" => {
            let c: IdentityChecksConfig = parse(value)?;
            (echo(&c), commands::identity_checks(&c, seed, out)?)
        }
        other => return Err(Failure::Config(format!("unknown subcommand `{other}`"))),
    };
    Ok((resolved, ok))
}

fn echo<T: Serialize>(config: &T) -> Value {
    serde_json::to_value(config).expect("configs serialize to JSON")
}

fn run_in_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn launch(name: &str, value: Value, seed: u64, out: &Path, svg: bool, workers: Option<usize>) -> Result<bool, Failure> {
    std::fs::create_dir_all(out).map_err(|e| Failure::Run(crate::Error::Io { path: out.display().to_string(), source: e }))?;
    let (config, ok) = run_in_pool(workers, || execute(name, value, seed, out, svg))??;
    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = Manifest {
        tool: "microstates".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        master_seed: seed,
        config,
        svg,
        timestamp,
    };
    commands::write_json(out, "manifest.json", &manifest)?;
    Ok(ok)
}

fn dispatch(cli: Cli) -> Result<bool, Failure> {
    let (name, common) = match cli.command {
        Command::CheckSofic(c) => ("check-sofic", c),
        Command::Empirical(c) => ("empirical", c),
        Command::Connect(c) => ("connect", c),
        Command::Cohomology(c) => ("cohomology", c),
        Command::CosetScan(c) => ("coset-scan", c),
        Command::Popa(c) => ("popa", c),
        Command::IdentityChecks(c) => ("identity-checks", c),
        Command::Replay { manifest, workers, out, svg } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| Failure::Config(format!("{}: {e}", manifest.display())))?;
            let m: Manifest = serde_json::from_str::<Value>(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", manifest.display())))
                .and_then(|v| from_value(v).map_err(Failure::Config))?;
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(format!("{}-replay", m.subcommand)));
            return launch(&m.subcommand, m.config, m.master_seed, &out, svg || m.svg, workers);
        }
    };
    let mut value = read_config(common.config.as_deref())?;
    let seed = common.seed.or(take_seed(&mut value)?).unwrap_or(0);
    let out = common.out.unwrap_or_else(|| PathBuf::from("out").join(name));
    launch(name, value, seed, &out, common.svg, common.workers)
}

/// Parses `argv` (program name first) and runs; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("error: one or more assertions failed");
            EXIT_ASSERTION
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}
