//! Command-line front end for the MIMO capacity model.
//!
//! Exit codes: 0 ok, 1 internal error, 2 configuration or usage error,
//! 3 capacity routes disagree, 4 a verdict or property check failed.

pub mod config;
pub mod suites;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use mimo_core::antenna::Side;
use mimo_core::asymptotics::run_sweep;
use mimo_core::capacity::{agree, CapacityResult};
use mimo_core::csv::Table;
use mimo_core::{Error, Execution};

pub use config::RunConfig;

/// Relative tolerance for cross-route agreement.
pub const ROUTE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Disagreement(String),
    Failed(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Disagreement(_) => 3,
            CliError::Failed(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Disagreement(m) | CliError::Failed(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Precondition { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Internal(format!("cannot write {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "mimo", version, about = "Capacity of MIMO arrays filling a fixed volume")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $MIMO_OUT_DIR, then ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Quadrature grid resolution override.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity of one array pair by every requested route.
    Capacity,
    /// Antenna-count sweep of one asymptotic regime.
    Sweep {
        /// Overrides the `regime` key of the configuration.
        #[arg(long)]
        regime: Option<String>,
    },
    /// Property suites.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Weyl counts of the spherical Laplacian.
    Weyl {
        #[arg(long = "energy", num_args = 1.., default_values_t = vec![100.0, 1000.0, 10000.0])]
        energies: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Inequalities,
    Identity,
    Weyl,
    All,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let out = config.out_dir(cli.out.as_deref());
    mimo_core::linalg::pin_sequential_kernels();
    let exec = match cli.jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Execution::Sequential,
        _ => Execution::default(),
    };
    let job = || dispatch(cli, &config, &out, exec);
    match cli.jobs {
        #[cfg(feature = "parallel")]
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?
            .install(job),
        _ => job(),
    }
}

fn dispatch(cli: &Cli, config: &RunConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    match &cli.command {
        Command::Capacity => cmd_capacity(cli, config, out, exec),
        Command::Sweep { regime } => {
            let mut config = config.clone();
            if regime.is_some() {
                config.regime.clone_from(regime);
            }
            cmd_sweep(cli, &config, out, exec)
        }
        Command::Verify { suite } => cmd_verify(cli, config, out, *suite, exec),
        Command::Weyl { energies } => {
            let table = suites::weyl_table(energies)?;
            print!("{}", table.render());
            write(out, "weyl.csv", &table)
        }
    }
}

fn write(dir: &Path, name: &str, table: &Table) -> Result<(), CliError> {
    let path = dir.join(name);
    table.write_atomic(&path).map_err(|e| io_error(&path, e))
}

fn cmd_capacity(cli: &Cli, config: &RunConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    let setup = config.capacity_setup(cli.seed, cli.resolution)?;
    let pipeline = setup.spec.pipeline()?;
    let tx = setup.spec.array(setup.tx_count, Side::Tx)?;
    let rx = setup.spec.array(setup.rx_count, Side::Rx)?;
    let eval = pipeline.evaluate(&tx, &rx, &setup.routes, exec)?;
    let table = CapacityResult::table(&eval.results);
    write(out, "capacity.csv", &table)?;
    for r in &eval.results {
        println!("{:<12} {:.12e} bits", r.route.name(), r.bits);
    }
    let first = &eval.results[0];
    for r in &eval.results[1..] {
        if !agree(first.bits, r.bits, ROUTE_TOL) {
            return Err(CliError::Disagreement(format!(
                "routes {} and {} disagree: {} vs {} bits",
                first.route.name(),
                r.route.name(),
                first.bits,
                r.bits
            )));
        }
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, config: &RunConfig, out: &Path, exec: Execution) -> Result<(), CliError> {
    let spec = config.sweep_spec(cli.seed, cli.resolution)?;
    let result = run_sweep(&spec, exec)?;
    let name = spec.regime.name();
    write(out, &format!("sweep_{name}.csv"), &result.rows_table())?;
    write(out, &format!("sweep_{name}_plot.csv"), &result.plot_table())?;
    write(out, &format!("sweep_{name}_summary.csv"), &result.summary_table())?;
    println!("{}", result.summary_line());
    if result.pass() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{name} sweep has failing verdicts")))
    }
}

fn cmd_verify(cli: &Cli, config: &RunConfig, out: &Path, suite: Suite, exec: Execution) -> Result<(), CliError> {
    let seed = config.seed_or(cli.seed, 1);
    let mut failures = Vec::new();
    let run_all = suite == Suite::All;
    if run_all || suite == Suite::Weyl {
        let report = suites::weyl_suite()?;
        print!("{}", report.table.render());
        println!("{}", report.line);
        write(out, "verify_weyl.csv", &report.table)?;
        if !report.pass {
            failures.push("weyl");
        }
    }
    if run_all || suite == Suite::Inequalities {
        let report = suites::inequality_suite(seed, exec)?;
        println!("{}", report.line);
        write(out, "verify_inequalities.csv", &report.table)?;
        if !report.pass {
            failures.push("inequalities");
        }
    }
    if run_all || suite == Suite::Identity {
        let resolution = config.resolution_or(cli.resolution, suites::IDENTITY_RESOLUTION);
        let report = suites::identity_suite(seed, resolution, exec)?;
        print!("{}", report.table.render());
        println!("{}", report.line);
        write(out, "verify_identity.csv", &report.table)?;
        if !report.pass {
            failures.push("identity");
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("failing suites: {}", failures.join(", "))))
    }
}
