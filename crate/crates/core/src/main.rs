use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cgmc::corrections::CorrectedModel;
use cgmc::estimators::{a_posteriori_exact, a_posteriori_mc, scheme_entropy_exact};
use cgmc::harness::bench::write_bench_csv;
use cgmc::harness::sweep::write_csv;
use cgmc::harness::verify::{scaling_fits, scaling_grid, write_grid_csv, write_reports};
use cgmc::harness::{loop_area, run_bench, run_suite, run_sweep, ExperimentConfig, Suite};
use cgmc::oracles::MICRO_ENUMERATION_CAP;
use cgmc::sampler::{run_chain, Scheme, System};
use cgmc::Error;

#[derive(Parser, Debug)]
#[command(
    name = "cgmc",
    version,
    about = "Coarse-grained Monte Carlo for Ising-type lattice systems"
)]
struct Cli {
    /// Experiment file with [lattice], [kernel], [coarse], [chain] and [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the chain seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for branch and grid parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Continuation sweep over the field grid, up and down branches.
    Sweep,
    /// Run self-checks; all suites when none is named.
    Verify { suites: Vec<String> },
    /// Kernel-table access counts per energy evaluation and per sweep.
    Bench,
    /// Exact relative entropy of the coarse schemes by enumeration.
    Entropy {
        /// Evaluate the fixed scaling grid instead of the configured point.
        #[arg(long)]
        grid: bool,
    },
    /// A posteriori error estimate from a cg0 chain.
    Aposteriori {
        /// Field value of the run.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        field: f64,
    },
}

enum Failure {
    Validation(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Validation(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(e.into())
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    match &cli.command {
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let records = run_sweep(&cfg)?;
            let mut out = output(&cli.out)?;
            write_csv(&records, &mut out)?;
            out.flush()?;
            for &scheme in &cfg.schemes {
                if let Ok(a) = loop_area(&records, scheme, cfg.seed) {
                    eprintln!(
                        "{} loop area {:.6} ± {:.6} (95% CI [{:.6}, {:.6}])",
                        scheme.name(),
                        a.area,
                        a.stderr,
                        a.ci_low,
                        a.ci_high
                    );
                }
            }
        }
        Command::Verify { suites } => {
            let chosen = if suites.is_empty() {
                Suite::ALL.to_vec()
            } else {
                suites
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<Vec<Suite>, Error>>()?
            };
            let reports = chosen
                .into_iter()
                .map(run_suite)
                .collect::<Result<Vec<_>, Error>>()?;
            let mut out = output(&cli.out)?;
            write_reports(&reports, &mut out)?;
            out.flush()?;
            if !reports.iter().all(|r| r.passed()) {
                return Err(Failure::Verification);
            }
        }
        Command::Bench => {
            let cfg = load_config(cli)?;
            let rows = run_bench(&cfg)?;
            let mut out = output(&cli.out)?;
            write_bench_csv(&cfg, &rows, &mut out)?;
            out.flush()?;
        }
        Command::Entropy { grid } => {
            let cfg = load_config(cli)?;
            let mut out = output(&cli.out)?;
            if *grid {
                let points = scaling_grid(cfg.beta_mode)?;
                write_grid_csv(&points, &mut out)?;
                let fits = scaling_fits(&points)?;
                for (name, f) in [
                    ("r_cg0", fits.r_cg0),
                    ("r_cg2", fits.r_cg2),
                    ("sup_cg0", fits.sup_cg0),
                    ("sup_cg2", fits.sup_cg2),
                ] {
                    let (lo, hi) = f.interval(1.96);
                    eprintln!("slope {name}: {:.3} (95% CI [{lo:.3}, {hi:.3}])", f.slope);
                }
            } else {
                if cfg.n_sites > MICRO_ENUMERATION_CAP {
                    return Err(Error::InvalidParameter(format!(
                        "exact entropy needs n_sites ≤ {MICRO_ENUMERATION_CAP}"
                    ))
                    .into());
                }
                let model = cfg.micro_model(0.0)?;
                writeln!(
                    out,
                    "scheme,n_sites,q,range,beta,epsilon,r_per_site,log_partition_term,energy_term"
                )?;
                for &scheme in cfg.schemes.iter().filter(|s| **s != Scheme::Micro) {
                    let r = scheme_entropy_exact(&model, cfg.q, cfg.beta, scheme, cfg.beta_mode)?;
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{:e},{:e},{:e}",
                        scheme.name(),
                        cfg.n_sites,
                        cfg.q,
                        cfg.range,
                        cfg.beta,
                        r.epsilon.unwrap_or(f64::NAN),
                        r.r_per_site,
                        r.log_partition_term,
                        r.energy_term
                    )?;
                }
            }
            out.flush()?;
        }
        Command::Aposteriori { field } => {
            let cfg = load_config(cli)?;
            let model = cfg.micro_model(*field)?;
            let cm = CorrectedModel::from_micro(&model, cfg.q, cfg.beta, cfg.beta_mode)?;
            let mut spec = cfg.chain_spec(0);
            spec.keep_snapshots = true;
            let batch = run_chain(&System::Cg0(cm.coarse().clone()), &spec, None)?;
            let mc = a_posteriori_mc(&batch, &cm)?;
            let mut out = output(&cli.out)?;
            writeln!(out, "method,r_total,stderr_total,r_per_site")?;
            writeln!(
                out,
                "{},{:e},{:e},{:e}",
                mc.method.name(),
                mc.total(),
                mc.total_stderr(),
                mc.r_per_site
            )?;
            if let Ok(ex) = a_posteriori_exact(&cm) {
                writeln!(
                    out,
                    "{},{:e},0,{:e}",
                    ex.method.name(),
                    ex.total(),
                    ex.r_per_site
                )?;
            }
            if cfg.n_sites <= MICRO_ENUMERATION_CAP {
                let r0 = scheme_entropy_exact(&model, cfg.q, cfg.beta, Scheme::Cg0, cfg.beta_mode)?;
                writeln!(
                    out,
                    "{},{:e},0,{:e}",
                    r0.method.name(),
                    r0.total(),
                    r0.r_per_site
                )?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(2)
        }
    }
}
