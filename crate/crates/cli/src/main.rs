use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wiretap_core::harness::{
    self, check_uniqueness, parse_spec, run_experiment, trial_channels, trial_topology, write_uniqueness, Algorithm,
    ExperimentSpec, RunOptions, UniquenessPoint, OUTPUT_DIR_ENV,
};
use wiretap_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wiretap",
    version,
    about = "Secrecy games with artificial noise in MIMO interference networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one topology and channel realization and write them as JSON.
    GenTopology(Common),
    /// Run every algorithm at the spec's base point, ignoring any sweep.
    Run(Common),
    /// Run every algorithm at each value of the spec's sweep axis.
    Sweep(Common),
    /// Test the sufficient condition for a unique equilibrium per trial.
    CheckUniqueness {
        #[command(flatten)]
        common: Common,
        /// Profile at which the Jacobian is evaluated.
        #[arg(long, value_enum, default_value = "init")]
        point: Point,
        /// Remove all link-to-link interference first.
        #[arg(long)]
        zero_cross: bool,
    },
    /// Recompute aggregates from a finished run directory.
    Report {
        /// Directory holding spec.json and trials.csv.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the spec's, then $WIRETAP_OUT, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Comma-separated algorithm names overriding the spec's list.
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<String>>,
    /// Write per-trial traces.
    #[arg(long, overrides_with = "no_trace")]
    trace: bool,
    #[arg(long, overrides_with = "trace")]
    no_trace: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Point {
    Init,
    Converged,
}

impl Common {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = parse_spec(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.base_seed = seed;
        }
        if let Some(names) = &self.algorithms {
            spec.algorithms = names
                .iter()
                .map(|n| n.trim().parse::<Algorithm>())
                .collect::<Result<_>>()?;
        }
        spec.validate()?;
        Ok(spec)
    }

    fn out_dir(&self, spec: &ExperimentSpec) -> PathBuf {
        self.out
            .clone()
            .or_else(|| spec.output_dir.as_ref().map(PathBuf::from))
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    fn options(&self, spec: &ExperimentSpec) -> RunOptions {
        RunOptions {
            out: self.out_dir(spec),
            jobs: self.jobs,
            trace: self.trace && !self.no_trace,
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn execute(cmd: Command) -> Result<Vec<PathBuf>> {
    match cmd {
        Command::GenTopology(c) => {
            let spec = c.load()?;
            let out = c.out_dir(&spec);
            fs::create_dir_all(&out).map_err(|source| Error::Io {
                path: out.display().to_string(),
                source,
            })?;
            let cfg = spec.network.to_config();
            let topo = trial_topology(&cfg, spec.base_seed, 0)?;
            let channels = trial_channels(&cfg, spec.base_seed, 0, 0)?;
            let (tp, cp) = (out.join("topology.json"), out.join("channels.json"));
            write_json(&tp, &topo)?;
            write_json(&cp, &channels)?;
            Ok(vec![tp, cp])
        }
        Command::Run(c) => {
            let spec = ExperimentSpec {
                sweep: None,
                ..c.load()?
            };
            Ok(run_experiment(&spec, &c.options(&spec))?.files)
        }
        Command::Sweep(c) => {
            let spec = c.load()?;
            if spec.sweep.is_none() {
                return Err(Error::config("sweep", "the sweep verb needs a sweep axis in the spec"));
            }
            Ok(run_experiment(&spec, &c.options(&spec))?.files)
        }
        Command::CheckUniqueness {
            common,
            point,
            zero_cross,
        } => {
            let spec = common.load()?;
            let point = match point {
                Point::Init => UniquenessPoint::Init,
                Point::Converged => UniquenessPoint::Converged,
            };
            let rows = check_uniqueness(&spec, point, zero_cross, common.jobs)?;
            for r in &rows {
                let value = r.sweep_value.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
                println!("{value}\tsatisfied {:.3} of {}", r.satisfied_fraction, r.trials);
            }
            Ok(vec![write_uniqueness(&rows, &common.out_dir(&spec))?])
        }
        Command::Report { dir } => {
            let rows = harness::report(&dir)?;
            let path = dir.join("report.csv");
            fs::write(&path, harness::aggregates_to_csv(&rows)).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            Ok(vec![path])
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
