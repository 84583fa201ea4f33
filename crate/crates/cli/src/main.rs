//! `branchctl`: run the branching-ratio control scenarios from the command line.

mod plots;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use branchctl_core::config::{parse_document, Preset, Scenario};
use run::Kind;

#[derive(Parser, Debug)]
#[command(name = "branchctl", version, about = "Measurement-assisted branching-ratio control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one trajectory from state |1> and write its populations.
    Propagate(Common),
    /// Print the resonant spectrum at one instant, with residuals.
    Eigen {
        #[command(flatten)]
        common: Common,
        /// Time in units of T.
        #[arg(long, default_value_t = 0.5)]
        xi: f64,
    },
    /// Exact and two-state theory yields over a Gamma grid.
    SweepGamma(Common),
    /// Gamma sweep plus per-point theory deviations.
    TheoryVsExact(Common),
    /// Dephasing ensembles, one per Gamma of the study (or `--gamma`).
    Dephasing(Common),
    /// Large-Gamma branching ratio against the four-level reference.
    ZenoProbe(Common),
    /// Re-run the command recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        /// Output directory (default: the manifest's directory).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Built-in scenario: fig2a, fig2b or fig3.
    #[arg(long)]
    preset: Option<String>,
    /// Scenario file (TOML), layered over `--preset` when it names none.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement strength Gamma*T.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Master seed of the dephasing ensembles.
    #[arg(long)]
    seed: Option<u64>,
    /// Ensemble size.
    #[arg(short = 'n', long = "realizations")]
    realizations: Option<usize>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (default: <output root>/<scenario>/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "BRANCHCTL_OUT", default_value = "runs", hide_env_values = true)]
    out_root: PathBuf,
    /// Integrator tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Also write matplotlib scripts that plot the CSVs.
    #[arg(long)]
    plot: bool,
}

impl Common {
    fn scenario(&self, kind: Kind) -> Result<Scenario> {
        let base = self.preset.as_deref().map(Preset::from_name).transpose()?;
        let mut s = match (&self.config, base) {
            (Some(path), base) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                parse_document(&text)
                    .and_then(|d| d.resolve(base))
                    .with_context(|| format!("in {}", path.display()))?
            }
            (None, Some(p)) => p.scenario(),
            (None, None) => bail!("either --preset or --config is required"),
        };
        if let Some(g) = self.gamma {
            match kind {
                Kind::SweepGamma | Kind::TheoryVsExact | Kind::ZenoProbe => {
                    bail!("--gamma does not apply to {}", kind.name())
                }
                Kind::Dephasing => s.study_gammas = vec![g],
                _ => {}
            }
            s.config.gamma = g;
        }
        if let Some(seed) = self.seed {
            s.config.dephasing.master_seed = seed;
        }
        if let Some(n) = self.realizations {
            s.config.dephasing.n_realizations = n;
        }
        if let Some(t) = self.tol {
            s.config.tolerance = t;
        }
        s.validate()?;
        Ok(s)
    }

    fn out_dir(&self, s: &Scenario, kind: Kind) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| self.out_root.join(&s.name).join(kind.name()))
    }
}

fn init_pool(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be ≥ 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("cannot start worker pool")?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let (kind, common, xi) = match cli.command {
        Command::Propagate(c) => (Kind::Propagate, c, None),
        Command::Eigen { common, xi } => (Kind::Eigen, common, Some(xi)),
        Command::SweepGamma(c) => (Kind::SweepGamma, c, None),
        Command::TheoryVsExact(c) => (Kind::TheoryVsExact, c, None),
        Command::Dephasing(c) => (Kind::Dephasing, c, None),
        Command::ZenoProbe(c) => (Kind::ZenoProbe, c, None),
        Command::Rerun { manifest, out, jobs } => {
            init_pool(jobs)?;
            return run::rerun(&manifest, out);
        }
    };
    init_pool(common.jobs)?;
    let scenario = common.scenario(kind)?;
    let out = common.out_dir(&scenario, kind);
    run::execute(kind, &scenario, xi, common.plot, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
