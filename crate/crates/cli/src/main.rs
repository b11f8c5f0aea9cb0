//! `mploc` command-line driver.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success, every built-in check passed |
//! | 1 | the run completed but a built-in check failed (artifacts are still written) |
//! | 2 | command-line usage error |
//! | 3 | configuration error: missing or unreadable config file, malformed or invalid keys, bad manifest |
//! | 4 | infeasible geometry: cube placement, dimension cap, or a simulation cube too small for its boundary check |
//! | 5 | I/O error while writing outputs |
//! | 6 | numerical failure (resonant energy, missing field site, internal invariant) |

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mploc::config::{ExperimentConfig, FlatConfig};
use mploc::descent;
use mploc::error::Error;
use mploc::experiments::{
    decay_experiment, ds_experiment, dynamics_experiment, gri_selftest, trace_growth_experiment,
    wegner_experiment, Artifact, Artifacts,
};
use mploc::io::{unix_now, OutputDir, RunManifest, CODE_VERSION};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 3;
const EXIT_GEOMETRY: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_NUMERICAL: u8 = 6;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "MPLOC_OUT";

#[derive(Parser)]
#[command(
    name = "mploc",
    version,
    about = "Monte-Carlo experiments for the multi-particle Anderson model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat TOML config file; unspecified keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per estimate.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory [env: MPLOC_OUT]; overrides the config's `output` key.
    #[arg(long, value_name = "DIR", env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set g=4.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Two-volume eigenvalue concentration against its bound.
    Wegner {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        l1: Option<u32>,
        #[arg(long)]
        l2: Option<u32>,
        /// Symmetrized distance between the cube centers.
        #[arg(long)]
        separation: Option<i64>,
    },
    /// Probability that two distant cubes are singular at a common energy.
    Ds {
        #[command(flatten)]
        common: Common,
        /// Scale index.
        #[arg(long)]
        k: Option<usize>,
        /// Particles per cube (defaults to the model's particle count).
        #[arg(long)]
        n: Option<usize>,
        /// Disorder strengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        g: Option<Vec<f64>>,
        /// Also tabulate the induction events.
        #[arg(long)]
        events: bool,
    },
    /// Growth of the spectral projector trace with the cube size.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        radii: Option<Vec<u32>>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
    },
    /// Eigenfunction centers and fitted decay rates.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<u32>,
    },
    /// Moments of the eigenfunction correlator.
    Dynamics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: Option<u32>,
        /// Moment exponent.
        #[arg(long)]
        s: Option<f64>,
        /// Radius of the initial set K around the origin.
        #[arg(long)]
        k_radius: Option<u32>,
        /// `indicator` of the energy interval, or `zero`.
        #[arg(long)]
        eta: Option<String>,
    },
    /// Radial-descent bound on generated subharmonic functions.
    DescentSelftest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Resolvent identities on random geometries.
    GriSelftest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        geometries: Option<usize>,
    },
    /// Re-run a command from its manifest.
    Replay {
        /// `<command>.manifest.json` written by an earlier run.
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; defaults to the manifest's.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::InvalidInput(_) | Error::Parse { .. } | Error::Json(_) => {
                EXIT_CONFIG
            }
            Error::Geometry(_) | Error::DimensionCap { .. } | Error::BoundaryWeight { .. } => {
                EXIT_GEOMETRY
            }
            Error::Io(_) => EXIT_IO,
            Error::ResonantEnergy { .. } | Error::MissingSite(_) | Error::Invariant(_) => {
                EXIT_NUMERICAL
            }
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

fn float_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| format!("{x:?}")).collect();
    format!("[{}]", items.join(", "))
}

/// Config text and overrides for one invocation, flags last so they win.
fn resolve(common: &Common, specific: Vec<String>) -> Result<ExperimentConfig, Failure> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: format!("cannot read config file {}: {e}", path.display()),
        })?,
        None => String::new(),
    };
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(trials) = common.trials {
        overrides.push(format!("trials={trials}"));
    }
    if let Some(workers) = common.workers {
        overrides.push(format!("workers={workers}"));
    }
    if let Some(out) = &common.out {
        overrides.push(format!("output={}", toml_string(&out.to_string_lossy())));
    }
    overrides.extend(specific);
    let flat = FlatConfig::parse(&text, &overrides)?;
    Ok(ExperimentConfig::from_flat(flat)?)
}

fn opt<T: std::fmt::Display>(key: &str, v: Option<T>) -> Option<String> {
    v.map(|v| format!("{key}={v}"))
}

/// Run `command` under `cfg` and render its artifacts and check failures.
fn execute(command: &str, cfg: &ExperimentConfig) -> Result<(Vec<Artifact>, Vec<String>), Failure> {
    fn render<A: Artifacts>(
        a: A,
        cfg: &ExperimentConfig,
    ) -> Result<(Vec<Artifact>, Vec<String>), Failure> {
        Ok((a.artifacts(cfg)?, a.failures()))
    }
    match command {
        "wegner" => render(
            wegner_experiment(cfg, cfg.wegner.l1, cfg.wegner.l2, cfg.wegner.separation)?,
            cfg,
        ),
        "ds" => render(ds_experiment(cfg, cfg.ds.k, cfg.ds.n)?, cfg),
        "trace" => render(
            trace_growth_experiment(cfg, cfg.trace.kappa, cfg.trace.c)?,
            cfg,
        ),
        "decay" => render(decay_experiment(cfg)?, cfg),
        "dynamics" => {
            let d = &cfg.dynamics;
            render(
                dynamics_experiment(cfg, d.radius, d.k_radius, &d.eta, d.s)?,
                cfg,
            )
        }
        "descent-selftest" => render(
            descent::selftest(cfg.master_seed, cfg.descent_instances)?,
            cfg,
        ),
        "gri-selftest" => render(
            gri_selftest(cfg.master_seed, cfg.gri_geometries, cfg.workers)?,
            cfg,
        ),
        other => Err(Failure {
            code: EXIT_CONFIG,
            message: format!("unknown command {other:?} in manifest"),
        }),
    }
}

fn run(command: &str, cfg: &ExperimentConfig) -> Result<bool, Failure> {
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let started = unix_now();
    let (artifacts, failures) = execute(command, cfg)?;
    let mut dir = OutputDir::create(&cfg.flat().output)?;
    for a in &artifacts {
        dir.write(&a.name, &a.contents)?;
    }
    let manifest = RunManifest {
        command: command.to_string(),
        code_version: CODE_VERSION.to_string(),
        config: cfg.flat().to_toml()?,
        master_seed: cfg.master_seed,
        workers: cfg.workers,
        started_unix: started,
        finished_unix: unix_now(),
        outputs: dir.written().to_vec(),
    };
    let manifest_path = dir.root().join(format!("{command}.manifest.json"));
    std::fs::write(&manifest_path, manifest.to_json()? + "\n").map_err(Error::from)?;
    println!(
        "{command}: wrote {} files and {}",
        artifacts.len(),
        manifest_path.display()
    );
    for f in &failures {
        eprintln!("check failed: {f}");
    }
    Ok(failures.is_empty())
}

fn replay(path: &Path, workers: Option<usize>, out: Option<&Path>) -> Result<bool, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("cannot read manifest {}: {e}", path.display()),
    })?;
    let manifest = RunManifest::from_json(&text)?;
    let mut overrides = Vec::new();
    if let Some(w) = workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(out) = out {
        overrides.push(format!("output={}", toml_string(&out.to_string_lossy())));
    }
    let cfg = ExperimentConfig::from_flat(FlatConfig::parse(&manifest.config, &overrides)?)?;
    if cfg.master_seed != manifest.master_seed {
        return Err(Failure {
            code: EXIT_CONFIG,
            message: "manifest seed disagrees with its config".into(),
        });
    }
    run(&manifest.command, &cfg)
}

fn dispatch(cli: Cli) -> Result<bool, Failure> {
    let (name, common, specific): (&str, Common, Vec<Option<String>>) = match cli.command {
        Command::Wegner {
            common,
            l1,
            l2,
            separation,
        } => (
            "wegner",
            common,
            vec![
                opt("wegner_l1", l1),
                opt("wegner_l2", l2),
                opt("wegner_separation", separation),
            ],
        ),
        Command::Ds {
            common,
            k,
            n,
            g,
            events,
        } => (
            "ds",
            common,
            vec![
                opt("ds_k", k),
                opt("ds_n", n),
                g.map(|g| format!("g_values={}", float_list(&g))),
                events.then(|| "ds_events=true".to_string()),
            ],
        ),
        Command::Trace {
            common,
            radii,
            kappa,
            c,
        } => (
            "trace",
            common,
            vec![
                radii.map(|r| format!("trace_radii={r:?}")),
                kappa.map(|k| format!("trace_kappa={k:?}")),
                c.map(|c| format!("trace_c={c:?}")),
            ],
        ),
        Command::Decay { common, radius } => ("decay", common, vec![opt("decay_radius", radius)]),
        Command::Dynamics {
            common,
            radius,
            s,
            k_radius,
            eta,
        } => (
            "dynamics",
            common,
            vec![
                opt("dynamics_radius", radius),
                s.map(|s| format!("dynamics_s={s:?}")),
                opt("dynamics_k_radius", k_radius),
                eta.map(|e| format!("dynamics_eta={}", toml_string(&e))),
            ],
        ),
        Command::DescentSelftest { common, instances } => (
            "descent-selftest",
            common,
            vec![opt("descent_instances", instances)],
        ),
        Command::GriSelftest { common, geometries } => (
            "gri-selftest",
            common,
            vec![opt("gri_geometries", geometries)],
        ),
        Command::Replay {
            manifest,
            workers,
            out,
        } => return replay(&manifest, workers, out.as_deref()),
    };
    let cfg = resolve(&common, specific.into_iter().flatten().collect())?;
    run(name, &cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
