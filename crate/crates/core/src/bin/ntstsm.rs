use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ntstsm::control::ControllerSpec;
use ntstsm::gainlab::{self, ReachingStart, RegionGrid};
use ntstsm::metrics::{evaluate, render_table, RunLog};
use ntstsm::par::Execution;
use ntstsm::simlab::{self, ExperimentConfig, Preset};
use ntstsm::trajgen::{write_samples_csv, Trajectory};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "ntstsm",
    version,
    about = "Adaptive terminal super-twisting control: simulation, metrics and gain regions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment and write its run log as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the metrics report as JSON.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Run every `*.toml` config in a directory and tabulate the metrics.
    Compare {
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        window: Window,
        /// Give every run the same seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sequential: bool,
    },
    /// Sweep the stability ellipse over a grid of (Ω₁, Ω₂) for several Γ.
    GainRegion {
        #[arg(long, default_value_t = 6.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.9)]
        theta: f64,
        /// Comma-separated surface slopes Γ.
        #[arg(long = "big-gamma", value_delimiter = ',', default_values_t = vec![0.5, 0.25])]
        big_gamma: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        l: f64,
        #[arg(long, default_value_t = 20.0)]
        omega1_max: f64,
        #[arg(long, default_value_t = 5.0)]
        omega2_max: f64,
        #[arg(long, default_value_t = 200)]
        n1: usize,
        #[arg(long, default_value_t = 200)]
        n2: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sequential: bool,
    },
    /// Stability report for a config's sliding and adaptive parameters.
    Stability {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest expected |ė| for Γ_max.
        #[arg(long, default_value_t = 1.0)]
        v_max: f64,
        #[arg(long, default_value_t = 0.0)]
        s0: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics of a run log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[command(flatten)]
        window: Window,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print a table instead of JSON.
        #[arg(long)]
        table: bool,
    },
    /// Print a built-in experiment config as TOML.
    Preset {
        /// desk, desk-disturbed, desk-noisy or sinusoid.
        name: String,
        /// Controller kind, e.g. ntstsm, stsm, pd-med.
        #[arg(long, default_value = "ntstsm")]
        controller: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate a config's desired trajectory.
    Trajectory {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Window {
    /// Start of the metric window (s).
    #[arg(long)]
    from: Option<f64>,
    /// End of the metric window (s).
    #[arg(long)]
    to: Option<f64>,
}

impl Window {
    fn get(&self) -> Option<(f64, f64)> {
        match (self.from, self.to) {
            (None, None) => None,
            (a, b) => Some((a.unwrap_or(f64::NEG_INFINITY), b.unwrap_or(f64::INFINITY))),
        }
    }
}

fn exec(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v)?;
    match path {
        Some(p) => std::fs::write(p, s + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => println!("{s}"),
    }
    Ok(())
}

fn parse_controller(s: &str) -> Result<ControllerSpec> {
    let spec: ControllerSpec = toml::from_str::<toml::Table>(&format!("kind = {s:?}"))?
        .try_into()
        .with_context(|| format!("unknown controller {s:?}"))?;
    Ok(spec)
}

fn load_configs(dir: &Path) -> Result<Vec<ExperimentConfig>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .toml configs in {}", dir.display());
    }
    paths.iter().map(|p| ExperimentConfig::load(p).map_err(Into::into)).collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate { config, out, seed, metrics_out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let log = simlab::run_experiment(&cfg)?;
            log.write_csv(create(&out)?)?;
            let m = evaluate(&log)?;
            eprintln!("{}: {} ticks -> {}", cfg.name, log.len(), out.display());
            if let Some(p) = metrics_out {
                write_json(Some(&p), &m)?;
            }
        }
        Cmd::Compare { configs, out, window, seed, sequential } => {
            let mut cfgs = load_configs(&configs)?;
            if let Some(s) = seed {
                cfgs.iter_mut().for_each(|c| c.seed = s);
            }
            let rows = simlab::compare(&cfgs, window.get(), exec(sequential));
            let ok: Vec<_> = rows.iter().filter_map(|r| r.metrics.clone()).collect();
            eprint!("{}", render_table(&ok));
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("{} failed: {}", r.name, r.error.as_deref().unwrap_or_default());
            }
            write_json(Some(&out), &rows)?;
        }
        Cmd::GainRegion { gamma, theta, big_gamma, l, omega1_max, omega2_max, n1, n2, out, sequential } => {
            if gamma * theta <= 1.0 {
                eprintln!("warning: gamma*theta = {} <= 1, the region may be empty", gamma * theta);
            }
            let grid = RegionGrid { omega1_max, omega2_max, n1, n2 };
            let pts = gainlab::sweep_region(gamma, theta, l, &big_gamma, &grid, exec(sequential));
            gainlab::write_region_csv(create(&out)?, &pts)?;
            for g in &big_gamma {
                let n = pts.iter().filter(|p| p.big_gamma == *g && p.inside).count();
                eprintln!("Gamma = {g}: {n} of {} grid points inside", n1 * n2);
            }
        }
        Cmd::Stability { config, v_max, s0, out } => {
            let (sp, ap) = match config {
                Some(p) => {
                    let c = ExperimentConfig::load(p)?;
                    (c.sliding, c.adaptive)
                }
                None => Default::default(),
            };
            let rep = gainlab::stability_report(&sp, &ap, &ReachingStart { s0, nu0: 0.0, v_max })?;
            write_json(out.as_deref(), &rep)?;
        }
        Cmd::Metrics { log, window, out, table } => {
            let l = RunLog::load(&log)?;
            let l = match window.get() {
                Some((a, b)) => l.window(a, b),
                None => l,
            };
            let m = evaluate(&l)?;
            if table {
                print!("{}", render_table(std::slice::from_ref(&m)));
                if let Some(p) = out {
                    write_json(Some(&p), &m)?;
                }
            } else {
                write_json(out.as_deref(), &m)?;
            }
        }
        Cmd::Preset { name, controller, out } => {
            let c = Preset::from_name(&name)?.config(parse_controller(&controller)?);
            let s = c.to_toml_string()?;
            match out {
                Some(p) => std::fs::write(&p, s)?,
                None => print!("{s}"),
            }
        }
        Cmd::Trajectory { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let setup = simlab::prepare(&cfg)?;
            let traj: &Trajectory = &setup.traj;
            let mut w = create(&out)?;
            write_samples_csv(&mut w, &traj.tabulate(cfg.dt))?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
