//! Command-line front end. `main` only parses arguments and maps errors to
//! exit codes; everything else lives here so tests can drive it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use alkatherm_core::equilibrium::{solve_steady_state, thermal_neutral_current};
use alkatherm_core::lpv::build_table;
use alkatherm_core::scenario::{
    efficiency_report, run_scenario, tune_set_point, ControllerKind, Load, LoadSchedule,
    LoadSegment, ScenarioResult, TunedSetPoint,
};
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{self, ConfigError, Scenario};
use crate::{lpv_io, qp_dump, report};

#[derive(Debug, Parser)]
#[command(
    name = "alkatherm",
    version,
    about = "Thermal model and temperature controllers for alkaline electrolysers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in system: lab-5nm3 or mw-500nm3.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// pid, pid-i or mpc.
    #[arg(long, global = true)]
    pub controller: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replace the load schedule with a random one (fuzzing).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one closed-loop scenario and write its trajectory as CSV.
    Simulate,
    /// Run the scenario once per controller and tabulate the metrics.
    Compare,
    /// Equilibrium at the first load segment, or at --current-a.
    Steady {
        #[arg(long)]
        current_a: Option<f64>,
    },
    /// Load at which heat production balances dissipation with the valve closed.
    NeutralPoint,
    /// Build the gain-scheduled model table and write it as text.
    LpvTable,
    /// Highest set point that keeps the stack peak under the limit.
    TuneSetpoint {
        #[arg(long, default_value_t = 95.0)]
        limit_c: f64,
        /// Width of the bisection bracket below the limit, K.
        #[arg(long, default_value_t = 7.0)]
        span_k: f64,
        #[arg(long, default_value_t = 0.05)]
        tol_k: f64,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(#[from] alkatherm_core::error::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

/// Scenario selected by the global flags.
pub fn resolve(cli: &Cli) -> Result<Scenario, CliError> {
    let mut scenario = match (&cli.config, &cli.preset) {
        (Some(path), _) => config::load_config(path)?,
        (None, Some(name)) => {
            config::preset_scenario(config::parse_preset(name)?, ControllerKind::Pid)
        }
        (None, None) => {
            config::preset_scenario(alkatherm_core::params::Preset::Lab5Nm3, ControllerKind::Pid)
        }
    };
    if let Some(c) = &cli.controller {
        scenario.config.controller = config::parse_controller(c)?;
    }
    if let Some(seed) = cli.seed {
        scenario.config.schedule = random_schedule(seed, scenario.config.duration_s);
    }
    if cli.out.is_some() {
        scenario.output = cli.out.clone();
    }
    Ok(scenario)
}

/// Piecewise-constant load between 20 % and 100 %, changing every 20 to 90
/// minutes.
pub fn random_schedule(seed: u64, duration_s: f64) -> LoadSchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::new();
    let mut t = 0.0;
    while t < duration_s {
        segments.push(LoadSegment {
            start_s: t,
            load: Load::Fraction(rng.gen_range(0.2..=1.0)),
        });
        t += 60.0 * rng.gen_range(20..=90) as f64;
    }
    LoadSchedule::new(segments).expect("generated schedule is ordered")
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let scenario = resolve(cli)?;
    let cfg = &scenario.config;
    let out = scenario.output.as_deref();
    match &cli.command {
        Command::Simulate => {
            let r = run_scenario(cfg)?;
            match out {
                Some(path) => {
                    let f = fs::File::create(path).map_err(io_err(path))?;
                    report::write_rows(f, &r.rows).map_err(|e| csv_err(path, e))?;
                    write_failure(&r, path)?;
                    write!(stdout, "{}", report::summary(&r))
                        .map_err(io_err(Path::new("stdout")))?;
                }
                None => {
                    report::write_rows(&mut *stdout, &r.rows)
                        .map_err(|e| csv_err(Path::new("stdout"), e))?;
                    eprint!("{}", report::summary(&r));
                }
            }
        }
        Command::Compare => {
            let kinds: Vec<ControllerKind> = match &cli.controller {
                Some(_) => vec![cfg.controller],
                None => ControllerKind::ALL.to_vec(),
            };
            let results = in_parallel(&kinds, |k| run_scenario(&cfg.with_controller(k)))?;
            let mut text = String::new();
            for r in &results {
                text.push_str(&report::summary(r));
                text.push('\n');
            }
            write!(stdout, "{text}").map_err(io_err(Path::new("stdout")))?;
            if let Some(path) = out {
                let f = fs::File::create(path).map_err(io_err(path))?;
                report::write_comparison(f, &results).map_err(|e| csv_err(path, e))?;
            }
        }
        Command::Steady { current_a } => {
            let i = current_a.unwrap_or_else(|| cfg.schedule.current_at(0.0, &cfg.params));
            let ss = solve_steady_state(i, cfg.t_set_c, cfg.ambient, &cfg.params)?;
            let x = ss.state;
            writeln!(
                stdout,
                "current_a {i}\nt_stack_c {}\nt_sep_c {}\nt_c_c {}\nopening {}\nsaturated_low {}\nresidual_k_per_s {:e}",
                x.t_stack, x.t_sep, x.t_c, ss.opening, ss.saturated_low, ss.residual
            )
            .map_err(io_err(Path::new("stdout")))?;
        }
        Command::NeutralPoint => {
            let n = thermal_neutral_current(cfg.t_set_c, cfg.ambient, &cfg.params)?;
            writeln!(
                stdout,
                "current_a {}\nload_fraction {}",
                n.current_a, n.load_fraction
            )
            .map_err(io_err(Path::new("stdout")))?;
        }
        Command::LpvTable => {
            let t = build_table(
                &cfg.params,
                cfg.t_set_c,
                cfg.settings.lpv_points,
                cfg.settings.mpc.tau_s,
                cfg.ambient,
            )?;
            let text = lpv_io::export(&t);
            match out {
                Some(path) => fs::write(path, text).map_err(io_err(path))?,
                None => write!(stdout, "{text}").map_err(io_err(Path::new("stdout")))?,
            }
        }
        Command::TuneSetpoint {
            limit_c,
            span_k,
            tol_k,
        } => {
            let kinds: Vec<ControllerKind> = match &cli.controller {
                Some(_) => vec![cfg.controller],
                None => ControllerKind::ALL.to_vec(),
            };
            let tuned: Vec<TunedSetPoint> = in_parallel(&kinds, |k| {
                tune_set_point(&cfg.with_controller(k), *limit_c, *span_k, *tol_k)
            })?;
            let mut text = String::new();
            for (k, t) in kinds.iter().zip(&tuned) {
                text.push_str(&format!(
                    "{:6} t_set_c {:.3} peak_c {:.3} runs {}\n",
                    k.name(),
                    t.t_set_c,
                    t.peak_t_stack_c,
                    t.evaluations
                ));
            }
            let pos = |k| kinds.iter().position(|x| *x == k);
            if let (Some(a), Some(b)) = (pos(ControllerKind::Pid), pos(ControllerKind::Mpc)) {
                let rep = efficiency_report(
                    &tuned[a].result,
                    &tuned[b].result,
                    &cfg.schedule,
                    &cfg.params,
                )?;
                for (load, g) in rep.loads.iter().zip(&rep.gain_pp) {
                    text.push_str(&format!(
                        "mpc vs pid at {:.0}% load: {:+.3} pp\n",
                        100.0 * load,
                        g
                    ));
                }
            }
            write!(stdout, "{text}").map_err(io_err(Path::new("stdout")))?;
        }
    }
    Ok(())
}

/// Independent runs, one thread each.
fn in_parallel<T: Send>(
    kinds: &[ControllerKind],
    f: impl Fn(ControllerKind) -> alkatherm_core::error::Result<T> + Sync,
) -> Result<Vec<T>, CliError> {
    let results: Vec<_> = std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = kinds.iter().map(|&k| s.spawn(move || f(k))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    results
        .into_iter()
        .map(|r| r.map_err(CliError::from))
        .collect()
}

fn write_failure(r: &ScenarioResult, csv_path: &Path) -> Result<(), CliError> {
    if let Some((t, failed)) = &r.first_failure {
        let path = csv_path.with_extension("qp.txt");
        fs::write(&path, qp_dump::dump(failed, *t)).map_err(io_err(&path))?;
        log::warn!(
            "{} MPC solves held the last command; first failure dumped to {}",
            r.held_commands,
            path.display()
        );
    }
    Ok(())
}
