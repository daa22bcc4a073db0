use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsc_core::error::{Error, Result};
use nsc_core::harness::{
    run_batch, run_experiment, run_filter_experiment, run_spectral_experiment, run_sysid_experiment, scenario_presets,
    seed_sweep, ComparatorKind, ControllerKind, Experiment, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "nsc", version, about = "Nonstochastic control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the configured controller without a comparator.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override `[controller] kind`.
        #[arg(long)]
        controller: Option<String>,
    },
    /// Run the controller and report regret against the best policy in hindsight.
    Regret {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        controller: Option<String>,
        /// Run this many consecutive seeds in parallel, one subdirectory each.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
    },
    /// Identify the system by the method of moments, then control it.
    Sysid {
        #[command(flatten)]
        common: Common,
    },
    /// Kalman filter vs online linear predictor on noisy outputs.
    Filter {
        #[command(flatten)]
        common: Common,
    },
    /// Online spectral filtering on noisy outputs.
    Spectral {
        #[command(flatten)]
        common: Common,
    },
    /// List the scenario presets.
    Scenarios,
}

#[derive(Args)]
struct Common {
    /// Experiment config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to run when no config is given.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: `[run] out`, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    horizon: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(ScenarioConfig, PathBuf)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::from_file(path)?,
            (None, Some(name)) => ScenarioConfig::preset(name, 1000, 0),
            (None, None) => return Err(Error::config("pass --config or --preset")),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(h) = self.horizon {
            if h == 0 {
                return Err(Error::config("--horizon must be positive"));
            }
            cfg.horizon = h;
        }
        // Fail early on unknown presets and inconsistent dimensions.
        cfg.scenario().map_err(|e| e.context(cfg.label()))?;
        let out = self.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn set_controller(cfg: &mut ScenarioConfig, kind: &Option<String>) -> Result<()> {
    if let Some(k) = kind {
        cfg.controller.kind = ControllerKind::parse(k)?;
    }
    Ok(())
}

fn report(exp: &Experiment, dir: &Path) -> Result<()> {
    exp.write(dir)?;
    let s = exp.report.summary();
    println!(
        "{} {} seed {} T {}: total_cost {:.6e} comparator ({}) {:.6e} avg_regret {:.6e} -> {}",
        s.scenario,
        s.controller,
        s.seed,
        s.horizon,
        s.total_cost,
        s.comparator,
        s.comparator_cost,
        s.avg_regret,
        dir.display()
    );
    if let Some(w) = &s.comparator_warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, controller } => {
            let (mut cfg, out) = common.load()?;
            set_controller(&mut cfg, &controller)?;
            cfg.controller.comparator = Some(ComparatorKind::None);
            report(&run_experiment(&cfg)?, &out)
        }
        Command::Regret { common, controller, seeds } => {
            let (mut cfg, out) = common.load()?;
            set_controller(&mut cfg, &controller)?;
            if seeds <= 1 {
                return report(&run_experiment(&cfg)?, &out);
            }
            let configs = seed_sweep(&cfg, cfg.seed, seeds);
            let mut first_err = None;
            for (c, res) in configs.iter().zip(run_batch(&configs)) {
                let dir = out.join(format!("seed-{}", c.seed));
                match res.and_then(|exp| report(&exp, &dir)) {
                    Ok(()) => {}
                    Err(e) => {
                        eprintln!("error: seed {}: {e}", c.seed);
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Sysid { common } => {
            let (cfg, out) = common.load()?;
            let exp = run_sysid_experiment(&cfg)?;
            exp.write(&out)?;
            print!("{}", exp.identification);
            let s = exp.report.summary();
            println!("avg_regret {:.6e} vs {} -> {}", s.avg_regret, s.comparator, out.display());
            Ok(())
        }
        Command::Filter { common } => {
            let (cfg, out) = common.load()?;
            let exp = run_filter_experiment(&cfg)?;
            exp.write(&out)?;
            let s = &exp.summary;
            println!(
                "{} seed {} T {}: kalman_mse {:.6e} linear_mse {:.6e} offline_linear_mse {:.6e} -> {}",
                s.scenario,
                s.seed,
                s.horizon,
                s.kalman_mse,
                s.linear_mse,
                s.offline_linear_mse,
                out.display()
            );
            Ok(())
        }
        Command::Spectral { common } => {
            let (cfg, out) = common.load()?;
            let exp = run_spectral_experiment(&cfg)?;
            exp.write(&out)?;
            let s = &exp.summary;
            println!(
                "{} seed {} T {}: {} filters, mse {:.6e}, last quarter {:.6e} -> {}",
                s.scenario,
                s.seed,
                s.horizon,
                s.filters,
                s.mse,
                s.last_quarter_mse,
                out.display()
            );
            Ok(())
        }
        Command::Scenarios => {
            for sc in scenario_presets()? {
                let observed = if sc.observed.is_some() { "observed" } else { "full state" };
                println!(
                    "{:<20} dx={} du={} {:<10} {}",
                    sc.name,
                    sc.system.dx(),
                    sc.system.du(),
                    observed,
                    sc.summary
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
