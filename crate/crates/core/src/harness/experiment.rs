use std::path::{Path, PathBuf};
use std::time::Instant;

use super::comparator::{best_dac_in_hindsight, best_drc_in_hindsight, best_linear_in_hindsight, default_stabilizer, OptConfig};
use super::config::{ComparatorKind, ControllerKind, ScenarioConfig};
use super::presets::Scenario;
use super::report::{write_atomic, RegretReport};
use super::step::{gpc_step, grc_step};
use crate::error::{Error, Result};
use crate::lds::{simulate, CostFunction, FnController, LinearSystem, SimulationConfig, Trajectory, ZeroController};
use crate::linalg::{fmt_f64, Matrix, Vector};
use crate::online::{Gpc, Grc, Telemetry};
use crate::policies::{LinearPolicy, Policy, Stabilizer};
use crate::sysid::{identify_then_control, IdentifiedSystem, PipelineConfig, SimulatedPlant};

#[derive(Clone, Debug)]
pub struct Experiment {
    pub report: RegretReport,
    pub trajectory: Trajectory,
    /// Online controllers only.
    pub telemetry: Vec<Telemetry>,
    /// Parameters of the comparator policy (DAC/DRC blocks, or the gain).
    pub comparator_params: Vec<Matrix>,
}

impl Experiment {
    /// Writes the report files plus `trajectory.csv` and, for online
    /// controllers, `telemetry.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = self.report.write(dir)?;
        let path = dir.join("trajectory.csv");
        write_atomic(&path, trajectory_csv(&self.trajectory)?.as_bytes())?;
        files.push(path);
        if !self.telemetry.is_empty() {
            let path = dir.join("telemetry.csv");
            write_atomic(&path, telemetry_csv(&self.telemetry)?.as_bytes())?;
            files.push(path);
        }
        Ok(files)
    }
}

fn csv_string(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(&header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

/// `t, cost, x_0.., u_0..` with `t` counted from 1 like the regret CSV.
pub fn trajectory_csv(traj: &Trajectory) -> Result<String> {
    let dx = traj.states.first().map_or(0, |x| x.len());
    let du = traj.controls.first().map_or(0, |u| u.len());
    let mut header = vec!["t".to_string(), "cost".to_string()];
    header.extend((0..dx).map(|i| format!("x{i}")));
    header.extend((0..du).map(|i| format!("u{i}")));
    let rows = (0..traj.horizon()).map(|t| {
        let mut row = vec![(t + 1).to_string(), fmt_f64(traj.costs[t])];
        row.extend(traj.states[t].iter().map(|v| fmt_f64(*v)));
        row.extend(traj.controls[t].iter().map(|v| fmt_f64(*v)));
        row
    });
    csv_string(header, rows)
}

pub fn telemetry_csv(rows: &[Telemetry]) -> Result<String> {
    let header = ["t", "cost", "loss", "m_norm", "w_norm", "grad_norm", "step_norm", "eta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = rows.iter().map(|r| {
        let mut row = vec![(r.t + 1).to_string()];
        row.extend([r.cost, r.loss, r.m_norm, r.w_norm, r.grad_norm, r.step_norm, r.eta].iter().map(|v| fmt_f64(*v)));
        row
    });
    csv_string(header, rows)
}

/// Runs the configured controller on the scenario, computes the comparator
/// on the realized perturbations and assembles the report. Errors carry the
/// config path (and the step index when they happen mid-run).
pub fn run_experiment(config: &ScenarioConfig) -> Result<Experiment> {
    run(config).map_err(|e| e.context(config.label()))
}

fn observed(sc: &Scenario) -> Result<(LinearSystem, CostFunction)> {
    sc.observed
        .clone()
        .ok_or_else(|| Error::config(format!("scenario `{}` has no observed output; set [system] c", sc.name)))
}

fn run(config: &ScenarioConfig) -> Result<Experiment> {
    let started = Instant::now();
    let sc = config.scenario()?;
    let spec = &config.controller;
    let horizon = config.horizon;
    let perturbation = config.perturbation_for(&sc);
    let mut sim = SimulationConfig::new(horizon, config.seed).with_x0(sc.x0.clone());
    let mut telemetry = Vec::new();
    let mut stabilizer = None;

    let traj = match spec.kind {
        ControllerKind::Zero => simulate(&sc.system, &mut ZeroController, &perturbation, &sc.cost, &sim)?,
        ControllerKind::Linear => {
            let k = spec.gain.clone().ok_or_else(|| Error::config("linear controller needs a gain"))?;
            let mut policy = Policy::Linear(LinearPolicy::new(k));
            simulate(&sc.system, &mut policy, &perturbation, &sc.cost, &sim)?
        }
        ControllerKind::Lqr => {
            let stab = default_stabilizer(&sc.system, &sc.cost, horizon)?;
            let gains = stab.clone();
            let mut ctrl = FnController(move |ctx: &crate::lds::StepContext<'_>| gains.gain(ctx.t) * ctx.state());
            stabilizer = Some(stab);
            simulate(&sc.system, &mut ctrl, &perturbation, &sc.cost, &sim)?
        }
        ControllerKind::Gpc => {
            let stab = match &spec.gain {
                Some(k) => Stabilizer::Fixed(k.clone()),
                None => default_stabilizer(&sc.system, &sc.cost, horizon)?,
            };
            let schedule = match spec.schedule {
                Some(s) => s,
                None => gpc_step(&sc.system, &stab, &sc.cost, &perturbation, spec.window, &spec.projection)?,
            };
            let mut gpc = Gpc::new(sc.system.clone(), stab.clone(), sc.cost.clone(), &spec.online(schedule))?;
            stabilizer = Some(stab);
            let traj = simulate(&sc.system, &mut gpc, &perturbation, &sc.cost, &sim)?;
            telemetry = gpc.telemetry().to_vec();
            traj
        }
        ControllerKind::Grc => {
            let (sys, cost) = observed(&sc)?;
            let schedule = match spec.schedule {
                Some(s) => s,
                None => grc_step(&sys, &cost, &perturbation, spec.window, &spec.projection)?,
            };
            let mut grc = Grc::new(sys.clone(), cost.clone(), &spec.online(schedule))?;
            sim = sim.on_observation();
            let traj = simulate(&sys, &mut grc, &perturbation, &cost, &sim)?;
            telemetry = grc.telemetry().to_vec();
            traj
        }
    };

    let ws = &traj.perturbations;
    let opt = OptConfig::default();
    let kind = spec.comparator();
    let (comparator_costs, params, iterations, grad_norm, warning) = match kind {
        ComparatorKind::None => (vec![0.0; horizon], Vec::new(), 0, 0.0, None),
        ComparatorKind::Dac => {
            if spec.kind == ControllerKind::Grc {
                return Err(Error::config("a DAC comparator needs a state-feedback controller; use drc with grc"));
            }
            let stab = match stabilizer {
                Some(s) => s,
                None => default_stabilizer(&sc.system, &sc.cost, horizon)?,
            };
            let r = best_dac_in_hindsight(&sc.system, &stab, &sc.cost, ws, &sc.x0, spec.window, &spec.projection, &opt)?;
            (r.costs, r.params, r.iterations, r.grad_norm, r.warning)
        }
        ComparatorKind::Drc => {
            if spec.kind != ControllerKind::Grc {
                return Err(Error::config("a DRC comparator charges the output; use it with grc"));
            }
            let (sys, cost) = observed(&sc)?;
            let r = best_drc_in_hindsight(&sys, &cost, ws, &sc.x0, spec.window, &spec.projection, &opt)?;
            (r.costs, r.params, r.iterations, r.grad_norm, r.warning)
        }
        ComparatorKind::Linear => {
            if spec.kind == ControllerKind::Grc {
                return Err(Error::config("a linear comparator needs a state-feedback controller"));
            }
            let r = best_linear_in_hindsight(&sc.system, &sc.cost, ws, &sc.x0, &opt, config.seed)?;
            (r.costs, vec![r.gain], r.iterations, r.grad_norm, None)
        }
    };

    let state_norms = traj.states[..horizon].iter().map(|x| x.norm()).collect();
    let mut report = RegretReport::new(
        sc.name,
        spec.kind.name(),
        kind.name(),
        config.seed,
        traj.costs.clone(),
        &comparator_costs,
        state_norms,
        traj.gamma,
    )?;
    report.comparator_iterations = iterations;
    report.comparator_grad_norm = grad_norm;
    report.comparator_warning = warning;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    Ok(Experiment {
        report,
        trajectory: traj,
        telemetry,
        comparator_params: params,
    })
}

#[derive(Clone, Debug)]
pub struct SysidExperiment {
    pub report: RegretReport,
    pub identified: IdentifiedSystem,
    /// The identification summary block, with errors against the truth.
    pub identification: String,
}

impl SysidExperiment {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut files = self.report.write(dir)?;
        let path = dir.join("identification.txt");
        write_atomic(&path, self.identification.as_bytes())?;
        files.push(path);
        Ok(files)
    }
}

/// Identify-then-control on the scenario treated as an unknown plant. The
/// comparator is the best DAC in hindsight on the true system with the same
/// (zero) stabilizer the pipeline uses.
pub fn run_sysid_experiment(config: &ScenarioConfig) -> Result<SysidExperiment> {
    run_sysid(config).map_err(|e| e.context(config.label()))
}

fn run_sysid(config: &ScenarioConfig) -> Result<SysidExperiment> {
    let started = Instant::now();
    let sc = config.scenario()?;
    let spec = &config.controller;
    let truth = sc.system.matrices(0)?.into_owned();
    let perturbation = config.perturbation_for(&sc);
    let k = spec.gain.clone().unwrap_or_else(|| Matrix::zeros(sc.system.du(), sc.system.dx()));
    let schedule = match spec.schedule {
        Some(s) => s,
        None => gpc_step(&sc.system, &Stabilizer::Fixed(k.clone()), &sc.cost, &perturbation, spec.window, &spec.projection)?,
    };
    let mut plant = SimulatedPlant::new(sc.system.clone(), perturbation.clone(), config.seed, Some(sc.x0.clone()))?;
    let mut pipeline = PipelineConfig::new(config.horizon, config.sysid.k, spec.online(schedule), config.seed);
    pipeline.sigma_threshold = config.sysid.sigma_threshold;
    pipeline.stabilizer = spec.gain.clone();
    let run = identify_then_control(&mut plant, &sc.cost, &pipeline)?;

    let ws = plant.perturbations().to_vec();
    let comp = best_dac_in_hindsight(
        &sc.system,
        &Stabilizer::Fixed(k),
        &sc.cost,
        &ws,
        &sc.x0,
        spec.window,
        &spec.projection,
        &OptConfig::default(),
    )?;
    let states: Vec<Vector> = run
        .exploration
        .states
        .iter()
        .take(run.exploration.costs.len())
        .chain(run.exploitation.states.iter().take(run.exploitation.costs.len()))
        .cloned()
        .collect();
    let gamma = states.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let mut report = RegretReport::new(
        sc.name,
        "identify-then-gpc",
        ComparatorKind::Dac.name(),
        config.seed,
        run.costs(),
        &comp.costs,
        states.iter().map(|x| x.norm()).collect(),
        gamma,
    )?;
    report.comparator_iterations = comp.iterations;
    report.comparator_grad_norm = comp.grad_norm;
    report.comparator_warning = comp.warning;
    report.wall_clock_seconds = started.elapsed().as_secs_f64();
    let identification = run.identified.summary(Some((&truth.a, &truth.b)));
    Ok(SysidExperiment {
        report,
        identified: run.identified,
        identification,
    })
}
