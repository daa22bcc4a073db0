//! Experiment configuration: INI-style sections with inline matrices or
//! references to matrix files (resolved relative to the config file).
//!
//! ```ini
//! [system]
//! preset = double-integrator
//!
//! [perturbation]
//! kind = sinusoidal
//! amplitude = 1
//! period = 50
//!
//! [controller]
//! kind = gpc
//! window = 10
//! step = auto
//!
//! [run]
//! horizon = 2000
//! seed = 7
//! ```

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ini::{Ini, Properties};

use super::presets::{preset, Scenario};
use crate::error::{Error, Result};
use crate::lds::{CostFunction, LinearSystem, PerturbationKind, PerturbationSource, QuadraticCost};
use crate::linalg::{parse_inline_matrix, parse_inline_vector, parse_matrix, Matrix, Vector};
use crate::online::{OnlineConfig, Projection, StepSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControllerKind {
    Zero,
    /// Fixed gain `u = K x` given in the config.
    Linear,
    /// The stabilizing LQR gain(s) of the scenario.
    Lqr,
    Gpc,
    Grc,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Zero => "zero",
            ControllerKind::Linear => "linear",
            ControllerKind::Lqr => "lqr",
            ControllerKind::Gpc => "gpc",
            ControllerKind::Grc => "grc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "zero" => ControllerKind::Zero,
            "linear" => ControllerKind::Linear,
            "lqr" => ControllerKind::Lqr,
            "gpc" => ControllerKind::Gpc,
            "grc" => ControllerKind::Grc,
            other => return Err(Error::config(format!("unknown controller kind `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComparatorKind {
    Dac,
    Drc,
    Linear,
    None,
}

impl ComparatorKind {
    pub fn name(self) -> &'static str {
        match self {
            ComparatorKind::Dac => "best-dac",
            ComparatorKind::Drc => "best-drc",
            ComparatorKind::Linear => "best-linear",
            ComparatorKind::None => "none",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dac" => ComparatorKind::Dac,
            "drc" => ComparatorKind::Drc,
            "linear" => ComparatorKind::Linear,
            "none" => ComparatorKind::None,
            other => return Err(Error::config(format!("unknown comparator `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    pub window: usize,
    /// `None` derives `eta_t = D / (G sqrt(t))` from the scenario.
    pub schedule: Option<StepSchedule>,
    pub projection: Projection,
    pub truncation: Option<usize>,
    pub gain: Option<Matrix>,
    /// `None` picks DAC, or DRC for GRC.
    pub comparator: Option<ComparatorKind>,
}

impl ControllerSpec {
    pub fn new(kind: ControllerKind) -> Self {
        Self {
            kind,
            window: 10,
            schedule: None,
            projection: Projection::None,
            truncation: None,
            gain: None,
            comparator: None,
        }
    }

    pub fn online(&self, schedule: StepSchedule) -> OnlineConfig {
        let mut c = OnlineConfig::new(self.window, schedule).with_projection(self.projection.clone());
        c.truncation = self.truncation;
        c
    }

    pub fn comparator(&self) -> ComparatorKind {
        self.comparator.unwrap_or(if self.kind == ControllerKind::Grc {
            ComparatorKind::Drc
        } else {
            ComparatorKind::Dac
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub preset: Option<String>,
    pub a: Option<Matrix>,
    pub b: Option<Matrix>,
    pub c: Option<Matrix>,
    pub embedding: Option<Matrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostSpec {
    pub q: Option<Matrix>,
    pub r: Option<Matrix>,
    pub target: Option<Vector>,
}

/// Identification settings for the `sysid` pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct SysidSpec {
    pub k: usize,
    pub sigma_threshold: f64,
}

/// Prediction settings for the `filter` and `spectral` experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSpec {
    /// Process and observation noise scales (Gaussian).
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Linear predictor history lengths.
    pub h: usize,
    pub k: usize,
    pub eta: f64,
    /// Spectral filters kept.
    pub filters: usize,
    pub cache: Option<PathBuf>,
    /// Rademacher inputs instead of zero input.
    pub excite: bool,
}

impl Default for PredictionSpec {
    fn default() -> Self {
        Self {
            sigma_x: 0.1,
            sigma_y: 0.1,
            h: 10,
            k: 10,
            eta: 0.01,
            filters: 20,
            cache: None,
            excite: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// File the config was read from, used in error messages.
    pub path: Option<PathBuf>,
    pub system: SystemSpec,
    pub perturbation: PerturbationSource,
    pub cost: CostSpec,
    pub controller: ControllerSpec,
    pub horizon: usize,
    pub seed: u64,
    pub x0: Option<Vector>,
    pub out: Option<PathBuf>,
    pub sysid: SysidSpec,
    pub prediction: PredictionSpec,
}

impl ScenarioConfig {
    /// A preset with zero noise and the zero controller.
    pub fn preset(name: &str, horizon: usize, seed: u64) -> Self {
        Self {
            path: None,
            system: SystemSpec {
                preset: Some(name.to_string()),
                a: None,
                b: None,
                c: None,
                embedding: None,
            },
            perturbation: PerturbationSource::zero(),
            cost: CostSpec {
                q: None,
                r: None,
                target: None,
            },
            controller: ControllerSpec::new(ControllerKind::Zero),
            horizon,
            seed,
            x0: None,
            out: None,
            sysid: SysidSpec {
                k: 1,
                sigma_threshold: crate::sysid::SIGMA_MIN_THRESHOLD,
            },
            prediction: PredictionSpec::default(),
        }
    }

    pub fn with_controller(mut self, controller: ControllerSpec) -> Self {
        self.controller = controller;
        self
    }

    pub fn with_perturbation(mut self, perturbation: PerturbationSource) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn label(&self) -> String {
        self.path
            .as_ref()
            .map(|p| p.display().to_string())
            .or_else(|| self.system.preset.clone())
            .unwrap_or_else(|| "inline".to_string())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let context = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(context.clone()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base).map_err(|e| e.context(context))?;
        cfg.path = Some(path.to_path_buf());
        Ok(cfg)
    }

    /// Parses config text; file references resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Parse(e.to_string()))?;
        let reader = Reader { ini: &ini, base };
        reader.check_known()?;

        let system = SystemSpec {
            preset: reader.string("system", "preset"),
            a: reader.matrix("system", "a")?,
            b: reader.matrix("system", "b")?,
            c: reader.matrix("system", "c")?,
            embedding: reader.matrix("system", "embedding")?,
        };
        if system.preset.is_none() && (system.a.is_none() || system.b.is_none()) {
            return Err(Error::config("[system] needs either `preset` or both `a` and `b`"));
        }

        let mut cfg = Self::preset("", 0, 0);
        cfg.system = system;
        cfg.perturbation = reader.perturbation()?;
        cfg.cost = CostSpec {
            q: reader.matrix("cost", "q")?,
            r: reader.matrix("cost", "r")?,
            target: reader.vector("cost", "target")?,
        };
        cfg.controller = reader.controller()?;
        cfg.horizon = reader.parse("run", "horizon")?.unwrap_or(1000);
        cfg.seed = reader.parse("run", "seed")?.unwrap_or(0);
        cfg.x0 = reader.vector("run", "x0")?;
        cfg.out = reader.string("run", "out").map(PathBuf::from);
        if let Some(k) = reader.parse("sysid", "k")? {
            cfg.sysid.k = k;
        }
        if let Some(s) = reader.parse("sysid", "sigma_threshold")? {
            cfg.sysid.sigma_threshold = s;
        }
        let p = &mut cfg.prediction;
        macro_rules! set {
            ($field:ident, $key:literal) => {
                if let Some(v) = reader.parse("prediction", $key)? {
                    p.$field = v;
                }
            };
        }
        set!(sigma_x, "sigma_x");
        set!(sigma_y, "sigma_y");
        set!(h, "h");
        set!(k, "k");
        set!(eta, "eta");
        set!(filters, "filters");
        set!(excite, "excite");
        p.cache = reader.string("prediction", "cache").map(|c| base.join(c));
        if cfg.horizon == 0 {
            return Err(Error::config("[run] horizon must be positive"));
        }
        Ok(cfg)
    }

    /// Builds the scenario: the preset (or inline system) with the config's
    /// cost, initial state and embedding overrides applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.system.preset {
            Some(name) => preset(name)?,
            None => {
                let a = self.system.a.clone().ok_or_else(|| Error::config("missing [system] a"))?;
                let b = self.system.b.clone().ok_or_else(|| Error::config("missing [system] b"))?;
                let system = LinearSystem::time_invariant(a, b, None)?;
                let (dx, du) = (system.dx(), system.du());
                let cost = CostFunction::quadratic(Matrix::identity(dx, dx), Matrix::identity(du, du))?;
                Scenario {
                    name: "inline",
                    summary: "system given in the config",
                    system,
                    cost,
                    observed: None,
                    embedding: None,
                    x0: Vector::zeros(dx),
                    anchors: Vec::new(),
                    nonlinear: None,
                }
            }
        };
        if let Some(c) = &self.system.c {
            let observed = sc.system.with_observation(Some(c.clone()))?;
            let dy = observed.dy();
            sc.observed = Some((observed, CostFunction::quadratic(Matrix::identity(dy, dy), Matrix::identity(sc.system.du(), sc.system.du()))?));
        }
        if let Some(e) = &self.system.embedding {
            sc.embedding = Some(e.clone());
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != sc.system.dx() {
                return Err(Error::dim("[run] x0", sc.system.dx(), x0.len()));
            }
            sc.x0 = x0.clone();
        }
        let override_cost = |base: &CostFunction, dv: usize| -> Result<CostFunction> {
            let q0 = base.as_quadratic();
            let du = sc.system.du();
            let q = self.cost.q.clone().or_else(|| q0.map(|c| c.q.clone())).unwrap_or_else(|| Matrix::identity(dv, dv));
            let r = self.cost.r.clone().or_else(|| q0.map(|c| c.r.clone())).unwrap_or_else(|| Matrix::identity(du, du));
            let target = self.cost.target.clone().or_else(|| q0.map(|c| c.target.clone()));
            let cost = CostFunction::Quadratic(QuadraticCost::new(q, r, target)?);
            cost.check_dims(dv, du)?;
            Ok(cost)
        };
        if self.cost.q.is_some() || self.cost.r.is_some() || self.cost.target.is_some() {
            if self.controller.kind == ControllerKind::Grc {
                if let Some((sys, cost)) = &sc.observed {
                    let cost = override_cost(cost, sys.dy())?;
                    sc.observed = Some((sys.clone(), cost));
                }
            } else {
                sc.cost = override_cost(&sc.cost, sc.system.dx())?;
            }
        }
        Ok(sc)
    }

    /// The perturbation source with the scenario's embedding applied unless
    /// the config already set one.
    pub fn perturbation_for(&self, scenario: &Scenario) -> PerturbationSource {
        match (&self.perturbation.embedding, &scenario.embedding) {
            (None, Some(e)) => self.perturbation.clone().embedded(e.clone()),
            _ => self.perturbation.clone(),
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("system", &["preset", "a", "b", "c", "embedding", "a_file", "b_file", "c_file", "embedding_file"]),
    (
        "perturbation",
        &["kind", "sigma", "radius", "amplitude", "omega", "period", "phases", "value", "file", "clip"],
    ),
    ("cost", &["q", "r", "target", "q_file", "r_file"]),
    (
        "controller",
        &["kind", "window", "step", "eta", "projection", "radius", "truncation", "gain", "gain_file", "comparator"],
    ),
    ("run", &["horizon", "seed", "x0", "out"]),
    ("sysid", &["k", "sigma_threshold"]),
    ("prediction", &["sigma_x", "sigma_y", "h", "k", "eta", "filters", "cache", "excite"]),
];

struct Reader<'a> {
    ini: &'a Ini,
    base: &'a Path,
}

impl Reader<'_> {
    fn check_known(&self) -> Result<()> {
        for (section, props) in self.ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::config(format!("key `{k}` appears before any section")));
                }
                continue;
            };
            let keys = KNOWN
                .iter()
                .find(|(s, _)| *s == section)
                .ok_or_else(|| Error::config(format!("unknown section [{section}]")))?
                .1;
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(Error::config(format!("unknown key `{k}` in [{section}]")));
                }
            }
        }
        Ok(())
    }

    fn props(&self, section: &str) -> Option<&Properties> {
        self.ini.section(Some(section))
    }

    fn string(&self, section: &str, key: &str) -> Option<String> {
        self.props(section)?.get(key).map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.string(section, key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| Error::config(format!("[{section}] {key}: cannot parse `{s}`"))),
        }
    }

    /// `key = 1 0; 0 1` inline, or `key_file = path` to a matrix file.
    fn matrix(&self, section: &str, key: &str) -> Result<Option<Matrix>> {
        let inline = self.string(section, key);
        let file = self.string(section, &format!("{key}_file"));
        let err = |e: Error| e.context(format!("[{section}] {key}"));
        match (inline, file) {
            (Some(_), Some(_)) => Err(Error::config(format!("[{section}] sets both `{key}` and `{key}_file`"))),
            (Some(s), None) => parse_inline_matrix(&s).map(Some).map_err(err),
            (None, Some(f)) => {
                let path = self.base.join(&f);
                let text = fs::read_to_string(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
                parse_matrix(&text).map(Some).map_err(|e| e.context(path.display().to_string()))
            }
            (None, None) => Ok(None),
        }
    }

    fn vector(&self, section: &str, key: &str) -> Result<Option<Vector>> {
        self.string(section, key)
            .map(|s| parse_inline_vector(&s).map_err(|e| e.context(format!("[{section}] {key}"))))
            .transpose()
    }

    fn perturbation(&self) -> Result<PerturbationSource> {
        let s = "perturbation";
        let kind = self.string(s, "kind").unwrap_or_else(|| "zero".to_string());
        let kind = match kind.as_str() {
            "zero" => PerturbationKind::Zero,
            "gaussian" => PerturbationKind::Gaussian {
                sigma: self.parse(s, "sigma")?.unwrap_or(1.0),
            },
            "uniform" => PerturbationKind::UniformBall {
                radius: self.parse(s, "radius")?.unwrap_or(1.0),
            },
            "sinusoidal" => {
                let omega = match (self.parse::<f64>(s, "omega")?, self.parse::<f64>(s, "period")?) {
                    (Some(_), Some(_)) => return Err(Error::config("[perturbation] sets both omega and period")),
                    (Some(o), None) => o,
                    (None, Some(p)) if p > 0.0 => 2.0 * PI / p,
                    (None, Some(p)) => return Err(Error::config(format!("[perturbation] period must be positive, got {p}"))),
                    (None, None) => 2.0 * PI / 50.0,
                };
                PerturbationKind::Sinusoidal {
                    amplitude: self.parse(s, "amplitude")?.unwrap_or(1.0),
                    omega,
                    phases: self.vector(s, "phases")?.map(|v| v.iter().copied().collect()).unwrap_or_default(),
                }
            }
            "constant" => PerturbationKind::Constant(
                self.vector(s, "value")?
                    .ok_or_else(|| Error::config("[perturbation] constant needs `value`"))?,
            ),
            "recorded" => {
                let f = self
                    .string(s, "file")
                    .ok_or_else(|| Error::config("[perturbation] recorded needs `file`"))?;
                let path = self.base.join(f);
                let text = fs::read_to_string(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
                let seq = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(parse_inline_vector)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.context(path.display().to_string()))?;
                PerturbationKind::Recorded(seq)
            }
            other => return Err(Error::config(format!("unknown perturbation kind `{other}`"))),
        };
        let mut src = PerturbationSource::new(kind);
        if self.parse(s, "clip")?.unwrap_or(false) {
            src = src.clipped();
        }
        Ok(src)
    }

    fn controller(&self) -> Result<ControllerSpec> {
        let s = "controller";
        let kind = ControllerKind::parse(&self.string(s, "kind").unwrap_or_else(|| "zero".to_string()))?;
        let mut spec = ControllerSpec::new(kind);
        if let Some(w) = self.parse(s, "window")? {
            spec.window = w;
        }
        let eta: f64 = self.parse(s, "eta")?.unwrap_or(0.05);
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("[controller] eta must be positive, got {eta}")));
        }
        spec.schedule = match self.string(s, "step").as_deref().unwrap_or("auto") {
            "auto" => None,
            "invsqrt" => Some(StepSchedule::InvSqrt(eta)),
            "constant" => Some(StepSchedule::Constant(eta)),
            "fixed" => Some(StepSchedule::FixedHorizon {
                c: eta,
                horizon: self.parse("run", "horizon")?.unwrap_or(1000),
            }),
            other => return Err(Error::config(format!("unknown step schedule `{other}`"))),
        };
        spec.projection = match self.string(s, "projection").as_deref().unwrap_or("none") {
            "none" => Projection::None,
            "ball" => {
                let r: f64 = self
                    .parse(s, "radius")?
                    .ok_or_else(|| Error::config("[controller] ball projection needs `radius`"))?;
                if !(r > 0.0) {
                    return Err(Error::config(format!("[controller] radius must be positive, got {r}")));
                }
                Projection::Ball(r)
            }
            other => return Err(Error::config(format!("unknown projection `{other}`"))),
        };
        spec.truncation = self.parse(s, "truncation")?;
        spec.gain = self.matrix(s, "gain")?;
        if kind == ControllerKind::Linear && spec.gain.is_none() {
            return Err(Error::config("[controller] linear needs `gain`"));
        }
        spec.comparator = self.string(s, "comparator").map(|c| ComparatorKind::parse(&c)).transpose()?;
        Ok(spec)
    }
}
