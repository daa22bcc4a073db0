use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::fmt_f64;

pub const CSV_HEADER: [&str; 6] = ["t", "cost", "cum_cost", "cum_comparator_cost", "avg_regret", "state_norm"];

/// Learner and comparator costs of one run on one perturbation sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretReport {
    pub scenario: String,
    pub controller: String,
    pub comparator: String,
    pub seed: u64,
    pub costs: Vec<f64>,
    pub cum_costs: Vec<f64>,
    pub cum_comparator_costs: Vec<f64>,
    /// `(cum_cost - cum_comparator_cost) / t` with `t` counted from 1.
    pub avg_regret: Vec<f64>,
    /// Norm of the state each cost was charged on.
    pub state_norms: Vec<f64>,
    /// `max_t ||x_t||` over the run.
    pub gamma: f64,
    pub comparator_iterations: usize,
    pub comparator_grad_norm: f64,
    pub comparator_warning: Option<String>,
    pub wall_clock_seconds: f64,
}

/// The JSON summary. Wall-clock time is kept out so that reruns produce
/// identical files; it goes to `timing.txt` instead.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub controller: String,
    pub comparator: String,
    pub seed: u64,
    pub horizon: usize,
    pub total_cost: f64,
    pub comparator_cost: f64,
    pub avg_regret: f64,
    pub gamma: f64,
    pub comparator_iterations: usize,
    pub comparator_grad_norm: f64,
    pub comparator_warning: Option<String>,
}

fn cumulative(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, c| {
            *acc += c;
            Some(*acc)
        })
        .collect()
}

impl RegretReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scenario: &str,
        controller: &str,
        comparator: &str,
        seed: u64,
        costs: Vec<f64>,
        comparator_costs: &[f64],
        state_norms: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if comparator_costs.len() != costs.len() || state_norms.len() != costs.len() {
            return Err(Error::dim("report columns", costs.len(), format!("{}/{}", comparator_costs.len(), state_norms.len())));
        }
        let cum_costs = cumulative(&costs);
        let cum_comparator_costs = cumulative(comparator_costs);
        let avg_regret = cum_costs
            .iter()
            .zip(&cum_comparator_costs)
            .enumerate()
            .map(|(i, (c, k))| (c - k) / (i + 1) as f64)
            .collect();
        Ok(Self {
            scenario: scenario.to_string(),
            controller: controller.to_string(),
            comparator: comparator.to_string(),
            seed,
            costs,
            cum_costs,
            cum_comparator_costs,
            avg_regret,
            state_norms,
            gamma,
            comparator_iterations: 0,
            comparator_grad_norm: 0.0,
            comparator_warning: None,
            wall_clock_seconds: 0.0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.costs.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.cum_costs.last().copied().unwrap_or(0.0)
    }

    pub fn comparator_cost(&self) -> f64 {
        self.cum_comparator_costs.last().copied().unwrap_or(0.0)
    }

    pub fn final_avg_regret(&self) -> f64 {
        self.avg_regret.last().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            scenario: self.scenario.clone(),
            controller: self.controller.clone(),
            comparator: self.comparator.clone(),
            seed: self.seed,
            horizon: self.horizon(),
            total_cost: self.total_cost(),
            comparator_cost: self.comparator_cost(),
            avg_regret: self.final_avg_regret(),
            gamma: self.gamma,
            comparator_iterations: self.comparator_iterations,
            comparator_grad_norm: self.comparator_grad_norm,
            comparator_warning: self.comparator_warning.clone(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for i in 0..self.horizon() {
            w.write_record([
                (i + 1).to_string(),
                fmt_f64(self.costs[i]),
                fmt_f64(self.cum_costs[i]),
                fmt_f64(self.cum_comparator_costs[i]),
                fmt_f64(self.avg_regret[i]),
                fmt_f64(self.state_norms[i]),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summary()).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `regret.csv`, `summary.json` and `timing.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let files = [
            ("regret.csv", self.to_csv()?),
            ("summary.json", self.to_json()?),
            ("timing.txt", format!("wall_clock_seconds {}\n", self.wall_clock_seconds)),
        ];
        files
            .into_iter()
            .map(|(name, body)| {
                let path = dir.join(name);
                write_atomic(&path, body.as_bytes())?;
                Ok(path)
            })
            .collect()
    }
}

/// Per-step columns read back from an emitted CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvColumns {
    pub t: Vec<usize>,
    pub cost: Vec<f64>,
    pub cum_cost: Vec<f64>,
    pub cum_comparator_cost: Vec<f64>,
    pub avg_regret: Vec<f64>,
    pub state_norm: Vec<f64>,
}

pub fn read_regret_csv(text: &str) -> Result<CsvColumns> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected CSV header {header:?}")));
    }
    let mut out = CsvColumns::default();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Parse(format!("bad number `{}`", &rec[i])))
        };
        out.t.push(rec[0].parse().map_err(|_| Error::Parse(format!("bad step `{}`", &rec[0])))?);
        out.cost.push(num(1)?);
        out.cum_cost.push(num(2)?);
        out.cum_comparator_cost.push(num(3)?);
        out.avg_regret.push(num(4)?);
        out.state_norm.push(num(5)?);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
