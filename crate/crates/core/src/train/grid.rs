//! Exhaustive hyperparameter grids with validation-based selection.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::{MetricKind, RunReport};
use crate::corruption::ReplaceMode;
use crate::exec::Exec;
use crate::objectives::LossTerm;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub p_m: Vec<f64>,
    pub bins: Vec<usize>,
    /// Each entry is one objective: a set of weighted loss terms.
    pub objectives: Vec<Vec<LossTerm>>,
    pub modes: Vec<ReplaceMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: usize,
    pub p_m: f64,
    pub bins: usize,
    pub losses: Vec<LossTerm>,
    pub mode: ReplaceMode,
}

impl GridCell {
    pub fn objective_name(&self) -> String {
        self.losses
            .iter()
            .map(|t| t.kind.name())
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Directory-safe identifier.
    pub fn slug(&self) -> String {
        format!(
            "cell{:03}_pm{}_T{}_{}_{}",
            self.index,
            self.p_m,
            self.bins,
            self.objective_name(),
            mode_name(self.mode)
        )
    }
}

pub fn mode_name(mode: ReplaceMode) -> &'static str {
    match mode {
        ReplaceMode::None => "none",
        ReplaceMode::Constant => "constant",
        ReplaceMode::Random => "random",
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p_m.is_empty() || self.bins.is_empty() || self.objectives.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidArgument("every grid axis needs at least one value".into()));
        }
        if let Some(p) = self.p_m.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("p_m {p} outside [0, 1]")));
        }
        for terms in &self.objectives {
            crate::objectives::validate_terms(terms)?;
        }
        Ok(())
    }

    /// Cartesian product, ordered by objective, mode, bins, then p_m.
    pub fn cells(&self) -> Vec<GridCell> {
        let mut out = Vec::new();
        for losses in &self.objectives {
            for &mode in &self.modes {
                for &bins in &self.bins {
                    for &p_m in &self.p_m {
                        out.push(GridCell {
                            index: out.len(),
                            p_m,
                            bins,
                            losses: losses.clone(),
                            mode,
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: GridCell,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub report: Option<RunReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub metric: MetricKind,
    pub cells: Vec<CellResult>,
    /// Index into `cells` of the selected configuration.
    pub best: Option<usize>,
}

impl GridReport {
    pub fn from_results(metric: MetricKind, cells: Vec<CellResult>) -> Self {
        let best = select_best(metric, &cells);
        Self { metric, cells, best }
    }

    pub fn best_cell(&self) -> Option<&CellResult> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,p_m,bins,objective,mode,status,val_mean,val_std,test_mean,test_std\n");
        for c in &self.cells {
            let g = &c.cell;
            let _ = write!(out, "{},{},{},{},{},", g.index, g.p_m, g.bins, g.objective_name(), mode_name(g.mode));
            match &c.report {
                Some(r) => {
                    let _ = writeln!(out, "ok,{},{},{},{}", r.val.mean, r.val.std, r.test.mean, r.test.std);
                }
                None => out.push_str("failed,,,,\n"),
            }
        }
        out
    }
}

/// Best validation metric; ties go to fewer bins, then smaller `p_m`, then grid order.
fn select_best(metric: MetricKind, cells: &[CellResult]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cells.iter().enumerate() {
        let Some(v) = c.report.as_ref().map(|r| r.val.mean).filter(|v| v.is_finite()) else {
            continue;
        };
        let take = match best {
            None => true,
            Some((j, bv)) => {
                metric.better(v, bv)
                    || (v == bv && (c.cell.bins, c.cell.p_m) < (cells[j].cell.bins, cells[j].cell.p_m))
            }
        };
        if take {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Evaluate every cell with `eval`. Failures are recorded and do not stop the grid.
pub fn grid_search<F>(spec: &GridSpec, metric: MetricKind, exec: Exec, eval: F) -> Result<GridReport>
where
    F: Fn(&GridCell) -> Result<RunReport> + Sync + Send,
{
    spec.validate()?;
    let cells = spec.cells();
    let results = exec.map(cells.len(), |i| {
        let cell = cells[i].clone();
        match eval(&cell) {
            Ok(report) => CellResult {
                cell,
                report: Some(report),
                error: None,
            },
            Err(e) => CellResult {
                cell,
                report: None,
                error: Some(e.to_string()),
            },
        }
    });
    Ok(GridReport::from_results(metric, results))
}
