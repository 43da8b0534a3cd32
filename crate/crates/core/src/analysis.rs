//! Evaluation aggregation: per-cue accuracy and SI-SDR improvement,
//! accuracy-versus-difference logistic fits, and same/adjacent/distinct
//! cross-tabulations of independent against relative categories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cues::{Attribute, CueKind, QuantizerSet};
use crate::error::{Error, Result};
use crate::prompts::PromptConfig;

/// What a prompt was about: one attribute, a random subset, or all cues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueType {
    Single(Attribute),
    Random,
    All,
}

impl fmt::Display for CueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CueType::Single(a) => f.write_str(a.id()),
            CueType::Random => f.write_str("random"),
            CueType::All => f.write_str("all"),
        }
    }
}

/// One classification outcome for one prompt of one mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub mixture_id: String,
    pub cue: CueType,
    pub prompt_kind: CueKind,
    pub prompt_config: PromptConfig,
    /// 1 when channel 1 carries the target.
    pub true_label: u8,
    pub pred_label: u8,
    pub prob: f64,
    pub si_sdr_chosen_db: Option<f64>,
    pub si_sdri_db: Option<f64>,
    /// Attribute difference in the cue's own measure, single continuous cues
    /// only.
    pub delta: Option<f64>,
    pub relative_category: Option<String>,
    pub indep_category_tar: Option<String>,
    pub indep_category_inf: Option<String>,
}

impl EvalRow {
    pub fn correct(&self) -> bool {
        self.true_label == self.pred_label
    }
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueAccuracy {
    pub cue: CueType,
    pub n: usize,
    pub accuracy: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_si_sdri_db: Option<f64>,
}

/// Grouped accuracy and mean SI-SDR improvement per cue type.
pub fn accuracy_by_cue(rows: &[EvalRow]) -> Vec<CueAccuracy> {
    let mut groups: BTreeMap<CueType, (usize, usize, f64, usize)> = BTreeMap::new();
    for row in rows {
        let entry = groups.entry(row.cue).or_insert((0, 0, 0.0, 0));
        entry.0 += 1;
        entry.1 += usize::from(row.correct());
        if let Some(v) = row.si_sdri_db {
            entry.2 += v;
            entry.3 += 1;
        }
    }
    groups
        .into_iter()
        .map(|(cue, (n, correct, sdri_sum, sdri_n))| {
            let (lo, hi) = wilson_interval(correct, n);
            CueAccuracy {
                cue,
                n,
                accuracy: correct as f64 / n as f64,
                wilson_low: lo,
                wilson_high: hi,
                mean_si_sdri_db: (sdri_n > 0).then(|| sdri_sum / sdri_n as f64),
            }
        })
        .collect()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        (1.0 + x.exp()).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximum-likelihood 1-D logistic regression `P(correct) = sigmoid(a + b*x)`
/// by damped Newton iteration with a small L2 ridge for separable data.
/// Returns `(intercept, slope)`; single-class input is an error.
pub fn logistic_fit_1d(points: &[(f64, bool)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Analysis(format!(
            "logistic fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let positives = points.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == points.len() {
        return Err(Error::Analysis(
            "logistic fit needs both classes present".into(),
        ));
    }
    let ridge = 1e-6;
    let loss = |a: f64, b: f64| -> f64 {
        let nll: f64 = points
            .iter()
            .map(|&(x, y)| {
                let s = a + b * x;
                softplus(s) - if y { s } else { 0.0 }
            })
            .sum();
        nll + 0.5 * ridge * (a * a + b * b)
    };

    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut current = loss(a, b);
    for _ in 0..100 {
        let (mut ga, mut gb) = (ridge * a, ridge * b);
        let (mut haa, mut hab, mut hbb) = (ridge, 0.0f64, ridge);
        for &(x, y) in points {
            let p = sigmoid(a + b * x);
            let r = p - f64::from(y);
            ga += r;
            gb += r * x;
            let w = (p * (1.0 - p)).max(1e-12);
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let grad_norm = (ga * ga + gb * gb).sqrt();
        if grad_norm < 1e-8 {
            break;
        }
        let det = haa * hbb - hab * hab;
        if det.abs() < 1e-18 {
            break;
        }
        let step_a = (hbb * ga - hab * gb) / det;
        let step_b = (haa * gb - hab * ga) / det;

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let (na, nb) = (a - scale * step_a, b - scale * step_b);
            let next = loss(na, nb);
            if next <= current {
                a = na;
                b = nb;
                current = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub cue: Attribute,
    pub n: usize,
    pub intercept: f64,
    pub slope: f64,
}

/// Per-cue logistic fit of correctness against |delta|, over single-cue
/// continuous rows. Cues whose rows are single-class (e.g. everything
/// correct) are skipped.
pub fn logistic_curves(rows: &[EvalRow]) -> Vec<LogisticFit> {
    let mut per_cue: BTreeMap<Attribute, Vec<(f64, bool)>> = BTreeMap::new();
    for row in rows {
        if let (CueType::Single(attr), Some(delta)) = (row.cue, row.delta) {
            per_cue
                .entry(attr)
                .or_default()
                .push((delta.abs(), row.correct()));
        }
    }
    per_cue
        .into_iter()
        .filter_map(|(cue, points)| {
            logistic_fit_1d(&points)
                .ok()
                .map(|(intercept, slope)| LogisticFit {
                    cue,
                    n: points.len(),
                    intercept,
                    slope,
                })
        })
        .collect()
}

/// Cell of the independent-versus-relative cross-tabulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CrosstabCell {
    pub n: usize,
    pub correct: usize,
}

impl CrosstabCell {
    pub fn accuracy(&self) -> Option<f64> {
        (self.n > 0).then(|| self.correct as f64 / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstabEntry {
    pub indep_group: String,
    pub relative_group: String,
    #[serde(flatten)]
    pub cell: CrosstabCell,
}

/// Counts and accuracy for independent groups (same / adjacent / distinct
/// absolute categories) crossed with relative groups (similar /
/// non-similar), per cue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueCrosstab {
    pub cue: Attribute,
    pub bins: usize,
    pub cells: Vec<CrosstabEntry>,
}

impl CueCrosstab {
    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.cell.n).sum()
    }

    pub fn cell(&self, indep_group: &str, relative_group: &str) -> CrosstabCell {
        self.cells
            .iter()
            .find(|e| e.indep_group == indep_group && e.relative_group == relative_group)
            .map(|e| e.cell)
            .unwrap_or_default()
    }

    pub fn marginal_indep(&self, group: &str) -> CrosstabCell {
        let mut out = CrosstabCell::default();
        for e in &self.cells {
            if e.indep_group == group {
                out.n += e.cell.n;
                out.correct += e.cell.correct;
            }
        }
        out
    }

    pub fn marginal_relative(&self, group: &str) -> CrosstabCell {
        let mut out = CrosstabCell::default();
        for e in &self.cells {
            if e.relative_group == group {
                out.n += e.cell.n;
                out.correct += e.cell.correct;
            }
        }
        out
    }
}

/// Build the cross-tabs from single-cue rows carrying both speakers'
/// independent categories. "Adjacent" exists only for 3-bin cues; 2-bin cues
/// have same/distinct.
type GroupCells = BTreeMap<(String, String), CrosstabCell>;

pub fn group_crosstab(rows: &[EvalRow], quantizers: &QuantizerSet) -> Vec<CueCrosstab> {
    let mut tables: BTreeMap<Attribute, (usize, GroupCells)> = BTreeMap::new();
    for row in rows {
        let CueType::Single(attr) = row.cue else {
            continue;
        };
        let Some(q) = quantizers.get(attr) else {
            continue;
        };
        let (Some(cat_tar), Some(cat_inf), Some(rel)) = (
            row.indep_category_tar.as_deref(),
            row.indep_category_inf.as_deref(),
            row.relative_category.as_deref(),
        ) else {
            continue;
        };
        let bin_of = |cat: &str| q.names.iter().position(|n| n == cat);
        let (Some(bin_tar), Some(bin_inf)) = (bin_of(cat_tar), bin_of(cat_inf)) else {
            continue;
        };
        let gap = bin_tar.abs_diff(bin_inf);
        let indep_group = match (q.names.len(), gap) {
            (_, 0) => "same",
            (3, 1) => "adjacent",
            _ => "distinct",
        };
        let rel_group = if rel == "similar" {
            "similar"
        } else {
            "non_similar"
        };
        let (_, cells) = tables
            .entry(attr)
            .or_insert_with(|| (q.names.len(), BTreeMap::new()));
        let cell = cells
            .entry((indep_group.to_string(), rel_group.to_string()))
            .or_default();
        cell.n += 1;
        cell.correct += usize::from(row.correct());
    }
    tables
        .into_iter()
        .map(|(cue, (bins, cells))| CueCrosstab {
            cue,
            bins,
            cells: cells
                .into_iter()
                .map(|((indep_group, relative_group), cell)| CrosstabEntry {
                    indep_group,
                    relative_group,
                    cell,
                })
                .collect(),
        })
        .collect()
}

/// Provenance stamped into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub provenance: Provenance,
    pub accuracy: Vec<CueAccuracy>,
    pub logistic: Vec<LogisticFit>,
    pub crosstabs: Vec<CueCrosstab>,
}

/// Write the report as CSV files plus a provenance manifest.
///
/// `accuracy.csv`, `logistic.csv`, `crosstab.csv`, `curves.csv` (plot-ready
/// accuracy-vs-difference series) and `report.json`.
pub fn export_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;

    let mut acc = String::from("cue,n,accuracy,wilson_low,wilson_high,mean_si_sdri_db\n");
    for row in &report.accuracy {
        acc.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.cue,
            row.n,
            row.accuracy,
            row.wilson_low,
            row.wilson_high,
            row.mean_si_sdri_db.map_or(String::new(), |v| v.to_string()),
        ));
    }
    std::fs::write(dir.join("accuracy.csv"), acc)?;

    let mut logistic = String::from("cue,n,intercept,slope\n");
    for fit in &report.logistic {
        logistic.push_str(&format!(
            "{},{},{},{}\n",
            fit.cue.id(),
            fit.n,
            fit.intercept,
            fit.slope
        ));
    }
    std::fs::write(dir.join("logistic.csv"), logistic)?;

    let mut curves = String::from("cue,x,predicted_accuracy\n");
    for fit in &report.logistic {
        // 50-point series over +/- four decades of the fitted scale.
        let x_max = if fit.slope.abs() > 1e-12 {
            (6.0 - fit.intercept) / fit.slope
        } else {
            1.0
        };
        let x_max = x_max.abs().max(1e-6);
        for i in 0..50 {
            let x = x_max * i as f64 / 49.0;
            let p = sigmoid(fit.intercept + fit.slope * x);
            curves.push_str(&format!("{},{},{}\n", fit.cue.id(), x, p));
        }
    }
    std::fs::write(dir.join("curves.csv"), curves)?;

    let mut crosstab =
        String::from("cue,bins,independent_group,relative_group,n,correct,accuracy\n");
    for table in &report.crosstabs {
        for entry in &table.cells {
            crosstab.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                table.cue.id(),
                table.bins,
                entry.indep_group,
                entry.relative_group,
                entry.cell.n,
                entry.cell.correct,
                entry
                    .cell
                    .accuracy()
                    .map_or(String::new(), |a| a.to_string()),
            ));
        }
        let all = CrosstabCell {
            n: table.total(),
            correct: table.cells.iter().map(|c| c.cell.correct).sum(),
        };
        crosstab.push_str(&format!(
            "{},{},all,all,{},{},{}\n",
            table.cue.id(),
            table.bins,
            all.n,
            all.correct,
            all.accuracy().map_or(String::new(), |a| a.to_string()),
        ));
    }
    std::fs::write(dir.join("crosstab.csv"), crosstab)?;

    let manifest = serde_json::to_string_pretty(report)?;
    std::fs::write(dir.join("report.json"), manifest)?;
    Ok(())
}
