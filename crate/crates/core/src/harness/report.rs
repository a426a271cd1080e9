//! CSV rows produced by the drivers, and the statistics behind them.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{mean_std, EpisodeRecord};
use crate::error::Result;
use crate::skip::{SkipKind, SkipPolicyConfig};

/// Summary of one policy setting over its seeded runs. Standard deviations
/// are population values across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// n for N-Skip, c for FSA and CB.
    pub param: f64,
    #[serde(rename = "Rw")]
    pub rw: f64,
    #[serde(rename = "RwSTD")]
    pub rw_std: f64,
    #[serde(rename = "Rc")]
    pub rc: f64,
    #[serde(rename = "RcSTD")]
    pub rc_std: f64,
    #[serde(rename = "Sx")]
    pub sx: f64,
    #[serde(rename = "SxSTD")]
    pub sx_std: f64,
    #[serde(rename = "RwMin")]
    pub rw_min: f64,
    #[serde(rename = "RwMax")]
    pub rw_max: f64,
    #[serde(rename = "Err")]
    pub err: f64,
    #[serde(rename = "ErrSTD")]
    pub err_std: f64,
    /// Mean planner calls per step, in percent.
    #[serde(rename = "RecalcPct")]
    pub recalc_pct: f64,
    /// `Rw` min-max normalized over all rows of the sweep.
    #[serde(rename = "RwNorm")]
    pub rw_norm: f64,
    /// `RwMax` min-max normalized over all rows of the sweep.
    #[serde(rename = "RwMaxNorm")]
    pub rw_max_norm: f64,
}

/// Aggregate the runs of one setting. Normalized columns are filled in
/// later by [`normalize_rewards`].
pub fn summarize(policy: &SkipPolicyConfig, records: &[EpisodeRecord]) -> ResultRow {
    let col = |f: &dyn Fn(&EpisodeRecord) -> f64| mean_std(&records.iter().map(f).collect::<Vec<_>>());
    let (rw, rw_std) = col(&|r| r.total_reward);
    let (rc, rc_std) = col(&|r| r.recalc_count as f64);
    let (sx, sx_std) = col(&|r| r.sx());
    let (err, err_std) = col(&|r| r.mean_error());
    let (rate, _) = col(&|r| r.recalc_rate());
    let rewards = records.iter().map(|r| r.total_reward);
    ResultRow {
        method: policy.label(),
        param: match policy.kind {
            SkipKind::Nskip => policy.n.unwrap_or(0) as f64,
            _ => policy.c.unwrap_or(f64::NAN),
        },
        rw,
        rw_std,
        rc,
        rc_std,
        sx,
        sx_std,
        rw_min: rewards.clone().fold(f64::INFINITY, f64::min),
        rw_max: rewards.fold(f64::NEG_INFINITY, f64::max),
        err,
        err_std,
        recalc_pct: 100.0 * rate,
        rw_norm: f64::NAN,
        rw_max_norm: f64::NAN,
    }
}

/// Min-max normalize `Rw` and `RwMax` over all rows. When every row has
/// the same value the column is set to 1.
pub fn normalize_rewards(rows: &mut [ResultRow]) {
    fn scale(values: Vec<f64>) -> Vec<f64> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values.into_iter().map(|v| if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 }).collect()
    }
    let rw = scale(rows.iter().map(|r| r.rw).collect());
    let max = scale(rows.iter().map(|r| r.rw_max).collect());
    for ((row, a), b) in rows.iter_mut().zip(rw).zip(max) {
        row.rw_norm = a;
        row.rw_max_norm = b;
    }
}

/// Error statistics at one step since the last replan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorStepRow {
    pub n: usize,
    pub step_index: usize,
    pub count: usize,
    pub mean_err: f64,
    pub std_err: f64,
    pub min_err: f64,
    pub max_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineRow {
    pub setting: String,
    pub iteration: usize,
    pub wall_seconds: f64,
    pub reward_mean: f64,
    pub reward_min: f64,
    pub reward_max: f64,
    pub recalc_pct: f64,
    pub planner_calls: f64,
    pub planner_calls_cum: f64,
    pub err_mean: f64,
    pub err_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRow {
    pub run: usize,
    pub seed: u64,
    pub final_reward: f64,
    pub selected: bool,
}

/// Write rows with a header, optionally preceded by a `#` comment line.
pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T], comment: Option<&str>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    if let Some(c) = comment {
        writeln!(file, "{}", c.trim_end())?;
    }
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read rows written by [`write_csv_rows`]; `#` lines are skipped.
pub fn read_csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; NaN when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, _) = mean_std(&rx);
    let (my, _) = mean_std(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}
