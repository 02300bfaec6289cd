//! Tab-separated report tables: a header row followed by one row per
//! bin, epoch or tick. Floats use the shortest representation that
//! round-trips; missing values are written as `NA`.

use crate::mc::BinnedReport;
use crate::net::TrainLog;
use crate::pa::StepRecord;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

pub fn binned_report_tsv(report: &BinnedReport) -> String {
    table(
        &["bin", "lo", "hi", "count", "mean_prediction", "mean_variance"],
        report.bins.iter().enumerate().map(|(i, b)| {
            vec![
                i.to_string(),
                b.lo.to_string(),
                b.hi.to_string(),
                b.count.to_string(),
                b.mean_prediction.to_string(),
                b.mean_variance.to_string(),
            ]
        }),
    )
}

/// One row per epoch for each log, in the given order. Timings are not
/// included so identical runs produce identical bytes.
pub fn train_logs_tsv(logs: &[&TrainLog]) -> String {
    table(
        &["dropout", "seed", "epoch", "train_mse", "val_mse", "sgd_loss"],
        logs.iter().flat_map(|log| {
            log.epochs.iter().map(move |e| {
                vec![
                    log.dropout.to_string(),
                    log.seed.to_string(),
                    e.epoch.to_string(),
                    e.train_mse.to_string(),
                    opt(e.val_mse),
                    e.sgd_loss.to_string(),
                ]
            })
        }),
    )
}

pub fn step_records_tsv(records: &[StepRecord]) -> String {
    table(
        &[
            "tick", "x", "y", "heading", "u_N", "u_H", "sigma", "u_PA", "variance", "cross_track",
        ],
        records.iter().map(|r| {
            vec![
                r.tick.to_string(),
                r.pose.x.to_string(),
                r.pose.y.to_string(),
                r.pose.heading.to_string(),
                r.u_n.to_string(),
                opt(r.u_h),
                r.sigma.to_string(),
                r.u_pa.to_string(),
                r.variance.to_string(),
                r.cross_track.to_string(),
            ]
        }),
    )
}

/// Summary row for one evaluated model.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub name: String,
    pub dropout: String,
    pub passes: usize,
    pub count: usize,
    pub mue: f64,
    pub mean_variance: f64,
    pub rmse: f64,
}

pub fn eval_summary_tsv(rows: &[EvalSummary]) -> String {
    table(
        &["model", "dropout", "passes", "count", "mue", "mean_variance", "rmse"],
        rows.iter().map(|r| {
            vec![
                r.name.clone(),
                r.dropout.clone(),
                r.passes.to_string(),
                r.count.to_string(),
                r.mue.to_string(),
                r.mean_variance.to_string(),
                r.rmse.to_string(),
            ]
        }),
    )
}

/// Splits a report back into its header and rows.
pub fn parse_tsv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split('\t').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect();
    (header, rows)
}
