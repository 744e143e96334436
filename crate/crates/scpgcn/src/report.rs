//! CSV and JSON renderings of results. Floats use Rust's shortest
//! round-trip formatting, so output is byte-stable across runs.

use std::fmt::Write as _;

use scpgcn_core::community::CommunityAssignment;
use scpgcn_core::eval::{ExperimentReport, GridSearchResult};
use scpgcn_core::training::EpochRecord;
use serde::{Deserialize, Serialize};

/// One row of the cluster subcommand's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipRecord {
    pub id: String,
    #[serde(rename = "C")]
    pub communities: usize,
    pub membership: Vec<usize>,
}

impl MembershipRecord {
    pub fn new(id: &str, assignment: &CommunityAssignment) -> Self {
        MembershipRecord {
            id: id.to_string(),
            communities: assignment.community_count(),
            membership: assignment.membership().to_vec(),
        }
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,mean_loss,mean_contrastive,mean_cp\n");
    for h in history {
        writeln!(out, "{},{},{},{}", h.epoch, h.mean_loss, h.mean_contrastive, h.mean_cp).unwrap();
    }
    out
}

/// `id,g_0,…,g_{L−1}`; all rows must have the same length.
pub fn embedding_csv(rows: &[(String, Vec<f64>)]) -> String {
    let len = rows.first().map_or(0, |r| r.1.len());
    let mut out = String::from("id");
    for k in 0..len {
        write!(out, ",g_{k}").unwrap();
    }
    out.push('\n');
    for (id, g) in rows {
        out.push_str(&csv_field(id));
        for v in g {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Per-repeat rows for one or more experiments.
pub fn repeats_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("variant,repeat,seed,accuracy,f1\n");
    for r in reports {
        for (k, ((a, f), s)) in r.accuracy.iter().zip(&r.f1).zip(&r.seeds).enumerate() {
            writeln!(out, "{},{k},{s},{a},{f}", r.variant).unwrap();
        }
    }
    out
}

/// One summary row per experiment.
pub fn summary_csv(reports: &[ExperimentReport]) -> String {
    let mut out = String::from("variant,repeats,accuracy_mean,accuracy_std,f1_mean,f1_std\n");
    for r in reports {
        writeln!(out, "{},{},{},{},{},{}", r.variant, r.repeats, r.accuracy_mean, r.accuracy_std, r.f1_mean, r.f1_std)
            .unwrap();
    }
    out
}

/// The full sweep table: parameter values, fold, scores.
pub fn grid_csv(result: &GridSearchResult) -> String {
    let mut out = String::from("alpha,beta,communities,fold,accuracy,f1\n");
    for r in &result.table {
        writeln!(out, "{},{},{},{},{},{}", r.alpha, r.beta, r.communities, r.fold, r.accuracy, r.f1).unwrap();
    }
    out
}

/// Per-point fold means, for accuracy-vs-parameter curves.
pub fn grid_summary_csv(result: &GridSearchResult) -> String {
    let mut out = String::from("alpha,beta,communities,mean_accuracy,mean_f1\n");
    for s in &result.summary {
        writeln!(out, "{},{},{},{},{}", s.alpha, s.beta, s.communities, s.mean_accuracy, s.mean_f1).unwrap();
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
