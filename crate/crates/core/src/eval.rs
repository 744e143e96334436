//! Downstream evaluation: a logistic classifier on graph embeddings,
//! accuracy/F1, repeated random-split experiments, the ablation and
//! view-assignment variants, and cross-validated grid search.
//!
//! Repeats and grid cells are independent jobs keyed by derived seeds.
//! The serial drivers here ([`run_experiment`], [`grid_search`]) and any
//! parallel scheduler built on [`run_repeat`] / [`run_grid_job`] produce the
//! same results.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::community::CommunityCache;
use crate::error::{Error, Result};
use crate::graph::{NetworkInstance, ViewKind};
use crate::linalg::dot;
use crate::rng::{derived_rng, stream};
use crate::synthdata::split_dataset;
use crate::training::{embed_instances, repeat_seed, sigmoid, train_with_cache, TrainConfig};

pub const CLASSIFIER_ITERATIONS: usize = 500;
pub const CLASSIFIER_LEARNING_RATE: f64 = 0.1;
pub const TRAIN_FRACTION: f64 = 0.6;

/// Logistic regression `σ(w·g + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LogisticClassifier {
    pub fn probability(&self, g: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, g) + self.bias)
    }

    pub fn predict(&self, g: &[f64]) -> u8 {
        u8::from(self.probability(g) >= 0.5)
    }

    /// Mean binary cross entropy over a labeled set.
    pub fn loss(&self, features: &[Vec<f64>], labels: &[u8]) -> f64 {
        let total: f64 = features
            .iter()
            .zip(labels)
            .map(|(g, &y)| {
                let z = dot(&self.weights, g) + self.bias;
                crate::training::softplus(z) - f64::from(y) * z
            })
            .sum();
        total / features.len() as f64
    }
}

/// Full-batch gradient descent on mean binary cross entropy from zero
/// weights: 500 iterations at learning rate 0.1.
pub fn train_classifier(features: &[Vec<f64>], labels: &[u8]) -> Result<LogisticClassifier> {
    train_classifier_with(features, labels, CLASSIFIER_ITERATIONS, CLASSIFIER_LEARNING_RATE)
}

pub fn train_classifier_with(
    features: &[Vec<f64>],
    labels: &[u8],
    iterations: usize,
    learning_rate: f64,
) -> Result<LogisticClassifier> {
    if features.len() != labels.len() {
        return Err(Error::dim(format!("{} feature vectors for {} labels", features.len(), labels.len())));
    }
    if !(labels.contains(&0) && labels.contains(&1)) {
        return Err(Error::SingleClass("classifier training set".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|g| g.len() != dim) {
        return Err(Error::dim("feature vectors of unequal length"));
    }
    let mut clf = LogisticClassifier { weights: vec![0.0; dim], bias: 0.0 };
    let inv = 1.0 / features.len() as f64;
    let mut grad = vec![0.0; dim];
    for _ in 0..iterations {
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut grad_b = 0.0;
        for (g, &y) in features.iter().zip(labels) {
            let r = clf.probability(g) - f64::from(y);
            grad_b += r;
            crate::linalg::axpy(r, g, &mut grad);
        }
        for (w, d) in clf.weights.iter_mut().zip(&grad) {
            *w -= learning_rate * inv * d;
        }
        clf.bias -= learning_rate * inv * grad_b;
    }
    Ok(clf)
}

fn check_binary(preds: &[u8], labels: &[u8]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::dim(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    if preds.iter().chain(labels).any(|&v| v > 1) {
        return Err(Error::invalid("predictions and labels must be 0 or 1"));
    }
    Ok(())
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_binary(preds, labels)?;
    if preds.is_empty() {
        return Err(Error::invalid("accuracy of an empty prediction set"));
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / preds.len() as f64)
}

/// F1 of the positive class; 0 when precision + recall is 0.
pub fn f1_score(preds: &[u8], labels: &[u8]) -> Result<f64> {
    check_binary(preds, labels)?;
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fneg = 0.0;
    for (&p, &l) in preds.iter().zip(labels) {
        match (p, l) {
            (1, 1) => tp += 1.0,
            (1, 0) => fp += 1.0,
            (0, 1) => fneg += 1.0,
            _ => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Which loss components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ablation {
    /// Single branch, binary cross entropy.
    Gcn,
    /// Single branch plus the community term.
    CpGcn,
    /// Siamese contrastive only.
    SGcn,
    /// Siamese contrastive plus the community term.
    ScpGcn,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Gcn, Ablation::CpGcn, Ablation::SGcn, Ablation::ScpGcn];

    pub fn flags(self) -> (bool, bool) {
        match self {
            Ablation::Gcn => (false, false),
            Ablation::CpGcn => (false, true),
            Ablation::SGcn => (true, false),
            Ablation::ScpGcn => (true, true),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Gcn => "GCN",
            Ablation::CpGcn => "CP-GCN",
            Ablation::SGcn => "S-GCN",
            Ablation::ScpGcn => "SCP-GCN",
        }
    }
}

/// Which view defines graph structure and which supplies node features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewAssignment {
    /// Functional for both.
    Fmri,
    /// Structural for both.
    Dti,
    /// Functional structure, structural features.
    FmriDti,
    /// Structural structure, functional features (the default model).
    DtiFmri,
}

impl ViewAssignment {
    pub const ALL: [ViewAssignment; 4] =
        [ViewAssignment::Fmri, ViewAssignment::Dti, ViewAssignment::FmriDti, ViewAssignment::DtiFmri];

    /// `(structure, features)`.
    pub fn views(self) -> (ViewKind, ViewKind) {
        match self {
            ViewAssignment::Fmri => (ViewKind::Functional, ViewKind::Functional),
            ViewAssignment::Dti => (ViewKind::Structural, ViewKind::Structural),
            ViewAssignment::FmriDti => (ViewKind::Functional, ViewKind::Structural),
            ViewAssignment::DtiFmri => (ViewKind::Structural, ViewKind::Functional),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewAssignment::Fmri => "fMRI",
            ViewAssignment::Dti => "DTI",
            ViewAssignment::FmriDti => "fMRI-DTI",
            ViewAssignment::DtiFmri => "DTI-fMRI",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variant {
    pub ablation: Ablation,
    pub views: ViewAssignment,
}

impl Variant {
    pub const fn new(ablation: Ablation, views: ViewAssignment) -> Self {
        Variant { ablation, views }
    }

    pub const SCP_GCN: Variant = Variant::new(Ablation::ScpGcn, ViewAssignment::DtiFmri);

    /// Overrides the loss and view flags of `base`; everything else is kept.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let (use_siamese, use_cp) = self.ablation.flags();
        let (view_structure, view_features) = self.views.views();
        TrainConfig { use_siamese, use_cp, view_structure, view_features, ..base.clone() }
    }

    /// The variant whose flags `config` carries.
    pub fn from_config(config: &TrainConfig) -> Self {
        let ablation = match (config.use_siamese, config.use_cp) {
            (false, false) => Ablation::Gcn,
            (false, true) => Ablation::CpGcn,
            (true, false) => Ablation::SGcn,
            (true, true) => Ablation::ScpGcn,
        };
        let views = match (config.view_structure, config.view_features) {
            (ViewKind::Functional, ViewKind::Functional) => ViewAssignment::Fmri,
            (ViewKind::Structural, ViewKind::Structural) => ViewAssignment::Dti,
            (ViewKind::Functional, ViewKind::Structural) => ViewAssignment::FmriDti,
            (ViewKind::Structural, ViewKind::Functional) => ViewAssignment::DtiFmri,
        };
        Variant { ablation, views }
    }

    /// `SCP-GCN`, or `SCP-GCN-DTI` style names for non-default views.
    pub fn name(self) -> String {
        if self.views == ViewAssignment::DtiFmri {
            self.ablation.name().to_string()
        } else {
            format!("{}-{}", self.ablation.name(), self.views.name())
        }
    }

    /// The four loss ablations followed by the four view assignments.
    pub fn ablation_suite() -> Vec<Variant> {
        let mut out: Vec<Variant> = Ablation::ALL.iter().map(|&a| Variant::new(a, ViewAssignment::DtiFmri)).collect();
        out.extend(ViewAssignment::ALL.iter().map(|&v| Variant::new(Ablation::ScpGcn, v)));
        out
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(&self.name())
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    /// Accepts `gcn`, `cp-gcn`, `s-gcn`, `scp-gcn`, optionally suffixed with
    /// `-fmri`, `-dti`, `-fmri-dti` or `-dti-fmri`; case-insensitive.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        for (prefix, ablation) in [
            ("scp-gcn", Ablation::ScpGcn),
            ("cp-gcn", Ablation::CpGcn),
            ("s-gcn", Ablation::SGcn),
            ("gcn", Ablation::Gcn),
        ] {
            if let Some(rest) = lower.strip_prefix(prefix) {
                let views = match rest {
                    "" | "-dti-fmri" => ViewAssignment::DtiFmri,
                    "-fmri-dti" => ViewAssignment::FmriDti,
                    "-fmri" => ViewAssignment::Fmri,
                    "-dti" => ViewAssignment::Dti,
                    _ => continue,
                };
                return Ok(Variant::new(ablation, views));
            }
        }
        Err(Error::invalid(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub f1: f64,
}

/// Trains on `train`, fits the logistic classifier on the training
/// embeddings and scores it on `test`.
pub fn evaluate_split(
    train: &[NetworkInstance],
    test: &[NetworkInstance],
    config: &TrainConfig,
    cache: &mut CommunityCache,
) -> Result<Scores> {
    let outcome = train_with_cache(train, config, cache)?;
    let train_g: Vec<Vec<f64>> =
        embed_instances(&outcome.model, train, config)?.into_iter().map(|e| e.graph_embedding).collect();
    let test_g: Vec<Vec<f64>> =
        embed_instances(&outcome.model, test, config)?.into_iter().map(|e| e.graph_embedding).collect();
    let train_labels = crate::graph::labels(train);
    let test_labels = crate::graph::labels(test);
    let clf = train_classifier(&train_g, &train_labels)?;
    let preds: Vec<u8> = test_g.iter().map(|g| clf.predict(g)).collect();
    Ok(Scores { accuracy: accuracy(&preds, &test_labels)?, f1: f1_score(&preds, &test_labels)? })
}

fn select(dataset: &[NetworkInstance], idx: &[usize]) -> Vec<NetworkInstance> {
    idx.iter().map(|&i| dataset[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Repeat `r`: fresh stratified 60/40 split and training, both seeded by
/// the repeat seed derived from `config.seed`.
pub fn run_repeat(
    dataset: &[NetworkInstance],
    variant: Variant,
    config: &TrainConfig,
    repeat: usize,
    cache: &mut CommunityCache,
) -> Result<RepeatOutcome> {
    let seed = repeat_seed(config.seed, repeat);
    let labels = crate::graph::labels(dataset);
    let (train_idx, test_idx) = split_dataset(&labels, TRAIN_FRACTION, seed)?;
    let cfg = TrainConfig { seed, ..variant.apply(config) };
    let s = evaluate_split(&select(dataset, &train_idx), &select(dataset, &test_idx), &cfg, cache)?;
    Ok(RepeatOutcome { repeat, seed, accuracy: s.accuracy, f1: s.f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: String,
    pub repeats: usize,
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub seeds: Vec<u64>,
    pub config: TrainConfig,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

impl ExperimentReport {
    /// Aggregates repeat outcomes in repeat order, whatever order they
    /// arrive in.
    pub fn from_outcomes(variant: Variant, config: &TrainConfig, mut outcomes: Vec<RepeatOutcome>) -> Self {
        outcomes.sort_by_key(|o| o.repeat);
        let accuracy: Vec<f64> = outcomes.iter().map(|o| o.accuracy).collect();
        let f1: Vec<f64> = outcomes.iter().map(|o| o.f1).collect();
        let (accuracy_mean, accuracy_std) = mean_std(&accuracy);
        let (f1_mean, f1_std) = mean_std(&f1);
        ExperimentReport {
            variant: variant.name(),
            repeats: outcomes.len(),
            seeds: outcomes.iter().map(|o| o.seed).collect(),
            accuracy,
            f1,
            accuracy_mean,
            accuracy_std,
            f1_mean,
            f1_std,
            config: variant.apply(config),
        }
    }
}

pub fn run_experiment(
    dataset: &[NetworkInstance],
    variant: Variant,
    config: &TrainConfig,
    repeats: usize,
) -> Result<ExperimentReport> {
    let mut cache = CommunityCache::new();
    let outcomes =
        (0..repeats).map(|r| run_repeat(dataset, variant, config, r, &mut cache)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport::from_outcomes(variant, config, outcomes))
}

/// Stratified `k`-fold partition: each class is shuffled and dealt round
/// robin. Every fold must hold both classes.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let mut rng = derived_rng(seed, stream::FOLD, 0);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for m in members {
            folds[next % k].push(m);
            next += 1;
        }
    }
    for (f, fold) in folds.iter_mut().enumerate() {
        fold.sort_unstable();
        let ones = fold.iter().filter(|&&i| labels[i] == 1).count();
        if ones == 0 || ones == fold.len() {
            return Err(Error::SingleClass(format!("cross-validation fold {f}")));
        }
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub communities: Vec<usize>,
}

impl Grid {
    /// `{10⁻³, …, 10³}` for α and β, `{2, …, 10}` for C.
    pub fn coarse() -> Self {
        let decades: Vec<f64> = (-3..=3).map(|e| libm::pow(10.0, f64::from(e))).collect();
        Grid { alphas: decades.clone(), betas: decades, communities: (2..=10).collect() }
    }

    /// Grid points ordered by (C, α, β) ascending: the tie-break order.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.alphas.is_empty() || self.betas.is_empty() || self.communities.is_empty() {
            return Err(Error::invalid("grid axes must be non-empty"));
        }
        let mut out = Vec::new();
        for &communities in &self.communities {
            for &alpha in &self.alphas {
                for &beta in &self.betas {
                    out.push(GridPoint { alpha, beta, communities });
                }
            }
        }
        out.sort_by(|a, b| a.order_key(b));
        out.dedup();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub beta: f64,
    pub communities: usize,
}

impl GridPoint {
    fn order_key(&self, other: &Self) -> core::cmp::Ordering {
        self.communities
            .cmp(&other.communities)
            .then(self.alpha.total_cmp(&other.alpha))
            .then(self.beta.total_cmp(&other.beta))
    }

    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        TrainConfig { alpha: self.alpha, beta: self.beta, communities: self.communities, ..base.clone() }
    }
}

/// One cell of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alpha: f64,
    pub beta: f64,
    pub communities: usize,
    pub fold: usize,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub alpha: f64,
    pub beta: f64,
    pub communities: usize,
    pub mean_accuracy: f64,
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: GridPoint,
    pub best_accuracy: f64,
    pub summary: Vec<GridSummary>,
    pub table: Vec<GridRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridJob {
    pub point: GridPoint,
    pub fold: usize,
}

pub fn grid_jobs(grid: &Grid, folds: usize) -> Result<Vec<GridJob>> {
    Ok(grid.points()?.into_iter().flat_map(|point| (0..folds).map(move |fold| GridJob { point, fold })).collect())
}

/// Trains on every fold but `job.fold` and scores the held-out fold.
pub fn run_grid_job(
    dataset: &[NetworkInstance],
    folds: &[Vec<usize>],
    job: GridJob,
    base: &TrainConfig,
    cache: &mut CommunityCache,
) -> Result<GridRow> {
    let held_out = &folds[job.fold];
    let train_idx: Vec<usize> =
        folds.iter().enumerate().filter(|(f, _)| *f != job.fold).flat_map(|(_, idx)| idx.iter().copied()).collect();
    let cfg = job.point.apply(base);
    let s = evaluate_split(&select(dataset, &train_idx), &select(dataset, held_out), &cfg, cache)?;
    Ok(GridRow {
        alpha: job.point.alpha,
        beta: job.point.beta,
        communities: job.point.communities,
        fold: job.fold,
        accuracy: s.accuracy,
        f1: s.f1,
    })
}

/// Averages rows per grid point and picks the highest mean accuracy, ties
/// going to smaller C, then smaller α, then smaller β.
pub fn summarize_grid(grid: &Grid, mut table: Vec<GridRow>) -> Result<GridSearchResult> {
    let points = grid.points()?;
    table.sort_by(|a, b| {
        let pa = GridPoint { alpha: a.alpha, beta: a.beta, communities: a.communities };
        let pb = GridPoint { alpha: b.alpha, beta: b.beta, communities: b.communities };
        pa.order_key(&pb).then(a.fold.cmp(&b.fold))
    });
    let mut summary = Vec::with_capacity(points.len());
    for p in &points {
        let rows: Vec<&GridRow> =
            table.iter().filter(|r| r.communities == p.communities && r.alpha == p.alpha && r.beta == p.beta).collect();
        if rows.is_empty() {
            return Err(Error::invalid(format!("no results for grid point {p:?}")));
        }
        let k = rows.len() as f64;
        summary.push(GridSummary {
            alpha: p.alpha,
            beta: p.beta,
            communities: p.communities,
            mean_accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / k,
            mean_f1: rows.iter().map(|r| r.f1).sum::<f64>() / k,
        });
    }
    // `summary` follows the tie-break order, so the first maximum wins.
    let mut best = 0;
    for (i, s) in summary.iter().enumerate() {
        if s.mean_accuracy > summary[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridSearchResult { best: points[best], best_accuracy: summary[best].mean_accuracy, summary, table })
}

/// Stratified `folds`-fold cross-validation of every grid point on
/// `dataset` (normally the training split). Fold assignment and training
/// are seeded from `base.seed`, so all grid points see the same folds and
/// initializations.
pub fn grid_search(
    dataset: &[NetworkInstance],
    grid: &Grid,
    folds: usize,
    base: &TrainConfig,
) -> Result<GridSearchResult> {
    let fold_idx = stratified_folds(&crate::graph::labels(dataset), folds, base.seed)?;
    let mut cache = CommunityCache::new();
    let rows = grid_jobs(grid, folds)?
        .into_iter()
        .map(|job| run_grid_job(dataset, &fold_idx, job, base, &mut cache))
        .collect::<Result<Vec<_>>>()?;
    summarize_grid(grid, rows)
}
