//! Parallel drivers over the core's independent jobs. Each job carries its
//! own derived seed, so any `jobs` value gives the same results as the
//! serial drivers.

use rayon::prelude::*;
use scpgcn_core::community::CommunityCache;
use scpgcn_core::eval::{
    self, grid_jobs, run_grid_job, run_repeat, stratified_folds, summarize_grid, ExperimentReport, Grid,
    GridSearchResult, Variant,
};
use scpgcn_core::graph::{labels, NetworkInstance};
use scpgcn_core::training::TrainConfig;
use scpgcn_core::Result;

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("failed to start worker threads")
}

pub fn run_experiment(
    dataset: &[NetworkInstance],
    variant: Variant,
    config: &TrainConfig,
    repeats: usize,
    jobs: usize,
) -> Result<ExperimentReport> {
    if jobs <= 1 {
        return eval::run_experiment(dataset, variant, config, repeats);
    }
    let outcomes = pool(jobs).install(|| {
        (0..repeats)
            .into_par_iter()
            .map_init(CommunityCache::new, |cache, r| run_repeat(dataset, variant, config, r, cache))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(ExperimentReport::from_outcomes(variant, config, outcomes))
}

pub fn grid_search(
    dataset: &[NetworkInstance],
    grid: &Grid,
    folds: usize,
    base: &TrainConfig,
    jobs: usize,
) -> Result<GridSearchResult> {
    if jobs <= 1 {
        return eval::grid_search(dataset, grid, folds, base);
    }
    let fold_idx = stratified_folds(&labels(dataset), folds, base.seed)?;
    let work = grid_jobs(grid, folds)?;
    let rows = pool(jobs).install(|| {
        work.into_par_iter()
            .map_init(CommunityCache::new, |cache, job| run_grid_job(dataset, &fold_idx, job, base, cache))
            .collect::<Result<Vec<_>>>()
    })?;
    summarize_grid(grid, rows)
}
