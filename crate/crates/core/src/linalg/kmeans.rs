use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::{squared_distance, Matrix};
use crate::error::{Error, Result};
use crate::rng::rng_from;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: Vec<usize>,
    pub centers: Matrix,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

/// k-means++ seeded Lloyd clustering of the rows of `points`.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    kmeans_detailed(points, k, seed).map(|r| r.assignment)
}

/// As [`kmeans`], also returning centers and the inertia trace.
///
/// Nearest-center ties go to the lowest center index. A cluster left empty
/// after an assignment step has its center moved onto the point farthest
/// from its own center, which is then reassigned to it.
pub fn kmeans_detailed(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > n {
        return Err(Error::invalid(alloc::format!("k = {k} exceeds the {n} points")));
    }
    points.check_finite("k-means points")?;

    let mut centers = plus_plus_init(points, k, seed);
    let mut assignment = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = assign(points, &centers, &mut assignment);
        changed |= repair_empty(points, &mut centers, &mut assignment, k);
        inertia.push(total_inertia(points, &centers, &assignment));
        if !changed {
            break;
        }
        update_centers(points, &mut centers, &assignment);
    }

    Ok(KMeansResult { assignment, centers, inertia, iterations })
}

fn plus_plus_init(points: &Matrix, k: usize, seed: u64) -> Matrix {
    let n = points.rows();
    let mut rng = rng_from(seed);
    let mut centers = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(points.row(i), points.row(first))).collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(&mut rng),
            // Every point coincides with a chosen center.
            Err(_) => rng.random_range(0..n),
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(squared_distance(points.row(i), centers.row(c)));
        }
    }
    centers
}

fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = squared_distance(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(points: &Matrix, centers: &Matrix, assignment: &mut [usize]) -> bool {
    let mut changed = false;
    for (i, slot) in assignment.iter_mut().enumerate() {
        let (c, _) = nearest(points.row(i), centers);
        if *slot != c {
            *slot = c;
            changed = true;
        }
    }
    changed
}

fn repair_empty(points: &Matrix, centers: &mut Matrix, assignment: &mut [usize], k: usize) -> bool {
    let mut repaired = false;
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repaired;
        };
        // Farthest point among clusters that can spare one.
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &a) in assignment.iter().enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let d = squared_distance(points.row(i), centers.row(a));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n leaves a cluster with two or more points");
        centers.row_mut(empty).copy_from_slice(points.row(i));
        assignment[i] = empty;
        repaired = true;
    }
}

fn update_centers(points: &Matrix, centers: &mut Matrix, assignment: &[usize]) {
    let k = centers.rows();
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        super::axpy(1.0, points.row(i), sums.row_mut(a));
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let inv = 1.0 / count as f64;
            for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }
}

fn total_inertia(points: &Matrix, centers: &Matrix, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &a)| squared_distance(points.row(i), centers.row(a))).sum()
}
