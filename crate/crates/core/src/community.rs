//! Community structure of structural networks: normalized-cut spectral
//! clustering, community centers in embedding space and partition
//! agreement scoring.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{inverse_sqrt_degrees, normalized_laplacian};
use crate::linalg::{kmeans, symmetric_eigendecomposition, Matrix};

/// A partition of `n` nodes into `count` non-empty communities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CommunityAssignment {
    membership: Vec<usize>,
    sets: Vec<Vec<usize>>,
}

impl CommunityAssignment {
    /// Builds the partition from per-node labels `0..count`. Labels must be
    /// contiguous: every community needs at least one member.
    pub fn from_membership(membership: Vec<usize>, count: usize) -> Result<Self> {
        let mut sets = vec![Vec::new(); count];
        for (node, &c) in membership.iter().enumerate() {
            if c >= count {
                return Err(Error::invalid(format!("node {node} has community {c} >= {count}")));
            }
            sets[c].push(node);
        }
        if let Some(empty) = sets.iter().position(Vec::is_empty) {
            return Err(Error::EmptyCommunity(empty));
        }
        Ok(CommunityAssignment { membership, sets })
    }

    /// Every node in community 0.
    pub fn single(n: usize) -> Result<Self> {
        Self::from_membership(vec![0; n], 1)
    }

    pub fn node_count(&self) -> usize {
        self.membership.len()
    }

    pub fn community_count(&self) -> usize {
        self.sets.len()
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    /// `S_c`: indices of the nodes in community `c`, ascending.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.sets[c]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Relabels communities by ascending smallest member, so the community
    /// holding node 0 is always community 0.
    pub fn canonical(&self) -> Self {
        let mut order: Vec<usize> = (0..self.sets.len()).collect();
        order.sort_by_key(|&c| self.sets[c][0]);
        let mut relabel = vec![0; self.sets.len()];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new;
        }
        let membership = self.membership.iter().map(|&c| relabel[c]).collect();
        Self::from_membership(membership, self.sets.len()).expect("relabeling keeps communities non-empty")
    }
}

impl TryFrom<Vec<usize>> for CommunityAssignment {
    type Error = Error;

    fn try_from(membership: Vec<usize>) -> Result<Self> {
        let count = membership.iter().max().map_or(0, |m| m + 1);
        Self::from_membership(membership, count)
    }
}

impl From<CommunityAssignment> for Vec<usize> {
    fn from(a: CommunityAssignment) -> Self {
        a.membership
    }
}

/// Shi–Malik normalized-cut clustering of a structural network into
/// `count` communities.
///
/// Takes the eigenvectors of the `count` smallest eigenvalues of the
/// normalized Laplacian, rescales row `i` by `d_i^(−1/2)` (the random-walk
/// embedding) and runs k-means++ on the rows. The result is canonically
/// labeled.
pub fn spectral_communities(adjacency: &Matrix, count: usize, seed: u64) -> Result<CommunityAssignment> {
    let n = adjacency.rows();
    if count == 0 {
        return Err(Error::invalid("community count must be at least 1"));
    }
    if count > n {
        return Err(Error::invalid(format!("{count} communities requested for {n} nodes")));
    }
    let laplacian = normalized_laplacian(adjacency)?;
    if count == 1 {
        return CommunityAssignment::single(n);
    }
    let eig = symmetric_eigendecomposition(&laplacian)?;
    let scale = inverse_sqrt_degrees(adjacency);
    let embedding = Matrix::from_fn(n, count, |i, k| eig.vectors[(i, k)] * scale[i]);
    let labels = kmeans(&embedding, count, seed)?;
    Ok(CommunityAssignment::from_membership(labels, count)?.canonical())
}

/// Row `c` is the mean of the rows of `z` indexed by `S_c`.
pub fn community_centers(z: &Matrix, assignment: &CommunityAssignment) -> Result<Matrix> {
    if z.rows() != assignment.node_count() {
        return Err(Error::dim(format!("{} embedding rows for {} assigned nodes", z.rows(), assignment.node_count())));
    }
    let mut centers = Matrix::zeros(assignment.community_count(), z.cols());
    for (c, members) in assignment.sets().iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        let row = centers.row_mut(c);
        for &i in members {
            for (dst, &v) in row.iter_mut().zip(z.row(i)) {
                *dst += v;
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(centers)
}

fn pairs(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

/// Hubert–Arabie adjusted Rand index. Labels may be arbitrary integers.
/// Two partitions that are both trivial in the same way score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("partitions of {} and {} nodes", a.len(), b.len())));
    }
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len());
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Memoized per-instance clustering keyed by `(instance id, count, seed)`.
/// The adjacency is stored with each entry and compared on lookup, so a
/// different view or dataset reusing an id is clustered afresh.
#[derive(Debug, Default, Clone)]
pub struct CommunityCache {
    entries: BTreeMap<(String, usize, u64), (Matrix, CommunityAssignment)>,
}

impl CommunityCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        id: &str,
        adjacency: &Matrix,
        count: usize,
        seed: u64,
    ) -> Result<&CommunityAssignment> {
        let key = (String::from(id), count, seed);
        let fresh = match self.entries.get(&key) {
            Some((a, _)) => a != adjacency,
            None => true,
        };
        if fresh {
            let a = spectral_communities(adjacency, count, seed)?;
            self.entries.insert(key.clone(), (adjacency.clone(), a));
        }
        Ok(&self.entries[&key].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;
    use rand::Rng as _;

    fn two_triangles() -> Matrix {
        let mut a = Matrix::zeros(6, 6);
        for &(i, j) in &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)] {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    #[test]
    fn disjoint_triangles_split_exactly() {
        let c = spectral_communities(&two_triangles(), 2, 0).unwrap();
        assert_eq!(c.membership(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn one_community_holds_everything() {
        let c = spectral_communities(&two_triangles(), 1, 0).unwrap();
        assert_eq!(c.membership(), &[0; 6]);
        assert_eq!(c.community_count(), 1);
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(spectral_communities(&two_triangles(), 0, 0).is_err());
        assert!(spectral_communities(&two_triangles(), 7, 0).is_err());
    }

    #[test]
    fn interleaved_components_get_canonical_labels() {
        // Components {1,3,5} and {0,2,4}: node 0's community must be 0.
        let mut a = Matrix::zeros(6, 6);
        for &(i, j) in &[(1, 3), (3, 5), (1, 5), (0, 2), (2, 4), (0, 4)] {
            a[(i, j)] = 2.0;
            a[(j, i)] = 2.0;
        }
        for seed in 0..5 {
            let c = spectral_communities(&a, 2, seed).unwrap();
            assert_eq!(c.membership(), &[0, 1, 0, 1, 0, 1]);
        }
    }

    #[test]
    fn centers_of_small_communities() {
        let z = Matrix::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0], vec![5.0, -1.0]]).unwrap();
        let a = CommunityAssignment::from_membership(vec![0, 0, 1], 2).unwrap();
        let c = community_centers(&z, &a).unwrap();
        assert_eq!(c.row(0), &[1.0, 1.0]);
        assert_eq!(c.row(1), &[5.0, -1.0]);
        assert!(community_centers(&Matrix::zeros(2, 2), &a).is_err());
    }

    #[test]
    fn centers_match_per_coordinate_means() {
        let mut rng = rng_from(21);
        let z = Matrix::from_fn(20, 4, |_, _| rng.random_range(-3.0..3.0));
        let mut membership: Vec<usize> = (0..20).map(|i| i % 5).collect();
        membership.swap(3, 17);
        let a = CommunityAssignment::from_membership(membership.clone(), 5).unwrap();
        let centers = community_centers(&z, &a).unwrap();
        for c in 0..5 {
            for d in 0..4 {
                let mut sum = 0.0;
                let mut count = 0.0;
                for i in 0..20 {
                    if membership[i] == c {
                        sum += z[(i, d)];
                        count += 1.0;
                    }
                }
                assert!((centers[(c, d)] - sum / count).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn assignment_rejects_empty_and_out_of_range() {
        assert!(matches!(CommunityAssignment::from_membership(vec![0, 0, 2], 3), Err(Error::EmptyCommunity(1))));
        assert!(CommunityAssignment::from_membership(vec![0, 3], 2).is_err());
    }

    /// Pair-counting form of ARI, independent of the contingency route.
    fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
        let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => n11 += 1.0,
                    (true, false) => n10 += 1.0,
                    (false, true) => n01 += 1.0,
                    (false, false) => n00 += 1.0,
                }
            }
        }
        2.0 * (n00 * n11 - n01 * n10) / ((n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11))
    }

    #[test]
    fn ari_identical_and_relabeled() {
        let a = [0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&a, &[7, 7, 3, 3, 9, 9]).unwrap(), 1.0);
        assert!(adjusted_rand_index(&a, &[0, 1]).is_err());
    }

    #[test]
    fn ari_one_block_vs_singletons_matches_pair_counting() {
        let one = [0; 6];
        let singles = [0, 1, 2, 3, 4, 5];
        let got = adjusted_rand_index(&one, &singles).unwrap();
        assert_eq!(got, ari_by_pairs(&one, &singles));
        assert_eq!(got, 0.0);
    }

    #[test]
    fn ari_random_partitions_match_pair_counting() {
        let mut rng = rng_from(5);
        for _ in 0..20 {
            let a: Vec<usize> = (0..15).map(|_| rng.random_range(0..3)).collect();
            let b: Vec<usize> = (0..15).map(|_| rng.random_range(0..4)).collect();
            let x = adjusted_rand_index(&a, &b).unwrap();
            assert!((x - ari_by_pairs(&a, &b)).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn cache_reuses_entries() {
        let mut cache = CommunityCache::new();
        let a = two_triangles();
        let first = cache.get_or_compute("s1", &a, 2, 0).unwrap().clone();
        let again = cache.get_or_compute("s1", &a, 2, 0).unwrap().clone();
        assert_eq!(first, again);
        assert_eq!(cache.len(), 1);
        cache.get_or_compute("s1", &a, 3, 0).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn cache_notices_a_different_graph_under_the_same_id() {
        let mut cache = CommunityCache::new();
        let a = two_triangles();
        // Path 0-1-2-3-4-5 split in the middle.
        let mut b = Matrix::zeros(6, 6);
        for i in 0..5 {
            b[(i, i + 1)] = 1.0;
            b[(i + 1, i)] = 1.0;
        }
        let first = cache.get_or_compute("s", &a, 2, 0).unwrap().canonical();
        let second = cache.get_or_compute("s", &b, 2, 0).unwrap().canonical();
        assert_eq!(first.membership(), [0, 0, 0, 1, 1, 1]);
        assert_eq!(second, spectral_communities(&b, 2, 0).unwrap().canonical());
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn serde_round_trip_through_membership() {
        let a = CommunityAssignment::from_membership(vec![0, 1, 1, 0], 2).unwrap();
        let v: Vec<usize> = a.clone().into();
        assert_eq!(CommunityAssignment::try_from(v).unwrap(), a);
    }
}
