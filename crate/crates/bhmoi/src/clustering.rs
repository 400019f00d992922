//! Overlap-based clustering of gridded densities.
//!
//! A partition of n densities into K clusters is scored by the overlapping
//! clustering index (OCI): each cluster contributes the overlap of its
//! members with the cluster mean, weighted by `p_m^a` where `p_m` is either
//! `1/K` (Uniform) or `n_m/n` (Proportional). The same partition has a
//! complementary weighted K-Means objective built from total variation
//! distances with weights `(1 - p_m)^b`; under Uniform weights maximizing
//! OCI over partitions is exactly minimizing that objective.
//!
//! Within-cluster homogeneity is scored by the overlapping borrowing index
//! (OBI): the average pairwise overlap of the cluster's members.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{mixture_mean, ovl, GriddedDensity};
use crate::error::{Error, Result};
use crate::stats::derive_rng;
use crate::DEFAULT_SEED;

/// Largest instance accepted by the exhaustive-search oracle.
pub const EXHAUSTIVE_LIMIT: usize = 12;

const STREAM_KMEANS: u64 = 0x6B6D;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `p_m = 1/K`.
    Uniform,
    /// `p_m = n_m / n`.
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub weight_mode: WeightMode,
    /// Cluster-weight exponent in the OCI, in (0, 1].
    pub a: f64,
    /// Dispersion-weight exponent in the K-Means objective, at least 1.
    pub b: f64,
    /// Inclusive range of cluster counts to scan; `None` means `[1, n]`.
    pub k_range: Option<(usize, usize)>,
    /// Independent seedings per cluster count.
    pub restarts: usize,
    /// Cap on Lloyd iterations within one restart.
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            weight_mode: WeightMode::Uniform,
            a: 0.5,
            b: 1.0,
            k_range: None,
            restarts: 20,
            max_iterations: 64,
            seed: DEFAULT_SEED,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        validate_a(self.a)?;
        validate_b(self.b)?;
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be positive".into(),
            ));
        }
        if let Some((lo, hi)) = self.k_range {
            if lo < 1 || lo > hi || hi > n {
                return Err(Error::InvalidParameter(format!(
                    "k_range [{lo}, {hi}] invalid for {n} densities"
                )));
            }
        }
        Ok(())
    }

    pub fn k_bounds(&self, n: usize) -> (usize, usize) {
        self.k_range.unwrap_or((1, n))
    }
}

fn validate_a(a: f64) -> Result<()> {
    if !a.is_finite() || a <= 0.0 || a > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "weight exponent a must lie in (0, 1], got {a}"
        )));
    }
    Ok(())
}

fn validate_b(b: f64) -> Result<()> {
    if !b.is_finite() || b < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "dispersion exponent b must be at least 1, got {b}"
        )));
    }
    Ok(())
}

/// A validated partition of densities into non-empty clusters, together with
/// the per-cluster mixture means.
#[derive(Clone, Debug)]
pub struct ClusterPartition {
    assignments: Vec<usize>,
    k: usize,
    sizes: Vec<usize>,
    cluster_means: Vec<GriddedDensity>,
}

impl ClusterPartition {
    pub fn from_assignments(
        densities: &[GriddedDensity],
        assignments: Vec<usize>,
        k: usize,
    ) -> Result<Self> {
        if assignments.len() != densities.len() {
            return Err(Error::InconsistentPartition(format!(
                "{} assignments for {} densities",
                assignments.len(),
                densities.len()
            )));
        }
        if densities.is_empty() || k == 0 {
            return Err(Error::InconsistentPartition(
                "need at least one density and one cluster".into(),
            ));
        }
        let mut sizes = vec![0usize; k];
        for (i, &m) in assignments.iter().enumerate() {
            if m >= k {
                return Err(Error::InconsistentPartition(format!(
                    "density {i} assigned to cluster {m} of {k}"
                )));
            }
            sizes[m] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::EmptyCluster);
        }
        let cluster_means = means_of(densities, &assignments, k)?;
        Ok(ClusterPartition { assignments, k, sizes, cluster_means })
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn cluster_means(&self) -> &[GriddedDensity] {
        &self.cluster_means
    }

    pub fn members(&self, m: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c == m).then_some(i))
            .collect()
    }
}

fn means_of(
    densities: &[GriddedDensity],
    assignments: &[usize],
    k: usize,
) -> Result<Vec<GriddedDensity>> {
    (0..k)
        .map(|m| {
            let members: Vec<&GriddedDensity> = assignments
                .iter()
                .zip(densities)
                .filter_map(|(&c, d)| (c == m).then_some(d))
                .collect();
            mixture_mean(&members)
        })
        .collect()
}

/// Cluster weights `p_m` for the given mode.
fn cluster_weights(mode: WeightMode, sizes: &[usize], n: usize) -> Vec<f64> {
    let k = sizes.len();
    match mode {
        WeightMode::Uniform => vec![1.0 / k as f64; k],
        WeightMode::Proportional => sizes.iter().map(|&s| s as f64 / n as f64).collect(),
    }
}

fn oci_of_assignment(
    densities: &[GriddedDensity],
    assignments: &[usize],
    means: &[GriddedDensity],
    sizes: &[usize],
    a: f64,
    mode: WeightMode,
) -> Result<f64> {
    let p = cluster_weights(mode, sizes, densities.len());
    let mut total = 0.0;
    for (i, &m) in assignments.iter().enumerate() {
        total += p[m].powf(a) * ovl(&means[m], &densities[i])?;
    }
    Ok(total)
}

fn wkm_of_assignment(
    densities: &[GriddedDensity],
    assignments: &[usize],
    means: &[GriddedDensity],
    sizes: &[usize],
    b: f64,
    mode: WeightMode,
) -> Result<f64> {
    let p = cluster_weights(mode, sizes, densities.len());
    let mut total = 0.0;
    for (i, &m) in assignments.iter().enumerate() {
        total += (1.0 - p[m]).powf(b) * (1.0 - ovl(&means[m], &densities[i])?);
    }
    Ok(total)
}

/// Overlapping clustering index of a partition at exponent `a`.
pub fn oci_score(
    densities: &[GriddedDensity],
    partition: &ClusterPartition,
    a: f64,
    mode: WeightMode,
) -> Result<f64> {
    validate_a(a)?;
    check_partition(densities, partition)?;
    oci_of_assignment(
        densities,
        &partition.assignments,
        &partition.cluster_means,
        &partition.sizes,
        a,
        mode,
    )
}

/// Weighted K-Means objective of a partition at exponent `b`.
pub fn wkm_objective(
    densities: &[GriddedDensity],
    partition: &ClusterPartition,
    b: f64,
    mode: WeightMode,
) -> Result<f64> {
    validate_b(b)?;
    check_partition(densities, partition)?;
    wkm_of_assignment(
        densities,
        &partition.assignments,
        &partition.cluster_means,
        &partition.sizes,
        b,
        mode,
    )
}

fn check_partition(densities: &[GriddedDensity], partition: &ClusterPartition) -> Result<()> {
    if partition.assignments.len() != densities.len() {
        return Err(Error::InconsistentPartition(format!(
            "partition covers {} densities, got {}",
            partition.assignments.len(),
            densities.len()
        )));
    }
    Ok(())
}

/// Overlapping borrowing index of one cluster: the mean pairwise overlap of
/// its members. Singleton clusters score 0 by definition.
///
/// Member order does not matter; indices are sorted internally so the
/// floating-point result is bit-stable under permutation.
pub fn obi_score(densities: &[GriddedDensity], member_indices: &[usize]) -> Result<f64> {
    if member_indices.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let mut idx = member_indices.to_vec();
    idx.sort_unstable();
    for w in idx.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InconsistentPartition(format!(
                "duplicate member index {}",
                w[0]
            )));
        }
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= densities.len()) {
        return Err(Error::InconsistentPartition(format!(
            "member index {bad} out of range for {} densities",
            densities.len()
        )));
    }
    let m = idx.len();
    if m == 1 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            total += ovl(&densities[idx[i]], &densities[idx[j]])?;
        }
    }
    Ok(2.0 * total / (m as f64 * (m - 1) as f64))
}

/// Result of scanning cluster counts and selecting the OCI-optimal one.
#[derive(Clone, Debug)]
pub struct ClusteringResult {
    pub partition: ClusterPartition,
    pub k: usize,
    /// OCI of the selected partition at the configured exponent.
    pub oci: f64,
    /// OCI of the best partition found at each scanned cluster count.
    pub oci_by_k: Vec<(usize, f64)>,
    /// Per-cluster borrowing index of the selected partition.
    pub obi: Vec<f64>,
    /// Weighted K-Means objective of the selected partition.
    pub wkm_objective: f64,
    pub config: ClusteringConfig,
}

fn pairwise_tv(densities: &[GriddedDensity]) -> Result<Vec<Vec<f64>>> {
    let n = densities.len();
    let mut m = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - ovl(&densities[i], &densities[j])?;
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// K-Means++ style seeding on the total-variation matrix: medoid indices,
/// each subsequent one drawn with probability proportional to the squared
/// distance to the nearest already chosen seed.
fn seed_medoids(tv: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = tv.len();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    while chosen.len() < k {
        let dd: Vec<f64> = (0..n)
            .map(|i| {
                let d = chosen.iter().map(|&c| tv[i][c]).fold(f64::INFINITY, f64::min);
                d * d
            })
            .collect();
        let total: f64 = dd.iter().sum();
        if total > 0.0 {
            let x = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = None;
            for (i, &w) in dd.iter().enumerate() {
                cum += w;
                if x < cum {
                    pick = Some(i);
                    break;
                }
            }
            chosen.push(pick.unwrap_or_else(|| {
                dd.iter().rposition(|&w| w > 0.0).expect("positive total")
            }));
        } else {
            // Every density coincides with a chosen seed; fall back to a
            // uniform draw over the unchosen indices.
            let unchosen: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            chosen.push(unchosen[rng.random_range(0..unchosen.len())]);
        }
    }
    chosen
}

/// Moves one donor density into each empty cluster: the density farthest in
/// total variation from its current centroid, taken from a cluster that can
/// spare it. Ties pick the lowest density index.
fn repair_empty_clusters(
    assignments: &mut [usize],
    sizes: &mut [usize],
    dist_to_centroid: &[f64],
) {
    let k = sizes.len();
    for m in 0..k {
        while sizes[m] == 0 {
            let mut donor: Option<usize> = None;
            for (i, &c) in assignments.iter().enumerate() {
                if sizes[c] < 2 {
                    continue;
                }
                match donor {
                    None => donor = Some(i),
                    Some(d) if dist_to_centroid[i] > dist_to_centroid[d] => donor = Some(i),
                    _ => {}
                }
            }
            let d = donor.expect("a donor cluster with at least two members exists");
            sizes[assignments[d]] -= 1;
            assignments[d] = m;
            sizes[m] += 1;
        }
    }
}

struct LloydRun {
    objective: f64,
    assignments: Vec<usize>,
    /// Objective after each accepted update; non-increasing by construction.
    #[cfg_attr(not(test), allow(dead_code))]
    trace: Vec<f64>,
}

fn lloyd_run(
    densities: &[GriddedDensity],
    tv: &[Vec<f64>],
    k: usize,
    b: f64,
    mode: WeightMode,
    max_iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Result<LloydRun> {
    let n = densities.len();
    let seeds = seed_medoids(tv, k, rng);

    // Initial assignment: nearest seed medoid, ties to the lowest cluster.
    let mut assignments: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0usize;
            for (c, &s) in seeds.iter().enumerate().skip(1) {
                if tv[i][s] < tv[i][seeds[best]] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let mut sizes = count_sizes(&assignments, k);
    let seed_dist: Vec<f64> = (0..n).map(|i| tv[i][seeds[assignments[i]]]).collect();
    repair_empty_clusters(&mut assignments, &mut sizes, &seed_dist);

    let mut means = means_of(densities, &assignments, k)?;
    let mut objective = wkm_of_assignment(densities, &assignments, &means, &sizes, b, mode)?;
    let mut trace = vec![objective];

    for _ in 0..max_iterations {
        // One assignment pass against the current means, with dispersion
        // weights frozen at the current cluster sizes.
        let p = cluster_weights(mode, &sizes, n);
        let w: Vec<f64> = p.iter().map(|pm| (1.0 - pm).powf(b)).collect();
        let mut tv_to_mean = vec![0.0f64; n];
        let mut next: Vec<usize> = Vec::with_capacity(n);
        for (i, d) in densities.iter().enumerate() {
            let mut best = 0usize;
            let mut best_cost = f64::INFINITY;
            let mut best_tv = 0.0;
            for (m, g) in means.iter().enumerate() {
                let t = 1.0 - ovl(g, d)?;
                let cost = w[m] * t;
                if cost < best_cost {
                    best_cost = cost;
                    best = m;
                    best_tv = t;
                }
            }
            tv_to_mean[i] = best_tv;
            next.push(best);
        }
        let mut next_sizes = count_sizes(&next, k);
        repair_empty_clusters(&mut next, &mut next_sizes, &tv_to_mean);

        if next == assignments {
            break;
        }
        let next_means = means_of(densities, &next, k)?;
        let next_obj = wkm_of_assignment(densities, &next, &next_means, &next_sizes, b, mode)?;
        // The centroid of this objective is the mixture mean, which is not
        // the within-cluster minimizer of total variation, so a pass is not
        // guaranteed to improve. Accept only strict improvements; this keeps
        // the objective trace non-increasing and the run terminating.
        if next_obj < objective - 1e-12 {
            assignments = next;
            sizes = next_sizes;
            means = next_means;
            objective = next_obj;
            trace.push(objective);
        } else {
            break;
        }
    }

    Ok(LloydRun { objective, assignments, trace })
}

fn count_sizes(assignments: &[usize], k: usize) -> Vec<usize> {
    let mut sizes = vec![0usize; k];
    for &m in assignments {
        sizes[m] += 1;
    }
    sizes
}

/// Best partition into exactly `k` clusters found by restarted Lloyd runs.
///
/// Restarts draw their RNG streams from `(seed, k, restart)`, so results are
/// reproducible regardless of scheduling. `k = 1` and `k = n` are exact and
/// need no search.
pub fn weighted_kmeans(
    densities: &[GriddedDensity],
    k: usize,
    config: &ClusteringConfig,
) -> Result<ClusterPartition> {
    let n = densities.len();
    if n == 0 {
        return Err(Error::NoSampleSets);
    }
    config.validate(n)?;
    if k < 1 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {k} outside [1, {n}]"
        )));
    }
    if k == 1 {
        return ClusterPartition::from_assignments(densities, vec![0; n], 1);
    }
    if k == n {
        return ClusterPartition::from_assignments(densities, (0..n).collect(), n);
    }
    let tv = pairwise_tv(densities)?;
    let runs: Vec<LloydRun> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = derive_rng(config.seed, &[STREAM_KMEANS, k as u64, r as u64]);
            lloyd_run(
                densities,
                &tv,
                k,
                config.b,
                config.weight_mode,
                config.max_iterations,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let best = runs
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap()
                .then(ia.cmp(ib))
        })
        .map(|(_, r)| r)
        .expect("at least one restart");
    ClusterPartition::from_assignments(densities, best.assignments.clone(), k)
}

/// Scans the configured cluster counts, keeps the best partition per count,
/// and selects the count with the highest OCI (ties to the smaller count).
pub fn optimal_partition(
    densities: &[GriddedDensity],
    config: &ClusteringConfig,
) -> Result<ClusteringResult> {
    let n = densities.len();
    if n == 0 {
        return Err(Error::NoSampleSets);
    }
    config.validate(n)?;
    let (lo, hi) = config.k_bounds(n);
    if lo < 1 || hi > n || lo > hi {
        return Err(Error::InvalidParameter(format!(
            "k_range [{lo}, {hi}] invalid for {n} densities"
        )));
    }

    let mut oci_by_k = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<(usize, ClusterPartition, f64)> = None;
    for k in lo..=hi {
        let partition = weighted_kmeans(densities, k, config)?;
        let oci = oci_score(densities, &partition, config.a, config.weight_mode)?;
        oci_by_k.push((k, oci));
        let better = match &best {
            None => true,
            Some((_, _, cur)) => oci > *cur,
        };
        if better {
            best = Some((k, partition, oci));
        }
    }
    let (k, partition, oci) = best.expect("non-empty k range");
    let obi = (0..k)
        .map(|m| obi_score(densities, &partition.members(m)))
        .collect::<Result<Vec<f64>>>()?;
    let wkm = wkm_objective(densities, &partition, config.b, config.weight_mode)?;
    Ok(ClusteringResult {
        partition,
        k,
        oci,
        oci_by_k,
        obi,
        wkm_objective: wkm,
        config: config.clone(),
    })
}

/// Relabels clusters in order of first appearance, so two assignment vectors
/// describing the same partition compare equal.
pub fn canonical_assignments(assignments: &[usize]) -> Vec<usize> {
    let mut relabel: Vec<Option<usize>> = Vec::new();
    let mut next = 0usize;
    assignments
        .iter()
        .map(|&m| {
            if m >= relabel.len() {
                relabel.resize(m + 1, None);
            }
            *relabel[m].get_or_insert_with(|| {
                let id = next;
                next += 1;
                id
            })
        })
        .collect()
}

/// Visits every partition of `{0, .., n-1}` into exactly `k` non-empty
/// blocks, in restricted-growth-string order (block labels appear in order
/// of first use, so each partition is visited once in its canonical form).
pub fn for_each_partition(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if n == 0 || k == 0 || k > n {
        return;
    }
    let mut assignment = vec![0usize; n];
    fn rec(
        assignment: &mut Vec<usize>,
        i: usize,
        blocks: usize,
        n: usize,
        k: usize,
        f: &mut impl FnMut(&[usize]),
    ) {
        if i == n {
            if blocks == k {
                f(assignment);
            }
            return;
        }
        // Existing blocks, provided enough positions remain to open the rest.
        if blocks + (n - i - 1) >= k {
            for v in 0..blocks {
                assignment[i] = v;
                rec(assignment, i + 1, blocks, n, k, f);
            }
        }
        // A new block.
        if blocks < k {
            assignment[i] = blocks;
            rec(assignment, i + 1, blocks + 1, n, k, f);
        }
    }
    rec(&mut assignment, 1, 1, n, k, &mut f);
}

/// Exhaustive OCI maximization over all partitions into `k` clusters.
///
/// Guarded at `n <= 12`: the number of partitions grows as a Stirling number
/// of the second kind. Ties go to the first partition in enumeration order,
/// which is the lexicographically smallest assignment vector.
pub fn brute_force_best_partition(
    densities: &[GriddedDensity],
    k: usize,
    a: f64,
    mode: WeightMode,
) -> Result<(ClusterPartition, f64)> {
    let n = densities.len();
    if n == 0 {
        return Err(Error::NoSampleSets);
    }
    if n > EXHAUSTIVE_LIMIT {
        return Err(Error::TooLargeForExhaustive { n, limit: EXHAUSTIVE_LIMIT });
    }
    if k < 1 || k > n {
        return Err(Error::InvalidParameter(format!(
            "cluster count {k} outside [1, {n}]"
        )));
    }
    validate_a(a)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut failure: Option<Error> = None;
    for_each_partition(n, k, |assignment| {
        if failure.is_some() {
            return;
        }
        let sizes = count_sizes(assignment, k);
        let score = means_of(densities, assignment, k).and_then(|means| {
            oci_of_assignment(densities, assignment, &means, &sizes, a, mode)
        });
        match score {
            Ok(s) => {
                if best.as_ref().map_or(true, |(_, cur)| s > *cur) {
                    best = Some((assignment.to_vec(), s));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let (assignment, score) = best.expect("partition enumeration is non-empty");
    let partition = ClusterPartition::from_assignments(densities, assignment, k)?;
    Ok((partition, score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::test_support::{gridded_normal, gridded_uniform};
    use crate::density::SupportGrid;
    use std::sync::Arc;

    fn unit_grid() -> Arc<SupportGrid> {
        Arc::new(SupportGrid::new(-10.0, 10.0, 512).unwrap())
    }

    fn two_group_normals(grid: &Arc<SupportGrid>) -> Vec<GriddedDensity> {
        vec![
            gridded_normal(grid, -4.0, 0.5),
            gridded_normal(grid, -4.2, 0.5),
            gridded_normal(grid, -3.8, 0.5),
            gridded_normal(grid, 4.0, 0.5),
            gridded_normal(grid, 4.2, 0.5),
        ]
    }

    #[test]
    fn partition_count_of_four_into_two_is_seven() {
        let mut count = 0usize;
        for_each_partition(4, 2, |_| count += 1);
        assert_eq!(count, 7);
    }

    #[test]
    fn enumeration_yields_canonical_assignments() {
        let mut seen = Vec::new();
        for_each_partition(3, 2, |a| seen.push(a.to_vec()));
        assert_eq!(
            seen,
            vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 1, 1]]
        );
    }

    #[test]
    fn singleton_partition_has_unit_oci_at_a_one() {
        let grid = unit_grid();
        let densities: Vec<GriddedDensity> = (0..6)
            .map(|i| gridded_normal(&grid, i as f64 - 3.0, 0.7))
            .collect();
        let p = ClusterPartition::from_assignments(&densities, (0..6).collect(), 6).unwrap();
        let oci = oci_score(&densities, &p, 1.0, WeightMode::Uniform).unwrap();
        assert!((oci - 1.0).abs() < 1e-9, "oci {oci}");
    }

    #[test]
    fn disjoint_clusters_hit_the_closed_form_objective() {
        // Six pairwise-disjoint uniforms in three clusters of two: the
        // objective is ((K-1)/K)^b * (n - K).
        let grid = Arc::new(SupportGrid::new(0.0, 12.0, 1024).unwrap());
        let densities: Vec<GriddedDensity> = (0..6)
            .map(|i| gridded_uniform(&grid, 2.0 * i as f64 + 0.2, 2.0 * i as f64 + 0.8))
            .collect();
        let assignments = vec![0, 0, 1, 1, 2, 2];
        let p = ClusterPartition::from_assignments(&densities, assignments, 3).unwrap();
        let b = 1.7;
        let got = wkm_objective(&densities, &p, b, WeightMode::Uniform).unwrap();
        let expected = (2.0f64 / 3.0).powf(b) * 3.0;
        assert!((got - expected).abs() < 1e-9, "got {got}, expected {expected}");
    }

    #[test]
    fn single_cluster_objective_is_zero() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let p = ClusterPartition::from_assignments(&densities, vec![0; 5], 1).unwrap();
        let got = wkm_objective(&densities, &p, 1.0, WeightMode::Uniform).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn obi_of_two_members_is_their_overlap() {
        let grid = unit_grid();
        let densities = vec![
            gridded_normal(&grid, 0.0, 1.0),
            gridded_normal(&grid, 1.0, 1.0),
        ];
        let obi = obi_score(&densities, &[0, 1]).unwrap();
        assert!((obi - 0.6170750774519738).abs() < 1e-3);
    }

    #[test]
    fn obi_edge_cases() {
        let grid = unit_grid();
        let f = gridded_normal(&grid, 0.0, 1.0);
        let densities = vec![f.clone(), f.clone(), f];
        assert_eq!(obi_score(&densities, &[1]).unwrap(), 0.0);
        let full = obi_score(&densities, &[0, 1, 2]).unwrap();
        assert!((full - 1.0).abs() < 1e-9);
        assert!(matches!(obi_score(&densities, &[]), Err(Error::EmptyCluster)));
        assert!(obi_score(&densities, &[0, 5]).is_err());
        assert!(obi_score(&densities, &[0, 0]).is_err());
    }

    #[test]
    fn obi_is_bit_stable_under_member_permutation() {
        let grid = unit_grid();
        let densities: Vec<GriddedDensity> = (0..4)
            .map(|i| gridded_normal(&grid, 0.3 * i as f64, 0.8 + 0.1 * i as f64))
            .collect();
        let a = obi_score(&densities, &[0, 1, 2, 3]).unwrap();
        let b = obi_score(&densities, &[3, 1, 0, 2]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn kmeans_recovers_separated_groups() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let config = ClusteringConfig::default();
        let p = weighted_kmeans(&densities, 2, &config).unwrap();
        let a = p.assignments();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[0], a[2]);
        assert_eq!(a[3], a[4]);
        assert_ne!(a[0], a[3]);
    }

    #[test]
    fn optimal_partition_selects_two_groups() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let config = ClusteringConfig { a: 0.5, ..ClusteringConfig::default() };
        let result = optimal_partition(&densities, &config).unwrap();
        assert_eq!(result.k, 2);
        assert_eq!(result.oci_by_k.len(), 5);
        assert_eq!(result.obi.len(), 2);
        for (_, oci) in &result.oci_by_k {
            assert!(*oci <= result.oci + 1e-12);
        }
        // Both groups are tight, so each cluster's OBI is high.
        for &o in &result.obi {
            assert!(o > 0.65, "obi {o}");
        }
    }

    #[test]
    fn extreme_cluster_counts_are_exact() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let config = ClusteringConfig::default();
        let all = weighted_kmeans(&densities, 1, &config).unwrap();
        assert_eq!(all.assignments(), &[0, 0, 0, 0, 0]);
        let singletons = weighted_kmeans(&densities, 5, &config).unwrap();
        assert_eq!(singletons.assignments(), &[0, 1, 2, 3, 4]);
        let obj = wkm_objective(&densities, &singletons, 1.0, WeightMode::Uniform).unwrap();
        assert!(obj.abs() < 1e-12);
    }

    #[test]
    fn identical_densities_still_yield_valid_partitions() {
        let grid = unit_grid();
        let f = gridded_normal(&grid, 0.0, 1.0);
        let densities = vec![f.clone(), f.clone(), f.clone(), f];
        let config = ClusteringConfig { restarts: 3, ..ClusteringConfig::default() };
        let p = weighted_kmeans(&densities, 2, &config).unwrap();
        assert_eq!(p.k(), 2);
        assert!(p.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn kmeans_is_deterministic_for_a_seed() {
        let grid = unit_grid();
        let densities: Vec<GriddedDensity> = (0..7)
            .map(|i| gridded_normal(&grid, (i as f64) * 0.9 - 3.0, 0.6))
            .collect();
        let config = ClusteringConfig { seed: 99, ..ClusteringConfig::default() };
        let p1 = weighted_kmeans(&densities, 3, &config).unwrap();
        let p2 = weighted_kmeans(&densities, 3, &config).unwrap();
        assert_eq!(p1.assignments(), p2.assignments());
    }

    #[test]
    fn lloyd_objective_trace_never_increases() {
        let grid = unit_grid();
        let mut rng = derive_rng(31, &[7]);
        for case in 0..20 {
            let n = 5 + (case % 4);
            let densities: Vec<GriddedDensity> = (0..n)
                .map(|_| {
                    gridded_normal(&grid, rng.random_range(-4.0..4.0), rng.random_range(0.4..1.6))
                })
                .collect();
            let tv = pairwise_tv(&densities).unwrap();
            for mode in [WeightMode::Uniform, WeightMode::Proportional] {
                let mut run_rng = derive_rng(case as u64, &[1]);
                let run =
                    lloyd_run(&densities, &tv, 3, 1.0, mode, 64, &mut run_rng).unwrap();
                for w in run.trace.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "trace increased: {:?}", run.trace);
                }
            }
        }
    }

    #[test]
    fn heuristic_matches_brute_force_on_a_small_instance() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let config = ClusteringConfig::default();
        let heuristic = weighted_kmeans(&densities, 2, &config).unwrap();
        let (exact, score) =
            brute_force_best_partition(&densities, 2, config.a, config.weight_mode).unwrap();
        assert_eq!(
            canonical_assignments(heuristic.assignments()),
            canonical_assignments(exact.assignments())
        );
        let heuristic_oci =
            oci_score(&densities, &heuristic, config.a, config.weight_mode).unwrap();
        assert!((heuristic_oci - score).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_search_rejects_large_instances() {
        let grid = unit_grid();
        let densities: Vec<GriddedDensity> = (0..13)
            .map(|i| gridded_normal(&grid, i as f64 * 0.3, 1.0))
            .collect();
        assert!(matches!(
            brute_force_best_partition(&densities, 2, 0.5, WeightMode::Uniform),
            Err(Error::TooLargeForExhaustive { n: 13, .. })
        ));
    }

    #[test]
    fn invalid_exponents_are_rejected() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let p = ClusterPartition::from_assignments(&densities, vec![0, 0, 0, 1, 1], 2).unwrap();
        assert!(oci_score(&densities, &p, 0.0, WeightMode::Uniform).is_err());
        assert!(oci_score(&densities, &p, 1.2, WeightMode::Uniform).is_err());
        assert!(wkm_objective(&densities, &p, 0.5, WeightMode::Uniform).is_err());
    }

    #[test]
    fn partition_validation_catches_defects() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        assert!(matches!(
            ClusterPartition::from_assignments(&densities, vec![0, 0, 0, 0, 0], 2),
            Err(Error::EmptyCluster)
        ));
        assert!(ClusterPartition::from_assignments(&densities, vec![0, 0, 2, 1, 1], 2).is_err());
        assert!(ClusterPartition::from_assignments(&densities, vec![0, 1], 2).is_err());
    }

    #[test]
    fn proportional_weights_change_the_score() {
        let grid = unit_grid();
        let densities = two_group_normals(&grid);
        let p = ClusterPartition::from_assignments(&densities, vec![0, 0, 0, 1, 1], 2).unwrap();
        let uni = oci_score(&densities, &p, 1.0, WeightMode::Uniform).unwrap();
        let prop = oci_score(&densities, &p, 1.0, WeightMode::Proportional).unwrap();
        // Uniform: both clusters weighted 1/2. Proportional: 3/5 and 2/5.
        assert!((uni - prop).abs() > 1e-6);
    }
}
