//! Hierarchical-model fitting with cluster-level information borrowing.
//!
//! Binary endpoint: subgroup responses are Binomial with logit-scale effects
//! `theta_i`. Within a cluster, `theta_i ~ N(mu, 1/tau)` with a normal prior
//! on `mu` and a gamma prior on `tau` whose shape comes from the cluster's
//! borrowing strength. Effects are updated by adaptive random-walk
//! Metropolis, `mu` and `tau` by conjugate Gibbs draws. A normal endpoint
//! replaces the Metropolis step with a conjugate normal update and adds a
//! shared observation precision.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::borrowing::{borrowing_alpha, SlopeVariant};
use crate::clustering::{optimal_partition, ClusteringConfig, ClusteringResult};
use crate::density::{GriddedDensity, SampleSet};
use crate::error::{Error, Result};
use crate::kde::{build_common_grid, density_from_samples, DEFAULT_GRID_EXTENSION,
    DEFAULT_GRID_POINTS};
use crate::stats::{derive_rng, inv_logit, logit, mean, quantile_sorted, sample_sd};
use crate::DEFAULT_SEED;

const STREAM_NONINF: u64 = 0x4E49;
const STREAM_CLUSTER: u64 = 0x4346;

/// Acceptance-rate band treated as healthy after adaptation.
const ACCEPT_LO: f64 = 0.05;
const ACCEPT_HI: f64 = 0.95;

/// Observed response counts for a binary-endpoint trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryTrialData {
    labels: Vec<String>,
    responses: Vec<u32>,
    sizes: Vec<u32>,
}

impl BinaryTrialData {
    pub fn new(labels: Vec<String>, responses: Vec<u32>, sizes: Vec<u32>) -> Result<Self> {
        if labels.is_empty() || labels.len() != responses.len() || labels.len() != sizes.len() {
            return Err(Error::InvalidParameter(
                "labels, responses, and sizes must have equal non-zero length".into(),
            ));
        }
        for ((label, &y), &n) in labels.iter().zip(&responses).zip(&sizes) {
            if n == 0 {
                return Err(Error::InvalidParameter(format!(
                    "subgroup `{label}` has size 0"
                )));
            }
            if y > n {
                return Err(Error::InvalidParameter(format!(
                    "subgroup `{label}` has {y} responses out of {n}"
                )));
            }
        }
        Ok(BinaryTrialData { labels, responses, sizes })
    }

    /// Counts with generated labels `s1, s2, ..`.
    pub fn from_counts(responses: Vec<u32>, sizes: Vec<u32>) -> Result<Self> {
        let labels = (1..=responses.len()).map(|i| format!("s{i}")).collect();
        Self::new(labels, responses, sizes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn responses(&self) -> &[u32] {
        &self.responses
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }
}

/// Raw outcomes for a normal-endpoint trial, one vector per subgroup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalTrialData {
    labels: Vec<String>,
    outcomes: Vec<Vec<f64>>,
}

impl NormalTrialData {
    pub fn new(labels: Vec<String>, outcomes: Vec<Vec<f64>>) -> Result<Self> {
        if labels.is_empty() || labels.len() != outcomes.len() {
            return Err(Error::InvalidParameter(
                "labels and outcomes must have equal non-zero length".into(),
            ));
        }
        for (label, ys) in labels.iter().zip(&outcomes) {
            if ys.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "subgroup `{label}` has no outcomes"
                )));
            }
            if ys.iter().any(|y| !y.is_finite()) {
                return Err(Error::NonFiniteDraw { label: label.clone() });
            }
        }
        Ok(NormalTrialData { labels, outcomes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn outcomes(&self) -> &[Vec<f64>] {
        &self.outcomes
    }
}

/// Hyperparameters of the hierarchy.
///
/// `beta` is the rate of the gamma prior on cluster precisions; the shape is
/// supplied per cluster. `alpha_y`/`beta_y` parameterize the observation
/// precision of the normal endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierPriorConfig {
    pub mu0: f64,
    pub tau0: f64,
    /// Effect precision of the noninformative first-stage prior.
    pub noninf_tau: f64,
    pub beta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_y: f64,
    pub beta_y: f64,
}

impl Default for HierPriorConfig {
    fn default() -> Self {
        HierPriorConfig {
            mu0: logit(0.1),
            tau0: 0.1,
            noninf_tau: 0.01,
            beta: 10.0,
            alpha_min: 1.0,
            alpha_max: 200.0,
            alpha_y: 0.001,
            beta_y: 0.001,
        }
    }
}

impl HierPriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tau0", self.tau0),
            ("noninf_tau", self.noninf_tau),
            ("beta", self.beta),
            ("alpha_min", self.alpha_min),
            ("alpha_y", self.alpha_y),
            ("beta_y", self.beta_y),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.mu0.is_finite() {
            return Err(Error::InvalidParameter("mu0 must be finite".into()));
        }
        if !self.alpha_max.is_finite() || self.alpha_max < self.alpha_min {
            return Err(Error::InvalidParameter(format!(
                "alpha_max {} must be at least alpha_min {}",
                self.alpha_max, self.alpha_min
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    /// Total iterations per chain, including burn-in.
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    /// Random-walk acceptance rate targeted during burn-in.
    pub target_acceptance: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 12_000,
            burn_in: 2_000,
            thin: 1,
            chains: 1,
            target_acceptance: 0.44,
            seed: DEFAULT_SEED,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || (self.iterations - self.burn_in) % self.thin != 0 {
            return Err(Error::InvalidParameter(format!(
                "thin {} must divide the {} post-burn-in iterations",
                self.thin,
                self.iterations - self.burn_in
            )));
        }
        if self.chains == 0 {
            return Err(Error::InvalidParameter("chains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.target_acceptance) || self.target_acceptance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "target_acceptance {} must lie in (0, 1)",
                self.target_acceptance
            )));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Retained posterior draws per subgroup, on the analysis scale
/// (probability for binary endpoints, effect mean for normal endpoints).
#[derive(Clone, Debug)]
pub struct PosteriorDraws {
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
    accept_rates: Vec<f64>,
    retained: usize,
}

impl PosteriorDraws {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Post-burn-in Metropolis acceptance rate per subgroup; 1 where the
    /// update is conjugate.
    pub fn accept_rates(&self) -> &[f64] {
        &self.accept_rates
    }

    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn means(&self) -> Vec<f64> {
        self.values.iter().map(|v| mean(v)).collect()
    }

    pub fn sds(&self) -> Vec<f64> {
        self.values.iter().map(|v| sample_sd(v)).collect()
    }

    pub fn prob_above(&self, threshold: f64) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().filter(|&&x| x > threshold).count() as f64 / v.len() as f64)
            .collect()
    }

    pub fn credible_intervals(&self, level: f64) -> Vec<(f64, f64)> {
        let tail = (1.0 - level) / 2.0;
        self.values
            .iter()
            .map(|v| {
                let mut sorted = v.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                (
                    quantile_sorted(&sorted, tail),
                    quantile_sorted(&sorted, 1.0 - tail),
                )
            })
            .collect()
    }

    pub fn to_sample_sets(&self) -> Result<Vec<SampleSet>> {
        self.labels
            .iter()
            .zip(&self.values)
            .map(|(l, v)| SampleSet::new(l.clone(), v.clone()))
            .collect()
    }

    /// Per-subgroup summary rows at the given null threshold.
    pub fn summarize(&self, p_null: f64, level: f64) -> Vec<PosteriorSummary> {
        let means = self.means();
        let sds = self.sds();
        let cis = self.credible_intervals(level);
        let probs = self.prob_above(p_null);
        self.labels
            .iter()
            .enumerate()
            .map(|(i, label)| PosteriorSummary {
                label: label.clone(),
                mean: means[i],
                sd: sds[i],
                lower: cis[i].0,
                upper: cis[i].1,
                prob_above_null: probs[i],
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub label: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    pub prob_above_null: f64,
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Random-walk Metropolis step-size controller. The step adapts toward the
/// target acceptance rate in batches during burn-in and is frozen after, so
/// the retained chain is a valid Markov chain.
struct RwWalker {
    step: f64,
    target: f64,
    adapting: bool,
    batch_accepts: usize,
    batch_proposals: usize,
    batches_done: usize,
    post_accepts: usize,
    post_proposals: usize,
}

const ADAPT_BATCH: usize = 50;

impl RwWalker {
    fn new(target: f64) -> Self {
        RwWalker {
            step: 1.0,
            target,
            adapting: true,
            batch_accepts: 0,
            batch_proposals: 0,
            batches_done: 0,
            post_accepts: 0,
            post_proposals: 0,
        }
    }

    fn freeze(&mut self) {
        self.adapting = false;
    }

    fn record(&mut self, accepted: bool) {
        if self.adapting {
            self.batch_proposals += 1;
            if accepted {
                self.batch_accepts += 1;
            }
            if self.batch_proposals == ADAPT_BATCH {
                let rate = self.batch_accepts as f64 / ADAPT_BATCH as f64;
                self.batches_done += 1;
                let delta = (1.0 / (self.batches_done as f64).sqrt()).min(0.1);
                if rate > self.target {
                    self.step *= delta.exp();
                } else {
                    self.step *= (-delta).exp();
                }
                self.batch_accepts = 0;
                self.batch_proposals = 0;
            }
        } else {
            self.post_proposals += 1;
            if accepted {
                self.post_accepts += 1;
            }
        }
    }

    fn post_rate(&self) -> f64 {
        if self.post_proposals == 0 {
            return f64::NAN;
        }
        self.post_accepts as f64 / self.post_proposals as f64
    }

    fn step_theta(
        &mut self,
        rng: &mut ChaCha8Rng,
        theta: f64,
        log_post: impl Fn(f64) -> f64,
    ) -> f64 {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let proposal = theta + self.step * normal.sample(rng);
        let log_ratio = log_post(proposal) - log_post(theta);
        let accepted = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        self.record(accepted);
        if accepted {
            proposal
        } else {
            theta
        }
    }
}

fn check_post_rate(rate: f64, context: String) -> Result<f64> {
    if !rate.is_finite() || rate < ACCEPT_LO || rate > ACCEPT_HI {
        return Err(Error::McmcDivergence { context, rate });
    }
    Ok(rate)
}

fn empirical_logit(y: u32, n: u32) -> f64 {
    logit((y as f64 + 0.5) / (n as f64 + 1.0))
}

/// Independent first-stage posteriors: each subgroup's effect under the flat
/// `N(mu0, 1/noninf_tau)` prior, with no pooling. Draws are returned on the
/// probability scale; these are the densities the clustering stage consumes.
pub fn noninformative_posteriors_binary(
    trial: &BinaryTrialData,
    prior: &HierPriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    mcmc.validate()?;
    let per_subgroup: Vec<(Vec<f64>, f64)> = (0..trial.len())
        .into_par_iter()
        .map(|i| {
            let y = trial.responses[i];
            let n = trial.sizes[i];
            let mut draws = Vec::with_capacity(mcmc.chains * mcmc.retained_per_chain());
            let mut rate_sum = 0.0;
            for chain in 0..mcmc.chains {
                let mut rng =
                    derive_rng(mcmc.seed, &[STREAM_NONINF, i as u64, chain as u64]);
                let mut theta = empirical_logit(y, n);
                let mut walker = RwWalker::new(mcmc.target_acceptance);
                let log_post = |th: f64| {
                    y as f64 * th
                        - n as f64 * softplus(th)
                        - 0.5 * prior.noninf_tau * (th - prior.mu0) * (th - prior.mu0)
                };
                for t in 0..mcmc.iterations {
                    if t == mcmc.burn_in {
                        walker.freeze();
                    }
                    theta = walker.step_theta(&mut rng, theta, log_post);
                    if t >= mcmc.burn_in && (t - mcmc.burn_in) % mcmc.thin == 0 {
                        draws.push(inv_logit(theta));
                    }
                }
                rate_sum += check_post_rate(
                    walker.post_rate(),
                    format!(
                        "noninformative posterior, subgroup `{}`, chain {chain}",
                        trial.labels[i]
                    ),
                )?;
            }
            Ok((draws, rate_sum / mcmc.chains as f64))
        })
        .collect::<Result<Vec<_>>>()?;

    let (values, accept_rates) = per_subgroup.into_iter().unzip();
    Ok(PosteriorDraws {
        labels: trial.labels.clone(),
        values,
        accept_rates,
        retained: mcmc.chains * mcmc.retained_per_chain(),
    })
}

fn validate_cluster_inputs(
    n: usize,
    assignments: &[usize],
    alphas: &[f64],
) -> Result<Vec<Vec<usize>>> {
    if assignments.len() != n {
        return Err(Error::InconsistentPartition(format!(
            "{} assignments for {} subgroups",
            assignments.len(),
            n
        )));
    }
    let k = alphas.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no cluster shapes supplied".into()));
    }
    for &alpha in alphas {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "cluster shape must be positive and finite, got {alpha}"
            )));
        }
    }
    let mut members = vec![Vec::new(); k];
    for (i, &m) in assignments.iter().enumerate() {
        if m >= k {
            return Err(Error::InconsistentPartition(format!(
                "subgroup {i} assigned to cluster {m} of {k}"
            )));
        }
        members[m].push(i);
    }
    if members.iter().any(|c| c.is_empty()) {
        return Err(Error::EmptyCluster);
    }
    Ok(members)
}

/// Fits the borrowing hierarchy per cluster for a binary endpoint.
///
/// Clusters are independent: each gets its own `mu` and `tau` with the gamma
/// shape `alphas[j]`, member effects are updated by adaptive random-walk
/// Metropolis and the cluster parameters by conjugate Gibbs draws.
pub fn fit_cluster_bhm_binary(
    trial: &BinaryTrialData,
    assignments: &[usize],
    alphas: &[f64],
    prior: &HierPriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    mcmc.validate()?;
    let members = validate_cluster_inputs(trial.len(), assignments, alphas)?;

    let mut values: Vec<Vec<f64>> =
        vec![Vec::with_capacity(mcmc.chains * mcmc.retained_per_chain()); trial.len()];
    let mut accept_rates = vec![0.0f64; trial.len()];

    let per_cluster: Vec<(usize, Vec<Vec<f64>>, Vec<f64>)> = members
        .par_iter()
        .enumerate()
        .map(|(j, cluster)| {
            let m = cluster.len();
            let mut cluster_values: Vec<Vec<f64>> =
                vec![Vec::with_capacity(mcmc.chains * mcmc.retained_per_chain()); m];
            let mut cluster_rates = vec![0.0f64; m];
            for chain in 0..mcmc.chains {
                let mut rng =
                    derive_rng(mcmc.seed, &[STREAM_CLUSTER, j as u64, chain as u64]);
                let mut theta: Vec<f64> = cluster
                    .iter()
                    .map(|&i| empirical_logit(trial.responses[i], trial.sizes[i]))
                    .collect();
                let mut mu = mean(&theta);
                let mut tau = alphas[j] / prior.beta;
                let mut walkers: Vec<RwWalker> =
                    (0..m).map(|_| RwWalker::new(mcmc.target_acceptance)).collect();
                let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");

                for t in 0..mcmc.iterations {
                    if t == mcmc.burn_in {
                        for w in &mut walkers {
                            w.freeze();
                        }
                    }
                    for (idx, &i) in cluster.iter().enumerate() {
                        let y = trial.responses[i] as f64;
                        let n = trial.sizes[i] as f64;
                        let (mu_c, tau_c) = (mu, tau);
                        theta[idx] = walkers[idx].step_theta(&mut rng, theta[idx], |th| {
                            y * th - n * softplus(th) - 0.5 * tau_c * (th - mu_c) * (th - mu_c)
                        });
                    }
                    let sum_theta: f64 = theta.iter().sum();
                    let prec = prior.tau0 + m as f64 * tau;
                    let cond_mean = (prior.tau0 * prior.mu0 + tau * sum_theta) / prec;
                    mu = cond_mean + unit_normal.sample(&mut rng) / prec.sqrt();
                    let ss: f64 = theta.iter().map(|t| (t - mu) * (t - mu)).sum();
                    let shape = alphas[j] + 0.5 * m as f64;
                    let rate = prior.beta + 0.5 * ss;
                    tau = Gamma::new(shape, 1.0 / rate)
                        .expect("valid gamma")
                        .sample(&mut rng);
                    if t >= mcmc.burn_in && (t - mcmc.burn_in) % mcmc.thin == 0 {
                        for (idx, th) in theta.iter().enumerate() {
                            cluster_values[idx].push(inv_logit(*th));
                        }
                    }
                }
                for (idx, w) in walkers.iter().enumerate() {
                    cluster_rates[idx] += check_post_rate(
                        w.post_rate(),
                        format!(
                            "cluster {j} fit, subgroup `{}`, chain {chain}",
                            trial.labels[cluster[idx]]
                        ),
                    )?;
                }
            }
            for r in &mut cluster_rates {
                *r /= mcmc.chains as f64;
            }
            Ok((j, cluster_values, cluster_rates))
        })
        .collect::<Result<Vec<_>>>()?;

    for (j, cluster_values, cluster_rates) in per_cluster {
        for (idx, &i) in members[j].iter().enumerate() {
            values[i] = cluster_values[idx].clone();
            accept_rates[i] = cluster_rates[idx];
        }
    }

    Ok(PosteriorDraws {
        labels: trial.labels.clone(),
        values,
        accept_rates,
        retained: mcmc.chains * mcmc.retained_per_chain(),
    })
}

/// Normal-endpoint counterpart of [`fit_cluster_bhm_binary`]; fully
/// conjugate, with one observation precision shared within each fit.
pub fn fit_cluster_bhm_normal(
    trial: &NormalTrialData,
    assignments: &[usize],
    alphas: &[f64],
    prior: &HierPriorConfig,
    mcmc: &McmcConfig,
) -> Result<PosteriorDraws> {
    prior.validate()?;
    mcmc.validate()?;
    let members = validate_cluster_inputs(trial.len(), assignments, alphas)?;

    let mut values: Vec<Vec<f64>> =
        vec![Vec::with_capacity(mcmc.chains * mcmc.retained_per_chain()); trial.len()];

    for (j, cluster) in members.iter().enumerate() {
        let m = cluster.len();
        let counts: Vec<f64> = cluster.iter().map(|&i| trial.outcomes[i].len() as f64).collect();
        let sums: Vec<f64> = cluster.iter().map(|&i| trial.outcomes[i].iter().sum()).collect();
        let total_obs: f64 = counts.iter().sum();

        for chain in 0..mcmc.chains {
            let mut rng = derive_rng(mcmc.seed, &[STREAM_CLUSTER, j as u64, chain as u64]);
            let unit_normal = Normal::new(0.0, 1.0).expect("unit normal");
            let mut theta: Vec<f64> = (0..m).map(|idx| sums[idx] / counts[idx]).collect();
            let mut mu = mean(&theta);
            let mut tau = alphas[j] / prior.beta;
            let mut tau_y = prior.alpha_y / prior.beta_y;

            for t in 0..mcmc.iterations {
                for idx in 0..m {
                    let prec = tau + tau_y * counts[idx];
                    let cond_mean = (tau * mu + tau_y * sums[idx]) / prec;
                    theta[idx] = cond_mean + unit_normal.sample(&mut rng) / prec.sqrt();
                }
                let sum_theta: f64 = theta.iter().sum();
                let prec = prior.tau0 + m as f64 * tau;
                let cond_mean = (prior.tau0 * prior.mu0 + tau * sum_theta) / prec;
                mu = cond_mean + unit_normal.sample(&mut rng) / prec.sqrt();
                let ss: f64 = theta.iter().map(|t| (t - mu) * (t - mu)).sum();
                tau = Gamma::new(alphas[j] + 0.5 * m as f64, 1.0 / (prior.beta + 0.5 * ss))
                    .expect("valid gamma")
                    .sample(&mut rng);
                let resid: f64 = cluster
                    .iter()
                    .enumerate()
                    .map(|(idx, &i)| {
                        trial.outcomes[i]
                            .iter()
                            .map(|y| (y - theta[idx]) * (y - theta[idx]))
                            .sum::<f64>()
                    })
                    .sum();
                tau_y = Gamma::new(
                    prior.alpha_y + 0.5 * total_obs,
                    1.0 / (prior.beta_y + 0.5 * resid),
                )
                .expect("valid gamma")
                .sample(&mut rng);

                if t >= mcmc.burn_in && (t - mcmc.burn_in) % mcmc.thin == 0 {
                    for (idx, &i) in cluster.iter().enumerate() {
                        values[i].push(theta[idx]);
                    }
                }
            }
        }
    }

    Ok(PosteriorDraws {
        labels: trial.labels().to_vec(),
        values,
        accept_rates: vec![1.0; trial.len()],
        retained: mcmc.chains * mcmc.retained_per_chain(),
    })
}

/// Full pipeline output: the clustering, the borrowing strengths derived
/// from it, and the post-borrowing posteriors, along with the first-stage
/// densities and every configuration that produced them.
#[derive(Clone, Debug)]
pub struct BhmoiResult {
    pub clustering: ClusteringResult,
    /// Gamma shape per cluster, mapped from that cluster's OBI.
    pub alphas: Vec<f64>,
    pub posteriors: PosteriorDraws,
    /// First-stage (noninformative) densities that were clustered.
    pub densities: Vec<GriddedDensity>,
    pub prior: HierPriorConfig,
    pub mcmc: McmcConfig,
    pub slope: SlopeVariant,
}

/// Runs the full binary-endpoint pipeline: noninformative posteriors,
/// density estimation on a shared grid, overlap clustering, OBI-driven
/// borrowing strengths, and the per-cluster hierarchical refit.
pub fn run_bhmoi_binary(
    trial: &BinaryTrialData,
    prior: &HierPriorConfig,
    mcmc: &McmcConfig,
    clustering: &ClusteringConfig,
    slope: SlopeVariant,
) -> Result<BhmoiResult> {
    let noninf = noninformative_posteriors_binary(trial, prior, mcmc)?;
    let sets = noninf.to_sample_sets()?;
    let grid = std::sync::Arc::new(build_common_grid(
        &sets,
        DEFAULT_GRID_POINTS,
        DEFAULT_GRID_EXTENSION,
    )?);
    let densities = sets
        .iter()
        .map(|s| density_from_samples(s, &grid))
        .collect::<Result<Vec<_>>>()?;
    let clustering_result = optimal_partition(&densities, clustering)?;
    let alphas = clustering_result
        .obi
        .iter()
        .map(|&obi| borrowing_alpha(obi, slope, prior.alpha_min, prior.alpha_max))
        .collect::<Result<Vec<f64>>>()?;
    let posteriors = fit_cluster_bhm_binary(
        trial,
        clustering_result.partition.assignments(),
        &alphas,
        prior,
        mcmc,
    )?;
    Ok(BhmoiResult {
        clustering: clustering_result,
        alphas,
        posteriors,
        densities,
        prior: *prior,
        mcmc: *mcmc,
        slope,
    })
}
