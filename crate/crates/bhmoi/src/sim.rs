//! Basket-trial simulation harness: heterogeneity scenarios, comparator
//! analyses, and operating characteristics for estimation (MSE, bias) and
//! testing (rejection rates).

use rand::RngExt;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bhm::{
    fit_cluster_bhm_binary, run_bhmoi_binary, BinaryTrialData, HierPriorConfig, McmcConfig,
};
use crate::borrowing::SlopeVariant;
use crate::clustering::ClusteringConfig;
use crate::error::{Error, Result};
use crate::stats::derive_seed;
use crate::DEFAULT_SEED;

const STREAM_DATA: u64 = 0x4454;
const STREAM_METHOD: u64 = 0x4D54;

/// Rate tiers used by the standard scenarios.
pub const RATE_LOW: f64 = 0.1;
pub const RATE_MEDIUM: f64 = 0.25;
pub const RATE_HIGH: f64 = 0.5;

/// One simulated-trial design: true response rates per subgroup, with an
/// optional clustering exponent override and optional per-subgroup uniform
/// bands from which rates are redrawn every replication.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub rates: Vec<f64>,
    pub per_subgroup_n: u32,
    /// Scenario-specific OCI exponent; falls back to the study config.
    pub a: Option<f64>,
    /// When set, each replication draws rate_i uniformly from bands[i].
    pub rate_bands: Option<Vec<(f64, f64)>>,
}

/// Clustering exponents paired with the six standard scenarios.
const STANDARD_A: [f64; 6] = [0.3, 0.3, 0.45, 0.45, 0.45, 0.5];

impl ScenarioSpec {
    pub fn new(name: impl Into<String>, rates: Vec<f64>, per_subgroup_n: u32) -> Result<Self> {
        let spec = ScenarioSpec {
            name: name.into(),
            rates,
            per_subgroup_n,
            a: None,
            rate_bands: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// One of the six standard heterogeneity designs (10 subgroups, 15
    /// patients each; tiers low 0.1 / medium 0.25 / high 0.5), indexed 1-6.
    pub fn standard(index: usize) -> Result<Self> {
        let (low, medium, high) = match index {
            1 => (4, 3, 3),
            2 => (7, 2, 1),
            3 => (5, 5, 0),
            4 => (7, 0, 3),
            5 => (7, 3, 0),
            6 => (10, 0, 0),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "standard scenario index {index} outside 1..=6"
                )))
            }
        };
        let mut rates = vec![RATE_LOW; low];
        rates.extend(std::iter::repeat(RATE_MEDIUM).take(medium));
        rates.extend(std::iter::repeat(RATE_HIGH).take(high));
        let mut spec = ScenarioSpec::new(format!("scenario{index}"), rates, 15)?;
        spec.a = Some(STANDARD_A[index - 1]);
        Ok(spec)
    }

    pub fn standard_all() -> Vec<ScenarioSpec> {
        (1..=6).map(|i| ScenarioSpec::standard(i).expect("standard index")).collect()
    }

    /// Replaces fixed tier rates with the matching uniform bands, so every
    /// replication redraws each subgroup's rate: low from [0.05, 0.15],
    /// medium from [0.20, 0.30], high from [0.35, 0.65].
    pub fn with_uniform_bands(mut self) -> Result<Self> {
        let bands = self
            .rates
            .iter()
            .map(|&r| {
                if (r - RATE_LOW).abs() < 1e-12 {
                    Ok((0.05, 0.15))
                } else if (r - RATE_MEDIUM).abs() < 1e-12 {
                    Ok((0.20, 0.30))
                } else if (r - RATE_HIGH).abs() < 1e-12 {
                    Ok((0.35, 0.65))
                } else {
                    Err(Error::InvalidParameter(format!(
                        "no uniform band defined for rate {r}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.rate_bands = Some(bands);
        self.name.push_str("-uniform");
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::InvalidParameter("scenario has no subgroups".into()));
        }
        if self.per_subgroup_n == 0 {
            return Err(Error::InvalidParameter("per_subgroup_n must be positive".into()));
        }
        for &r in &self.rates {
            if !r.is_finite() || r <= 0.0 || r >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "scenario rate {r} outside (0, 1)"
                )));
            }
        }
        if let Some(bands) = &self.rate_bands {
            if bands.len() != self.rates.len() {
                return Err(Error::InvalidParameter(
                    "rate_bands length differs from rates".into(),
                ));
            }
            for &(lo, hi) in bands {
                if !(0.0 < lo && lo <= hi && hi < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "rate band ({lo}, {hi}) outside (0, 1)"
                    )));
                }
            }
        }
        if let Some(a) = self.a {
            if !a.is_finite() || a <= 0.0 || a > 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "scenario exponent a = {a} outside (0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn subgroup_count(&self) -> usize {
        self.rates.len()
    }

    /// True cluster per subgroup: subgroups sharing a rate (or a band) are
    /// one cluster, labeled in order of first appearance.
    pub fn true_partition(&self) -> Vec<usize> {
        let mut seen: Vec<f64> = Vec::new();
        self.rates
            .iter()
            .map(|&r| {
                if let Some(pos) = seen.iter().position(|&s| (s - r).abs() < 1e-12) {
                    pos
                } else {
                    seen.push(r);
                    seen.len() - 1
                }
            })
            .collect()
    }
}

/// Reject H0: p <= p_null when Pr(p > p_null | data) > cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecisionRule {
    pub p_null: f64,
    pub cutoff: f64,
}

impl Default for DecisionRule {
    fn default() -> Self {
        DecisionRule { p_null: 0.1, cutoff: 0.95 }
    }
}

impl DecisionRule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_null", self.p_null), ("cutoff", self.cutoff)] {
            if !v.is_finite() || v <= 0.0 || v >= 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {v} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparatorMethod {
    /// Per-subgroup Jeffreys Beta posterior, no borrowing.
    Independent,
    /// One pooled Beta posterior shared by all subgroups.
    Pooled,
    /// One-cluster hierarchy with precision prior Gamma(5, 1).
    BhmModerate,
    /// One-cluster hierarchy with precision prior Gamma(50, 1).
    BhmStrong,
    /// Pooled Beta within each true cluster.
    Oracle,
    /// The full overlap-clustered borrowing pipeline.
    Bhmoi,
}

impl ComparatorMethod {
    pub const ALL: [ComparatorMethod; 6] = [
        ComparatorMethod::Independent,
        ComparatorMethod::Pooled,
        ComparatorMethod::BhmModerate,
        ComparatorMethod::BhmStrong,
        ComparatorMethod::Oracle,
        ComparatorMethod::Bhmoi,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ComparatorMethod::Independent => "independent",
            ComparatorMethod::Pooled => "pooled",
            ComparatorMethod::BhmModerate => "bhm-moderate",
            ComparatorMethod::BhmStrong => "bhm-strong",
            ComparatorMethod::Oracle => "oracle",
            ComparatorMethod::Bhmoi => "bhmoi",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }

    fn tag(&self) -> u64 {
        Self::ALL.iter().position(|m| m == self).expect("listed variant") as u64
    }
}

impl std::fmt::Display for ComparatorMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One generated trial plus the rates that generated it (these differ from
/// the scenario's nominal rates when uniform bands are active).
#[derive(Clone, Debug)]
pub struct SimulatedTrial {
    pub trial: BinaryTrialData,
    pub true_rates: Vec<f64>,
}

/// Draws one replication of the scenario. `seed` should already be specific
/// to the replication; all randomness flows from it deterministically.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<SimulatedTrial> {
    spec.validate()?;
    let mut rng = crate::stats::derive_rng(seed, &[STREAM_DATA]);
    let true_rates: Vec<f64> = match &spec.rate_bands {
        Some(bands) => bands
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
            .collect(),
        None => spec.rates.clone(),
    };
    let responses = true_rates
        .iter()
        .map(|&p| {
            let dist = Binomial::new(spec.per_subgroup_n as u64, p)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(dist.sample(&mut rng) as u32)
        })
        .collect::<Result<Vec<u32>>>()?;
    let sizes = vec![spec.per_subgroup_n; spec.rates.len()];
    Ok(SimulatedTrial {
        trial: BinaryTrialData::from_counts(responses, sizes)?,
        true_rates,
    })
}

/// Per-subgroup posterior mean and tail probability for one analysis.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodFit {
    pub estimates: Vec<f64>,
    pub prob_above_null: Vec<f64>,
}

fn beta_fit(y: f64, n: f64, p_null: f64) -> (f64, f64) {
    // Jeffreys posterior for a binomial proportion.
    let alpha = 0.5 + y;
    let beta = 0.5 + n - y;
    let dist = Beta::new(alpha, beta).expect("positive shape parameters");
    (alpha / (alpha + beta), 1.0 - dist.cdf(p_null))
}

/// Runs one comparator on one trial. `true_partition` is consulted only by
/// the oracle. The MCMC and clustering seeds are taken from the configs as
/// given, so callers running replications must derive them per replication.
#[allow(clippy::too_many_arguments)]
pub fn analyze(
    method: ComparatorMethod,
    trial: &BinaryTrialData,
    true_partition: Option<&[usize]>,
    rule: &DecisionRule,
    prior: &HierPriorConfig,
    mcmc: &McmcConfig,
    clustering: &ClusteringConfig,
    slope: SlopeVariant,
) -> Result<MethodFit> {
    rule.validate()?;
    let n = trial.len();
    match method {
        ComparatorMethod::Independent => {
            let (estimates, prob_above_null) = trial
                .responses()
                .iter()
                .zip(trial.sizes())
                .map(|(&y, &sz)| beta_fit(y as f64, sz as f64, rule.p_null))
                .unzip();
            Ok(MethodFit { estimates, prob_above_null })
        }
        ComparatorMethod::Pooled => {
            let y: u32 = trial.responses().iter().sum();
            let sz: u32 = trial.sizes().iter().sum();
            let (est, prob) = beta_fit(y as f64, sz as f64, rule.p_null);
            Ok(MethodFit {
                estimates: vec![est; n],
                prob_above_null: vec![prob; n],
            })
        }
        ComparatorMethod::Oracle => {
            let partition = true_partition.ok_or_else(|| {
                Error::InvalidParameter("oracle analysis needs the true partition".into())
            })?;
            if partition.len() != n {
                return Err(Error::InconsistentPartition(format!(
                    "{} partition entries for {} subgroups",
                    partition.len(),
                    n
                )));
            }
            let k = partition.iter().max().map_or(0, |&m| m + 1);
            let mut pooled = vec![(0u32, 0u32); k];
            for (i, &m) in partition.iter().enumerate() {
                pooled[m].0 += trial.responses()[i];
                pooled[m].1 += trial.sizes()[i];
            }
            let fits: Vec<(f64, f64)> = pooled
                .iter()
                .map(|&(y, sz)| beta_fit(y as f64, sz as f64, rule.p_null))
                .collect();
            Ok(MethodFit {
                estimates: partition.iter().map(|&m| fits[m].0).collect(),
                prob_above_null: partition.iter().map(|&m| fits[m].1).collect(),
            })
        }
        ComparatorMethod::BhmModerate | ComparatorMethod::BhmStrong => {
            let shape = if method == ComparatorMethod::BhmModerate { 5.0 } else { 50.0 };
            // These comparators pin the precision prior to Gamma(shape, 1).
            let comparator_prior = HierPriorConfig { beta: 1.0, ..*prior };
            let draws = fit_cluster_bhm_binary(
                trial,
                &vec![0; n],
                &[shape],
                &comparator_prior,
                mcmc,
            )?;
            Ok(MethodFit {
                estimates: draws.means(),
                prob_above_null: draws.prob_above(rule.p_null),
            })
        }
        ComparatorMethod::Bhmoi => {
            let result = run_bhmoi_binary(trial, prior, mcmc, clustering, slope)?;
            Ok(MethodFit {
                estimates: result.posteriors.means(),
                prob_above_null: result.posteriors.prob_above(rule.p_null),
            })
        }
    }
}

/// Mean squared error and mean bias of per-replication estimates against
/// per-replication truths, per subgroup.
pub fn compute_oce(estimates: &[Vec<f64>], truths: &[Vec<f64>]) -> Result<Vec<(f64, f64)>> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::InvalidParameter(format!(
            "{} estimate rows against {} truth rows",
            estimates.len(),
            truths.len()
        )));
    }
    let n = estimates[0].len();
    let mut mse = vec![0.0f64; n];
    let mut bias = vec![0.0f64; n];
    for (est, truth) in estimates.iter().zip(truths) {
        if est.len() != n || truth.len() != n {
            return Err(Error::InvalidParameter("ragged estimate or truth row".into()));
        }
        for i in 0..n {
            let d = est[i] - truth[i];
            mse[i] += d * d;
            bias[i] += d;
        }
    }
    let reps = estimates.len() as f64;
    Ok(mse
        .into_iter()
        .zip(bias)
        .map(|(m, b)| (m / reps, b / reps))
        .collect())
}

/// Fraction of replications rejecting the null, per subgroup.
pub fn compute_och(decisions: &[Vec<bool>]) -> Result<Vec<f64>> {
    if decisions.is_empty() {
        return Err(Error::InvalidParameter("no decision rows".into()));
    }
    let n = decisions[0].len();
    let mut counts = vec![0usize; n];
    for row in decisions {
        if row.len() != n {
            return Err(Error::InvalidParameter("ragged decision row".into()));
        }
        for (c, &d) in counts.iter_mut().zip(row) {
            if d {
                *c += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / decisions.len() as f64).collect())
}

/// Study-wide settings shared by every scenario and method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub reps: usize,
    pub seed: u64,
    pub methods: Vec<ComparatorMethod>,
    pub rule: DecisionRule,
    pub prior: HierPriorConfig,
    pub mcmc: McmcConfig,
    pub clustering: ClusteringConfig,
    pub slope: SlopeVariant,
    /// Replications may fail (for example a divergent chain); the study
    /// aborts when more than this fraction do.
    pub max_failure_fraction: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            reps: 500,
            seed: DEFAULT_SEED,
            methods: ComparatorMethod::ALL.to_vec(),
            rule: DecisionRule::default(),
            prior: HierPriorConfig::default(),
            mcmc: McmcConfig::default(),
            clustering: ClusteringConfig::default(),
            slope: SlopeVariant::default(),
            max_failure_fraction: 0.01,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        if !(0.0..1.0).contains(&self.max_failure_fraction) {
            return Err(Error::InvalidParameter(format!(
                "max_failure_fraction {} outside [0, 1)",
                self.max_failure_fraction
            )));
        }
        self.rule.validate()?;
        self.prior.validate()?;
        self.mcmc.validate()
    }
}

/// Operating characteristics of one method on one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub scenario: String,
    pub method: ComparatorMethod,
    /// Rejection rate per subgroup: power where the true rate exceeds the
    /// null, type I error where it does not.
    pub rejection_rate: Vec<f64>,
    pub mse: Vec<f64>,
    pub bias: Vec<f64>,
    pub reps_used: usize,
    pub reps_failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub reps: usize,
    pub seed: u64,
    pub rule: DecisionRule,
    pub results: Vec<OperatingCharacteristics>,
}

/// FNV-1a hash, used to fold scenario names into seed-derivation tags.
fn name_tag(name: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn enforce_failure_budget(failed: usize, total: usize, max_fraction: f64) -> Result<()> {
    if failed as f64 > max_fraction * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

struct RepRecord {
    true_rates: Vec<f64>,
    fits: Vec<MethodFit>,
}

/// Runs every method on every replication of one scenario. The replication
/// is the unit of failure: if any method fails on it, the whole replication
/// is dropped for all methods, keeping the paired comparison fair.
fn run_scenario_reps(
    spec: &ScenarioSpec,
    methods: &[ComparatorMethod],
    config: &StudyConfig,
) -> Result<(Vec<RepRecord>, usize)> {
    let scen_tag = name_tag(&spec.name);
    let true_part = spec.true_partition();
    let a = spec.a.unwrap_or(config.clustering.a);
    let records: Vec<Result<RepRecord>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_seed(config.seed, &[STREAM_DATA, scen_tag, rep as u64]);
            let sim = generate_scenario(spec, rep_seed)?;
            let mut fits = Vec::with_capacity(methods.len());
            for &method in methods {
                let method_seed = derive_seed(
                    config.seed,
                    &[STREAM_METHOD, scen_tag, rep as u64, method.tag()],
                );
                let mcmc = McmcConfig { seed: method_seed, ..config.mcmc };
                let clustering =
                    ClusteringConfig { a, seed: method_seed, ..config.clustering.clone() };
                fits.push(analyze(
                    method,
                    &sim.trial,
                    Some(&true_part),
                    &config.rule,
                    &config.prior,
                    &mcmc,
                    &clustering,
                    config.slope,
                )?);
            }
            Ok(RepRecord { true_rates: sim.true_rates, fits })
        })
        .collect();

    let mut kept = Vec::with_capacity(config.reps);
    let mut failed = 0usize;
    for record in records {
        match record {
            Ok(r) => kept.push(r),
            Err(_) => failed += 1,
        }
    }
    enforce_failure_budget(failed, config.reps, config.max_failure_fraction)?;
    if kept.is_empty() {
        return Err(Error::TooManyFailures { failed, total: config.reps });
    }
    Ok((kept, failed))
}

/// Full factorial scenario-by-method sweep. Data are generated once per
/// (scenario, replication) and shared across methods; every replication and
/// method owns a derived seed, so results are independent of scheduling.
pub fn run_study(scenarios: &[ScenarioSpec], config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    if scenarios.is_empty() {
        return Err(Error::InvalidParameter("no scenarios selected".into()));
    }
    for spec in scenarios {
        spec.validate()?;
    }
    let mut results = Vec::with_capacity(scenarios.len() * config.methods.len());
    for spec in scenarios {
        let (records, failed) = run_scenario_reps(spec, &config.methods, config)?;
        let truths: Vec<Vec<f64>> = records.iter().map(|r| r.true_rates.clone()).collect();
        for (m_idx, &method) in config.methods.iter().enumerate() {
            let estimates: Vec<Vec<f64>> =
                records.iter().map(|r| r.fits[m_idx].estimates.clone()).collect();
            let decisions: Vec<Vec<bool>> = records
                .iter()
                .map(|r| {
                    r.fits[m_idx]
                        .prob_above_null
                        .iter()
                        .map(|&p| p > config.rule.cutoff)
                        .collect()
                })
                .collect();
            let oce = compute_oce(&estimates, &truths)?;
            let och = compute_och(&decisions)?;
            results.push(OperatingCharacteristics {
                scenario: spec.name.clone(),
                method,
                rejection_rate: och,
                mse: oce.iter().map(|&(m, _)| m).collect(),
                bias: oce.iter().map(|&(_, b)| b).collect(),
                reps_used: records.len(),
                reps_failed: failed,
            });
        }
    }
    Ok(StudyResult {
        reps: config.reps,
        seed: config.seed,
        rule: config.rule,
        results,
    })
}

/// Cutoff grid scanned by [`calibrate_cutoff`].
pub fn calibration_grid() -> Vec<f64> {
    (80..=99).map(|c| c as f64 / 100.0).collect()
}

/// Smallest cutoff on the 0.80..=0.99 grid whose mean type I error across
/// subgroups, simulated under `null_spec`, stays at or below `target_alpha`.
/// Returns the cutoff together with the type I error it achieves.
pub fn calibrate_cutoff(
    method: ComparatorMethod,
    null_spec: &ScenarioSpec,
    target_alpha: f64,
    config: &StudyConfig,
) -> Result<(f64, f64)> {
    if !target_alpha.is_finite() || target_alpha <= 0.0 || target_alpha > 1.0 {
        return Err(Error::InvalidParameter(format!(
            "target_alpha {target_alpha} outside (0, 1]"
        )));
    }
    config.validate()?;
    null_spec.validate()?;
    let (records, _failed) = run_scenario_reps(null_spec, &[method], config)?;
    let mut achieved = Vec::new();
    for cutoff in calibration_grid() {
        let decisions: Vec<Vec<bool>> = records
            .iter()
            .map(|r| r.fits[0].prob_above_null.iter().map(|&p| p > cutoff).collect())
            .collect();
        let rates = compute_och(&decisions)?;
        let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
        if mean_rate <= target_alpha {
            return Ok((cutoff, mean_rate));
        }
        achieved.push((cutoff, mean_rate));
    }
    Err(Error::CalibrationFailed { target: target_alpha, achieved })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_mcmc(seed: u64) -> McmcConfig {
        McmcConfig { iterations: 2_500, burn_in: 500, seed, ..Default::default() }
    }

    #[test]
    fn standard_scenarios_match_their_design() {
        let s1 = ScenarioSpec::standard(1).unwrap();
        assert_eq!(
            s1.rates,
            vec![0.1, 0.1, 0.1, 0.1, 0.25, 0.25, 0.25, 0.5, 0.5, 0.5]
        );
        assert_eq!(s1.per_subgroup_n, 15);
        assert_eq!(s1.a, Some(0.3));
        assert_eq!(s1.true_partition(), vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);

        let s2 = ScenarioSpec::standard(2).unwrap();
        assert_eq!(s2.rates.iter().filter(|&&r| r == 0.1).count(), 7);
        assert_eq!(s2.rates[9], 0.5);

        let s6 = ScenarioSpec::standard(6).unwrap();
        assert!(s6.rates.iter().all(|&r| r == 0.1));
        assert_eq!(s6.a, Some(0.5));
        assert_eq!(s6.true_partition(), vec![0; 10]);

        assert!(ScenarioSpec::standard(0).is_err());
        assert!(ScenarioSpec::standard(7).is_err());
    }

    #[test]
    fn scenario_specs_round_trip_through_json() {
        let spec = ScenarioSpec::standard(4).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        let back: ScenarioSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn generated_counts_match_the_binomial_mean() {
        let spec = ScenarioSpec::new("one", vec![0.25], 15).unwrap();
        let reps = 100_000u64;
        let mut total = 0u64;
        for rep in 0..reps {
            let sim = generate_scenario(&spec, derive_seed(9, &[rep])).unwrap();
            total += sim.trial.responses()[0] as u64;
        }
        let mean_y = total as f64 / reps as f64;
        assert!((mean_y - 3.75).abs() < 0.02, "mean {mean_y}");
    }

    #[test]
    fn near_zero_rate_yields_zero_responses() {
        let spec = ScenarioSpec::new("tiny", vec![1e-9; 3], 15).unwrap();
        let sim = generate_scenario(&spec, 1).unwrap();
        assert_eq!(sim.trial.responses(), &[0, 0, 0]);
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = ScenarioSpec::standard(1).unwrap();
        let a = generate_scenario(&spec, 7).unwrap();
        let b = generate_scenario(&spec, 7).unwrap();
        let c = generate_scenario(&spec, 8).unwrap();
        assert_eq!(a.trial, b.trial);
        assert_ne!(a.trial, c.trial);
    }

    #[test]
    fn uniform_bands_redraw_rates_within_their_tier() {
        let spec = ScenarioSpec::standard(1).unwrap().with_uniform_bands().unwrap();
        assert_eq!(spec.true_partition(), vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2]);
        let mut seen_distinct = false;
        for rep in 0..5 {
            let sim = generate_scenario(&spec, derive_seed(3, &[rep])).unwrap();
            for (i, &r) in sim.true_rates.iter().enumerate() {
                let (lo, hi) = spec.rate_bands.as_ref().unwrap()[i];
                assert!((lo..=hi).contains(&r), "rate {r} outside [{lo}, {hi}]");
            }
            if sim.true_rates[0] != sim.true_rates[1] {
                seen_distinct = true;
            }
        }
        assert!(seen_distinct, "bands never produced distinct rates");
    }

    #[test]
    fn independent_fit_matches_the_beta_closed_form() {
        let trial = BinaryTrialData::from_counts(vec![4], vec![15]).unwrap();
        let rule = DecisionRule::default();
        let fit = analyze(
            ComparatorMethod::Independent,
            &trial,
            None,
            &rule,
            &HierPriorConfig::default(),
            &McmcConfig::default(),
            &ClusteringConfig::default(),
            SlopeVariant::default(),
        )
        .unwrap();
        assert!((fit.estimates[0] - 4.5 / 16.0).abs() < 1e-12);
        // Beta(4.5, 11.5) upper tail beyond 0.1.
        assert!((fit.prob_above_null[0] - 0.9725).abs() < 1e-3, "{}", fit.prob_above_null[0]);
        assert!(fit.prob_above_null[0] > rule.cutoff);
    }

    #[test]
    fn pooled_fit_is_shared_across_subgroups() {
        let trial = BinaryTrialData::from_counts(vec![2, 4, 6], vec![15, 15, 15]).unwrap();
        let fit = analyze(
            ComparatorMethod::Pooled,
            &trial,
            None,
            &DecisionRule::default(),
            &HierPriorConfig::default(),
            &McmcConfig::default(),
            &ClusteringConfig::default(),
            SlopeVariant::default(),
        )
        .unwrap();
        let expect = 12.5 / 46.0;
        for &e in &fit.estimates {
            assert!((e - expect).abs() < 1e-12);
        }
        assert!(fit.prob_above_null.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn oracle_pools_within_true_clusters_only() {
        let spec = ScenarioSpec::standard(1).unwrap();
        let sim = generate_scenario(&spec, 11).unwrap();
        let partition = spec.true_partition();
        let fit = analyze(
            ComparatorMethod::Oracle,
            &sim.trial,
            Some(&partition),
            &DecisionRule::default(),
            &HierPriorConfig::default(),
            &McmcConfig::default(),
            &ClusteringConfig::default(),
            SlopeVariant::default(),
        )
        .unwrap();
        for group in [&[0usize, 1, 2, 3][..], &[4, 5, 6], &[7, 8, 9]] {
            for w in group.windows(2) {
                assert_eq!(fit.estimates[w[0]], fit.estimates[w[1]]);
            }
        }
        assert_ne!(fit.estimates[0], fit.estimates[9]);

        let missing = analyze(
            ComparatorMethod::Oracle,
            &sim.trial,
            None,
            &DecisionRule::default(),
            &HierPriorConfig::default(),
            &McmcConfig::default(),
            &ClusteringConfig::default(),
            SlopeVariant::default(),
        );
        assert!(missing.is_err());
    }

    #[test]
    fn hierarchical_comparators_produce_sane_fits() {
        let trial = BinaryTrialData::from_counts(vec![1, 2, 3, 2], vec![15; 4]).unwrap();
        for method in [ComparatorMethod::BhmModerate, ComparatorMethod::BhmStrong] {
            let fit = analyze(
                method,
                &trial,
                None,
                &DecisionRule::default(),
                &HierPriorConfig::default(),
                &small_mcmc(13),
                &ClusteringConfig::default(),
                SlopeVariant::default(),
            )
            .unwrap();
            for (&e, &p) in fit.estimates.iter().zip(&fit.prob_above_null) {
                assert!((0.0..1.0).contains(&e), "estimate {e}");
                assert!((0.0..=1.0).contains(&p), "probability {p}");
            }
        }
    }

    #[test]
    fn oce_is_zero_for_perfect_estimates_and_exact_for_constant_ones() {
        let truths = vec![vec![0.1, 0.25]; 4];
        let perfect = compute_oce(&truths, &truths).unwrap();
        for &(m, b) in &perfect {
            assert_eq!(m, 0.0);
            assert_eq!(b, 0.0);
        }
        let constant = vec![vec![0.2, 0.2]; 4];
        let oce = compute_oce(&constant, &truths).unwrap();
        assert!((oce[0].0 - 0.01).abs() < 1e-15);
        assert!((oce[0].1 - 0.1).abs() < 1e-15);
        assert!((oce[1].0 - 0.0025).abs() < 1e-15);
        assert!((oce[1].1 + 0.05).abs() < 1e-15);

        assert!(compute_oce(&constant, &truths[..2].to_vec()).is_err());
        assert!(compute_oce(&[], &[]).is_err());
    }

    #[test]
    fn independent_oce_matches_exact_binomial_enumeration() {
        // Closed form: the Jeffreys posterior mean is (y + 0.5) / (n + 1),
        // so its MSE and bias at p = 0.1, n = 15 follow by summing over the
        // binomial distribution of y.
        let (n, p) = (15u32, 0.1f64);
        let mut pmf = (1.0 - p).powi(n as i32);
        let (mut exact_mse, mut exact_bias) = (0.0, 0.0);
        for y in 0..=n {
            let est = (y as f64 + 0.5) / (n as f64 + 1.0);
            exact_mse += pmf * (est - p) * (est - p);
            exact_bias += pmf * (est - p);
            pmf *= (n - y) as f64 / (y as f64 + 1.0) * p / (1.0 - p);
        }
        assert!((exact_mse - 0.0058984375).abs() < 1e-12);
        assert!((exact_bias - 0.025).abs() < 1e-12);

        let spec = ScenarioSpec::new("null", vec![0.1], 15).unwrap();
        let config = StudyConfig {
            reps: 20_000,
            seed: 17,
            methods: vec![ComparatorMethod::Independent],
            ..Default::default()
        };
        let study = run_study(&[spec], &config).unwrap();
        let oc = &study.results[0];
        assert!((oc.mse[0] - exact_mse).abs() < 4e-4, "mse {}", oc.mse[0]);
        assert!((oc.bias[0] - exact_bias).abs() < 2e-3, "bias {}", oc.bias[0]);
    }

    #[test]
    fn och_counts_rejections_and_respects_cutoff_monotonicity() {
        assert_eq!(compute_och(&[vec![true, true]]).unwrap(), vec![1.0, 1.0]);
        assert_eq!(compute_och(&[vec![false], vec![false]]).unwrap(), vec![0.0]);
        assert!(compute_och(&[]).is_err());

        // Rejection sets shrink as the cutoff rises.
        let probs = [0.2, 0.9, 0.94, 0.951, 0.97, 0.99];
        let low: Vec<Vec<bool>> = probs.iter().map(|&p| vec![p > 0.9]).collect();
        let high: Vec<Vec<bool>> = probs.iter().map(|&p| vec![p > 0.95]).collect();
        assert!(compute_och(&high).unwrap()[0] <= compute_och(&low).unwrap()[0]);
    }

    #[test]
    fn single_rep_smoke_study_runs() {
        let spec = ScenarioSpec::standard(6).unwrap();
        let config = StudyConfig {
            reps: 1,
            methods: vec![ComparatorMethod::Independent],
            ..Default::default()
        };
        let study = run_study(&[spec], &config).unwrap();
        assert_eq!(study.results.len(), 1);
        let oc = &study.results[0];
        assert_eq!(oc.reps_used, 1);
        assert_eq!(oc.reps_failed, 0);
        assert_eq!(oc.rejection_rate.len(), 10);
        for (&m, &b) in oc.mse.iter().zip(&oc.bias) {
            assert!(b * b <= m + 1e-12);
        }
    }

    #[test]
    fn study_results_are_reproducible_and_consistent() {
        let spec = ScenarioSpec::standard(3).unwrap();
        let config = StudyConfig {
            reps: 40,
            seed: 23,
            methods: vec![
                ComparatorMethod::Independent,
                ComparatorMethod::Pooled,
                ComparatorMethod::Oracle,
            ],
            ..Default::default()
        };
        let a = run_study(std::slice::from_ref(&spec), &config).unwrap();
        let b = run_study(std::slice::from_ref(&spec), &config).unwrap();
        assert_eq!(a, b);
        for oc in &a.results {
            for &r in &oc.rejection_rate {
                assert!((0.0..=1.0).contains(&r));
            }
            for (&m, &bias) in oc.mse.iter().zip(&oc.bias) {
                assert!(m >= 0.0);
                assert!(bias * bias <= m + 1e-12);
            }
        }
    }

    #[test]
    fn failure_budget_is_enforced() {
        assert!(enforce_failure_budget(0, 100, 0.01).is_ok());
        assert!(enforce_failure_budget(1, 100, 0.01).is_ok());
        let err = enforce_failure_budget(2, 100, 0.01).unwrap_err();
        assert!(matches!(err, Error::TooManyFailures { failed: 2, total: 100 }));
    }

    #[test]
    fn calibration_finds_the_loosest_acceptable_cutoff() {
        let spec = ScenarioSpec::standard(6).unwrap();
        let config = StudyConfig {
            reps: 400,
            seed: 29,
            methods: vec![ComparatorMethod::Independent],
            ..Default::default()
        };

        // Any cutoff passes a target of 1, so the scan stops at 0.80.
        let (cutoff, achieved) =
            calibrate_cutoff(ComparatorMethod::Independent, &spec, 1.0, &config).unwrap();
        assert_eq!(cutoff, 0.80);
        assert!(achieved <= 1.0);

        // 0.95 already achieves the exact binomial tail 0.0556.
        let (cutoff, achieved) =
            calibrate_cutoff(ComparatorMethod::Independent, &spec, 0.06, &config).unwrap();
        assert!(cutoff <= 0.95, "cutoff {cutoff}");
        assert!(achieved <= 0.06);

        // No grid point can reach a near-zero type I error.
        let err = calibrate_cutoff(ComparatorMethod::Independent, &spec, 1e-9, &config)
            .unwrap_err();
        match err {
            Error::CalibrationFailed { achieved, .. } => assert_eq!(achieved.len(), 20),
            other => panic!("unexpected error {other}"),
        }
        assert!(calibrate_cutoff(ComparatorMethod::Independent, &spec, 0.0, &config).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for method in ComparatorMethod::ALL {
            assert_eq!(ComparatorMethod::parse(method.name()).unwrap(), method);
        }
        assert!(ComparatorMethod::parse("nope").is_err());
        let text = serde_json::to_string(&ComparatorMethod::BhmModerate).unwrap();
        assert_eq!(text, "\"bhm-moderate\"");
    }

    #[test]
    fn bhmoi_analysis_runs_end_to_end_on_one_replication() {
        let spec = ScenarioSpec::standard(4).unwrap();
        let sim = generate_scenario(&spec, 31).unwrap();
        let clustering = ClusteringConfig {
            a: spec.a.unwrap(),
            restarts: 8,
            seed: 31,
            ..Default::default()
        };
        let fit = analyze(
            ComparatorMethod::Bhmoi,
            &sim.trial,
            Some(&spec.true_partition()),
            &DecisionRule::default(),
            &HierPriorConfig::default(),
            &small_mcmc(31),
            &clustering,
            SlopeVariant::default(),
        )
        .unwrap();
        assert_eq!(fit.estimates.len(), 10);
        for (&e, &p) in fit.estimates.iter().zip(&fit.prob_above_null) {
            assert!((0.0..1.0).contains(&e));
            assert!((0.0..=1.0).contains(&p));
        }
    }
}
