//! Command-line surface for the overlap-borrowing pipeline: cluster
//! posterior densities, fit the full borrowing model, simulate operating
//! characteristics, calibrate decision cutoffs, sweep the cluster-count
//! penalty, and render reports.
//!
//! Every subcommand is deterministic given (inputs, config, seed) and exits
//! zero only after all of its declared outputs are in place. Files are
//! written atomically, so a crashed run never leaves a truncated artifact.

mod render;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bhmoi::io::SCHEMA_VERSION;
use bhmoi::kde::{DEFAULT_GRID_EXTENSION, DEFAULT_GRID_POINTS};
use bhmoi::{
    build_common_grid, calibrate_cutoff, density_from_samples, noninformative_posteriors_binary,
    optimal_partition, read_binary_trial_csv, read_samples_csv, run_bhmoi_binary, run_study,
    write_density_csv, write_json, write_och_csv, write_oce_csv, BhmoiReport, ClusteringConfig,
    ClusteringReport, ComparatorMethod, DecisionRule, Error, HierPriorConfig, McmcConfig,
    SampleSet, ScenarioSpec, SlopeVariant, StudyConfig, StudyManifest,
};

#[derive(Parser)]
#[command(
    name = "bhmoi",
    version,
    about = "Overlap-guided clustering and dynamic information borrowing for subgroup data"
)]
struct Cli {
    /// Worker thread count; overrides the BHMOI_THREADS environment
    /// variable. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster posterior densities by overlap and report the partition.
    Cluster(ClusterArgs),
    /// Run the full borrowing pipeline on binary trial counts.
    Fit(FitArgs),
    /// Simulate operating characteristics across scenarios and methods.
    Simulate(SimulateArgs),
    /// Find the decision cutoff meeting a type-I-error target.
    Calibrate(CalibrateArgs),
    /// Re-cluster the same data over a grid of penalty exponents `a`.
    Sweep(SweepArgs),
    /// Render SVG plots and a markdown summary from result JSON files.
    Report(ReportArgs),
}

#[derive(Args)]
struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,

    /// TOML or JSON config file; omitted sections use documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Seed override applied to every stage.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DensityInput {
    /// Posterior draws CSV (`subgroup_id,draw`), one set per subgroup.
    #[arg(long, required_unless_present = "trial", conflicts_with = "trial")]
    samples: Option<PathBuf>,

    /// Binary counts CSV (`subgroup_id,responses,size`); densities then
    /// come from the noninformative first-stage fit.
    #[arg(long)]
    trial: Option<PathBuf>,
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    input: DensityInput,

    /// Cluster-count penalty exponent in (0, 1]; larger favors fewer
    /// clusters.
    #[arg(long)]
    a: Option<f64>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    out: OutArgs,

    /// Binary counts CSV (`subgroup_id,responses,size`).
    #[arg(long)]
    trial: PathBuf,

    /// Cluster-count penalty exponent in (0, 1].
    #[arg(long)]
    a: Option<f64>,

    /// Upper end of the borrowing-strength range.
    #[arg(long)]
    alpha_max: Option<f64>,

    /// Borrowing slope: aggressive5, moderate1, or linear.
    #[arg(long)]
    slope: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    out: OutArgs,

    /// Scenario indices 1-6, comma separated. Default: all six.
    #[arg(long, value_delimiter = ',')]
    scenarios: Vec<usize>,

    /// Method names, comma separated (independent, pooled, bhm-moderate,
    /// bhm-strong, oracle, bhmoi). Default: all six.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,

    /// Replications per scenario.
    #[arg(long)]
    reps: Option<usize>,

    /// Redraw each subgroup's true rate per replication from its tier band
    /// instead of using the fixed tier rates. Rates then differ within a
    /// cluster, so the rejection table is not written.
    #[arg(long)]
    uniform_bands: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    out: OutArgs,

    /// Method to calibrate.
    #[arg(long)]
    method: String,

    /// Highest acceptable per-subgroup type I error.
    #[arg(long)]
    target_alpha: f64,

    /// Null scenario index (one where no subgroup exceeds the null rate).
    #[arg(long, default_value_t = 6)]
    scenario: usize,

    /// Replications used to estimate each cutoff's error rate.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    out: OutArgs,
    #[command(flatten)]
    input: DensityInput,

    /// Penalty exponents to scan, comma separated, each in (0, 1].
    #[arg(long, value_delimiter = ',', required = true)]
    a_grid: Vec<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result JSON files produced by `cluster` or `fit`.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads)?;
    let progress = Progress { enabled: cli.verbose };
    match cli.command {
        Command::Cluster(args) => cmd_cluster(args, &progress),
        Command::Fit(args) => cmd_fit(args, &progress),
        Command::Simulate(args) => cmd_simulate(args, &progress),
        Command::Calibrate(args) => cmd_calibrate(args, &progress),
        Command::Sweep(args) => cmd_sweep(args, &progress),
        Command::Report(args) => cmd_report(args, &progress),
    }
}

struct Progress {
    enabled: bool,
}

impl Progress {
    fn note(&self, message: &str) {
        if self.enabled {
            eprintln!("{message}");
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let from_env = || {
        std::env::var("BHMOI_THREADS")
            .ok()
            .and_then(|raw| raw.parse::<usize>().ok())
            .filter(|&n| n > 0)
    };
    if let Some(threads) = flag.or_else(from_env) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

/// Analysis-side settings shared by `cluster`, `fit`, and `sweep`.
#[derive(serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AnalysisConfig {
    clustering: ClusteringConfig,
    prior: HierPriorConfig,
    mcmc: McmcConfig,
    slope: SlopeVariant,
    rule: DecisionRule,
    credible_level: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            clustering: ClusteringConfig::default(),
            prior: HierPriorConfig::default(),
            mcmc: McmcConfig::default(),
            slope: SlopeVariant::default(),
            rule: DecisionRule::default(),
            credible_level: 0.95,
        }
    }
}

fn load_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let parsed = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(anyhow::Error::from),
        Some("json") => serde_json::from_str(&text).map_err(anyhow::Error::from),
        _ => bail!("config file must end in .toml or .json: {}", path.display()),
    };
    parsed.with_context(|| format!("parsing config {}", path.display()))
}

fn parse_slope(name: &str) -> Result<SlopeVariant> {
    match name {
        "aggressive5" => Ok(SlopeVariant::Aggressive5),
        "moderate1" => Ok(SlopeVariant::Moderate1),
        "linear" => Ok(SlopeVariant::Linear),
        other => bail!("unknown slope `{other}`; expected aggressive5, moderate1, or linear"),
    }
}

/// Marks every temp-file-then-rename output so a final listing can promise
/// the full declared set was written.
struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { written: Vec::new() }
    }

    fn add(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn names(&self, base: &Path) -> Vec<String> {
        self.written
            .iter()
            .map(|p| {
                p.strip_prefix(base)
                    .unwrap_or(p)
                    .to_string_lossy()
                    .into_owned()
            })
            .collect()
    }

    fn announce(&self) {
        for path in &self.written {
            println!("wrote {}", path.display());
        }
    }
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.') { c } else { '_' })
        .collect()
}

/// Loads sample sets either directly from a draws CSV or by running the
/// noninformative first-stage fit on binary counts.
fn density_inputs(
    input: &DensityInput,
    config: &AnalysisConfig,
    progress: &Progress,
) -> Result<Vec<SampleSet>> {
    if let Some(samples) = &input.samples {
        progress.note(&format!("reading draws from {}", samples.display()));
        return Ok(read_samples_csv(samples)?);
    }
    let trial_path = input.trial.as_ref().expect("clap enforces one input");
    progress.note(&format!("reading counts from {}", trial_path.display()));
    let trial = read_binary_trial_csv(trial_path)?;
    progress.note("sampling first-stage posteriors");
    let draws = noninformative_posteriors_binary(&trial, &config.prior, &config.mcmc)?;
    Ok(draws.to_sample_sets()?)
}

fn estimate_densities(
    sets: &[SampleSet],
) -> Result<(Vec<String>, Vec<bhmoi::GriddedDensity>), Error> {
    let grid = Arc::new(build_common_grid(sets, DEFAULT_GRID_POINTS, DEFAULT_GRID_EXTENSION)?);
    let labels = sets.iter().map(|s| s.label().to_string()).collect();
    let densities = sets
        .iter()
        .map(|s| density_from_samples(s, &grid))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((labels, densities))
}

fn write_subgroup_densities(
    dir: &Path,
    labels: &[String],
    densities: &[bhmoi::GriddedDensity],
    outputs: &mut Outputs,
) -> Result<()> {
    for (i, (label, density)) in labels.iter().zip(densities).enumerate() {
        let path = dir.join(format!("g{}_{}.csv", i + 1, file_label(label)));
        write_density_csv(&path, density)?;
        outputs.add(path);
    }
    Ok(())
}

fn cmd_cluster(args: ClusterArgs, progress: &Progress) -> Result<()> {
    let mut config: AnalysisConfig = load_config(args.out.config.as_deref())?;
    if let Some(seed) = args.out.seed {
        config.clustering.seed = seed;
        config.mcmc.seed = seed;
    }
    if let Some(a) = args.a {
        config.clustering.a = a;
    }

    let sets = density_inputs(&args.input, &config, progress)?;
    let (labels, densities) = estimate_densities(&sets)?;
    progress.note(&format!("clustering {} densities", densities.len()));
    let result = optimal_partition(&densities, &config.clustering)?;
    let report = ClusteringReport::from_result(&labels, &result);

    let out = &args.out.out;
    let mut outputs = Outputs::new();

    let result_path = out.join("result.json");
    report.save(&result_path)?;
    outputs.add(result_path);

    let mut oci_csv = String::from("k,oci\n");
    for (k, score) in &report.oci_by_k {
        oci_csv.push_str(&format!("{k},{score}\n"));
    }
    let oci_path = out.join("oci_by_k.csv");
    bhmoi::io::atomic_write(&oci_path, oci_csv.as_bytes())?;
    outputs.add(oci_path);

    let density_dir = out.join("densities");
    write_subgroup_densities(&density_dir, &labels, &densities, &mut outputs)?;
    for (m, mean) in result.partition.cluster_means().iter().enumerate() {
        let path = density_dir.join(format!("cluster{}_mean.csv", m + 1));
        write_density_csv(&path, mean)?;
        outputs.add(path);
    }

    progress.note(&format!("selected {} clusters (objective {:.4})", report.k, report.oci));
    outputs.announce();
    Ok(())
}

fn cmd_fit(args: FitArgs, progress: &Progress) -> Result<()> {
    let mut config: AnalysisConfig = load_config(args.out.config.as_deref())?;
    if let Some(seed) = args.out.seed {
        config.clustering.seed = seed;
        config.mcmc.seed = seed;
    }
    if let Some(a) = args.a {
        config.clustering.a = a;
    }
    if let Some(alpha_max) = args.alpha_max {
        config.prior.alpha_max = alpha_max;
    }
    if let Some(slope) = args.slope.as_deref() {
        config.slope = parse_slope(slope)?;
    }

    progress.note(&format!("reading counts from {}", args.trial.display()));
    let trial = read_binary_trial_csv(&args.trial)?;
    progress.note("running the borrowing pipeline");
    let result = run_bhmoi_binary(
        &trial,
        &config.prior,
        &config.mcmc,
        &config.clustering,
        config.slope,
    )?;
    let report = BhmoiReport::from_result(&result, config.rule.p_null, config.credible_level);

    let out = &args.out.out;
    let mut outputs = Outputs::new();

    let result_path = out.join("result.json");
    report.save(&result_path)?;
    outputs.add(result_path);

    let mut posterior_csv = String::from("subgroup,cluster,mean,sd,lower,upper,prob_above_null\n");
    for (summary, &cluster) in report.summaries.iter().zip(&report.assignments) {
        posterior_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            summary.label,
            cluster + 1,
            summary.mean,
            summary.sd,
            summary.lower,
            summary.upper,
            summary.prob_above_null,
        ));
    }
    let posterior_path = out.join("posteriors.csv");
    bhmoi::io::atomic_write(&posterior_path, posterior_csv.as_bytes())?;
    outputs.add(posterior_path);

    let mut borrow_csv = String::from("cluster,size,obi,alpha\n");
    for (m, (obi, alpha)) in report.obi.iter().zip(&report.alphas).enumerate() {
        let size = report.assignments.iter().filter(|&&c| c == m).count();
        borrow_csv.push_str(&format!("{},{size},{obi},{alpha}\n", m + 1));
    }
    let borrow_path = out.join("borrowing.csv");
    bhmoi::io::atomic_write(&borrow_path, borrow_csv.as_bytes())?;
    outputs.add(borrow_path);

    write_subgroup_densities(
        &out.join("densities"),
        &report.labels,
        &result.densities,
        &mut outputs,
    )?;

    progress.note(&format!(
        "{} clusters; borrowing shapes {:?}",
        report.k,
        report.alphas.iter().map(|a| (a * 10.0).round() / 10.0).collect::<Vec<_>>()
    ));
    outputs.announce();
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, progress: &Progress) -> Result<()> {
    let mut config: StudyConfig = load_config(args.out.config.as_deref())?;
    if let Some(seed) = args.out.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    if !args.methods.is_empty() {
        config.methods = args
            .methods
            .iter()
            .map(|name| ComparatorMethod::parse(name))
            .collect::<Result<Vec<_>, Error>>()?;
    }

    let indices: Vec<usize> =
        if args.scenarios.is_empty() { (1..=6).collect() } else { args.scenarios.clone() };
    let mut scenarios = Vec::with_capacity(indices.len());
    for index in indices {
        let mut spec = ScenarioSpec::standard(index)?;
        if args.uniform_bands {
            spec = spec.with_uniform_bands()?;
        }
        scenarios.push(spec);
    }

    progress.note(&format!(
        "running {} scenario(s) x {} method(s), {} reps",
        scenarios.len(),
        config.methods.len(),
        config.reps
    ));
    let study = run_study(&scenarios, &config)?;

    let out = &args.out.out;
    let mut outputs = Outputs::new();

    // The band variants redraw true rates per replication, so per-subgroup
    // rejection rates mix different truths; only estimation error is
    // reported for them.
    if !args.uniform_bands {
        let och_path = out.join("och.csv");
        write_och_csv(&och_path, &study)?;
        outputs.add(och_path);
    }
    let oce_path = out.join("oce.csv");
    write_oce_csv(&oce_path, &study)?;
    outputs.add(oce_path);

    let manifest_path = out.join("manifest.json");
    let mut names = outputs.names(out);
    names.push("manifest.json".to_string());
    StudyManifest::new(&config, &scenarios, names).save(&manifest_path)?;
    outputs.add(manifest_path);

    outputs.announce();
    Ok(())
}

#[derive(serde::Serialize)]
struct CalibrationOutcome {
    schema_version: u32,
    method: ComparatorMethod,
    scenario: String,
    target_alpha: f64,
    /// Largest grid cutoff whose worst per-subgroup type I error stays at
    /// or under the target.
    cutoff: f64,
    achieved: f64,
    reps: usize,
    seed: u64,
}

fn cmd_calibrate(args: CalibrateArgs, progress: &Progress) -> Result<()> {
    let mut config: StudyConfig = load_config(args.out.config.as_deref())?;
    if let Some(seed) = args.out.seed {
        config.seed = seed;
    }
    if let Some(reps) = args.reps {
        config.reps = reps;
    }
    let method = ComparatorMethod::parse(&args.method)?;
    let null_spec = ScenarioSpec::standard(args.scenario)?;

    progress.note(&format!(
        "calibrating {method} on {} at target {}",
        null_spec.name, args.target_alpha
    ));
    let (cutoff, achieved) = calibrate_cutoff(method, &null_spec, args.target_alpha, &config)?;

    let outcome = CalibrationOutcome {
        schema_version: SCHEMA_VERSION,
        method,
        scenario: null_spec.name.clone(),
        target_alpha: args.target_alpha,
        cutoff,
        achieved,
        reps: config.reps,
        seed: config.seed,
    };
    let path = args.out.out.join("calibration.json");
    write_json(&path, &outcome)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs, progress: &Progress) -> Result<()> {
    if args.a_grid.is_empty() {
        bail!("--a-grid needs at least one value");
    }
    let mut config: AnalysisConfig = load_config(args.out.config.as_deref())?;
    if let Some(seed) = args.out.seed {
        config.clustering.seed = seed;
        config.mcmc.seed = seed;
    }

    let sets = density_inputs(&args.input, &config, progress)?;
    let (labels, densities) = estimate_densities(&sets)?;

    let mut rows = String::from("a,k,oci,mean_obi\n");
    let mut reports = Vec::with_capacity(args.a_grid.len());
    for &a in &args.a_grid {
        let clustering = ClusteringConfig { a, ..config.clustering.clone() };
        let result = optimal_partition(&densities, &clustering)?;
        let report = ClusteringReport::from_result(&labels, &result);
        let mean_obi = report.obi.iter().sum::<f64>() / report.obi.len() as f64;
        progress.note(&format!("a={a}: {} clusters, objective {:.4}", report.k, report.oci));
        rows.push_str(&format!("{a},{},{},{mean_obi}\n", report.k, report.oci));
        reports.push(report);
    }

    let out = &args.out.out;
    let mut outputs = Outputs::new();
    let csv_path = out.join("sweep.csv");
    bhmoi::io::atomic_write(&csv_path, rows.as_bytes())?;
    outputs.add(csv_path);
    let json_path = out.join("sweep.json");
    write_json(&json_path, &reports)?;
    outputs.add(json_path);

    outputs.announce();
    Ok(())
}

enum LoadedReport {
    Fit(Box<BhmoiReport>),
    Clusters(ClusteringReport),
}

fn load_report(path: &Path) -> Result<LoadedReport> {
    match BhmoiReport::load(path) {
        Ok(report) => return Ok(LoadedReport::Fit(Box::new(report))),
        Err(err @ Error::SchemaVersion { .. }) => {
            return Err(err).with_context(|| path.display().to_string())
        }
        Err(_) => {}
    }
    match ClusteringReport::load(path) {
        Ok(report) => Ok(LoadedReport::Clusters(report)),
        Err(err) => Err(err).with_context(|| format!("not a result file: {}", path.display())),
    }
}

fn cmd_report(args: ReportArgs, progress: &Progress) -> Result<()> {
    let mut summary = String::from("# Results\n\n");
    let mut outputs = Outputs::new();
    let plot_dir = args.out.join("plots");

    for input in &args.input {
        let stem = input
            .file_stem()
            .and_then(|s| s.to_str())
            .map(file_label)
            .unwrap_or_else(|| "result".to_string());
        progress.note(&format!("rendering {}", input.display()));
        let (svg, section) = match load_report(input)? {
            LoadedReport::Fit(report) => {
                if report.labels.is_empty() || report.obi.is_empty() {
                    bail!("{}: result has no clusters", input.display());
                }
                (render::bhmoi_svg(&report), render::bhmoi_markdown(&stem, &report))
            }
            LoadedReport::Clusters(report) => {
                if report.labels.is_empty() || report.obi.is_empty() {
                    bail!("{}: result has no clusters", input.display());
                }
                (render::clustering_svg(&report), render::clustering_markdown(&stem, &report))
            }
        };
        let svg_path = plot_dir.join(format!("{stem}.svg"));
        bhmoi::io::atomic_write(&svg_path, svg.as_bytes())?;
        outputs.add(svg_path);
        summary.push_str(&section);
    }

    let summary_path = args.out.join("summary.md");
    bhmoi::io::atomic_write(&summary_path, summary.as_bytes())?;
    outputs.add(summary_path);

    outputs.announce();
    Ok(())
}
