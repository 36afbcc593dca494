//! The `assm` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::Error;
use crate::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use crate::mapping::{
    build_anat, build_oc_anat, fit_mapping, generate_population_with, loo_evaluate_with, mapping_vs_corr,
    normality_report, orthogonal_procrustes, pearson_reports, sweep, AnatModel, LooOptions, MappingFile,
    MappingKind, PopulationOptions, PredictionMode, SyntheticPopulation,
};
use crate::morphometry::{
    measure, measurements_to_csv, measurements_to_json, LandmarkFile, LandmarkSet, MeasurementRecipe, RecipeRef,
};
use crate::pca::{build_base, metric_curves, BaseSsm};
use crate::service::{Registry, DEFAULT_MAX_BETA_STD};
use crate::shape::{obj, rigid_align, AlignOptions};
use crate::stats::{histogram, normal_fit};

#[derive(Debug, Parser)]
#[command(name = "assm", version, about = "Anatomically parameterized statistical shape models")]
pub struct Cli {
    /// Project configuration supplying default paths and settings.
    #[arg(long, global = true, value_name = "project.json")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a PCA shape model from a dataset directory.
    BuildBase(BuildBaseArgs),
    /// Compactness, generality and specificity curves as CSV.
    Metrics(MetricsArgs),
    /// Measure a dataset directory or a single OBJ mesh.
    Measure(MeasureArgs),
    /// Sample a synthetic population and measure it.
    GenPop(GenPopArgs),
    /// Histograms, normal fits, normality tests and correlation matrices.
    Stats(StatsArgs),
    /// Fit the mapping Q (and optionally its orthogonalized K).
    Learn(LearnArgs),
    /// Combine a base model with a mapping file.
    BuildAnat(BuildAnatArgs),
    /// Generate a shape from physical parameter values.
    Sample(SampleArgs),
    /// Per-parameter variability, optionally with sequential removal.
    Variability(VariabilityArgs),
    /// Sweep one parameter over +-3 standard deviations.
    Sweep(SweepArgs),
    /// Leave-one-out prediction errors.
    Loo(LooArgs),
    /// Synthetic fixture datasets.
    #[command(subcommand)]
    Fixtures(FixturesCommand),
    /// Serve models over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct BuildBaseArgs {
    pub dataset: Option<PathBuf>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Rigidly align the shapes before building.
    #[arg(long)]
    pub align: bool,
    /// Keep only the leading modes.
    #[arg(long)]
    pub rank: Option<usize>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub model: PathBuf,
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Dataset directory or OBJ file.
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    /// `femur`, `scapula` or a recipe JSON file; defaults to the landmark file's recipe.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Write JSON instead of CSV.
    #[arg(long)]
    pub json: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenPopArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<String>,
    #[arg(short = 'M', long = "size")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Measure the mean shape for every draw.
    #[arg(long)]
    pub zero_alpha: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub population: PathBuf,
    /// Directory for the CSV tables; a summary goes to stdout otherwise.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    pub population: PathBuf,
    /// Output files: `q.json`, or with `--orthogonal` `[q.json] k.json`.
    #[arg(short, long)]
    pub out: Vec<PathBuf>,
    #[arg(long)]
    pub orthogonal: bool,
}

#[derive(Debug, Args)]
pub struct BuildAnatArgs {
    pub model: PathBuf,
    pub mapping: PathBuf,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Overrides the landmarks recorded with the mapping.
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<String>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub model: PathBuf,
    /// `LABEL=VALUE`, repeatable.
    #[arg(long = "set", value_name = "LABEL=VALUE")]
    pub set: Vec<String>,
    /// Values are standardized instead of physical.
    #[arg(long)]
    pub std: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VariabilityArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub ablate: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub model: PathBuf,
    #[arg(long)]
    pub param: String,
    #[arg(long, default_value_t = 13)]
    pub steps: usize,
    /// Trajectory CSV; slopes go next to it as `<stem>.slopes.csv`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LooArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub landmarks: Option<PathBuf>,
    #[arg(long)]
    pub recipe: Option<String>,
    #[arg(short = 'M', long = "size")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV `shape_id,<labels...>` of true values; measured at the landmarks otherwise.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Also report the sequential OC-ANAT sub-model study.
    #[arg(long)]
    pub sequential: bool,
    /// Predict by fitting the generated shape instead of the forward map.
    #[arg(long)]
    pub shape_fit: bool,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Generate a fixture dataset from a family specification.
    Gen {
        spec: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the default family specification.
    Spec {
        #[arg(long, value_parser = parse_kind)]
        kind: FixtureKind,
        #[arg(short, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = crate::DEFAULT_SEED)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(required = true)]
    pub models: Vec<PathBuf>,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Largest accepted |beta_std| on generation.
    #[arg(long)]
    pub max_beta_std: Option<f64>,
}

fn parse_kind(s: &str) -> Result<FixtureKind, String> {
    match s {
        "femur" => Ok(FixtureKind::Femur),
        "scapula" => Ok(FixtureKind::Scapula),
        other => Err(format!("unknown fixture kind `{other}`")),
    }
}

/// Values that override settings in [`ProjectConfig`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub max_beta_std: Option<f64>,
    pub align_tol: Option<f64>,
}

/// `--config project.json`. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub dataset: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub recipe: Option<String>,
    pub population_size: Option<usize>,
    pub seed: Option<u64>,
    pub rank: Option<usize>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> crate::Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ProjectConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset, &mut cfg.landmarks, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (what, p) in [("dataset", &self.dataset), ("landmarks", &self.landmarks)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::invalid(
                        format!("config {what}"),
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        if self.population_size == Some(0) {
            return Err(Error::invalid("config population_size", "must be at least 1"));
        }
        if let Some(t) = self.tolerances.max_beta_std {
            if !(t > 0.0) {
                return Err(Error::invalid("config max_beta_std", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Logging through `ASSM_LOG` (default `warn`).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("ASSM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

struct Ctx {
    cfg: ProjectConfig,
}

impl Ctx {
    fn dataset(&self, arg: Option<PathBuf>) -> std::result::Result<PathBuf, Failure> {
        arg.or_else(|| self.cfg.dataset.clone())
            .ok_or_else(|| usage("missing dataset (argument or config `dataset`)"))
    }

    fn landmark_file(&self, arg: Option<PathBuf>) -> std::result::Result<LandmarkFile, Failure> {
        let path = arg
            .or_else(|| self.cfg.landmarks.clone())
            .ok_or_else(|| usage("missing --landmarks (or config `landmarks`)"))?;
        Ok(LandmarkFile::load(path)?)
    }

    fn recipe(&self, arg: Option<String>, fallback: &RecipeRef) -> std::result::Result<MeasurementRecipe, Failure> {
        match arg.or_else(|| self.cfg.recipe.clone()) {
            Some(r) => Ok(resolve_recipe(&r)?),
            None => Ok(fallback.resolve()?),
        }
    }

    fn m(&self, arg: Option<usize>) -> std::result::Result<usize, Failure> {
        let m = arg
            .or(self.cfg.population_size)
            .ok_or_else(|| usage("missing -M (or config `population_size`)"))?;
        if m == 0 {
            return Err(usage("-M must be at least 1"));
        }
        Ok(m)
    }

    fn seed(&self, arg: Option<u64>) -> u64 {
        arg.or(self.cfg.seed).unwrap_or(crate::DEFAULT_SEED)
    }

    /// Explicit path, else `output_dir/<default>`.
    fn output(&self, arg: Option<PathBuf>, default: &str) -> Option<PathBuf> {
        arg.or_else(|| self.cfg.output_dir.as_ref().map(|d| d.join(default)))
    }

    fn required_output(&self, arg: Option<PathBuf>, default: &str) -> std::result::Result<PathBuf, Failure> {
        self.output(arg, default)
            .ok_or_else(|| usage("missing -o (or config `output_dir`)"))
    }
}

/// Built-in recipe name or a recipe JSON file.
fn resolve_recipe(arg: &str) -> crate::Result<MeasurementRecipe> {
    match arg {
        "femur" | "scapula" => MeasurementRecipe::builtin(arg),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let recipe: MeasurementRecipe = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
            recipe.validate()?;
            Ok(recipe)
        }
    }
}

fn write_text(path: &Path, text: &str) -> crate::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes to `path` or prints to stdout.
fn emit(path: Option<&Path>, text: &str) -> crate::Result<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run(cli: Cli) -> Outcome {
    let cfg = match &cli.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    let ctx = Ctx { cfg };
    match cli.command {
        Command::BuildBase(a) => build_base_cmd(&ctx, a),
        Command::Metrics(a) => metrics_cmd(&ctx, a),
        Command::Measure(a) => measure_cmd(&ctx, a),
        Command::GenPop(a) => gen_pop_cmd(&ctx, a),
        Command::Stats(a) => stats_cmd(a),
        Command::Learn(a) => learn_cmd(a),
        Command::BuildAnat(a) => build_anat_cmd(&ctx, a),
        Command::Sample(a) => sample_cmd(a),
        Command::Variability(a) => variability_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Loo(a) => loo_cmd(&ctx, a),
        Command::Fixtures(c) => fixtures_cmd(c),
        Command::Serve(a) => serve_cmd(&ctx, a),
    }
}

fn build_base_cmd(ctx: &Ctx, a: BuildBaseArgs) -> Outcome {
    let dir = ctx.dataset(a.dataset)?;
    let out = ctx.required_output(a.out, "model.json")?;
    let mut dataset = obj::load_dataset(&dir)?;
    if a.align {
        let mut opts = AlignOptions::default();
        if let Some(t) = ctx.cfg.tolerances.align_tol {
            opts.tol = t;
        }
        let al = rigid_align(&dataset, opts)?;
        log::info!("aligned in {} iterations (converged: {})", al.iterations, al.converged);
        dataset = al.dataset;
    }
    let mut model = build_base(&dataset)?;
    if let Some(r) = a.rank.or(ctx.cfg.rank) {
        model = model.truncated(r);
    }
    log::info!("base model: {} shapes, rank {}", dataset.len(), model.rank());
    model.save(&out)?;
    Ok(())
}

fn metrics_cmd(ctx: &Ctx, a: MetricsArgs) -> Outcome {
    let model = BaseSsm::load(&a.model)?;
    let dataset = obj::load_dataset(ctx.dataset(a.dataset)?)?;
    if a.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    let curves = metric_curves(&model, &dataset, a.samples, ctx.seed(a.seed))?;
    emit(a.out.as_deref(), &curves.to_csv())?;
    Ok(())
}

fn measure_cmd(ctx: &Ctx, a: MeasureArgs) -> Outcome {
    let input = ctx.dataset(a.input)?;
    let lm_file = ctx.landmark_file(a.landmarks)?;
    let recipe = ctx.recipe(a.recipe, &lm_file.recipe)?;
    let lm = lm_file.landmark_set();
    lm.require(&recipe.landmarks)?;
    let meshes = if input.is_dir() {
        let ds = obj::load_dataset(&input)?;
        (0..ds.len()).map(|i| (ds.names()[i].clone(), ds.mesh(i))).collect::<Vec<_>>()
    } else {
        let name = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        vec![(name, obj::read_mesh(&input, &lm.topology_id)?)]
    };
    let rows = meshes
        .into_iter()
        .map(|(name, mesh)| {
            if mesh.topology_id() != lm.topology_id {
                return Err(Error::TopologyMismatch {
                    expected: lm.topology_id.clone(),
                    got: mesh.topology_id().to_string(),
                });
            }
            let pts = lm.locate(&mesh)?;
            let mv = measure(&recipe, &pts).map_err(|e| match e {
                Error::Degenerate(msg) => Error::Degenerate(format!("{msg} (shape `{name}`)")),
                other => other,
            })?;
            Ok((name, mv))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let text = if a.json {
        measurements_to_json(&rows)
    } else {
        measurements_to_csv(&rows)
    };
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn gen_pop_cmd(ctx: &Ctx, a: GenPopArgs) -> Outcome {
    let model = BaseSsm::load(&a.model)?;
    let lm_file = ctx.landmark_file(a.landmarks)?;
    let recipe = ctx.recipe(a.recipe, &lm_file.recipe)?;
    let m = ctx.m(a.m)?;
    let out = ctx.required_output(a.out, "population.csv")?;
    let opts = PopulationOptions {
        zero_alpha: a.zero_alpha,
    };
    let pop = generate_population_with(&model, &recipe, &lm_file.landmark_set(), m, ctx.seed(a.seed), opts)?;
    if pop.rejected > 0 {
        log::warn!("{} draw(s) rejected as unmeasurable", pop.rejected);
    }
    pop.save(&out)?;
    Ok(())
}

fn stats_cmd(a: StatsArgs) -> Outcome {
    let pop = SyntheticPopulation::load(&a.population)?;
    let normality = normality_report(&pop)?;
    let mut fits = String::from("label,unit,mean,std\n");
    let mut hist = String::from("label,bin,lower,upper,count\n");
    for (j, label) in pop.labels.iter().enumerate() {
        let col: Vec<f64> = pop.betas_raw.column(j).iter().copied().collect();
        let fit = normal_fit(&col)?;
        let _ = writeln!(fits, "{label},{},{:.16e},{:.16e}", pop.stats[j].unit.as_str(), fit.mean, fit.std);
        let h = histogram(&col, a.bins)?;
        for (b, c) in h.counts.iter().enumerate() {
            let _ = writeln!(hist, "{label},{b},{:.16e},{:.16e},{c}", h.edges[b], h.edges[b + 1]);
        }
    }
    match a.out {
        Some(dir) => {
            let corr = pearson_reports(&pop)?;
            write_text(&dir.join("normal_fit.csv"), &fits)?;
            write_text(&dir.join("histograms.csv"), &hist)?;
            write_text(&dir.join("shapiro_wilk.csv"), &normality.to_csv())?;
            write_text(&dir.join("beta_beta.csv"), &corr.beta_beta_csv())?;
            write_text(&dir.join("alpha_beta.csv"), &corr.alpha_beta_csv())?;
        }
        None => {
            print!("{fits}");
            print!("{}", normality.to_csv());
        }
    }
    Ok(())
}

fn learn_cmd(a: LearnArgs) -> Outcome {
    let (q_out, k_out) = match (a.orthogonal, a.out.as_slice()) {
        (false, [q]) => (Some(q.clone()), None),
        (true, [k]) => (None, Some(k.clone())),
        (true, [q, k]) => (Some(q.clone()), Some(k.clone())),
        (false, _) => return Err(usage("learn takes exactly one -o without --orthogonal")),
        (true, _) => return Err(usage("learn --orthogonal takes -o k.json or -o q.json -o k.json")),
    };
    let pop = SyntheticPopulation::load(&a.population)?;
    let q = fit_mapping(&pop)?;
    if !q.rank_ok {
        log::warn!("Q is not of full row rank");
    }
    let corr = pearson_reports(&pop)?;
    let attach = |mut f: MappingFile, diff| {
        f.corr_diff = Some(diff);
        f.recipe = pop.recipe.clone();
        f.landmarks = pop.landmarks.clone();
        f
    };
    let q_diff = mapping_vs_corr(&q.matrix, &corr)?;
    println!(
        "Q: mean |Q - corr(beta, alpha)| = {:.6}, mean |QQ^T - corr(beta, beta)| = {:.6}",
        q_diff.weights, q_diff.covariance
    );
    if let Some(path) = q_out {
        attach(MappingFile::from_q(&q, pop.stats_map()), q_diff).save(path)?;
    }
    if let Some(path) = k_out {
        let k = orthogonal_procrustes(&q)?;
        let k_diff = mapping_vs_corr(&k.matrix, &corr)?;
        println!(
            "K: mean |K - corr(beta, alpha)| = {:.6}, mean |KK^T - corr(beta, beta)| = {:.6}",
            k_diff.weights, k_diff.covariance
        );
        attach(MappingFile::from_k(&k, pop.stats_map()), k_diff).save(path)?;
    }
    Ok(())
}

fn build_anat_cmd(ctx: &Ctx, a: BuildAnatArgs) -> Outcome {
    let base = BaseSsm::load(&a.model)?;
    let file = MappingFile::load(&a.mapping)?;
    let out = ctx.required_output(a.out, "anat.json")?;
    let model = match file.kind {
        MappingKind::Q => build_anat(base, &file.to_q()?, &file.stats)?,
        MappingKind::K => build_oc_anat(base, &file.to_k()?, &file.stats)?,
    };
    let landmarks: Option<LandmarkSet> = match a.landmarks {
        Some(p) => Some(LandmarkFile::load(p)?.landmark_set()),
        None => file.landmarks.clone(),
    };
    let recipe = match a.recipe {
        Some(r) => Some(resolve_recipe(&r)?),
        None => file.recipe.clone(),
    };
    let model = match (recipe, landmarks) {
        (Some(r), Some(l)) => model.with_measurement(r, l)?,
        _ => {
            log::warn!("no recipe/landmarks recorded; the model cannot re-measure shapes");
            model
        }
    };
    model.save(&out)?;
    Ok(())
}

fn parse_assignments(items: &[String]) -> std::result::Result<BTreeMap<String, f64>, Failure> {
    let mut out = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects LABEL=VALUE, got `{item}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("--set {k}: `{v}` is not a number")))?;
        if !v.is_finite() {
            return Err(usage(format!("--set {k}: value must be finite")));
        }
        if out.insert(k.trim().to_string(), v).is_some() {
            return Err(usage(format!("--set {k} given twice")));
        }
    }
    Ok(out)
}

fn sample_cmd(a: SampleArgs) -> Outcome {
    let model = AnatModel::load(&a.model)?;
    let out = a.out.ok_or_else(|| usage("missing -o mesh.obj"))?;
    let values = parse_assignments(&a.set)?;
    let params = if a.std {
        for k in values.keys() {
            model.label_index(k)?;
        }
        let stats = model.stats_map();
        values
            .iter()
            .map(|(k, z)| (k.clone(), stats[k].physical(*z)))
            .collect()
    } else {
        values
    };
    let (shape, beta) = model.generate_from_params(&params)?;
    let mesh = crate::shape::devectorize(&shape, model.base().topology())?;
    obj::write_mesh(&out, &mesh)?;
    let measured = match (model.recipe(), model.landmarks()) {
        (Some(r), Some(l)) => match l.locate_in(&shape).and_then(|p| measure(r, &p)) {
            Ok(mv) => Some(mv),
            Err(e) => {
                log::warn!("generated shape not measurable: {e}");
                None
            }
        },
        _ => None,
    };
    let mut text = String::from("label,requested,beta_std,measured\n");
    let physical = model.physical(&beta);
    for (j, label) in model.labels().iter().enumerate() {
        let m = measured
            .as_ref()
            .and_then(|mv| mv.get(label))
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_default();
        let _ = writeln!(text, "{label},{:.16e},{:.16e},{m}", physical[j], beta[j]);
    }
    print!("{text}");
    Ok(())
}

fn variability_cmd(a: VariabilityArgs) -> Outcome {
    let model = AnatModel::load(&a.model)?;
    let text = if a.ablate {
        let mut text = String::from("step,removed,label,kappa,fraction\n");
        for (i, step) in model.ablation()?.iter().enumerate() {
            for e in &step.variability.entries {
                let _ = writeln!(
                    text,
                    "{i},{},{},{:.16e},{:.16e}",
                    step.removed.as_deref().unwrap_or(""),
                    e.label,
                    e.kappa,
                    e.fraction
                );
            }
        }
        text
    } else {
        model.variability().to_csv()
    };
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Outcome {
    let model = AnatModel::load(&a.model)?;
    let result = sweep(&model, &a.param, a.steps)?;
    match a.out {
        Some(p) => {
            write_text(&p, &result.trajectories_csv())?;
            write_text(&sidecar(&p, ".slopes.csv"), &result.slopes_csv())?;
        }
        None => {
            print!("{}", result.trajectories_csv());
            print!("{}", result.slopes_csv());
        }
    }
    Ok(())
}

/// Reads `shape_id,<labels...>` rows and orders them like `names`.
fn load_ground_truth(path: &Path, names: &[String], labels: &[String]) -> crate::Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: origin.clone(),
        line,
        reason,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let col_of = labels
        .iter()
        .map(|l| {
            cols.iter()
                .position(|c| c == l)
                .ok_or_else(|| parse_err(1, format!("missing column `{l}`")))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(i + 1, format!("expected {} fields, got {}", cols.len(), fields.len())));
        }
        let values = col_of
            .iter()
            .map(|&c| {
                fields[c]
                    .parse::<f64>()
                    .map_err(|_| parse_err(i + 1, format!("`{}` is not a number", fields[c])))
            })
            .collect::<crate::Result<Vec<_>>>()?;
        rows.insert(fields[0].to_string(), values);
    }
    let mut t = DMatrix::zeros(names.len(), labels.len());
    for (i, name) in names.iter().enumerate() {
        let row = rows
            .get(name)
            .ok_or_else(|| Error::invalid("ground truth", format!("no row for shape `{name}`")))?;
        for (j, v) in row.iter().enumerate() {
            t[(i, j)] = *v;
        }
    }
    Ok(t)
}

fn loo_cmd(ctx: &Ctx, a: LooArgs) -> Outcome {
    let dataset = obj::load_dataset(ctx.dataset(a.dataset)?)?;
    let lm_file = ctx.landmark_file(a.landmarks)?;
    let recipe = ctx.recipe(a.recipe, &lm_file.recipe)?;
    let mut opts = LooOptions::new(ctx.m(a.m)?, ctx.seed(a.seed));
    opts.sequential = a.sequential;
    if a.shape_fit {
        opts.mode = PredictionMode::ShapeFit;
    }
    if let Some(p) = a.ground_truth {
        opts.ground_truth = Some(load_ground_truth(&p, dataset.names(), &recipe.labels())?);
    }
    let report = loo_evaluate_with(&dataset, &recipe, &lm_file.landmark_set(), &opts)?;
    emit(ctx.output(a.out, "loo.csv").as_deref(), &report.to_csv())?;
    if let Some(p) = a.json {
        write_text(&p, &report.to_json())?;
    }
    Ok(())
}

fn fixtures_cmd(c: FixturesCommand) -> Outcome {
    match c {
        FixturesCommand::Gen { spec, out } => {
            let out = out.ok_or_else(|| usage("missing -o dir/"))?;
            let spec = FixtureFamilySpec::load(&spec)?;
            let family = sample_family(&spec)?;
            if family.rejected > 0 {
                log::info!("{} parameter draw(s) redrawn", family.rejected);
            }
            family.save(&out)?;
        }
        FixturesCommand::Spec { kind, n, seed, out } => {
            let spec = FixtureFamilySpec::default_for(kind, n, seed);
            let text = serde_json::to_string_pretty(&spec).map_err(|e| Error::json("fixture spec", e))?;
            emit(out.as_deref(), &(text + "\n"))?;
        }
    }
    Ok(())
}

fn serve_cmd(ctx: &Ctx, a: ServeArgs) -> Outcome {
    let max = a
        .max_beta_std
        .or(ctx.cfg.tolerances.max_beta_std)
        .unwrap_or(DEFAULT_MAX_BETA_STD);
    let registry = Registry::load(&a.models, max)?;
    eprintln!("models: {}", registry.ids().join(", "));
    crate::service::serve_blocking(Arc::new(registry), SocketAddr::new(a.host, a.port))?;
    Ok(())
}
