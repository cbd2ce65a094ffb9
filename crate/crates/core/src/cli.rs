//! Command-line front end. Every subcommand writes its tables plus
//! `run_manifest.json` into `--out-dir`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ablation::{apply_ablation, resolution_ladder, AblationMode, RasterImage, DEFAULT_LADDER};
use crate::baseline::{AdjustedOptions, AdjustedRow, BaselineFeature, BaselineModel};
use crate::cohort::{
    derive_cohort, ingest_cohort, read_annotations, write_cohort, Cohort, CohortFiles, DatasetId, DerivedTable,
};
use crate::error::{Error, Result};
use crate::eval::{
    adjusted_for_set, build_eval_set, compare_set, ensemble_scores, fit_baseline, ppv_analysis, subgroup_analysis,
    temporal_sensitivity, BaselineConfig, Bucket, EnsembleTable, EvalConfig, EvalResult, EvalSet, PpvRow,
    SensitivityRow, SubgroupRow,
};
use crate::report::{self, sha256_file, sha256_hex, Format, RunManifest, SkipRecord, Table};
use crate::rng::derive_seed;
use crate::roc::{roc_curve, BootstrapConfig};
use crate::synth::{self, SynthConfig};
use crate::targets::{TargetRegistry, TargetSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;

pub const LOG_ENV: &str = "EYELAB_LOG";

#[derive(Debug, Parser)]
#[command(name = "eyelab", version, about = "Lab and vital prediction study toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `primary`, `all`, or a comma-separated list of target names.
    #[arg(long)]
    pub targets: Option<String>,
    /// Restrict evaluation to one dataset (e.g. ValA).
    #[arg(long = "dataset-slice")]
    pub dataset_slice: Option<String>,
    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,
    /// `csv` or `md`.
    #[arg(long)]
    pub format: Option<String>,
    /// Bootstrap replicates.
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Descending day windows, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding patients.csv, visits.csv, measurements.csv, scores.csv.
    #[arg(long)]
    pub input: PathBuf,
    /// Directory of fitted baseline models; fitted on the fly when absent.
    #[arg(long)]
    pub baselines: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize the tabular inputs.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Matched labs, derived analytes and labels.
    Derive {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit per-target baseline models on the training slice.
    FitBaseline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// DLS against baseline AUC comparison.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// PPV among the top fraction with bootstrap intervals.
    Ppv {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fraction: Option<f64>,
    },
    /// Per-bucket comparison by age, sex, race, years with diabetes and more.
    Subgroup {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Re-evaluation under tighter lab/photo date windows.
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Adjusted odds ratios for the DLS score.
    Adjust {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Apply region masks or grayscale to a directory of PNGs.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
    },
    /// Downsample then upsample PNGs to the model input size.
    Downres {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        images: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<u32>>,
    },
    /// Generate a synthetic cohort.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long = "n-patients")]
        n_patients: Option<usize>,
    },
    /// Run every analysis and write a Markdown/CSV bundle.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        fraction: Option<f64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Derive { .. } => "derive",
            Command::FitBaseline { .. } => "fit-baseline",
            Command::Evaluate { .. } => "evaluate",
            Command::Ppv { .. } => "ppv",
            Command::Subgroup { .. } => "subgroup",
            Command::Sensitivity { .. } => "sensitivity",
            Command::Adjust { .. } => "adjust",
            Command::Ablate { .. } => "ablate",
            Command::Downres { .. } => "downres",
            Command::Synth { .. } => "synth",
            Command::Report { .. } => "report",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Ingest { common, .. }
            | Command::Derive { common, .. }
            | Command::FitBaseline { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Ppv { common, .. }
            | Command::Subgroup { common, .. }
            | Command::Sensitivity { common, .. }
            | Command::Adjust { common, .. }
            | Command::Ablate { common, .. }
            | Command::Downres { common, .. }
            | Command::Synth { common, .. }
            | Command::Report { common, .. } => common,
        }
    }
}

/// Contents of `--config`. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub targets: Option<String>,
    pub dataset_slice: Option<String>,
    pub train_slice: Option<String>,
    pub format: Option<String>,
    pub replicates: Option<usize>,
    pub windows: Option<Vec<i64>>,
    pub ppv_fraction: Option<f64>,
    /// `standard` or `augmented`.
    pub features: Option<String>,
    pub availability: Option<f64>,
    pub level: Option<f64>,
    pub alpha: Option<f64>,
    /// Target override file.
    pub registry: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

/// Effective settings after merging defaults, config and flags.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub targets: String,
    pub dataset_slice: Option<String>,
    pub train_slice: String,
    pub format: String,
    pub replicates: usize,
    pub windows: Vec<i64>,
    pub ppv_fraction: f64,
    pub features: String,
    pub availability: f64,
    pub level: f64,
    pub alpha: f64,
    pub registry: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parses `argv` (program name first) and runs it; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::InsufficientCases { .. } | Error::DegenerateLabels { .. } => EXIT_INSUFFICIENT,
                _ => EXIT_DATA,
            }
        }
    }
}

fn load_config(common: &Common) -> CliResult<(RunConfig, Option<String>)> {
    let Some(path) = &common.config else {
        return Ok((RunConfig::default(), None));
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RunConfig =
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, Some(sha256_hex(text.as_bytes()))))
}

fn settings(common: &Common, cfg: &RunConfig) -> CliResult<Settings> {
    let s = Settings {
        seed: common.seed.or(cfg.seed).unwrap_or(0),
        targets: common.targets.clone().or_else(|| cfg.targets.clone()).unwrap_or_else(|| "primary".into()),
        dataset_slice: common.dataset_slice.clone().or_else(|| cfg.dataset_slice.clone()),
        train_slice: cfg.train_slice.clone().unwrap_or_else(|| DatasetId::DevTrain.as_str().to_string()),
        format: common.format.clone().or_else(|| cfg.format.clone()).unwrap_or_else(|| "csv".into()),
        replicates: common.replicates.or(cfg.replicates).unwrap_or(1000),
        windows: common.windows.clone().or_else(|| cfg.windows.clone()).unwrap_or_else(|| vec![180, 90, 30]),
        ppv_fraction: cfg.ppv_fraction.unwrap_or(0.05),
        features: cfg.features.clone().unwrap_or_else(|| "standard".into()),
        availability: cfg.availability.unwrap_or(0.85),
        level: cfg.level.unwrap_or(0.95),
        alpha: cfg.alpha.unwrap_or(0.05),
        registry: cfg.registry.clone(),
    };
    s.format.parse::<Format>().map_err(|e| usage(e.to_string()))?;
    if !matches!(s.features.as_str(), "standard" | "augmented") {
        return Err(usage(format!("unknown feature set `{}` (standard, augmented)", s.features)));
    }
    if s.replicates < crate::roc::MIN_REPLICATES {
        return Err(usage(format!("--replicates must be at least {}", crate::roc::MIN_REPLICATES)));
    }
    if s.windows.is_empty() || s.windows.windows(2).any(|w| w[1] >= w[0]) {
        return Err(usage("--windows must be strictly descending"));
    }
    Ok(s)
}

/// Output sink that records digests for the manifest.
struct Run {
    dir: PathBuf,
    format: Format,
    manifest: RunManifest,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        let mut d = sha256_file(path)?;
        d.path = relative(&self.dir, path);
        self.manifest.outputs.push(d);
        Ok(())
    }

    fn footer(&self) -> String {
        format!(
            "\n_Generated by `eyelab {}` (version {}, seed {}, rng {}); provenance in `{}`._\n",
            self.manifest.command,
            self.manifest.tool_version,
            self.manifest.seed,
            self.manifest.rng,
            report::MANIFEST_FILE
        )
    }

    /// Writes `stem.csv` or `stem.md` according to `--format`.
    fn table(&mut self, stem: &str, csv: &Table, md: &Table) -> Result<()> {
        match self.format {
            Format::Csv => self.csv(&format!("{stem}.csv"), csv),
            Format::Markdown => {
                let text = md.to_markdown() + &self.footer();
                self.text(&format!("{stem}.md"), &text)
            }
        }
    }

    fn csv(&mut self, name: &str, t: &Table) -> Result<()> {
        let text = t.to_csv()?;
        self.text(name, &text)
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.record(&path)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        self.manifest.write(&self.dir)
    }
}

fn relative(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn dispatch(cmd: &Command) -> CliResult<i32> {
    let common = cmd.common();
    let (cfg, config_hash) = load_config(common)?;
    let s = settings(common, &cfg)?;
    std::fs::create_dir_all(&common.out_dir).map_err(|e| Error::io(&common.out_dir, e))?;
    let mut manifest = RunManifest::new(cmd.name(), std::env::args().skip(1).collect(), s.seed);
    manifest.config_sha256 = config_hash;
    manifest.settings = serde_json::to_value(&s).map_err(Error::from)?;
    let mut run = Run { dir: common.out_dir.clone(), format: s.format.parse().map_err(Failure::Data)?, manifest };

    let code = match cmd {
        Command::Synth { n_patients, .. } => cmd_synth(&mut run, &s, &cfg, *n_patients)?,
        Command::Ingest { input, .. } => cmd_ingest(&mut run, input)?,
        Command::Derive { input, .. } => cmd_derive(&mut run, &s, input)?,
        Command::FitBaseline { data, .. } => cmd_fit_baseline(&mut run, &s, data)?,
        Command::Evaluate { data, .. } => cmd_analysis(&mut run, &s, data, &[Analysis::Evaluate])?,
        Command::Ppv { data, fraction, .. } => {
            let s = Settings { ppv_fraction: fraction.unwrap_or(s.ppv_fraction), ..s.clone() };
            cmd_analysis(&mut run, &s, data, &[Analysis::Ppv])?
        }
        Command::Subgroup { data, .. } => cmd_analysis(&mut run, &s, data, &[Analysis::Subgroup])?,
        Command::Sensitivity { data, .. } => cmd_analysis(&mut run, &s, data, &[Analysis::Sensitivity])?,
        Command::Adjust { data, .. } => cmd_analysis(&mut run, &s, data, &[Analysis::Adjust])?,
        Command::Report { data, fraction, .. } => {
            let s = Settings { ppv_fraction: fraction.unwrap_or(s.ppv_fraction), ..s.clone() };
            cmd_analysis(&mut run, &s, data, &Analysis::ALL)?
        }
        Command::Ablate { images, annotations, modes, .. } => {
            cmd_ablate(&mut run, images, annotations.as_deref(), modes.as_deref())?
        }
        Command::Downres { images, sizes, .. } => cmd_downres(&mut run, images, sizes.as_deref())?,
    };
    run.finish()?;
    Ok(code)
}

fn registry(s: &Settings) -> CliResult<TargetRegistry> {
    Ok(match &s.registry {
        Some(p) => TargetRegistry::with_overrides(p)?,
        None => TargetRegistry::default(),
    })
}

fn select<'a>(reg: &'a TargetRegistry, s: &Settings) -> CliResult<Vec<&'a TargetSpec>> {
    reg.select(&s.targets).map_err(|e| usage(e.to_string()))
}

fn parse_slice(s: &str) -> CliResult<DatasetId> {
    s.parse().map_err(|e: Error| usage(e.to_string()))
}

fn cmd_synth(run: &mut Run, s: &Settings, cfg: &RunConfig, n: Option<usize>) -> CliResult<i32> {
    let mut sc = cfg.synth.clone().unwrap_or_default();
    sc.seed = s.seed;
    if let Some(n) = n {
        sc.n_patients = n;
    }
    sc.validate().map_err(|e| usage(e.to_string()))?;
    let out = synth::generate_with(&sc, &registry(s)?)?;
    for p in synth::write_output(&out, &run.dir)? {
        run.record(&p)?;
    }
    log::info!("synthesized {} patients, {} visits", out.manifest.n_patients, out.manifest.n_visits);
    Ok(EXIT_OK)
}

fn load_cohort(run: &mut Run, input: &Path) -> CliResult<Cohort> {
    let files = CohortFiles::in_dir(input);
    for p in files.all_paths() {
        if !p.exists() {
            return Err(Failure::Data(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound))));
        }
        run.manifest.inputs.push(sha256_file(p)?);
    }
    Ok(ingest_cohort(&files)?)
}

fn cmd_ingest(run: &mut Run, input: &Path) -> CliResult<i32> {
    let cohort = load_cohort(run, input)?;
    for p in write_cohort(&cohort, &run.dir)? {
        run.record(&p)?;
    }
    let mut t = Table::new(&["table", "rows"]);
    t.push(vec!["patients".into(), cohort.n_patients().to_string()]);
    t.push(vec!["visits".into(), cohort.n_visits().to_string()]);
    t.push(vec!["measurements".into(), cohort.n_measurements().to_string()]);
    t.push(vec!["scores".into(), cohort.scores().len().to_string()]);
    run.table("ingest_summary", &t, &t)?;
    Ok(EXIT_OK)
}

fn cmd_derive(run: &mut Run, s: &Settings, input: &Path) -> CliResult<i32> {
    let cohort = load_cohort(run, input)?;
    let reg = registry(s)?;
    let specs = select(&reg, s)?;
    let derived = derive_cohort(&cohort);
    run.csv("derived.csv", &report::derived_table(&derived))?;
    run.csv("labels.csv", &report::labels_table(&derived, &specs)?)?;
    let ex = report::exclusions_table(&derived);
    run.table("exclusions", &ex, &ex)?;
    Ok(EXIT_OK)
}

pub const BASELINE_DIR: &str = "baselines";
pub const BASELINE_SUMMARY_HEADER: &[&str] =
    &["target", "file", "n_train", "n_positive", "features", "converged", "iterations"];

fn baseline_file(target: &str) -> String {
    let safe: String = target
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' => c,
            '.' => 'p',
            '<' => 'l',
            '>' => 'g',
            '=' => 'e',
            _ => '_',
        })
        .collect();
    format!("{safe}.json")
}

fn baseline_config(s: &Settings) -> CliResult<BaselineConfig> {
    let candidates = match s.features.as_str() {
        "augmented" => BaselineFeature::AUGMENTED.to_vec(),
        _ => BaselineFeature::STANDARD.to_vec(),
    };
    Ok(BaselineConfig {
        candidates,
        availability: s.availability,
        train_slice: parse_slice(&s.train_slice)?,
        availability_slice: s.dataset_slice.as_deref().map(parse_slice).transpose()?,
        seed: derive_seed(s.seed, "baseline"),
        ..Default::default()
    })
}

/// Fits baselines in parallel; failures become skip records.
fn fit_all(
    cohort: &Cohort,
    derived: &DerivedTable,
    specs: &[&TargetSpec],
    bcfg: &BaselineConfig,
) -> (BTreeMap<String, BaselineModel>, Vec<SkipRecord>) {
    let fitted: Vec<_> = specs.par_iter().map(|spec| (spec.name.clone(), fit_baseline(cohort, derived, spec, bcfg))).collect();
    let mut models = BTreeMap::new();
    let mut skips = Vec::new();
    for (name, r) in fitted {
        match r {
            Ok(m) => {
                models.insert(name, m);
            }
            Err(e) => skips.push(SkipRecord::from_error(&name, &e)),
        }
    }
    (models, skips)
}

fn cmd_fit_baseline(run: &mut Run, s: &Settings, data: &DataArgs) -> CliResult<i32> {
    let cohort = load_cohort(run, &data.input)?;
    let reg = registry(s)?;
    let specs = select(&reg, s)?;
    let derived = derive_cohort(&cohort);
    let (models, skips) = fit_all(&cohort, &derived, &specs, &baseline_config(s)?);
    let mut t = Table::new(BASELINE_SUMMARY_HEADER);
    for spec in &specs {
        let Some(m) = models.get(&spec.name) else { continue };
        let file = format!("{BASELINE_DIR}/{}", baseline_file(&spec.name));
        let path = run.path(&file);
        std::fs::create_dir_all(path.parent().expect("has parent")).map_err(|e| Error::io(&path, e))?;
        m.save_json(&path)?;
        run.record(&path)?;
        t.push(vec![
            spec.name.clone(),
            file,
            m.metadata.n_train.to_string(),
            m.metadata.n_positive.to_string(),
            m.features.iter().map(|f| f.name()).collect::<Vec<_>>().join(";"),
            m.model.converged.to_string(),
            m.model.iterations.to_string(),
        ]);
    }
    run.csv("baselines.csv", &t)?;
    finish_skips(run, &skips)
}

fn load_baselines(run: &mut Run, dir: &Path) -> CliResult<BTreeMap<String, BaselineModel>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let m = BaselineModel::load_json(&p)?;
        run.manifest.inputs.push(sha256_file(&p)?);
        out.insert(m.metadata.target.clone(), m);
    }
    Ok(out)
}

/// Writes `skipped.csv` when needed and picks the exit code.
fn finish_skips(run: &mut Run, skips: &[SkipRecord]) -> CliResult<i32> {
    if skips.is_empty() {
        return Ok(EXIT_OK);
    }
    run.csv("skipped.csv", &report::skip_table(skips))?;
    for s in skips {
        eprintln!("skipped {}: {}", s.target, s.reason);
    }
    let insufficient = |s: &SkipRecord| s.positives.is_some();
    Ok(if skips.iter().all(insufficient) { EXIT_INSUFFICIENT } else { EXIT_DATA })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Analysis {
    Evaluate,
    Ppv,
    Subgroup,
    Sensitivity,
    Adjust,
}

impl Analysis {
    const ALL: [Analysis; 5] =
        [Analysis::Evaluate, Analysis::Ppv, Analysis::Subgroup, Analysis::Sensitivity, Analysis::Adjust];
}

#[derive(Default)]
struct Outputs {
    eval: Vec<EvalResult>,
    roc: Vec<(String, String, Vec<crate::roc::RocPoint>)>,
    ppv: Vec<PpvRow>,
    subgroup: Vec<SubgroupRow>,
    sensitivity: Vec<SensitivityRow>,
    adjusted: Vec<(String, usize, Vec<AdjustedRow>)>,
}

struct TargetOutput {
    eval: Option<(EvalResult, Vec<(String, String, Vec<crate::roc::RocPoint>)>)>,
    ppv: Option<PpvRow>,
    subgroup: Vec<SubgroupRow>,
    sensitivity: Vec<SensitivityRow>,
    adjusted: Option<(String, usize, Vec<AdjustedRow>)>,
}

struct Study<'a> {
    cohort: &'a Cohort,
    derived: &'a DerivedTable,
    ensembled: &'a EnsembleTable,
    eval: EvalConfig,
    bootstrap: BootstrapConfig,
    fraction: f64,
    windows: &'a [i64],
}

impl Study<'_> {
    fn target(&self, spec: &TargetSpec, baseline: &BaselineModel, which: &[Analysis]) -> Result<TargetOutput> {
        let set: EvalSet = build_eval_set(self.cohort, self.derived, spec, self.ensembled, Some(baseline), &self.eval)?;
        let result = compare_set(&set, spec, &self.eval)?;
        let mut out = TargetOutput { eval: None, ppv: None, subgroup: Vec::new(), sensitivity: Vec::new(), adjusted: None };
        for a in which {
            match a {
                Analysis::Evaluate => {
                    let curves = vec![
                        (spec.name.clone(), "baseline".to_string(), roc_curve(&set.baseline_samples()?)?),
                        (spec.name.clone(), "dls".to_string(), roc_curve(&set.dls_samples())?),
                    ];
                    out.eval = Some((result.clone(), curves));
                }
                Analysis::Ppv => out.ppv = Some(ppv_analysis(&set, self.fraction, &self.bootstrap)?),
                Analysis::Subgroup => {
                    out.subgroup =
                        subgroup_analysis(self.cohort, self.derived, spec, &set, &Bucket::builtin_all(), &self.eval)?
                }
                Analysis::Sensitivity => {
                    out.sensitivity = temporal_sensitivity(
                        self.cohort,
                        self.derived,
                        spec,
                        self.ensembled,
                        baseline,
                        self.windows,
                        &self.eval,
                    )?
                }
                Analysis::Adjust => {
                    let (n, rows) = adjusted_for_set(self.cohort, &set, &AdjustedOptions::default())?;
                    out.adjusted = Some((spec.name.clone(), n, rows));
                }
            }
        }
        Ok(out)
    }
}

fn cmd_analysis(run: &mut Run, s: &Settings, data: &DataArgs, which: &[Analysis]) -> CliResult<i32> {
    let cohort = load_cohort(run, &data.input)?;
    let reg = registry(s)?;
    let specs = select(&reg, s)?;
    let derived = derive_cohort(&cohort);
    let ensembled = ensemble_scores(cohort.scores())?;
    let (baselines, mut skips) = match &data.baselines {
        Some(dir) => (load_baselines(run, dir)?, Vec::new()),
        None => fit_all(&cohort, &derived, &specs, &baseline_config(s)?),
    };
    let study = Study {
        cohort: &cohort,
        derived: &derived,
        ensembled: &ensembled,
        eval: EvalConfig {
            seed: s.seed,
            level: s.level,
            alpha: s.alpha,
            slice: s.dataset_slice.as_deref().map(parse_slice).transpose()?,
            ..Default::default()
        },
        bootstrap: BootstrapConfig { replicates: s.replicates, seed: derive_seed(s.seed, "ppv"), level: s.level },
        fraction: s.ppv_fraction,
        windows: &s.windows,
    };
    let skipped: Vec<String> = skips.iter().map(|k| k.target.clone()).collect();
    let todo: Vec<&TargetSpec> = specs.iter().copied().filter(|t| !skipped.contains(&t.name)).collect();
    let results: Vec<(String, Result<TargetOutput>)> = todo
        .par_iter()
        .map(|spec| {
            let r = match baselines.get(&spec.name) {
                Some(b) => study.target(spec, b, which),
                None => Err(Error::invalid(format!("no baseline model for `{}`", spec.name))),
            };
            (spec.name.clone(), r)
        })
        .collect();

    let mut out = Outputs::default();
    for (name, r) in results {
        match r {
            Ok(t) => {
                if let Some((e, curves)) = t.eval {
                    out.eval.push(e);
                    out.roc.extend(curves);
                }
                out.ppv.extend(t.ppv);
                out.subgroup.extend(t.subgroup);
                out.sensitivity.extend(t.sensitivity);
                out.adjusted.extend(t.adjusted);
            }
            Err(e) => skips.push(SkipRecord::from_error(&name, &e)),
        }
    }
    let order: Vec<&str> = specs.iter().map(|t| t.name.as_str()).collect();
    skips.sort_by_key(|k| order.iter().position(|n| *n == k.target));

    let bundle = which.len() > 1;
    let mut md = String::new();
    for a in which {
        let (stem, title, csv, mdt) = match a {
            Analysis::Evaluate => {
                run.csv("roc.csv", &report::roc_table(&out.roc))?;
                ("evaluation", "Model versus baseline (AUC)", report::eval_table(&out.eval, Format::Csv), report::eval_table(&out.eval, Format::Markdown))
            }
            Analysis::Ppv => ("ppv", "Model versus baseline (PPV)", report::ppv_table(&out.ppv, Format::Csv), report::ppv_table(&out.ppv, Format::Markdown)),
            Analysis::Subgroup => ("subgroups", "Subgroup analysis", report::subgroup_table(&out.subgroup, Format::Csv), report::subgroup_table(&out.subgroup, Format::Markdown)),
            Analysis::Sensitivity => ("sensitivity", "Lab/vital date delta sensitivity", report::sensitivity_table(&out.sensitivity, Format::Csv), report::sensitivity_table(&out.sensitivity, Format::Markdown)),
            Analysis::Adjust => ("adjusted", "Adjusted odds ratios", report::adjusted_table(&out.adjusted, Format::Csv), report::adjusted_table(&out.adjusted, Format::Markdown)),
        };
        if bundle {
            run.csv(&format!("{stem}.csv"), &csv)?;
            md.push_str(&format!("## {title}\n\n{}\n", mdt.to_markdown()));
        } else {
            run.table(stem, &csv, &mdt)?;
        }
    }
    if bundle {
        if !skips.is_empty() {
            md.push_str(&format!("## Skipped targets\n\n{}\n", report::skip_table(&skips).to_markdown()));
        }
        let text = format!("# Study report\n\n{md}{}", run.footer());
        run.text("report.md", &text)?;
    }
    finish_skips(run, &skips)
}

fn list_pngs(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    v.sort();
    if v.is_empty() {
        return Err(Failure::Data(Error::invalid(format!("no PNG images in {}", dir.display()))));
    }
    Ok(v)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub const ABLATION_INDEX_HEADER: &[&str] = &["image_id", "mode", "output"];

fn cmd_ablate(run: &mut Run, images: &Path, annotations: Option<&Path>, modes: Option<&[String]>) -> CliResult<i32> {
    let modes: Vec<AblationMode> = match modes {
        Some(m) => m.iter().map(|s| s.parse()).collect::<Result<_>>().map_err(|e| usage(e.to_string()))?,
        None => AblationMode::ALL.to_vec(),
    };
    let default_ann = images.join(crate::cohort::ANNOTATIONS_FILE);
    let ann_path = annotations.map(Path::to_path_buf).or_else(|| default_ann.exists().then_some(default_ann));
    let ann = match &ann_path {
        Some(p) => {
            run.manifest.inputs.push(sha256_file(p)?);
            read_annotations(p)?
        }
        None => BTreeMap::new(),
    };
    let mut index = Table::new(ABLATION_INDEX_HEADER);
    for path in list_pngs(images)? {
        run.manifest.inputs.push(sha256_file(&path)?);
        let id = stem(&path);
        let img = RasterImage::load_png(&path)?;
        for &mode in &modes {
            let out = apply_ablation(&img, ann.get(&id), mode)
                .map_err(|e| Error::invalid(format!("{id}: {e}")))?;
            let rel = format!("{}/{id}.png", mode.as_str());
            let dest = run.path(&rel);
            std::fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| Error::io(&dest, e))?;
            out.save_png(&dest)?;
            run.record(&dest)?;
            index.push(vec![id.clone(), mode.as_str().to_string(), rel]);
        }
    }
    run.csv("ablation_index.csv", &index)?;
    Ok(EXIT_OK)
}

pub const DOWNRES_INDEX_HEADER: &[&str] = &["image_id", "size", "output"];

fn cmd_downres(run: &mut Run, images: &Path, sizes: Option<&[u32]>) -> CliResult<i32> {
    let sizes = sizes.map(<[u32]>::to_vec).unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    if sizes.contains(&0) {
        return Err(usage("--sizes must be positive"));
    }
    let mut index = Table::new(DOWNRES_INDEX_HEADER);
    for path in list_pngs(images)? {
        run.manifest.inputs.push(sha256_file(&path)?);
        let id = stem(&path);
        let img = RasterImage::load_png(&path)?;
        for &size in &sizes {
            let out = resolution_ladder(&img, size).map_err(|e| Error::invalid(format!("{id}: {e}")))?;
            let rel = format!("{size}/{id}.png");
            let dest = run.path(&rel);
            std::fs::create_dir_all(dest.parent().expect("has parent")).map_err(|e| Error::io(&dest, e))?;
            out.save_png(&dest)?;
            run.record(&dest)?;
            index.push(vec![id.clone(), size.to_string(), rel]);
        }
    }
    run.csv("downres_index.csv", &index)?;
    Ok(EXIT_OK)
}
