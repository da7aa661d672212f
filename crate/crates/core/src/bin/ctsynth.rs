use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctsynth::config::RunConfig;
use ctsynth::frechet::{load_features, FeatureMatrix};
use ctsynth::imaging::{assign_layers, load_manifest, load_slice_file, ImageSet, IngestConfig, LayerOverrides};
use ctsynth::spectral::export_spectrum;
use ctsynth::stratified::{compute_baseline, evaluate_sets, export_report, layer_spectra, Baseline, FeaturePair};
use ctsynth::survey::http::{serve, AppState};
use ctsynth::survey::service::{load_pool, load_survey, save_survey};
use ctsynth::survey::{load_records, make_survey, survey_stats, SurveyStore};
use ctsynth::{Error, Result};

/// Evaluation of synthetic CT slice sets and blind reader surveys.
#[derive(Parser, Debug)]
#[command(name = "ctsynth", version)]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load manifests or single slice files and print a summary of each.
    IngestCheck(IngestCheckArgs),
    /// Real-vs-real baseline between a held-out part of a real set and the rest.
    Baseline(BaselineArgs),
    /// Layer-wise scores of a synthetic set against a real set.
    Eval(EvalArgs),
    /// Per-layer average log-magnitude spectra as 16-bit images.
    Spectra(SpectraArgs),
    /// Blind reader surveys.
    #[command(subcommand)]
    Survey(SurveyCommand),
}

#[derive(Args, Debug)]
struct IngestCheckArgs {
    /// Manifest (.json) or slice files (.dcm, .pgm, .png).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Layer overrides file applied to manifests.
    #[arg(long)]
    layers: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct MetricArgs {
    /// Intensity histogram bins.
    #[arg(long)]
    n_bins: Option<usize>,
    /// Tissue thresholds in HU as `low,high`.
    #[arg(long, value_parser = parse_pair)]
    thresholds: Option<(f64, f64)>,
    /// Intensity range in HU as `low,high` (default: the sets' range).
    #[arg(long, value_parser = parse_pair)]
    hu_range: Option<(f64, f64)>,
    /// Fewest slices per set for a layer to be scored.
    #[arg(long)]
    min_slices: Option<usize>,
    /// Layer overrides file applied to both sets.
    #[arg(long)]
    layers: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    /// Real set manifest.
    #[arg(long)]
    real: Option<PathBuf>,
    /// Held-out real manifest. Without it, volumes of --real are split.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Comma-separated volume ids of --real to hold out.
    #[arg(long, value_delimiter = ',', conflicts_with = "holdout")]
    holdout_volumes: Vec<String>,
    /// Feature file covering the real set.
    #[arg(long)]
    real_features: Option<PathBuf>,
    /// Feature file covering the held-out set (default: --real-features).
    #[arg(long)]
    holdout_features: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Output baseline file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    real: Option<PathBuf>,
    #[arg(long)]
    synth: Option<PathBuf>,
    /// Baseline file from `baseline`.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    real_features: Option<PathBuf>,
    #[arg(long)]
    synth_features: Option<PathBuf>,
    #[command(flatten)]
    metrics: MetricArgs,
    /// Output directory for report.json, scores.csv and charts.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpectraArgs {
    /// Set manifest.
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    layers: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum SurveyCommand {
    /// Sample a survey and write its definition and ground truth.
    Make(SurveyMakeArgs),
    /// Serve surveys over HTTP. Bearer token from SURVEY_TOKEN.
    Serve(SurveyServeArgs),
    /// Accuracy tables and Chi-squared tests from survey directories.
    Stats(SurveyStatsArgs),
}

#[derive(Args, Debug)]
struct SurveyMakeArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    synth: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_real: usize,
    #[arg(long, default_value_t = 10)]
    n_synth: usize,
    /// Root directory; the survey goes to `<out>/<survey_id>/`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SurveyServeArgs {
    /// Survey root directory.
    #[arg(long)]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
}

#[derive(Args, Debug)]
struct SurveyStatsArgs {
    /// Survey directories holding survey.json, truth.json and responses.jsonl.
    #[arg(required = true)]
    surveys: Vec<PathBuf>,
    /// Row labels, one per survey (default: survey ids).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Apply Yates' continuity correction to 2x2 tables.
    #[arg(long)]
    yates: bool,
    /// Write the JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `low,high`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: InvalidParameter: --threads must be at least 1");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::malformed(p, "config", e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::IngestCheck(a) => ingest_check(&a),
        Command::Baseline(a) => baseline(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Spectra(a) => spectra(&a),
        Command::Survey(SurveyCommand::Make(a)) => survey_make(&cfg, &a),
        Command::Survey(SurveyCommand::Serve(a)) => survey_serve(&a),
        Command::Survey(SurveyCommand::Stats(a)) => survey_stats_cmd(&a),
    }
}

fn apply_metrics(cfg: &mut RunConfig, m: &MetricArgs) {
    if let Some(n) = m.n_bins {
        cfg.n_bins = n;
    }
    if let Some(t) = m.thresholds {
        cfg.tissue_thresholds = t;
    }
    if m.hu_range.is_some() {
        cfg.hu_range = m.hu_range;
    }
    if let Some(n) = m.min_slices {
        cfg.min_slices = n;
    }
}

fn required(p: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    p.ok_or_else(|| Error::InvalidParameter(format!("{name} is required (flag or config)")))
}

fn load_layered(path: &Path, layers: Option<&LayerOverrides>) -> Result<ImageSet> {
    assign_layers(load_manifest(path)?, layers)
}

fn load_overrides(p: Option<&PathBuf>) -> Result<Option<LayerOverrides>> {
    p.map(LayerOverrides::load).transpose()
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ingest_check(a: &IngestCheckArgs) -> Result<()> {
    let overrides = load_overrides(a.layers.as_ref())?;
    let mut out = std::io::stdout().lock();
    for p in &a.inputs {
        if p.extension().is_some_and(|e| e == "json") {
            let set = load_layered(p, overrides.as_ref())?;
            let (lo, hi) = set.value_range()?;
            let counts: Vec<String> = ctsynth::imaging::LayerId::all()
                .map(|l| set.layer_members(l).len().to_string())
                .collect();
            let _ = writeln!(
                out,
                "{}: set {} ({}, {}), {} volumes, {} slices, range [{lo}, {hi}], per layer [{}]",
                p.display(),
                set.set_id,
                set.modality()?.as_str(),
                set.provenance.as_str(),
                set.volumes().len(),
                set.num_slices(),
                counts.join(" ")
            );
        } else {
            let s = load_slice_file(p, &IngestConfig::default())?;
            let (mn, mx) = s
                .values
                .iter()
                .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            let _ = writeln!(
                out,
                "{}: {} {}x{} {}, values [{mn}, {mx}]",
                p.display(),
                s.key(),
                s.rows(),
                s.cols(),
                s.modality.as_str()
            );
        }
    }
    Ok(())
}

fn baseline(mut cfg: RunConfig, a: BaselineArgs) -> Result<()> {
    apply_metrics(&mut cfg, &a.metrics);
    let real_path = required(a.real.or(cfg.real_manifest.clone()), "--real")?;
    let overrides = load_overrides(a.metrics.layers.as_ref())?;
    let real = load_layered(&real_path, overrides.as_ref())?;
    let (holdout, rest) = match &a.holdout {
        Some(h) => (load_layered(h, overrides.as_ref())?, real),
        None => {
            let ids: Vec<&str> = real.volumes().iter().map(|v| v.volume_id.as_str()).collect();
            let held: Vec<&str> = if a.holdout_volumes.is_empty() {
                if ids.len() < 2 {
                    return Err(Error::InvalidParameter("splitting needs at least two volumes".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut picks = index::sample(&mut rng, ids.len(), ids.len() / 2).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(|i| ids[i]).collect()
            } else {
                a.holdout_volumes.iter().map(String::as_str).collect()
            };
            let kept: Vec<&str> = ids.iter().copied().filter(|v| !held.contains(v)).collect();
            let h = real.select_volumes(format!("{}-holdout", real.set_id), &held)?;
            let r = real.select_volumes(format!("{}-rest", real.set_id), &kept)?;
            (h, r)
        }
    };
    let real_feats = a.real_features.or(cfg.real_features.clone()).map(load_features).transpose()?;
    let hold_feats = a.holdout_features.map(load_features).transpose()?;
    let pair = real_feats.as_ref().map(|r| FeaturePair {
        real: hold_feats.as_ref().unwrap_or(r),
        synth: r,
    });
    let b = compute_baseline(&holdout, &rest, pair, &cfg.eval_config())?;
    b.save(&a.out)
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    apply_metrics(&mut cfg, &a.metrics);
    let real_path = required(a.real.or(cfg.real_manifest.clone()), "--real")?;
    let synth_path = required(a.synth.or(cfg.synth_manifest.clone()), "--synth")?;
    let out = required(a.out.or(cfg.out_dir.clone()), "--out")?;
    let overrides = load_overrides(a.metrics.layers.as_ref())?;
    let real = load_layered(&real_path, overrides.as_ref())?;
    let synth = load_layered(&synth_path, overrides.as_ref())?;
    let baseline = a.baseline.map(Baseline::load).transpose()?;
    let feats: Option<(FeatureMatrix, FeatureMatrix)> =
        match (a.real_features.or(cfg.real_features.clone()), a.synth_features.or(cfg.synth_features.clone())) {
            (Some(r), Some(s)) => Some((load_features(r)?, load_features(s)?)),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidParameter(
                    "--real-features and --synth-features go together".into(),
                ))
            }
        };
    let pair = feats.as_ref().map(|(r, s)| FeaturePair { real: r, synth: s });
    let report = evaluate_sets(&real, &synth, baseline.as_ref(), pair, &cfg.eval_config())?;
    export_report(&report, &out)?;
    Ok(())
}

fn spectra(a: &SpectraArgs) -> Result<()> {
    let overrides = load_overrides(a.layers.as_ref())?;
    let set = load_layered(&a.set, overrides.as_ref())?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (layer, spec) in layer_spectra(&set)? {
        let path = a.out.join(format!("layer_{:02}.png", layer.get()));
        export_spectrum(&spec, &path, Some(&format!("{} layer {}", set.set_id, layer.get())))?;
    }
    Ok(())
}

fn survey_make(cfg: &RunConfig, a: &SurveyMakeArgs) -> Result<()> {
    let real_path = std::fs::canonicalize(&a.real).map_err(|e| Error::io(&a.real, e))?;
    let synth_path = std::fs::canonicalize(&a.synth).map_err(|e| Error::io(&a.synth, e))?;
    let real = load_pool(&real_path)?;
    let synth = load_pool(&synth_path)?;
    let mut def = make_survey(&real, &synth, a.n_real, a.n_synth, cfg.seed)?;
    def.real_manifest = Some(real_path);
    def.synth_manifest = Some(synth_path);
    let dir = save_survey(&def, &a.out)?;
    println!("{} {}", def.survey_id, dir.display());
    Ok(())
}

fn survey_serve(a: &SurveyServeArgs) -> Result<()> {
    std::fs::create_dir_all(&a.root).map_err(|e| Error::io(&a.root, e))?;
    let store = SurveyStore::open(&a.root)?;
    let token = std::env::var("SURVEY_TOKEN").ok().filter(|t| !t.is_empty());
    let state = AppState {
        store: Arc::new(store),
        token: token.map(Arc::from),
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    eprintln!("serving {} on http://{}", a.root.display(), a.addr);
    rt.block_on(serve(state, a.addr)).map_err(|e| Error::io(a.addr.to_string(), e))
}

fn survey_stats_cmd(a: &SurveyStatsArgs) -> Result<()> {
    if !a.labels.is_empty() && a.labels.len() != a.surveys.len() {
        return Err(Error::InvalidParameter(format!(
            "{} labels for {} surveys",
            a.labels.len(),
            a.surveys.len()
        )));
    }
    let mut surveys = Vec::new();
    for (i, dir) in a.surveys.iter().enumerate() {
        let def = load_survey(dir)?;
        let records = load_records(dir.join("responses.jsonl"), dir.join("truth.json"))?;
        let label = a.labels.get(i).cloned().unwrap_or(def.survey_id);
        surveys.push((label, records));
    }
    let report = survey_stats(&surveys, a.yates)?;
    match &a.out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", report.to_json());
            Ok(())
        }
    }
}
