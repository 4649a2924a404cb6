use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gcosod::baseline::{predict_dataset, BaselineConfig};
use gcosod::builder::{
    build_common, build_zero, parse_ratio_ranges, primary_ratio_histogram, validate_zero_with_threshold,
    CommonBuildConfig, ZeroBuildConfig,
};
use gcosod::calibration::render_reliability;
use gcosod::metrics::{evaluate_dataset_with, CalibrationOptions, EMode, EvalReport, MetricConfig, SMode};
use gcosod::model::{load_manifest, save_manifest, DatasetManifest};
use gcosod::sampler::{sample_epoch, stream_to_string, RatioMode, SamplerConfig};
use gcosod::synth::{generate_synthetic_dataset, SynthConfig};
use gcosod::uncertainty::{uncertainty_report, UncertaintyConfig, REVISED_DIR};
use gcosod::{Error, Result};
use serde::Serialize;

use crate::run::{self, RunConfig};
use crate::{
    BuildArgs, BuildMode, Cli, Command, EModeArg, EvalArgs, MetricArgs, PredictArgs, SModeArg, SampleArgs, SampleMode,
    SynthArgs, UncertaintyArgs,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build_global()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Build(a) => build(a),
        Command::Sample(a) => sample(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Uncertainty(a) => uncertainty(a),
    }
}

fn config<T: Serialize>(subcommand: &'static str, settings: T) -> RunConfig<T> {
    RunConfig {
        subcommand,
        tool_version: VERSION,
        settings,
    }
}

fn finish(dir: &Path) -> Result<ExitCode> {
    println!("{}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let cfg = SynthConfig {
        num_categories: a.categories,
        groups_per_category: a.groups_per_category,
        group_size: a.group_size,
        image_size: a.image_size,
        min_distractors: a.min_distractors,
        max_distractors: a.max_distractors,
        seed: a.seed,
    };
    cfg.validate()?;
    let dir = run::prepare(&a.out, &config("synth", &cfg))?;
    generate_synthetic_dataset(&cfg, &dir)?;
    finish(&dir)
}

#[derive(Serialize)]
struct BuildSettings<'a> {
    manifest: &'a Path,
    #[serde(skip_serializing_if = "Option::is_none")]
    common: Option<&'a CommonBuildConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zero: Option<&'a ZeroBuildConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlap_threshold: Option<f64>,
}

fn save_built(dir: &Path, built: &DatasetManifest) -> Result<()> {
    save_manifest(&built.rebased(dir)?, dir.join("manifest.json"))
}

fn build(a: BuildArgs) -> Result<ExitCode> {
    let exclusions: BTreeSet<String> = a.exclude.iter().filter(|s| !s.is_empty()).cloned().collect();
    match a.mode {
        BuildMode::Common => {
            let cfg = CommonBuildConfig {
                ratio_ranges: parse_ratio_ranges(&a.ratio_ranges)?,
                variants_per_category: a.variants,
                seed: a.seed,
                exclusions,
            };
            cfg.validate()?;
            let settings = BuildSettings {
                manifest: &a.manifest,
                common: Some(&cfg),
                zero: None,
                overlap_threshold: None,
            };
            let dir = run::prepare(&a.out, &config("build-common", settings))?;
            let source = load_manifest(&a.manifest)?;
            let (built, stats) = build_common(&source, &cfg)?;
            save_built(&dir, &built)?;
            run::write_json(&dir.join("build_stats.json"), &stats)?;
            run::write_json(
                &dir.join("ratio_histogram.json"),
                &primary_ratio_histogram(&built, &cfg.ratio_ranges),
            )?;
            finish(&dir)
        }
        BuildMode::Zero => {
            let cfg = ZeroBuildConfig {
                num_groups: a.num_groups,
                min_group_size: a.min_group_size,
                max_group_size: a.max_group_size,
                seed: a.seed,
                exclusions,
            };
            cfg.validate()?;
            if !(0.0..=1.0).contains(&a.threshold) {
                return Err(Error::Config(format!("overlap threshold must lie in [0, 1], got {}", a.threshold)));
            }
            let settings = BuildSettings {
                manifest: &a.manifest,
                common: None,
                zero: Some(&cfg),
                overlap_threshold: Some(a.threshold),
            };
            let dir = run::prepare(&a.out, &config("build-zero", settings))?;
            let source = load_manifest(&a.manifest)?;
            let (built, stats) = build_zero(&source, &cfg)?;
            save_built(&dir, &built)?;
            run::write_json(&dir.join("build_stats.json"), &stats)?;
            let violations = validate_zero_with_threshold(&built, &cfg.exclusions, a.threshold);
            run::write_json(&dir.join("violations.json"), &violations)?;
            finish(&dir)
        }
    }
}

#[derive(Serialize)]
struct SampleSettings<'a> {
    manifest: &'a Path,
    seed: u64,
    epochs: u64,
    full_replacement_mode: RatioMode,
}

fn sample(a: SampleArgs) -> Result<ExitCode> {
    if a.epochs == 0 {
        return Err(Error::Config("--epochs must be positive".into()));
    }
    let mode = match a.mode {
        SampleMode::FloorUniform => RatioMode::FloorUniform,
        SampleMode::IntegerUniform => RatioMode::IntegerUniform,
    };
    let settings = SampleSettings {
        manifest: &a.manifest,
        seed: a.seed,
        epochs: a.epochs,
        full_replacement_mode: mode,
    };
    let dir = run::prepare(&a.out, &config("sample", settings))?;
    let manifest = load_manifest(&a.manifest)?;
    for epoch in 0..a.epochs {
        let groups = sample_epoch(
            &manifest,
            &SamplerConfig {
                seed: a.seed,
                full_replacement_mode: mode,
                epoch,
            },
        )?;
        run::write_text(&dir.join(format!("epoch_{epoch:04}.jsonl")), &stream_to_string(&groups)?)?;
    }
    finish(&dir)
}

#[derive(Serialize)]
struct PredictSettings<'a> {
    manifest: &'a Path,
    baseline: BaselineConfig,
}

fn predict(a: PredictArgs) -> Result<ExitCode> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Config(format!("affinity threshold must lie in [0, 1], got {}", a.threshold)));
    }
    let cfg = BaselineConfig {
        affinity_threshold: a.threshold,
        smoothing_radius: a.smoothing_radius,
    };
    let dir = run::prepare(
        &a.out,
        &config(
            "predict",
            PredictSettings {
                manifest: &a.manifest,
                baseline: cfg,
            },
        ),
    )?;
    let manifest = load_manifest(&a.manifest)?;
    let summary = predict_dataset(&manifest, &dir, &cfg)?;
    run::write_json(&dir.join("prediction_summary.json"), &summary)?;
    finish(&dir)
}

fn metric_config(m: &MetricArgs) -> Result<MetricConfig> {
    let cfg = MetricConfig {
        binarize_threshold: m.threshold,
        thresholds: m.sweep,
        s_mode: match m.s_mode {
            SModeArg::Strict => SMode::Strict,
            SModeArg::Reference => SMode::Reference,
        },
        e_mode: match m.e_mode {
            EModeArg::XiMean => EMode::XiMean,
            EModeArg::Enhanced => EMode::Enhanced,
        },
        ..MetricConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct EvalSettings<'a> {
    manifest: &'a Path,
    predictions: &'a Path,
    metrics: MetricConfig,
    calibration: CalibrationOptions,
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    run::write_text(&dir.join(format!("{stem}.json")), &report.to_json()?)?;
    run::write_text(&dir.join(format!("{stem}_per_image.csv")), &report.per_image_csv())
}

fn incomplete(dir: &Path, report: &EvalReport) -> ExitCode {
    println!("{}", dir.display());
    eprintln!(
        "error: evaluation incomplete, {} image(s) could not be scored (first: {}/{}: {})",
        report.issues.len(),
        report.issues[0].group_id,
        report.issues[0].image_id,
        report.issues[0].message
    );
    ExitCode::from(3)
}

fn eval(a: EvalArgs) -> Result<ExitCode> {
    let metrics = metric_config(&a.metrics)?;
    if a.bins == 0 || a.stride == 0 {
        return Err(Error::Config("--bins and --stride must be positive".into()));
    }
    let calibration = CalibrationOptions {
        bins: a.bins,
        stride: a.stride,
    };
    let settings = EvalSettings {
        manifest: &a.manifest,
        predictions: &a.predictions,
        metrics,
        calibration,
    };
    let dir = run::prepare(&a.out, &config("eval", settings))?;
    let manifest = load_manifest(&a.manifest)?;
    let report = evaluate_dataset_with(&manifest, &a.predictions, &metrics, Some(calibration))?;
    write_report(&dir, "eval_report", &report)?;
    if let Some(d) = &report.calibration {
        render_reliability(d, &dir.join("reliability"))?;
    }
    if !report.complete {
        return Ok(incomplete(&dir, &report));
    }
    finish(&dir)
}

#[derive(Serialize)]
struct UncertaintySettings<'a> {
    manifest: &'a Path,
    predictions: &'a Path,
    uncertainty: UncertaintyConfig,
    metrics: MetricConfig,
}

#[derive(Serialize)]
struct Comparison {
    before: Option<gcosod::metrics::MetricSummary>,
    after: Option<gcosod::metrics::MetricSummary>,
}

fn uncertainty(a: UncertaintyArgs) -> Result<ExitCode> {
    let metrics = metric_config(&a.metrics)?;
    let cfg = UncertaintyConfig {
        epsilon: a.eps,
        clamp_negative: !a.no_clamp,
        full_binary_entropy: a.full_binary_entropy,
    };
    cfg.validate()?;
    let settings = UncertaintySettings {
        manifest: &a.manifest,
        predictions: &a.predictions,
        uncertainty: cfg,
        metrics,
    };
    let dir = run::prepare(&a.out, &config("uncertainty", settings))?;
    let manifest = load_manifest(&a.manifest)?;
    uncertainty_report(&manifest, &a.predictions, &cfg, &dir)?;
    let revised: PathBuf = dir.join(REVISED_DIR);
    let before = evaluate_dataset_with(&manifest, &a.predictions, &metrics, None)?;
    let after = evaluate_dataset_with(&manifest, &revised, &metrics, None)?;
    write_report(&dir, "eval_before", &before)?;
    write_report(&dir, "eval_after", &after)?;
    run::write_json(
        &dir.join("revision_comparison.json"),
        &Comparison {
            before: before.dataset.clone(),
            after: after.dataset.clone(),
        },
    )?;
    finish(&dir)
}
