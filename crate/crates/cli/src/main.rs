//! `distseg` — post-processing and evaluation for distributional instance
//! segmentation.
//!
//! Subcommands cover the full pipeline: turn sampled hypotheses into
//! p-confidence masks (`confmask`), Union-NMS predictions (`union-nms`) or
//! the point estimate (`mode`); evaluate predictions (`eval`, `calibrate`,
//! `picksim`); and generate synthetic oracle scenes (`synth`,
//! `verify-guarantee`). Every seeded command is bit-reproducible: the same
//! flags produce byte-identical output files.
//!
//! Exit codes: 0 success, 1 validation failure (invalid parameters or data
//! that fails its invariants), 2 I/O or schema errors (and clap usage
//! errors).

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use distseg::confidence::{extract, ConfidenceError, ConfidenceParams};
use distseg::io::{
    self, group_predictions, load_ground_truth, load_predictions, load_samples, IoError,
    Prediction,
};
use distseg::metrics::{
    average_precision, average_recall, high_precision_grid, iop_exceedance, mr_at_hp,
    pr_curve, roc_auc, standard_thresholds, EvalInput, MetricsError, OverlapKind,
};
use distseg::model::{validate, GroundTruthImage, Instance, SampleSet};
use distseg::nms::{union_nms, NmsError, NmsParams};
use distseg::picksim::{
    estimate_double_pick, pickable_area_fraction, PickSimConfig, PickSimError,
};
use distseg::report::{svg_line_chart, EvalReport, ExceedanceRow, PrCurveSection};
use distseg::synth::{
    containment_probability_f64, generate_scene, sample_hypotheses, SceneSpec, SynthError,
};

/// Decorrelates hypothesis sampling from scene generation under one seed.
const SAMPLE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Parser)]
#[command(name = "distseg", version, about = "Distributional instance-segmentation toolkit")]
struct Cli {
    /// 0 = errors only, 1 = progress, 2 = detail
    #[arg(long, global = true, default_value_t = 1)]
    verbosity: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract p-confidence masks from sampled hypotheses
    Confmask {
        /// Sample-set JSON
        #[arg(long)]
        samples: PathBuf,
        /// Confidence requirement in (0, 1]
        #[arg(long)]
        p: f64,
        /// Stop once the best candidate scores at or below this
        #[arg(long, default_value_t = ConfidenceParams::DEFAULT_SCORE_FLOOR)]
        score_floor: f64,
        /// Cap on masks emitted per image
        #[arg(long)]
        max_outputs: Option<usize>,
        /// Output predictions JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// High-recall Union-NMS over all sampled hypotheses
    UnionNms {
        #[arg(long)]
        samples: PathBuf,
        /// IoU suppression threshold in (0, 1)
        #[arg(long, default_value_t = NmsParams::DEFAULT_TAU)]
        tau: f64,
        /// Suppress across categories instead of within
        #[arg(long)]
        class_agnostic: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the point-estimate (mode) hypothesis as predictions
    Mode {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate predictions against ground truth
    Eval {
        /// COCO-style ground-truth JSON
        #[arg(long)]
        gt: PathBuf,
        /// Predictions JSON
        #[arg(long)]
        pred: PathBuf,
        /// Which metric family to compute
        #[arg(long, value_enum, default_value_t = MetricChoice::All)]
        metric: MetricChoice,
        /// Precision grid for MR@HP (comma separated)
        #[arg(long, value_delimiter = ',')]
        p_grid: Vec<f64>,
        /// IoP threshold grid for MR@HP (comma separated)
        #[arg(long, value_delimiter = ',')]
        tau_grid: Vec<f64>,
        /// Report base path; writes <base>.json and <base>.csv
        #[arg(long)]
        report: PathBuf,
        /// Also write <base>_pr.svg with the PR curves
        #[arg(long)]
        svg: bool,
    },
    /// Monte-Carlo double-pick rate and pickable-area fraction
    Picksim {
        #[arg(long)]
        gt: PathBuf,
        /// Predictions JSON; repeat to compare several prediction sets
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// Gripper radius in pixels
        #[arg(long)]
        radius: u32,
        /// Probes per image
        #[arg(long)]
        probes: u64,
        #[arg(long)]
        seed: u64,
        /// Write the JSON result here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append-style CSV output (one row per prediction set)
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Rate-vs-pickable-area chart (needs two or more --pred)
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Generate synthetic oracle scenes with sampled hypotheses
    Synth {
        /// Scene spec JSON
        #[arg(long)]
        spec: PathBuf,
        /// Hypotheses to sample per scene
        #[arg(long)]
        k: usize,
        /// Base seed; scene i uses seed + i (defaults to the spec's seed)
        #[arg(long)]
        seed: Option<u64>,
        /// Number of scenes
        #[arg(long, default_value_t = 1)]
        scenes: u64,
        /// Directory for gt.json, samples.json, mixture.json
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score calibration: ROC-AUC and IoP exceedance
    Calibrate {
        #[arg(long)]
        gt: PathBuf,
        /// Predictions JSON; repeat for per-p buckets
        #[arg(long = "pred", required = true)]
        preds: Vec<PathBuf>,
        /// IoU cut defining a "good" mask for the ROC labels
        #[arg(long, default_value_t = 0.5)]
        iou_cut: f64,
        /// IoP exceedance cut
        #[arg(long, default_value_t = 0.95)]
        iop_cut: f64,
        /// Report base path; writes <base>.json and <base>.csv
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write <base>_exceedance.svg (needs two or more --pred)
        #[arg(long)]
        svg: bool,
    },
    /// Statistical check of the containment guarantee against the oracle
    VerifyGuarantee {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        p: f64,
        /// Number of scenes
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        /// Tolerated shortfall below p for the empirical fraction
        #[arg(long, default_value_t = 0.05)]
        slack: f64,
        #[arg(long, default_value_t = ConfidenceParams::DEFAULT_SCORE_FLOOR)]
        score_floor: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricChoice {
    Map,
    Ar,
    ArIog,
    Mrhp,
    All,
}

/// Failures sorted by exit code: validation (1) vs I/O and schema (2).
enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(msg) | CliError::Io(msg) => msg,
        }
    }
}

impl From<IoError> for CliError {
    fn from(err: IoError) -> Self {
        match err {
            // cross-file consistency is data validation, not file format
            IoError::Invalid(msg) => CliError::Validation(msg),
            other => CliError::Io(other.to_string()),
        }
    }
}

macro_rules! validation_from {
    ($($ty:ty),*) => {$(
        impl From<$ty> for CliError {
            fn from(err: $ty) -> Self {
                CliError::Validation(err.to_string())
            }
        }
    )*};
}
validation_from!(ConfidenceError, NmsError, MetricsError, PickSimError, SynthError);

fn main() {
    let cli = Cli::parse();
    let verbosity = cli.verbosity;
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            let _ = verbosity; // errors always print
            eprintln!("error: {}", err.message());
            std::process::exit(err.code());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let v = cli.verbosity;
    match cli.command {
        Command::Confmask {
            samples,
            p,
            score_floor,
            max_outputs,
            out,
        } => cmd_confmask(&samples, p, score_floor, max_outputs, &out, v),
        Command::UnionNms {
            samples,
            tau,
            class_agnostic,
            out,
        } => cmd_union_nms(&samples, tau, class_agnostic, &out, v),
        Command::Mode { samples, out } => cmd_mode(&samples, &out, v),
        Command::Eval {
            gt,
            pred,
            metric,
            p_grid,
            tau_grid,
            report,
            svg,
        } => cmd_eval(&gt, &pred, metric, &p_grid, &tau_grid, &report, svg, v),
        Command::Picksim {
            gt,
            preds,
            radius,
            probes,
            seed,
            out,
            csv,
            svg,
        } => cmd_picksim(&gt, &preds, radius, probes, seed, out.as_deref(), csv.as_deref(), svg.as_deref(), v),
        Command::Synth {
            spec,
            k,
            seed,
            scenes,
            out_dir,
        } => cmd_synth(&spec, k, seed, scenes, &out_dir, v),
        Command::Calibrate {
            gt,
            preds,
            iou_cut,
            iop_cut,
            report,
            svg,
        } => cmd_calibrate(&gt, &preds, iou_cut, iop_cut, report.as_deref(), svg, v),
        Command::VerifyGuarantee {
            spec,
            k,
            p,
            trials,
            seed,
            slack,
            score_floor,
        } => cmd_verify_guarantee(&spec, k, p, trials, seed, slack, score_floor, v),
    }
}

fn load_valid_samples(path: &Path) -> Result<Vec<SampleSet>, CliError> {
    let sets = load_samples(path)?;
    for (i, set) in sets.iter().enumerate() {
        let violations = validate(set);
        if !violations.is_empty() {
            let detail: Vec<String> = violations.iter().map(|x| x.to_string()).collect();
            return Err(CliError::Validation(format!(
                "record {i} (image {}): {}",
                set.image_id,
                detail.join("; ")
            )));
        }
    }
    Ok(sets)
}

fn cmd_confmask(
    samples: &Path,
    p: f64,
    score_floor: f64,
    max_outputs: Option<usize>,
    out: &Path,
    v: u8,
) -> Result<(), CliError> {
    let sets = load_valid_samples(samples)?;
    let params = ConfidenceParams {
        p,
        score_floor,
        max_outputs,
    };
    let mut predictions = Vec::new();
    for set in &sets {
        let masks = extract(set, &params)?;
        if v >= 2 {
            eprintln!("image {}: {} confidence masks", set.image_id, masks.len());
        }
        for mask in masks {
            predictions.push(Prediction {
                image_id: set.image_id,
                instance: Instance::new(mask.mask, mask.category, mask.score),
                p: Some(p),
            });
        }
    }
    io::save_predictions(out, &predictions)?;
    if v >= 1 {
        eprintln!(
            "confmask: {} masks over {} images -> {}",
            predictions.len(),
            sets.len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_union_nms(
    samples: &Path,
    tau: f64,
    class_agnostic: bool,
    out: &Path,
    v: u8,
) -> Result<(), CliError> {
    let sets = load_valid_samples(samples)?;
    let params = NmsParams {
        tau,
        class_aware: !class_agnostic,
    };
    let mut predictions = Vec::new();
    for set in &sets {
        for instance in union_nms(set, &params)? {
            predictions.push(Prediction {
                image_id: set.image_id,
                instance,
                p: None,
            });
        }
    }
    io::save_predictions(out, &predictions)?;
    if v >= 1 {
        eprintln!(
            "union-nms: {} instances over {} images -> {}",
            predictions.len(),
            sets.len(),
            out.display()
        );
    }
    Ok(())
}

fn cmd_mode(samples: &Path, out: &Path, v: u8) -> Result<(), CliError> {
    let sets = load_valid_samples(samples)?;
    let mut predictions = Vec::new();
    for set in &sets {
        let Some(mode) = &set.mode else {
            return Err(CliError::Validation(format!(
                "image {} has no mode hypothesis",
                set.image_id
            )));
        };
        for instance in &mode.instances {
            predictions.push(Prediction {
                image_id: set.image_id,
                instance: instance.clone(),
                p: None,
            });
        }
    }
    io::save_predictions(out, &predictions)?;
    if v >= 1 {
        eprintln!(
            "mode: {} instances over {} images -> {}",
            predictions.len(),
            sets.len(),
            out.display()
        );
    }
    Ok(())
}

/// Strip a .json/.csv extension so `--report r.json` and `--report r` agree.
fn report_base(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("csv") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn write_report(base: &Path, report: &EvalReport, svg: bool, v: u8) -> Result<(), CliError> {
    let write = |path: PathBuf, content: String| -> Result<(), CliError> {
        std::fs::write(&path, content).map_err(|source| {
            CliError::Io(format!("{}: {source}", path.display()))
        })?;
        if v >= 1 {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    };
    write(base.with_extension("json"), report.to_json())?;
    write(base.with_extension("csv"), report.to_csv())?;
    if svg {
        if let Some(chart) = report.pr_curves_svg() {
            let mut name = base.file_name().unwrap_or_default().to_os_string();
            name.push("_pr.svg");
            write(base.with_file_name(name), chart)?;
        }
    }
    Ok(())
}

struct PairedDataset {
    images: Vec<GroundTruthImage>,
    grouped: Vec<Vec<Instance>>,
}

impl PairedDataset {
    fn load(gt: &Path, pred: &Path) -> Result<Self, CliError> {
        let loaded = load_ground_truth(gt)?;
        for warning in &loaded.warnings {
            eprintln!("warning: {warning}");
        }
        let predictions = load_predictions(pred)?;
        let grouped = group_predictions(&predictions, &loaded.images)?;
        Ok(PairedDataset {
            images: loaded.images,
            grouped,
        })
    }

    fn eval_inputs(&self) -> Vec<EvalInput<'_>> {
        self.images
            .iter()
            .zip(&self.grouped)
            .map(|(image, preds)| EvalInput {
                predictions: preds,
                ground_truths: &image.instances,
            })
            .collect()
    }

    fn gt_classes(&self) -> BTreeSet<u32> {
        self.images
            .iter()
            .flat_map(|image| image.instances.iter().map(|inst| inst.category))
            .collect()
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    gt: &Path,
    pred: &Path,
    metric: MetricChoice,
    p_grid: &[f64],
    tau_grid: &[f64],
    report_path: &Path,
    svg: bool,
    v: u8,
) -> Result<(), CliError> {
    let dataset = PairedDataset::load(gt, pred)?;
    let inputs = dataset.eval_inputs();
    let mut report = EvalReport::default();

    if matches!(metric, MetricChoice::Map | MetricChoice::All) {
        let ap = average_precision(&inputs, OverlapKind::Iou, &standard_thresholds())?;
        report.map = Some(ap.map);
        report.per_class_ap = ap.per_class;
        report.excluded_classes = ap.excluded_classes;
        for &class in &dataset.gt_classes() {
            report.pr_curves.push(PrCurveSection {
                class,
                overlap_threshold: 0.5,
                points: pr_curve(&inputs, class, OverlapKind::Iou, 0.5)?,
            });
        }
    }
    if matches!(metric, MetricChoice::Ar | MetricChoice::All) {
        report.ar_iou = Some(average_recall(&inputs, OverlapKind::Iou)?);
    }
    if matches!(metric, MetricChoice::ArIog | MetricChoice::All) {
        report.ar_iog = Some(average_recall(&inputs, OverlapKind::Iog)?);
    }
    if matches!(metric, MetricChoice::Mrhp | MetricChoice::All) {
        let p_grid = if p_grid.is_empty() {
            high_precision_grid()
        } else {
            p_grid.to_vec()
        };
        let tau_grid = if tau_grid.is_empty() {
            high_precision_grid()
        } else {
            tau_grid.to_vec()
        };
        report.mr_at_hp = Some(mr_at_hp(&inputs, &p_grid, &tau_grid)?);
    }

    if v >= 1 {
        let show = |name: &str, value: Option<f64>| {
            if let Some(value) = value {
                eprintln!("{name}: {value:.4}");
            }
        };
        show("mAP", report.map);
        show("AR (IoU)", report.ar_iou);
        show("AR (IoG)", report.ar_iog);
        show("MR@HP", report.mr_at_hp);
    }
    write_report(&report_base(report_path), &report, svg, v)
}

#[allow(clippy::too_many_arguments)]
fn cmd_picksim(
    gt: &Path,
    preds: &[PathBuf],
    radius: u32,
    probes: u64,
    seed: u64,
    out: Option<&Path>,
    csv: Option<&Path>,
    svg: Option<&Path>,
    v: u8,
) -> Result<(), CliError> {
    let loaded = load_ground_truth(gt)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let mut rows = Vec::new();
    for pred_path in preds {
        let predictions = load_predictions(pred_path)?;
        let grouped = group_predictions(&predictions, &loaded.images)?;
        let mut double = 0u64;
        let mut valid = 0u64;
        for (i, (image, image_preds)) in loaded.images.iter().zip(&grouped).enumerate() {
            let config = PickSimConfig {
                radius,
                n_probes: probes,
                seed: seed.wrapping_add(i as u64),
            };
            let result = estimate_double_pick(
                image_preds,
                &image.instances,
                image.width,
                image.height,
                &config,
            )?;
            double += result.double_picks;
            valid += result.valid_probes;
        }
        let rate = (valid > 0).then(|| double as f64 / valid as f64);
        let std_err = rate.map(|r| (r * (1.0 - r) / valid as f64).sqrt());
        let all_preds: Vec<Instance> = grouped.concat();
        let all_gts: Vec<Instance> = loaded
            .images
            .iter()
            .flat_map(|image| image.instances.iter().cloned())
            .collect();
        let pickable = pickable_area_fraction(&all_preds, &all_gts).ok();
        rows.push(json!({
            "pred": pred_path.display().to_string(),
            "rate": rate,
            "D": double,
            "N": valid,
            "stderr": std_err,
            "pickable_area": pickable,
        }));
        if v >= 1 {
            eprintln!(
                "picksim {}: rate {} (D={double}, N={valid})",
                pred_path.display(),
                rate.map_or("undefined".into(), |r| format!("{r:.5}")),
            );
        }
    }

    let payload = if rows.len() == 1 {
        rows[0].clone()
    } else {
        serde_json::Value::Array(rows.clone())
    };
    let mut text = serde_json::to_string_pretty(&payload).expect("serializable");
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => print!("{text}"),
    }

    if let Some(path) = csv {
        let mut content = String::from("pred,rate,D,N,stderr,pickable_area\n");
        for row in &rows {
            let field = |key: &str| -> String {
                match &row[key] {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                }
            };
            content.push_str(&format!(
                "{},{},{},{},{},{}\n",
                field("pred"),
                field("rate"),
                field("D"),
                field("N"),
                field("stderr"),
                field("pickable_area"),
            ));
        }
        std::fs::write(path, content)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }

    if let Some(path) = svg {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|row| {
                Some((row["pickable_area"].as_f64()?, row["rate"].as_f64()?))
            })
            .collect();
        let chart = svg_line_chart(
            "double-pick rate vs pickable area",
            "pickable area fraction",
            "double-pick rate",
            &[("predictions".to_string(), points)],
            None,
        );
        std::fs::write(path, chart)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn cmd_synth(
    spec_path: &Path,
    k: usize,
    seed: Option<u64>,
    scenes: u64,
    out_dir: &Path,
    v: u8,
) -> Result<(), CliError> {
    let spec: SceneSpec = {
        let data = std::fs::read(spec_path)
            .map_err(|e| CliError::Io(format!("{}: {e}", spec_path.display())))?;
        serde_json::from_slice(&data)
            .map_err(|e| CliError::Io(format!("{}: invalid JSON: {e}", spec_path.display())))?
    };
    let base_seed = seed.unwrap_or(spec.seed);
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;

    let mut gt_images = Vec::new();
    let mut sample_sets = Vec::new();
    let mut mixtures = Vec::new();
    for i in 0..scenes {
        let scene_seed = base_seed.wrapping_add(i);
        let scene = generate_scene(&spec, scene_seed)?;
        let set = sample_hypotheses(&scene, k, scene_seed ^ SAMPLE_SEED_SALT)?;
        gt_images.push(scene.realized_ground_truth().clone());
        sample_sets.push(set);
        mixtures.push(scene);
    }
    let categories: BTreeMap<u32, String> = (1..=spec.categories)
        .map(|id| (id, format!("synthetic-{id}")))
        .collect();
    io::save_ground_truth(&out_dir.join("gt.json"), &gt_images, &categories)?;
    io::save_samples(&out_dir.join("samples.json"), &sample_sets)?;
    io::save_mixtures(&out_dir.join("mixture.json"), &mixtures)?;
    if v >= 1 {
        eprintln!(
            "synth: {scenes} scenes, k={k}, seeds {base_seed}..{} -> {}",
            base_seed.wrapping_add(scenes.saturating_sub(1)),
            out_dir.display()
        );
    }
    Ok(())
}

fn cmd_calibrate(
    gt: &Path,
    preds: &[PathBuf],
    iou_cut: f64,
    iop_cut: f64,
    report_path: Option<&Path>,
    svg: bool,
    v: u8,
) -> Result<(), CliError> {
    let loaded = load_ground_truth(gt)?;
    for warning in &loaded.warnings {
        eprintln!("warning: {warning}");
    }
    let mut report = EvalReport::default();
    for pred_path in preds {
        let predictions = load_predictions(pred_path)?;
        let grouped = group_predictions(&predictions, &loaded.images)?;
        let inputs: Vec<EvalInput> = loaded
            .images
            .iter()
            .zip(&grouped)
            .map(|(image, preds)| EvalInput {
                predictions: preds,
                ground_truths: &image.instances,
            })
            .collect();

        // score predicts whether the best-IoU ground truth clears the cut
        let mut labels = Vec::new();
        for input in &inputs {
            for pred in input.predictions {
                let mut best = 0.0f64;
                for gt_inst in input.ground_truths {
                    best = best.max(pred.mask.iou(&gt_inst.mask).map_err(MetricsError::from)?);
                }
                labels.push((pred.score, best >= iou_cut));
            }
        }
        let auc = match roc_auc(&labels) {
            Ok(auc) => Some(auc),
            Err(MetricsError::SingleClass) => {
                eprintln!(
                    "warning: {}: all labels identical at IoU cut {iou_cut}; AUC undefined",
                    pred_path.display()
                );
                None
            }
            Err(other) => return Err(other.into()),
        };
        if preds.len() == 1 {
            report.calibration_auc = auc;
        }

        let stats = iop_exceedance(&inputs, iop_cut)?;
        // tag the bucket with the file's uniform p, when there is one
        let ps: BTreeSet<u64> = predictions
            .iter()
            .filter_map(|p| p.p.map(f64::to_bits))
            .collect();
        let p = (ps.len() == 1 && predictions.iter().all(|p| p.p.is_some()))
            .then(|| f64::from_bits(*ps.iter().next().unwrap()));
        report.iop_exceedance.push(ExceedanceRow {
            p,
            iop_cut,
            n_predictions: stats.n_predictions,
            fraction: stats.fraction,
        });
        if v >= 1 {
            eprintln!(
                "calibrate {}: auc {} exceedance {}",
                pred_path.display(),
                auc.map_or("undefined".into(), |a| format!("{a:.4}")),
                stats
                    .fraction
                    .map_or("absent".into(), |f| format!("{f:.4}")),
            );
        }
    }

    match report_path {
        Some(path) => {
            let base = report_base(path);
            write_report(&base, &report, false, v)?;
            if svg {
                let points: Vec<(f64, f64)> = report
                    .iop_exceedance
                    .iter()
                    .filter_map(|row| Some((row.p?, row.fraction?)))
                    .collect();
                if points.len() >= 2 {
                    let chart = svg_line_chart(
                        "IoP exceedance vs confidence requirement",
                        "p",
                        &format!("fraction with IoP > {iop_cut}"),
                        &[("confidence masks".to_string(), points)],
                        None,
                    );
                    let mut name = base.file_name().unwrap_or_default().to_os_string();
                    name.push("_exceedance.svg");
                    let path = base.with_file_name(name);
                    std::fs::write(&path, chart)
                        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                }
            }
        }
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify_guarantee(
    spec_path: &Path,
    k: usize,
    p: f64,
    trials: u64,
    seed: u64,
    slack: f64,
    score_floor: f64,
    v: u8,
) -> Result<(), CliError> {
    let spec: SceneSpec = {
        let data = std::fs::read(spec_path)
            .map_err(|e| CliError::Io(format!("{}: {e}", spec_path.display())))?;
        serde_json::from_slice(&data)
            .map_err(|e| CliError::Io(format!("{}: invalid JSON: {e}", spec_path.display())))?
    };
    let params = ConfidenceParams {
        p,
        score_floor,
        max_outputs: None,
    };

    let mut total_masks = 0u64;
    let mut contained = 0u64;
    let mut structural_violations = 0u64;
    let mut exact_sum = 0.0f64;
    for i in 0..trials {
        let scene_seed = seed.wrapping_add(i);
        let scene = generate_scene(&spec, scene_seed)?;
        let set = sample_hypotheses(&scene, k, scene_seed ^ SAMPLE_SEED_SALT)?;
        let masks = extract(&set, &params)?;
        let required = distseg::confidence::required_support(k, p);
        let realized = scene.realized_ground_truth();
        for mask in &masks {
            total_masks += 1;
            // structural: enough distinct supporting samples, each containing
            let samples: BTreeSet<usize> = mask.support.iter().map(|&(g, _)| g).collect();
            let mut ok = samples.len() == mask.support.len() && mask.support.len() >= required;
            for &(g, j) in &mask.support {
                ok &= set.samples[g].instances[j]
                    .mask
                    .contains(&mask.mask)
                    .unwrap_or(false);
            }
            if !ok {
                structural_violations += 1;
            }
            if realized
                .instances
                .iter()
                .any(|inst| inst.mask.contains(&mask.mask).unwrap_or(false))
            {
                contained += 1;
            }
            exact_sum += containment_probability_f64(&scene, &mask.mask)?;
        }
        if v >= 2 && (i + 1) % 50 == 0 {
            eprintln!("verify-guarantee: {} / {trials} scenes", i + 1);
        }
    }

    let fraction = (total_masks > 0).then(|| contained as f64 / total_masks as f64);
    let mean_exact = (total_masks > 0).then(|| exact_sum / total_masks as f64);
    let bound = p - slack;
    let pass =
        structural_violations == 0 && total_masks > 0 && fraction.is_some_and(|f| f >= bound);
    let payload = json!({
        "p": p,
        "k": k,
        "trials": trials,
        "masks": total_masks,
        "realized_containment_fraction": fraction,
        "mean_exact_containment_probability": mean_exact,
        "structural_violations": structural_violations,
        "bound": bound,
        "pass": pass,
    });
    let mut text = serde_json::to_string_pretty(&payload).expect("serializable");
    text.push('\n');
    print!("{text}");
    if pass {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "containment guarantee check failed: fraction {:?} below bound {bound} or {} structural violations",
            fraction, structural_violations
        )))
    }
}
