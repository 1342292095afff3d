use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use stacklight_core::classify::SoftmaxModel;
use stacklight_core::detect::SpotlightDetector;
use stacklight_core::eval::{evaluate_classifier, evaluate_detection, ClassifierReport, DetectionMetrics};
use stacklight_core::seed::{self, stream};

use super::{Ctx, Split};
use crate::io;

#[derive(Args, Clone, Debug, Default)]
pub struct EvalArgs {
    /// Classifier to evaluate on the test split; without it only detection
    /// is evaluated.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Split file written by `train` (default: regenerate from the seed).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Crop-set size when regenerating the split.
    #[arg(long)]
    pub crops: Option<usize>,
    /// Held-out frames for the detection benchmark.
    #[arg(long)]
    pub detection_frames: Option<usize>,
    /// Extra tower scales, each evaluated and reported on its own.
    #[arg(long, value_delimiter = ',')]
    pub scales: Option<Vec<f64>>,
    /// Skip the detection benchmark.
    #[arg(long)]
    pub no_detection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub tower_scale: f64,
    pub frames: usize,
    pub metrics: DetectionMetrics,
    pub recall: f64,
    pub fp_per_detection: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub classification: Option<ClassifierReport>,
    /// Base scale first, then any extra scales in the order given.
    pub detection: Vec<DetectionResult>,
}

/// Writes `classification.json` + `confusion.csv` (with `--model`) and
/// `detection.json`.
pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<EvalSummary> {
    let e = &ctx.config.eval;
    let model: Option<SoftmaxModel> = args.model.as_deref().map(io::read_json).transpose()?;
    if let (Some(m), Some(p)) = (&model, &args.model) {
        m.validate().with_context(|| format!("invalid model {}", p.display()))?;
    }
    let split = match &model {
        Some(_) => Some(Split::resolve(ctx, args.split.as_deref(), args.crops)?),
        None => None,
    };
    ctx.create_out()?;
    let mut summary = EvalSummary::default();
    let mut violations = Vec::new();

    if let (Some(model), Some(split)) = (&model, &split) {
        let test = split.render(ctx, &split.test)?;
        let report = evaluate_classifier(model, &test, &split.train)?;
        io::write_json(&ctx.path("classification.json"), &report)?;
        io::write_text(&ctx.path("confusion.csv"), &report.confusion.to_csv())?;
        eprintln!("eval: classification accuracy {:.4} on {} crops", report.accuracy, report.n);
        if report.accuracy < e.min_accuracy {
            violations.push(format!("classification accuracy {:.4} below {}", report.accuracy, e.min_accuracy));
        }
        summary.classification = Some(report);
    }

    if !args.no_detection {
        let detector = SpotlightDetector::new(e.detector.clone())?;
        let mut bench = e.detection.clone();
        if let Some(n) = args.detection_frames {
            bench.frames = n;
        }
        let scales = args.scales.clone().unwrap_or_else(|| e.scales.clone());
        let runs = std::iter::once(bench.scene.tower_scale).chain(scales);
        for (i, scale) in runs.enumerate() {
            let t0 = Instant::now();
            let mut b = bench.clone();
            b.scene.tower_scale = scale;
            let m = evaluate_detection(&b, &detector, seed::derive(ctx.seed, stream::HELD_OUT, i as u64))?;
            eprintln!(
                "eval: detection at scale {scale}: recall {:.4}, FP/detection {:.5} over {} frames ({:.1} s)",
                m.recall(),
                m.fp_per_detection(),
                b.frames,
                t0.elapsed().as_secs_f64()
            );
            summary.detection.push(DetectionResult {
                tower_scale: scale,
                frames: b.frames,
                metrics: m,
                recall: m.recall(),
                fp_per_detection: m.fp_per_detection(),
            });
        }
        io::write_json(&ctx.path("detection.json"), &summary.detection)?;
        let base = &summary.detection[0];
        if base.recall < e.min_recall {
            violations.push(format!("detection recall {:.4} below {}", base.recall, e.min_recall));
        }
        if base.fp_per_detection > e.max_fp_rate {
            violations.push(format!("false positives per detection {:.5} above {}", base.fp_per_detection, e.max_fp_rate));
        }
    }
    ctx.finish_check(violations)?;
    Ok(summary)
}
