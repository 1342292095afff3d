use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use stacklight_core::classify::{predict, SmoothingPolicy, SoftmaxModel, Smoothed, TemporalSmoother};
use stacklight_core::detect::{working_to_frame, FramePipeline, SpotlightDetector};
use stacklight_core::tracker::{Machine, Report, Tracker};

use super::synth::machines_from_manifest;
use super::Ctx;
use crate::io;

#[derive(Args, Clone, Debug, Default)]
pub struct RunArgs {
    /// Directory of frames (PNG or PPM), processed in file-name order.
    #[arg(long)]
    pub frames: PathBuf,
    /// Trained classifier (model.json).
    #[arg(long)]
    pub model: PathBuf,
    /// JSON list of machines: `[{"id": "...", "box": {...}}]`.
    #[arg(long, conflicts_with = "manifest")]
    pub machines: Option<PathBuf>,
    /// Take the machines from the first line of a synth manifest instead.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct FrameLabels<'a> {
    frame: usize,
    t: f64,
    file: String,
    labels: Vec<MachineLabel<'a>>,
}

#[derive(Serialize)]
struct MachineLabel<'a> {
    machine: &'a str,
    #[serde(flatten)]
    smoothed: Smoothed,
}

/// Classifies each machine's light in every frame, runs detection passes on
/// the tracker's schedule and writes `report.json`, `report.csv`,
/// `events.jsonl` and `labels.jsonl`.
pub fn run(ctx: &Ctx, args: &RunArgs) -> Result<Report> {
    let r = &ctx.config.run;
    let model: SoftmaxModel = io::read_json(&args.model)?;
    model.validate().with_context(|| format!("invalid model {}", args.model.display()))?;
    let machines: Vec<Machine> = match (&args.machines, &args.manifest) {
        (Some(p), _) => io::read_json(p)?,
        (None, Some(p)) => machines_from_manifest(p)?,
        (None, None) => bail!("one of --machines or --manifest is required"),
    };
    let files = io::list_frames(&args.frames)?;
    let detector = SpotlightDetector::new(r.detector.clone())?;
    let mut pipeline = FramePipeline::new(&detector);
    let mut tracker = Tracker::new(r.tracker.clone(), machines.clone())?;
    let policy = SmoothingPolicy { window: r.tracker.smoothing_window, threshold: r.smoothing.threshold };
    let mut smoothers = machines
        .iter()
        .map(|_| TemporalSmoother::new(policy, model.classes.clone()))
        .collect::<stacklight_core::Result<Vec<_>>>()?;
    ctx.create_out()?;

    let mut log = Vec::with_capacity(files.len());
    for (i, file) in files.iter().enumerate() {
        let frame = io::read_image(file)?;
        let (w, h) = (frame.width(), frame.height());
        let t = r.tracker.frame_time(i);
        let mut smoothed = Vec::with_capacity(machines.len());
        for (m, sm) in machines.iter().zip(&mut smoothers) {
            if !m.bbox.fits_within(w, h) || m.bbox.area() == 0 {
                bail!("machine {} box does not fit the {}x{} frame {}", m.id, w, h, file.display());
            }
            let c = r.crop_margin;
            let crop = frame.crop(m.bbox.expand_clipped(c, c, c, c, w, h))?;
            let (_, scores) = predict(&model, &crop)?;
            smoothed.push(sm.push(scores)?);
        }
        // Tracking starts once every smoother averages a full window, so a
        // single misread frame at session start cannot set the initial state.
        let warm = smoothers.iter().all(|s| s.is_full());
        let dets = if warm && tracker.detection_due(t)? {
            let found = pipeline.detect(&frame)?;
            Some(found.into_iter().map(|mut d| {
                d.bbox = working_to_frame(&d.bbox, w, h);
                d
            }).collect::<Vec<_>>())
        } else {
            None
        };
        let labels: Vec<_> = smoothed.iter().map(|s| s.label).collect();
        if warm {
            tracker.step(i, t, &labels, dets.as_deref())?;
        }
        log.push(FrameLabels {
            frame: i,
            t,
            file: file.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            labels: machines.iter().zip(smoothed).map(|(m, s)| MachineLabel { machine: &m.id, smoothed: s }).collect(),
        });
    }

    let report = tracker.report();
    io::write_json(&ctx.path("report.json"), &report)?;
    io::write_text(&ctx.path("report.csv"), &report.to_csv())?;
    io::write_jsonl(&ctx.path("events.jsonl"), tracker.events())?;
    io::write_jsonl(&ctx.path("labels.jsonl"), &log)?;
    eprintln!("run: {} frames, {} machines, {} events", files.len(), machines.len(), tracker.events().len());
    Ok(report)
}
