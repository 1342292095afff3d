use std::path::Path;

use anyhow::{Context, Result};
use clap::Args;
use stacklight_core::seed::{self, stream};
use stacklight_core::synth::{DatasetPlan, ManifestLine, SceneRenderer};
use stacklight_core::tracker::Machine;
use stacklight_core::{ColorSpace, Image, LightCombination};

use super::Ctx;
use crate::config::ImageFormat;
use crate::io;

#[derive(Args, Clone, Debug, Default)]
pub struct SynthArgs {
    /// Number of frames to render.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Frame file format.
    #[arg(long, value_enum)]
    pub format: Option<ImageFormat>,
    /// Frames per generated scene; a new layout starts after this many.
    #[arg(long)]
    pub frames_per_scene: Option<usize>,
}

/// Writes `frames/fNNNNNN.<ext>`, `manifest.jsonl`, `scenes.json` and
/// `machines.json` (the towers of the first scene) under the output dir.
pub fn synth(ctx: &Ctx, args: &SynthArgs) -> Result<()> {
    let mut cfg = ctx.config.synth.clone();
    if let Some(n) = args.frames {
        cfg.frames = n;
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    if let Some(n) = args.frames_per_scene {
        cfg.timeline.frames_per_scene = n;
    }
    let frames_dir = ctx.path("frames");
    std::fs::create_dir_all(&frames_dir).with_context(|| format!("creating {}", frames_dir.display()))?;

    let mut plan = DatasetPlan::new(cfg.scene.clone(), cfg.timeline.clone(), ctx.seed)?;
    let scenes = plan.scenes(cfg.frames)?;
    let mut manifest = Vec::with_capacity(cfg.frames);
    let mut frame = Image::filled(1, 1, ColorSpace::Rgb, &[0.0; 3])?;
    let mut global = 0usize;
    for scene in &scenes {
        let renderer = SceneRenderer::new(scene)?;
        for f in 0..scene.timeline.frames {
            let ann = renderer.render_into(f, seed::derive(ctx.seed, stream::NOISE, global as u64), &mut frame)?;
            let name = format!("f{global:06}.{}", cfg.format.extension());
            io::write_image(&frames_dir.join(&name), &frame, cfg.format)?;
            manifest.push(ManifestLine { frame: format!("frames/{name}"), index: global, towers: ann.towers });
            global += 1;
        }
    }
    io::write_jsonl(&ctx.path("manifest.jsonl"), &manifest)?;
    io::write_json(&ctx.path("scenes.json"), &scenes)?;
    let machines: Vec<Machine> = scenes
        .first()
        .map(|s| s.towers.iter().map(|t| Machine { id: t.id.clone(), bbox: t.position }).collect())
        .unwrap_or_default();
    io::write_json(&ctx.path("machines.json"), &machines)?;
    eprintln!("synth: {} frames in {} scene(s) -> {}", manifest.len(), scenes.len(), ctx.out.display());

    let mut violations = Vec::new();
    if ctx.check {
        let shares = cfg.timeline.distribution.shares()?;
        let observed = class_mixture(&manifest);
        for c in LightCombination::ALL {
            let (want, got) = (shares[c.index()], observed[c.index()]);
            if (want - got).abs() > 0.03 {
                violations.push(format!("class {c}: {:.1}% of tower entries, requested {:.1}% (±3 points)", got * 100.0, want * 100.0));
            }
        }
    }
    ctx.finish_check(violations)
}

/// Share of each class over all tower entries of a manifest.
pub fn class_mixture(manifest: &[ManifestLine]) -> [f64; 10] {
    let mut counts = [0usize; 10];
    for line in manifest {
        for t in &line.towers {
            counts[t.label.index()] += 1;
        }
    }
    let total = counts.iter().sum::<usize>().max(1) as f64;
    counts.map(|c| c as f64 / total)
}

/// Machines from the first line of a manifest.
pub(super) fn machines_from_manifest(path: &Path) -> Result<Vec<Machine>> {
    let lines: Vec<ManifestLine> = io::read_jsonl(path)?;
    Ok(lines.first().map(|l| l.towers.iter().map(|t| Machine { id: t.id.clone(), bbox: t.bbox }).collect()).unwrap_or_default())
}
