use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use stacklight_core::classify::SoftmaxModel;
use stacklight_core::eval::{run_sweep, SweepResult};
use stacklight_core::perturb::DEFAULT_SIZES;

use super::{Ctx, Split};
use crate::io;

#[derive(Args, Clone, Debug, Default)]
pub struct SweepArgs {
    /// Trained classifier (model.json).
    #[arg(long)]
    pub model: PathBuf,
    /// Split file written by `train` (default: regenerate from the seed).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Crop-set size when regenerating the split.
    #[arg(long)]
    pub crops: Option<usize>,
    /// Use only the first N test crops.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Degrade at the original size, then resize.
    #[arg(long)]
    pub degrade_first: bool,
}

/// Writes `sweep.csv`, `sweep.json` and `sweep_table.csv`.
pub fn sweep(ctx: &Ctx, args: &SweepArgs) -> Result<SweepResult> {
    let s = &ctx.config.sweep;
    let model: SoftmaxModel = io::read_json(&args.model)?;
    model.validate().with_context(|| format!("invalid model {}", args.model.display()))?;
    let split = Split::resolve(ctx, args.split.as_deref(), args.crops)?;
    ctx.create_out()?;
    let limit = args.limit.or(s.limit).unwrap_or(usize::MAX).min(split.test.len());
    let test = split.render(ctx, &split.test[..limit])?;
    let t0 = Instant::now();
    let result = run_sweep(&model, &test, &s.grid, args.degrade_first || s.degrade_first)?;
    io::write_text(&ctx.path("sweep.csv"), &result.to_csv())?;
    io::write_json(&ctx.path("sweep.json"), &result)?;
    io::write_text(&ctx.path("sweep_table.csv"), &result.to_table_csv())?;
    eprintln!("sweep: {} cells over {} crops ({:.1} s)", result.cells.len(), test.len(), t0.elapsed().as_secs_f64());
    let violations = if ctx.check { sweep_shape_violations(&result) } else { Vec::new() };
    ctx.finish_check(violations)?;
    Ok(result)
}

/// Expected qualitative shape of the default sweep:
/// - clean accuracy at 3×6 at least 30 points below 20×45;
/// - severe defocus strictly below moderate defocus at every size;
/// - moderate gamma within 2 points of clean at 20×45, severe gamma at
///   least 10 points below;
/// - clean accuracy non-increasing with size, up to one inversion of at
///   most 1 point.
pub fn sweep_shape_violations(r: &SweepResult) -> Vec<String> {
    let mut out = Vec::new();
    let mut acc = |size: (usize, usize), name: &str| match r.get(size, name) {
        Some(c) => Some(c.accuracy),
        None => {
            out.push(format!("missing cell {}x{} {name}", size.0, size.1));
            None
        }
    };
    let big = DEFAULT_SIZES[0];
    let small = DEFAULT_SIZES[DEFAULT_SIZES.len() - 1];
    let clean: Vec<Option<f64>> = DEFAULT_SIZES.iter().map(|&s| acc(s, "clean")).collect();
    let defocus: Vec<(Option<f64>, Option<f64>)> =
        DEFAULT_SIZES.iter().map(|&s| (acc(s, "defocus_moderate"), acc(s, "defocus_severe"))).collect();
    let gamma: Vec<(&str, Option<f64>)> = ["gamma_bright_moderate", "gamma_dark_moderate", "gamma_bright_severe", "gamma_dark_severe"]
        .into_iter()
        .map(|n| (n, acc(big, n)))
        .collect();
    let (Some(c_big), Some(c_small)) = (clean[0], clean[clean.len() - 1]) else {
        return out;
    };
    if c_big - c_small < 0.30 {
        out.push(format!(
            "clean accuracy drops only {:.1} points from {}x{} to {}x{} (need 30)",
            (c_big - c_small) * 100.0,
            big.0,
            big.1,
            small.0,
            small.1
        ));
    }
    for (&size, d) in DEFAULT_SIZES.iter().zip(&defocus) {
        if let (Some(m), Some(s)) = *d {
            if s >= m {
                out.push(format!("severe defocus {s:.3} not below moderate {m:.3} at {}x{}", size.0, size.1));
            }
        }
    }
    for (name, a) in gamma {
        let Some(a) = a else { continue };
        let delta = a - c_big;
        if name.ends_with("moderate") && delta.abs() > 0.02 {
            out.push(format!("{name} at {}x{} differs from clean by {:.1} points (limit 2)", big.0, big.1, delta * 100.0));
        }
        if name.ends_with("severe") && delta > -0.10 {
            out.push(format!("{name} at {}x{} is only {:.1} points below clean (need 10)", big.0, big.1, -delta * 100.0));
        }
    }
    let clean: Vec<f64> = clean.into_iter().flatten().collect();
    let rises: Vec<f64> = clean.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    // one point of slack, plus float rounding
    if rises.len() > 1 || rises.iter().any(|&d| d > 0.01 + 1e-9) {
        out.push(format!("clean accuracy is not monotone in crop size: {clean:.3?}"));
    }
    out
}
