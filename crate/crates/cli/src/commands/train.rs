use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use stacklight_core::classify::{featurize, train_from, EpochStats, Optimizer, SoftmaxModel, TrainConfig};
use stacklight_core::eval::{evaluate_classifier, rebalance, ClassifierReport, REBALANCE_OFFSET};
use stacklight_core::seed::{self, stream};
use stacklight_core::synth::{sample_crops, ClassDistribution, CropSetConfig, LabeledCrop};
use stacklight_core::{BoundingBox, LightCombination};

use super::{Ctx, Split};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Sgdm,
    Adam,
}

#[derive(Args, Clone, Debug, Default)]
pub struct TrainArgs {
    /// Optimiser; hyper-parameters come from the config when it names the
    /// same optimiser, otherwise the defaults are used.
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Size of the generated crop set (split 60/20/20 by default).
    #[arg(long)]
    pub crops: Option<usize>,
    /// Top up this class in the training split with shifted re-crops.
    #[arg(long, value_parser = parse_label)]
    pub rebalance: Option<LightCombination>,
    /// Warm-start from a green / yellow / red model.
    #[arg(long)]
    pub pretrain: bool,
    /// Use this split file (as written to split.json) instead of generating one.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

pub(crate) fn parse_label(s: &str) -> Result<LightCombination, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Contents of `train_report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    pub train: TrainConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Re-crops added by rebalancing.
    pub rebalanced: usize,
    pub pretrained: bool,
    pub final_val_acc: f64,
    pub test: ClassifierReport,
}

/// Shifted re-crop: a window 2·5 px smaller than the crop on each axis,
/// moved by `(dx, dy)` from the centre.
pub fn recrop(c: &LabeledCrop, dx: i32, dy: i32, id: u64) -> stacklight_core::Result<LabeledCrop> {
    let m = REBALANCE_OFFSET;
    let (w, h) = (c.image.width() as i32, c.image.height() as i32);
    if w <= 2 * m || h <= 2 * m {
        return Err(stacklight_core::Error::InvalidArgument(format!("crop {} is too small to re-crop", c.id)));
    }
    let b = BoundingBox::new((m + dx) as u32, (m + dy) as u32, (w - 2 * m) as u32, (h - 2 * m) as u32);
    Ok(LabeledCrop { id, label: c.label, image: c.image.crop(b)? })
}

fn rebalanced(crops: Vec<LabeledCrop>, target: LightCombination, first_id: u64, seed: u64) -> Result<(Vec<LabeledCrop>, usize)> {
    let before = crops.len();
    let mut next = first_id;
    let out = rebalance(&crops, |c| c.label, target, seed, |c, dx, dy| {
        next += 1;
        recrop(c, dx, dy, next - 1)
    })?;
    let added = out.len() - before;
    Ok((out, added))
}

/// Class mix of the three-class set used for warm starts.
fn pretrain_distribution() -> ClassDistribution {
    ClassDistribution(BTreeMap::from([
        (LightCombination::Green, 21396.0),
        (LightCombination::Yellow, 909.0),
        (LightCombination::Red, 20427.0),
    ]))
}

fn pretrained_init(ctx: &Ctx, cfg: &TrainConfig, n: usize) -> Result<SoftmaxModel> {
    let classes = vec![LightCombination::Green, LightCombination::Yellow, LightCombination::Red];
    let crop_cfg = CropSetConfig { distribution: pretrain_distribution(), ..ctx.config.dataset.crop_set.clone() };
    let pseed = seed::derive(ctx.seed, stream::PRETRAIN, 0);
    let crops = sample_crops(&crop_cfg, n, pseed)?;
    let (crops, _) = rebalanced(crops, LightCombination::Yellow, n as u64, pseed)?;
    let examples = featurize(&crops, &ctx.config.train.features)?;
    let init = SoftmaxModel::zeros(classes, ctx.config.train.features.clone())?;
    let (model, _) = train_from(init, &examples, &[], cfg)?;
    Ok(model.warm_start(LightCombination::ALL.to_vec())?)
}

fn optimizer(configured: Optimizer, kind: Option<OptimizerKind>) -> Optimizer {
    match (kind, configured) {
        (None, o) | (Some(OptimizerKind::Sgdm), o @ Optimizer::Sgdm { .. }) | (Some(OptimizerKind::Adam), o @ Optimizer::Adam { .. }) => o,
        (Some(OptimizerKind::Sgdm), _) => Optimizer::sgdm(),
        (Some(OptimizerKind::Adam), _) => Optimizer::adam(),
    }
}

/// Writes `model.json`, `history.csv`, `split.json`, `train_report.json`
/// and `confusion.csv`.
pub fn train(ctx: &Ctx, args: &TrainArgs) -> Result<TrainReport> {
    let t0 = Instant::now();
    let s = &ctx.config.train;
    let mut cfg = s.train.clone();
    cfg.optimizer = optimizer(cfg.optimizer, args.optimizer);
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.seed = ctx.seed;
    cfg.validate()?;
    let split = Split::resolve(ctx, args.split.as_deref(), args.crops)?;
    if args.split.is_some() && args.crops.is_some_and(|n| n != split.count) {
        bail!("--crops {} disagrees with the split file ({} crops)", args.crops.unwrap_or(0), split.count);
    }
    ctx.create_out()?;

    let mut train_crops = split.render(ctx, &split.train)?;
    let val_crops = split.render(ctx, &split.val)?;
    let test_crops = split.render(ctx, &split.test)?;
    let mut added = 0;
    if let Some(target) = args.rebalance.or(s.rebalance) {
        let (crops, n) = rebalanced(train_crops, target, split.count as u64, seed::derive(ctx.seed, stream::REBALANCE, 1))?;
        train_crops = crops;
        added = n;
    }
    let pretrain = args.pretrain || s.pretrain;
    let init = if pretrain {
        pretrained_init(ctx, &cfg, s.pretrain_crops)?
    } else {
        SoftmaxModel::zeros(LightCombination::ALL.to_vec(), s.features.clone())?
    };
    let train_ex = featurize(&train_crops, &s.features)?;
    let val_ex = featurize(&val_crops, &s.features)?;
    let (model, history) = train_from(init, &train_ex, &val_ex, &cfg)?;
    let train_ids: Vec<u64> = train_crops.iter().map(|c| c.id).collect();
    let test = evaluate_classifier(&model, &test_crops, &train_ids)?;

    io::write_json(&ctx.path("model.json"), &model)?;
    io::write_text(&ctx.path("history.csv"), &history_csv(&history))?;
    io::write_json(&ctx.path("split.json"), &split)?;
    io::write_text(&ctx.path("confusion.csv"), &test.confusion.to_csv())?;
    let report = TrainReport {
        seed: ctx.seed,
        train: cfg,
        n_train: train_crops.len(),
        n_val: val_crops.len(),
        n_test: test_crops.len(),
        rebalanced: added,
        pretrained: pretrain,
        final_val_acc: history.last().map_or(0.0, |h| h.val_acc),
        test,
    };
    io::write_json(&ctx.path("train_report.json"), &report)?;
    eprintln!("train: test accuracy {:.4} on {} crops ({:.1} s)", report.test.accuracy, report.n_test, t0.elapsed().as_secs_f64());

    let mut violations = Vec::new();
    if report.test.accuracy < s.min_accuracy {
        violations.push(format!("test accuracy {:.4} below {}", report.test.accuracy, s.min_accuracy));
    }
    ctx.finish_check(violations)?;
    Ok(report)
}

fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from("epoch,train_loss,val_acc\n");
    for h in history {
        s.push_str(&format!("{},{:.9},{:.6}\n", h.epoch, h.train_loss, h.val_acc));
    }
    s
}
