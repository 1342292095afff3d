//! One module per subcommand plus the pieces they share: the resolved
//! invocation context and the regenerated crop-set split.

mod eval;
mod run;
mod sweep;
mod synth;
mod train;

pub use eval::{eval, EvalArgs, EvalSummary};
pub use run::{run, RunArgs};
pub use sweep::{sweep, sweep_shape_violations, SweepArgs};
pub use synth::{synth, SynthArgs};
pub use train::{recrop, train, OptimizerKind, TrainArgs, TrainReport};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use stacklight_core::eval::split_indices;
use stacklight_core::synth::{crop_labels, sample_crops_at, LabeledCrop};

use crate::config::RunConfig;
use crate::io;
use crate::CheckFailed;

/// Everything a subcommand needs besides its own flags.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub seed: u64,
    pub config: RunConfig,
    pub out: PathBuf,
    pub check: bool,
}

impl Ctx {
    /// Global flags win over the config file; the seed defaults to 0.
    pub fn new(seed: Option<u64>, config: Option<&Path>, out: PathBuf, check: bool) -> Result<Self> {
        let config = match config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let seed = seed.or(config.seed).unwrap_or(0);
        Ok(Self { seed, config, out, check })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }

    fn finish_check(&self, violations: Vec<String>) -> Result<()> {
        if self.check && !violations.is_empty() {
            return Err(CheckFailed(violations).into());
        }
        Ok(())
    }
}

/// Crop ids of the train / validation / test parts of a crop set of
/// `count` samples generated from `seed`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Split {
    pub seed: u64,
    pub count: usize,
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl Split {
    /// The stratified split of the configured crop set.
    pub fn generate(ctx: &Ctx, count: usize) -> Result<Self> {
        let d = &ctx.config.dataset;
        let labels = crop_labels(&d.crop_set, count, ctx.seed)?;
        let [a, b, c] = split_indices(&labels, d.split, ctx.seed)?;
        let ids = |v: Vec<usize>| v.into_iter().map(|i| i as u64).collect();
        Ok(Self { seed: ctx.seed, count, train: ids(a), val: ids(b), test: ids(c) })
    }

    /// Reads a split file and refuses overlapping or out-of-range ids.
    pub fn load(path: &Path, ctx: &Ctx) -> Result<Self> {
        let split: Split = io::read_json(path)?;
        if split.seed != ctx.seed {
            bail!("{} was made with seed {}, not {}", path.display(), split.seed, ctx.seed);
        }
        split.validate().with_context(|| format!("invalid split {}", path.display()))?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, part) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in part {
                if id >= self.count as u64 {
                    bail!("{name} id {id} is out of range for {} crops", self.count);
                }
                if !seen.insert(id) {
                    bail!("overlapping splits: crop {id} appears twice ({name})");
                }
            }
        }
        if self.train.is_empty() || self.test.is_empty() {
            bail!("train and test splits must not be empty");
        }
        Ok(())
    }

    /// `--split FILE` if given, otherwise the generated split.
    pub fn resolve(ctx: &Ctx, file: Option<&Path>, count: Option<usize>) -> Result<Self> {
        match file {
            Some(p) => Self::load(p, ctx),
            None => Self::generate(ctx, count.unwrap_or(ctx.config.dataset.crops)),
        }
    }

    /// Renders the crops with the given ids, in that order.
    pub fn render(&self, ctx: &Ctx, ids: &[u64]) -> Result<Vec<LabeledCrop>> {
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        Ok(sample_crops_at(&ctx.config.dataset.crop_set, self.count, self.seed, &idx)?)
    }
}
