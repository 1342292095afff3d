use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::model::argmax;
use crate::error::{invalid, Result};
use crate::label::LightCombination;

/// Moving-average window (frames) and the confidence below which a label is
/// flagged uncertain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingPolicy {
    pub window: usize,
    pub threshold: f64,
}

impl Default for SmoothingPolicy {
    fn default() -> Self {
        Self { window: 5, threshold: 0.6 }
    }
}

impl SmoothingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || !(0.0..=1.0).contains(&self.threshold) {
            return Err(invalid!("smoothing needs a positive window and a threshold in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Smoothed {
    pub label: LightCombination,
    pub confidence: f64,
    pub uncertain: bool,
}

/// Averages the score vectors and takes the argmax (ties to the earlier
/// class); flags the result when the top mean score is below `threshold`.
pub fn temporal_smooth(window: &[Vec<f64>], classes: &[LightCombination], threshold: f64) -> Result<Smoothed> {
    let Some(first) = window.first() else {
        return Err(invalid!("smoothing window is empty"));
    };
    if first.len() != classes.len() || window.iter().any(|s| s.len() != classes.len()) {
        return Err(invalid!("score vectors must have one entry per class"));
    }
    let mut mean = vec![0.0; classes.len()];
    for s in window {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= window.len() as f64);
    let best = argmax(&mean);
    Ok(Smoothed { label: classes[best], confidence: mean[best], uncertain: mean[best] < threshold })
}

/// Streaming form of [`temporal_smooth`] over the last `window` vectors.
#[derive(Clone, Debug)]
pub struct TemporalSmoother {
    policy: SmoothingPolicy,
    classes: Vec<LightCombination>,
    recent: VecDeque<Vec<f64>>,
}

impl TemporalSmoother {
    pub fn new(policy: SmoothingPolicy, classes: Vec<LightCombination>) -> Result<Self> {
        policy.validate()?;
        Ok(Self { policy, classes, recent: VecDeque::with_capacity(policy.window) })
    }

    pub fn push(&mut self, scores: Vec<f64>) -> Result<Smoothed> {
        if scores.len() != self.classes.len() {
            return Err(invalid!("score vector has {} entries, expected {}", scores.len(), self.classes.len()));
        }
        if self.recent.len() == self.policy.window {
            self.recent.pop_front();
        }
        self.recent.push_back(scores);
        let window: Vec<Vec<f64>> = self.recent.iter().cloned().collect();
        temporal_smooth(&window, &self.classes, self.policy.threshold)
    }

    /// Whether the last push averaged a full window.
    pub fn is_full(&self) -> bool {
        self.recent.len() == self.policy.window
    }

    pub fn reset(&mut self) {
        self.recent.clear();
    }
}
