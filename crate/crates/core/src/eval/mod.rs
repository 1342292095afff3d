//! Metrics and experiment harness: detection matching, dataset splits and
//! rebalancing, confusion matrices, detection runs over synthetic frames and
//! the crop-size × degradation sweep.

mod sweep;

pub use sweep::{run_sweep, SweepCell, SweepResult};

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{featurize, SoftmaxModel};
use crate::detect::{frame_to_working, Detection, Detector, FramePipeline};
use crate::error::{invalid, Result};
use crate::imaging::{iou, BoundingBox, ColorSpace, Image};
use crate::label::LightCombination;
use crate::seed::{self, stream};
use crate::synth::{DatasetPlan, LabeledCrop, SceneConfig, SceneRenderer, TimelineConfig};

/// IoU needed to count a detection as finding a ground-truth light.
pub const MATCH_IOU: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub true_positives: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    /// Unmatched detections lying mostly inside an ignore region.
    pub ignored: u64,
    /// Ground-truth lights covered by two or more detection fragments.
    pub split_objects: u64,
}

impl DetectionMetrics {
    pub fn recall(&self) -> f64 {
        let gt = self.true_positives + self.false_negatives;
        if gt == 0 {
            1.0
        } else {
            self.true_positives as f64 / gt as f64
        }
    }

    /// False positives over counted (non-ignored) detections.
    pub fn fp_per_detection(&self) -> f64 {
        let d = self.true_positives + self.false_positives;
        if d == 0 {
            0.0
        } else {
            self.false_positives as f64 / d as f64
        }
    }

    pub fn merge(&mut self, o: &DetectionMetrics) {
        self.true_positives += o.true_positives;
        self.false_negatives += o.false_negatives;
        self.false_positives += o.false_positives;
        self.ignored += o.ignored;
        self.split_objects += o.split_objects;
    }
}

/// Greedy one-to-one matching: detections by descending score, each takes
/// the unmatched ground-truth box of highest IoU (at least `iou_threshold`).
pub fn match_detections(gt: &[BoundingBox], dets: &[Detection], iou_threshold: f64) -> Result<DetectionMetrics> {
    match_detections_with_ignore(gt, &[], dets, iou_threshold)
}

/// [`match_detections`] where an unmatched detection with at least half of
/// its area inside one of `ignore` is neither a true nor a false positive.
pub fn match_detections_with_ignore(gt: &[BoundingBox], ignore: &[BoundingBox], dets: &[Detection], iou_threshold: f64) -> Result<DetectionMetrics> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(invalid!("IoU threshold must lie in (0, 1], got {iou_threshold}"));
    }
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| (a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h).cmp(&(b.bbox.x, b.bbox.y, b.bbox.w, b.bbox.h))));
    let mut taken = vec![false; gt.len()];
    let mut m = DetectionMetrics::default();
    for d in order {
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in gt.iter().enumerate() {
            let v = iou(&d.bbox, g);
            if !taken[i] && v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, _)) = best {
            taken[i] = true;
            m.true_positives += 1;
        } else if ignore.iter().any(|r| 2 * d.bbox.intersection_area(r) >= d.bbox.area()) {
            m.ignored += 1;
        } else {
            m.false_positives += 1;
        }
    }
    m.false_negatives = taken.iter().filter(|t| !**t).count() as u64;
    m.split_objects = gt
        .iter()
        .filter(|g| dets.iter().filter(|d| 2 * d.bbox.intersection_area(g) >= d.bbox.area()).count() >= 2)
        .count() as u64;
    Ok(m)
}

/// Synthetic detection benchmark: fresh scenes from `seed`, every frame
/// rendered and run through the full detection pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionBenchmark {
    pub frames: usize,
    pub scene: SceneConfig,
    pub timeline: TimelineConfig,
}

impl Default for DetectionBenchmark {
    fn default() -> Self {
        Self { frames: 2000, scene: SceneConfig::default(), timeline: TimelineConfig::default() }
    }
}

/// Hidden lights are left out of the ground truth and their boxes become
/// ignore regions. Boxes are compared in working-frame coordinates.
pub fn evaluate_detection(bench: &DetectionBenchmark, detector: &dyn Detector, seed: u64) -> Result<DetectionMetrics> {
    let mut plan = DatasetPlan::new(bench.scene.clone(), bench.timeline.clone(), seed)?;
    let mut pipeline = FramePipeline::new(detector);
    let mut frame = Image::filled(1, 1, ColorSpace::Rgb, &[0.0; 3])?;
    let mut total = DetectionMetrics::default();
    let mut done = 0;
    while done < bench.frames {
        let n = bench.timeline.frames_per_scene.min(bench.frames - done);
        let scene = plan.next(n)?;
        let renderer = SceneRenderer::new(&scene)?;
        for f in 0..n {
            let ann = renderer.render_into(f, seed::derive(seed, stream::NOISE, (done + f) as u64), &mut frame)?;
            let dets = pipeline.detect(&frame)?;
            let to_working = |b: &BoundingBox| frame_to_working(b, scene.width, scene.height);
            let gt: Vec<BoundingBox> = ann.towers.iter().filter(|t| !t.occluded).map(|t| to_working(&t.bbox)).collect();
            let ignore: Vec<BoundingBox> = ann.towers.iter().filter(|t| t.occluded).map(|t| to_working(&t.bbox)).collect();
            total.merge(&match_detections_with_ignore(&gt, &ignore, &dets, MATCH_IOU)?);
        }
        done += n;
    }
    Ok(total)
}

/// Stratified split of item indices into train / validation / test. Each
/// class is shuffled on its own stream and cut at rounded proportions, so
/// every class lands within one item of the requested ratios.
pub fn split_indices(labels: &[LightCombination], ratios: [f64; 3], seed: u64) -> Result<[Vec<usize>; 3]> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || libm::fabs(ratios.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(invalid!("split ratios must be in [0, 1] and sum to 1"));
    }
    let mut out: [Vec<usize>; 3] = Default::default();
    for c in LightCombination::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(&mut seed::rng(seed, stream::SPLIT, c.index() as u64));
        let n = idx.len() as f64;
        let n_train = libm::round(n * ratios[0]) as usize;
        let n_val = (libm::round(n * ratios[1]) as usize).min(idx.len() - n_train);
        out[0].extend_from_slice(&idx[..n_train]);
        out[1].extend_from_slice(&idx[n_train..n_train + n_val]);
        out[2].extend_from_slice(&idx[n_train + n_val..]);
    }
    for part in &mut out {
        part.sort_unstable();
    }
    Ok(out)
}

/// Largest re-crop offset, per axis, used when rebalancing.
pub const REBALANCE_OFFSET: i32 = 5;

/// Independent uniform offsets in `[-5, 5]²`.
pub fn rebalance_offsets(count: usize, seed: u64) -> Vec<(i32, i32)> {
    let mut rng = seed::rng(seed, stream::REBALANCE, 0);
    (0..count).map(|_| (rng.random_range(-REBALANCE_OFFSET..=REBALANCE_OFFSET), rng.random_range(-REBALANCE_OFFSET..=REBALANCE_OFFSET))).collect()
}

/// Adds re-cropped copies of `target` items (cycling through them in input
/// order, each with a fresh random offset) until the class is within 5 % of
/// the largest class. Returns the input followed by the new items.
pub fn rebalance<T, F>(items: &[T], label: impl Fn(&T) -> LightCombination, target: LightCombination, seed: u64, mut recrop: F) -> Result<Vec<T>>
where
    T: Clone,
    F: FnMut(&T, i32, i32) -> Result<T>,
{
    let mut counts = [0usize; LightCombination::COUNT];
    for it in items {
        counts[label(it).index()] += 1;
    }
    let sources: Vec<&T> = items.iter().filter(|it| label(it) == target).collect();
    if sources.is_empty() {
        return Err(invalid!("class {target} is not present"));
    }
    let largest = *counts.iter().max().unwrap_or(&0);
    let goal = libm::ceil(0.95 * largest as f64) as usize;
    let missing = goal.saturating_sub(counts[target.index()]);
    let mut out = items.to_vec();
    for (k, (dx, dy)) in rebalance_offsets(missing, seed).into_iter().enumerate() {
        out.push(recrop(sources[k % sources.len()], dx, dy)?);
    }
    Ok(out)
}

/// Rows are true labels, columns predictions, both in `classes` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<LightCombination>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<LightCombination>) -> Self {
        let n = classes.len();
        Self { classes, counts: vec![vec![0; n]; n] }
    }

    pub fn add(&mut self, truth: LightCombination, predicted: LightCombination) -> Result<()> {
        let pos = |c: LightCombination| self.classes.iter().position(|&k| k == c).ok_or_else(|| invalid!("class {c} not in matrix"));
        let (t, p) = (pos(truth)?, pos(predicted)?);
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Per-class recall; `None` for classes absent from the test set.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect()
    }

    /// Header row of predicted classes, then one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for c in &self.classes {
            s.push(',');
            s.push_str(c.name());
        }
        s.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            s.push_str(c.name());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub n: usize,
    pub accuracy: f64,
    pub recall: Vec<(LightCombination, Option<f64>)>,
    pub confusion: ConfusionMatrix,
}

/// Predicts every test crop. Fails if a test id also appears among the
/// training ids.
pub fn evaluate_classifier(model: &SoftmaxModel, test: &[LabeledCrop], train_ids: &[u64]) -> Result<ClassifierReport> {
    model.validate()?;
    let train: BTreeSet<u64> = train_ids.iter().copied().collect();
    if let Some(c) = test.iter().find(|c| train.contains(&c.id)) {
        return Err(invalid!("test crop {} is also in the training split", c.id));
    }
    let examples = featurize(test, &model.features)?;
    let mut confusion = ConfusionMatrix::new(model.classes.clone());
    for ex in &examples {
        let p = model.forward(&ex.features)?;
        let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        confusion.add(ex.label, model.classes[best])?;
    }
    let recall = model.classes.iter().copied().zip(confusion.recall()).collect();
    Ok(ClassifierReport { n: test.len(), accuracy: confusion.accuracy(), recall, confusion })
}
