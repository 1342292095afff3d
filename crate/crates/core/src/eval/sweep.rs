use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classify::{predict, SoftmaxModel};
use crate::error::Result;
use crate::perturb::{apply, SweepGrid};
use crate::synth::LabeledCrop;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub width: usize,
    pub height: usize,
    pub degradation: String,
    pub family: String,
    pub param: f64,
    pub accuracy: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub degrade_first: bool,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn get(&self, size: (usize, usize), degradation: &str) -> Option<&SweepCell> {
        self.cells.iter().find(|c| (c.width, c.height) == size && c.degradation == degradation)
    }

    /// Long format: `size,degradation,param,accuracy,n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("size,degradation,param,accuracy,n\n");
        for c in &self.cells {
            s.push_str(&format!("{}x{},{},{},{:.6},{}\n", c.width, c.height, c.degradation, c.param, c.accuracy, c.n));
        }
        s
    }

    /// Wide format for plotting: one row per degradation, one column per size.
    pub fn to_table_csv(&self) -> String {
        let mut sizes: Vec<(usize, usize)> = Vec::new();
        let mut names: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !sizes.contains(&(c.width, c.height)) {
                sizes.push((c.width, c.height));
            }
            if !names.contains(&c.degradation.as_str()) {
                names.push(&c.degradation);
            }
        }
        let mut s = String::from("degradation");
        for (w, h) in &sizes {
            s.push_str(&format!(",{w}x{h}"));
        }
        s.push('\n');
        for name in names {
            s.push_str(name);
            for &size in &sizes {
                match self.get(size, name) {
                    Some(c) => s.push_str(&format!(",{:.6}", c.accuracy)),
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Accuracy of `model` on `test` for every cell of `grid`; by default each
/// crop is resized to the cell size and then degraded.
pub fn run_sweep(model: &SoftmaxModel, test: &[LabeledCrop], grid: &SweepGrid, degrade_first: bool) -> Result<SweepResult> {
    grid.validate()?;
    model.validate()?;
    let mut cells = Vec::with_capacity(grid.cell_count());
    for ((w, h), d, spec) in grid.cells(degrade_first) {
        let mut hits = 0;
        for c in test {
            let (label, _) = predict(model, &apply(&spec, &c.image)?)?;
            if label == c.label {
                hits += 1;
            }
        }
        cells.push(SweepCell {
            width: w,
            height: h,
            degradation: d.name.clone(),
            family: String::from(d.spec.family()),
            param: d.spec.param(),
            accuracy: if test.is_empty() { 0.0 } else { hits as f64 / test.len() as f64 },
            n: test.len(),
        });
    }
    Ok(SweepResult { degrade_first, cells })
}
