//! Final decision logic: pick the strongest network output the way a
//! sequential compare chain does, keeping the first maximum on ties.

use std::io::Write;

use crate::error::{Error, Result};
use crate::features::fmt_real;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub outputs: Vec<f64>,
    pub winner: usize,
    /// Winner activation minus runner-up activation.
    pub margin: f64,
    pub class_name: String,
    /// Set only when a minimum-margin reject threshold is configured and not met.
    pub rejected: bool,
}

/// Compare chain over the outputs. The memorised maximum only moves on a
/// strictly greater value.
pub fn decide(outputs: &[f64], class_names: &[String]) -> Result<ClassificationResult> {
    DecisionLogic::default().evaluate(outputs, class_names)
}

/// Decision logic with an optional reject threshold (off by default).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DecisionLogic {
    pub min_margin: Option<f64>,
}

impl DecisionLogic {
    pub fn evaluate(&self, outputs: &[f64], class_names: &[String]) -> Result<ClassificationResult> {
        if outputs.is_empty() {
            return Err(Error::EmptyOutputs);
        }
        if outputs.len() != class_names.len() {
            return Err(Error::LengthMismatch {
                outputs: outputs.len(),
                names: class_names.len(),
            });
        }
        let mut winner = 0;
        let mut max = outputs[0];
        for (i, &o) in outputs.iter().enumerate().skip(1) {
            if o > max {
                max = o;
                winner = i;
            }
        }
        let runner_up = outputs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != winner)
            .map(|(_, &o)| o)
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = if outputs.len() == 1 { 0.0 } else { max - runner_up };
        let rejected = self.min_margin.is_some_and(|m| margin < m);
        Ok(ClassificationResult {
            outputs: outputs.to_vec(),
            winner,
            margin,
            class_name: class_names[winner].clone(),
            rejected,
        })
    }
}

/// Correct decisions divided by the number of decisions.
pub fn accuracy(results: &[(ClassificationResult, usize)]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let correct = results.iter().filter(|(r, truth)| r.winner == *truth && !r.rejected).count();
    Ok(correct as f64 / results.len() as f64)
}

/// `k x k` counts; rows are true classes, columns are predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Fraction of class `c` samples classified as `c`.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let row: usize = self.counts[c].iter().sum();
        (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
    }
}

/// One row of the per-sample results export.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sample_id: String,
    pub true_class: usize,
    pub winner: usize,
    pub margin: f64,
}

impl ResultRow {
    pub fn correct(&self) -> bool {
        self.true_class == self.winner
    }
}

pub const RESULTS_HEADER: &str = "sample_id,true_class,winner,margin,correct";

pub fn write_results_csv<W: Write>(mut out: W, rows: &[ResultRow]) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.sample_id,
            r.true_class,
            r.winner,
            fmt_real(r.margin),
            u8::from(r.correct())
        )?;
    }
    Ok(())
}
