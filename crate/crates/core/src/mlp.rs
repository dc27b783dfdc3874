//! Fully connected tanh network trained by per-sample backpropagation.
//!
//! Targets use `+1` for the true class and `-1` elsewhere. The per-sample
//! loss is the mean squared error over output components, and the dataset
//! MSE averages that over samples.

use std::io::Write;

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::fmt_real;

/// Layer sizes from input to output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    input: usize,
    hidden: Vec<usize>,
    output: usize,
}

impl Topology {
    pub fn new(input: usize, hidden: Vec<usize>, output: usize) -> Result<Self> {
        if input == 0 || output == 0 {
            return Err(Error::BadTopology(format!(
                "input and output sizes must be >= 1 (got {input} and {output})"
            )));
        }
        if let Some(i) = hidden.iter().position(|&h| h == 0) {
            return Err(Error::BadTopology(format!("hidden layer {i} has size 0")));
        }
        Ok(Self {
            input,
            hidden,
            output,
        })
    }

    /// The usual three-layer shape `input-hidden-output`.
    pub fn three_layer(input: usize, hidden: usize, output: usize) -> Result<Self> {
        Self::new(input, vec![hidden], output)
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn output(&self) -> usize {
        self.output
    }

    /// All sizes, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(self.input);
        s.extend_from_slice(&self.hidden);
        s.push(self.output);
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.sizes().windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sizes().iter().map(usize::to_string).collect();
        f.write_str(&parts.join("-"))
    }
}

/// Dense layer; `weights` is row-major `[fan_out x fan_in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Layer {
    pub fn new(fan_in: usize, fan_out: usize, weights: Vec<f64>, biases: Vec<f64>) -> Result<Self> {
        if weights.len() != fan_in * fan_out {
            return Err(Error::DimensionMismatch {
                expected: fan_in * fan_out,
                found: weights.len(),
            });
        }
        if biases.len() != fan_out {
            return Err(Error::DimensionMismatch {
                expected: fan_out,
                found: biases.len(),
            });
        }
        Ok(Self {
            fan_in,
            fan_out,
            weights,
            biases,
        })
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }

    fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.fan_in).zip(&self.biases))
        {
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            *o = (z + b).tanh();
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    topology: Topology,
    layers: Vec<Layer>,
}

impl MlpNetwork {
    /// Assemble from explicit layers; their shapes must chain and match `topology`.
    pub fn from_layers(topology: Topology, layers: Vec<Layer>) -> Result<Self> {
        let sizes = topology.sizes();
        if layers.len() != sizes.len() - 1 {
            return Err(Error::BadTopology(format!(
                "{} layers for topology {topology}",
                layers.len()
            )));
        }
        for (l, w) in layers.iter().zip(sizes.windows(2)) {
            if l.fan_in != w[0] || l.fan_out != w[1] {
                return Err(Error::BadTopology(format!(
                    "layer {}x{} does not fit topology {topology}",
                    l.fan_out, l.fan_in
                )));
            }
        }
        Ok(Self { topology, layers })
    }

    /// Every weight and bias zero.
    pub fn zeros(topology: Topology) -> Self {
        let layers = topology
            .sizes()
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Self { topology, layers }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.topology.input
    }

    pub fn output_size(&self) -> usize {
        self.topology.output
    }

    /// Flattened parameters in layer order: weights (row-major) then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.topology.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if index < nw {
                return &mut l.weights[index];
            }
            index -= nw;
            if index < l.biases.len() {
                return &mut l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    fn max_abs_parameter(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
            .fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut scratch = Scratch::new(self);
        self.forward_scratch(input, &mut scratch);
        Ok(scratch.activations.last().expect("at least one layer").clone())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.topology.input {
            return Err(Error::DimensionMismatch {
                expected: self.topology.input,
                found: input.len(),
            });
        }
        Ok(())
    }

    fn forward_scratch(&self, input: &[f64], scratch: &mut Scratch) {
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = scratch.activations.split_at_mut(i);
            let prev = if i == 0 { input } else { &done[i - 1] };
            layer.forward_into(prev, &mut rest[0]);
        }
    }

    /// Analytic gradient of the per-sample loss, flattened like [`parameters`](Self::parameters).
    pub fn gradient(&self, sample: &Sample) -> Result<Vec<f64>> {
        self.check_sample(sample)?;
        let mut scratch = Scratch::new(self);
        self.forward_scratch(&sample.input, &mut scratch);
        self.backprop(&sample.input, &sample.target, &mut scratch);
        let mut g = Vec::with_capacity(self.topology.parameter_count());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = if i == 0 {
                &sample.input[..]
            } else {
                &scratch.activations[i - 1][..]
            };
            let delta = &scratch.deltas[i];
            for d in delta {
                g.extend(prev.iter().map(|x| d * x));
            }
            g.extend_from_slice(delta);
            debug_assert_eq!(delta.len(), layer.fan_out);
        }
        Ok(g)
    }

    fn check_sample(&self, sample: &Sample) -> Result<()> {
        self.check_input(&sample.input)?;
        if sample.target.len() != self.topology.output {
            return Err(Error::DimensionMismatch {
                expected: self.topology.output,
                found: sample.target.len(),
            });
        }
        Ok(())
    }

    // Fills scratch.deltas with dL/dz for every layer (z = pre-activation).
    fn backprop(&self, _input: &[f64], target: &[f64], scratch: &mut Scratch) {
        let last = self.layers.len() - 1;
        let k = target.len() as f64;
        {
            let out = &scratch.activations[last];
            let delta = &mut scratch.deltas[last];
            for ((d, &o), &t) in delta.iter_mut().zip(out).zip(target) {
                *d = 2.0 * (o - t) / k * (1.0 - o * o);
            }
        }
        for i in (0..last).rev() {
            let next = &self.layers[i + 1];
            let (lo, hi) = scratch.deltas.split_at_mut(i + 1);
            let delta = &mut lo[i];
            let next_delta = &hi[0];
            let act = &scratch.activations[i];
            delta.iter_mut().for_each(|d| *d = 0.0);
            for (row, nd) in next.weights.chunks_exact(next.fan_in).zip(next_delta) {
                for (d, w) in delta.iter_mut().zip(row) {
                    *d += w * nd;
                }
            }
            for (d, a) in delta.iter_mut().zip(act) {
                *d *= 1.0 - a * a;
            }
        }
    }

    // One SGD step on a single sample; returns the pre-update per-sample loss.
    fn sgd_step(&mut self, sample: &Sample, lr: f64, scratch: &mut Scratch) -> f64 {
        self.forward_scratch(&sample.input, scratch);
        let loss = sample_loss(scratch.activations.last().expect("output"), &sample.target);
        self.backprop(&sample.input, &sample.target, scratch);
        for i in 0..self.layers.len() {
            let prev = if i == 0 {
                &sample.input[..]
            } else {
                &scratch.activations[i - 1][..]
            };
            let layer = &mut self.layers[i];
            let fan_in = layer.fan_in;
            for (j, &d) in scratch.deltas[i].iter().enumerate() {
                let step = lr * d;
                for (w, x) in layer.weights[j * fan_in..(j + 1) * fan_in].iter_mut().zip(prev) {
                    *w -= step * x;
                }
                layer.biases[j] -= step;
            }
        }
        loss
    }
}

struct Scratch {
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(net: &MlpNetwork) -> Self {
        let activations: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.fan_out]).collect();
        Self {
            deltas: activations.clone(),
            activations,
        }
    }
}

fn sample_loss(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / out.len() as f64
}

/// Input vector paired with its target output vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }

    /// Target `+1` at `class`, `-1` elsewhere.
    pub fn labelled(input: Vec<f64>, class: usize, classes: usize) -> Self {
        Self {
            input,
            target: class_target(class, classes),
        }
    }
}

pub fn class_target(class: usize, classes: usize) -> Vec<f64> {
    (0..classes).map(|i| if i == class { 1.0 } else { -1.0 }).collect()
}

/// Uniform weights in `±1/√fan_in`, zero biases, from a seeded ChaCha stream.
pub fn init_network(topology: &Topology, seed: u64) -> Result<MlpNetwork> {
    let topology = Topology::new(topology.input, topology.hidden.clone(), topology.output)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for w in topology.sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let weights = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        layers.push(Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out])?);
    }
    MlpNetwork::from_layers(topology, layers)
}

pub fn forward(net: &MlpNetwork, input: &[f64]) -> Result<Vec<f64>> {
    net.forward(input)
}

/// Mean over samples and output components of the squared error.
pub fn mse(net: &MlpNetwork, dataset: &[Sample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut scratch = Scratch::new(net);
    let mut total = 0.0;
    for s in dataset {
        net.check_sample(s)?;
        net.forward_scratch(&s.input, &mut scratch);
        total += sample_loss(scratch.activations.last().expect("output"), &s.target);
    }
    Ok(total / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub target_mse: f64,
    /// Maximum number of epochs (one epoch = one pass over the training set).
    pub max_iterations: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Any parameter growing past this magnitude counts as divergence.
    pub divergence_limit: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            target_mse: 0.01,
            max_iterations: 32_000,
            seed: 0,
            shuffle: true,
            divergence_limit: 1e4,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.target_mse > 0.0) {
            return Err(Error::Config(format!(
                "target MSE must be positive, got {}",
                self.target_mse
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub final_mse: f64,
    pub iterations_run: usize,
    pub converged: bool,
    /// `(epoch, mse)` after every epoch; epoch 0 is the untrained network.
    pub mse_trace: Vec<(usize, f64)>,
}

impl TrainReport {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,mse")?;
        for (e, m) in &self.mse_trace {
            writeln!(out, "{e},{}", fmt_real(*m))?;
        }
        Ok(())
    }
}

/// Per-sample SGD until the epoch MSE reaches `target_mse` or the epoch
/// budget runs out.
pub fn train(net: &mut MlpNetwork, dataset: &[Sample], config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let initial = mse(net, dataset)?;
    let mut trace = vec![(0, initial)];
    if initial <= config.target_mse {
        return Ok(TrainReport {
            final_mse: initial,
            iterations_run: 0,
            converged: true,
            mse_trace: trace,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut scratch = Scratch::new(net);
    let mut current = initial;
    for epoch in 1..=config.max_iterations {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            net.sgd_step(&dataset[i], config.learning_rate, &mut scratch);
        }
        current = mse(net, dataset)?;
        trace.push((epoch, current));
        if !current.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                what: format!("epoch MSE is {current}"),
            });
        }
        let largest = net.max_abs_parameter();
        if !(largest <= config.divergence_limit) {
            return Err(Error::NonFinite {
                epoch,
                what: format!(
                    "parameter magnitude {largest:e} exceeds {:e}",
                    config.divergence_limit
                ),
            });
        }
        if current <= config.target_mse {
            return Ok(TrainReport {
                final_mse: current,
                iterations_run: epoch,
                converged: true,
                mse_trace: trace,
            });
        }
    }
    Ok(TrainReport {
        final_mse: current,
        iterations_run: config.max_iterations,
        converged: false,
        mse_trace: trace,
    })
}

/// Central finite-difference step.
pub const GRAD_CHECK_STEP: f64 = 1e-5;

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute. Sized to the f64 round-off of a 1e-5 central
/// difference.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Largest relative discrepancy between backprop and central differences
/// over every parameter.
pub fn gradient_check(net: &MlpNetwork, sample: &Sample) -> Result<f64> {
    let analytic = net.gradient(sample)?;
    let mut probe = net.clone();
    let h = GRAD_CHECK_STEP;
    let loss = |n: &MlpNetwork| -> f64 {
        let out = n.forward(&sample.input).expect("checked");
        sample_loss(&out, &sample.target)
    };
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = original + h;
        let up = loss(&probe);
        *probe.parameter_mut(i) = original - h;
        let down = loss(&probe);
        *probe.parameter_mut(i) = original;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Output `k` over a grid on inputs `i` and `j`, all other inputs held at a baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub axis: Vec<f64>,
    /// `values[xi][yi]` is the output at `(axis[xi], axis[yi])`.
    pub values: Vec<Vec<f64>>,
}

impl Surface {
    /// Fraction of grid points where the output magnitude exceeds `level`.
    pub fn saturation_fraction(&self, level: f64) -> f64 {
        let total = self.axis.len() * self.axis.len();
        let hits = self
            .values
            .iter()
            .flatten()
            .filter(|z| z.abs() > level)
            .count();
        hits as f64 / total as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x_index,y_index,x_value,y_value,z_value")?;
        for (xi, row) in self.values.iter().enumerate() {
            for (yi, z) in row.iter().enumerate() {
                writeln!(
                    out,
                    "{xi},{yi},{},{},{}",
                    fmt_real(self.axis[xi]),
                    fmt_real(self.axis[yi]),
                    fmt_real(*z)
                )?;
            }
        }
        Ok(())
    }
}

pub fn export_surface(
    net: &MlpNetwork,
    input_i: usize,
    input_j: usize,
    output_k: usize,
    grid: usize,
    baseline: &[f64],
) -> Result<Surface> {
    let n_in = net.input_size();
    for index in [input_i, input_j] {
        if index >= n_in {
            return Err(Error::IndexOutOfRange { index, limit: n_in });
        }
    }
    if output_k >= net.output_size() {
        return Err(Error::IndexOutOfRange {
            index: output_k,
            limit: net.output_size(),
        });
    }
    if grid < 2 {
        return Err(Error::Config(format!("grid must be >= 2, got {grid}")));
    }
    net.check_input(baseline)?;
    let axis: Vec<f64> = (0..grid)
        .map(|s| -1.0 + 2.0 * s as f64 / (grid - 1) as f64)
        .collect();
    let mut scratch = Scratch::new(net);
    let mut x = baseline.to_vec();
    let mut values = Vec::with_capacity(grid);
    for &xv in &axis {
        let mut row = Vec::with_capacity(grid);
        for &yv in &axis {
            x[input_i] = xv;
            x[input_j] = yv;
            net.forward_scratch(&x, &mut scratch);
            row.push(scratch.activations.last().expect("output")[output_k]);
        }
        values.push(row);
    }
    Ok(Surface { axis, values })
}
