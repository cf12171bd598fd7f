//! Fully connected ReLU network with hand-written backpropagation.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`out x in`, row-major) followed by the bias (`out`).

use crate::matrix_io::DenseMatrix;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Mean squared error over the output units.
    RegressionMse,
    /// Softmax cross-entropy against a target distribution (usually one-hot).
    ClassificationCrossentropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    task: Task,
}

/// Per-sample buffers reused across forward/backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// `acts[0]` is the input; `acts[l]` the post-activation output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    /// `widths = [input, hidden..., output]`; needs at least input and output.
    pub fn new(widths: Vec<usize>, task: Task) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0), "bad layer widths {widths:?}");
        Self { widths, task }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases alike.
    pub fn init_params(&self, rng: &mut SplitMix64) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for w in self.widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * w[0] + w[1] {
                p.push(rng.uniform(-bound, bound));
            }
        }
        p
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.widths.iter().map(|&w| vec![0.0; w]).collect(),
            pre: self.widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
            delta: Vec::new(),
            delta_prev: Vec::new(),
        }
    }

    /// Network output for one input; the result is left in the workspace.
    pub fn forward<'w>(&self, params: &[f64], x: &[f64], ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(params.len(), self.n_params());
        ws.acts[0].copy_from_slice(x);
        let mut offset = 0;
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            for o in 0..fan_out {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                let mut z = bias[o];
                for (w, a) in row.iter().zip(input) {
                    z += w * a;
                }
                ws.pre[l][o] = z;
                out[o] = if l == last { z } else { z.max(0.0) };
            }
        }
        &ws.acts[self.n_layers()]
    }

    /// Loss of one output against its target; writes `dloss/doutput` into `grad` when given.
    fn output_loss(&self, y: &[f64], target: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        match self.task {
            Task::RegressionMse => {
                let k = y.len() as f64;
                let loss = y.iter().zip(target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / k;
                if let Some(g) = grad {
                    g.clear();
                    g.extend(y.iter().zip(target).map(|(a, t)| 2.0 * (a - t) / k));
                }
                loss
            }
            Task::ClassificationCrossentropy => {
                let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = y.iter().map(|v| (v - max).exp()).sum();
                let lse = max + sum_exp.ln();
                let mass: f64 = target.iter().sum();
                let loss = lse * mass - y.iter().zip(target).map(|(a, t)| a * t).sum::<f64>();
                if let Some(g) = grad {
                    g.clear();
                    g.extend(y.iter().zip(target).map(|(a, t)| mass * (a - lse).exp() - t));
                }
                loss
            }
        }
    }

    pub fn sample_loss(&self, params: &[f64], x: &[f64], target: &[f64], ws: &mut Workspace) -> f64 {
        let y = self.forward(params, x, ws).to_vec();
        self.output_loss(&y, target, None)
    }

    /// Mean loss over `rows` of the dataset and its gradient (overwrites `grad`).
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        features: &DenseMatrix,
        targets: &DenseMatrix,
        rows: &[usize],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut out_grad = Vec::with_capacity(self.output_dim());
        for &r in rows {
            self.forward(params, features.row(r), ws);
            let y = ws.acts[self.n_layers()].clone();
            total += self.output_loss(&y, targets.row(r), Some(&mut out_grad));
            self.backward(params, &out_grad, grad, ws);
        }
        let scale = 1.0 / rows.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        total * scale
    }

    /// Accumulates the parameter gradient for the sample whose forward pass is in `ws`.
    fn backward(&self, params: &[f64], out_grad: &[f64], grad: &mut [f64], ws: &mut Workspace) {
        let mut offsets = Vec::with_capacity(self.n_layers());
        let mut off = 0;
        for w in self.widths.windows(2) {
            offsets.push(off);
            off += w[1] * w[0] + w[1];
        }
        ws.delta.clear();
        ws.delta.extend_from_slice(out_grad);
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w_off = offsets[l];
            let b_off = w_off + fan_in * fan_out;
            let input = &ws.acts[l];
            for o in 0..fan_out {
                let d = ws.delta[o];
                if d == 0.0 {
                    continue;
                }
                let g_row = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, a) in g_row.iter_mut().zip(input) {
                    *g += d * a;
                }
                grad[b_off + o] += d;
            }
            if l == 0 {
                break;
            }
            ws.delta_prev.clear();
            ws.delta_prev.resize(fan_in, 0.0);
            let weights = &params[w_off..b_off];
            for o in 0..fan_out {
                let d = ws.delta[o];
                if d == 0.0 {
                    continue;
                }
                for (acc, w) in ws.delta_prev.iter_mut().zip(&weights[o * fan_in..(o + 1) * fan_in]) {
                    *acc += d * w;
                }
            }
            // ReLU derivative of the previous layer (taken as 0 at the kink)
            for (acc, z) in ws.delta_prev.iter_mut().zip(&ws.pre[l - 1]) {
                if *z <= 0.0 {
                    *acc = 0.0;
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        }
    }
}
