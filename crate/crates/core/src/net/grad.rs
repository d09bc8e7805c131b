//! Pinball loss, backpropagation and finite-difference gradient checks.

use super::dense::{DenseNet, Layer, Workspace};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};

/// Examples per gradient chunk. Chunk partial sums are reduced in chunk
/// order, so gradients are identical in sequential and parallel mode.
pub const GRAD_CHUNK: usize = 32;

/// Quantile (pinball) loss of `prediction` for `target` at level `tau`.
pub fn pinball_loss(prediction: f64, target: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::domain(format!("tau must lie in (0,1), got {tau}")));
    }
    Ok(pinball(target - prediction, tau))
}

#[inline]
pub(crate) fn pinball(e: f64, tau: f64) -> f64 {
    if e >= 0.0 {
        tau * e
    } else {
        (tau - 1.0) * e
    }
}

/// d loss / d prediction; the subgradient at e = 0 follows the e >= 0 branch.
#[inline]
fn pinball_grad(e: f64, tau: f64) -> f64 {
    if e >= 0.0 {
        -tau
    } else {
        1.0 - tau
    }
}

/// One supervised example: full network input, target and quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: f64,
    pub tau: f64,
}

impl Example {
    pub fn new(input: Vec<f64>, target: f64, tau: f64) -> Self {
        Self { input, target, tau }
    }
}

/// Parameter-shaped gradient (or moment) buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| Layer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub(crate) fn matches(&self, net: &DenseNet) -> bool {
        self.layers.len() == net.layers().len()
            && self
                .layers
                .iter()
                .zip(net.layers())
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len())
    }

    fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

/// Backpropagates one example into `grads`, returning its loss.
fn accumulate(
    net: &DenseNet,
    input: &[f64],
    target: f64,
    tau: f64,
    ws: &mut Workspace,
    grads: &mut Gradients,
) -> f64 {
    let pred = net.forward_ws(input, ws);
    let e = target - pred;
    let layers = net.layers();
    let n = layers.len();
    ws.delta[0] = pinball_grad(e, tau);
    for l in (0..n).rev() {
        let layer = &layers[l];
        let g = &mut grads.layers[l];
        let src: &[f64] = if l == 0 { input } else { &ws.acts[l] };
        for i in 0..layer.n_out {
            let d = ws.delta[i];
            if d == 0.0 {
                continue;
            }
            g.biases[i] += d;
            let row = &mut g.weights[i * layer.n_in..(i + 1) * layer.n_in];
            for (w, x) in row.iter_mut().zip(src) {
                *w += d * x;
            }
        }
        if l > 0 {
            let pre = &ws.pre[l - 1];
            for j in 0..layer.n_in {
                ws.delta_next[j] = 0.0;
            }
            for i in 0..layer.n_out {
                let d = ws.delta[i];
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.n_in..(i + 1) * layer.n_in];
                for (acc, w) in ws.delta_next[..layer.n_in].iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            for j in 0..layer.n_in {
                // ReLU'(0) = 0
                let active = pre[j] > 0.0;
                ws.delta[j] = if active { ws.delta_next[j] } else { 0.0 };
            }
        }
    }
    pinball(e, tau)
}

/// Mean pinball loss and its gradient over rows `0..n` supplied by `row`.
pub(crate) fn batch_gradient<'a, F>(net: &DenseNet, n: usize, row: F, mode: ExecMode) -> (f64, Gradients)
where
    F: Fn(usize) -> (&'a [f64], f64, f64) + Sync + Send,
{
    let n_chunks = n.div_ceil(GRAD_CHUNK);
    let partials = exec::map_indexed(mode, n_chunks, |c| {
        let mut ws = Workspace::new(net);
        let mut g = Gradients::zeros_like(net);
        let mut loss = 0.0;
        for i in c * GRAD_CHUNK..((c + 1) * GRAD_CHUNK).min(n) {
            let (x, t, tau) = row(i);
            loss += accumulate(net, x, t, tau, &mut ws, &mut g);
        }
        (loss, g)
    });
    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        total.add_assign(g);
    }
    let inv = 1.0 / n as f64;
    total.scale(inv);
    (loss * inv, total)
}

fn check_batch(net: &DenseNet, batch: &[Example]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::arg("empty batch"));
    }
    for ex in batch {
        if ex.input.len() != net.input_dim() {
            return Err(Error::Shape {
                expected: net.input_dim(),
                got: ex.input.len(),
            });
        }
        if !(ex.tau > 0.0 && ex.tau < 1.0) {
            return Err(Error::domain(format!("tau must lie in (0,1), got {}", ex.tau)));
        }
    }
    Ok(())
}

/// Mean pinball loss of `net` over `batch`.
pub fn batch_loss(net: &DenseNet, batch: &[Example]) -> Result<f64> {
    check_batch(net, batch)?;
    let mut ws = Workspace::new(net);
    let total: f64 = batch
        .iter()
        .map(|ex| pinball(ex.target - net.forward_ws(&ex.input, &mut ws), ex.tau))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Mean pinball-loss gradient with respect to every parameter.
pub fn backward(net: &DenseNet, batch: &[Example]) -> Result<Gradients> {
    backward_with(net, batch, ExecMode::default()).map(|(_, g)| g)
}

/// As [`backward`], also returning the mean loss, with an explicit execution mode.
pub fn backward_with(net: &DenseNet, batch: &[Example], mode: ExecMode) -> Result<(f64, Gradients)> {
    check_batch(net, batch)?;
    Ok(batch_gradient(
        net,
        batch.len(),
        |i| (batch[i].input.as_slice(), batch[i].target, batch[i].tau),
        mode,
    ))
}

/// Result of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index (see [`DenseNet::params_flat`]) of the worst parameter.
    pub worst_param: Option<usize>,
    /// Smallest |pre-activation| or |residual| seen in the batch.
    pub min_kink_distance: f64,
    /// The finite-difference stencil may straddle a ReLU or pinball kink.
    pub kink_detected: bool,
}

/// Gradients below this magnitude are compared on an absolute scale.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Compares analytic gradients with central differences over all parameters.
pub fn grad_check(net: &DenseNet, batch: &[Example], eps: f64) -> Result<GradCheckReport> {
    let all: Vec<usize> = (0..net.num_params()).collect();
    grad_check_params(net, batch, eps, &all)
}

/// Gradient check restricted to the listed flat parameter indices.
/// An empty list checks nothing and reports zero error.
pub fn grad_check_params(
    net: &DenseNet,
    batch: &[Example],
    eps: f64,
    params: &[usize],
) -> Result<GradCheckReport> {
    if !(eps > 0.0) {
        return Err(Error::arg(format!("finite-difference step must be positive, got {eps}")));
    }
    let analytic = backward_with(net, batch, ExecMode::Sequential)?.1.flat();
    if let Some(&bad) = params.iter().find(|&&p| p >= analytic.len()) {
        return Err(Error::arg(format!("parameter index {bad} out of range")));
    }

    let mut ws = Workspace::new(net);
    let mut min_dist = f64::INFINITY;
    let mut max_act: f64 = 0.0;
    for ex in batch {
        let pred = net.forward_ws(&ex.input, &mut ws);
        min_dist = min_dist.min((ex.target - pred).abs());
        for z in ws.pre[..ws.pre.len() - 1].iter().flatten() {
            min_dist = min_dist.min(z.abs());
        }
        for v in ex.input.iter().chain(ws.acts.iter().flatten()) {
            max_act = max_act.max(v.abs());
        }
    }

    let mut probe = net.clone();
    let mut worst = 0.0;
    let mut worst_param = None;
    for &p in params {
        let orig = *probe.param_mut(p);
        *probe.param_mut(p) = orig + eps;
        let up = batch_loss(&probe, batch)?;
        *probe.param_mut(p) = orig - eps;
        let down = batch_loss(&probe, batch)?;
        *probe.param_mut(p) = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic[p];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if worst_param.is_none() || rel > worst {
            worst = rel;
            worst_param = Some(p);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        worst_param,
        min_kink_distance: min_dist,
        kink_detected: min_dist <= 10.0 * eps * (1.0 + max_act),
    })
}
