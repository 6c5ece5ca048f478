use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::FieldNetwork;
use super::layer::Weights;
use super::prune::{apply_plan, plan, pruned_rank, pruned_width, top_k, PrunePlan, PruneSpec};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// Learning rate reached at the last step by exponential decay.
    #[serde(default)]
    pub final_lr: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        Self { lr, final_lr: None, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn with_decay(mut self, final_lr: f64) -> Self {
        self.final_lr = Some(final_lr);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.lr) || !self.final_lr.is_none_or(ok) || !ok(self.eps) {
            return Err(Error::config("learning rates and eps must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("Adam betas must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate at `step` of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.final_lr {
            Some(f) if total > 1 => self.lr * (f / self.lr).powf(step as f64 / (total - 1) as f64),
            _ => self.lr,
        }
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        let c = &self.config;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t);
        let b2t = 1.0 - c.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * grad[k];
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / b1t) / ((self.v[k] / b2t).sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Minibatch size; `None` trains on the full set every step.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
    pub seed: u64,
    #[serde(default)]
    pub prune: Option<PruneSpec>,
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f64) -> Self {
        Self { epochs, batch_size: None, adam: AdamConfig::new(lr), seed: 0, prune: None }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch_size = Some(batch);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_prune(mut self, spec: PruneSpec) -> Self {
        self.prune = Some(spec);
        self
    }

    pub fn with_adam(mut self, adam: AdamConfig) -> Self {
        self.adam = adam;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean training loss of every epoch.
    pub loss_trace: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Prune plan reaching `rate·k/K` of the original widths at the `k`-th of
/// `K` scheduled epochs.
fn scheduled_plan(net: &FieldNetwork, original: &[(usize, Option<usize>)], fraction: f64) -> Result<PrunePlan> {
    let mut p = plan(net, 0.0)?;
    for (i, node) in net.nodes.iter().enumerate() {
        let (w0, r0) = original[i];
        let is_head = net.heads.iter().any(|(_, h)| *h == i);
        if !is_head {
            let keep = pruned_width(w0, fraction).min(node.out_dim());
            let norms: Vec<f64> = node.weights.effective().outer_iter().map(|r| r.dot(&r).sqrt()).collect();
            p.neurons[i] = top_k(&norms, keep);
        }
        if let (Weights::LowRank { u, v }, Some(r0)) = (&node.weights, r0) {
            let keep = pruned_rank(r0, fraction).min(u.ncols());
            let scores: Vec<f64> = (0..u.ncols())
                .map(|k| u.column(k).dot(&u.column(k)).sqrt() * v.row(k).dot(&v.row(k)).sqrt())
                .collect();
            p.components[i] = Some(top_k(&scores, keep));
        }
    }
    Ok(p)
}

/// Minimizes `mean((head(x) − y)²)` with Adam.
///
/// Epochs visit the samples in a seeded random order. Scheduled pruning
/// shrinks the network in place and restarts the optimizer state.
pub fn train_regression(
    net: &mut FieldNetwork,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    head: &str,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.adam.validate()?;
    let head_idx = net.heads.iter().position(|(n, _)| n == head).ok_or_else(|| Error::config(format!("no head named {head}")))?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::data("empty training set"));
    }
    if y.nrows() != n || y.ncols() != net.nodes[net.heads[head_idx].1].out_dim() {
        return Err(Error::dim("targets do not match samples and head width"));
    }
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let steps_per_epoch = n.div_ceil(batch);
    let total = cfg.epochs * steps_per_epoch;
    let mut schedule: Vec<usize> = cfg.prune.as_ref().map(|p| p.schedule.clone()).unwrap_or_default();
    if let Some(p) = &cfg.prune {
        p.validate()?;
        schedule.sort_unstable();
        schedule.dedup();
        if schedule.is_empty() {
            schedule.push(0);
        }
    }
    let original: Vec<(usize, Option<usize>)> = net.nodes.iter().map(|n| (n.out_dim(), n.weights.rank())).collect();
    let mut adam = Adam::new(cfg.adam.clone(), net.param_count());
    let mut r = rng::stream(cfg.seed, 0x7472);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    let mut params = net.params();
    for epoch in 0..cfg.epochs {
        if let Some(k) = schedule.iter().position(|&e| e == epoch) {
            let rate = cfg.prune.as_ref().expect("prune spec").rate * (k + 1) as f64 / schedule.len() as f64;
            net.set_params(&params)?;
            let p = scheduled_plan(net, &original, rate)?;
            *net = apply_plan(net, &p);
            params = net.params();
            adam = Adam::new(cfg.adam.clone(), params.len());
        }
        if batch < n {
            order.shuffle(&mut r);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            net.set_params(&params)?;
            let (xb, yb) = if batch < n { (x.select(Axis(0), chunk), y.select(Axis(0), chunk)) } else { (x.to_owned(), y.to_owned()) };
            let cache = net.forward_cached(xb.view())?;
            let pred = cache.head(net, head)?;
            let diff = pred - &yb;
            let loss = diff.mapv(|d| d * d).mean().expect("non-empty");
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training diverged at epoch {epoch} (loss {loss})")));
            }
            epoch_loss += loss * chunk.len() as f64;
            let scale = 2.0 / diff.len() as f64;
            let mut grads: Vec<Option<Array2<f64>>> = vec![None; net.heads.len()];
            grads[head_idx] = Some(diff * scale);
            let g = net.backward(&cache, &grads)?;
            adam.step(&mut params, &g, cfg.adam.lr_at(step, total));
            step += 1;
        }
        trace.push(epoch_loss / n as f64);
    }
    net.set_params(&params)?;
    Ok(TrainReport { loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::super::arch::Architecture;
    use super::super::layer::Activation;
    use super::*;
    use ndarray::Array2;

    #[test]
    fn constant_fit_with_one_neuron() {
        let arch = Architecture::Mlp { width: 1, hidden_layers: 0, rank: None, out_dim: 1, out_activation: Activation::Identity };
        let mut net = arch.build(&[1], &mut rng::stream(0, 0)).unwrap();
        let x = Array2::from_shape_fn((16, 1), |(i, _)| i as f64 / 16.0);
        let y = Array2::from_elem((16, 1), 0.5);
        let rep = train_regression(&mut net, x.view(), y.view(), "out", &TrainConfig::new(2000, 1e-2)).unwrap();
        assert!(rep.final_loss() < 1e-8, "{}", rep.final_loss());
    }

    #[test]
    fn deterministic_loss_traces() {
        let arch = Architecture::Ct { hidden: 16, rank: 4, omega0: 30.0, out_dim: 1 };
        let x = Array2::from_shape_fn((64, 2), |(i, j)| ((i * 7 + j * 3) % 64) as f64 / 64.0);
        let y = x.map_axis(Axis(1), |r| (r[0] * 6.0).sin() * r[1]).insert_axis(Axis(1));
        let cfg = TrainConfig::new(20, 1e-3).with_batch(16).with_seed(4);
        let run = || {
            let mut net = arch.build(&[2], &mut rng::stream(1, 0)).unwrap();
            train_regression(&mut net, x.view(), y.view(), "value", &cfg).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scheduled_pruning_reaches_target_widths() {
        let arch = Architecture::Ct { hidden: 20, rank: 10, omega0: 30.0, out_dim: 1 };
        let mut net = arch.build(&[2], &mut rng::stream(1, 0)).unwrap();
        let x = Array2::from_shape_fn((32, 2), |(i, j)| (i + j) as f64 / 40.0);
        let y = Array2::from_elem((32, 1), 0.1);
        let cfg = TrainConfig::new(6, 1e-4).with_prune(PruneSpec { rate: 0.5, schedule: vec![1, 3] });
        train_regression(&mut net, x.view(), y.view(), "value", &cfg).unwrap();
        assert_eq!(net.nodes[0].out_dim(), 10);
        assert_eq!(net.nodes[1].weights.rank(), Some(5));
    }

    #[test]
    fn lr_decay_endpoints_and_divergence() {
        let a = AdamConfig::new(5e-4).with_decay(5e-5);
        assert!((a.lr_at(0, 11) - 5e-4).abs() < 1e-15);
        assert!((a.lr_at(10, 11) - 5e-5).abs() < 1e-15);
        let arch = Architecture::Mlp { width: 2, hidden_layers: 0, rank: None, out_dim: 1, out_activation: Activation::Identity };
        let mut net = arch.build(&[1], &mut rng::stream(0, 0)).unwrap();
        let x = Array2::from_elem((2, 1), 1.0);
        let y = Array2::from_elem((2, 1), f64::NAN);
        let err = train_regression(&mut net, x.view(), y.view(), "out", &TrainConfig::new(1, 1e-3)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}
