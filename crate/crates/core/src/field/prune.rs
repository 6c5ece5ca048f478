use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::layer::{Source, Weights};
use super::network::FieldNetwork;
use crate::error::{Error, Result};

/// Structured pruning request: remove a fraction of every hidden layer's
/// neurons and low-rank components, optionally spread over a schedule of
/// training epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub rate: f64,
    #[serde(default)]
    pub schedule: Vec<usize>,
}

impl PruneSpec {
    pub fn new(rate: f64) -> Self {
        Self { rate, schedule: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.rate) {
            return Err(Error::config(format!("prune rate {} outside [0, 1)", self.rate)));
        }
        Ok(())
    }
}

/// Width kept by pruning `width` at `rate`: `⌈w(1 − rate)⌉`.
pub fn pruned_width(width: usize, rate: f64) -> usize {
    ((width as f64) * (1.0 - rate) - 1e-9).ceil().max(0.0) as usize
}

/// Rank kept by pruning `rank` at `rate`: `round(r(1 − rate))`, at least 1.
pub fn pruned_rank(rank: usize, rate: f64) -> usize {
    ((rank as f64) * (1.0 - rate)).round().max(1.0) as usize
}

/// Kept output neurons and rank components of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePlan {
    pub neurons: Vec<Vec<usize>>,
    pub components: Vec<Option<Vec<usize>>>,
}

fn is_head(net: &FieldNetwork, i: usize) -> bool {
    net.heads.iter().any(|(_, h)| *h == i)
}

/// Keeps the `k` largest scores, returned in ascending index order.
pub(crate) fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Ranks neurons by the L2 norm of their row in the effective weight matrix
/// and rank components by `‖u_k‖·‖v_k‖`. Head nodes keep every neuron.
pub fn plan(net: &FieldNetwork, rate: f64) -> Result<PrunePlan> {
    PruneSpec::new(rate).validate()?;
    let mut neurons = Vec::with_capacity(net.nodes.len());
    let mut components = Vec::with_capacity(net.nodes.len());
    for (i, node) in net.nodes.iter().enumerate() {
        let out = node.out_dim();
        if is_head(net, i) {
            neurons.push((0..out).collect());
        } else {
            let w = node.weights.effective();
            let norms: Vec<f64> = w.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
            let keep = pruned_width(out, rate);
            if keep == 0 {
                return Err(Error::config(format!("pruning removes every neuron of {}", node.name)));
            }
            neurons.push(top_k(&norms, keep));
        }
        components.push(match &node.weights {
            Weights::Dense(_) => None,
            Weights::LowRank { u, v } => {
                let scores: Vec<f64> = (0..u.ncols())
                    .map(|k| {
                        let uc = u.column(k);
                        let vr = v.row(k);
                        uc.dot(&uc).sqrt() * vr.dot(&vr).sqrt()
                    })
                    .collect();
                Some(top_k(&scores, pruned_rank(u.ncols(), rate)))
            }
        });
    }
    Ok(PrunePlan { neurons, components })
}

fn input_columns(net: &FieldNetwork, i: usize, plan: &PrunePlan) -> Vec<usize> {
    let mut cols = Vec::new();
    let mut offset = 0;
    for s in &net.nodes[i].sources {
        match *s {
            Source::Input { len, .. } => {
                cols.extend(offset..offset + len);
                offset += len;
            }
            Source::Node { index } => {
                cols.extend(plan.neurons[index].iter().map(|k| offset + k));
                offset += net.nodes[index].out_dim();
            }
        }
    }
    cols
}

fn select(m: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows).select(Axis(1), cols)
}

/// Physically removes the pruned rows and columns.
pub fn apply_plan(net: &FieldNetwork, plan: &PrunePlan) -> FieldNetwork {
    let mut out = net.clone();
    for (i, node) in out.nodes.iter_mut().enumerate() {
        let cols = input_columns(net, i, plan);
        let rows = &plan.neurons[i];
        node.weights = match &net.nodes[i].weights {
            Weights::Dense(w) => Weights::Dense(select(w, rows, &cols)),
            Weights::LowRank { u, v } => {
                let keep = plan.components[i].as_ref().expect("low-rank plan");
                Weights::LowRank { u: select(u, rows, keep), v: select(v, keep, &cols) }
            }
        };
        node.bias = Array1::from_iter(rows.iter().map(|&r| net.nodes[i].bias[r]));
    }
    out
}

/// Same shapes as `net`, with every pruned neuron's outgoing columns and
/// every pruned rank component zeroed.
pub fn masked_network(net: &FieldNetwork, plan: &PrunePlan) -> FieldNetwork {
    let mut out = net.clone();
    for (i, node) in out.nodes.iter_mut().enumerate() {
        let keep_cols = input_columns(net, i, plan);
        let mut mask = vec![false; node.in_dim()];
        for c in keep_cols {
            mask[c] = true;
        }
        let zero_cols = |m: &mut Array2<f64>| {
            for (c, keep) in mask.iter().enumerate() {
                if !keep {
                    m.column_mut(c).fill(0.0);
                }
            }
        };
        match &mut node.weights {
            Weights::Dense(w) => zero_cols(w),
            Weights::LowRank { u, v } => {
                zero_cols(v);
                let keep = plan.components[i].as_ref().expect("low-rank plan");
                for k in 0..u.ncols() {
                    if !keep.contains(&k) {
                        u.column_mut(k).fill(0.0);
                        v.row_mut(k).fill(0.0);
                    }
                }
            }
        }
    }
    out
}

/// Prunes every hidden layer to `⌈w(1 − rate)⌉` neurons and every low-rank
/// layer to `round(r(1 − rate))` components.
pub fn structured_prune(net: &FieldNetwork, rate: f64) -> Result<FieldNetwork> {
    Ok(apply_plan(net, &plan(net, rate)?))
}

/// Parameter counts of the dense, low-rank and pruned forms of a network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Compression {
    pub dense: usize,
    pub low_rank: usize,
    pub pruned: usize,
}

impl Compression {
    pub fn of(net: &FieldNetwork, rate: f64) -> Result<Self> {
        Ok(Self {
            dense: net.densified().param_count(),
            low_rank: net.param_count(),
            pruned: structured_prune(net, rate)?.param_count(),
        })
    }

    /// Fractional reduction from dense to low rank.
    pub fn low_rank_reduction(&self) -> f64 {
        1.0 - self.low_rank as f64 / self.dense as f64
    }

    /// Fractional reduction from low rank to pruned.
    pub fn prune_reduction(&self) -> f64 {
        1.0 - self.pruned as f64 / self.low_rank as f64
    }

    pub fn overall(&self) -> f64 {
        self.dense as f64 / self.pruned as f64
    }
}

#[cfg(test)]
mod tests {
    use super::super::arch::Architecture;
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn width_and_rank_rules() {
        assert_eq!(pruned_width(256, 0.9), 26);
        assert_eq!(pruned_rank(32, 0.9), 3);
        assert_eq!(pruned_width(100, 0.0), 100);
        assert_eq!(pruned_width(10, 0.5), 5);
        assert_eq!(pruned_rank(2, 0.9), 1);
    }

    #[test]
    fn rate_zero_is_identity_and_invalid_rates_fail() {
        let net = Architecture::nerf_default().build(&[15, 9], &mut rng::stream(1, 0)).unwrap();
        assert_eq!(structured_prune(&net, 0.0).unwrap(), net);
        assert!(structured_prune(&net, 1.0).is_err());
        assert!(structured_prune(&net, -0.1).is_err());
    }

    #[test]
    fn nerf_prunes_to_width_26_rank_3() {
        let net = Architecture::nerf_default().build(&[63, 27], &mut rng::stream(2, 0)).unwrap();
        let p = structured_prune(&net, 0.9).unwrap();
        for n in p.nodes.iter().filter(|n| n.name.starts_with("layer")) {
            assert_eq!(n.out_dim(), 26);
            assert_eq!(n.weights.rank(), Some(3));
        }
        assert_eq!(p.nodes[5].in_dim(), 26 + 63);
    }

    #[test]
    fn pruned_forward_equals_masked_forward_exactly() {
        let arch = Architecture::Nerf { width: 40, depth: 4, rank: Some(8), skip: 2 };
        let mut r = rng::stream(3, 0);
        let net = arch.build(&[7, 5], &mut r).unwrap();
        let plan = plan(&net, 0.6).unwrap();
        let pruned = apply_plan(&net, &plan);
        let masked = masked_network(&net, &plan);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
            assert_eq!(pruned.forward_single(&x).unwrap(), masked.forward_single(&x).unwrap());
        }
    }

    #[test]
    fn smallest_norm_neurons_are_removed() {
        let arch = Architecture::Mlp { width: 6, hidden_layers: 1, rank: None, out_dim: 1, out_activation: super::super::layer::Activation::Identity };
        let mut net = arch.build(&[2], &mut rng::stream(0, 0)).unwrap();
        if let Weights::Dense(w) = &mut net.nodes[0].weights {
            for (k, mut row) in w.outer_iter_mut().enumerate() {
                row.fill(k as f64 + 1.0);
            }
        }
        let p = plan(&net, 0.5).unwrap();
        assert_eq!(p.neurons[0], vec![3, 4, 5]);
    }
}
