use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::layer::{Activation, Init, Node, Source, Weights};
use crate::error::{Error, Result};

/// A coordinate network: nodes in topological order, each reading the
/// concatenation of its sources, plus named output heads.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetwork {
    pub input_dim: usize,
    pub nodes: Vec<Node>,
    pub heads: Vec<(String, usize)>,
}

/// Intermediate values kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    hidden: Vec<Option<Array2<f64>>>,
    pre: Vec<Array2<f64>>,
    pub outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn head<'a>(&'a self, net: &FieldNetwork, name: &str) -> Result<&'a Array2<f64>> {
        Ok(&self.outputs[net.head_index(name)?])
    }
}

impl FieldNetwork {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim, nodes: Vec::new(), heads: Vec::new() }
    }

    /// Appends a node and returns its index.
    pub fn push(&mut self, node: Node) -> Result<usize> {
        let width = self.source_width(&node.sources)?;
        if width != node.in_dim() {
            return Err(Error::dim(format!(
                "node {} expects {} inputs but its sources provide {width}",
                node.name,
                node.in_dim()
            )));
        }
        if node.bias.len() != node.out_dim() {
            return Err(Error::dim(format!("node {} bias length mismatch", node.name)));
        }
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    /// Appends an initialized layer.
    #[allow(clippy::too_many_arguments)]
    pub fn add_layer<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        sources: Vec<Source>,
        out: usize,
        rank: Option<usize>,
        activation: Activation,
        init: Init,
        rng: &mut R,
    ) -> Result<usize> {
        let inp = self.source_width(&sources)?;
        if let Some(r) = rank {
            if r == 0 || r > out.min(inp) {
                return Err(Error::config(format!("rank {r} invalid for a {out}x{inp} layer")));
            }
        }
        let weights = init.weights(out, inp, rank, rng);
        let bias = init.bias(out, inp, rng);
        self.push(Node { name: name.into(), weights, bias, activation, sources })
    }

    pub fn add_head(&mut self, name: &str, node: usize) -> Result<()> {
        if node >= self.nodes.len() {
            return Err(Error::config(format!("head {name} refers to missing node {node}")));
        }
        self.heads.push((name.into(), node));
        Ok(())
    }

    pub fn head_index(&self, name: &str) -> Result<usize> {
        self.heads
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, i)| *i)
            .ok_or_else(|| Error::config(format!("no head named {name}")))
    }

    pub fn source_width(&self, sources: &[Source]) -> Result<usize> {
        let mut w = 0;
        for s in sources {
            w += match *s {
                Source::Input { start, len } => {
                    if start + len > self.input_dim {
                        return Err(Error::dim(format!("input slice {start}..{} exceeds width {}", start + len, self.input_dim)));
                    }
                    len
                }
                Source::Node { index } => {
                    if index >= self.nodes.len() {
                        return Err(Error::config(format!("source node {index} does not precede its consumer")));
                    }
                    self.nodes[index].out_dim()
                }
            };
        }
        Ok(w)
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(Node::param_count).sum()
    }

    /// Weight parameters only (biases excluded).
    pub fn weight_count(&self) -> usize {
        self.nodes.iter().map(|n| n.weights.param_count()).sum()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim {
            return Err(Error::dim(format!("feature length {cols} does not match network input {}", self.input_dim)));
        }
        Ok(())
    }

    pub(crate) fn gather(&self, x: ArrayView2<f64>, outputs: &[Array2<f64>], sources: &[Source]) -> Array2<f64> {
        let parts: Vec<ArrayView2<f64>> = sources
            .iter()
            .map(|s| match *s {
                Source::Input { start, len } => x.slice(s![.., start..start + len]),
                Source::Node { index } => outputs[index].view(),
            })
            .collect();
        if parts.len() == 1 {
            parts[0].to_owned()
        } else {
            concatenate(Axis(1), &parts).expect("consistent rows")
        }
    }

    /// Batched forward pass (`n × input_dim`), keeping every intermediate.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(x.ncols())?;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(self.nodes.len()),
            hidden: Vec::with_capacity(self.nodes.len()),
            pre: Vec::with_capacity(self.nodes.len()),
            outputs: Vec::with_capacity(self.nodes.len()),
        };
        for node in &self.nodes {
            let a = self.gather(x, &cache.outputs, &node.sources);
            let (h1, mut z) = match &node.weights {
                Weights::Dense(w) => (None, a.dot(&w.t())),
                Weights::LowRank { u, v } => {
                    let h1 = a.dot(&v.t());
                    let z = h1.dot(&u.t());
                    (Some(h1), z)
                }
            };
            z += &node.bias;
            let act = node.activation;
            let h = z.mapv(|v| act.apply(v));
            cache.inputs.push(a);
            cache.hidden.push(h1);
            cache.pre.push(z);
            cache.outputs.push(h);
        }
        Ok(cache)
    }

    /// Batched forward pass returning every head in declaration order.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        let cache = self.forward_cached(x)?;
        Ok(self.heads.iter().map(|(_, i)| cache.outputs[*i].clone()).collect())
    }

    /// Batched forward pass of one head.
    pub fn forward_head(&self, x: ArrayView2<f64>, head: &str) -> Result<Array2<f64>> {
        let idx = self.head_index(head)?;
        let mut cache = self.forward_cached(x)?;
        Ok(cache.outputs.swap_remove(idx))
    }

    /// Single-sample forward with plain sequential sums, so that inserting
    /// zero terms never changes the result.
    pub fn forward_single(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(x.len())?;
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let mut a = Vec::with_capacity(node.in_dim());
            for s in &node.sources {
                match *s {
                    Source::Input { start, len } => a.extend_from_slice(&x[start..start + len]),
                    Source::Node { index } => a.extend_from_slice(&outs[index]),
                }
            }
            let z = match &node.weights {
                Weights::Dense(w) => matvec(w, &a),
                Weights::LowRank { u, v } => matvec(u, &matvec(v, &a)),
            };
            outs.push(z.iter().zip(node.bias.iter()).map(|(z, b)| node.activation.apply(z + b)).collect());
        }
        Ok(self.heads.iter().map(|(_, i)| outs[*i].clone()).collect())
    }

    /// Gradient of a loss with respect to every parameter in [`params`]
    /// order, given the loss gradient at each head (`None` for heads that do
    /// not enter the loss).
    ///
    /// [`params`]: FieldNetwork::params
    pub fn backward(&self, cache: &ForwardCache, head_grads: &[Option<Array2<f64>>]) -> Result<Vec<f64>> {
        Ok(self.backward_full(cache, head_grads)?.0)
    }

    /// [`FieldNetwork::backward`] that also returns the gradient with respect
    /// to the network input.
    pub fn backward_full(&self, cache: &ForwardCache, head_grads: &[Option<Array2<f64>>]) -> Result<(Vec<f64>, Array2<f64>)> {
        let rows = cache.outputs.first().map_or(0, |o| o.nrows());
        let mut grad_input = Array2::zeros((rows, self.input_dim));
        if head_grads.len() != self.heads.len() {
            return Err(Error::dim("one gradient slot per head is required"));
        }
        let mut grad_out: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        for ((_, idx), g) in self.heads.iter().zip(head_grads) {
            if let Some(g) = g {
                if g.dim() != cache.outputs[*idx].dim() {
                    return Err(Error::dim("head gradient shape mismatch"));
                }
                add_into(&mut grad_out[*idx], g.view());
            }
        }
        let mut per_node: Vec<Vec<f64>> = vec![Vec::new(); self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            let node = &self.nodes[i];
            let Some(dh) = grad_out[i].take() else {
                per_node[i] = vec![0.0; node.param_count()];
                continue;
            };
            let mut dz = dh;
            let act = node.activation;
            Zip::from(&mut dz)
                .and(&cache.pre[i])
                .and(&cache.outputs[i])
                .for_each(|d, &z, &h| *d *= act.derivative(z, h));
            let a = &cache.inputs[i];
            let mut g = Vec::with_capacity(node.param_count());
            let da = match &node.weights {
                Weights::Dense(w) => {
                    g.extend(dz.t().dot(a).iter());
                    dz.dot(w)
                }
                Weights::LowRank { u, v } => {
                    let h1 = cache.hidden[i].as_ref().expect("low-rank hidden");
                    g.extend(dz.t().dot(h1).iter());
                    let dh1 = dz.dot(u);
                    g.extend(dh1.t().dot(a).iter());
                    dh1.dot(v)
                }
            };
            g.extend(dz.sum_axis(Axis(0)).iter());
            per_node[i] = g;
            let mut col = 0;
            for s in &node.sources {
                match *s {
                    Source::Input { start, len } => {
                        let mut dst = grad_input.slice_mut(s![.., start..start + len]);
                        dst += &da.slice(s![.., col..col + len]);
                        col += len;
                    }
                    Source::Node { index } => {
                        let w = self.nodes[index].out_dim();
                        add_into(&mut grad_out[index], da.slice(s![.., col..col + w]));
                        col += w;
                    }
                }
            }
        }
        Ok((per_node.concat(), grad_input))
    }

    /// All parameters flattened: per node the weight matrices (`W`, or `U`
    /// then `V`) row-major, then the bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for n in &self.nodes {
            for m in n.weights.matrices() {
                p.extend(m.iter());
            }
            p.extend(n.bias.iter());
        }
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::dim(format!("{} parameters given, network has {}", p.len(), self.param_count())));
        }
        let mut k = 0;
        for n in &mut self.nodes {
            for m in n.weights.matrices_mut() {
                for v in m.iter_mut() {
                    *v = p[k];
                    k += 1;
                }
            }
            for v in n.bias.iter_mut() {
                *v = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// The same network with every low-rank layer replaced by its dense product.
    pub fn densified(&self) -> Self {
        let mut net = self.clone();
        for n in &mut net.nodes {
            n.weights = Weights::Dense(n.weights.effective());
        }
        net
    }
}

fn matvec(w: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    w.outer_iter()
        .map(|row| {
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            acc
        })
        .collect()
}

fn add_into(slot: &mut Option<Array2<f64>>, g: ArrayView2<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g.to_owned()),
    }
}

/// A single-layer identity network, convenient for plumbing checks.
pub fn identity_network(dim: usize) -> FieldNetwork {
    let mut net = FieldNetwork::new(dim);
    let node = Node {
        name: "identity".into(),
        weights: Weights::Dense(Array2::eye(dim)),
        bias: Array1::zeros(dim),
        activation: Activation::Identity,
        sources: vec![Source::Input { start: 0, len: dim }],
    };
    let i = net.push(node).expect("valid identity");
    net.add_head("out", i).expect("valid head");
    net
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    pub(crate) fn toy_network(seed: u64) -> FieldNetwork {
        let mut r = rng::stream(seed, 0);
        let mut net = FieldNetwork::new(5);
        let all = Source::Input { start: 0, len: 5 };
        let a = net
            .add_layer("a", vec![all], 8, None, Activation::Sine { omega0: 2.0 }, Init::Siren { first: true, omega0: 2.0 }, &mut r)
            .unwrap();
        let b = net.add_layer("b", vec![Source::Node { index: a }], 8, Some(3), Activation::Relu, Init::He, &mut r).unwrap();
        let c = net
            .add_layer(
                "c",
                vec![Source::Node { index: b }, Source::Input { start: 1, len: 3 }],
                6,
                Some(2),
                Activation::Sine { omega0: 1.5 },
                Init::Lecun,
                &mut r,
            )
            .unwrap();
        let d = net.add_layer("density", vec![Source::Node { index: c }], 1, None, Activation::Relu, Init::Lecun, &mut r).unwrap();
        let e = net
            .add_layer("color", vec![Source::Node { index: c }, Source::Node { index: a }], 3, None, Activation::Sigmoid, Init::Lecun, &mut r)
            .unwrap();
        net.add_head("density", d).unwrap();
        net.add_head("color", e).unwrap();
        for n in &mut net.nodes {
            n.bias.mapv_inplace(|_| r.random_range(-0.3..0.3));
        }
        net
    }

    #[test]
    fn zero_network_heads() {
        let mut net = toy_network(1);
        let n = net.param_count();
        net.set_params(&vec![0.0; n]).unwrap();
        let out = net.forward(Array2::from_elem((3, 5), 0.7).view()).unwrap();
        assert!(out[0].iter().all(|&v| v == 0.0));
        assert!(out[1].iter().all(|&v| v == 0.5));
    }

    #[test]
    fn identity_layer_passes_input() {
        let net = identity_network(4);
        let x = [0.1, -2.0, 3.5, 0.0];
        assert_eq!(net.forward_single(&x).unwrap()[0], x.to_vec());
    }

    #[test]
    fn batched_matches_single_and_dense_product() {
        let net = toy_network(2);
        let dense = net.densified();
        let mut r = rng::stream(9, 0);
        let x = Array2::from_shape_fn((7, 5), |_| r.random_range(-1.0..1.0));
        let batch = net.forward(x.view()).unwrap();
        let dbatch = dense.forward(x.view()).unwrap();
        for (i, row) in x.outer_iter().enumerate() {
            let single = net.forward_single(row.as_slice().unwrap()).unwrap();
            for h in 0..2 {
                for (k, v) in single[h].iter().enumerate() {
                    assert!((v - batch[h][[i, k]]).abs() <= 1e-9 * v.abs().max(1.0));
                    assert!((v - dbatch[h][[i, k]]).abs() <= 1e-9 * v.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn independent_reference_forward() {
        let net = toy_network(3);
        let x = [0.2, -0.4, 0.9, 0.1, -0.8];
        let w = |i: usize| net.nodes[i].weights.effective();
        let act = |i: usize, z: Vec<f64>| -> Vec<f64> {
            z.iter().zip(net.nodes[i].bias.iter()).map(|(z, b)| net.nodes[i].activation.apply(z + b)).collect()
        };
        let mv = |m: Array2<f64>, v: &[f64]| -> Vec<f64> { m.dot(&Array1::from(v.to_vec())).to_vec() };
        let a = act(0, mv(w(0), &x));
        let b = act(1, mv(w(1), &a));
        let cin: Vec<f64> = b.iter().chain(&x[1..4]).copied().collect();
        let c = act(2, mv(w(2), &cin));
        let d = act(3, mv(w(3), &c));
        let ein: Vec<f64> = c.iter().chain(&a).copied().collect();
        let e = act(4, mv(w(4), &ein));
        let out = net.forward_single(&x).unwrap();
        for (p, q) in out[0].iter().chain(&out[1]).zip(d.iter().chain(&e)) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn finite_difference_gradient() {
        let mut net = toy_network(4);
        let mut r = rng::stream(5, 0);
        let x = Array2::from_shape_fn((4, 5), |_| r.random_range(-1.0..1.0));
        let gd = Array2::from_shape_fn((4, 1), |_| r.random_range(-1.0..1.0));
        let gc = Array2::from_shape_fn((4, 3), |_| r.random_range(-1.0..1.0));
        let loss = |net: &FieldNetwork| -> f64 {
            let out = net.forward(x.view()).unwrap();
            (&out[0] * &gd).sum() + (&out[1] * &gc).sum()
        };
        let cache = net.forward_cached(x.view()).unwrap();
        let grad = net.backward(&cache, &[Some(gd.clone()), Some(gc.clone())]).unwrap();
        let p0 = net.params();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..p0.len() {
            let mut p = p0.clone();
            p[k] += h;
            net.set_params(&p).unwrap();
            let up = loss(&net);
            p[k] -= 2.0 * h;
            net.set_params(&p).unwrap();
            let down = loss(&net);
            let fd = (up - down) / (2.0 * h);
            worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-3));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");

        net.set_params(&p0).unwrap();
        let (_, gx) = net.backward_full(&cache, &[Some(gd.clone()), Some(gc.clone())]).unwrap();
        let mut xp = x.clone();
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                xp[[i, j]] = x[[i, j]] + h;
                let o = net.forward(xp.view()).unwrap();
                let up = (&o[0] * &gd).sum() + (&o[1] * &gc).sum();
                xp[[i, j]] = x[[i, j]] - h;
                let o = net.forward(xp.view()).unwrap();
                let down = (&o[0] * &gd).sum() + (&o[1] * &gc).sum();
                xp[[i, j]] = x[[i, j]];
                let fd = (up - down) / (2.0 * h);
                assert!((fd - gx[[i, j]]).abs() <= 1e-4 * fd.abs().max(1e-2), "{fd} vs {}", gx[[i, j]]);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let net = toy_network(1);
        assert!(matches!(net.forward(Array2::zeros((2, 4)).view()), Err(Error::Dimension(_))));
        assert!(net.forward_single(&[0.0; 6]).is_err());
        let mut bad = FieldNetwork::new(2);
        let mut r = rng::stream(0, 0);
        assert!(bad
            .add_layer("x", vec![Source::Node { index: 0 }], 2, None, Activation::Relu, Init::He, &mut r)
            .is_err());
        assert!(bad
            .add_layer("x", vec![Source::Input { start: 1, len: 2 }], 2, None, Activation::Relu, Init::He, &mut r)
            .is_err());
    }
}
