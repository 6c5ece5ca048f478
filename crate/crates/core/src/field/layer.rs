use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    /// `sin(ω0 · z)`
    Sine { omega0: f64 },
}

impl Activation {
    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Sine { omega0 } => (omega0 * z).sin(),
        }
    }

    /// Derivative given the pre-activation `z` and output `h`.
    pub fn derivative(&self, z: f64, h: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
            Activation::Sine { omega0 } => omega0 * (omega0 * z).cos(),
        }
    }
}

/// Weight matrix of a layer, `out × in` when dense or the factors `U`
/// (`out × r`) and `V` (`r × in`).
#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Dense(Array2<f64>),
    LowRank { u: Array2<f64>, v: Array2<f64> },
}

impl Weights {
    pub fn low_rank(u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.ncols() != v.nrows() {
            return Err(Error::dim(format!("U has {} columns but V has {} rows", u.ncols(), v.nrows())));
        }
        let r = u.ncols();
        if r == 0 || r > u.nrows().min(v.ncols()) {
            return Err(Error::dim(format!("rank {r} outside 1..=min({}, {})", u.nrows(), v.ncols())));
        }
        Ok(Weights::LowRank { u, v })
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Weights::Dense(w) => w.nrows(),
            Weights::LowRank { u, .. } => u.nrows(),
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            Weights::Dense(w) => w.ncols(),
            Weights::LowRank { v, .. } => v.ncols(),
        }
    }

    pub fn rank(&self) -> Option<usize> {
        match self {
            Weights::Dense(_) => None,
            Weights::LowRank { u, .. } => Some(u.ncols()),
        }
    }

    /// `m·n` for dense, `m·r + r·n` for low rank.
    pub fn param_count(&self) -> usize {
        match self {
            Weights::Dense(w) => w.len(),
            Weights::LowRank { u, v } => u.len() + v.len(),
        }
    }

    /// The effective dense matrix.
    pub fn effective(&self) -> Array2<f64> {
        match self {
            Weights::Dense(w) => w.clone(),
            Weights::LowRank { u, v } => u.dot(v),
        }
    }

    /// `x · Wᵀ` for a batch `x` (`n × in`).
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match self {
            Weights::Dense(w) => x.dot(&w.t()),
            Weights::LowRank { u, v } => x.dot(&v.t()).dot(&u.t()),
        }
    }

    pub(crate) fn matrices(&self) -> Vec<&Array2<f64>> {
        match self {
            Weights::Dense(w) => vec![w],
            Weights::LowRank { u, v } => vec![u, v],
        }
    }

    pub(crate) fn matrices_mut(&mut self) -> Vec<&mut Array2<f64>> {
        match self {
            Weights::Dense(w) => vec![w],
            Weights::LowRank { u, v } => vec![u, v],
        }
    }
}

/// Where a node reads its input from; multiple sources are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    /// Columns `start..start + len` of the network input.
    Input { start: usize, len: usize },
    /// Output of an earlier node.
    Node { index: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub weights: Weights,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub sources: Vec<Source>,
}

impl Node {
    pub fn out_dim(&self) -> usize {
        self.weights.out_dim()
    }

    pub fn in_dim(&self) -> usize {
        self.weights.in_dim()
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count() + self.bias.len()
    }

    pub fn reads_input_only(&self) -> bool {
        self.sources.iter().all(|s| matches!(s, Source::Input { .. }))
    }
}

/// How a layer is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Sine network scheme: `U(±1/fan_in)` for first layers and
    /// `U(±√(6/fan_in)/ω0)` otherwise, biases `U(±1/√fan_in)`.
    Siren { first: bool, omega0: f64 },
    /// `U(±√(6/fan_in))`, zero bias.
    He,
    /// `U(±√(3/fan_in))`, zero bias.
    Lecun,
}

impl Init {
    fn bound(&self, fan_in: usize) -> f64 {
        let f = fan_in.max(1) as f64;
        match *self {
            Init::Siren { first: true, .. } => 1.0 / f,
            Init::Siren { first: false, omega0 } => (6.0 / f).sqrt() / omega0,
            Init::He => (6.0 / f).sqrt(),
            Init::Lecun => (3.0 / f).sqrt(),
        }
    }

    /// Samples weights of the given shape. Low-rank factors share the
    /// product variance of the dense scheme: each factor entry has variance
    /// `√(var / r)`.
    pub fn weights<R: Rng + ?Sized>(&self, out: usize, inp: usize, rank: Option<usize>, rng: &mut R) -> Weights {
        let b = self.bound(inp);
        match rank {
            None => Weights::Dense(Array2::from_shape_fn((out, inp), |_| rng.random_range(-b..=b))),
            Some(r) => {
                let var = b * b / 3.0;
                let h = (3.0 * (var / r as f64).sqrt()).sqrt();
                let u = Array2::from_shape_fn((out, r), |_| rng.random_range(-h..=h));
                let v = Array2::from_shape_fn((r, inp), |_| rng.random_range(-h..=h));
                Weights::LowRank { u, v }
            }
        }
    }

    pub fn bias<R: Rng + ?Sized>(&self, out: usize, fan_in: usize, rng: &mut R) -> Array1<f64> {
        match self {
            Init::Siren { .. } => {
                let b = 1.0 / (fan_in.max(1) as f64).sqrt();
                Array1::from_shape_fn(out, |_| rng.random_range(-b..=b))
            }
            _ => Array1::zeros(out),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_and_derivatives() {
        let eps = 1e-6;
        for act in [Activation::Identity, Activation::Relu, Activation::Sigmoid, Activation::Sine { omega0: 3.0 }] {
            for z in [-0.7, 0.3, 1.2] {
                let fd = (act.apply(z + eps) - act.apply(z - eps)) / (2.0 * eps);
                assert!((fd - act.derivative(z, act.apply(z))).abs() < 1e-6);
            }
        }
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
    }

    #[test]
    fn low_rank_shapes_and_counts() {
        assert!(Weights::low_rank(Array2::zeros((4, 2)), Array2::zeros((3, 5))).is_err());
        assert!(Weights::low_rank(Array2::zeros((2, 3)), Array2::zeros((3, 5))).is_err());
        let w = Weights::low_rank(Array2::zeros((6, 2)), Array2::zeros((2, 5))).unwrap();
        assert_eq!(w.param_count(), 6 * 2 + 2 * 5);
        assert_eq!((w.out_dim(), w.in_dim(), w.rank()), (6, 5, Some(2)));
    }

    #[test]
    fn low_rank_product_variance_matches_dense_scheme() {
        let mut r = crate::rng::stream(3, 0);
        let init = Init::He;
        let w = init.weights(200, 100, Some(10), &mut r).effective();
        let var = w.mapv(|v| v * v).mean().unwrap();
        let target = init.bound(100).powi(2) / 3.0;
        assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
    }
}
