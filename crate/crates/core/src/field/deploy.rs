use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::Weights;
use super::network::FieldNetwork;
use crate::device::{check_ratio, Chip, ConverterBits, NoiseModel};
use crate::error::{Error, Result};
use crate::quant::{haq_program, ptq_program, HaqOptions, MappedMatrix, Mapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Haq,
    Ptq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployConfig {
    pub scheme: Scheme,
    /// Bits per weight for every node in order; a single entry applies to all.
    pub bits: Vec<usize>,
    /// Significance ratio of the amplification chain (HAQ only).
    pub ratio: f64,
    pub converters: ConverterBits,
    #[serde(default)]
    pub haq: HaqOptions,
}

impl DeployConfig {
    pub fn haq(bits: Vec<usize>, ratio: f64) -> Self {
        Self { scheme: Scheme::Haq, bits, ratio, converters: ConverterBits::default(), haq: HaqOptions::default() }
    }

    pub fn ptq(bits: Vec<usize>) -> Self {
        Self { scheme: Scheme::Ptq, bits, ratio: 2.0, converters: ConverterBits::default(), haq: HaqOptions::default() }
    }

    pub fn with_converters(mut self, converters: ConverterBits) -> Self {
        self.converters = converters;
        self
    }

    /// The CT deployment: 14, 14 and 12 bits at `s = 1.5`.
    pub fn ct_default() -> Self {
        Self::haq(vec![14, 14, 12], 1.5)
    }

    pub fn bits_for(&self, node: usize, nodes: usize) -> Result<usize> {
        match self.bits.len() {
            1 => Ok(self.bits[0]),
            n if n == nodes => Ok(self.bits[node]),
            n => Err(Error::config(format!("{n} bit widths given for {nodes} layers"))),
        }
    }

    /// Cells needed to map `net`: `Σ bits · weight parameters`.
    pub fn cell_count(&self, net: &FieldNetwork) -> Result<usize> {
        let mut total = 0;
        for (i, n) in net.nodes.iter().enumerate() {
            total += self.bits_for(i, net.nodes.len())? * n.weights.param_count();
        }
        Ok(total)
    }
}

/// Hardware matrices of one node.
#[derive(Debug, Clone)]
pub enum NodeMatrices {
    Dense(MappedMatrix),
    LowRank { u: MappedMatrix, v: MappedMatrix },
}

/// A network whose weights live on simulated crossbars; biases and
/// activations stay digital.
#[derive(Debug, Clone)]
pub struct DeployedNetwork {
    pub net: FieldNetwork,
    pub chip: Chip,
    pub noise: NoiseModel,
    pub config: DeployConfig,
    pub layers: Vec<NodeMatrices>,
}

fn map_matrix<R: Rng + ?Sized>(
    name: &str,
    w: ArrayView2<f64>,
    bits: usize,
    cfg: &DeployConfig,
    chip: &mut Chip,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<MappedMatrix> {
    let mapping = match cfg.scheme {
        Scheme::Haq => Mapping::Haq(haq_program(name, w, bits, cfg.ratio, chip, noise, rng, cfg.haq)?),
        Scheme::Ptq => Mapping::Ptq(ptq_program(name, w, bits, chip, noise, rng)?),
    };
    MappedMatrix::new(mapping, chip, noise.clone())
}

/// Programs every weight matrix onto `chip` and calibrates converter ranges
/// from the noiseless activations of `calibration` (`n × input_dim`).
pub fn deploy<R: Rng + ?Sized>(
    net: &FieldNetwork,
    cfg: &DeployConfig,
    calibration: ArrayView2<f64>,
    noise: &NoiseModel,
    mut chip: Chip,
    rng: &mut R,
) -> Result<DeployedNetwork> {
    if cfg.scheme == Scheme::Haq {
        check_ratio(cfg.ratio)?;
    }
    cfg.converters.validate()?;
    let count = net.nodes.len();
    let mut layers = Vec::with_capacity(count);
    for (i, node) in net.nodes.iter().enumerate() {
        let bits = cfg.bits_for(i, count)?;
        layers.push(match &node.weights {
            Weights::Dense(w) => NodeMatrices::Dense(map_matrix(&node.name, w.view(), bits, cfg, &mut chip, noise, rng)?),
            Weights::LowRank { u, v } => NodeMatrices::LowRank {
                u: map_matrix(&format!("{}.u", node.name), u.view(), bits, cfg, &mut chip, noise, rng)?,
                v: map_matrix(&format!("{}.v", node.name), v.view(), bits, cfg, &mut chip, noise, rng)?,
            },
        });
    }
    let mut deployed = DeployedNetwork { net: net.clone(), chip, noise: noise.clone(), config: cfg.clone(), layers };
    deployed.calibrate(calibration, cfg.converters)?;
    Ok(deployed)
}

impl DeployedNetwork {
    /// Sets every matrix's DAC/ADC range from the software activations that
    /// reach it on `calibration`.
    pub fn calibrate(&mut self, calibration: ArrayView2<f64>, bits: ConverterBits) -> Result<()> {
        let cache = self.net.forward_cached(calibration)?;
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let node = &self.net.nodes[i];
            let a = self.net.gather(calibration, &outputs, &node.sources);
            match (layer, &node.weights) {
                (NodeMatrices::Dense(m), _) => m.calibrate(a.view(), bits)?,
                (NodeMatrices::LowRank { u, v }, Weights::LowRank { v: vw, .. }) => {
                    v.calibrate(a.view(), bits)?;
                    u.calibrate(a.dot(&vw.t()).view(), bits)?;
                }
                _ => return Err(Error::State("deployed layer kinds diverged from the network".into())),
            }
            outputs.push(cache.outputs[i].clone());
        }
        Ok(())
    }

    /// Inference through the crossbars: DAC → per-plane analog products →
    /// amplification chain → ADC, then digital bias and activation.
    pub fn hw_forward<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.net.input_dim {
            return Err(Error::dim(format!("feature length {} does not match network input {}", x.ncols(), self.net.input_dim)));
        }
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let node = &self.net.nodes[i];
            let a = self.net.gather(x, &outputs, &node.sources);
            let mut z = match layer {
                NodeMatrices::Dense(m) => m.matmul(a.view(), rng)?,
                NodeMatrices::LowRank { u, v } => u.matmul(v.matmul(a.view(), rng)?.view(), rng)?,
            };
            z += &node.bias;
            let act = node.activation;
            z.mapv_inplace(|v| act.apply(v));
            outputs.push(z);
        }
        Ok(self.net.heads.iter().map(|(_, i)| outputs[*i].clone()).collect())
    }

    pub fn hw_forward_head<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, head: &str, rng: &mut R) -> Result<Array2<f64>> {
        let k = self.net.heads.iter().position(|(n, _)| n == head).ok_or_else(|| Error::config(format!("no head named {head}")))?;
        Ok(self.hw_forward(x, rng)?.swap_remove(k))
    }

    /// Cells occupied by weights.
    pub fn cell_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                NodeMatrices::Dense(m) => m.mapping.cell_count(),
                NodeMatrices::LowRank { u, v } => u.mapping.cell_count() + v.mapping.cell_count(),
            })
            .sum()
    }

    /// The software network carrying the weights actually stored on the
    /// chip (read without read noise).
    pub fn programmed_network(&self) -> Result<FieldNetwork> {
        let quiet = self.noise.clone().with_read_noise(0.0);
        let mut r = crate::rng::stream(0, 0);
        let mut net = self.net.clone();
        for (node, layer) in net.nodes.iter_mut().zip(&self.layers) {
            node.weights = match layer {
                NodeMatrices::Dense(m) => Weights::Dense(m.mapping.dequantize(&self.chip, &quiet, &mut r)?),
                NodeMatrices::LowRank { u, v } => Weights::LowRank {
                    u: u.mapping.dequantize(&self.chip, &quiet, &mut r)?,
                    v: v.mapping.dequantize(&self.chip, &quiet, &mut r)?,
                },
            };
        }
        Ok(net)
    }

    /// Every mapping, in node order (`U` before `V`).
    pub fn mappings(&self) -> Vec<&Mapping> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                NodeMatrices::Dense(m) => vec![&m.mapping],
                NodeMatrices::LowRank { u, v } => vec![&u.mapping, &v.mapping],
            })
            .collect()
    }
}
