use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, Init, Source};
use super::network::FieldNetwork;
use crate::error::{Error, Result};

/// Declarative network architecture, as written in experiment manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Dense sine input layer, one low-rank sine hidden layer, linear output.
    Ct { hidden: usize, rank: usize, omega0: f64, out_dim: usize },
    /// Radiance field: `depth` low-rank ReLU layers over the position
    /// encoding with a skip concatenation before layer `skip`, a ReLU density
    /// head, a linear feature layer, a ReLU color layer over the feature and
    /// direction encoding, and a sigmoid color head.
    Nerf { width: usize, depth: usize, rank: Option<usize>, skip: usize },
    /// Plain ReLU MLP with `hidden_layers` hidden layers.
    Mlp { width: usize, hidden_layers: usize, rank: Option<usize>, out_dim: usize, out_activation: Activation },
}

impl Architecture {
    pub fn ct_default() -> Self {
        Architecture::Ct { hidden: 100, rank: 10, omega0: 30.0, out_dim: 1 }
    }

    pub fn nerf_default() -> Self {
        Architecture::Nerf { width: 256, depth: 8, rank: Some(32), skip: 5 }
    }

    pub fn deformation_default() -> Self {
        Architecture::Mlp { width: 64, hidden_layers: 3, rank: None, out_dim: 3, out_activation: Activation::Identity }
    }

    /// Builds an initialized network. `groups` are the widths of the encoded
    /// input groups: one group for `Ct` and `Mlp`, position then direction
    /// for `Nerf`.
    pub fn build<R: Rng + ?Sized>(&self, groups: &[usize], rng: &mut R) -> Result<FieldNetwork> {
        match *self {
            Architecture::Ct { hidden, rank, omega0, out_dim } => {
                let [inp] = groups else { return Err(Error::config("ct architecture takes one input group")) };
                let mut net = FieldNetwork::new(*inp);
                let sine = Activation::Sine { omega0 };
                let a = net.add_layer(
                    "input",
                    vec![Source::Input { start: 0, len: *inp }],
                    hidden,
                    None,
                    sine,
                    Init::Siren { first: true, omega0 },
                    rng,
                )?;
                let b = net.add_layer(
                    "hidden",
                    vec![Source::Node { index: a }],
                    hidden,
                    Some(rank),
                    sine,
                    Init::Siren { first: false, omega0 },
                    rng,
                )?;
                let c = net.add_layer(
                    "output",
                    vec![Source::Node { index: b }],
                    out_dim,
                    None,
                    Activation::Identity,
                    Init::Siren { first: false, omega0 },
                    rng,
                )?;
                net.add_head("value", c)?;
                Ok(net)
            }
            Architecture::Nerf { width, depth, rank, skip } => {
                let [pos, dir] = groups else { return Err(Error::config("nerf architecture takes position and direction groups")) };
                if depth == 0 {
                    return Err(Error::config("nerf depth must be positive"));
                }
                let mut net = FieldNetwork::new(pos + dir);
                let x = Source::Input { start: 0, len: *pos };
                let mut prev = None;
                for l in 0..depth {
                    let mut sources = match prev {
                        None => vec![x],
                        Some(i) => vec![Source::Node { index: i }],
                    };
                    if l == skip && l > 0 {
                        sources.push(x);
                    }
                    let fan = net.source_width(&sources)?;
                    let r = rank.map(|r| r.min(width).min(fan));
                    prev = Some(net.add_layer(&format!("layer{l}"), sources, width, r, Activation::Relu, Init::He, rng)?);
                }
                let trunk = Source::Node { index: prev.expect("depth > 0") };
                let density = net.add_layer("density", vec![trunk], 1, None, Activation::Relu, Init::Lecun, rng)?;
                let feature = net.add_layer("feature", vec![trunk], width, None, Activation::Identity, Init::Lecun, rng)?;
                let mut color_in = vec![Source::Node { index: feature }];
                if *dir > 0 {
                    color_in.push(Source::Input { start: *pos, len: *dir });
                }
                let hidden = net.add_layer("color_hidden", color_in, (width / 2).max(1), None, Activation::Relu, Init::He, rng)?;
                let color = net.add_layer("color", vec![Source::Node { index: hidden }], 3, None, Activation::Sigmoid, Init::Lecun, rng)?;
                net.add_head("density", density)?;
                net.add_head("color", color)?;
                Ok(net)
            }
            Architecture::Mlp { width, hidden_layers, rank, out_dim, out_activation } => {
                let [inp] = groups else { return Err(Error::config("mlp architecture takes one input group")) };
                let mut net = FieldNetwork::new(*inp);
                let mut src = Source::Input { start: 0, len: *inp };
                for l in 0..hidden_layers {
                    let fan = net.source_width(&[src])?;
                    let r = rank.map(|r| r.min(width).min(fan));
                    src = Source::Node { index: net.add_layer(&format!("layer{l}"), vec![src], width, r, Activation::Relu, Init::He, rng)? };
                }
                let out = net.add_layer("out", vec![src], out_dim, None, out_activation, Init::Lecun, rng)?;
                net.add_head("out", out)?;
                Ok(net)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn ct_default_shapes() {
        let net = Architecture::ct_default().build(&[131], &mut rng::stream(0, 0)).unwrap();
        assert_eq!(net.input_dim, 131);
        assert_eq!(net.nodes.len(), 3);
        assert_eq!(net.nodes[1].weights.rank(), Some(10));
        assert_eq!(net.nodes[2].out_dim(), 1);
        assert_eq!(net.weight_count(), 131 * 100 + 2 * 100 * 10 + 100);
    }

    #[test]
    fn nerf_default_heads_and_skip() {
        let net = Architecture::nerf_default().build(&[63, 27], &mut rng::stream(0, 0)).unwrap();
        assert_eq!(net.nodes.iter().filter(|n| n.name.starts_with("layer")).count(), 8);
        assert_eq!(net.nodes[5].in_dim(), 256 + 63);
        let x = ndarray::Array2::from_elem((4, 90), 0.3);
        let out = net.forward(x.view()).unwrap();
        assert!(out[0].iter().all(|&s| s >= 0.0));
        assert!(out[1].iter().all(|&c| (0.0..=1.0).contains(&c)));
    }

    #[test]
    fn deformation_outputs_three_components() {
        let net = Architecture::deformation_default().build(&[4], &mut rng::stream(0, 0)).unwrap();
        assert_eq!(net.forward_single(&[0.0; 4]).unwrap()[0].len(), 3);
    }
}
