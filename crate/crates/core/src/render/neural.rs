use std::cell::RefCell;

use ndarray::{concatenate, s, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::{add, Ray, Vec3};
use super::quadrature::{composite, composite_backward, stratified_samples};
use super::scene::{DeformationField, RadianceField};
use super::RenderConfig;
use crate::device::ConverterSpec;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::field::{Adam, AdamConfig, DeployedNetwork, FieldNetwork, ForwardCache, TrainReport};
use crate::rng::{self, SimRng};

/// Position and (optional) view-direction encoders of a radiance network.
#[derive(Debug, Clone)]
pub struct NerfEncoders {
    pub position: Encoder,
    pub direction: Option<Encoder>,
}

impl NerfEncoders {
    /// Input group widths, position first.
    pub fn groups(&self) -> [usize; 2] {
        [self.position.output_dim(), self.direction.as_ref().map_or(0, |e| e.output_dim())]
    }

    fn rows(points: &[Vec3]) -> Array2<f64> {
        Array2::from_shape_fn((points.len(), 3), |(i, k)| points[i][k])
    }

    pub fn features(&self, points: &[Vec3], dirs: &[Vec3]) -> Result<Array2<f64>> {
        let p = self.position.encode_batch(Self::rows(points).view())?;
        match &self.direction {
            None => Ok(p),
            Some(e) => {
                let d = e.encode_batch(Self::rows(dirs).view())?;
                Ok(concatenate(Axis(1), &[p.view(), d.view()]).expect("rows agree"))
            }
        }
    }

    fn features_hardware<R: Rng + ?Sized>(
        &self,
        points: &[Vec3],
        dirs: &[Vec3],
        conv: &ConverterSpec,
        read_std_rel: f64,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let p = self.position.encode_batch_hardware(Self::rows(points).view(), conv, read_std_rel, rng)?;
        match &self.direction {
            None => Ok(p),
            Some(e) => {
                let d = e.encode_batch_hardware(Self::rows(dirs).view(), conv, read_std_rel, rng)?;
                Ok(concatenate(Axis(1), &[p.view(), d.view()]).expect("rows agree"))
            }
        }
    }
}

/// Where the network's matrix products run.
pub enum Backend<'a> {
    Software,
    /// Crossbar inference; Gaussian encoders also project on their formed
    /// arrays through `encoder_converter`.
    Hardware { deployed: &'a DeployedNetwork, encoder_converter: ConverterSpec },
}

/// A radiance network with `density` and `color` heads as a [`RadianceField`].
pub struct NeuralField<'a> {
    pub net: &'a FieldNetwork,
    pub encoders: &'a NerfEncoders,
    pub backend: Backend<'a>,
    rng: RefCell<SimRng>,
}

impl<'a> NeuralField<'a> {
    pub fn software(net: &'a FieldNetwork, encoders: &'a NerfEncoders) -> Self {
        Self { net, encoders, backend: Backend::Software, rng: RefCell::new(rng::stream(0, 0)) }
    }

    pub fn hardware(deployed: &'a DeployedNetwork, encoders: &'a NerfEncoders, encoder_converter: ConverterSpec, seed: u64) -> Self {
        Self {
            net: &deployed.net,
            encoders,
            backend: Backend::Hardware { deployed, encoder_converter },
            rng: RefCell::new(rng::stream(seed, 0x6877)),
        }
    }
}

fn unpack(density: &Array2<f64>, color: &Array2<f64>) -> (Vec<[f64; 3]>, Vec<f64>) {
    let c = color.outer_iter().map(|r| [r[0], r[1], r[2]]).collect();
    (c, density.column(0).to_vec())
}

impl RadianceField for NeuralField<'_> {
    fn query(&self, points: &[Vec3], dirs: &[Vec3], _time: f64) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        match &self.backend {
            Backend::Software => {
                let f = self.encoders.features(points, dirs)?;
                let cache = self.net.forward_cached(f.view())?;
                Ok(unpack(cache.head(self.net, "density")?, cache.head(self.net, "color")?))
            }
            Backend::Hardware { deployed, encoder_converter } => {
                let mut r = self.rng.borrow_mut();
                let f = self.encoders.features_hardware(points, dirs, encoder_converter, deployed.noise.read_std_rel, &mut *r)?;
                let d = deployed.hw_forward_head(f.view(), "density", &mut *r)?;
                let c = deployed.hw_forward_head(f.view(), "color", &mut *r)?;
                Ok(unpack(&d, &c))
            }
        }
    }
}

/// A deformation network over encoded `(x, y, z, t)` with a 3-wide `out` head.
pub struct NetworkDeformation<'a> {
    pub net: &'a FieldNetwork,
    pub encoder: &'a Encoder,
}

fn space_time(points: &[Vec3], time: f64) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 4), |(i, k)| if k < 3 { points[i][k] } else { time })
}

impl DeformationField for NetworkDeformation<'_> {
    fn displacement(&self, points: &[Vec3], time: f64) -> Result<Vec<Vec3>> {
        let f = self.encoder.encode_batch(space_time(points, time).view())?;
        let out = self.net.forward_head(f.view(), "out")?;
        if out.ncols() != 3 {
            return Err(Error::dim("deformation head must have 3 outputs"));
        }
        Ok(out.outer_iter().map(|r| [r[0], r[1], r[2]]).collect())
    }
}

/// A training ray with its reference color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaySample {
    pub ray: Ray,
    pub color: [f64; 3],
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerfTrainConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub render: RenderConfig,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl NerfTrainConfig {
    /// 4096 rays of 64 samples, Adam with `ε = 1e-7` and the learning rate
    /// decaying from `5e-4` to `5e-5`.
    pub fn full_scale(iterations: usize) -> Self {
        Self {
            iterations,
            batch_rays: 4096,
            render: RenderConfig::default(),
            adam: AdamConfig::new(5e-4).with_decay(5e-5).with_eps(1e-7),
            seed: 0,
        }
    }
}

struct Batch {
    points: Vec<Vec3>,
    dirs: Vec<Vec3>,
    deltas: Vec<Vec<f64>>,
    times: Vec<f64>,
    targets: Vec<[f64; 3]>,
}

fn draw_batch(data: &[RaySample], cfg: &NerfTrainConfig, r: &mut SimRng) -> Batch {
    let n = cfg.render.samples;
    let mut b = Batch { points: Vec::new(), dirs: Vec::new(), deltas: Vec::new(), times: Vec::new(), targets: Vec::new() };
    for _ in 0..cfg.batch_rays.min(data.len()).max(1) {
        let s = &data[r.random_range(0..data.len())];
        let (t, d) = stratified_samples(s.ray.t_near, s.ray.t_far, n, cfg.render.stratified, r);
        b.points.extend(t.iter().map(|&t| s.ray.at(t)));
        b.dirs.extend(std::iter::repeat_n(s.ray.dir, n));
        b.deltas.push(d);
        b.times.push(s.time);
        b.targets.push(s.color);
    }
    b
}

/// Photometric loss of a batch and its gradients at the density and color heads.
fn photometric(
    net: &FieldNetwork,
    cache: &ForwardCache,
    batch: &Batch,
    background: [f64; 3],
) -> Result<(f64, Vec<Option<Array2<f64>>>)> {
    let n = batch.deltas[0].len();
    let (colors, sigmas) = unpack(cache.head(net, "density")?, cache.head(net, "color")?);
    let rays = batch.deltas.len();
    let mut gd = Array2::zeros((rays * n, 1));
    let mut gc = Array2::zeros((rays * n, 3));
    let mut loss = 0.0;
    let norm = 1.0 / (3 * rays) as f64;
    for k in 0..rays {
        let span = k * n..(k + 1) * n;
        let comp = composite(&colors[span.clone()], &sigmas[span.clone()], &batch.deltas[k], background)?;
        let mut g = [0.0; 3];
        for c in 0..3 {
            let e = comp.color[c] - batch.targets[k][c];
            loss += e * e * norm;
            g[c] = 2.0 * e * norm;
        }
        let (dc, ds) = composite_backward(&colors[span.clone()], &batch.deltas[k], &comp, background, g);
        for (i, j) in span.enumerate() {
            gd[[j, 0]] = ds[i];
            for c in 0..3 {
                gc[[j, c]] = dc[i][c];
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::Numerical("radiance training diverged".into()));
    }
    let grads = net
        .heads
        .iter()
        .map(|(name, _)| match name.as_str() {
            "density" => Some(gd.clone()),
            "color" => Some(gc.clone()),
            _ => None,
        })
        .collect();
    Ok((loss, grads))
}

/// Fits a static radiance network to reference rays by backpropagating the
/// photometric error through the compositing quadrature.
pub fn train_nerf(net: &mut FieldNetwork, encoders: &NerfEncoders, data: &[RaySample], cfg: &NerfTrainConfig) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::data("no training rays"));
    }
    cfg.render.validate()?;
    cfg.adam.validate()?;
    let mut r = rng::stream(cfg.seed, 0x6e72);
    let mut adam = Adam::new(cfg.adam.clone(), net.param_count());
    let mut params = net.params();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = draw_batch(data, cfg, &mut r);
        let f = encoders.features(&batch.points, &batch.dirs)?;
        let cache = net.forward_cached(f.view())?;
        let (loss, grads) = photometric(net, &cache, &batch, cfg.render.background)?;
        let g = net.backward(&cache, &grads)?;
        adam.step(&mut params, &g, cfg.adam.lr_at(it, cfg.iterations));
        net.set_params(&params)?;
        trace.push(loss);
    }
    Ok(TrainReport { loss_trace: trace })
}

/// Jointly fits a deformation network (over encoded `(x, t)`) and a canonical
/// radiance network. Samples at `t = 0` bypass the deformation.
pub fn train_dnerf(
    deformation: &mut FieldNetwork,
    deformation_encoder: &Encoder,
    canonical: &mut FieldNetwork,
    encoders: &NerfEncoders,
    data: &[RaySample],
    cfg: &NerfTrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::data("no training rays"));
    }
    cfg.render.validate()?;
    cfg.adam.validate()?;
    let n = cfg.render.samples;
    let mut r = rng::stream(cfg.seed, 0x646e);
    let mut adam_c = Adam::new(cfg.adam.clone(), canonical.param_count());
    let mut adam_d = Adam::new(cfg.adam.clone(), deformation.param_count());
    let (mut pc, mut pd) = (canonical.params(), deformation.params());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch = draw_batch(data, cfg, &mut r);
        let times: Vec<f64> = batch.times.iter().flat_map(|&t| std::iter::repeat_n(t, n)).collect();
        let st = Array2::from_shape_fn((batch.points.len(), 4), |(i, k)| if k < 3 { batch.points[i][k] } else { times[i] });
        let df = deformation_encoder.encode_batch(st.view())?;
        let dcache = deformation.forward_cached(df.view())?;
        let delta = dcache.head(deformation, "out")?;
        let moved: Vec<Vec3> = batch
            .points
            .iter()
            .enumerate()
            .map(|(i, &p)| if times[i] == 0.0 { p } else { add(p, [delta[[i, 0]], delta[[i, 1]], delta[[i, 2]]]) })
            .collect();
        let f = encoders.features(&moved, &batch.dirs)?;
        let cache = canonical.forward_cached(f.view())?;
        let (loss, grads) = photometric(canonical, &cache, &batch, cfg.render.background)?;
        let (gc, gin) = canonical.backward_full(&cache, &grads)?;
        let pos_w = encoders.position.output_dim();
        let gq = encoders.position.backward(f.slice(s![.., ..pos_w]), gin.slice(s![.., ..pos_w]))?;
        let mut gdelta = gq;
        for (i, &t) in times.iter().enumerate() {
            if t == 0.0 {
                gdelta.row_mut(i).fill(0.0);
            }
        }
        let dgrads: Vec<Option<Array2<f64>>> =
            deformation.heads.iter().map(|(name, _)| (name == "out").then(|| gdelta.clone())).collect();
        let gd = deformation.backward(&dcache, &dgrads)?;
        let lr = cfg.adam.lr_at(it, cfg.iterations);
        adam_c.step(&mut pc, &gc, lr);
        adam_d.step(&mut pd, &gd, lr);
        canonical.set_params(&pc)?;
        deformation.set_params(&pd)?;
        trace.push(loss);
    }
    Ok(TrainReport { loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{Chip, ConverterBits, NoiseModel};
    use crate::encoder::{EncoderConfig, EncodingMode};
    use crate::field::{deploy, Architecture, DeployConfig};
    use crate::render::{render_image, AnalyticScene, Camera};

    fn encoders() -> NerfEncoders {
        let noise = NoiseModel::fitted();
        NerfEncoders {
            position: Encoder::new(EncoderConfig::new(EncodingMode::Gaussian, 3, 16).with_sigma(0.5).with_concat(true), &noise).unwrap(),
            direction: Some(Encoder::new(EncoderConfig::new(EncodingMode::Positional, 3, 2), &noise).unwrap()),
        }
    }

    fn small_net(enc: &NerfEncoders) -> FieldNetwork {
        let groups = enc.groups();
        Architecture::Nerf { width: 24, depth: 3, rank: Some(6), skip: 2 }.build(&groups, &mut rng::stream(1, 0)).unwrap()
    }

    fn camera() -> Camera {
        Camera::look_at([0.0, -4.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 10.0, 8, 8).unwrap()
    }

    #[test]
    fn software_and_ideal_hardware_renders_agree() {
        let enc = encoders();
        let net = small_net(&enc);
        let cam = camera();
        let cfg = RenderConfig { samples: 16, ..RenderConfig::default() };
        let rays: Vec<Vec3> = (0..64).map(|i| [0.02 * i as f64 - 0.6, 0.1, 0.3]).collect();
        let calib = enc.features(&rays, &vec![[0.0, 1.0, 0.0]; 64]).unwrap();
        let noise = NoiseModel::fitted().with_read_noise(0.0);
        let mut r = rng::stream(2, 0);
        let dcfg = DeployConfig::haq(vec![12], 1.5).with_converters(ConverterBits::ideal());
        let deployed = deploy(&net, &dcfg, calib.view(), &noise, Chip::unlimited(), &mut r).unwrap();
        let programmed = deployed.programmed_network().unwrap();
        let sw = render_image(&NeuralField::software(&programmed, &enc), &cam, &cfg, 3).unwrap();
        let hw = render_image(&NeuralField::hardware(&deployed, &enc, ConverterSpec::ideal(), 0), &cam, &cfg, 3).unwrap();
        for (a, b) in sw.image.data.iter().zip(&hw.image.data) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_deformation_network_is_identity() {
        let enc = Encoder::new(EncoderConfig::new(EncodingMode::Basic, 4, 0), &NoiseModel::fitted()).unwrap();
        let mut net = Architecture::deformation_default().build(&[8], &mut rng::stream(0, 0)).unwrap();
        let n = net.param_count();
        net.set_params(&vec![0.0; n]).unwrap();
        let d = NetworkDeformation { net: &net, encoder: &enc };
        assert!(d.displacement(&[[0.3, 0.1, -0.2]], 0.7).unwrap().iter().all(|v| *v == [0.0; 3]));
    }

    fn dataset(scene: &AnalyticScene, time: f64) -> Vec<RaySample> {
        let cam = camera();
        let cfg = RenderConfig { samples: 32, stratified: false, ..RenderConfig::default() }.at_time(time);
        let img = render_image(scene, &cam, &cfg, 0).unwrap().image;
        crate::render::all_pixels(&cam)
            .into_iter()
            .map(|(x, y)| RaySample {
                ray: cam.ray(x, y, 2.0, 6.0).unwrap(),
                color: [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)],
                time,
            })
            .collect()
    }

    #[test]
    fn radiance_training_reduces_loss() {
        let scene = AnalyticScene::single_sphere(1.0, 5.0, [0.8, 0.2, 0.2]);
        let data = dataset(&scene, 0.0);
        let enc = encoders();
        let mut net = small_net(&enc);
        let cfg = NerfTrainConfig {
            iterations: 60,
            batch_rays: 32,
            render: RenderConfig { samples: 16, ..RenderConfig::default() },
            adam: AdamConfig::new(5e-3),
            seed: 1,
        };
        let rep = train_nerf(&mut net, &enc, &data, &cfg).unwrap();
        let head: f64 = rep.loss_trace[..10].iter().sum();
        let tail: f64 = rep.loss_trace[50..].iter().sum();
        assert!(tail < 0.7 * head, "{head} -> {tail}");
    }

    #[test]
    fn dynamic_training_runs_and_is_deterministic() {
        let mut scene = AnalyticScene::single_sphere(0.8, 5.0, [0.2, 0.7, 0.2]);
        scene.primitives[0].velocity = [0.4, 0.0, 0.0];
        let mut data = dataset(&scene, 0.0);
        data.extend(dataset(&scene, 0.5));
        let enc = encoders();
        let denc = Encoder::new(EncoderConfig::new(EncodingMode::Basic, 4, 0).with_concat(true), &NoiseModel::fitted()).unwrap();
        let cfg = NerfTrainConfig {
            iterations: 5,
            batch_rays: 16,
            render: RenderConfig { samples: 8, ..RenderConfig::default() },
            adam: AdamConfig::new(1e-3),
            seed: 2,
        };
        let run = || {
            let mut canon = small_net(&enc);
            let mut def = Architecture::deformation_default().build(&[denc.output_dim()], &mut rng::stream(3, 0)).unwrap();
            train_dnerf(&mut def, &denc, &mut canon, &enc, &data, &cfg).unwrap()
        };
        let a = run();
        assert!(a.loss_trace.iter().all(|l| l.is_finite()));
        assert_eq!(a, run());
    }
}
