//! Rays, sampling, volumetric compositing and scene representations.

pub mod camera;
pub mod neural;
pub mod quadrature;
pub mod scene;

pub use camera::{all_pixels, generate_rays, Camera, Ray, Vec3};
pub use neural::{
    train_dnerf, train_nerf, Backend, NerfEncoders, NerfTrainConfig, NetworkDeformation, NeuralField, RaySample,
};
pub use quadrature::{composite, composite_backward, stratified_samples, Composite};
pub use scene::{
    deform_query, AnalyticScene, ConstantVelocity, DeformationField, DeformedField, Primitive, RadianceField, Shape,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub samples: usize,
    pub stratified: bool,
    pub background: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
    #[serde(default)]
    pub time: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { samples: 64, stratified: true, background: [1.0; 3], t_near: 2.0, t_far: 6.0, time: 0.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples per ray must be at least 1"));
        }
        if !(self.t_near < self.t_far) {
            return Err(Error::config("ray bounds need t_near < t_far"));
        }
        Ok(())
    }

    pub fn at_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }
}

/// Rendered colors and per-pixel accumulated weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub image: Image,
    pub opacity: Image,
}

const CHUNK: usize = 512;

/// Sample positions of each ray, drawn from the ray's own stream so results
/// do not depend on batching.
pub fn ray_samples(ray: &Ray, cfg: &RenderConfig, seed: u64, id: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed, id);
    stratified_samples(ray.t_near, ray.t_far, cfg.samples, cfg.stratified, &mut r)
}

/// Renders rays with identifiers `ids` (used to derive their sample streams).
pub fn render_rays(field: &dyn RadianceField, rays: &[Ray], ids: &[u64], cfg: &RenderConfig, seed: u64) -> Result<Vec<Composite>> {
    cfg.validate()?;
    if rays.len() != ids.len() {
        return Err(Error::dim("one id per ray is required"));
    }
    let n = cfg.samples;
    let mut out = Vec::with_capacity(rays.len());
    for (chunk, chunk_ids) in rays.chunks(CHUNK).zip(ids.chunks(CHUNK)) {
        let mut points = Vec::with_capacity(chunk.len() * n);
        let mut dirs = Vec::with_capacity(chunk.len() * n);
        let mut deltas = Vec::with_capacity(chunk.len());
        for (ray, &id) in chunk.iter().zip(chunk_ids) {
            let (t, d) = ray_samples(ray, cfg, seed, id);
            points.extend(t.iter().map(|&t| ray.at(t)));
            dirs.extend(std::iter::repeat_n(ray.dir, n));
            deltas.push(d);
        }
        let (colors, sigmas) = field.query(&points, &dirs, cfg.time)?;
        if colors.len() != points.len() || sigmas.len() != points.len() {
            return Err(Error::dim("field returned a wrong number of samples"));
        }
        for (k, d) in deltas.iter().enumerate() {
            let span = k * n..(k + 1) * n;
            out.push(composite(&colors[span.clone()], &sigmas[span], d, cfg.background)?);
        }
    }
    Ok(out)
}

/// Renders a full image; the ray of pixel `p` (row-major) uses stream `p`.
pub fn render_image(field: &dyn RadianceField, camera: &Camera, cfg: &RenderConfig, seed: u64) -> Result<Rendered> {
    let pixels = all_pixels(camera);
    let rays = generate_rays(camera, &pixels, cfg.t_near, cfg.t_far)?;
    let ids: Vec<u64> = (0..rays.len() as u64).collect();
    let comps = render_rays(field, &rays, &ids, cfg, seed)?;
    let mut image = Image::new(camera.width, camera.height, 3);
    let mut opacity = Image::new(camera.width, camera.height, 1);
    for (p, c) in comps.iter().enumerate() {
        image.data[3 * p..3 * p + 3].copy_from_slice(&c.color);
        opacity.data[p] = c.opacity;
    }
    Ok(Rendered { image, opacity })
}
