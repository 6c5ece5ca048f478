use std::path::Path;

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{render_image, AnalyticScene, Camera, Primitive, RenderConfig, Shape};

/// Procedural test image: blobs of several sizes and a damped ring texture
/// over a low-frequency gradient, values within `[0.05, 0.95]`.
pub fn synthetic_image(width: usize, height: usize, channels: usize) -> Image {
    let blobs = [
        (0.30, 0.35, 0.012, [0.55, 0.10, 0.30]),
        (0.70, 0.30, 0.020, [-0.35, 0.40, 0.10]),
        (0.55, 0.72, 0.008, [0.30, 0.30, -0.40]),
        (0.20, 0.80, 0.030, [-0.20, -0.25, 0.35]),
        (0.15, 0.15, 0.0008, [0.45, -0.30, 0.20]),
        (0.85, 0.55, 0.0012, [-0.40, 0.35, 0.30]),
        (0.42, 0.52, 0.0006, [0.35, 0.35, -0.35]),
    ];
    let img = Image::from_fn(width, height, channels, |x, y, c| {
        let u = (x as f64 + 0.5) / width as f64;
        let v = (y as f64 + 0.5) / height as f64;
        let k = c % 3;
        let phase = k as f64 * 1.3;
        let tau = std::f64::consts::TAU;
        let mut val = 0.45 + 0.12 * (tau * (u + 0.5 * v) + phase).sin() + 0.08 * (3.0 * v - 2.0 * u).cos();
        for (cx, cy, w, amp) in blobs {
            val += amp[k] * 0.6 * (-((u - cx).powi(2) + (v - cy).powi(2)) / w).exp();
        }
        let r2 = (u - 0.68).powi(2) + (v - 0.7).powi(2);
        val += 0.15 * (tau * 9.0 * r2.sqrt() + phase).sin() * (-r2 / 0.04).exp();
        val
    });
    img.clamped_to(0.05, 0.95)
}

impl Image {
    fn clamped_to(&self, lo: f64, hi: f64) -> Image {
        Image { data: self.data.iter().map(|v| v.clamp(lo, hi)).collect(), ..self.clone() }
    }
}

/// Procedural scene, camera rig and optional motion sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub poses: usize,
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub elevation: f64,
    pub focal: f64,
    /// Frame times; when non-empty, pose `k` is rendered at `times[k % len]`.
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub render: RenderConfig,
}

impl SceneSpec {
    /// Desk-scale default: one red sphere and a blue box, 8 poses at 64×64.
    pub fn desk() -> Self {
        Self {
            primitives: vec![
                Primitive { shape: Shape::Sphere { center: [0.0, 0.0, 0.2], radius: 0.6 }, sigma: 8.0, color: [0.9, 0.2, 0.15], velocity: [0.0; 3] },
                Primitive {
                    shape: Shape::Cuboid { center: [0.3, -0.2, -0.5], half_extent: [0.45, 0.3, 0.25] },
                    sigma: 5.0,
                    color: [0.15, 0.3, 0.85],
                    velocity: [0.0; 3],
                },
            ],
            poses: 8,
            width: 64,
            height: 64,
            radius: 4.0,
            elevation: 0.4,
            focal: 80.0,
            times: Vec::new(),
            render: RenderConfig::default(),
        }
    }

    /// Moves every primitive at `velocity` and samples `frames` times in `[0, 1]`.
    pub fn with_motion(mut self, velocity: [f64; 3], frames: usize) -> Self {
        for p in &mut self.primitives {
            p.velocity = velocity;
        }
        self.times = (0..frames).map(|k| if frames > 1 { k as f64 / (frames - 1) as f64 } else { 0.0 }).collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        AnalyticScene { primitives: self.primitives.clone() }.validate()?;
        self.render.validate()?;
        if self.poses == 0 || self.width == 0 || self.height == 0 || !(self.focal > 0.0) {
            return Err(Error::config("scene needs poses, a positive image size and focal length"));
        }
        if !(self.radius > self.render.t_near) {
            return Err(Error::config("camera radius must exceed t_near"));
        }
        Ok(())
    }

    pub fn time_of(&self, k: usize) -> f64 {
        if self.times.is_empty() {
            0.0
        } else {
            self.times[k % self.times.len()]
        }
    }
}

/// A rendered synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub scene: AnalyticScene,
    pub cameras: Vec<Camera>,
    pub times: Vec<f64>,
    pub images: Vec<Image>,
}

/// Contents of `poses.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseFile {
    pub cameras: Vec<Camera>,
    pub times: Vec<f64>,
}

/// Renders every pose of `spec` with the analytic scene as ground truth.
pub fn make_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let scene = AnalyticScene::new(spec.primitives.clone())?;
    let mut cameras = Vec::with_capacity(spec.poses);
    let mut times = Vec::with_capacity(spec.poses);
    let mut images = Vec::with_capacity(spec.poses);
    for k in 0..spec.poses {
        let cam = Camera::orbit(k, spec.poses, spec.radius, spec.elevation, spec.focal, spec.width, spec.height)?;
        let t = spec.time_of(k);
        let cfg = spec.render.clone().at_time(t);
        images.push(render_image(&scene, &cam, &cfg, crate::rng::mix(&[seed, k as u64]))?.image);
        cameras.push(cam);
        times.push(t);
    }
    Ok(SyntheticScene { scene, cameras, times, images })
}

impl SyntheticScene {
    pub fn poses(&self) -> PoseFile {
        PoseFile { cameras: self.cameras.clone(), times: self.times.clone() }
    }

    /// Writes `view_XXX.ppm` files and a `poses.toml` next to them.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (k, img) in self.images.iter().enumerate() {
            img.save_ppm(&dir.join(format!("view_{k:03}.ppm")))?;
        }
        let poses = self.poses();
        let text = toml::to_string(&poses).map_err(|e| Error::data(e.to_string()))?;
        atomic_write(&dir.join("poses.toml"), text.as_bytes())
    }
}

/// Reads a pose file written by [`SyntheticScene::save`].
pub fn load_poses(path: &Path) -> Result<(Vec<Camera>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p: PoseFile = toml::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    Ok((p.cameras, p.times))
}
