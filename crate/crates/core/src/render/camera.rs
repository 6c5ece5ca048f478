use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    scale(a, 1.0 / norm(a))
}

/// A ray `o + t·d` restricted to `[t_near, t_far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        add(self.origin, scale(self.dir, t))
    }
}

/// Pinhole camera. `pose` maps camera to world coordinates; the camera looks
/// down its local −z axis with +y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub pose: [[f64; 4]; 4],
    pub focal: f64,
    pub principal: [f64; 2],
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(pose: [[f64; 4]; 4], focal: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { pose, focal, principal: [width as f64 / 2.0, height as f64 / 2.0], width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("camera resolution must be at least 1x1"));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::config("focal length must be positive"));
        }
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| self.pose[k][i] * self.pose[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - expect).abs() > 1e-6 {
                    return Err(Error::config("camera rotation is not orthonormal"));
                }
            }
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, focal: f64, width: usize, height: usize) -> Result<Self> {
        let back = normalize(sub(eye, target));
        let right = cross(up, back);
        if norm(right) < 1e-12 {
            return Err(Error::config("up vector is parallel to the viewing direction"));
        }
        let right = normalize(right);
        let true_up = cross(back, right);
        let mut pose = [[0.0; 4]; 4];
        for k in 0..3 {
            pose[k][0] = right[k];
            pose[k][1] = true_up[k];
            pose[k][2] = back[k];
            pose[k][3] = eye[k];
        }
        pose[3][3] = 1.0;
        Self::new(pose, focal, width, height)
    }

    /// The `k`-th of `count` poses evenly spaced in azimuth on a sphere of
    /// `radius` around the origin at `elevation` radians.
    pub fn orbit(k: usize, count: usize, radius: f64, elevation: f64, focal: f64, width: usize, height: usize) -> Result<Self> {
        let az = std::f64::consts::TAU * k as f64 / count.max(1) as f64;
        let eye = [radius * elevation.cos() * az.cos(), radius * elevation.cos() * az.sin(), radius * elevation.sin()];
        Self::look_at(eye, [0.0; 3], [0.0, 0.0, 1.0], focal, width, height)
    }

    pub fn origin(&self) -> Vec3 {
        [self.pose[0][3], self.pose[1][3], self.pose[2][3]]
    }

    pub fn forward(&self) -> Vec3 {
        [-self.pose[0][2], -self.pose[1][2], -self.pose[2][2]]
    }

    fn rotate(&self, v: Vec3) -> Vec3 {
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.pose[k][0] * v[0] + self.pose[k][1] * v[1] + self.pose[k][2] * v[2];
        }
        out
    }

    /// Ray through the center of pixel `(x, y)`, with `y` growing downwards.
    pub fn ray(&self, x: usize, y: usize, t_near: f64, t_far: f64) -> Result<Ray> {
        if x >= self.width || y >= self.height {
            return Err(Error::OutOfBounds { row: y, col: x, rows: self.height, cols: self.width });
        }
        let local = [
            (x as f64 + 0.5 - self.principal[0]) / self.focal,
            -(y as f64 + 0.5 - self.principal[1]) / self.focal,
            -1.0,
        ];
        Ok(Ray { origin: self.origin(), dir: normalize(self.rotate(local)), t_near, t_far })
    }
}

/// One ray per requested pixel.
pub fn generate_rays(camera: &Camera, pixels: &[(usize, usize)], t_near: f64, t_far: f64) -> Result<Vec<Ray>> {
    if !(t_near < t_far) {
        return Err(Error::config("ray bounds need t_near < t_far"));
    }
    pixels.iter().map(|&(x, y)| camera.ray(x, y, t_near, t_far)).collect()
}

/// Every pixel in row-major order.
pub fn all_pixels(camera: &Camera) -> Vec<(usize, usize)> {
    (0..camera.height).flat_map(|y| (0..camera.width).map(move |x| (x, y))).collect()
}
