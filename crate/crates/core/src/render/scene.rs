use serde::{Deserialize, Serialize};

use super::camera::{add, scale, sub, Vec3};
use crate::error::{Error, Result};

/// Anything that maps sample points (and view directions) to color and density.
pub trait RadianceField {
    fn query(&self, points: &[Vec3], dirs: &[Vec3], time: f64) -> Result<(Vec<[f64; 3]>, Vec<f64>)>;
}

/// Maps points at time `t` to displacements into the canonical frame.
pub trait DeformationField {
    fn displacement(&self, points: &[Vec3], time: f64) -> Result<Vec<Vec3>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    Cuboid { center: Vec3, half_extent: Vec3 },
}

/// A constant-density, constant-color solid, optionally moving at `velocity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub sigma: f64,
    pub color: [f64; 3],
    #[serde(default)]
    pub velocity: Vec3,
}

impl Primitive {
    fn contains(&self, p: Vec3, time: f64) -> bool {
        let p = sub(p, scale(self.velocity, time));
        match self.shape {
            Shape::Sphere { center, radius } => {
                let d = sub(p, center);
                d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= radius * radius
            }
            Shape::Cuboid { center, half_extent } => (0..3).all(|k| (p[k] - center[k]).abs() <= half_extent[k]),
        }
    }
}

/// Procedural emissive scene with analytic geometry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        let s = Self { primitives };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            let degenerate = match p.shape {
                Shape::Sphere { radius, .. } => !(radius > 0.0),
                Shape::Cuboid { half_extent, .. } => half_extent.iter().any(|h| !(*h > 0.0)),
            };
            if degenerate || !(p.sigma >= 0.0) || p.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(Error::config("degenerate scene primitive"));
            }
        }
        Ok(())
    }

    pub fn single_sphere(radius: f64, sigma: f64, color: [f64; 3]) -> Self {
        Self { primitives: vec![Primitive { shape: Shape::Sphere { center: [0.0; 3], radius }, sigma, color, velocity: [0.0; 3] }] }
    }

    /// The same scene with every primitive moved by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        let mut s = self.clone();
        for p in &mut s.primitives {
            p.shape = match p.shape {
                Shape::Sphere { center, radius } => Shape::Sphere { center: add(center, offset), radius },
                Shape::Cuboid { center, half_extent } => Shape::Cuboid { center: add(center, offset), half_extent },
            };
        }
        s
    }

    pub fn at(&self, p: Vec3, time: f64) -> ([f64; 3], f64) {
        let mut sigma = 0.0;
        let mut color = [0.0; 3];
        for prim in &self.primitives {
            if prim.contains(p, time) {
                sigma += prim.sigma;
                for k in 0..3 {
                    color[k] += prim.sigma * prim.color[k];
                }
            }
        }
        if sigma > 0.0 {
            for c in &mut color {
                *c /= sigma;
            }
        }
        (color, sigma)
    }
}

impl RadianceField for AnalyticScene {
    fn query(&self, points: &[Vec3], _dirs: &[Vec3], time: f64) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        Ok(points.iter().map(|&p| self.at(p, time)).unzip())
    }
}

/// Rigid motion at constant velocity: a point seen at time `t` comes from
/// `x − v·t` in the canonical frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantVelocity {
    pub velocity: Vec3,
}

impl DeformationField for ConstantVelocity {
    fn displacement(&self, points: &[Vec3], time: f64) -> Result<Vec<Vec3>> {
        Ok(vec![scale(self.velocity, -time); points.len()])
    }
}

/// Queries `canonical` at `x + Δx`, with `Δx = 0` at `t = 0` regardless of the
/// deformation field. The view direction is passed through undeformed.
pub fn deform_query(
    deformation: &dyn DeformationField,
    canonical: &dyn RadianceField,
    points: &[Vec3],
    dirs: &[Vec3],
    time: f64,
) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
    if time == 0.0 {
        return canonical.query(points, dirs, 0.0);
    }
    let dx = deformation.displacement(points, time)?;
    if dx.len() != points.len() {
        return Err(Error::dim("deformation returned a wrong number of displacements"));
    }
    let moved: Vec<Vec3> = points.iter().zip(&dx).map(|(&p, &d)| add(p, d)).collect();
    canonical.query(&moved, dirs, 0.0)
}

/// A dynamic scene as a deformation of a canonical field.
pub struct DeformedField<'a> {
    pub deformation: &'a dyn DeformationField,
    pub canonical: &'a dyn RadianceField,
}

impl RadianceField for DeformedField<'_> {
    fn query(&self, points: &[Vec3], dirs: &[Vec3], time: f64) -> Result<(Vec<[f64; 3]>, Vec<f64>)> {
        deform_query(self.deformation, self.canonical, points, dirs, time)
    }
}
