use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::Rng as _;

use crate::geometry::PointCloud;
use crate::rng::{self, streams, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    Box { extents: [f64; 3] },
    /// Axis along z, closed with caps.
    Cylinder { radius: f64, height: f64 },
    /// Axis along z.
    Torus { major: f64, minor: f64 },
}

impl ShapeKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Sphere { .. } => "sphere",
            Self::Box { .. } => "box",
            Self::Cylinder { .. } => "cylinder",
            Self::Torus { .. } => "torus",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Sphere { radius } => vec![radius],
            Self::Box { extents } => extents.to_vec(),
            Self::Cylinder { radius, height } => vec![radius, height],
            Self::Torus { major, minor } => vec![major, minor],
        }
    }

    /// Builds a kind from its name and positional parameters.
    pub fn from_parts(name: &str, params: &[f64]) -> Result<Self> {
        let kind = match (name, params) {
            ("sphere", &[radius]) => Self::Sphere { radius },
            ("box", &[x, y, z]) => Self::Box { extents: [x, y, z] },
            ("cylinder", &[radius, height]) => Self::Cylinder { radius, height },
            ("torus", &[major, minor]) => Self::Torus { major, minor },
            ("sphere" | "box" | "cylinder" | "torus", _) => {
                return Err(Error::invalid(format!(
                    "wrong parameter count {} for {name}",
                    params.len()
                )))
            }
            (other, _) => return Err(Error::invalid(format!("unknown shape kind '{other}'"))),
        };
        Ok(kind)
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        for p in self.params() {
            write!(f, " {p}")?;
        }
        Ok(())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    /// `"<name> <p0> <p1> ..."`.
    fn from_str(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let name = it.next().ok_or_else(|| Error::invalid("empty shape description"))?;
        let params = it
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("shape parameter: {e}")))?;
        Self::from_parts(name, &params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub n_points: usize,
    pub seed: u64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_points < 8 {
            return Err(Error::invalid("shapes need at least 8 points"));
        }
        if !self.kind.params().iter().all(|&p| p > 0.0 && p.is_finite()) {
            return Err(Error::invalid(format!("shape parameters must be positive: {}", self.kind)));
        }
        if let ShapeKind::Torus { major, minor } = self.kind {
            if minor >= major {
                return Err(Error::invalid("torus minor radius must be below the major radius"));
            }
        }
        Ok(())
    }
}

fn unit_sphere(rng: &mut Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng::standard_normal(rng),
            rng::standard_normal(rng),
            rng::standard_normal(rng),
        );
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn box_point(rng: &mut Rng, e: [f64; 3]) -> Vector3<f64> {
    // Face pairs normal to x, y, z, weighted by area.
    let areas = [e[1] * e[2], e[0] * e[2], e[0] * e[1]];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut axis = 2;
    for (k, a) in areas.iter().enumerate() {
        if pick < *a {
            axis = k;
            break;
        }
        pick -= a;
    }
    let mut p = Vector3::new(
        rng.random_range(-0.5..0.5) * e[0],
        rng.random_range(-0.5..0.5) * e[1],
        rng.random_range(-0.5..0.5) * e[2],
    );
    p[axis] = if rng.random_bool(0.5) { 0.5 } else { -0.5 } * e[axis];
    p
}

fn cylinder_point(rng: &mut Rng, radius: f64, height: f64) -> Vector3<f64> {
    let side = TAU * radius * height;
    let cap = std::f64::consts::PI * radius * radius;
    let pick = rng.random_range(0.0..side + 2.0 * cap);
    let theta = rng.random_range(0.0..TAU);
    if pick < side {
        let z = rng.random_range(-0.5..0.5) * height;
        Vector3::new(radius * theta.cos(), radius * theta.sin(), z)
    } else {
        let r = radius * rng.random_range(0.0f64..1.0).sqrt();
        let z = if pick < side + cap { 0.5 } else { -0.5 } * height;
        Vector3::new(r * theta.cos(), r * theta.sin(), z)
    }
}

fn torus_point(rng: &mut Rng, major: f64, minor: f64) -> Vector3<f64> {
    // Area element ∝ (R + r cos v); rejection-sample v.
    let v = loop {
        let v = rng.random_range(0.0..TAU);
        if rng.random_range(0.0..major + minor) <= major + minor * v.cos() {
            break v;
        }
    };
    let u = rng.random_range(0.0..TAU);
    let ring = major + minor * v.cos();
    Vector3::new(ring * u.cos(), ring * u.sin(), minor * v.sin())
}

/// Uniform surface samples of the primitive, centered at the origin.
pub fn sample_shape(spec: &ShapeSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, streams::DATA);
    let points = (0..spec.n_points)
        .map(|_| match spec.kind {
            ShapeKind::Sphere { radius } => unit_sphere(&mut rng) * radius,
            ShapeKind::Box { extents } => box_point(&mut rng, extents),
            ShapeKind::Cylinder { radius, height } => cylinder_point(&mut rng, radius, height),
            ShapeKind::Torus { major, minor } => torus_point(&mut rng, major, minor),
        })
        .collect();
    PointCloud::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ShapeKind) -> ShapeSpec {
        ShapeSpec {
            kind,
            n_points: 2000,
            seed: 9,
        }
    }

    #[test]
    fn sphere_on_surface() {
        let c = sample_shape(&spec(ShapeKind::Sphere { radius: 1.0 })).unwrap();
        assert!(c.positions().iter().all(|p| (p.norm() - 1.0).abs() < 1e-9));
    }

    #[test]
    fn box_on_faces() {
        let c = sample_shape(&spec(ShapeKind::Box { extents: [1.0; 3] })).unwrap();
        for p in c.positions() {
            let on_face = p.iter().filter(|v| (v.abs() - 0.5).abs() < 1e-12).count();
            assert_eq!(on_face, 1, "{p}");
            assert!(p.iter().all(|v| v.abs() <= 0.5));
        }
    }

    #[test]
    fn torus_implicit_residual() {
        let c = sample_shape(&spec(ShapeKind::Torus { major: 1.0, minor: 0.3 })).unwrap();
        for p in c.positions() {
            let r = ((p.x * p.x + p.y * p.y).sqrt() - 1.0).powi(2) + p.z * p.z;
            assert!((r - 0.09).abs() < 1e-9);
        }
    }

    #[test]
    fn cylinder_on_surface() {
        let c = sample_shape(&spec(ShapeKind::Cylinder { radius: 0.5, height: 2.0 })).unwrap();
        for p in c.positions() {
            let rho = (p.x * p.x + p.y * p.y).sqrt();
            let side = (rho - 0.5).abs() < 1e-12 && p.z.abs() <= 1.0;
            let cap = (p.z.abs() - 1.0).abs() < 1e-12 && rho <= 0.5 + 1e-12;
            assert!(side || cap, "{p}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = spec(ShapeKind::Sphere { radius: 1.0 });
        assert_eq!(sample_shape(&s).unwrap(), sample_shape(&s).unwrap());
        let other = ShapeSpec { seed: 10, ..s };
        assert_ne!(sample_shape(&s).unwrap(), sample_shape(&other).unwrap());
    }

    #[test]
    fn parsing_and_validation() {
        assert_eq!(
            "torus 1 0.3".parse::<ShapeKind>().unwrap(),
            ShapeKind::Torus { major: 1.0, minor: 0.3 }
        );
        assert!("pyramid 1".parse::<ShapeKind>().is_err());
        assert!("box 1 2".parse::<ShapeKind>().is_err());
        let bad = ShapeSpec {
            kind: ShapeKind::Sphere { radius: -1.0 },
            n_points: 10,
            seed: 0,
        };
        assert!(sample_shape(&bad).is_err());
        let few = ShapeSpec {
            n_points: 7,
            ..spec(ShapeKind::Sphere { radius: 1.0 })
        };
        assert!(sample_shape(&few).is_err());
    }
}
