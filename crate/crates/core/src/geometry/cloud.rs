use nalgebra::Vector3;

use super::Camera;
use crate::{Error, Result};

/// Row-major `N × C` per-point feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    width: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn zeros(rows: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; rows * width],
        }
    }

    pub fn from_rows(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 && !data.is_empty() {
            return Err(Error::shape("zero-width features with data"));
        }
        if width > 0 && data.len() % width != 0 {
            return Err(Error::shape(format!(
                "feature buffer of {} values is not a multiple of width {width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self { width, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rows(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Reorders rows so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.row(p));
        }
        Self {
            width: self.width,
            data,
        }
    }
}

/// `N` points in 3D with optional per-point features.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vector3<f64>>,
    features: Option<Features>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("point cloud must contain at least one point"));
        }
        if positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::invalid("non-finite point coordinate"));
        }
        Ok(Self {
            positions,
            features: None,
        })
    }

    pub fn from_xyz(points: &[[f64; 3]]) -> Result<Self> {
        Self::new(points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect())
    }

    pub fn with_features(mut self, features: Features) -> Result<Self> {
        if features.rows() != self.len() && !(features.width() == 0) {
            return Err(Error::shape(format!(
                "{} feature rows for {} points",
                features.rows(),
                self.len()
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn without_features(mut self) -> Self {
        self.features = None;
        self
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn features(&self) -> Option<&Features> {
        self.features.as_ref()
    }

    pub fn feature_width(&self) -> usize {
        self.features.as_ref().map_or(0, Features::width)
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let sum: Vector3<f64> = self.positions.iter().sum();
        sum / self.len() as f64
    }

    /// Largest distance of any point from the origin.
    pub fn max_radius(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.norm())
            .fold(0.0, f64::max)
    }

    /// Applies `f` to every position, keeping features.
    pub fn map_positions(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Self {
            positions: self.positions.iter().map(f).collect(),
            features: self.features.clone(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            positions: perm.iter().map(|&i| self.positions[i]).collect(),
            features: self.features.as_ref().map(|f| f.permuted(perm)),
        }
    }
}

/// Affine map taking an input cloud to its canonical frame:
/// `canonical = (p - offset) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: Vector3<f64>,
}

impl Normalization {
    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_positions(|p| (p - self.offset) / self.scale)
    }

    pub fn invert(&self, cloud: &PointCloud) -> PointCloud {
        cloud.map_positions(|p| p * self.scale + self.offset)
    }
}

/// Centers the cloud at the origin and scales its max radius to 1.
pub fn normalize(cloud: &PointCloud) -> Result<(PointCloud, Normalization)> {
    let offset = cloud.centroid();
    let scale = cloud
        .positions()
        .iter()
        .map(|p| (p - offset).norm())
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let norm = Normalization { scale, offset };
    Ok((norm.apply(cloud), norm))
}

/// Maps every point into the camera frame: `R·p + T`.
pub fn transform(cloud: &PointCloud, cam: &Camera) -> PointCloud {
    cloud.map_positions(|p| cam.to_camera(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Camera;
    use nalgebra::Matrix3;

    fn rot_z(deg: f64) -> Matrix3<f64> {
        let (s, c) = deg.to_radians().sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn normalize_two_points() {
        let cloud = PointCloud::from_xyz(&[[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]]).unwrap();
        let (n, t) = normalize(&cloud).unwrap();
        assert_eq!(t.offset, Vector3::new(3.0, 0.0, 0.0));
        assert_eq!(t.scale, 1.0);
        assert_eq!(n.positions()[0], Vector3::new(-1.0, 0.0, 0.0));
        assert_eq!(n.positions()[1], Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn normalize_fixed_point() {
        // Octahedron vertices: centered, unit radius.
        let cloud = PointCloud::from_xyz(&[
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ])
        .unwrap();
        let (n, t) = normalize(&cloud).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(t.offset, Vector3::zeros());
        assert_eq!(n, cloud);
    }

    #[test]
    fn normalize_degenerate() {
        let cloud = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]; 5]).unwrap();
        assert!(matches!(normalize(&cloud), Err(Error::ZeroExtent)));
    }

    #[test]
    fn empty_and_nonfinite_rejected() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::from_xyz(&[[f64::NAN, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn feature_rows_must_match() {
        let cloud = PointCloud::from_xyz(&[[0.0; 3], [1.0; 3]]).unwrap();
        let f = Features::from_rows(2, vec![1.0, 2.0]).unwrap();
        assert!(cloud.clone().with_features(f).is_err());
        let f = Features::from_rows(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(cloud.with_features(f).unwrap().feature_width(), 2);
    }

    #[test]
    fn transform_cases() {
        let cloud = PointCloud::from_xyz(&[[1.0, 0.0, 0.0]]).unwrap();
        let id = Camera::identity(16, 16);
        assert_eq!(transform(&cloud, &id), cloud);

        let rz = Camera::from_extrinsics(rot_z(90.0), Vector3::zeros(), 16.0, [8.0, 8.0], 16, 16)
            .unwrap();
        let out = transform(&cloud, &rz).positions()[0];
        assert!((out - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn transform_carries_features() {
        let f = Features::from_rows(1, vec![7.0]).unwrap();
        let cloud = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]])
            .unwrap()
            .with_features(f.clone())
            .unwrap();
        let cam = Camera::from_extrinsics(
            rot_z(30.0),
            Vector3::new(0.0, 0.0, 2.0),
            16.0,
            [8.0, 8.0],
            16,
            16,
        )
        .unwrap();
        assert_eq!(transform(&cloud, &cam).features(), Some(&f));
    }
}
