use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole camera with extrinsics `(R, T)` and square-pixel intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    focal: f64,
    principal_point: [f64; 2],
    width: usize,
    height: usize,
}

impl Camera {
    pub fn from_extrinsics(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        focal: f64,
        principal_point: [f64; 2],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(defect < ORTHONORMAL_TOL) || rotation.determinant() <= 0.0 {
            return Err(Error::invalid(format!(
                "rotation is not a proper orthonormal matrix (defect {defect:e})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite camera translation"));
        }
        if !(focal > 0.0) || !focal.is_finite() {
            return Err(Error::invalid(format!("focal must be positive, got {focal}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("camera image size must be positive"));
        }
        let [cx, cy] = principal_point;
        if !(0.0..=width as f64).contains(&cx) || !(0.0..=height as f64).contains(&cy) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            rotation,
            translation,
            focal,
            principal_point,
            width,
            height,
        })
    }

    /// Identity extrinsics, focal equal to the width, centered principal point.
    pub fn identity(width: usize, height: usize) -> Self {
        Self::from_extrinsics(
            Matrix3::identity(),
            Vector3::zeros(),
            width as f64,
            [width as f64 / 2.0, height as f64 / 2.0],
            width,
            height,
        )
        .expect("identity camera is valid")
    }

    /// Camera on a sphere of `radius` around the origin, looking at the
    /// origin with world +z projecting to image up. Angles in radians.
    pub fn look_at_orbit(
        azimuth: f64,
        elevation: f64,
        radius: f64,
        focal: f64,
        principal_point: [f64; 2],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("orbit radius must be positive"));
        }
        if !(elevation.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("orbit elevation must lie strictly inside (-90°, 90°)"));
        }
        let (sa, ca) = azimuth.sin_cos();
        let (se, ce) = elevation.sin_cos();
        let center = Vector3::new(ce * ca, ce * sa, se) * radius;
        let forward = -center / radius;
        let right = forward.cross(&Vector3::z()).normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * center);
        Self::from_extrinsics(rotation, translation, focal, principal_point, width, height)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn principal_point(&self) -> [f64; 2] {
        self.principal_point
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Pixel coordinates of a camera-frame point. Pixel `(col, row)` spans
    /// `[col, col+1) × [row, row+1)`; its center sits at `+0.5`.
    pub fn project(&self, p_cam: &Vector3<f64>) -> [f64; 2] {
        [
            self.focal * p_cam.x / p_cam.z + self.principal_point[0],
            self.focal * p_cam.y / p_cam.z + self.principal_point[1],
        ]
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Azimuth of the camera center around world +z, in `[0, 2π)`.
    pub fn azimuth(&self) -> f64 {
        let c = self.center();
        c.y.atan2(c.x).rem_euclid(TAU)
    }

    /// `self ∘ motion`: first apply the extrinsics of `motion`, then `self`.
    /// Intrinsics are those of `self`.
    pub fn compose(&self, motion: &Camera) -> Camera {
        Camera {
            rotation: self.rotation * motion.rotation,
            translation: self.rotation * motion.translation + self.translation,
            ..self.clone()
        }
    }

    pub fn with_extrinsics(&self, rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        Self::from_extrinsics(
            rotation,
            translation,
            self.focal,
            self.principal_point,
            self.width,
            self.height,
        )
    }
}

/// The `H` viewpoints that define the multi-view depth priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewpointSet {
    cameras: Vec<Camera>,
    reference_index: usize,
}

impl ViewpointSet {
    pub fn new(cameras: Vec<Camera>, reference_index: usize) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::invalid("viewpoint set needs at least one camera"));
        }
        if reference_index >= cameras.len() {
            return Err(Error::invalid(format!(
                "reference index {reference_index} out of {} cameras",
                cameras.len()
            )));
        }
        Ok(Self {
            cameras,
            reference_index,
        })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn reference_index(&self) -> usize {
        self.reference_index
    }

    pub fn reference(&self) -> &Camera {
        &self.cameras[self.reference_index]
    }
}

/// `views` cameras on a circular orbit, azimuths evenly spaced from the
/// reference camera's azimuth. The reference itself is camera 0; the others
/// share its intrinsics and look at the origin from the given radius and
/// elevation (radians).
pub fn orbit_viewpoints(
    reference: &Camera,
    views: usize,
    radius: f64,
    elevation: f64,
) -> Result<ViewpointSet> {
    if views == 0 {
        return Err(Error::invalid("orbit needs at least one viewpoint"));
    }
    let start = reference.azimuth();
    let step = TAU / views as f64;
    let mut cameras = Vec::with_capacity(views);
    cameras.push(reference.clone());
    for k in 1..views {
        cameras.push(Camera::look_at_orbit(
            start + step * k as f64,
            elevation,
            radius,
            reference.focal,
            reference.principal_point,
            reference.width,
            reference.height,
        )?);
    }
    ViewpointSet::new(cameras, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(azimuth_deg: f64) -> Camera {
        Camera::look_at_orbit(azimuth_deg.to_radians(), 0.3, 3.0, 32.0, [16.0, 16.0], 32, 32)
            .unwrap()
    }

    fn azimuths_deg(set: &ViewpointSet) -> Vec<f64> {
        set.cameras()
            .iter()
            .map(|c| c.azimuth().to_degrees())
            .collect()
    }

    #[test]
    fn look_at_puts_origin_on_axis() {
        let cam = reference(40.0);
        let o = cam.to_camera(&Vector3::zeros());
        assert!(o.x.abs() < 1e-12 && o.y.abs() < 1e-12);
        assert!((o.z - 3.0).abs() < 1e-12);
        // World +z projects above the image center (smaller row).
        let up = cam.to_camera(&Vector3::new(0.0, 0.0, 0.5));
        assert!(cam.project(&up)[1] < 16.0);
        assert!((cam.center().norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn four_views_are_quarter_turns() {
        let set = orbit_viewpoints(&reference(0.0), 4, 3.0, 0.3).unwrap();
        let az = azimuths_deg(&set);
        for (got, want) in az.iter().zip([0.0, 90.0, 180.0, 270.0]) {
            let diff = (got - want).rem_euclid(360.0);
            assert!(diff.min(360.0 - diff) < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn single_view_is_reference() {
        let r = reference(17.0);
        let set = orbit_viewpoints(&r, 1, 3.0, 0.3).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.reference(), &r);
    }

    #[test]
    fn ten_views_spaced_36_degrees() {
        let set = orbit_viewpoints(&reference(5.0), 10, 3.0, 0.3).unwrap();
        assert_eq!(set.len(), 10);
        let az = azimuths_deg(&set);
        for w in az.windows(2) {
            let gap = (w[1] - w[0]).rem_euclid(360.0);
            assert!((gap - 36.0).abs() < 1e-9);
        }
        for (i, a) in az.iter().enumerate() {
            for b in &az[i + 1..] {
                assert!((a - b).abs() > 1.0);
            }
        }
    }

    #[test]
    fn zero_views_rejected() {
        assert!(orbit_viewpoints(&reference(0.0), 0, 3.0, 0.3).is_err());
    }

    #[test]
    fn bad_rotation_rejected() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Camera::from_extrinsics(m, Vector3::zeros(), 10.0, [5.0, 5.0], 10, 10).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(
            Camera::from_extrinsics(reflect, Vector3::zeros(), 10.0, [5.0, 5.0], 10, 10).is_err()
        );
        assert!(Camera::from_extrinsics(
            Matrix3::identity(),
            Vector3::zeros(),
            0.0,
            [5.0, 5.0],
            10,
            10
        )
        .is_err());
        assert!(Camera::from_extrinsics(
            Matrix3::identity(),
            Vector3::zeros(),
            1.0,
            [11.0, 5.0],
            10,
            10
        )
        .is_err());
    }
}
