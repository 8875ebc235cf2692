//! Point-cloud and camera primitives.
//!
//! Conventions: right-handed world frame with +z up. A camera maps a world
//! point `p` to `R·p + T` in its own frame, where it looks down +z, image
//! x grows to the right and image y grows downward. Depth is the camera-frame
//! z coordinate.

mod camera;
mod cloud;
pub mod io;

pub use camera::{orbit_viewpoints, Camera, ViewpointSet};
pub use cloud::{normalize, transform, Features, Normalization, PointCloud};
