//! ASCII PLY point clouds and key=value camera files.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a file back reproduces the in-memory `f64` values bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{Camera, Features, PointCloud, ViewpointSet};
use crate::{Error, Result};

pub fn ply_to_string(cloud: &PointCloud) -> String {
    let c = cloud.feature_width();
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    for axis in ["x", "y", "z"] {
        let _ = writeln!(out, "property float {axis}");
    }
    for k in 0..c {
        let _ = writeln!(out, "property float f{k}");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.positions().iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(f) = cloud.features() {
            for v in f.row(i) {
                let _ = write!(out, " {v}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, ply_to_string(cloud))?;
    Ok(())
}

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let bad = |msg: String| Error::format(path, msg);
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing 'ply' magic".into()));
    }
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("unterminated header".into()))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(bad(format!("unsupported format '{other}'"))),
            ["comment", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|e| bad(format!("vertex count: {e}")))?);
            }
            ["element", other, ..] => return Err(bad(format!("unsupported element '{other}'"))),
            ["property", "float" | "double", name] => props.push(name.to_string()),
            ["property", ..] => return Err(bad(format!("unsupported property line '{line}'"))),
            ["end_header"] => break,
            _ => return Err(bad(format!("unexpected header line '{line}'"))),
        }
    }
    let count = count.ok_or_else(|| bad("missing vertex element".into()))?;
    if props.len() < 3 || props[..3] != ["x", "y", "z"] {
        return Err(bad("first properties must be x y z".into()));
    }
    for (k, name) in props[3..].iter().enumerate() {
        if *name != format!("f{k}") {
            return Err(bad(format!("expected feature property f{k}, found {name}")));
        }
    }
    let width = props.len() - 3;
    let mut positions = Vec::with_capacity(count);
    let mut feats = Vec::with_capacity(count * width);
    for row in 0..count {
        let line = lines
            .next()
            .ok_or_else(|| bad(format!("expected {count} vertices, found {row}")))?;
        let values = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("vertex {row}: {e}")))?;
        if values.len() != props.len() {
            return Err(bad(format!(
                "vertex {row} has {} values, expected {}",
                values.len(),
                props.len()
            )));
        }
        positions.push(Vector3::new(values[0], values[1], values[2]));
        feats.extend_from_slice(&values[3..]);
    }
    let cloud = PointCloud::new(positions)?;
    if width > 0 {
        cloud.with_features(Features::from_rows(width, feats)?)
    } else {
        Ok(cloud)
    }
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&fs::read_to_string(path)?, path)
}

fn write_camera(out: &mut String, cam: &Camera) {
    let r = cam.rotation();
    for i in 0..3 {
        let _ = writeln!(out, "r{i} = {} {} {}", r[(i, 0)], r[(i, 1)], r[(i, 2)]);
    }
    let t = cam.translation();
    let _ = writeln!(out, "t = {} {} {}", t.x, t.y, t.z);
    let _ = writeln!(out, "focal = {}", cam.focal());
    let [cx, cy] = cam.principal_point();
    let _ = writeln!(out, "principal_point = {cx} {cy}");
    let _ = writeln!(out, "width = {}", cam.width());
    let _ = writeln!(out, "height = {}", cam.height());
}

/// Camera file body. A single camera is a viewpoint set of size one.
pub fn cameras_to_string(views: &ViewpointSet) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "count = {}", views.len());
    let _ = writeln!(out, "reference_index = {}", views.reference_index());
    for (i, cam) in views.cameras().iter().enumerate() {
        let _ = writeln!(out, "camera = {i}");
        write_camera(&mut out, cam);
    }
    out
}

pub fn write_cameras(path: &Path, views: &ViewpointSet) -> Result<()> {
    fs::write(path, cameras_to_string(views))?;
    Ok(())
}

#[derive(Default)]
struct CameraFields {
    rows: [Option<[f64; 3]>; 3],
    t: Option<[f64; 3]>,
    focal: Option<f64>,
    pp: Option<[f64; 2]>,
    width: Option<usize>,
    height: Option<usize>,
}

impl CameraFields {
    fn build(self, path: &Path) -> Result<Camera> {
        let miss = |k: &str| Error::format(path, format!("camera missing '{k}'"));
        let mut r = Matrix3::zeros();
        for (i, row) in self.rows.iter().enumerate() {
            let row = row.ok_or_else(|| miss(&format!("r{i}")))?;
            for j in 0..3 {
                r[(i, j)] = row[j];
            }
        }
        let t = self.t.ok_or_else(|| miss("t"))?;
        Camera::from_extrinsics(
            r,
            Vector3::new(t[0], t[1], t[2]),
            self.focal.ok_or_else(|| miss("focal"))?,
            self.pp.ok_or_else(|| miss("principal_point"))?,
            self.width.ok_or_else(|| miss("width"))?,
            self.height.ok_or_else(|| miss("height"))?,
        )
    }
}

fn floats<const K: usize>(value: &str, path: &Path, key: &str) -> Result<[f64; K]> {
    let parsed: Vec<f64> = value
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, format!("{key}: {e}")))?;
    parsed
        .try_into()
        .map_err(|_| Error::format(path, format!("{key}: expected {K} values")))
}

pub fn parse_cameras(text: &str, path: &Path) -> Result<ViewpointSet> {
    let bad = |msg: String| Error::format(path, msg);
    let mut count = None;
    let mut reference = 0usize;
    let mut cams = Vec::new();
    let mut current: Option<CameraFields> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let int = |v: &str| v.parse::<usize>().map_err(|e| bad(format!("{key}: {e}")));
        match key {
            "count" => count = Some(int(value)?),
            "reference_index" => reference = int(value)?,
            "camera" => {
                if let Some(fields) = current.take() {
                    cams.push(fields.build(path)?);
                }
                if int(value)? != cams.len() {
                    return Err(bad(format!("camera blocks out of order at {value}")));
                }
                current = Some(CameraFields::default());
            }
            _ => {
                let fields = current
                    .as_mut()
                    .ok_or_else(|| bad(format!("'{key}' before any camera block")))?;
                match key {
                    "r0" | "r1" | "r2" => {
                        let i = (key.as_bytes()[1] - b'0') as usize;
                        fields.rows[i] = Some(floats(value, path, key)?);
                    }
                    "t" => fields.t = Some(floats(value, path, key)?),
                    "focal" => fields.focal = Some(floats::<1>(value, path, key)?[0]),
                    "principal_point" => fields.pp = Some(floats(value, path, key)?),
                    "width" => fields.width = Some(int(value)?),
                    "height" => fields.height = Some(int(value)?),
                    _ => return Err(bad(format!("unknown key '{key}'"))),
                }
            }
        }
    }
    if let Some(fields) = current {
        cams.push(fields.build(path)?);
    }
    if let Some(n) = count {
        if n != cams.len() {
            return Err(bad(format!("count = {n} but {} camera blocks", cams.len())));
        }
    }
    ViewpointSet::new(cams, reference)
}

pub fn read_cameras(path: &Path) -> Result<ViewpointSet> {
    parse_cameras(&fs::read_to_string(path)?, path)
}
