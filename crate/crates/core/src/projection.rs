//! Perspective depth images of a point cloud from a ring of virtual cameras.
//!
//! Each point is moved into camera space, divided by its depth, and splatted as
//! a one-pixel-radius disk. A z-buffer keeps the nearest point per pixel, and
//! lit pixels encode `1 − (depth − d_min)/(d_max − d_min)` with
//! `d_min = distance − 1` and `d_max = distance + 1`, so a normalized cloud
//! spans the full range and background stays exactly 0.

use std::io::Write;
use std::path::Path;

use crate::geometry::{cross, dot, norm, sub, Point3, PointCloud};
use crate::{Error, Result};

pub const DEFAULT_IMAGE_SIZE: usize = 32;
pub const DEFAULT_CAMERA_DISTANCE: f64 = 2.2;
/// Focal length as a fraction of `image_width × distance`.
pub const DEFAULT_FOCAL_FACTOR: f64 = 0.35;
pub const MIN_IMAGE_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Point3,
    pub look_at: Point3,
    pub up: Point3,
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point as `(column, row)` in pixels.
    pub principal: [f64; 2],
}

/// Orthonormal camera frame: right, up and forward (viewing) axes.
struct Frame {
    right: Point3,
    up: Point3,
    forward: Point3,
}

fn unit(v: Point3) -> Point3 {
    let n = norm(v);
    [v[0] / n, v[1] / n, v[2] / n]
}

impl Camera {
    pub fn new(position: Point3, look_at: Point3, up: Point3, focal: f64, principal: [f64; 2]) -> Result<Self> {
        let cam = Self { position, look_at, up, focal, principal };
        cam.validate()?;
        Ok(cam)
    }

    fn validate(&self) -> Result<()> {
        let view = sub(self.look_at, self.position);
        if norm(view) <= 0.0 {
            return Err(Error::InvalidArgument("camera position coincides with look_at".into()));
        }
        if norm(cross(unit(view), self.up)) < 1e-9 {
            return Err(Error::InvalidArgument("camera up vector is parallel to the view direction".into()));
        }
        if !(self.focal > 0.0) {
            return Err(Error::InvalidArgument(format!("focal length must be positive, got {}", self.focal)));
        }
        Ok(())
    }

    fn frame(&self) -> Frame {
        let forward = unit(sub(self.look_at, self.position));
        let right = unit(cross(forward, self.up));
        let up = cross(right, forward);
        Frame { right, up, forward }
    }

    /// Distance from the camera to its look-at point.
    pub fn distance(&self) -> f64 {
        norm(sub(self.look_at, self.position))
    }

    /// Continuous pixel coordinates `(column, row)` and depth of `p`, or
    /// `None` when the point is not in front of the camera.
    pub fn project_point(&self, p: Point3) -> Option<([f64; 2], f64)> {
        let f = self.frame();
        let rel = sub(p, self.position);
        let z = dot(rel, f.forward);
        if z <= 0.0 {
            return None;
        }
        let x = dot(rel, f.right);
        let y = dot(rel, f.up);
        Some(([self.principal[0] + self.focal * x / z, self.principal[1] - self.focal * y / z], z))
    }
}

/// Cameras for an `h × w` image: six axis-aligned views or twenty on the
/// vertices of a regular dodecahedron, all looking at the origin.
///
/// Six-view order is `+x, −x, +y, −y, +z, −z`; the up vector is `+z`, except
/// for the two `z` cameras which use `+y`.
pub fn view_rig(v_count: usize, distance: f64, h: usize, w: usize) -> Result<Vec<Camera>> {
    if !(distance > 1.0) {
        return Err(Error::InvalidArgument(format!("camera distance must exceed 1, got {distance}")));
    }
    let dirs: Vec<Point3> = match v_count {
        6 => vec![
            [1.0, 0.0, 0.0],
            [-1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, -1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 0.0, -1.0],
        ],
        20 => dodecahedron_directions(),
        _ => return Err(Error::InvalidArgument(format!("unsupported view count {v_count}; use 6 or 20"))),
    };
    let focal = DEFAULT_FOCAL_FACTOR * w as f64 * distance;
    let principal = [w as f64 / 2.0, h as f64 / 2.0];
    dirs.into_iter()
        .map(|d| {
            let up = if d[0] == 0.0 && d[1] == 0.0 { [0.0, 1.0, 0.0] } else { [0.0, 0.0, 1.0] };
            Camera::new([d[0] * distance, d[1] * distance, d[2] * distance], [0.0; 3], up, focal, principal)
        })
        .collect()
}

/// [`view_rig`] for the default 32×32 image.
pub fn default_view_rig(v_count: usize, distance: f64) -> Result<Vec<Camera>> {
    view_rig(v_count, distance, DEFAULT_IMAGE_SIZE, DEFAULT_IMAGE_SIZE)
}

fn dodecahedron_directions() -> Vec<Point3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let inv = 1.0 / phi;
    let mut v = Vec::with_capacity(20);
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for sz in [1.0, -1.0] {
                v.push([sx, sy, sz]);
            }
        }
    }
    for s1 in [1.0, -1.0] {
        for s2 in [1.0, -1.0] {
            v.push([0.0, s1 * inv, s2 * phi]);
            v.push([s1 * inv, s2 * phi, 0.0]);
            v.push([s1 * phi, 0.0, s2 * inv]);
        }
    }
    v.into_iter().map(unit).collect()
}

/// Depth images of one cloud, `images[v]` is `h × w` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImageSet {
    pub images: Vec<Vec<f64>>,
    pub h: usize,
    pub w: usize,
    pub rig_id: String,
}

impl ViewImageSet {
    pub fn views(&self) -> usize {
        self.images.len()
    }

    pub fn lit_fraction(&self) -> f64 {
        let lit = self.images.iter().flatten().filter(|&&v| v > 0.0).count();
        lit as f64 / (self.images.len() * self.h * self.w) as f64
    }
}

/// Renders one depth image per camera.
pub fn project_views(pc: &PointCloud, rig: &[Camera], h: usize, w: usize) -> Result<ViewImageSet> {
    if h < MIN_IMAGE_SIZE || w < MIN_IMAGE_SIZE {
        return Err(Error::InvalidArgument(format!("image size {h}x{w} below minimum {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")));
    }
    let images = rig.iter().map(|cam| render_view(pc, cam, h, w)).collect();
    Ok(ViewImageSet { images, h, w, rig_id: format!("rig{}-{h}x{w}", rig.len()) })
}

const SPLAT: [(i64, i64); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];

fn render_view(pc: &PointCloud, cam: &Camera, h: usize, w: usize) -> Vec<f64> {
    let mut zbuf = vec![f64::INFINITY; h * w];
    for &p in pc.points() {
        let Some(([u, v], z)) = cam.project_point(p) else { continue };
        let (cu, cv) = (u.floor(), v.floor());
        if !cu.is_finite() || !cv.is_finite() {
            continue;
        }
        for (du, dv) in SPLAT {
            let (col, row) = (cu as i64 + du, cv as i64 + dv);
            if col < 0 || row < 0 || col >= w as i64 || row >= h as i64 {
                continue;
            }
            let k = row as usize * w + col as usize;
            // strict comparison: the earlier point wins exact ties
            if z < zbuf[k] {
                zbuf[k] = z;
            }
        }
    }
    let d = cam.distance();
    let (d_min, d_max) = (d - 1.0, d + 1.0);
    zbuf.into_iter()
        .map(|z| if z.is_finite() { (1.0 - (z - d_min) / (d_max - d_min)).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Writes one image as binary PGM (P5, maxval 255).
pub fn write_pgm(path: &Path, image: &[f64], h: usize, w: usize) -> Result<()> {
    let mut buf = format!("P5\n{w} {h}\n255\n").into_bytes();
    buf.extend(image.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Writes `<sample>_<view>.pgm` for every view into `dir`.
pub fn write_view_set(dir: &Path, sample: &str, views: &ViewImageSet) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    views
        .images
        .iter()
        .enumerate()
        .map(|(v, img)| {
            let path = dir.join(format!("{sample}_{v}.pgm"));
            write_pgm(&path, img, views.h, views.w).map(|_| path)
        })
        .collect()
}
