//! Point-cloud values, normalization, sampling and neighborhoods.

use rand::Rng;

use crate::{Error, Result};

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn dist2(a: Point3, b: Point3) -> f64 {
    let d = sub(a, b);
    dot(d, d)
}

/// An ordered set of 3-D points.
///
/// `normalized` is set by [`normalize_unit_sphere`] and cleared by any
/// operation that moves points afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normalized: bool,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud must contain at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite coordinate in point {i}")));
        }
        Ok(Self { points, normalized: false })
    }

    /// Builds a cloud from a flat `[x0, y0, z0, x1, ...]` buffer.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 3 != 0 {
            return Err(Error::Shape(format!("flat buffer length {} is not a multiple of 3", flat.len())));
        }
        Self::new(flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| p.iter().copied()).collect()
    }

    pub fn centroid(&self) -> Point3 {
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        [c[0] / n, c[1] / n, c[2] / n]
    }

    pub fn max_radius(&self) -> f64 {
        self.points.iter().map(|&p| norm(p)).fold(0.0, f64::max)
    }

    /// Returns a new cloud containing the points at `idx`, in that order.
    pub fn select(&self, idx: &IndexSet) -> PointCloud {
        PointCloud {
            points: idx.indices().iter().map(|&i| self.points[i]).collect(),
            normalized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub label: usize,
}

/// Distinct indices into a point cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Validates distinctness and bounds against a cloud of `n` points.
    pub fn new(indices: Vec<usize>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!("index {i} out of range for {n} points")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("duplicate index {i}")));
            }
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Centers the cloud on its centroid and scales the farthest point to radius 1.
///
/// A cloud whose points all coincide maps to the origin.
pub fn normalize_unit_sphere(pc: &PointCloud) -> Result<PointCloud> {
    if pc.points.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }
    let c = pc.centroid();
    let mut points: Vec<Point3> = pc.points.iter().map(|&p| sub(p, c)).collect();
    let r = points.iter().map(|&p| norm(p)).fold(0.0, f64::max);
    if r <= f64::EPSILON * (1.0 + norm(c)) {
        points.iter_mut().for_each(|p| *p = [0.0; 3]);
    } else {
        for p in &mut points {
            for v in p.iter_mut() {
                *v /= r;
            }
        }
    }
    Ok(PointCloud { points, normalized: true })
}

/// Greedy farthest point sampling from an explicit start index.
///
/// Ties on the min-distance criterion go to the lowest index.
pub fn farthest_point_sample(pc: &PointCloud, k: usize, start: usize) -> Result<IndexSet> {
    let n = pc.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot sample {k} of {n} points")));
    }
    if start >= n {
        return Err(Error::InvalidArgument(format!("start index {start} out of range for {n} points")));
    }
    let pts = pc.points();
    let mut chosen = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut cur = start;
    loop {
        chosen.push(cur);
        taken[cur] = true;
        if chosen.len() == k {
            break;
        }
        let anchor = pts[cur];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            let d = dist2(pts[i], anchor);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        cur = best;
    }
    Ok(IndexSet(chosen))
}

/// For each center, the `k` nearest points (center included), closest first.
pub fn knn(pc: &PointCloud, centers: &IndexSet, k: usize) -> Result<Vec<IndexSet>> {
    let n = pc.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("cannot take {k} neighbours among {n} points")));
    }
    let pts = pc.points();
    let mut out = Vec::with_capacity(centers.len());
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &c in centers.indices() {
        if c >= n {
            return Err(Error::InvalidArgument(format!("center {c} out of range")));
        }
        order.clear();
        order.extend(pts.iter().enumerate().map(|(i, &p)| (dist2(p, pts[c]), i)));
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < n {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        let head = &mut order[..k];
        head.sort_unstable_by(cmp);
        out.push(IndexSet(head.iter().map(|&(_, i)| i).collect()));
    }
    Ok(out)
}

/// Random scale and translation applied to a training cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Per-axis translation drawn uniformly from `[-translate, translate]`.
    pub translate: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { scale_min: 0.8, scale_max: 1.25, translate: 0.1 }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        Self { scale_min: 1.0, scale_max: 1.0, translate: 0.0 }
    }
}

pub fn augment<R: Rng + ?Sized>(pc: &PointCloud, cfg: &AugmentConfig, rng: &mut R) -> PointCloud {
    let u: f64 = rng.random();
    let scale = cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u;
    let mut shift = [0.0; 3];
    for s in &mut shift {
        let u: f64 = rng.random();
        *s = cfg.translate * (2.0 * u - 1.0);
    }
    let points = pc
        .points
        .iter()
        .map(|p| [p[0] * scale + shift[0], p[1] * scale + shift[1], p[2] * scale + shift[2]])
        .collect();
    let identity = scale == 1.0 && shift == [0.0; 3];
    PointCloud { points, normalized: pc.normalized && identity }
}
