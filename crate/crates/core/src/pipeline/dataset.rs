use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{rng_for, Stream};
use crate::geometry::{normalize_unit_sphere, LabeledCloud, Point3, PointCloud};
use crate::{Error, Result};

pub const SYNTH_CLASSES: [&str; 4] = ["sphere", "cube", "cylinder", "dumbbell"];

const JITTER_SIGMA: f64 = 0.01;
const JITTER_CLIP: f64 = 0.02;
const CYLINDER_RADIUS: f64 = 0.6;
const CYLINDER_HALF_HEIGHT: f64 = 0.9;
const DUMBBELL_RADIUS: f64 = 0.5;
const DUMBBELL_OFFSET: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledCloud>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes()];
        for s in &self.samples {
            c[s.label] += 1;
        }
        c
    }

    /// Training needs every declared class present.
    pub fn check_trainable(&self) -> Result<()> {
        if let Some(k) = self.class_counts().iter().position(|&c| c == 0) {
            return Err(Error::Data(format!("class `{}` has no training samples", self.class_names[k])));
        }
        Ok(())
    }

    /// Equal point counts across samples, needed for batching.
    pub fn points_per_sample(&self) -> Result<usize> {
        let n = self.samples.first().map(|s| s.cloud.len()).ok_or_else(|| Error::Data("empty dataset".into()))?;
        if let Some(i) = self.samples.iter().position(|s| s.cloud.len() != n) {
            return Err(Error::Data(format!("sample {i} has {} points, expected {n}", self.samples[i].cloud.len())));
        }
        Ok(n)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            class_names: self.class_names.clone(),
            split: self.split,
        }
    }
}

fn unit_normal(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v: Point3 = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn surface_point(class: usize, rng: &mut ChaCha8Rng) -> Point3 {
    let u = |rng: &mut ChaCha8Rng| 2.0 * rng.random::<f64>() - 1.0;
    match class {
        0 => unit_normal(rng),
        1 => {
            let face = rng.random_range(0..6);
            let (a, b) = (u(rng), u(rng));
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            match face / 2 {
                0 => [s, a, b],
                1 => [a, s, b],
                _ => [a, b, s],
            }
        }
        2 => {
            let side = 2.0 * std::f64::consts::PI * CYLINDER_RADIUS * 2.0 * CYLINDER_HALF_HEIGHT;
            let caps = 2.0 * std::f64::consts::PI * CYLINDER_RADIUS * CYLINDER_RADIUS;
            let t = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            if rng.random::<f64>() * (side + caps) < side {
                [CYLINDER_RADIUS * t.cos(), CYLINDER_RADIUS * t.sin(), CYLINDER_HALF_HEIGHT * u(rng)]
            } else {
                let r = CYLINDER_RADIUS * rng.random::<f64>().sqrt();
                let z = if rng.random::<bool>() { CYLINDER_HALF_HEIGHT } else { -CYLINDER_HALF_HEIGHT };
                [r * t.cos(), r * t.sin(), z]
            }
        }
        _ => {
            let d = unit_normal(rng);
            let c = if rng.random::<bool>() { DUMBBELL_OFFSET } else { -DUMBBELL_OFFSET };
            [c + DUMBBELL_RADIUS * d[0], DUMBBELL_RADIUS * d[1], DUMBBELL_RADIUS * d[2]]
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut q = [0.0f64; 4];
    loop {
        q.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            q.iter_mut().for_each(|x| *x /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn synth_sample(class: usize, n_points: usize, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    // antithetic pairs keep the raw centroid at the origin, every shape is point-symmetric
    let mut pts = Vec::with_capacity(n_points);
    while pts.len() + 1 < n_points {
        let p = surface_point(class, rng);
        pts.push(p);
        pts.push([-p[0], -p[1], -p[2]]);
    }
    if pts.len() < n_points {
        pts.push(surface_point(class, rng));
    }
    let r = random_rotation(rng);
    let jitter = Normal::new(0.0, JITTER_SIGMA).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    for p in &mut pts {
        let rotated = [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]);
        let mut j: Point3 = [jitter.sample(rng), jitter.sample(rng), jitter.sample(rng)];
        let n = (j[0] * j[0] + j[1] * j[1] + j[2] * j[2]).sqrt();
        if n > JITTER_CLIP {
            j.iter_mut().for_each(|c| *c *= JITTER_CLIP / n);
        }
        *p = [rotated[0] + j[0], rotated[1] + j[1], rotated[2] + j[2]];
    }
    normalize_unit_sphere(&PointCloud::new(pts)?)
}

/// Four parametric surface classes, randomly rotated, jittered and normalized.
///
/// Samples are interleaved by class: sample `i` has label `i % 4`.
pub fn synth_dataset(n_per_class: usize, n_points: usize, seed: u64) -> Result<Dataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be at least 1".into()));
    }
    if n_points < 64 {
        return Err(Error::InvalidArgument(format!("n_points must be at least 64, got {n_points}")));
    }
    let mut rng = rng_for(seed, Stream::Data);
    let mut samples = Vec::with_capacity(n_per_class * SYNTH_CLASSES.len());
    for _ in 0..n_per_class {
        for label in 0..SYNTH_CLASSES.len() {
            samples.push(LabeledCloud { cloud: synth_sample(label, n_points, &mut rng)?, label });
        }
    }
    Ok(Dataset { samples, class_names: SYNTH_CLASSES.iter().map(|s| s.to_string()).collect(), split: Split::Train })
}

/// Train and test splits drawn from independent streams of one seed.
pub fn synth_splits(n_train: usize, n_test: usize, n_points: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let train = synth_dataset(n_train, n_points, seed)?;
    let test = synth_dataset(n_test, n_points, seed ^ 0x7e57_0000_0000_0001)?.with_split(Split::Test);
    Ok((train, test))
}

/// Writes `classes.txt`, `labels.csv` and one `points/NNNNN.txt` per sample.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    let pts_dir = root.join("points");
    fs::create_dir_all(&pts_dir).map_err(|e| Error::io(&pts_dir, e))?;
    let classes = root.join("classes.txt");
    fs::write(&classes, ds.class_names.iter().map(|c| format!("{c}\n")).collect::<String>()).map_err(|e| Error::io(&classes, e))?;
    let mut labels = String::new();
    for (i, s) in ds.samples.iter().enumerate() {
        let rel = format!("points/{i:05}.txt");
        let _ = writeln!(labels, "{rel},{}", s.label);
        let mut body = String::with_capacity(s.cloud.len() * 48);
        for p in s.cloud.points() {
            let _ = writeln!(body, "{:.8e} {:.8e} {:.8e}", p[0], p[1], p[2]);
        }
        let path = root.join(&rel);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    let lp = root.join("labels.csv");
    fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))
}

/// Reads one `x y z` per line; blank lines are skipped.
pub fn load_points(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 coordinates, found {}", fields.len())));
        }
        let mut p = [0.0f64; 3];
        for (c, f) in p.iter_mut().zip(&fields) {
            *c = f.parse().map_err(|_| parse_err(format!("`{f}` is not a number")))?;
            if !c.is_finite() {
                return Err(parse_err(format!("non-finite coordinate `{f}`")));
            }
        }
        pts.push(p);
    }
    if pts.is_empty() {
        return Err(Error::Data(format!("{}: no points", path.display())));
    }
    PointCloud::new(pts)
}

/// Loads a dataset written by [`save_dataset`] (or by hand in the same layout); clouds are normalized.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let cp = root.join("classes.txt");
    let class_names: Vec<String> = fs::read_to_string(&cp)
        .map_err(|e| Error::io(&cp, e))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if class_names.is_empty() {
        return Err(Error::Data(format!("{}: no classes declared", cp.display())));
    }
    let lp = root.join("labels.csv");
    let text = fs::read_to_string(&lp).map_err(|e| Error::io(&lp, e))?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { path: lp.clone(), line: i + 1, msg };
        let (rel, label) = line.rsplit_once(',').ok_or_else(|| parse_err("expected `relative_path,label_index`".into()))?;
        let label: usize = label.trim().parse().map_err(|_| parse_err(format!("bad label `{}`", label.trim())))?;
        if label >= class_names.len() {
            return Err(parse_err(format!("label {label} out of range for {} classes", class_names.len())));
        }
        let cloud = normalize_unit_sphere(&load_points(&root.join(rel.trim()))?)?;
        samples.push(LabeledCloud { cloud, label });
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("{}: no samples", lp.display())));
    }
    Ok(Dataset { samples, class_names, split: Split::Train })
}
