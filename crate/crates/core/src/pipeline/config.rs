use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::distill::{EmdSettings, LossWeights};
use crate::emd::{EmdReduction, EmdSolver, DEFAULT_AUCTION_EPSILON};
use crate::networks::NetworkConfig;
use crate::projection::{DEFAULT_CAMERA_DISTANCE, DEFAULT_IMAGE_SIZE, MIN_IMAGE_SIZE};
use crate::{Error, Result};

/// Everything a run depends on. Serializes to flat `key = value` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs_image: usize,
    pub epochs_cmpg: usize,
    pub epochs_student: usize,
    pub batch_size: usize,
    pub sgd_lr: f64,
    pub sgd_momentum: f64,
    pub lr_schedule: LrSchedule,
    pub adam_lr: f64,
    pub weights: LossWeights,
    pub emd: EmdSettings,
    /// Weight of the Hinton and normalized-MSE KD terms.
    pub kd_weight: f64,
    pub network: NetworkConfig,
    pub n_views: usize,
    pub camera_distance: f64,
    pub image_size: usize,
    /// Random scale/shift of student inputs each epoch.
    pub augment: bool,
    pub n_points: usize,
    pub n_per_class_train: usize,
    pub n_per_class_test: usize,
    /// Dataset roots; synthetic data is generated when unset.
    pub train_dir: Option<PathBuf>,
    pub test_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs_image: 50,
            epochs_cmpg: 50,
            epochs_student: 100,
            batch_size: 16,
            sgd_lr: 0.01,
            sgd_momentum: 0.9,
            lr_schedule: LrSchedule::Cosine,
            adam_lr: 1e-3,
            weights: LossWeights::default(),
            emd: EmdSettings { solver: EmdSolver::Auto, reduction: EmdReduction::Mean },
            kd_weight: 1.0,
            network: NetworkConfig::default(),
            n_views: 6,
            camera_distance: DEFAULT_CAMERA_DISTANCE,
            image_size: DEFAULT_IMAGE_SIZE,
            augment: false,
            n_points: 256,
            n_per_class_train: 200,
            n_per_class_test: 100,
            train_dir: None,
            test_dir: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Per-epoch SGD learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// `lr · (1 + cos(π·(e−1)/E)) / 2` for epoch `e` of `E`.
    Cosine,
}

impl LrSchedule {
    pub fn lr(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => 0.5 * base * (1.0 + (std::f64::consts::PI * (epoch - 1) as f64 / epochs as f64).cos()),
        }
    }
}

fn list(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn path_str(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.batch_size == 0 || self.n_points == 0 || self.n_per_class_train == 0 || self.n_per_class_test == 0 {
            return Err(Error::Config("batch_size, n_points and per-class counts must be positive".into()));
        }
        if self.image_size < MIN_IMAGE_SIZE {
            return Err(Error::Config(format!("image_size must be at least {MIN_IMAGE_SIZE}")));
        }
        for (k, v) in [("sgd_lr", self.sgd_lr), ("adam_lr", self.adam_lr), ("kd_weight", self.kd_weight)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{k} must be finite and non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return Err(Error::Config("sgd_momentum must lie in [0, 1)".into()));
        }
        if !(self.camera_distance > 1.0) {
            return Err(Error::Config("camera_distance must exceed 1".into()));
        }
        if self.n_views != 6 && self.n_views != 20 {
            return Err(Error::Config("n_views must be 6 or 20".into()));
        }
        LossWeights::new(self.weights.alpha, self.weights.beta)?;
        if let EmdSolver::Auction { epsilon } = self.emd.solver {
            if !(epsilon > 0.0) {
                return Err(Error::Config("auction_epsilon must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let (solver, eps) = match self.emd.solver {
            EmdSolver::Exact => ("exact", DEFAULT_AUCTION_EPSILON),
            EmdSolver::Auction { epsilon } => ("auction", epsilon),
            EmdSolver::Auto => ("auto", DEFAULT_AUCTION_EPSILON),
        };
        let reduction = match self.emd.reduction {
            EmdReduction::Sum => "sum",
            EmdReduction::Mean => "mean",
        };
        let n = &self.network;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("epochs_image", self.epochs_image.to_string());
        kv("epochs_cmpg", self.epochs_cmpg.to_string());
        kv("epochs_student", self.epochs_student.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("sgd_lr", self.sgd_lr.to_string());
        kv("sgd_momentum", self.sgd_momentum.to_string());
        kv("lr_schedule", match self.lr_schedule {
            LrSchedule::Constant => "constant".into(),
            LrSchedule::Cosine => "cosine".into(),
        });
        kv("adam_lr", self.adam_lr.to_string());
        kv("alpha", self.weights.alpha.to_string());
        kv("beta", self.weights.beta.to_string());
        kv("emd_solver", solver.into());
        kv("auction_epsilon", eps.to_string());
        kv("emd_reduction", reduction.into());
        kv("kd_weight", self.kd_weight.to_string());
        kv("feature_dim", n.feature_dim.to_string());
        kv("num_classes", n.num_classes.to_string());
        kv("point_mlp_widths", list(&n.point_mlp_widths));
        kv("grouped_stage", n.grouped_stage.to_string());
        kv("cnn_channels", list(&n.cnn_channels));
        kv("classifier_hidden", list(&n.classifier_hidden));
        kv("cmpg_hidden", list(&n.cmpg_hidden));
        kv("n_gen", n.n_gen.to_string());
        kv("n_views", self.n_views.to_string());
        kv("camera_distance", self.camera_distance.to_string());
        kv("image_size", self.image_size.to_string());
        kv("augment", self.augment.to_string());
        kv("n_points", self.n_points.to_string());
        kv("n_per_class_train", self.n_per_class_train.to_string());
        kv("n_per_class_test", self.n_per_class_test.to_string());
        kv("train_dir", path_str(&self.train_dir));
        kv("test_dir", path_str(&self.test_dir));
        kv("out_dir", self.out_dir.display().to_string());
        s
    }

    /// Parses `key = value` lines over the defaults. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut solver = "auto".to_string();
        let mut epsilon = DEFAULT_AUCTION_EPSILON;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Config(format!("line {}: {msg}", i + 1));
            let (k, v) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{k}: `{v}` is not a number")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{k}: `{v}` is not a non-negative integer")));
            let ints = |v: &str| -> Result<Vec<usize>> {
                if v.is_empty() {
                    return Ok(Vec::new());
                }
                v.split(',').map(|x| int(x.trim())).collect()
            };
            let boolean = |v: &str| v.parse::<bool>().map_err(|_| err(format!("{k}: `{v}` is not true/false")));
            let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
            match k {
                "seed" => cfg.seed = v.parse().map_err(|_| err(format!("seed: `{v}` is not a u64")))?,
                "epochs_image" => cfg.epochs_image = int(v)?,
                "epochs_cmpg" => cfg.epochs_cmpg = int(v)?,
                "epochs_student" => cfg.epochs_student = int(v)?,
                "batch_size" => cfg.batch_size = int(v)?,
                "sgd_lr" => cfg.sgd_lr = num(v)?,
                "sgd_momentum" => cfg.sgd_momentum = num(v)?,
                "lr_schedule" => {
                    cfg.lr_schedule = match v {
                        "constant" => LrSchedule::Constant,
                        "cosine" => LrSchedule::Cosine,
                        _ => return Err(err(format!("lr_schedule must be constant or cosine, got `{v}`"))),
                    }
                }
                "adam_lr" => cfg.adam_lr = num(v)?,
                "alpha" => cfg.weights.alpha = num(v)?,
                "beta" => cfg.weights.beta = num(v)?,
                "emd_solver" => solver = v.to_string(),
                "auction_epsilon" => epsilon = num(v)?,
                "emd_reduction" => {
                    cfg.emd.reduction = match v {
                        "sum" => EmdReduction::Sum,
                        "mean" => EmdReduction::Mean,
                        _ => return Err(err(format!("emd_reduction must be sum or mean, got `{v}`"))),
                    }
                }
                "kd_weight" => cfg.kd_weight = num(v)?,
                "feature_dim" => cfg.network.feature_dim = int(v)?,
                "num_classes" => cfg.network.num_classes = int(v)?,
                "point_mlp_widths" => cfg.network.point_mlp_widths = ints(v)?,
                "grouped_stage" => cfg.network.grouped_stage = boolean(v)?,
                "cnn_channels" => cfg.network.cnn_channels = ints(v)?,
                "classifier_hidden" => cfg.network.classifier_hidden = ints(v)?,
                "cmpg_hidden" => cfg.network.cmpg_hidden = ints(v)?,
                "n_gen" => cfg.network.n_gen = int(v)?,
                "n_views" => cfg.n_views = int(v)?,
                "camera_distance" => cfg.camera_distance = num(v)?,
                "image_size" => cfg.image_size = int(v)?,
                "augment" => cfg.augment = boolean(v)?,
                "n_points" => cfg.n_points = int(v)?,
                "n_per_class_train" => cfg.n_per_class_train = int(v)?,
                "n_per_class_test" => cfg.n_per_class_test = int(v)?,
                "train_dir" => cfg.train_dir = path(v),
                "test_dir" => cfg.test_dir = path(v),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        cfg.emd.solver = match solver.as_str() {
            "exact" => EmdSolver::Exact,
            "auto" => EmdSolver::Auto,
            "auction" => EmdSolver::Auction { epsilon },
            other => return Err(Error::Config(format!("emd_solver must be exact, auction or auto, got `{other}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
