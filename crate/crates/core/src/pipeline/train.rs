use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{rng_for, Dataset, RunConfig, Stream};
use crate::diffcore::{
    adam_step, load_checkpoint, save_checkpoint, sgd_step, softmax_xent, AdamConfig, Gradients, NumArray, ParamStore,
};
use crate::distill::{
    classifier_enhancement_loss, feature_enhancement_loss_to, hinton_kd_loss, mse_feature_kd_loss, normalize_gaussian_lenient,
    normalize_scale, total_loss, EmdSettings, LossReport, LossWeights,
};
use crate::emd::emd_loss_with;
use crate::geometry::{augment, farthest_point_sample, AugmentConfig, PointCloud};
use crate::networks::{Classifier, Cmpg, ImageEncoder, NetworkConfig, PointEncoder, CLS_IMG, CLS_PTS};
use crate::projection::{project_views, view_rig, ViewImageSet};
use crate::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,loss_ce,loss_feature,loss_classifier,loss_total,train_acc";

/// One row of a metrics CSV; losses are sample-weighted epoch means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss_ce: f64,
    pub loss_feature: f64,
    pub loss_classifier: f64,
    pub loss_total: f64,
    /// Fraction of training samples classified correctly during the epoch.
    pub train_acc: f64,
}

pub fn metrics_csv(trace: &[EpochMetrics]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for m in trace {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.epoch, m.loss_ce, m.loss_feature, m.loss_classifier, m.loss_total, m.train_acc
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct StageArtifacts {
    pub checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub params: ParamStore,
    pub trace: Vec<EpochMetrics>,
}

impl StageArtifacts {
    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.trace.last()
    }
}

fn write_stage(out_dir: &Path, ckpt: &str, csv: &str, params: ParamStore, trace: Vec<EpochMetrics>) -> Result<StageArtifacts> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint = out_dir.join(ckpt);
    save_checkpoint(&params, &checkpoint)?;
    let metrics_path = out_dir.join(csv);
    fs::write(&metrics_path, metrics_csv(&trace)).map_err(|e| Error::io(&metrics_path, e))?;
    Ok(StageArtifacts { checkpoint, metrics_csv: metrics_path, params, trace })
}

fn tag_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Divergence { what, epoch: None } => Error::Divergence { what, epoch: Some(epoch) },
        other => other,
    }
}

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(logits: &NumArray) -> Result<Vec<usize>> {
    let (b, _) = logits.dims2()?;
    Ok((0..b)
        .map(|i| {
            let row = logits.row(i);
            (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect())
}

fn gather_rows(a: &NumArray, idx: &[usize]) -> Result<NumArray> {
    let (_, c) = a.dims2()?;
    NumArray::new(vec![idx.len(), c], idx.iter().flat_map(|&i| a.row(i).iter().copied()).collect())
}

fn check_classes(ds: &Dataset, net: &NetworkConfig) -> Result<()> {
    if ds.num_classes() != net.num_classes {
        return Err(Error::Config(format!(
            "dataset declares {} classes but num_classes = {}",
            ds.num_classes(),
            net.num_classes
        )));
    }
    ds.check_trainable()
}

/// Image encoder + image classifier.
#[derive(Debug, Clone)]
pub struct TeacherNet {
    pub encoder: ImageEncoder,
    pub classifier: Classifier,
}

impl TeacherNet {
    pub fn new(net: &NetworkConfig) -> Result<Self> {
        Ok(Self { encoder: ImageEncoder::new(net)?, classifier: Classifier::new(CLS_IMG, net)? })
    }

    pub fn init_params(&self, cfg: &RunConfig) -> Result<ParamStore> {
        let mut ps = ParamStore::new();
        let mut rng = rng_for(cfg.seed, Stream::TeacherInit);
        self.encoder.init(&mut ps, cfg.image_size, cfg.image_size, &mut rng)?;
        self.classifier.init(&mut ps, &mut rng)?;
        Ok(ps)
    }
}

/// Point encoder + point classifier.
#[derive(Debug, Clone)]
pub struct StudentNet {
    pub encoder: PointEncoder,
    pub classifier: Classifier,
}

impl StudentNet {
    pub fn new(net: &NetworkConfig) -> Result<Self> {
        Ok(Self { encoder: PointEncoder::new(net)?, classifier: Classifier::new(CLS_PTS, net)? })
    }

    pub fn init_params(&self, cfg: &RunConfig) -> Result<ParamStore> {
        let mut ps = ParamStore::new();
        let mut rng = rng_for(cfg.seed, Stream::StudentInit);
        self.encoder.init(&mut ps, &mut rng)?;
        self.classifier.init(&mut ps, &mut rng)?;
        Ok(ps)
    }

    /// Logits for every sample, in chunks.
    pub fn logits(&self, params: &ParamStore, ds: &Dataset) -> Result<NumArray> {
        let mut out = Vec::with_capacity(ds.len() * self.classifier.num_classes());
        for chunk in ds.samples.chunks(64) {
            let clouds: Vec<&PointCloud> = chunk.iter().map(|s| &s.cloud).collect();
            let (f, _) = self.encoder.forward(params, &clouds)?;
            let (z, _) = self.classifier.forward(params, &f)?;
            out.extend_from_slice(z.data());
        }
        NumArray::new(vec![ds.len(), self.classifier.num_classes()], out)
    }

    pub fn predict(&self, params: &ParamStore, ds: &Dataset) -> Result<Vec<usize>> {
        argmax_rows(&self.logits(params, ds)?)
    }
}

pub fn new_cmpg_params(cmpg: &Cmpg, cfg: &RunConfig) -> Result<ParamStore> {
    let mut ps = ParamStore::new();
    cmpg.init(&mut ps, &mut rng_for(cfg.seed, Stream::CmpgInit))?;
    Ok(ps)
}

/// Loads a checkpoint, checks it against the expected network and freezes it.
pub fn load_frozen(path: &Path, expected: &ParamStore) -> Result<ParamStore> {
    let mut ps = load_checkpoint(path)?;
    ps.check_compatible(expected)?;
    expected.check_compatible(&ps)?;
    ps.freeze();
    Ok(ps)
}

pub fn load_teacher(path: &Path, cfg: &RunConfig) -> Result<ParamStore> {
    load_frozen(path, &TeacherNet::new(&cfg.network)?.init_params(cfg)?)
}

pub fn load_cmpg(path: &Path, cfg: &RunConfig) -> Result<ParamStore> {
    load_frozen(path, &new_cmpg_params(&Cmpg::new(&cfg.network)?, cfg)?)
}

pub fn load_student(path: &Path, cfg: &RunConfig) -> Result<ParamStore> {
    load_frozen(path, &StudentNet::new(&cfg.network)?.init_params(cfg)?)
}

/// Depth views of every sample under the configured rig.
pub fn project_dataset(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<ViewImageSet>> {
    let rig = view_rig(cfg.n_views, cfg.camera_distance, cfg.image_size, cfg.image_size)?;
    ds.samples.par_iter().map(|s| project_views(&s.cloud, &rig, cfg.image_size, cfg.image_size)).collect()
}

/// Stage I on a fresh projection of `ds`.
pub fn stage1_train_image(ds: &Dataset, cfg: &RunConfig) -> Result<StageArtifacts> {
    train_image(ds, &project_dataset(ds, cfg)?, cfg)
}

/// Stage I: image encoder + classifier with SGD and cross-entropy on cached views.
pub fn train_image(ds: &Dataset, views: &[ViewImageSet], cfg: &RunConfig) -> Result<StageArtifacts> {
    cfg.validate()?;
    check_classes(ds, &cfg.network)?;
    let net = TeacherNet::new(&cfg.network)?;
    let mut params = net.init_params(cfg)?;
    let mut shuffle = rng_for(cfg.seed, Stream::TeacherShuffle);
    let labels = ds.labels();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs_image);
    for epoch in 1..=cfg.epochs_image {
        let lr = cfg.lr_schedule.lr(cfg.sgd_lr, epoch, cfg.epochs_image);
        order.shuffle(&mut shuffle);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let mut step = || -> Result<(f64, usize)> {
                let vs: Vec<&ViewImageSet> = batch.iter().map(|&i| &views[i]).collect();
                let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let (f, enc_cache) = net.encoder.forward(&params, &vs)?;
                let (z, cls_cache) = net.classifier.forward(&params, &f)?;
                let (ce, dz) = softmax_xent(&z, &y)?;
                let report = total_loss(ce, 0.0, 0.0, LossWeights::new(0.0, 0.0)?)?;
                let hits = argmax_rows(&z)?.iter().zip(&y).filter(|(a, b)| a == b).count();
                let mut grads = Gradients::new();
                let df = net.classifier.backward(&params, &cls_cache, dz, Some(&mut grads))?;
                net.encoder.backward(&params, &enc_cache, &df, Some(&mut grads))?;
                params.accumulate(&grads)?;
                sgd_step(&mut params, lr, cfg.sgd_momentum)?;
                Ok((report.total, hits))
            };
            let (loss, hits) = step().map_err(|e| tag_epoch(e, epoch))?;
            loss_sum += loss * batch.len() as f64;
            correct += hits;
        }
        let ce = loss_sum / ds.len() as f64;
        trace.push(EpochMetrics {
            epoch,
            loss_ce: ce,
            loss_feature: 0.0,
            loss_classifier: 0.0,
            loss_total: ce,
            train_acc: correct as f64 / ds.len() as f64,
        });
    }
    write_stage(&cfg.out_dir, "teacher.ckpt", "metrics_stage1.csv", params.learnable_clone(), trace)
}

/// Frozen-teacher outputs for every sample of a dataset.
#[derive(Debug, Clone)]
pub struct TeacherFeatures {
    /// `[n, D]` image features.
    pub features: NumArray,
    /// `[n, C]` image-classifier logits.
    pub logits: NumArray,
}

impl TeacherFeatures {
    pub fn compute(views: &[ViewImageSet], teacher: &ParamStore, cfg: &RunConfig) -> Result<Self> {
        if !teacher.is_frozen() {
            return Err(Error::Contract("teacher parameters must be frozen".into()));
        }
        let net = TeacherNet::new(&cfg.network)?;
        let mut feats = Vec::new();
        let mut logits = Vec::new();
        for chunk in views.chunks(64) {
            let vs: Vec<&ViewImageSet> = chunk.iter().collect();
            let (f, _) = net.encoder.forward(teacher, &vs)?;
            let (z, _) = net.classifier.forward(teacher, &f)?;
            feats.extend_from_slice(f.data());
            logits.extend_from_slice(z.data());
        }
        let n = views.len();
        Ok(Self {
            features: NumArray::new(vec![n, cfg.network.feature_dim], feats)?,
            logits: NumArray::new(vec![n, cfg.network.num_classes], logits)?,
        })
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stage II from a teacher checkpoint.
pub fn stage2_train_cmpg(ds: &Dataset, teacher_ckpt: &Path, cfg: &RunConfig) -> Result<StageArtifacts> {
    let teacher = load_teacher(teacher_ckpt, cfg)?;
    let feats = TeacherFeatures::compute(&project_dataset(ds, cfg)?, &teacher, cfg)?;
    train_cmpg(ds, &feats, cfg)
}

/// Fixed per-sample FPS subsample the generator is trained to reproduce.
pub fn cmpg_targets(ds: &Dataset, cfg: &RunConfig) -> Result<Vec<PointCloud>> {
    let n_gen = cfg.network.n_gen;
    let mut rng = rng_for(cfg.seed, Stream::FpsStart);
    ds.samples
        .iter()
        .map(|s| {
            if s.cloud.len() < n_gen {
                return Err(Error::Config(format!(
                    "point generator emits {n_gen} points but samples have only {}",
                    s.cloud.len()
                )));
            }
            let start = rng.random_range(0..s.cloud.len());
            Ok(s.cloud.select(&farthest_point_sample(&s.cloud, n_gen, start)?))
        })
        .collect()
}

/// Stage II: the point generator learns to rebuild each sample's subsample from frozen image features, with Adam.
pub fn train_cmpg(ds: &Dataset, feats: &TeacherFeatures, cfg: &RunConfig) -> Result<StageArtifacts> {
    cfg.validate()?;
    if feats.len() != ds.len() {
        return Err(Error::Shape(format!("{} teacher features for {} samples", feats.len(), ds.len())));
    }
    let targets = cmpg_targets(ds, cfg)?;
    let cmpg = Cmpg::new(&cfg.network)?;
    let mut params = new_cmpg_params(&cmpg, cfg)?;
    let adam = AdamConfig { lr: cfg.adam_lr, ..AdamConfig::default() };
    let mut shuffle = rng_for(cfg.seed, Stream::CmpgShuffle);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs_cmpg);
    for epoch in 1..=cfg.epochs_cmpg {
        order.shuffle(&mut shuffle);
        let mut emd_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut step = || -> Result<f64> {
                let f = gather_rows(&feats.features, batch)?;
                let (gen, cache) = cmpg.forward(&params, &f)?;
                let per_sample: Vec<(f64, Vec<f64>)> = batch
                    .par_iter()
                    .enumerate()
                    .map(|(r, &i)| {
                        let p = PointCloud::from_flat(gen.row(r))?;
                        let out = emd_loss_with(&p, &targets[i], cfg.emd.solver, cfg.emd.reduction)?;
                        Ok((out.value, out.dp))
                    })
                    .collect::<Result<_>>()?;
                let inv_b = 1.0 / batch.len() as f64;
                let mut sum = 0.0;
                let mut dgen = Vec::with_capacity(gen.len());
                for (v, dp) in per_sample {
                    sum += v;
                    dgen.extend(dp.into_iter().map(|g| g * inv_b));
                }
                let report = total_loss(0.0, sum * inv_b, 0.0, LossWeights::new(1.0, 0.0)?)?;
                let mut grads = Gradients::new();
                cmpg.backward(&params, &cache, NumArray::new(gen.shape().to_vec(), dgen)?, Some(&mut grads))?;
                params.accumulate(&grads)?;
                adam_step(&mut params, &adam)?;
                Ok(report.feature * batch.len() as f64)
            };
            emd_sum += step().map_err(|e| tag_epoch(e, epoch))?;
        }
        let emd = emd_sum / ds.len() as f64;
        trace.push(EpochMetrics { epoch, loss_ce: 0.0, loss_feature: emd, loss_classifier: 0.0, loss_total: emd, train_acc: 0.0 });
    }
    write_stage(&cfg.out_dir, "cmpg.ckpt", "metrics_stage2.csv", params.learnable_clone(), trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Per-dimension batch mean/std matching.
    Gaussian,
    /// Batch mean 2-norm matching.
    Scale,
}

/// Extra supervision for the student beyond cross-entropy.
#[derive(Debug, Clone, Copy)]
pub enum Guidance<'a> {
    None,
    /// Feature and classifier enhancement through a frozen point generator.
    PointCmt { teacher: &'a TeacherFeatures, cmpg: &'a ParamStore, weights: LossWeights },
    /// KL from teacher logits to student logits, weighted by `weight`.
    Hinton { teacher: &'a TeacherFeatures, weight: f64 },
    /// MSE to normalized teacher features, weighted by `weight`.
    Normalized { teacher: &'a TeacherFeatures, kind: Normalization, weight: f64 },
}

impl Guidance<'_> {
    /// Name used for checkpoint and metrics files.
    pub fn run_name(&self) -> &'static str {
        match self {
            Guidance::None => "baseline",
            Guidance::PointCmt { .. } => "pointcmt",
            Guidance::Hinton { .. } => "hinton",
            Guidance::Normalized { kind: Normalization::Gaussian, .. } => "normalize1_mse",
            Guidance::Normalized { kind: Normalization::Scale, .. } => "normalize2_mse",
        }
    }

    fn metrics_name(&self) -> String {
        match self {
            Guidance::None => "metrics_baseline.csv".into(),
            Guidance::PointCmt { .. } => "metrics_stage3.csv".into(),
            other => format!("metrics_{}.csv", other.run_name()),
        }
    }

    fn teacher(&self) -> Option<&TeacherFeatures> {
        match self {
            Guidance::None => None,
            Guidance::PointCmt { teacher, .. } | Guidance::Hinton { teacher, .. } | Guidance::Normalized { teacher, .. } => {
                Some(teacher)
            }
        }
    }
}

/// Stage III from checkpoints.
pub fn stage3_train_student(ds: &Dataset, teacher_ckpt: &Path, cmpg_ckpt: &Path, cfg: &RunConfig) -> Result<StageArtifacts> {
    let teacher = load_teacher(teacher_ckpt, cfg)?;
    let cmpg = load_cmpg(cmpg_ckpt, cfg)?;
    let feats = TeacherFeatures::compute(&project_dataset(ds, cfg)?, &teacher, cfg)?;
    train_student(ds, Guidance::PointCmt { teacher: &feats, cmpg: &cmpg, weights: cfg.weights }, cfg)
}

/// Cross-entropy only.
pub fn train_baseline(ds: &Dataset, cfg: &RunConfig) -> Result<StageArtifacts> {
    train_student(ds, Guidance::None, cfg)
}

/// Student loop shared by the baseline, PointCMT and the KD comparators.
///
/// Terms with zero weight are skipped entirely, so zero weights reproduce
/// the baseline bit for bit.
pub fn train_student(ds: &Dataset, guidance: Guidance<'_>, cfg: &RunConfig) -> Result<StageArtifacts> {
    cfg.validate()?;
    check_classes(ds, &cfg.network)?;
    ds.points_per_sample()?;
    let objective = StudentObjective::new(ds.len(), guidance, cfg)?;
    let aug_cfg = AugmentConfig::default();
    let mut params = objective.net.init_params(cfg)?;
    let mut shuffle = rng_for(cfg.seed, Stream::StudentShuffle);
    let mut aug_rng = rng_for(cfg.seed, Stream::Augment);
    let labels = ds.labels();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs_student);
    for epoch in 1..=cfg.epochs_student {
        let lr = cfg.lr_schedule.lr(cfg.sgd_lr, epoch, cfg.epochs_student);
        order.shuffle(&mut shuffle);
        let mut sums = [0.0; 4];
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut step = || -> Result<StudentBatch> {
                let clouds: Vec<Cow<PointCloud>> = batch
                    .iter()
                    .map(|&i| {
                        let c = &ds.samples[i].cloud;
                        if cfg.augment { Cow::Owned(augment(c, &aug_cfg, &mut aug_rng)) } else { Cow::Borrowed(c) }
                    })
                    .collect();
                let refs: Vec<&PointCloud> = clouds.iter().map(|c| c.as_ref()).collect();
                let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
                let out = objective.batch(&params, &refs, &y, batch)?;
                params.accumulate(&out.grads)?;
                sgd_step(&mut params, lr, cfg.sgd_momentum)?;
                Ok(out)
            };
            let out = step().map_err(|e| tag_epoch(e, epoch))?;
            let (r, b) = (out.report, batch.len() as f64);
            sums[0] += r.ce * b;
            sums[1] += r.feature * b;
            sums[2] += r.classifier * b;
            sums[3] += r.total * b;
            correct += out.hits;
        }
        let n = ds.len() as f64;
        trace.push(EpochMetrics {
            epoch,
            loss_ce: sums[0] / n,
            loss_feature: sums[1] / n,
            loss_classifier: sums[2] / n,
            loss_total: sums[3] / n,
            train_acc: correct as f64 / n,
        });
    }
    let ckpt = format!("student_{}.ckpt", guidance.run_name());
    write_stage(&cfg.out_dir, &ckpt, &guidance.metrics_name(), params.learnable_clone(), trace)
}

/// Loss and student gradients for one batch.
#[derive(Debug, Clone)]
pub struct StudentBatch {
    pub report: LossReport,
    pub grads: Gradients,
    pub hits: usize,
}

/// The student objective with its guidance resolved: generated image clouds
/// are computed once up front.
pub struct StudentObjective<'a> {
    pub net: StudentNet,
    cmpg: Cmpg,
    guidance: Guidance<'a>,
    weights: LossWeights,
    img_clouds: Vec<PointCloud>,
    emd: EmdSettings,
}

impl<'a> StudentObjective<'a> {
    /// `n` is the number of training samples the teacher features must cover.
    pub fn new(n: usize, guidance: Guidance<'a>, cfg: &RunConfig) -> Result<Self> {
        if let Some(t) = guidance.teacher() {
            if t.len() != n {
                return Err(Error::Shape(format!("{} teacher features for {n} samples", t.len())));
            }
        }
        let net = StudentNet::new(&cfg.network)?;
        let cmpg = Cmpg::new(&cfg.network)?;
        let img_clouds = match guidance {
            Guidance::PointCmt { teacher, cmpg: cp, weights } if weights.alpha > 0.0 => {
                if !cp.is_frozen() {
                    return Err(Error::Contract("point generator must be frozen during student training".into()));
                }
                cmpg.generate(cp, &teacher.features)?
            }
            _ => Vec::new(),
        };
        let weights = match guidance {
            Guidance::None => LossWeights::new(0.0, 0.0)?,
            Guidance::PointCmt { weights, .. } => weights,
            Guidance::Hinton { weight, .. } => LossWeights::new(0.0, weight)?,
            Guidance::Normalized { weight, .. } => LossWeights::new(weight, 0.0)?,
        };
        Ok(StudentObjective { net, cmpg, guidance, weights, img_clouds, emd: cfg.emd })
    }

    /// `batch` holds the dataset indices of `clouds`, used to look up teacher rows.
    pub fn batch(&self, params: &ParamStore, clouds: &[&PointCloud], y: &[usize], batch: &[usize]) -> Result<StudentBatch> {
        if clouds.len() != batch.len() || y.len() != batch.len() {
            return Err(Error::Shape(format!("{} clouds, {} labels, {} indices", clouds.len(), y.len(), batch.len())));
        }
        let net = &self.net;
        let (f, enc_cache) = net.encoder.forward(params, clouds)?;
        let (z, cls_cache) = net.classifier.forward(params, &f)?;
        let (ce, mut dz) = softmax_xent(&z, y)?;
        let mut grads = Gradients::new();
        let mut df_extra: Option<NumArray> = None;
        let mut add_df = |g: NumArray, w: f64| -> Result<()> {
            let mut g = g;
            g.scale(w);
            match &mut df_extra {
                None => df_extra = Some(g),
                Some(acc) => acc.add_assign(&g)?,
            }
            Ok(())
        };
        let (mut feature, mut classifier) = (0.0, 0.0);
        match self.guidance {
            Guidance::None => {}
            Guidance::PointCmt { teacher, cmpg: cp, weights } => {
                if weights.alpha > 0.0 {
                    let targets: Vec<PointCloud> = batch.iter().map(|&i| self.img_clouds[i].clone()).collect();
                    let (v, df) = feature_enhancement_loss_to(&f, &targets, &self.cmpg, cp, self.emd)?;
                    feature = v;
                    add_df(df, weights.alpha)?;
                }
                if weights.beta > 0.0 {
                    let f_img = gather_rows(&teacher.features, batch)?;
                    let mut out = classifier_enhancement_loss(&f_img, &f, &net.classifier, params)?;
                    classifier = out.value;
                    out.param_grads.scale(weights.beta);
                    grads.merge(&out.param_grads);
                    add_df(out.d_f_pts, weights.beta)?;
                }
            }
            Guidance::Hinton { teacher, weight } => {
                if weight > 0.0 {
                    let (v, g) = hinton_kd_loss(&gather_rows(&teacher.logits, batch)?, &z)?;
                    classifier = v;
                    let mut g = g;
                    g.scale(weight);
                    dz.add_assign(&g)?;
                }
            }
            Guidance::Normalized { teacher, kind, weight } => {
                // batch statistics need at least two samples
                if weight > 0.0 && batch.len() >= 2 {
                    let f_img = gather_rows(&teacher.features, batch)?;
                    let target = match kind {
                        Normalization::Gaussian => normalize_gaussian_lenient(&f_img, &f)?,
                        Normalization::Scale => normalize_scale(&f_img, &f)?,
                    };
                    let (v, g) = mse_feature_kd_loss(&f, &target)?;
                    feature = v;
                    add_df(g, weight)?;
                }
            }
        }
        let report = total_loss(ce, feature, classifier, self.weights)?;
        let hits = argmax_rows(&z)?.iter().zip(y).filter(|(a, b)| a == b).count();
        let mut df = net.classifier.backward(params, &cls_cache, dz, Some(&mut grads))?;
        if let Some(extra) = df_extra {
            df.add_assign(&extra)?;
        }
        net.encoder.backward(params, &enc_cache, &df, Some(&mut grads))?;
        Ok(StudentBatch { report, grads, hits })
    }
}
