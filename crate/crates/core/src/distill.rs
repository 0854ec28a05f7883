//! Training objectives: feature enhancement through the frozen point
//! generator, classifier enhancement, Hinton KD, the weighted total, and the
//! normalized-MSE feature KD baselines.
//!
//! Batched losses are means over the batch; gradients are returned already
//! divided by the batch size.

use rayon::prelude::*;

use crate::diffcore::{kl_divergence, kl_divergence_full, Gradients, NumArray, ParamStore};
use crate::emd::{emd_loss_with, EmdReduction, EmdSolver};
use crate::geometry::PointCloud;
use crate::networks::{Classifier, Cmpg};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 30.0, beta: 0.3 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got alpha={alpha} beta={beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub ce: f64,
    pub feature: f64,
    pub classifier: f64,
    pub total: f64,
}

/// `ce + α·feature + β·classifier`.
pub fn total_loss(ce: f64, feature: f64, classifier: f64, w: LossWeights) -> Result<LossReport> {
    for (name, v) in [("loss_ce", ce), ("loss_feature", feature), ("loss_classifier", classifier)] {
        if !v.is_finite() {
            return Err(Error::divergence(name));
        }
    }
    let total = ce + w.alpha * feature + w.beta * classifier;
    if !total.is_finite() {
        return Err(Error::divergence("loss_total"));
    }
    Ok(LossReport { ce, feature, classifier, total })
}

/// How generated clouds are compared.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmdSettings {
    pub solver: EmdSolver,
    pub reduction: EmdReduction,
}

fn check_same_shape(a: &NumArray, b: &NumArray, what: &str) -> Result<(usize, usize)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    a.dims2()
}

/// Mean over the batch of `EMD(cmpg(f_pts[i]), cmpg(f_img[i]))`.
///
/// Returns the value and the gradient w.r.t. `f_pts`; nothing flows into
/// `f_img` or the generator parameters.
pub fn feature_enhancement_loss(
    f_pts: &NumArray,
    f_img: &NumArray,
    cmpg: &Cmpg,
    cmpg_params: &ParamStore,
    emd: EmdSettings,
) -> Result<(f64, NumArray)> {
    check_same_shape(f_pts, f_img, "feature enhancement")?;
    if !cmpg_params.is_frozen() {
        return Err(Error::Contract("feature enhancement needs a frozen point generator".into()));
    }
    let targets = cmpg.generate(cmpg_params, f_img)?;
    feature_enhancement_loss_to(f_pts, &targets, cmpg, cmpg_params, emd)
}

/// As [`feature_enhancement_loss`] with the image-side clouds already generated.
pub fn feature_enhancement_loss_to(
    f_pts: &NumArray,
    img_clouds: &[PointCloud],
    cmpg: &Cmpg,
    cmpg_params: &ParamStore,
    emd: EmdSettings,
) -> Result<(f64, NumArray)> {
    if !cmpg_params.is_frozen() {
        return Err(Error::Contract("feature enhancement needs a frozen point generator".into()));
    }
    let (b, _) = f_pts.dims2()?;
    if img_clouds.len() != b {
        return Err(Error::Shape(format!("{b} student features but {} target clouds", img_clouds.len())));
    }
    let (gen, cache) = cmpg.forward(cmpg_params, f_pts)?;
    let per_sample: Vec<(f64, Vec<f64>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            let p = PointCloud::from_flat(gen.row(i))?;
            let out = emd_loss_with(&p, &img_clouds[i], emd.solver, emd.reduction)?;
            Ok((out.value, out.dp))
        })
        .collect::<Result<_>>()?;
    let inv_b = 1.0 / b as f64;
    let mut value = 0.0;
    let mut dgen = Vec::with_capacity(gen.len());
    for (v, dp) in per_sample {
        value += v;
        dgen.extend(dp.into_iter().map(|g| g * inv_b));
    }
    let df = cmpg.backward(cmpg_params, &cache, NumArray::new(gen.shape().to_vec(), dgen)?, None)?;
    Ok((value * inv_b, df))
}

#[derive(Debug, Clone)]
pub struct ClassifierEnhancement {
    pub value: f64,
    /// Gradients for the point classifier, from both input paths.
    pub param_grads: Gradients,
    /// Gradient w.r.t. the point features.
    pub d_f_pts: NumArray,
}

/// `KL(cls(f_img) || cls(f_pts))` through the point classifier.
///
/// The image-feature path contributes to the classifier parameters only;
/// no gradient w.r.t. `f_img` is produced.
pub fn classifier_enhancement_loss(
    f_img: &NumArray,
    f_pts: &NumArray,
    cls: &Classifier,
    cls_params: &ParamStore,
) -> Result<ClassifierEnhancement> {
    check_same_shape(f_img, f_pts, "classifier enhancement")?;
    let (zi, ci) = cls.forward(cls_params, f_img)?;
    let (zp, cp) = cls.forward(cls_params, f_pts)?;
    let kl = kl_divergence_full(&zi, &zp, 1.0)?;
    let mut param_grads = Gradients::new();
    cls.backward(cls_params, &ci, kl.dp, Some(&mut param_grads))?;
    let d_f_pts = cls.backward(cls_params, &cp, kl.dq, Some(&mut param_grads))?;
    Ok(ClassifierEnhancement { value: kl.value, param_grads, d_f_pts })
}

/// `KL(softmax(img_logits) || softmax(pts_logits))` with the teacher side constant.
pub fn hinton_kd_loss(img_logits: &NumArray, pts_logits: &NumArray) -> Result<(f64, NumArray)> {
    kl_divergence(img_logits, pts_logits)
}

fn batch_moments(f: &NumArray) -> Result<(Vec<f64>, Vec<f64>)> {
    let (b, d) = f.dims2()?;
    let mut mean = vec![0.0; d];
    for i in 0..b {
        mean.iter_mut().zip(f.row(i)).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut var = vec![0.0; d];
    for i in 0..b {
        var.iter_mut().zip(f.row(i)).zip(&mean).for_each(|((v, x), m)| *v += (x - m) * (x - m));
    }
    Ok((mean, var.into_iter().map(|v| (v / b as f64).sqrt()).collect()))
}

/// Per-dimension batch standardization of image features onto the point-feature statistics.
pub fn normalize_gaussian(f_img: &NumArray, f_pts: &NumArray) -> Result<NumArray> {
    let (b, d) = check_same_shape(f_img, f_pts, "normalize_gaussian")?;
    if b < 2 {
        return Err(Error::DegenerateBatch(format!("batch of {b} has no spread")));
    }
    let (mi, si) = batch_moments(f_img)?;
    let (mp, sp) = batch_moments(f_pts)?;
    if let Some(k) = si.iter().position(|&s| s < 1e-12) {
        return Err(Error::DegenerateBatch(format!("image feature dimension {k} has zero spread")));
    }
    let mut out = Vec::with_capacity(b * d);
    for i in 0..b {
        out.extend(f_img.row(i).iter().enumerate().map(|(k, x)| (x - mi[k]) / si[k] * sp[k] + mp[k]));
    }
    NumArray::new(vec![b, d], out)
}

/// Like [`normalize_gaussian`], but a dimension with no spread in the image batch
/// (a dead relu unit, say) maps to the point-feature mean instead of failing.
/// Used inside training, where one dead unit would otherwise abort the run.
pub fn normalize_gaussian_lenient(f_img: &NumArray, f_pts: &NumArray) -> Result<NumArray> {
    let (b, d) = check_same_shape(f_img, f_pts, "normalize_gaussian_lenient")?;
    if b < 2 {
        return Err(Error::DegenerateBatch(format!("batch of {b} has no spread")));
    }
    let (mi, si) = batch_moments(f_img)?;
    let (mp, sp) = batch_moments(f_pts)?;
    let mut out = Vec::with_capacity(b * d);
    for i in 0..b {
        out.extend(f_img.row(i).iter().enumerate().map(|(k, x)| {
            if si[k] < 1e-12 {
                mp[k]
            } else {
                (x - mi[k]) / si[k] * sp[k] + mp[k]
            }
        }));
    }
    NumArray::new(vec![b, d], out)
}

fn mean_norm(f: &NumArray) -> Result<f64> {
    let (b, _) = f.dims2()?;
    Ok((0..b).map(|i| f.row(i).iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>() / b as f64)
}

/// Rescales image features so their mean 2-norm matches the point features'.
pub fn normalize_scale(f_img: &NumArray, f_pts: &NumArray) -> Result<NumArray> {
    let (b, _) = check_same_shape(f_img, f_pts, "normalize_scale")?;
    if b == 0 {
        return Err(Error::DegenerateBatch("empty batch".into()));
    }
    let ni = mean_norm(f_img)?;
    if ni == 0.0 {
        return Err(Error::DegenerateBatch("image features have zero mean norm".into()));
    }
    let mut out = f_img.clone();
    out.scale(mean_norm(f_pts)? / ni);
    Ok(out)
}

/// Mean squared difference over every element; the target is constant.
pub fn mse_feature_kd_loss(f_pts: &NumArray, target: &NumArray) -> Result<(f64, NumArray)> {
    check_same_shape(f_pts, target, "mse feature KD")?;
    let inv = 1.0 / f_pts.len() as f64;
    let diff: Vec<f64> = f_pts.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
    let value = diff.iter().map(|d| d * d).sum::<f64>() * inv;
    let grad = NumArray::new(f_pts.shape().to_vec(), diff.into_iter().map(|d| 2.0 * d * inv).collect())?;
    Ok((value, grad))
}
