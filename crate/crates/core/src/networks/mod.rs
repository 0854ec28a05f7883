//! The four networks: point encoder, multi-view image encoder, classifier
//! (shared design for both modalities) and the cross-modal point generator.
//!
//! All networks take a [`ParamStore`] at call time; parameter names carry the
//! network prefix (`enc_pts.l0.w`, `cmpg.l2.b`, ...). Backward passes write
//! into an optional [`Gradients`] buffer so frozen networks can still pass
//! gradients through to their inputs.

mod heads;
mod image;
mod point;

pub use heads::{Classifier, Cmpg};
pub use image::{ImageEncoder, ImageEncoderCache};
pub use point::{PointEncoder, PointEncoderCache};

use rand::Rng;

use crate::diffcore::{relu_backward, relu_forward, Gradients, LayerSpec, Linear, NumArray, ParamStore};
use crate::{Error, Result};

pub const ENC_PTS: &str = "enc_pts";
pub const ENC_IMG: &str = "enc_img";
pub const CLS_PTS: &str = "cls_pts";
pub const CLS_IMG: &str = "cls_img";
pub const CMPG: &str = "cmpg";

/// Widths of every network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Feature width `D` shared by both encoders.
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Per-point MLP widths; the last must equal `feature_dim`.
    pub point_mlp_widths: Vec<usize>,
    /// Adds an FPS + kNN local max-pool stage before the per-point MLP.
    pub grouped_stage: bool,
    /// Output channels of each conv3×3 → relu → maxpool2 block.
    pub cnn_channels: Vec<usize>,
    /// Hidden widths of the classifier between `feature_dim` and `num_classes`.
    pub classifier_hidden: Vec<usize>,
    /// The two hidden widths of the three-layer point generator.
    pub cmpg_hidden: Vec<usize>,
    /// Points produced by the generator.
    pub n_gen: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            feature_dim: 128,
            num_classes: 4,
            point_mlp_widths: vec![64, 128, 128],
            grouped_stage: false,
            cnn_channels: vec![8, 16, 32],
            classifier_hidden: vec![64],
            cmpg_hidden: vec![256, 512],
            n_gen: 128,
        }
    }
}

impl NetworkConfig {
    pub fn classifier_widths(&self) -> Vec<usize> {
        let mut w = vec![self.feature_dim];
        w.extend(&self.classifier_hidden);
        w.push(self.num_classes);
        w
    }

    pub fn cmpg_widths(&self) -> Vec<usize> {
        let mut w = vec![self.feature_dim];
        w.extend(&self.cmpg_hidden);
        w.push(3 * self.n_gen);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[usize]| -> Result<()> {
            if v.iter().any(|&x| x == 0) {
                return Err(Error::Config(format!("{name} contains a zero width")));
            }
            Ok(())
        };
        if self.feature_dim == 0 || self.num_classes < 2 || self.n_gen == 0 {
            return Err(Error::Config("feature_dim, n_gen must be positive and num_classes at least 2".into()));
        }
        positive("point_mlp_widths", &self.point_mlp_widths)?;
        positive("cnn_channels", &self.cnn_channels)?;
        positive("classifier_hidden", &self.classifier_hidden)?;
        positive("cmpg_hidden", &self.cmpg_hidden)?;
        if self.point_mlp_widths.last() != Some(&self.feature_dim) {
            return Err(Error::Config(format!(
                "point_mlp_widths must end at feature_dim {}, got {:?}",
                self.feature_dim, self.point_mlp_widths
            )));
        }
        if self.cnn_channels.is_empty() {
            return Err(Error::Config("cnn_channels must have at least one block".into()));
        }
        if self.cmpg_hidden.len() != 2 {
            return Err(Error::Config(format!(
                "the point generator has exactly three layers; cmpg_hidden needs 2 widths, got {:?}",
                self.cmpg_hidden
            )));
        }
        Ok(())
    }
}

/// Linear layers with relu between them (and optionally after the last).
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
    relu_last: bool,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<NumArray>,
    pre: Vec<NumArray>,
}

impl Mlp {
    /// Layers are named `{prefix}.l{i}`.
    pub fn new(prefix: &str, widths: &[usize], relu_last: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!("{prefix}: an MLP needs at least two widths")));
        }
        let layers: Vec<Linear> = widths.windows(2).enumerate().map(|(i, w)| Linear::new(&format!("{prefix}.l{i}"), w[0], w[1])).collect();
        let mut specs = Vec::new();
        for (i, l) in layers.iter().enumerate() {
            specs.push(l.spec());
            if relu_last || i + 1 < layers.len() {
                specs.push(LayerSpec::Relu);
            }
        }
        LayerSpec::check_chain(&specs, widths[0])?;
        Ok(Self { layers, relu_last })
    }

    pub fn din(&self) -> usize {
        self.layers[0].din
    }

    pub fn dout(&self) -> usize {
        self.layers[self.layers.len() - 1].dout
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        self.layers.iter().try_for_each(|l| l.init(params, rng))
    }

    fn activated(&self, i: usize) -> bool {
        self.relu_last || i + 1 < self.layers.len()
    }

    pub fn forward(&self, params: &ParamStore, x: NumArray) -> Result<(NumArray, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let h = layer.forward(params, &cur)?;
            inputs.push(cur);
            cur = if self.activated(i) { relu_forward(&h) } else { h.clone() };
            pre.push(h);
        }
        Ok((cur, MlpCache { inputs, pre }))
    }

    pub fn backward(
        &self,
        params: &ParamStore,
        cache: &MlpCache,
        dy: NumArray,
        mut grads: Option<&mut Gradients>,
    ) -> Result<NumArray> {
        let mut d = dy;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if self.activated(i) {
                d = relu_backward(&cache.pre[i], &d)?;
            }
            d = layer.backward(params, &cache.inputs[i], &d, grads.as_deref_mut())?;
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let cfg = NetworkConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.classifier_widths(), vec![128, 64, 4]);
        assert_eq!(cfg.cmpg_widths(), vec![128, 256, 512, 384]);
    }

    #[test]
    fn config_rejects_broken_chains() {
        let bad = NetworkConfig { point_mlp_widths: vec![64, 100], ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = NetworkConfig { cmpg_hidden: vec![256], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
