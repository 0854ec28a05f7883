use rand::Rng;

use super::{Mlp, MlpCache, NetworkConfig, CMPG};
use crate::diffcore::{Gradients, NumArray, ParamStore};
use crate::geometry::PointCloud;
use crate::{Error, Result};

fn check_width(f: &NumArray, d: usize, what: &str) -> Result<()> {
    let (_, c) = f.dims2()?;
    if c != d {
        return Err(Error::Shape(format!("{what} expects width {d}, got {c}")));
    }
    Ok(())
}

/// Feature → logits MLP, relu between layers and none on the output.
///
/// The same structure serves both modalities under different prefixes, so
/// the point classifier can consume image features.
#[derive(Debug, Clone)]
pub struct Classifier {
    mlp: Mlp,
}

impl Classifier {
    pub fn new(prefix: &str, cfg: &NetworkConfig) -> Result<Self> {
        Ok(Self { mlp: Mlp::new(prefix, &cfg.classifier_widths(), false)? })
    }

    pub fn from_widths(prefix: &str, widths: &[usize]) -> Result<Self> {
        Ok(Self { mlp: Mlp::new(prefix, widths, false)? })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn num_classes(&self) -> usize {
        self.mlp.dout()
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        self.mlp.init(params, rng)
    }

    /// `f` is `[B, D]`; returns `[B, C]` logits.
    pub fn forward(&self, params: &ParamStore, f: &NumArray) -> Result<(NumArray, MlpCache)> {
        check_width(f, self.mlp.din(), "classifier")?;
        self.mlp.forward(params, f.clone())
    }

    /// Returns the gradient with respect to the input features.
    pub fn backward(&self, params: &ParamStore, cache: &MlpCache, dlogits: NumArray, grads: Option<&mut Gradients>) -> Result<NumArray> {
        self.mlp.backward(params, cache, dlogits, grads)
    }
}

/// Three-layer MLP mapping a feature to `n_gen × 3` coordinates.
#[derive(Debug, Clone)]
pub struct Cmpg {
    mlp: Mlp,
    n_gen: usize,
}

impl Cmpg {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        let widths = cfg.cmpg_widths();
        if widths.len() != 4 {
            return Err(Error::Config(format!("point generator needs three layers, got widths {widths:?}")));
        }
        Ok(Self { mlp: Mlp::new(CMPG, &widths, false)?, n_gen: cfg.n_gen })
    }

    pub fn n_gen(&self) -> usize {
        self.n_gen
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        self.mlp.init(params, rng)
    }

    /// `f` is `[B, D]`; returns `[B, 3·n_gen]` (row `i` is the flat cloud of sample `i`).
    pub fn forward(&self, params: &ParamStore, f: &NumArray) -> Result<(NumArray, MlpCache)> {
        check_width(f, self.mlp.din(), "point generator")?;
        self.mlp.forward(params, f.clone())
    }

    /// Generated clouds, not normalized.
    pub fn generate(&self, params: &ParamStore, f: &NumArray) -> Result<Vec<PointCloud>> {
        let (out, _) = self.forward(params, f)?;
        (0..out.dims2()?.0).map(|i| PointCloud::from_flat(out.row(i))).collect()
    }

    pub fn backward(&self, params: &ParamStore, cache: &MlpCache, dout: NumArray, grads: Option<&mut Gradients>) -> Result<NumArray> {
        self.mlp.backward(params, cache, dout, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, grad_check_input, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn feats(b: usize, d: usize, seed: u64) -> NumArray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        NumArray::new(vec![b, d], (0..b * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).unwrap()
    }

    #[test]
    fn identity_single_layer_passes_prefix() {
        let cls = Classifier::from_widths("c", &[5, 3]).unwrap();
        let mut ps = ParamStore::new();
        cls.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let w = ps.value_mut("c.l0.w").unwrap();
        w.fill(0.0);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let f = feats(2, 5, 1);
        let (y, _) = cls.forward(&ps, &f).unwrap();
        for r in 0..2 {
            assert_eq!(y.row(r), &f.row(r)[..3]);
        }
    }

    #[test]
    fn zero_feature_gives_composed_biases() {
        let cls = Classifier::from_widths("c", &[4, 3, 2]).unwrap();
        let mut ps = ParamStore::new();
        cls.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        ps.value_mut("c.l0.b").unwrap().data_mut().copy_from_slice(&[0.5, -1.0, 2.0]);
        ps.value_mut("c.l1.b").unwrap().data_mut().copy_from_slice(&[0.25, -0.5]);
        let (y, _) = cls.forward(&ps, &NumArray::zeros(&[1, 4])).unwrap();
        let w1 = ps.value("c.l1.w").unwrap().data().to_vec();
        let h = [0.5, 0.0, 2.0];
        let expect: Vec<f64> = (0..2).map(|j| (0..3).map(|i| h[i] * w1[i * 2 + j]).sum::<f64>() + [0.25, -0.5][j]).collect();
        for (a, b) in y.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn width_mismatch_is_shape_error() {
        let cls = Classifier::new("cls_pts", &NetworkConfig::default()).unwrap();
        let mut ps = ParamStore::new();
        cls.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(cls.forward(&ps, &feats(1, 64, 0)), Err(Error::Shape(_))));
    }

    #[test]
    fn classifier_gradient_check() {
        let cls = Classifier::from_widths("c", &[6, 5, 3]).unwrap();
        let mut ps = ParamStore::new();
        cls.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        ps.value_mut("c.l0.b").unwrap().data_mut().copy_from_slice(&[0.1, -0.05, 0.2, 0.0, 0.3]);
        let f = feats(4, 6, 2);
        let wts: Vec<f64> = (0..12).map(|i| 1.0 - 0.15 * i as f64).collect();
        let report = grad_check(
            |p| {
                let (y, cache) = cls.forward(p, &f)?;
                let mut g = Gradients::new();
                cls.backward(p, &cache, NumArray::new(vec![4, 3], wts.clone())?, Some(&mut g))?;
                p.accumulate(&g)?;
                Ok(y.data().iter().zip(&wts).map(|(a, b)| a * b).sum())
            },
            &mut ps,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    fn small_cmpg() -> (Cmpg, ParamStore) {
        let cfg = NetworkConfig { feature_dim: 6, cmpg_hidden: vec![7, 9], n_gen: 5, ..Default::default() };
        let g = Cmpg::new(&cfg).unwrap();
        let mut ps = ParamStore::new();
        g.init(&mut ps, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        (g, ps)
    }

    #[test]
    fn cmpg_zero_input_zero_bias_is_origin_cloud() {
        let (g, mut ps) = small_cmpg();
        let names: Vec<String> = ps.names().filter(|n| n.ends_with(".b")).map(String::from).collect();
        for n in names {
            ps.value_mut(&n).unwrap().fill(0.0);
        }
        let clouds = g.generate(&ps, &NumArray::zeros(&[2, 6])).unwrap();
        assert_eq!(clouds.len(), 2);
        for c in clouds {
            assert_eq!(c.len(), 5);
            assert!(!c.is_normalized());
            assert!(c.points().iter().all(|p| *p == [0.0; 3]));
        }
    }

    #[test]
    fn cmpg_input_gradient_check() {
        let (g, ps) = small_cmpg();
        let wts: Vec<f64> = (0..15).map(|i| (i as f64 * 0.7).sin()).collect();
        let x0 = feats(1, 6, 9);
        let report = grad_check_input(
            |x| {
                let f = NumArray::new(vec![1, 6], x.to_vec())?;
                let (y, cache) = g.forward(&ps, &f)?;
                let dx = g.backward(&ps, &cache, NumArray::new(vec![1, 15], wts.clone())?, None)?;
                Ok((y.data().iter().zip(&wts).map(|(a, b)| a * b).sum(), dx.into_data()))
            },
            x0.data(),
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn cmpg_requires_three_layers() {
        let cfg = NetworkConfig { cmpg_hidden: vec![8, 8, 8], ..Default::default() };
        assert!(matches!(Cmpg::new(&cfg), Err(Error::Config(_))));
    }
}
