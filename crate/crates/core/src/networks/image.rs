use rand::Rng;

use super::{NetworkConfig, ENC_IMG};
use crate::diffcore::{
    relu_backward, relu_forward, set_max_pool_backward, set_max_pool_forward, Gradients, Linear, MaxPoolRecord,
    NumArray, ParamStore,
};
use crate::projection::{ViewImageSet, MIN_IMAGE_SIZE};
use crate::{Error, Result};

/// Shared tiny CNN over every view, then a view-wise max.
///
/// Each block is conv3×3 (zero padding, stride 1, as im2col + linear) →
/// relu → 2×2 max-pool. A final linear layer and relu map the flattened map
/// to `D`, so image features share the non-negative range of point features.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    channels: Vec<usize>,
    convs: Vec<Linear>,
    feature_dim: usize,
}

#[derive(Debug, Clone)]
struct BlockCache {
    h: usize,
    w: usize,
    cin: usize,
    cols: NumArray,
    pre: NumArray,
    // flat index into `pre` (relu output) of each pooled cell's winner
    pool_argmax: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ImageEncoderCache {
    batch: usize,
    views: usize,
    blocks: Vec<BlockCache>,
    flat: NumArray,
    head: Linear,
    head_pre: NumArray,
    view_pool: MaxPoolRecord,
}

fn im2col(x: &[f64], m: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut cols = vec![0.0; m * h * w * 9 * c];
    let row_len = 9 * c;
    for img in 0..m {
        let base = img * h * w * c;
        for y in 0..h {
            for xx in 0..w {
                let out = &mut cols[((img * h + y) * w + xx) * row_len..][..row_len];
                for ky in 0..3 {
                    let sy = y as i64 + ky as i64 - 1;
                    if sy < 0 || sy >= h as i64 {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as i64 + kx as i64 - 1;
                        if sx < 0 || sx >= w as i64 {
                            continue;
                        }
                        let src = base + (sy as usize * w + sx as usize) * c;
                        out[(ky * 3 + kx) * c..][..c].copy_from_slice(&x[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], m: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut dx = vec![0.0; m * h * w * c];
    let row_len = 9 * c;
    for img in 0..m {
        let base = img * h * w * c;
        for y in 0..h {
            for xx in 0..w {
                let row = &dcols[((img * h + y) * w + xx) * row_len..][..row_len];
                for ky in 0..3 {
                    let sy = y as i64 + ky as i64 - 1;
                    if sy < 0 || sy >= h as i64 {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as i64 + kx as i64 - 1;
                        if sx < 0 || sx >= w as i64 {
                            continue;
                        }
                        let dst = base + (sy as usize * w + sx as usize) * c;
                        dx[dst..dst + c].iter_mut().zip(&row[(ky * 3 + kx) * c..][..c]).for_each(|(a, b)| *a += b);
                    }
                }
            }
        }
    }
    dx
}

/// 2×2 stride-2 max-pool over `[m, h, w, c]`; ties go to the first cell in row-major order.
fn max_pool2(x: &[f64], m: usize, h: usize, w: usize, c: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; m * oh * ow * c];
    let mut arg = vec![0usize; m * oh * ow * c];
    for img in 0..m {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = ((img * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                    let o = ((img * oh + oy) * ow + ox) * c + ch;
                    out[o] = best;
                    arg[o] = best_i;
                }
            }
        }
    }
    (out, arg)
}

impl ImageEncoder {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        let mut convs = Vec::new();
        let mut cin = 1;
        for (i, &cout) in cfg.cnn_channels.iter().enumerate() {
            convs.push(Linear::new(&format!("{ENC_IMG}.conv{i}"), 9 * cin, cout));
            cin = cout;
        }
        Ok(Self { channels: cfg.cnn_channels.clone(), convs, feature_dim: cfg.feature_dim })
    }

    fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        self.channels.iter().fold((h, w), |(h, w), _| (h / 2, w / 2))
    }

    fn head(&self, h: usize, w: usize) -> Result<Linear> {
        let (oh, ow) = self.output_hw(h, w);
        if oh == 0 || ow == 0 {
            return Err(Error::InvalidArgument(format!(
                "{h}x{w} images collapse to nothing after {} pooling blocks",
                self.channels.len()
            )));
        }
        let flat = oh * ow * self.channels.last().copied().unwrap_or(1);
        Ok(Linear::new(&format!("{ENC_IMG}.head"), flat, self.feature_dim))
    }

    /// Initializes weights for `h × w` views (the head width depends on it).
    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, h: usize, w: usize, rng: &mut R) -> Result<()> {
        for conv in &self.convs {
            conv.init(params, rng)?;
        }
        self.head(h, w)?.init(params, rng)
    }

    /// Encodes a batch of view sets into `[B, D]` features.
    pub fn forward(&self, params: &ParamStore, batch: &[&ViewImageSet]) -> Result<(NumArray, ImageEncoderCache)> {
        let first = batch.first().ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let (h0, w0, views) = (first.h, first.w, first.views());
        if h0 < MIN_IMAGE_SIZE || w0 < MIN_IMAGE_SIZE {
            return Err(Error::InvalidArgument(format!("view size {h0}x{w0} below minimum {MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")));
        }
        if views == 0 || batch.iter().any(|v| v.h != h0 || v.w != w0 || v.views() != views) {
            return Err(Error::InvalidArgument("all view sets must share view count and size".into()));
        }
        let head = self.head(h0, w0)?;
        let m = batch.len() * views;
        let mut x: Vec<f64> = batch.iter().flat_map(|v| v.images.iter().flatten().copied()).collect();
        let (mut h, mut w, mut c) = (h0, w0, 1);
        let mut blocks = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let cols = NumArray::new(vec![m * h * w, 9 * c], im2col(&x, m, h, w, c))?;
            let pre = conv.forward(params, &cols)?;
            let act = relu_forward(&pre);
            let (pooled, pool_argmax) = max_pool2(act.data(), m, h, w, conv.dout);
            blocks.push(BlockCache { h, w, cin: c, cols, pre, pool_argmax });
            x = pooled;
            h /= 2;
            w /= 2;
            c = conv.dout;
        }
        let flat = NumArray::new(vec![m, h * w * c], x)?;
        let head_pre = head.forward(params, &flat)?;
        let per_view = relu_forward(&head_pre);
        let (f, view_pool) = set_max_pool_forward(&per_view.reshape(vec![batch.len(), views, self.feature_dim])?)?;
        Ok((f, ImageEncoderCache { batch: batch.len(), views, blocks, flat, head, head_pre, view_pool }))
    }

    pub fn backward(&self, params: &ParamStore, cache: &ImageEncoderCache, df: &NumArray, mut grads: Option<&mut Gradients>) -> Result<()> {
        let m = cache.batch * cache.views;
        let dv = set_max_pool_backward(&cache.view_pool, df)?.reshape(vec![m, self.feature_dim])?;
        let dv = relu_backward(&cache.head_pre, &dv)?;
        let mut d = cache.head.backward(params, &cache.flat, &dv, grads.as_deref_mut())?.into_data();
        for (i, (conv, blk)) in self.convs.iter().zip(&cache.blocks).enumerate().rev() {
            let mut dact = vec![0.0; blk.pre.len()];
            for (o, &src) in blk.pool_argmax.iter().enumerate() {
                dact[src] += d[o];
            }
            let dpre = relu_backward(&blk.pre, &NumArray::new(blk.pre.shape().to_vec(), dact)?)?;
            let dcols = conv.backward(params, &blk.cols, &dpre, grads.as_deref_mut())?;
            if i > 0 {
                d = col2im(dcols.data(), m, blk.h, blk.w, blk.cin);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{grad_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn views(v: usize, size: usize, seed: u64) -> ViewImageSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let images = (0..v).map(|_| (0..size * size).map(|_| if rng.random::<f64>() < 0.4 { rng.random() } else { 0.0 }).collect()).collect();
        ViewImageSet { images, h: size, w: size, rig_id: "test".into() }
    }

    fn setup(cfg: &NetworkConfig, size: usize) -> (ImageEncoder, ParamStore) {
        let enc = ImageEncoder::new(cfg).unwrap();
        let mut ps = ParamStore::new();
        enc.init(&mut ps, size, size, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        // blank pixels would otherwise sit exactly on the relu kink
        let names: Vec<String> = ps.names().filter(|n| n.ends_with(".b")).map(String::from).collect();
        for (k, n) in names.iter().enumerate() {
            ps.value_mut(n).unwrap().data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = 0.005 + 0.01 * ((i + k) % 5) as f64);
        }
        (enc, ps)
    }

    #[test]
    fn view_order_invariance() {
        let (enc, ps) = setup(&NetworkConfig::default(), 32);
        let a = views(6, 32, 3);
        let mut b = a.clone();
        b.images.reverse();
        b.images.swap(0, 2);
        assert_eq!(enc.forward(&ps, &[&a]).unwrap().0, enc.forward(&ps, &[&b]).unwrap().0);
    }

    #[test]
    fn single_view_aggregation_is_identity() {
        let (enc, ps) = setup(&NetworkConfig::default(), 16);
        let set = views(3, 16, 4);
        let (f, _) = enc.forward(&ps, &[&set]).unwrap();
        let mut best = vec![f64::NEG_INFINITY; 128];
        for v in 0..3 {
            let single = ViewImageSet { images: vec![set.images[v].clone()], ..set.clone() };
            let (fv, _) = enc.forward(&ps, &[&single]).unwrap();
            best.iter_mut().zip(fv.data()).for_each(|(a, &b)| *a = a.max(b));
        }
        assert_eq!(f.data(), best.as_slice());
    }

    #[test]
    fn rejects_tiny_views() {
        let (enc, ps) = setup(&NetworkConfig::default(), 8);
        let set = views(2, 4, 0);
        assert!(matches!(enc.forward(&ps, &[&set]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (m, h, w, c) = (2, 5, 4, 3);
        let x: Vec<f64> = (0..m * h * w * c).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..m * h * w * 9 * c).map(|_| rng.random()).collect();
        let lhs: f64 = im2col(&x, m, h, w, c).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, m, h, w, c)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn gradient_check_through_cnn_and_aggregation() {
        let cfg = NetworkConfig { feature_dim: 6, cnn_channels: vec![3, 4], ..Default::default() };
        let (enc, mut ps) = setup(&cfg, 8);
        let sets = [views(3, 8, 5), views(3, 8, 6)];
        let refs: Vec<&ViewImageSet> = sets.iter().collect();
        let wts: Vec<f64> = (0..12).map(|i| 0.4 + 0.13 * (i % 5) as f64).collect();
        let report = grad_check(
            |p| {
                let (f, cache) = enc.forward(p, &refs)?;
                let v = f.data().iter().zip(&wts).map(|(a, b)| a * b).sum();
                let mut g = Gradients::new();
                enc.backward(p, &cache, &NumArray::new(vec![2, 6], wts.clone())?, Some(&mut g))?;
                p.accumulate(&g)?;
                Ok(v)
            },
            &mut ps,
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error <= 1e-5, "{report:?}");
    }
}
