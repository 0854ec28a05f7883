use rand::Rng;

use super::{Mlp, MlpCache, NetworkConfig, ENC_PTS};
use crate::diffcore::{set_max_pool_backward, set_max_pool_forward, Gradients, MaxPoolRecord, NumArray, ParamStore};
use crate::geometry::{dist2, farthest_point_sample, knn, PointCloud};
use crate::{Error, Result};

const GROUP_SIZE: usize = 16;
const LOCAL_WIDTHS: [usize; 3] = [3, 32, 64];

/// Shared per-point MLP followed by a max over the set, optionally preceded
/// by a local stage (FPS centers, kNN groups, relative-coordinate MLP,
/// per-group max).
///
/// Without the local stage the output is exactly invariant to point order.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    mlp: Mlp,
    local: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct PointEncoderCache {
    batch: usize,
    set_size: usize,
    mlp: MlpCache,
    pool: MaxPoolRecord,
    local: Option<(MlpCache, MaxPoolRecord)>,
}

impl PointEncoder {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        let local = if cfg.grouped_stage { Some(Mlp::new(&format!("{ENC_PTS}.local"), &LOCAL_WIDTHS, true)?) } else { None };
        let din = if cfg.grouped_stage { LOCAL_WIDTHS[2] + 3 } else { 3 };
        let mut widths = vec![din];
        widths.extend(&cfg.point_mlp_widths);
        Ok(Self { mlp: Mlp::new(ENC_PTS, &widths, true)?, local })
    }

    pub fn feature_dim(&self) -> usize {
        self.mlp.dout()
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        if let Some(local) = &self.local {
            local.init(params, rng)?;
        }
        self.mlp.init(params, rng)
    }

    /// Encodes a batch of equal-size clouds into `[B, D]` features.
    pub fn forward(&self, params: &ParamStore, clouds: &[&PointCloud]) -> Result<(NumArray, PointEncoderCache)> {
        let b = clouds.len();
        let n = clouds.first().map(|c| c.len()).ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        if clouds.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("all clouds in a batch must have the same size".into()));
        }
        let (x, set_size, local) = match &self.local {
            None => (NumArray::new(vec![b * n, 3], clouds.iter().flat_map(|c| c.to_flat()).collect())?, n, None),
            Some(local) => {
                let (x, m, lc) = self.grouped_input(local, params, clouds)?;
                (x, m, Some(lc))
            }
        };
        let (h, mlp) = self.mlp.forward(params, x)?;
        let d = self.mlp.dout();
        let (f, pool) = set_max_pool_forward(&h.reshape(vec![b, set_size, d])?)?;
        Ok((f, PointEncoderCache { batch: b, set_size, mlp, pool, local }))
    }

    fn grouped_input(
        &self,
        local: &Mlp,
        params: &ParamStore,
        clouds: &[&PointCloud],
    ) -> Result<(NumArray, usize, (MlpCache, MaxPoolRecord))> {
        let n = clouds[0].len();
        let m = (n / 4).max(1);
        let k = GROUP_SIZE.min(n);
        let mut rel = Vec::with_capacity(clouds.len() * m * k * 3);
        let mut centers_xyz = Vec::with_capacity(clouds.len() * m * 3);
        for pc in clouds {
            let pts = pc.points();
            let c = pc.centroid();
            // farthest from the centroid, so the start does not depend on point order
            let start = (0..n).fold(0, |best, i| if dist2(pts[i], c) > dist2(pts[best], c) { i } else { best });
            let centers = farthest_point_sample(pc, m, start)?;
            for (group, &ci) in knn(pc, &centers, k)?.iter().zip(centers.indices()) {
                let o = pts[ci];
                centers_xyz.extend_from_slice(&o);
                for &j in group.indices() {
                    rel.extend_from_slice(&[pts[j][0] - o[0], pts[j][1] - o[1], pts[j][2] - o[2]]);
                }
            }
        }
        let groups = clouds.len() * m;
        let (h, cache) = local.forward(params, NumArray::new(vec![groups * k, 3], rel)?)?;
        let w = local.dout();
        let (pooled, rec) = set_max_pool_forward(&h.reshape(vec![groups, k, w])?)?;
        let mut x = Vec::with_capacity(groups * (w + 3));
        for g in 0..groups {
            x.extend_from_slice(pooled.row(g));
            x.extend_from_slice(&centers_xyz[3 * g..3 * g + 3]);
        }
        Ok((NumArray::new(vec![groups, w + 3], x)?, m, (cache, rec)))
    }

    /// Backpropagates `df` (`[B, D]`) into the encoder parameters.
    pub fn backward(&self, params: &ParamStore, cache: &PointEncoderCache, df: &NumArray, mut grads: Option<&mut Gradients>) -> Result<()> {
        let dh = set_max_pool_backward(&cache.pool, df)?;
        let rows = cache.batch * cache.set_size;
        let dh = dh.reshape(vec![rows, self.mlp.dout()])?;
        let dx = self.mlp.backward(params, &cache.mlp, dh, grads.as_deref_mut())?;
        if let (Some(local), Some((lcache, rec))) = (&self.local, &cache.local) {
            let w = local.dout();
            let mut dpooled = Vec::with_capacity(rows * w);
            for r in 0..rows {
                dpooled.extend_from_slice(&dx.row(r)[..w]);
            }
            let dl = set_max_pool_backward(rec, &NumArray::new(vec![rows, w], dpooled)?)?;
            let dl = dl.reshape(vec![rec.batch * rec.set_size, w])?;
            local.backward(params, lcache, dl, grads)?;
        }
        Ok(())
    }
}
