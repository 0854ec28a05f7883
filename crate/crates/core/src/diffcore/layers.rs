use rayon::prelude::*;

use super::{Gradients, NumArray, ParamStore};
use crate::{Error, Result};

const ROW_CHUNK: usize = 64;
// Fixed chunk for reductions over rows, so results do not depend on the thread count.
const REDUCE_CHUNK: usize = 256;

/// `x[m×k] · w[k×n] (+ bias[n])`.
pub fn matmul(x: &[f64], m: usize, k: usize, w: &[f64], n: usize, bias: Option<&[f64]>) -> Vec<f64> {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    let mut out = vec![0.0; m * n];
    out.par_chunks_mut(ROW_CHUNK * n).enumerate().for_each(|(ci, block)| {
        let r0 = ci * ROW_CHUNK;
        for (ri, orow) in block.chunks_exact_mut(n).enumerate() {
            if let Some(b) = bias {
                orow.copy_from_slice(b);
            }
            let xrow = &x[(r0 + ri) * k..(r0 + ri + 1) * k];
            for (kk, &a) in xrow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let wrow = &w[kk * n..(kk + 1) * n];
                orow.iter_mut().zip(wrow).for_each(|(o, &wv)| *o += a * wv);
            }
        }
    });
    out
}

/// `dy[m×n] · w[k×n]ᵀ`, giving `m×k`.
pub fn matmul_nt(dy: &[f64], m: usize, n: usize, w: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    out.par_chunks_mut(ROW_CHUNK * k).enumerate().for_each(|(ci, block)| {
        let r0 = ci * ROW_CHUNK;
        for (ri, orow) in block.chunks_exact_mut(k).enumerate() {
            let drow = &dy[(r0 + ri) * n..(r0 + ri + 1) * n];
            for (kk, o) in orow.iter_mut().enumerate() {
                let wrow = &w[kk * n..(kk + 1) * n];
                *o = drow.iter().zip(wrow).map(|(a, b)| a * b).sum();
            }
        }
    });
    out
}

/// `x[m×k]ᵀ · dy[m×n]`, giving `k×n`, plus column sums of `dy`.
pub fn matmul_tn(x: &[f64], m: usize, k: usize, dy: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..m.div_ceil(REDUCE_CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut dw = vec![0.0; k * n];
            let mut db = vec![0.0; n];
            for r in ci * REDUCE_CHUNK..((ci + 1) * REDUCE_CHUNK).min(m) {
                let drow = &dy[r * n..(r + 1) * n];
                db.iter_mut().zip(drow).for_each(|(a, b)| *a += b);
                for (kk, &a) in x[r * k..(r + 1) * k].iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    dw[kk * n..(kk + 1) * n].iter_mut().zip(drow).for_each(|(o, &d)| *o += a * d);
                }
            }
            (dw, db)
        })
        .collect();
    let mut dw = vec![0.0; k * n];
    let mut db = vec![0.0; n];
    for (pw, pb) in partials {
        dw.iter_mut().zip(&pw).for_each(|(a, b)| *a += b);
        db.iter_mut().zip(&pb).for_each(|(a, b)| *a += b);
    }
    (dw, db)
}

/// Declarative description of one layer, used to validate network layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Linear { din: usize, dout: usize },
    Relu,
    SetMaxPool,
    SoftmaxXent { classes: usize },
    LogSoftmax { classes: usize },
}

impl LayerSpec {
    /// Output width for an input of width `din`, or `None` if the layer cannot accept it.
    pub fn output_width(&self, din: usize) -> Option<usize> {
        match *self {
            LayerSpec::Linear { din: d, dout } => (d == din).then_some(dout),
            LayerSpec::Relu | LayerSpec::SetMaxPool => Some(din),
            LayerSpec::SoftmaxXent { classes } => (classes == din).then_some(1),
            LayerSpec::LogSoftmax { classes } => (classes == din).then_some(classes),
        }
    }

    /// Validates a chain of layers starting at width `din`, returning the final width.
    pub fn check_chain(specs: &[LayerSpec], din: usize) -> Result<usize> {
        specs.iter().try_fold(din, |w, s| {
            s.output_width(w).ok_or_else(|| Error::Shape(format!("layer {s:?} cannot take width {w}")))
        })
    }
}

/// Fully connected layer `y = x·W + b` with `W: [din, dout]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub w: String,
    pub b: String,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn new(name: &str, din: usize, dout: usize) -> Self {
        Self { w: format!("{name}.w"), b: format!("{name}.b"), din, dout }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Linear { din: self.din, dout: self.dout }
    }

    pub fn init<R: rand::Rng + ?Sized>(&self, params: &mut ParamStore, rng: &mut R) -> Result<()> {
        params.insert_uniform(&self.w, &[self.din, self.dout], self.din, rng)?;
        params.insert_zeros(&self.b, &[self.dout])
    }

    fn weights<'a>(&self, params: &'a ParamStore) -> Result<(&'a NumArray, &'a NumArray)> {
        let w = params.value(&self.w)?;
        let b = params.value(&self.b)?;
        if w.shape() != [self.din, self.dout] || b.shape() != [self.dout] {
            return Err(Error::Shape(format!(
                "{}: stored shapes {:?}/{:?} do not match {}x{}",
                self.w,
                w.shape(),
                b.shape(),
                self.din,
                self.dout
            )));
        }
        Ok((w, b))
    }

    /// `x` is `[rows, din]`.
    pub fn forward(&self, params: &ParamStore, x: &NumArray) -> Result<NumArray> {
        let (rows, din) = x.dims2()?;
        if din != self.din {
            return Err(Error::Shape(format!("{}: input width {din}, expected {}", self.w, self.din)));
        }
        let (w, b) = self.weights(params)?;
        let y = matmul(x.data(), rows, din, w.data(), self.dout, Some(b.data()));
        NumArray::new(vec![rows, self.dout], y)
    }

    /// Returns `dx`; adds `dW = xᵀ·dy` and `db = Σ dy` to `grads` when given.
    pub fn backward(
        &self,
        params: &ParamStore,
        x: &NumArray,
        dy: &NumArray,
        grads: Option<&mut Gradients>,
    ) -> Result<NumArray> {
        let (rows, din) = x.dims2()?;
        let (drows, dout) = dy.dims2()?;
        if drows != rows || dout != self.dout || din != self.din {
            return Err(Error::Shape(format!(
                "{}: backward with x {:?} and dy {:?}",
                self.w,
                x.shape(),
                dy.shape()
            )));
        }
        let (w, _) = self.weights(params)?;
        if let Some(g) = grads {
            let (dw, db) = matmul_tn(x.data(), rows, din, dy.data(), dout);
            g.add(&self.w, &[din, dout], &dw);
            g.add(&self.b, &[dout], &db);
        }
        let dx = matmul_nt(dy.data(), rows, dout, w.data(), din);
        NumArray::new(vec![rows, din], dx)
    }
}

pub fn relu_forward(x: &NumArray) -> NumArray {
    let data = x.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    NumArray::new(x.shape().to_vec(), data).expect("same shape")
}

/// Masks `dy` by `x > 0`; the subgradient at 0 is 0.
pub fn relu_backward(x: &NumArray, dy: &NumArray) -> Result<NumArray> {
    if x.shape() != dy.shape() {
        return Err(Error::Shape(format!("relu backward: {:?} vs {:?}", x.shape(), dy.shape())));
    }
    let data = x.data().iter().zip(dy.data()).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect();
    NumArray::new(x.shape().to_vec(), data)
}

/// Argmax positions from a set max-pool, needed for its backward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaxPoolRecord {
    pub batch: usize,
    pub set_size: usize,
    pub width: usize,
    /// `argmax[b * width + j]` is the winning set index for feature `j` of batch item `b`.
    pub argmax: Vec<usize>,
}

/// Max over the set axis of `[B, N, d]`; ties go to the lowest index.
pub fn set_max_pool_forward(x: &NumArray) -> Result<(NumArray, MaxPoolRecord)> {
    let &[b, n, d] = x.shape() else {
        return Err(Error::Shape(format!("set max-pool expects [B, N, d], got {:?}", x.shape())));
    };
    if n == 0 {
        return Err(Error::Shape("set max-pool over an empty set".into()));
    }
    let xs = x.data();
    let mut out = vec![0.0; b * d];
    let mut argmax = vec![0usize; b * d];
    for bi in 0..b {
        let base = bi * n * d;
        let orow = &mut out[bi * d..(bi + 1) * d];
        let arow = &mut argmax[bi * d..(bi + 1) * d];
        orow.copy_from_slice(&xs[base..base + d]);
        for i in 1..n {
            let row = &xs[base + i * d..base + (i + 1) * d];
            for j in 0..d {
                if row[j] > orow[j] {
                    orow[j] = row[j];
                    arow[j] = i;
                }
            }
        }
    }
    Ok((NumArray::new(vec![b, d], out)?, MaxPoolRecord { batch: b, set_size: n, width: d, argmax }))
}

pub fn set_max_pool_backward(rec: &MaxPoolRecord, dy: &NumArray) -> Result<NumArray> {
    if dy.shape() != [rec.batch, rec.width] {
        return Err(Error::Shape(format!("set max-pool backward: dy {:?}", dy.shape())));
    }
    let (n, d) = (rec.set_size, rec.width);
    let mut dx = vec![0.0; rec.batch * n * d];
    for bi in 0..rec.batch {
        for j in 0..d {
            let i = rec.argmax[bi * d + j];
            dx[bi * n * d + i * d + j] += dy.data()[bi * d + j];
        }
    }
    NumArray::new(vec![rec.batch, n, d], dx)
}
