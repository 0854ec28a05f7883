use super::NumArray;
use crate::{Error, Result};

/// Row-wise max-shifted log-softmax of `logits / temperature`.
pub fn log_softmax(logits: &NumArray, temperature: f64) -> Result<NumArray> {
    let (b, c) = logits.dims2()?;
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {temperature}")));
    }
    let mut out = Vec::with_capacity(b * c);
    for i in 0..b {
        let row = logits.row(i);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&v| ((v - m) / temperature).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|&v| (v - m) / temperature - lse));
    }
    NumArray::new(vec![b, c], out)
}

pub fn softmax(logits: &NumArray, temperature: f64) -> Result<NumArray> {
    let mut ls = log_softmax(logits, temperature)?;
    ls.data_mut().iter_mut().for_each(|v| *v = v.exp());
    Ok(ls)
}

/// Mean cross-entropy over the batch and its gradient `(softmax - onehot) / B`.
pub fn softmax_xent(logits: &NumArray, labels: &[usize]) -> Result<(f64, NumArray)> {
    let (b, c) = logits.dims2()?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {c} classes")));
    }
    let ls = log_softmax(logits, 1.0)?;
    let inv_b = 1.0 / b as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(b * c);
    for (i, &y) in labels.iter().enumerate() {
        let row = ls.row(i);
        loss -= row[y];
        grad.extend(row.iter().enumerate().map(|(j, &l)| (l.exp() - if j == y { 1.0 } else { 0.0 }) * inv_b));
    }
    Ok((loss * inv_b, NumArray::new(vec![b, c], grad)?))
}

/// Value and gradients of a batch-mean `KL(softmax(p/T) || softmax(q/T))`.
#[derive(Debug, Clone)]
pub struct KlOutput {
    pub value: f64,
    /// Gradient w.r.t. the first (target-side) logits.
    pub dp: NumArray,
    /// Gradient w.r.t. the second logits.
    pub dq: NumArray,
}

/// Batch-mean KL divergence with both gradients.
///
/// Terms whose target probability underflows to zero contribute nothing, so
/// identical logit rows give exactly zero.
pub fn kl_divergence_full(p_logits: &NumArray, q_logits: &NumArray, temperature: f64) -> Result<KlOutput> {
    if p_logits.shape() != q_logits.shape() {
        return Err(Error::Shape(format!("KL between {:?} and {:?}", p_logits.shape(), q_logits.shape())));
    }
    let (b, c) = p_logits.dims2()?;
    let lp = log_softmax(p_logits, temperature)?;
    let lq = log_softmax(q_logits, temperature)?;
    let inv_b = 1.0 / b as f64;
    let mut value = 0.0;
    let mut dp = Vec::with_capacity(b * c);
    let mut dq = Vec::with_capacity(b * c);
    for i in 0..b {
        let (rp, rq) = (lp.row(i), lq.row(i));
        let mut row_kl = 0.0;
        let mut terms = vec![0.0; c];
        for j in 0..c {
            let p = rp[j].exp();
            if p > 0.0 {
                terms[j] = rp[j] - rq[j];
                row_kl += p * terms[j];
            }
        }
        value += row_kl;
        for j in 0..c {
            let p = rp[j].exp();
            dp.push(p * (terms[j] - row_kl) * inv_b / temperature);
            dq.push((rq[j].exp() - p) * inv_b / temperature);
        }
    }
    Ok(KlOutput { value: value * inv_b, dp: NumArray::new(vec![b, c], dp)?, dq: NumArray::new(vec![b, c], dq)? })
}

/// `KL(softmax(p) || softmax(q))` averaged over the batch, with `p` held constant.
pub fn kl_divergence(p_logits: &NumArray, q_logits: &NumArray) -> Result<(f64, NumArray)> {
    let out = kl_divergence_full(p_logits, q_logits, 1.0)?;
    Ok((out.value, out.dq))
}
