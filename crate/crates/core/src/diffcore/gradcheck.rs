use super::ParamStore;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub h: f64,
    /// Coordinates probed per tensor; larger tensors are strided evenly.
    pub max_coords: usize,
    /// Lower bound on the relative-error denominator, so gradients near zero
    /// are compared on an absolute scale.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { h: 1e-6, max_coords: 200, floor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor name (empty for input checks) and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        Self { max_rel_error: 0.0, worst: None, checked: 0 }
    }

    fn record(&mut self, name: &str, idx: usize, err: f64) {
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(err);
            if err >= self.max_rel_error {
                self.worst = Some((name.to_string(), idx));
            }
        }
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn probe_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|i| i * len / max).collect()
    }
}

/// Compares analytic parameter gradients against central differences.
///
/// `f` must compute the loss and accumulate its gradient into `params`; it is
/// called once for the analytic pass and twice per probed coordinate.
pub fn grad_check<F>(mut f: F, params: &mut ParamStore, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    params.zero_grad();
    f(params)?;
    let analytic: Vec<(String, Vec<f64>)> =
        params.learnable().map(|(k, p)| (k.to_string(), p.grad.data().to_vec())).collect();
    let mut report = GradCheckReport::empty();
    for (name, grad) in &analytic {
        for idx in probe_indices(grad.len(), opts.max_coords) {
            let orig = params.value(name)?.data()[idx];
            params.value_mut(name)?.data_mut()[idx] = orig + opts.h;
            let up = f(params)?;
            params.value_mut(name)?.data_mut()[idx] = orig - opts.h;
            let down = f(params)?;
            params.value_mut(name)?.data_mut()[idx] = orig;
            let numeric = (up - down) / (2.0 * opts.h);
            report.record(name, idx, rel_error(grad[idx], numeric, opts.floor));
        }
    }
    params.zero_grad();
    Ok(report)
}

/// Checks the gradient of a scalar function of a flat input vector.
///
/// `f` returns the value and its analytic gradient with respect to `x`.
pub fn grad_check_input<F>(mut f: F, x: &[f64], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, grad) = f(x)?;
    let mut probe = x.to_vec();
    let mut report = GradCheckReport::empty();
    for idx in probe_indices(x.len(), opts.max_coords) {
        probe[idx] = x[idx] + opts.h;
        let (up, _) = f(&probe)?;
        probe[idx] = x[idx] - opts.h;
        let (down, _) = f(&probe)?;
        probe[idx] = x[idx];
        report.record("", idx, rel_error(grad[idx], (up - down) / (2.0 * opts.h), opts.floor));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Gradients, Linear, NumArray};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn detects_corrupted_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let lin = Linear::new("l", 3, 2);
        let mut ps = ParamStore::new();
        lin.init(&mut ps, &mut rng).unwrap();
        let x = NumArray::new(vec![2, 3], vec![0.5, -1.0, 0.25, 2.0, 0.1, -0.3]).unwrap();
        let run = |corrupt: bool, ps: &mut ParamStore| {
            grad_check(
                |p| {
                    let y = lin.forward(p, &x)?;
                    let v: f64 = y.data().iter().map(|v| v * v).sum();
                    let mut dy = y.clone();
                    dy.scale(2.0);
                    let mut g = Gradients::new();
                    lin.backward(p, &x, &dy, Some(&mut g))?;
                    if corrupt {
                        g.scale(1.1);
                    }
                    p.accumulate(&g)?;
                    Ok(v)
                },
                ps,
                &GradCheckOptions::default(),
            )
            .unwrap()
        };
        assert!(run(false, &mut ps).max_rel_error <= 1e-6);
        let bad = run(true, &mut ps);
        assert!(bad.max_rel_error > 1e-2, "{bad:?}");
        assert!(bad.worst.is_some());
    }

    #[test]
    fn probes_are_strided_and_bounded() {
        assert_eq!(probe_indices(5, 200), vec![0, 1, 2, 3, 4]);
        let p = probe_indices(1000, 200);
        assert_eq!(p.len(), 200);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }
}
