// The distillation terms on random features: the two enhancement losses,
// their weighted total, and the normalized-MSE and Hinton comparators.
//
//     cargo run --release --example distill_losses -- [seed]

use pointcmt::diffcore::{NumArray, ParamStore};
use pointcmt::distill::{
    classifier_enhancement_loss, feature_enhancement_loss, hinton_kd_loss, mse_feature_kd_loss, normalize_gaussian,
    normalize_scale, total_loss, EmdSettings, LossReport, LossWeights,
};
use pointcmt::networks::{Classifier, Cmpg, NetworkConfig, CLS_PTS};
use pointcmt::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features(b: usize, d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Result<NumArray> {
    NumArray::new(vec![b, d], (0..b * d).map(|_| scale * rng.random::<f64>()).collect())
}

pub fn run(seed: u64) -> Result<LossReport> {
    let net = NetworkConfig { feature_dim: 16, classifier_hidden: vec![16], cmpg_hidden: vec![32, 64], n_gen: 32, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cmpg = Cmpg::new(&net)?;
    let mut cmpg_params = ParamStore::new();
    cmpg.init(&mut cmpg_params, &mut rng)?;
    cmpg_params.freeze();
    let cls = Classifier::new(CLS_PTS, &net)?;
    let mut cls_params = ParamStore::new();
    cls.init(&mut cls_params, &mut rng)?;

    // image features live on a larger scale than point features
    let f_img = features(8, 16, 3.0, &mut rng)?;
    let f_pts = features(8, 16, 1.0, &mut rng)?;
    let emd = EmdSettings::default();

    let (fe_same, _) = feature_enhancement_loss(&f_img, &f_img, &cmpg, &cmpg_params, emd)?;
    let ce_same = classifier_enhancement_loss(&f_img, &f_img, &cls, &cls_params)?.value;
    println!("identical features: feature {fe_same:.3e}  classifier {ce_same:.3e}");

    let (fe, _) = feature_enhancement_loss(&f_pts, &f_img, &cmpg, &cmpg_params, emd)?;
    let ce = classifier_enhancement_loss(&f_img, &f_pts, &cls, &cls_params)?.value;
    let xent = 1.386;
    let report = total_loss(xent, fe, ce, LossWeights::default())?;
    println!(
        "mismatched: feature {fe:.4}  classifier {ce:.4}  total {:.4} = {xent} + 30*{fe:.4} + 0.3*{ce:.4}",
        report.total
    );

    let (raw, _) = mse_feature_kd_loss(&f_pts, &f_img)?;
    let (g, _) = mse_feature_kd_loss(&f_pts, &normalize_gaussian(&f_img, &f_pts)?)?;
    let (s, _) = mse_feature_kd_loss(&f_pts, &normalize_scale(&f_img, &f_pts)?)?;
    println!("feature MSE: raw {raw:.4}  gaussian-normalized {g:.4}  scale-normalized {s:.4}");

    let (zi, _) = cls.forward(&cls_params, &f_img)?;
    let (zp, _) = cls.forward(&cls_params, &f_pts)?;
    let (kd, _) = hinton_kd_loss(&zi, &zp)?;
    println!("hinton KL {kd:.4}");
    Ok(report)
}

fn main() -> Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    run(seed).map(|_| ())
}
