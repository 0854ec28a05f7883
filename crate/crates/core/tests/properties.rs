use std::path::PathBuf;

use pointcmt::diffcore::{decode_checkpoint, encode_checkpoint, kl_divergence, softmax, NumArray, ParamStore};
use pointcmt::distill::{normalize_scale, total_loss, LossWeights};
use pointcmt::emd::{emd_loss, solve_assignment_auction, solve_assignment_exact, CostMatrix, EmdSolver};
use pointcmt::eval::{report_from_predictions, stratified_subset};
use pointcmt::geometry::{farthest_point_sample, knn, normalize_unit_sphere, dist2, PointCloud};
use pointcmt::networks::NetworkConfig;
use pointcmt::pipeline::{synth_dataset, LrSchedule, RunConfig};
use proptest::collection::vec;
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -2.0..2.0f64
}

fn cloud(n: std::ops::Range<usize>) -> impl Strategy<Value = PointCloud> {
    vec([coord(), coord(), coord()], n).prop_map(|p| PointCloud::new(p).unwrap())
}

fn cloud_pair(n: std::ops::Range<usize>) -> impl Strategy<Value = (PointCloud, PointCloud)> {
    n.prop_flat_map(|k| (vec([coord(), coord(), coord()], k), vec([coord(), coord(), coord()], k)))
        .prop_map(|(a, b)| (PointCloud::new(a).unwrap(), PointCloud::new(b).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_centers_and_bounds(pc in cloud(1..60)) {
        let n = normalize_unit_sphere(&pc).unwrap();
        let c = n.centroid();
        prop_assert!(c.iter().all(|v| v.abs() < 1e-9));
        let r = n.max_radius();
        prop_assert!(r == 0.0 || (r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fps_picks_distinct_points_from_the_start(pc in cloud(2..80), k in 1usize..80, s in 0usize..80) {
        let k = 1 + k % pc.len();
        let s = s % pc.len();
        let idx = farthest_point_sample(&pc, k, s).unwrap();
        prop_assert_eq!(idx.len(), k);
        prop_assert_eq!(idx.indices()[0], s);
        let mut sorted = idx.indices().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
    }

    #[test]
    fn knn_groups_are_sorted_and_start_nearby(pc in cloud(2..60), k in 1usize..60) {
        let k = 1 + k % pc.len();
        let centers = farthest_point_sample(&pc, pc.len().min(5), 0).unwrap();
        let groups = knn(&pc, &centers, k).unwrap();
        for (g, &c) in groups.iter().zip(centers.indices()) {
            prop_assert_eq!(g.len(), k);
            let d: Vec<f64> = g.indices().iter().map(|&i| dist2(pc.points()[i], pc.points()[c])).collect();
            prop_assert!(d[0] == 0.0);
            prop_assert!(d.windows(2).all(|w| w[0] <= w[1]));
            // nothing outside the group is strictly closer than its farthest member
            let worst = d[k - 1];
            let outside = (0..pc.len()).filter(|i| !g.indices().contains(i));
            for i in outside {
                prop_assert!(dist2(pc.points()[i], pc.points()[c]) >= worst);
            }
        }
    }

    #[test]
    fn exact_assignment_is_a_bijection_no_worse_than_identity(n in 1usize..12, seed in any::<u64>()) {
        let mut s = seed;
        let costs: Vec<f64> = (0..n * n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 }).collect();
        let c = CostMatrix::new(n, costs).unwrap();
        let m = solve_assignment_exact(&c);
        prop_assert!(m.is_bijection());
        let identity: Vec<usize> = (0..n).collect();
        prop_assert!(c.cost_of(&m.assignment) <= c.cost_of(&identity) + 1e-12);
    }

    #[test]
    fn auction_is_within_n_epsilon_of_exact((p, q) in cloud_pair(1..40)) {
        let c = CostMatrix::from_clouds(&p, &q).unwrap();
        let eps = 1e-4;
        let exact = c.cost_of(&solve_assignment_exact(&c).assignment);
        let auction = solve_assignment_auction(&c, eps).unwrap();
        prop_assert!(auction.is_bijection());
        let got = c.cost_of(&auction.assignment);
        prop_assert!(got >= exact - 1e-9);
        prop_assert!(got <= exact + p.len() as f64 * eps + 1e-9);
    }

    #[test]
    fn emd_is_a_metric((p, q) in cloud_pair(1..24), shift in coord()) {
        let r = PointCloud::new(q.points().iter().map(|a| [a[0] + shift, a[1], a[2] - shift]).collect()).unwrap();
        let d = |a: &PointCloud, b: &PointCloud| emd_loss(a, b, EmdSolver::Exact).unwrap().value;
        prop_assert!(d(&p, &p).abs() < 1e-12);
        prop_assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-9);
        prop_assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_kl_is_nonnegative(a in vec(-20.0..20.0f64, 12), b in vec(-20.0..20.0f64, 12)) {
        let p = NumArray::new(vec![3, 4], a).unwrap();
        let q = NumArray::new(vec![3, 4], b).unwrap();
        let s = softmax(&p, 1.0).unwrap();
        for i in 0..3 {
            prop_assert!((s.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        prop_assert!(kl_divergence(&p, &q).unwrap().0 >= -1e-15);
    }

    #[test]
    fn total_loss_is_the_weighted_sum(ce in 0.0..10.0f64, fe in 0.0..10.0f64, cl in 0.0..10.0f64, alpha in 0.0..50.0f64, beta in 0.0..2.0f64) {
        let r = total_loss(ce, fe, cl, LossWeights::new(alpha, beta).unwrap()).unwrap();
        prop_assert!((r.total - (ce + alpha * fe + beta * cl)).abs() <= 1e-9 * r.total.max(1.0));
    }

    #[test]
    fn scale_normalization_keeps_directions(a in vec(0.1..5.0f64, 12), b in vec(-1.0..1.0f64, 12)) {
        let fi = NumArray::new(vec![4, 3], a).unwrap();
        let fp = NumArray::new(vec![4, 3], b).unwrap();
        let out = normalize_scale(&fi, &fp).unwrap();
        let ratio = out.data()[0] / fi.data()[0];
        for (x, y) in out.data().iter().zip(fi.data()) {
            prop_assert!((x - ratio * y).abs() < 1e-12 * x.abs().max(1.0));
        }
        prop_assert!(ratio > 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_exact(shapes in vec(vec(1usize..5, 0..4), 1..5), seed in any::<u64>()) {
        let mut ps = ParamStore::new();
        let mut s = seed;
        for (i, shape) in shapes.iter().enumerate() {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); f64::from_bits(s >> 2) }).collect();
            ps.insert(format!("t{i}.w"), NumArray::new(shape.clone(), data).unwrap()).unwrap();
        }
        let bytes = encode_checkpoint(&ps).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        prop_assert_eq!(encode_checkpoint(&back).unwrap(), bytes.clone());
        for cut in [0, 3, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(decode_checkpoint(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn report_accuracies_are_consistent(preds in vec(0usize..3, 1..60), labels in vec(0usize..3, 1..60)) {
        let n = preds.len().min(labels.len());
        let (preds, labels) = (&preds[..n], &labels[..n]);
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = report_from_predictions(preds, labels, &names).unwrap();
        let correct = preds.iter().zip(labels).filter(|(a, b)| a == b).count();
        prop_assert!((r.overall_accuracy - 100.0 * correct as f64 / n as f64).abs() < 1e-9);
        let mean = r.per_class.iter().map(|(_, a)| a).sum::<f64>() / r.per_class.len() as f64;
        prop_assert!((r.class_mean_accuracy - mean).abs() < 1e-9);
        prop_assert!(r.per_class.iter().all(|(_, a)| (0.0..=100.0).contains(a)));
        let mut rev: Vec<(usize, usize)> = preds.iter().copied().zip(labels.iter().copied()).collect();
        rev.reverse();
        let (rp, rl): (Vec<usize>, Vec<usize>) = rev.into_iter().unzip();
        prop_assert_eq!(report_from_predictions(&rp, &rl, &names).unwrap().overall_accuracy, r.overall_accuracy);
    }

    #[test]
    fn cosine_schedule_stays_in_range(base in 1e-4..1.0f64, epochs in 1usize..200, e in 1usize..200) {
        let e = 1 + (e - 1) % epochs;
        let lr = LrSchedule::Cosine.lr(base, e, epochs);
        prop_assert!(lr > 0.0 && lr <= base);
        prop_assert_eq!(LrSchedule::Cosine.lr(base, 1, epochs), base);
        prop_assert_eq!(LrSchedule::Constant.lr(base, e, epochs), base);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn config_text_round_trip(
        seed in any::<u64>(),
        epochs in 0usize..500,
        lr in 1e-5..1.0f64,
        alpha in 0.0..100.0f64,
        d in 4usize..64,
        grouped in any::<bool>(),
        augment in any::<bool>(),
        twenty in any::<bool>(),
    ) {
        let cfg = RunConfig {
            seed,
            epochs_student: epochs,
            sgd_lr: lr,
            weights: LossWeights::new(alpha, 0.3).unwrap(),
            n_views: if twenty { 20 } else { 6 },
            augment,
            out_dir: PathBuf::from(format!("out/run {seed}")),
            network: NetworkConfig { feature_dim: d, point_mlp_widths: vec![8, d], grouped_stage: grouped, ..Default::default() },
            ..Default::default()
        };
        let text = cfg.to_text();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_text(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn stratified_subsets_are_balanced_and_ordered(n in 2usize..8, f in 0.3..1.0f64, seed in any::<u64>()) {
        let ds = synth_dataset(n, 64, 1).unwrap();
        let sub = stratified_subset(&ds, f, seed).unwrap();
        let want = (f * n as f64).round() as usize;
        prop_assert_eq!(sub.class_counts(), vec![want; 4]);
        // kept samples appear in dataset order
        let pos: Vec<usize> = sub.samples.iter().map(|s| ds.samples.iter().position(|t| t == s).unwrap()).collect();
        prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }
}

