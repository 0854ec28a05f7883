//! Accuracy metrics and the experiment harnesses: full pipeline runs over
//! seeds, data efficiency, KD method comparison and loss ablation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::diffcore::ParamStore;
use crate::distill::LossWeights;
use crate::pipeline::{
    load_student, project_dataset, rng_for, train_baseline, train_cmpg, train_image, train_student, Dataset, Guidance,
    Normalization, RunConfig, StageArtifacts, Stream, StudentNet, TeacherFeatures,
};
use crate::{Error, Result};

/// Accuracies in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    /// Unweighted mean of the per-class recalls of classes present in the test set.
    pub class_mean_accuracy: f64,
    pub per_class: Vec<(String, f64)>,
    pub n_test: usize,
    /// Declared classes with no test samples; they are left out of the class mean.
    pub missing_classes: Vec<String>,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let width = self.per_class.iter().map(|(c, _)| c.len()).chain([20]).max().unwrap_or(20);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  {:>7.2}", "overall accuracy", self.overall_accuracy);
        let _ = writeln!(s, "{:<width$}  {:>7.2}", "class mean accuracy", self.class_mean_accuracy);
        for (c, a) in &self.per_class {
            let _ = writeln!(s, "{c:<width$}  {a:>7.2}");
        }
        let _ = writeln!(s, "{:<width$}  {:>7}", "test samples", self.n_test);
        if !self.missing_classes.is_empty() {
            let _ = writeln!(s, "missing from test set: {}", self.missing_classes.join(", "));
        }
        s
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut s = format!("# config-hash: {config_hash}\nmetric,value\n");
        let _ = writeln!(s, "overall_accuracy,{}", self.overall_accuracy);
        let _ = writeln!(s, "class_mean_accuracy,{}", self.class_mean_accuracy);
        for (c, a) in &self.per_class {
            let _ = writeln!(s, "class:{c},{a}");
        }
        let _ = writeln!(s, "n_test,{}", self.n_test);
        s
    }
}

/// OA and per-class recalls from predicted and true labels.
pub fn report_from_predictions(preds: &[usize], labels: &[usize], class_names: &[String]) -> Result<EvalReport> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::InvalidArgument(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let c = class_names.len();
    if let Some(&l) = labels.iter().chain(preds).find(|&&l| l >= c) {
        return Err(Error::InvalidArgument(format!("label {l} out of range for {c} classes")));
    }
    let mut total = vec![0usize; c];
    let mut hit = vec![0usize; c];
    for (&p, &y) in preds.iter().zip(labels) {
        total[y] += 1;
        if p == y {
            hit[y] += 1;
        }
    }
    let correct: usize = hit.iter().sum();
    let mut per_class = Vec::new();
    let mut missing_classes = Vec::new();
    for k in 0..c {
        if total[k] == 0 {
            missing_classes.push(class_names[k].clone());
        } else {
            per_class.push((class_names[k].clone(), 100.0 * hit[k] as f64 / total[k] as f64));
        }
    }
    let class_mean_accuracy = per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64;
    Ok(EvalReport {
        overall_accuracy: 100.0 * correct as f64 / preds.len() as f64,
        class_mean_accuracy,
        per_class,
        n_test: preds.len(),
        missing_classes,
    })
}

pub fn evaluate_params(params: &ParamStore, ds_test: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    let net = StudentNet::new(&cfg.network)?;
    report_from_predictions(&net.predict(params, ds_test)?, &ds_test.labels(), &ds_test.class_names)
}

/// Evaluates a student checkpoint on a test split.
pub fn evaluate(ckpt: &Path, ds_test: &Dataset, cfg: &RunConfig) -> Result<EvalReport> {
    if ds_test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    evaluate_params(&load_student(ckpt, cfg)?, ds_test, cfg)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn with_seed(cfg: &RunConfig, seed: u64, out_dir: PathBuf) -> RunConfig {
    RunConfig { seed, out_dir, ..cfg.clone() }
}

/// Frozen stage I and II outputs.
#[derive(Debug, Clone)]
pub struct TeacherArtifacts {
    pub teacher: ParamStore,
    pub cmpg: Option<ParamStore>,
}

/// Stages I and II on `train`, both stores frozen on return.
pub fn train_teacher_artifacts(train: &Dataset, cfg: &RunConfig) -> Result<(TeacherArtifacts, StageArtifacts, StageArtifacts)> {
    let views = project_dataset(train, cfg)?;
    let s1 = train_image(train, &views, cfg)?;
    let mut teacher = s1.params.clone();
    teacher.freeze();
    let feats = TeacherFeatures::compute(&views, &teacher, cfg)?;
    let s2 = train_cmpg(train, &feats, cfg)?;
    let mut cmpg = s2.params.clone();
    cmpg.freeze();
    Ok((TeacherArtifacts { teacher, cmpg: Some(cmpg) }, s1, s2))
}

/// One seed of the whole recipe plus a baseline on the same data.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub teacher_train_acc: f64,
    pub emd_first: f64,
    pub emd_last: f64,
    pub baseline: EvalReport,
    pub pointcmt: EvalReport,
    pub stage3_trace_first_total: f64,
    pub stage3_trace_last_total: f64,
}

/// Stages I–III and the baseline for `cfg.seed`, artifacts under `cfg.out_dir`.
pub fn standard_run(train: &Dataset, test: &Dataset, cfg: &RunConfig) -> Result<SeedRun> {
    let (art, s1, s2) = train_teacher_artifacts(train, cfg)?;
    let cmpg = art.cmpg.as_ref().ok_or_else(|| Error::Config("missing point generator".into()))?;
    let feats = TeacherFeatures::compute(&project_dataset(train, cfg)?, &art.teacher, cfg)?;
    let baseline = train_baseline(train, cfg)?;
    let s3 = train_student(train, Guidance::PointCmt { teacher: &feats, cmpg, weights: cfg.weights }, cfg)?;
    let first = |s: &StageArtifacts| s.trace.first().map(|m| m.loss_total).unwrap_or(f64::NAN);
    let last = |s: &StageArtifacts| s.trace.last().map(|m| m.loss_total).unwrap_or(f64::NAN);
    Ok(SeedRun {
        seed: cfg.seed,
        teacher_train_acc: s1.final_metrics().map(|m| m.train_acc).unwrap_or(0.0),
        emd_first: first(&s2),
        emd_last: last(&s2),
        baseline: evaluate_params(&baseline.params, test, cfg)?,
        pointcmt: evaluate_params(&s3.params, test, cfg)?,
        stage3_trace_first_total: first(&s3),
        stage3_trace_last_total: last(&s3),
    })
}

/// Per class, the first `round(fraction·count)` members of a seeded shuffle, kept in dataset order.
pub fn stratified_subset(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut rng = rng_for(seed, Stream::Subsample);
    let mut keep = Vec::new();
    for k in 0..ds.num_classes() {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.samples[i].label == k).collect();
        let take = (fraction * members.len() as f64).round() as usize;
        if take == 0 {
            return Err(Error::Config(format!(
                "fraction {fraction} leaves no samples of class `{}` ({} available)",
                ds.class_names[k],
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..take]);
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}

/// Named rows of per-seed accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    /// `(row label, per-column per-seed OA)`.
    pub rows: Vec<(String, Vec<Vec<f64>>)>,
    pub seeds: Vec<u64>,
}

impl ComparisonTable {
    pub fn to_csv(&self, first_column: &str, config_hash: &str) -> String {
        let mut s = format!("# config-hash: {config_hash}\n# seeds: {:?}\n{first_column}", self.seeds);
        for c in &self.columns {
            let _ = write!(s, ",{c}_mean,{c}_std");
        }
        s.push('\n');
        for (label, cells) in &self.rows {
            s.push_str(label);
            for cell in cells {
                let (m, sd) = mean_std(cell);
                let _ = write!(s, ",{m},{sd}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (label, cells) in &self.rows {
            let _ = write!(s, "{label:<16}");
            for (c, cell) in self.columns.iter().zip(cells) {
                let (m, sd) = mean_std(cell);
                let _ = write!(s, "  {c}: {m:6.2} ± {sd:5.2}");
            }
            s.push('\n');
        }
        s
    }
}

fn write_table(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Baseline vs PointCMT on stratified fractions of the train split; the full test split is always used.
/// Writes `data_efficiency.csv` under `cfg.out_dir`.
pub fn data_efficiency_run(fractions: &[f64], seeds: &[u64], train: &Dataset, test: &Dataset, cfg: &RunConfig) -> Result<ComparisonTable> {
    if seeds.is_empty() || fractions.is_empty() {
        return Err(Error::Config("need at least one fraction and one seed".into()));
    }
    let mut rows = Vec::new();
    for &fraction in fractions {
        let mut base = Vec::new();
        let mut cmt = Vec::new();
        for &seed in seeds {
            let subset = stratified_subset(train, fraction, seed)?;
            let run_cfg = with_seed(cfg, seed, cfg.out_dir.join("data_efficiency").join(format!("f{fraction}_s{seed}")));
            let run = standard_run(&subset, test, &run_cfg)?;
            base.push(run.baseline.overall_accuracy);
            cmt.push(run.pointcmt.overall_accuracy);
        }
        rows.push((fraction.to_string(), vec![base, cmt]));
    }
    let table = ComparisonTable { columns: vec!["baseline".into(), "pointcmt".into()], rows, seeds: seeds.to_vec() };
    write_table(&cfg.out_dir, "data_efficiency.csv", &table.to_csv("fraction", &cfg.hash()))?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdMethod {
    Baseline,
    Hinton,
    Normalize1Mse,
    Normalize2Mse,
    PointCmt,
}

impl KdMethod {
    pub const ALL: [KdMethod; 5] =
        [KdMethod::Baseline, KdMethod::Hinton, KdMethod::Normalize1Mse, KdMethod::Normalize2Mse, KdMethod::PointCmt];

    pub fn name(&self) -> &'static str {
        match self {
            KdMethod::Baseline => "baseline",
            KdMethod::Hinton => "hinton",
            KdMethod::Normalize1Mse => "normalize1_mse",
            KdMethod::Normalize2Mse => "normalize2_mse",
            KdMethod::PointCmt => "pointcmt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        KdMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

fn needs_features(methods: &[KdMethod], art: Option<&TeacherArtifacts>) -> Result<()> {
    let teacher_needed = methods.iter().any(|m| *m != KdMethod::Baseline);
    if teacher_needed && art.is_none() {
        return Err(Error::Config("teacher artifacts are required for the selected methods".into()));
    }
    if methods.contains(&KdMethod::PointCmt) && art.is_some_and(|a| a.cmpg.is_none()) {
        return Err(Error::Config("the pointcmt method needs a trained point generator".into()));
    }
    Ok(())
}

fn guidance_for<'a>(m: KdMethod, feats: Option<&'a TeacherFeatures>, art: Option<&'a TeacherArtifacts>, cfg: &RunConfig) -> Result<Guidance<'a>> {
    let missing = || Error::Config("teacher artifacts are required".into());
    Ok(match m {
        KdMethod::Baseline => Guidance::None,
        KdMethod::Hinton => Guidance::Hinton { teacher: feats.ok_or_else(missing)?, weight: cfg.kd_weight },
        KdMethod::Normalize1Mse => {
            Guidance::Normalized { teacher: feats.ok_or_else(missing)?, kind: Normalization::Gaussian, weight: cfg.kd_weight }
        }
        KdMethod::Normalize2Mse => {
            Guidance::Normalized { teacher: feats.ok_or_else(missing)?, kind: Normalization::Scale, weight: cfg.kd_weight }
        }
        KdMethod::PointCmt => Guidance::PointCmt {
            teacher: feats.ok_or_else(missing)?,
            cmpg: art.and_then(|a| a.cmpg.as_ref()).ok_or_else(missing)?,
            weights: cfg.weights,
        },
    })
}

/// One student per method per seed with shared data order; writes `kd_comparison.csv`.
pub fn kd_comparison_run(
    methods: &[KdMethod],
    seeds: &[u64],
    train: &Dataset,
    test: &Dataset,
    cfg: &RunConfig,
    art: Option<&TeacherArtifacts>,
) -> Result<ComparisonTable> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::Config("need at least one method and one seed".into()));
    }
    needs_features(methods, art)?;
    let feats = match art {
        Some(a) => Some(TeacherFeatures::compute(&project_dataset(train, cfg)?, &a.teacher, cfg)?),
        None => None,
    };
    let mut rows = Vec::new();
    for &m in methods {
        let mut oa = Vec::new();
        for &seed in seeds {
            let run_cfg = with_seed(cfg, seed, cfg.out_dir.join("kd_comparison").join(format!("{}_s{seed}", m.name())));
            let out = train_student(train, guidance_for(m, feats.as_ref(), art, &run_cfg)?, &run_cfg)?;
            oa.push(evaluate_params(&out.params, test, &run_cfg)?.overall_accuracy);
        }
        rows.push((m.name().to_string(), vec![oa]));
    }
    let table = ComparisonTable { columns: vec!["oa".into()], rows, seeds: seeds.to_vec() };
    write_table(&cfg.out_dir, "kd_comparison.csv", &table.to_csv("method", &cfg.hash()))?;
    Ok(table)
}

/// Stage III with feature enhancement only, classifier enhancement only, and both; writes `ablation.csv`.
pub fn ablation_run(seeds: &[u64], train: &Dataset, test: &Dataset, cfg: &RunConfig, art: &TeacherArtifacts) -> Result<ComparisonTable> {
    needs_features(&[KdMethod::PointCmt], Some(art))?;
    let feats = TeacherFeatures::compute(&project_dataset(train, cfg)?, &art.teacher, cfg)?;
    let w = cfg.weights;
    let variants = [
        ("fe_only", LossWeights::new(w.alpha, 0.0)?),
        ("ce_only", LossWeights::new(0.0, w.beta)?),
        ("fe_ce", w),
    ];
    let mut rows = Vec::new();
    for (name, weights) in variants {
        let mut oa = Vec::new();
        for &seed in seeds {
            let run_cfg = with_seed(cfg, seed, cfg.out_dir.join("ablation").join(format!("{name}_s{seed}")));
            let cmpg = art.cmpg.as_ref().ok_or_else(|| Error::Config("missing point generator".into()))?;
            let out = train_student(train, Guidance::PointCmt { teacher: &feats, cmpg, weights }, &run_cfg)?;
            oa.push(evaluate_params(&out.params, test, &run_cfg)?.overall_accuracy);
        }
        rows.push((name.to_string(), vec![oa]));
    }
    let table = ComparisonTable { columns: vec!["oa".into()], rows, seeds: seeds.to_vec() };
    write_table(&cfg.out_dir, "ablation.csv", &table.to_csv("variant", &cfg.hash()))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn perfect_predictions() {
        let y = vec![0, 1, 2, 1, 0];
        let r = report_from_predictions(&y, &y, &names(3)).unwrap();
        assert_eq!((r.overall_accuracy, r.class_mean_accuracy), (100.0, 100.0));
    }

    #[test]
    fn imbalanced_example() {
        let labels: Vec<usize> = [vec![0; 10], vec![1; 30]].concat();
        let preds = vec![0; 40];
        let r = report_from_predictions(&preds, &labels, &names(2)).unwrap();
        assert_eq!(r.overall_accuracy, 25.0);
        assert_eq!(r.class_mean_accuracy, 50.0);
    }

    #[test]
    fn confusion_matrix_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = 5;
        let labels: Vec<usize> = (0..200).map(|_| rng.random_range(0..c)).collect();
        let preds: Vec<usize> = (0..200).map(|_| rng.random_range(0..c)).collect();
        let mut cm = vec![vec![0usize; c]; c];
        for (&y, &p) in labels.iter().zip(&preds) {
            cm[y][p] += 1;
        }
        let diag: usize = (0..c).map(|k| cm[k][k]).sum();
        let recalls: Vec<f64> = (0..c).map(|k| 100.0 * cm[k][k] as f64 / cm[k].iter().sum::<usize>() as f64).collect();
        let r = report_from_predictions(&preds, &labels, &names(c)).unwrap();
        assert!((r.overall_accuracy - 100.0 * diag as f64 / 200.0).abs() < 1e-12);
        for (k, (_, a)) in r.per_class.iter().enumerate() {
            assert!((a - recalls[k]).abs() < 1e-12);
        }
        assert!((r.class_mean_accuracy - recalls.iter().sum::<f64>() / c as f64).abs() < 1e-9);
    }

    #[test]
    fn missing_classes_flagged() {
        let r = report_from_predictions(&[0, 1], &[0, 0], &names(3)).unwrap();
        assert_eq!(r.missing_classes, vec!["c1".to_string(), "c2".to_string()]);
        assert_eq!(r.per_class.len(), 1);
        assert_eq!(r.class_mean_accuracy, 50.0);
        assert!(r.to_text().contains("missing"));
    }

    #[test]
    fn oa_invariant_to_order() {
        let labels = vec![0, 1, 1, 2, 0, 2];
        let preds = vec![0, 1, 0, 2, 2, 2];
        let a = report_from_predictions(&preds, &labels, &names(3)).unwrap();
        let (pr, lr): (Vec<usize>, Vec<usize>) = preds.iter().rev().zip(labels.iter().rev()).map(|(a, b)| (*a, *b)).unzip();
        let b = report_from_predictions(&pr, &lr, &names(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn method_names_round_trip() {
        for m in KdMethod::ALL {
            assert_eq!(KdMethod::parse(m.name()).unwrap(), m);
        }
        assert!(KdMethod::parse("huang").is_err());
    }
}
