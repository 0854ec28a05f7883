use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    load_cmpg, load_dataset, load_teacher, project_dataset, save_dataset, stage1_train_image, stage2_train_cmpg,
    stage3_train_student, synth_splits, train_baseline, Dataset, RunConfig, Split, StageArtifacts,
};
use crate::eval::{data_efficiency_run, evaluate, kd_comparison_run, KdMethod, TeacherArtifacts};
use crate::projection::write_view_set;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "pointcmt", version, about = "Image-assisted point cloud classifier training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/ and test/ datasets.
    GenData(Common),
    /// Dump depth views of the training samples as PGM files.
    Project {
        #[command(flatten)]
        common: Common,
        /// Only the first N samples.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Stage I: image encoder and classifier.
    TrainImage(Common),
    /// Stage II: point generator on frozen image features.
    TrainCmpg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: Option<PathBuf>,
    },
    /// Stage III: student with feature and classifier enhancement.
    TrainPointcmt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        cmpg: Option<PathBuf>,
    },
    /// Student with cross-entropy only.
    TrainBaseline(Common),
    /// Evaluate a student checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare KD methods over seeds.
    CompareKd {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "baseline,hinton,normalize1_mse,normalize2_mse,pointcmt")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        #[arg(long)]
        cmpg: Option<PathBuf>,
    },
    /// Baseline vs PointCMT on stratified fractions of the training data.
    DataEfficiency {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Train and test splits from the configured directories, or synthetic ones.
pub fn datasets(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let synth = || synth_splits(cfg.n_per_class_train, cfg.n_per_class_test, cfg.n_points, cfg.seed);
    let (train, test) = match (&cfg.train_dir, &cfg.test_dir) {
        (Some(tr), Some(te)) => (load_dataset(tr)?, load_dataset(te)?),
        (Some(tr), None) => (load_dataset(tr)?, synth()?.1),
        (None, Some(te)) => (synth()?.0, load_dataset(te)?),
        (None, None) => synth()?,
    };
    Ok((train.with_split(Split::Train), test.with_split(Split::Test)))
}

fn or_default(p: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> PathBuf {
    p.clone().unwrap_or_else(|| cfg.out_dir.join(name))
}

fn report_stage(name: &str, s: &StageArtifacts) {
    if let Some(m) = s.final_metrics() {
        println!(
            "{name}: {} epochs, final loss {:.6}, train acc {:.4}",
            m.epoch, m.loss_total, m.train_acc
        );
    } else {
        println!("{name}: no epochs run");
    }
    println!("  checkpoint {}", s.checkpoint.display());
    println!("  metrics    {}", s.metrics_csv.display());
}

fn optional_artifact(path: &Path, load: impl FnOnce(&Path) -> Result<crate::diffcore::ParamStore>) -> Result<Option<crate::diffcore::ParamStore>> {
    if path.exists() {
        load(path).map(Some)
    } else {
        Ok(None)
    }
}

pub fn run_cli(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let cfg = resolve(&common)?;
            let (train, test) = synth_splits(cfg.n_per_class_train, cfg.n_per_class_test, cfg.n_points, cfg.seed)?;
            save_dataset(&train, &cfg.out_dir.join("train"))?;
            save_dataset(&test, &cfg.out_dir.join("test"))?;
            println!("wrote {} train and {} test samples under {}", train.len(), test.len(), cfg.out_dir.display());
        }
        Command::Project { common, limit } => {
            let cfg = resolve(&common)?;
            let (mut train, _) = datasets(&cfg)?;
            if let Some(l) = limit {
                train.samples.truncate(l);
            }
            let views = project_dataset(&train, &cfg)?;
            let dir = cfg.out_dir.join("views");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let mut n = 0;
            for (i, v) in views.iter().enumerate() {
                n += write_view_set(&dir, &format!("{i:05}"), v)?.len();
            }
            println!("wrote {n} views to {}", dir.display());
        }
        Command::TrainImage(common) => {
            let cfg = resolve(&common)?;
            let (train, _) = datasets(&cfg)?;
            report_stage("stage I", &stage1_train_image(&train, &cfg)?);
        }
        Command::TrainCmpg { common, teacher } => {
            let cfg = resolve(&common)?;
            let (train, _) = datasets(&cfg)?;
            report_stage("stage II", &stage2_train_cmpg(&train, &or_default(&teacher, &cfg, "teacher.ckpt"), &cfg)?);
        }
        Command::TrainPointcmt { common, teacher, cmpg } => {
            let cfg = resolve(&common)?;
            let (train, _) = datasets(&cfg)?;
            let t = or_default(&teacher, &cfg, "teacher.ckpt");
            let c = or_default(&cmpg, &cfg, "cmpg.ckpt");
            report_stage("stage III", &stage3_train_student(&train, &t, &c, &cfg)?);
        }
        Command::TrainBaseline(common) => {
            let cfg = resolve(&common)?;
            let (train, _) = datasets(&cfg)?;
            report_stage("baseline", &train_baseline(&train, &cfg)?);
        }
        Command::Eval { common, checkpoint } => {
            let cfg = resolve(&common)?;
            let (_, test) = datasets(&cfg)?;
            let report = evaluate(&or_default(&checkpoint, &cfg, "student_pointcmt.ckpt"), &test, &cfg)?;
            print!("{}", report.to_text());
            fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
            let path = cfg.out_dir.join("eval.csv");
            fs::write(&path, report.to_csv(&cfg.hash())).map_err(|e| Error::io(&path, e))?;
        }
        Command::CompareKd { common, methods, seeds, teacher, cmpg } => {
            let cfg = resolve(&common)?;
            let (train, test) = datasets(&cfg)?;
            let methods: Vec<KdMethod> = methods.iter().map(|m| KdMethod::parse(m.trim())).collect::<Result<_>>()?;
            let t = optional_artifact(&or_default(&teacher, &cfg, "teacher.ckpt"), |p| load_teacher(p, &cfg))?;
            let c = optional_artifact(&or_default(&cmpg, &cfg, "cmpg.ckpt"), |p| load_cmpg(p, &cfg))?;
            let art = t.map(|teacher| TeacherArtifacts { teacher, cmpg: c });
            print!("{}", kd_comparison_run(&methods, &seeds, &train, &test, &cfg, art.as_ref())?.to_text());
        }
        Command::DataEfficiency { common, fractions, seeds } => {
            let cfg = resolve(&common)?;
            let (train, test) = datasets(&cfg)?;
            print!("{}", data_efficiency_run(&fractions, &seeds, &train, &test, &cfg)?.to_text());
        }
    }
    Ok(())
}
