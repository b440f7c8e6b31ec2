//! Progressive training driven by a dataset file.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{joint_rmse, save_checkpoint, train_progressive, Progressive, TrainingSet};
use crate::sos::{build_sos, SosTensor};

use super::config::ExperimentConfig;
use super::dataset::Dataset;

/// Trained models with their held-out score.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub models: Progressive,
    /// Joint-model RMSE on the held-out tail, meters.
    pub holdout_rmse: Option<f64>,
    pub holdout_len: usize,
}

/// Splits off the trailing `fraction` of records.
pub fn split_dataset(len: usize, fraction: f64) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let held = ((len as f64) * fraction).floor() as usize;
    let train = len - held.min(len.saturating_sub(1));
    (0..train, train..len)
}

fn training_set(ds: &Dataset, range: std::ops::Range<usize>, cfg: &ExperimentConfig) -> Result<TrainingSet> {
    let items = &ds.records[range];
    let sos: Vec<SosTensor> = items.par_iter().map(|r| build_sos(&r.record)).collect();
    let refs: Vec<&SosTensor> = sos.iter().collect();
    let labels: Vec<_> = items.iter().map(|r| r.record.label).collect();
    TrainingSet::new(&cfg.network, &refs, &labels)
}

pub fn train_from_dataset(ds: &Dataset, cfg: &ExperimentConfig) -> Result<TrainingRun> {
    if ds.is_empty() {
        return Err(Error::InvalidArgument("dataset holds no records".into()));
    }
    let (train, held) = split_dataset(ds.len(), cfg.dataset.holdout_fraction);
    let set = training_set(ds, train, cfg)?;
    let models = train_progressive(&set, &cfg.network, &cfg.training)?;
    let holdout_len = held.len();
    let holdout_rmse = if held.is_empty() {
        None
    } else {
        Some(joint_rmse(&models.joint, &training_set(ds, held, cfg)?)?)
    };
    Ok(TrainingRun {
        models,
        holdout_rmse,
        holdout_len,
    })
}

impl TrainingRun {
    /// Checkpoints and loss traces for both phases.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let names = ["range", "azimuth", "inclination"];
        for ((name, net), trace) in names.iter().zip(&self.models.branches).zip(&self.models.branch_traces) {
            save_checkpoint(net, &dir.join(format!("branch-{name}.ckpt")))?;
            trace.write_csv(BufWriter::new(File::create(dir.join(format!("loss-{name}.csv")))?))?;
        }
        save_checkpoint(&self.models.joint, &dir.join("joint.ckpt"))?;
        self.models
            .joint_trace
            .write_csv(BufWriter::new(File::create(dir.join("loss-joint.csv"))?))?;
        Ok(())
    }
}
