//! Monte-Carlo RMSE-versus-SNR sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{gcc_phat_localize, oracle_mfp, sbl_localize, SearchVolume};
use crate::geometry::{CartesianPosition, Scene};
use crate::nn::{Head, Network};
use crate::propagation::SignalRecord;
use crate::sos::build_sos;

use super::config::{EstimatorKind, ExperimentConfig};
use super::dataset::TrialGenerator;

/// Everything an estimator may need besides the record.
pub struct EstimationContext<'a> {
    pub scene: &'a Scene,
    pub volume: &'a SearchVolume,
    pub network: Option<&'a Network>,
}

/// Position estimate, score and wall time of one estimator run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOutcome {
    pub position: CartesianPosition,
    /// Grid objective for model-based estimators; NaN for the network.
    pub objective: f64,
    pub runtime_s: f64,
}

pub fn estimate(kind: EstimatorKind, rec: &SignalRecord, ctx: &EstimationContext<'_>) -> Result<EstimateOutcome> {
    let start = Instant::now();
    let (position, objective) = match kind {
        EstimatorKind::OracleMfp => {
            let e = oracle_mfp(rec, ctx.scene, ctx.volume)?;
            (e.position, e.objective)
        }
        EstimatorKind::Sbl => {
            let e = sbl_localize(rec, ctx.scene, ctx.volume)?;
            (e.position, e.objective)
        }
        EstimatorKind::GccPhat => {
            let e = gcc_phat_localize(rec, ctx.scene, ctx.volume)?;
            (e.position, e.objective)
        }
        EstimatorKind::Cnn => {
            let net = ctx
                .network
                .ok_or_else(|| Error::InvalidArgument("the cnn estimator needs a checkpoint".into()))?;
            if net.head() != Head::Joint {
                return Err(Error::InvalidArgument("the cnn estimator needs a joint model".into()));
            }
            let sos = build_sos(rec);
            (net.predict_positions(&[&sos])?[0], f64::NAN)
        }
    };
    Ok(EstimateOutcome {
        position,
        objective,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// One row of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub rmse_m: f64,
    pub trials: usize,
    pub mean_runtime_s: f64,
}

/// One estimator run on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialLog {
    pub estimator: EstimatorKind,
    pub snr_db: f64,
    pub trial: usize,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub error_m: f64,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialLog>,
}

impl SweepResult {
    pub fn row(&self, estimator: EstimatorKind, snr_db: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.snr_db == snr_db)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.rows)
    }

    pub fn write_trials_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(w, &self.trials)
    }
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

/// Root mean square of the given errors.
pub fn rmse(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return f64::NAN;
    }
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Runs every configured estimator on `trials` fresh records per SNR.
pub fn run_sweep(cfg: &ExperimentConfig, network: Option<&Network>) -> Result<SweepResult> {
    if cfg.estimators.is_empty() {
        return Err(Error::Config("no estimators selected".into()));
    }
    let generator = TrialGenerator::from_config(cfg, cfg.trials)?;
    let volume = cfg.volume()?;
    let ctx = EstimationContext {
        scene: &generator.scene,
        volume: &volume,
        network,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.snr_db.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    let per_job = jobs
        .par_iter()
        .map(|&(s, t)| {
            let snr_db = cfg.snr_db[s];
            let rec = generator.record(s, snr_db, t)?;
            cfg.estimators
                .iter()
                .map(|&kind| {
                    let out = estimate(kind, &rec, &ctx)?;
                    let p = rec.label;
                    Ok(TrialLog {
                        estimator: kind,
                        snr_db,
                        trial: t,
                        true_x: p.x,
                        true_y: p.y,
                        true_z: p.z,
                        est_x: out.position.x,
                        est_y: out.position.y,
                        est_z: out.position.z,
                        error_m: out.position.distance(&p),
                        runtime_s: if cfg.output.report_runtime { out.runtime_s } else { 0.0 },
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let trials: Vec<TrialLog> = per_job.into_iter().flatten().collect();
    Ok(SweepResult {
        rows: summarize(&trials, cfg),
        trials,
    })
}

/// Per (estimator, SNR) RMSE and mean runtime, estimators in config order.
pub fn summarize(trials: &[TrialLog], cfg: &ExperimentConfig) -> Vec<SweepRow> {
    let mut groups: BTreeMap<(usize, usize), (Vec<f64>, f64)> = BTreeMap::new();
    for t in trials {
        let e = cfg.estimators.iter().position(|k| *k == t.estimator).unwrap_or(usize::MAX);
        let s = cfg.snr_db.iter().position(|v| *v == t.snr_db).unwrap_or(usize::MAX);
        let g = groups.entry((e, s)).or_default();
        g.0.push(t.error_m);
        g.1 += t.runtime_s;
    }
    groups
        .into_iter()
        .map(|((e, s), (errors, runtime))| SweepRow {
            estimator: cfg.estimators[e],
            snr_db: cfg.snr_db[s],
            rmse_m: rmse(&errors),
            trials: errors.len(),
            mean_runtime_s: runtime / errors.len() as f64,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::config::SearchConfig;

    #[test]
    fn single_trial_rmse_is_distance() {
        let cfg = ExperimentConfig {
            snr_db: vec![30.0],
            trials: 1,
            estimators: vec![EstimatorKind::GccPhat],
            search: SearchConfig {
                points: 11,
                levels: 1,
                ..SearchConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let res = run_sweep(&cfg, None).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].rmse_m, res.trials[0].error_m);
        assert_eq!(res.rows[0].trials, 1);
    }

    #[test]
    fn cnn_without_model_fails() {
        let cfg = ExperimentConfig {
            snr_db: vec![30.0],
            trials: 1,
            estimators: vec![EstimatorKind::Cnn],
            ..ExperimentConfig::default()
        };
        assert!(run_sweep(&cfg, None).is_err());
    }
}
