//! Training runs with a CSV loss log and periodic checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use dgcan_core::harness::{DepthMode, StepLosses, StepOutcome, TrainConfig, TrainSample, Trainer};
use dgcan_core::net::ModelConfig;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, IoContext, Result};

pub const LOSS_LOG_FILE: &str = "loss.csv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

const LOSS_COLUMNS: [&str; 7] =
    ["iteration", "L_GPN_cls", "L_GPN_reg", "L_GRoI_cls", "L_GRoI_reg", "L_GRoI_score", "total"];

/// Where and how often a run writes its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dir: PathBuf,
    /// Save `last.ckpt` every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    /// Losses of every iteration that was not skipped.
    pub losses: Vec<(usize, StepLosses)>,
    pub skipped: usize,
    pub checkpoint: PathBuf,
}

pub fn trainer_checkpoint(trainer: &Trainer) -> Checkpoint {
    Checkpoint {
        model: trainer.model.clone(),
        loss_weights: trainer.config.loss_weights,
        depth_mode: trainer.mode,
        iteration: trainer.iteration,
        params: trainer.params.clone(),
    }
}

/// Train for `config.iterations` iterations from fresh parameters.
///
/// A non-finite loss stops the run; the parameters from before the failing
/// step are saved to `last.ckpt` and reported in the error.
pub fn train(
    samples: &[TrainSample],
    model: ModelConfig,
    config: TrainConfig,
    mode: DepthMode,
    output: &RunOutput,
    mut progress: impl FnMut(usize, &StepLosses),
) -> Result<TrainSummary> {
    fs::create_dir_all(&output.dir).at(&output.dir)?;
    let iterations = config.iterations;
    let mut trainer = Trainer::new(model, config, mode)?;
    let log_path = output.dir.join(LOSS_LOG_FILE);
    let mut log = csv::Writer::from_path(&log_path)?;
    log.write_record(LOSS_COLUMNS)?;
    let mut summary = TrainSummary { losses: Vec::new(), skipped: 0, checkpoint: output.dir.join(FINAL_CHECKPOINT) };
    while trainer.iteration < iterations {
        let iteration = trainer.iteration;
        match trainer.train_iteration(samples) {
            Ok(StepOutcome::Trained(l)) => {
                let mut row = vec![iteration.to_string()];
                row.extend([l.gpn_cls, l.gpn_reg, l.groi_cls, l.groi_reg, l.groi_score, l.total].map(|v| v.to_string()));
                log.write_record(&row)?;
                progress(iteration, &l);
                summary.losses.push((iteration, l));
            }
            Ok(StepOutcome::Skipped) => summary.skipped += 1,
            Err(dgcan_core::Error::Diverged(at)) => {
                log.flush().at(&log_path)?;
                let checkpoint = output.dir.join(LAST_CHECKPOINT);
                trainer_checkpoint(&trainer).save(&checkpoint)?;
                return Err(Error::Diverged { iteration: at, checkpoint });
            }
            Err(e) => return Err(e.into()),
        }
        if output.checkpoint_every > 0 && trainer.iteration % output.checkpoint_every == 0 {
            trainer_checkpoint(&trainer).save(&output.dir.join(LAST_CHECKPOINT))?;
            log.flush().at(&log_path)?;
        }
    }
    log.flush().at(&log_path)?;
    trainer_checkpoint(&trainer).save(&summary.checkpoint)?;
    Ok(summary)
}

/// Read a loss log back as `(iteration, losses)` rows.
pub fn read_loss_log(path: &Path) -> Result<Vec<(usize, StepLosses)>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .records()
        .map(|row| {
            let row = row?;
            let field = |i: usize| -> Result<f64> {
                row.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Dataset(format!("{}: malformed loss row", path.display())))
            };
            Ok((
                field(0)? as usize,
                StepLosses {
                    gpn_cls: field(1)?,
                    gpn_reg: field(2)?,
                    groi_cls: field(3)?,
                    groi_reg: field(4)?,
                    groi_score: field(5)?,
                    total: field(6)?,
                },
            ))
        })
        .collect()
}
