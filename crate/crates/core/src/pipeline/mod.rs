//! Batch workflow: experiments on the simulated rig, identification,
//! re-tuning and report files.

mod config;
mod experiment;
mod identify;
mod report;
mod retune;

use std::path::Path;

pub use config::{
    ExcitationSettings, IdentificationSettings, PipelineConfig, RetuneSettings, RigConfig, DEFAULT_GRID,
};
pub use experiment::{derive_seed, record_excitation, run_experiment, run_record, QuadChannel, Record};
pub use identify::{estimate, evaluate_grid, identify, select_winner, Evaluation, log_dataset, parse_grid, trim_samples, Identification, IdentificationData, IdentifySettings};
pub use report::{bode_csv, comparison_csv, log_spaced, residuals_csv, retune_csv, write, BODE_POINTS, BODE_RANGE};
pub use retune::{design_lqr, retune, step_cost, step_response, LqrDesign, RetuneResult, StepCost};

use crate::error::Result;
use crate::estimation::ArmaxOptions;

impl IdentifySettings {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        IdentifySettings {
            thresholds: cfg.identification.thresholds,
            cascade: cfg.cascade,
            trim_s: cfg.identification.trim_s,
            armax: ArmaxOptions::default(),
        }
    }
}

/// Runs the three records for the configured channel.
pub fn run_records(cfg: &PipelineConfig) -> Result<IdentificationData> {
    Ok(IdentificationData {
        training: run_record(cfg, Record::Training)?,
        validation_prbs: run_record(cfg, Record::ValidationPrbs)?,
        validation_square: run_record(cfg, Record::ValidationSquare)?,
    })
}

/// Everything the full workflow produced.
#[derive(Debug, Clone)]
pub struct WorkflowOutput {
    pub data: IdentificationData,
    pub identification: Identification,
    pub retune: RetuneResult,
}

/// Records, identification over the configured grid, re-tuning, and every
/// report file under `out_dir`.
pub fn run_workflow(cfg: &PipelineConfig, out_dir: &Path) -> Result<WorkflowOutput> {
    cfg.validate()?;
    let hash = cfg.hash();
    let data = run_records(cfg)?;
    for (log, r) in [(&data.training, Record::Training), (&data.validation_prbs, Record::ValidationPrbs), (&data.validation_square, Record::ValidationSquare)] {
        write(out_dir, &format!("{}.csv", r.name()), &log.to_csv())?;
    }
    let grid = parse_grid(&cfg.identification.grid)?;
    let settings = IdentifySettings::from_config(cfg);
    let ev = evaluate_grid(&data, &grid, &settings)?;
    // the table is written even when nothing passes, as the diagnostic
    write(out_dir, "comparison.csv", &comparison_csv(&ev.rows, &hash))?;
    let id = select_winner(&data, ev, &settings)?;
    write(out_dir, "residuals.csv", &residuals_csv(&id.residuals, &id.winner.to_string(), &hash))?;
    write(out_dir, "winner.model", &id.model.to_text())?;
    write(out_dir, "bode.csv", &bode_csv(&id.model, &hash)?)?;
    let rt = retune(&id.model, &cfg.cascade, &cfg.retune)?;
    write(out_dir, "retune.csv", &retune_csv(&rt, &hash))?;
    Ok(WorkflowOutput { data, identification: id, retune: rt })
}
