use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quadid::datalog::DataLog;
use quadid::estimation::{fit_percent, predict_one_step, simulate_model, DataRole, PolyModel};
use quadid::excitation::{design_prbs, required_chips, switching_time, ExcitationBand};
use quadid::numfmt::g17;
use quadid::pipeline::{
    bode_csv, comparison_csv, evaluate_grid, select_winner, log_dataset, parse_grid, residuals_csv, retune, retune_csv, run_record, trim_samples,
    run_records, run_workflow, write, IdentificationData, IdentifySettings, PipelineConfig, Record,
};
use quadid::plant::Channel;
use quadid::validation::validation_residuals;
use quadid::{Error, Result};

#[derive(Parser)]
#[command(name = "quadid", version, about = "Quadrotor attitude identification workflow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    channel: Option<Channel>,
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate grid, e.g. `na=2..10,nb=1..10,nk=1..8`.
    #[arg(long)]
    grid: Option<String>,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(c) = self.channel {
            cfg.channel = c;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(g) = &self.grid {
            cfg.identification.grid = g.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one excitation experiment and write its log.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// training, validation-prbs or validation-square.
        #[arg(long, default_value = "training")]
        signal: Record,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate and rank the candidate grid; writes comparison, residual and model files.
    Identify {
        #[command(flatten)]
        common: Common,
        /// Existing logs (training, validation-prbs, validation-square); simulated when omitted.
        #[arg(long, num_args = 3, value_names = ["TRAINING", "VAL_PRBS", "VAL_SQUARE"])]
        logs: Option<Vec<PathBuf>>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Residual tests and fits of a model against a log.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PID grid search and LQR design on a model.
    Retune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full workflow into a directory, or only the Bode table of `--model`.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory (full workflow) or Bode CSV path (with `--model`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the PRBS design for the configured band.
    PrbsDesign {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn model_hash(m: &PolyModel) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(m.to_text().as_bytes())[..8])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, signal, out } => {
            let cfg = common.load()?;
            let log = run_record(&cfg, signal)?;
            write_file(&out, &log.to_csv())?;
            eprintln!("{}: {} samples -> {}", signal.name(), log.len(), out.display());
        }
        Command::Identify { common, logs, out_dir } => {
            let cfg = common.load()?;
            let data = match logs {
                Some(p) => IdentificationData {
                    training: DataLog::load(&p[0])?,
                    validation_prbs: DataLog::load(&p[1])?,
                    validation_square: DataLog::load(&p[2])?,
                },
                None => run_records(&cfg)?,
            };
            let grid = parse_grid(&cfg.identification.grid)?;
            let hash = cfg.hash();
            let settings = IdentifySettings::from_config(&cfg);
            let ev = evaluate_grid(&data, &grid, &settings)?;
            write(&out_dir, "comparison.csv", &comparison_csv(&ev.rows, &hash))?;
            let id = select_winner(&data, ev, &settings)?;
            write(&out_dir, "residuals.csv", &residuals_csv(&id.residuals, &id.winner.to_string(), &hash))?;
            write(&out_dir, "winner.model", &id.model.to_text())?;
            let w = &id.rows[0];
            eprintln!(
                "winner {}: training {:.2}%, validation prbs {:.2}%, square {:.2}%, stage-2 rmse {} ({} candidates, {} skipped)",
                id.winner,
                w.training_fit,
                w.validation_prbs_fit,
                w.validation_square_fit,
                g17(w.rmse),
                id.rows.len(),
                id.skipped.len()
            );
        }
        Command::Validate { common, model, log, out } => {
            let cfg = common.load()?;
            let m = PolyModel::load(&model)?;
            let log = DataLog::load(&log)?;
            let skip = trim_samples(&log, cfg.identification.trim_s)?;
            let d = log_dataset(&log, DataRole::ValidationPrbs)?;
            let rep = validation_residuals(&m, &d, skip, cfg.identification.thresholds.max_lag)?;
            let p = predict_one_step(&m, &d)?;
            let from = skip.max(p.start);
            let one_step = fit_percent(&d.y.skip(from), &p.y_hat.skip(from - p.start))?;
            let sim = simulate_model(&m, &d.u, &[]).and_then(|y| fit_percent(&d.y.skip(skip), &y.skip(skip)));
            write_file(&out, &residuals_csv(&rep, &model_hash(&m), &cfg.hash()))?;
            let sim_text = sim.as_ref().map(|f| format!("{f:.2}%")).unwrap_or_else(|e| e.to_string());
            eprintln!(
                "one-step fit {one_step:.2}%, simulation fit {sim_text}, whiteness {}, causality {}",
                rep.whiteness_pass, rep.causality_pass
            );
            if !(rep.whiteness_pass && rep.causality_pass) {
                return Err(Error::Pipeline("model fails the residual tests".into()));
            }
        }
        Command::Retune { common, model, out } => {
            let cfg = common.load()?;
            let m = PolyModel::load(&model)?;
            let r = retune(&m, &cfg.cascade, &cfg.retune)?;
            write_file(&out, &retune_csv(&r, &cfg.hash()))?;
            eprintln!(
                "baseline cost {}, tuned cost {} ({} evaluated, {} diverged)",
                g17(r.baseline_cost.total),
                g17(r.tuned_cost.total),
                r.evaluated,
                r.diverged
            );
            if let Err(e) = &r.lqr {
                return Err(Error::Design(format!("LQR: {e}")));
            }
        }
        Command::Report { common, model, out } => {
            let cfg = common.load()?;
            match model {
                Some(p) => {
                    let m = PolyModel::load(&p)?;
                    write_file(&out, &bode_csv(&m, &cfg.hash())?)?;
                }
                None => {
                    let w = run_workflow(&cfg, &out)?;
                    eprintln!("winner {} -> {}", w.identification.winner, out.display());
                    if let Err(e) = &w.retune.lqr {
                        return Err(Error::Design(format!("LQR: {e}")));
                    }
                }
            }
        }
        Command::PrbsDesign { common, out } => {
            let cfg = common.load()?;
            let x = &cfg.excitation;
            let band = ExcitationBand::new(x.omega_min, x.omega_max)?;
            let p = design_prbs(&band, x.amplitude(), x.gain_factor)?;
            let ts = cfg.sample_time();
            let text = format!(
                "# config_hash = {}\nomega_min = {}\nomega_max = {}\ntau_min = {}\ntau_max = {}\nswitching_time = {}\nrequired_chips = {}\nn_bits = {}\ntaps = {:?}\nperiod = {}\nsamples_per_chip = {}\nduration_s = {}\namplitude = {}\n",
                cfg.hash(),
                g17(band.omega_min),
                g17(band.omega_max),
                g17(band.tau_min()),
                g17(band.tau_max()),
                g17(switching_time(&band)),
                g17(required_chips(&band, x.gain_factor)),
                p.n_bits,
                p.taps,
                p.period_chips(),
                g17(p.delta_t / ts),
                g17(p.period()),
                g17(p.amplitude),
            );
            match out {
                Some(o) => write_file(&o, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
