use std::process::Command;

use quadid::control::{closedloop_simulate, Controller, ModelPlant, RolloutOptions};
use quadid::datalog::DataLog;
use quadid::estimation::PolyModel;
use quadid::pipeline::{
    comparison_csv, identify, parse_grid, record_excitation, IdentificationData, IdentifySettings,
    PipelineConfig, Record,
};
use quadid::validation::COMPARISON_COLUMNS;
use quadid::Signal;

/// Poles 0.95, 0.8, 0.3; modest gain so the default cascade stays stable.
fn truth(ts: f64) -> PolyModel {
    PolyModel::arx(vec![-2.05, 1.285, -0.228], vec![0.01, 0.005, 0.002], 1, ts).unwrap()
}

fn model_log(m: &PolyModel, cfg: &PipelineConfig, record: Record) -> DataLog {
    let d = record_excitation(cfg, record).unwrap();
    let r = Signal::new(vec![0.0; d.len()], d.sample_time, "r").unwrap();
    let mut plant = ModelPlant::new(m).unwrap();
    closedloop_simulate(&mut plant, &Controller::Cascade(cfg.cascade), &r, &d, RolloutOptions::default()).unwrap()
}

#[test]
fn self_generated_arx_is_recovered() {
    let cfg = PipelineConfig::default();
    let m = truth(cfg.sample_time());
    let data = IdentificationData {
        training: model_log(&m, &cfg, Record::Training),
        validation_prbs: model_log(&m, &cfg, Record::ValidationPrbs),
        validation_square: model_log(&m, &cfg, Record::ValidationSquare),
    };
    let grid = parse_grid("na=2..4,nb=2..4,nk=1..2; iv:3,3,1").unwrap();
    let id = identify(&data, &grid, &IdentifySettings::from_config(&cfg)).unwrap();
    assert_eq!((id.winner.na, id.winner.nb, id.winner.nk), (3, 3, 1), "winner {}", id.winner);
    for (x, y) in id.model.a.iter().zip(&m.a).chain(id.model.b.iter().zip(&m.b)) {
        assert!((x - y).abs() < 1e-6, "{:?} / {:?} vs {:?} / {:?}", id.model.a, id.model.b, m.a, m.b);
    }
    // the winner carries the smallest stage-2 RMSE among stage-2 passers
    let best = id.rows.iter().filter(|r| r.stage2_pass).map(|r| r.rmse).fold(f64::INFINITY, f64::min);
    assert_eq!(id.rows[0].rmse, best);
}

#[test]
fn comparison_table_layout() {
    let text = comparison_csv(&[], "h");
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header.split(',').collect::<Vec<_>>(), COMPARISON_COLUMNS);
}

#[test]
fn empty_grid_writes_nothing_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_quadid"))
        .args(["identify", "--grid", "", "--out-dir"])
        .arg(dir.path().join("id"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert!(!dir.path().join("id/comparison.csv").exists());
}

#[test]
fn prbs_design_reports_period_in_chips() {
    let out = Command::new(env!("CARGO_BIN_EXE_quadid")).arg("prbs-design").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let get = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key} = ")))
            .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
            .parse()
            .unwrap()
    };
    let n = get("n_bits") as u32;
    assert_eq!(get("period") as u64, (1u64 << n) - 1);
    assert!(get("duration_s") > 0.0);
}
