use std::fs;

use dfrelay::codec::{ConvCode, Interleaver};
use dfrelay::harness::{save_results_csv, Curve, SimConfig, Simulation, CSV_HEADER};
use dfrelay::modem::{Constellation, Modulation};
use dfrelay::relay::{calibrate_residual_ber, measure_residual_ber, CalibrationSetup, ResidualBerTable};

fn qpsk_table(grid: &[f64], seed: u64) -> ResidualBerTable {
    let code = ConvCode::standard();
    let pi = Interleaver::new(code.coded_len(1024), 7).unwrap();
    let qpsk = Constellation::new(Modulation::Qpsk);
    let setup = CalibrationSetup { code: &code, interleaver: &pi, source: &qpsk, fading: false };
    calibrate_residual_ber(grid, 50_000, seed, &setup).unwrap()
}

fn small_config(table: &std::path::Path) -> SimConfig {
    SimConfig {
        info_len: 256,
        curves: ["none", "mrc", "cmrc", "ml", "mimo"].iter().map(|c| c.parse::<Curve>().unwrap()).collect(),
        gamma0_db: vec![2.0, 8.0],
        max_blocks: 48,
        batch_blocks: 8,
        calibration_table: Some(table.to_path_buf()),
        ..SimConfig::default()
    }
}

#[test]
fn table_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.csv");
    let table = qpsk_table(&[-4.0, 0.0, 4.0], 1);
    table.save(&path).unwrap();
    assert!(fs::read_to_string(&path).unwrap().starts_with("gamma_sr_db,p\n"));
    assert_eq!(ResidualBerTable::load(&path).unwrap(), table);

    fs::write(&path, "snr,p\n0,0.1\n").unwrap();
    assert!(ResidualBerTable::load(&path).is_err());
    fs::write(&path, "gamma_sr_db,p\n0,0.1\n1,0.2\n").unwrap();
    assert!(ResidualBerTable::load(&path).is_err());
}

#[test]
fn calibration_agrees_with_an_independent_measurement() {
    let grid = [-2.0, 0.0, 2.0];
    let table = qpsk_table(&grid, 11);
    let code = ConvCode::standard();
    let pi = Interleaver::new(code.coded_len(1024), 7).unwrap();
    let qpsk = Constellation::new(Modulation::Qpsk);
    let setup = CalibrationSetup { code: &code, interleaver: &pi, source: &qpsk, fading: false };
    let fresh = measure_residual_ber(&grid, 50_000, 12, &setup).unwrap();
    for point in fresh {
        let p = table.lookup_p(point.gamma_sr_db);
        let ratio = point.rate() / p;
        assert!((0.5..2.0).contains(&ratio), "{} dB: {} vs {p}", point.gamma_sr_db, point.rate());
    }
    let rows = table.rows();
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
    assert!(rows[0].1 > 0.01 && rows[0].1 < 0.5);
}

#[test]
fn sweep_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let table_path = dir.path().join("qpsk.csv");
    qpsk_table(&[-6.0, -3.0, 0.0, 3.0, 6.0], 3).save(&table_path).unwrap();
    let config_path = dir.path().join("sweep.json");
    fs::write(&config_path, serde_json::to_string(&small_config(&table_path)).unwrap()).unwrap();

    let run = |name: &str| {
        let cfg = SimConfig::load(&config_path).unwrap();
        let table = cfg.load_table().unwrap();
        let results = Simulation::new(cfg, table).unwrap().run_sweep().unwrap();
        let out = dir.path().join(name);
        save_results_csv(&results, &out).unwrap();
        fs::read_to_string(out).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[0].starts_with("2,none,no-relay,"));
    assert!(rows.iter().any(|r| r.starts_with("8,ml,mimo-1x2,")));
}

#[test]
fn config_with_missing_table_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(&dir.path().join("absent.csv"));
    assert!(cfg.load_table().is_err());
    let mut no_table = cfg.clone();
    no_table.calibration_table = None;
    assert!(Simulation::new(no_table, None).is_err());
}
