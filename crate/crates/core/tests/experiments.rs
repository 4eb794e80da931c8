use alignperc::experiments::{bond_threshold, phase_diagram, read_csv, rows_to_csv, LambdaCConfig, PhaseDiagramRow};
use alignperc::hex::hex_threshold;
use alignperc::RandomSource;

#[test]
fn three_dimensional_estimates_sit_between_the_bounds() {
    let cfg = LambdaCConfig {
        d: 3,
        size: 16,
        n: 100,
        tol: 0.005,
        replicates: 3,
        ..Default::default()
    };
    let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
    let rows = phase_diagram(&grid, &cfg, &RandomSource::from_seed(81)).unwrap();
    for r in &rows {
        assert!(r.lambda_c_hat <= hex_threshold() + 0.02, "{r:?}");
        assert!(r.lambda_c_hat >= r.p / 5.0 - 0.02, "{r:?}");
        assert!(r.ci_low <= r.lambda_c_hat && r.lambda_c_hat <= r.ci_high, "{r:?}");
    }
    let last = rows.last().unwrap();
    assert!((last.lambda_c_hat - bond_threshold(3).unwrap()).abs() <= 0.03, "{last:?}");
}

#[test]
fn csv_written_to_disk_reads_back() {
    let cfg = LambdaCConfig {
        size: 16,
        n: 20,
        replicates: 2,
        ..Default::default()
    };
    let rows = phase_diagram(&[0.5, 1.0], &cfg, &RandomSource::from_seed(82)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    std::fs::write(&path, rows_to_csv(&rows).unwrap()).unwrap();
    let back: Vec<PhaseDiagramRow> = read_csv(&path).unwrap();
    assert_eq!(back, rows);
}
