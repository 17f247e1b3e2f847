use optwin::experiments::consistency::{
    sweep, Axis, ConsistencyConfig, ConsistencySample, SweepMode,
};
use optwin::experiments::default_delivery_scenario;
use optwin::experiments::delivery::{default_policies, run_delivery_study, DeliveryTrial};
use optwin::experiments::rotation::{
    run_rotation_study, RotationRow, RotationStudyConfig, Strategy,
};
use optwin::experiments::{read_csv, write_csv};
use optwin::session::default_force_params;

#[test]
fn rotation_rows_round_trip_through_csv() {
    let mut cfg = RotationStudyConfig::default_grid(Strategy::A);
    cfg.settle_time = 0.2;
    let rows = run_rotation_study(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rotation.csv");
    write_csv(&path, &rows).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("d_star,theta_deg,converged,settle_s\n"));
    assert_eq!(read_csv::<RotationRow>(&path).unwrap(), rows);
}

#[test]
fn consistency_samples_round_trip_through_csv() {
    let mut cfg = ConsistencyConfig::new(SweepMode::Settled);
    cfg.grid_points = 7;
    let samples = sweep(&default_force_params(), &cfg, Axis::Axial).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("consistency.csv");
    write_csv(&path, &samples).unwrap();
    assert_eq!(read_csv::<ConsistencySample>(&path).unwrap(), samples);
}

#[test]
fn paired_trials_share_their_leading_kicks() {
    let sc = default_delivery_scenario();
    let study = run_delivery_study(&sc, &default_policies(), 3, 40).unwrap();
    let by = |c: &str| -> Vec<&DeliveryTrial> {
        study.trials.iter().filter(|t| t.condition == c).collect()
    };
    let (blind, aware) = (by("force_blind"), by("force_aware"));
    assert_eq!(blind.len(), 3);
    for (b, a) in blind.iter().zip(&aware) {
        assert_eq!(b.seed, a.seed);
        assert_eq!(b.first_kicks.len(), 10);
        assert_eq!(b.first_kicks, a.first_kicks);
    }
    assert_ne!(blind[0].first_kicks, blind[1].first_kicks);
}
