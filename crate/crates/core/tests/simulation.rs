use lbddnn::controller::SignMode;
use lbddnn::experiment;
use lbddnn::network::DropoutMask;
use lbddnn::oracles;
use lbddnn::scenario::ScenarioConfig;
use lbddnn::sim::{self, ClosedLoop};

#[test]
fn zero_plant_with_smooth_sign_stays_on_the_reference() {
    let cfg = ScenarioConfig {
        sign: SignMode::Smooth { width: 1e-2 },
        ..experiment::preset("zero-plant").unwrap()
    };
    let record = sim::simulate(&cfg).unwrap();
    assert_eq!(record.rows.len(), 1001);
    let worst = record.rows.iter().map(|r| r.e_norm).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "max ‖e‖ = {worst:e}");
}

#[test]
fn zero_plant_with_exact_sign_chatters_within_one_switching_step() {
    let cfg = experiment::preset("zero-plant").unwrap();
    let record = sim::simulate(&cfg).unwrap();
    let worst = record.rows.iter().map(|r| r.e_norm).fold(0.0, f64::max);
    assert!(worst <= cfg.gains.k_s * cfg.step, "max ‖e‖ = {worst:e}");
}

#[test]
fn matched_plant_at_ideal_weights_tracks_exactly() {
    let cfg = experiment::preset("matched-lyapunov").unwrap();
    let sys = ClosedLoop::new(&cfg).unwrap();
    let ideal = sys.ideal_weights().unwrap().clone();
    let mask = DropoutMask::identity(sys.shape(), 0);
    for t in [0.0, 0.7, 3.3] {
        let (xd, xd_dot) = sim::desired_trajectory(t);
        let ev = sys.evaluate(t, &xd, &ideal, &mask, 100.0, true).unwrap();
        for (a, b) in ev.x_dot.iter().zip(&xd_dot) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        assert!(ev.theta_dot.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn dropped_weights_get_zero_rate() {
    let cfg = experiment::preset("dropout-default").unwrap();
    let mut sys = ClosedLoop::new(&cfg).unwrap();
    let state = sys.initial_state(&cfg);
    let (mask, _) = sys.schedules_at(0.0).unwrap();
    let ev = sys.rhs(&state).unwrap();
    let dropped = mask.dropped_parameters(sys.shape());
    assert!(!dropped.is_empty());
    assert!(dropped.iter().all(|&i| ev.theta_dot[i] == 0.0));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let cfg = ScenarioConfig {
        duration: 0.5,
        ..experiment::preset("dropout-dt-0.05").unwrap()
    };
    assert_eq!(sim::simulate(&cfg).unwrap(), sim::simulate(&cfg).unwrap());
}

#[test]
fn different_seeds_differ() {
    let a = ScenarioConfig {
        duration: 0.2,
        ..experiment::preset("dropout-default").unwrap()
    };
    let b = ScenarioConfig { seed: 1, ..a.clone() };
    assert_ne!(sim::simulate(&a).unwrap().to_csv_string(), sim::simulate(&b).unwrap().to_csv_string());
}

#[test]
fn matched_dropout_run_converges_with_bounded_weight_error() {
    let cfg = experiment::preset("matched-dropout").unwrap();
    let record = sim::simulate(&cfg).unwrap();
    let last = record.rows.last().unwrap();
    assert!(last.e_norm < 1e-2, "final ‖e‖ = {}", last.e_norm);
    let bound = 2.0 * cfg.adaptation.weight_bound;
    assert!(record.rows.iter().all(|r| r.theta_err_norm.unwrap() <= bound));
    let report = oracles::lyapunov_monitor(&record, cfg.gains.k_e).unwrap();
    assert!(report.violation_fraction() < 0.01, "{report:?}");
}

#[test]
fn paper_scenario_rows_are_finite_and_evenly_spaced() {
    let cfg = ScenarioConfig {
        duration: 1.0,
        ..experiment::preset("dropout-default").unwrap()
    };
    let record = sim::simulate(&cfg).unwrap();
    for (n, r) in record.rows.iter().enumerate() {
        assert_eq!(r.t, n as f64 * cfg.step);
        assert!(r.x.iter().chain(&r.u).chain(&r.phi_hat).all(|v| v.is_finite()));
    }
}

#[test]
fn monitor_rejects_records_without_ideal_weights() {
    let cfg = ScenarioConfig {
        duration: 0.01,
        ..experiment::preset("baseline").unwrap()
    };
    let record = sim::simulate(&cfg).unwrap();
    assert!(oracles::lyapunov_monitor(&record, 10.5).is_err());
}

#[test]
fn misaligned_switch_period_is_a_config_error() {
    let mut cfg = experiment::preset("dropout-default").unwrap();
    cfg.dropout.switch_period = 0.1234;
    assert!(sim::simulate(&cfg).is_err());
}
