//! Moment estimation and the AWGN symbol-error calibration.

mod common;

use common::*;
use sdbp::experiment::wilson_interval;

#[test]
fn moments_match_two_pass_reference_and_planted_law() {
    let v = moment_estimator();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn linear_link_ser_matches_awgn_closed_form() {
    let v = ser_calibration();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn calibration_tracks_the_closed_form_at_other_powers() {
    for power in [-22.0, -18.0] {
        let cal = awgn_calibration(8, 4096, power);
        let dev = (cal.measured_ser() - cal.predicted_ser).abs() / cal.mc_sigma();
        assert!(dev <= MC_SIGMAS, "{power} dBm: {dev:.2}σ");
    }
}

#[test]
fn q_function_reference_values() {
    assert!((q_function(0.0) - 0.5).abs() < 1e-15);
    assert!((q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
    assert!((q_function(3.0) - 1.349_898_031_630_09e-3).abs() < 1e-15);
}

#[test]
fn wilson_interval_reference_values() {
    // 5 / 100 at 95 %: [0.02154, 0.11175]
    let (lo, hi) = wilson_interval(5, 100);
    assert!((lo - 0.021_543).abs() < 1e-5 && (hi - 0.111_750).abs() < 1e-5, "{lo} {hi}");
    assert_eq!(wilson_interval(0, 50).0, 0.0);
    assert_eq!(wilson_interval(50, 50).1, 1.0);
}
