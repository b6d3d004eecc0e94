//! Monte Carlo harness: seed lattice, paired clouds, accounting and
//! reproducibility across execution strategies.

mod common;

use common::*;
use sdbp::exec::Exec;
use sdbp::experiment::{run_block, sweep, sweep_with_progress, write_artifacts, ProgressLog, SweepResult};

#[test]
fn csv_is_identical_for_any_worker_count() {
    let v = determinism();
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn sweep_totals_equal_the_sum_of_block_counts() {
    let spec = small_sweep_spec();
    let result = sweep(&spec, Exec::default()).unwrap();
    let mut outcomes = Vec::new();
    for &p in &spec.powers_dbm {
        for b in 0..spec.blocks {
            outcomes.push(run_block(&spec, p, b, Exec::Sequential).unwrap());
        }
    }
    for cell in &result.cells {
        let total: usize = outcomes
            .iter()
            .filter(|o| o.power_dbm == cell.power_dbm)
            .flat_map(|o| &o.counts)
            .filter(|c| c.detector == cell.detector)
            .map(|c| c.errors)
            .sum();
        assert_eq!(total, cell.errors, "{} at {} dBm", cell.detector, cell.power_dbm);
        assert_eq!(cell.symbols, spec.blocks * spec.symbols_per_block);
        assert_eq!(cell.ser, cell.errors as f64 / cell.symbols as f64);
    }
    // order of aggregation does not matter
    outcomes.reverse();
    assert_eq!(SweepResult::from_outcomes(&outcomes), result);
}

#[test]
fn particle_detectors_share_one_cloud_per_block() {
    let spec = small_sweep_spec();
    let outcome = run_block(&spec, 6.0, 1, Exec::default()).unwrap();
    let digests: Vec<u64> = outcome.counts.iter().filter_map(|c| c.cloud_digest).collect();
    assert_eq!(digests.len(), 3);
    assert!(digests.windows(2).all(|w| w[0] == w[1]));
    let other = run_block(&spec, 6.0, 2, Exec::default()).unwrap();
    assert_ne!(other.counts[0].cloud_digest, outcome.counts[0].cloud_digest);
}

#[test]
fn interrupted_sweep_resumes_to_the_same_result() {
    let spec = small_sweep_spec();
    let full = sweep(&spec, Exec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("progress.jsonl");
    // first session only gets through part of the grid
    let partial = sdbp::experiment::ExperimentSpec {
        blocks: 1,
        ..spec.clone()
    };
    {
        let log = ProgressLog::open(&log_path, &spec).unwrap();
        sweep_with_progress(&partial, Exec::default(), Some(&log)).unwrap();
    }
    let log = ProgressLog::open(&log_path, &spec).unwrap();
    assert_eq!(log.completed().len(), spec.powers_dbm.len());
    let resumed = sweep_with_progress(&spec, Exec::default(), Some(&log)).unwrap();
    assert_eq!(canonical_csv(&resumed), canonical_csv(&full));
}

#[test]
fn artifacts_are_written() {
    let spec = small_sweep_spec();
    let result = sweep(&spec, Exec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(&spec, &result, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("detector,L,power_dBm,symbols,errors,ser,ci_lo,ci_hi\n"));
    assert_eq!(csv.lines().count(), 1 + spec.detectors.len() * spec.powers_dbm.len());
    assert!(dir.path().join("summary.json").exists());
    assert!(dir.path().join("plots/ser_va_L1.dat").exists());
}
