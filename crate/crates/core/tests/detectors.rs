//! Decision back ends: reversion identities, exhaustive-search oracle and
//! the synthetic inter-symbol-interference fixture.

mod common;

use common::*;
use sdbp::detectors::{dd_detect, sbs_detect, va_detect, DetectorOptions};
use sdbp::exec::Exec;
use sdbp::modem::{Constellation, SymbolSequence};
use sdbp::sdbp::SymbolCloud;

#[test]
fn memoryless_detectors_agree_on_random_clouds() {
    let v = reversion_identities(200);
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn viterbi_matches_exhaustive_map() {
    let v = viterbi_optimality(50);
    assert!(v.pass, "{}", v.detail);
}

#[test]
fn single_noiseless_particle_is_dbp() {
    let v = dbp_degeneracy();
    assert!(v.pass, "{}", v.detail);
}

fn errors(decided: &[usize], truth: &[usize]) -> usize {
    decided.iter().zip(truth).filter(|(a, b)| a != b).count()
}

#[test]
fn memory_helps_on_the_synthetic_isi_fixture() {
    let c = Constellation::qpsk();
    let opts = DetectorOptions::default();
    let (mut sbs_e, mut dd_e, mut va_e) = (0, 0, 0);
    for seed in 0..4 {
        let (cloud, truth) = ar1_posterior_cloud(&c, 400, 200, 0.45, 0.8, 300 + seed);
        sbs_e += errors(&sbs_detect(&cloud, &c, &opts, Exec::default()).unwrap().decided_indices, &truth);
        dd_e += errors(&dd_detect(&cloud, 1, &c, &opts, Exec::default()).unwrap().decided_indices, &truth);
        va_e += errors(&va_detect(&cloud, 1, &c, &opts, Exec::default()).unwrap().decided_indices, &truth);
    }
    assert!(va_e <= dd_e && dd_e <= sbs_e, "VA {va_e}, DD {dd_e}, SBS {sbs_e}");
    assert!(va_e < sbs_e, "VA {va_e} should beat SBS {sbs_e}");
}

#[test]
fn longer_memory_is_supported_within_the_state_budget() {
    let c = Constellation::qpsk();
    let opts = DetectorOptions::default();
    let (cloud, truth) = ar1_posterior_cloud(&c, 60, 120, 0.45, 0.8, 9);
    let sbs = errors(&sbs_detect(&cloud, &c, &opts, Exec::default()).unwrap().decided_indices, &truth);
    let va2 = errors(&va_detect(&cloud, 2, &c, &opts, Exec::default()).unwrap().decided_indices, &truth);
    assert!(va2 <= sbs, "VA(L=2) {va2}, SBS {sbs}");
}

/// Sylvester–Hadamard sign (−1)^{popcount(n & m)}.
fn hadamard(n: usize, m: usize) -> f64 {
    if (n & m).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[test]
fn decision_directed_equals_sbs_without_cross_slot_correlation() {
    // deviations along distinct Hadamard columns: exact zero sample
    // correlation between every pair of coordinates
    let c = Constellation::qam16();
    let (np, k) = (64, 12);
    let mut r = sdbp::rng::stream(4, 0);
    let (truth, _) = c.random_indexed(k, &mut r);
    use rand::Rng;
    let scales: Vec<f64> = (0..4 * k).map(|_| r.random_range(0.05..0.4)).collect();
    let offsets: Vec<f64> = (0..4 * k).map(|_| r.random_range(-0.2..0.2)).collect();
    let particles = (0..np)
        .map(|n| {
            SymbolSequence::new(
                (0..k)
                    .map(|j| {
                        std::array::from_fn(|q| {
                            let col = 4 * j + q;
                            truth[j][q] + offsets[col] + scales[col] * hadamard(n, col + 1)
                        })
                    })
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    let cloud = SymbolCloud::new(particles).unwrap();
    let opts = DetectorOptions::default();
    let sbs = sbs_detect(&cloud, &c, &opts, Exec::default()).unwrap();
    for l in 1..=2 {
        let dd = dd_detect(&cloud, l, &c, &opts, Exec::default()).unwrap();
        assert_eq!(dd.decided_indices, sbs.decided_indices, "L = {l}");
    }
}
