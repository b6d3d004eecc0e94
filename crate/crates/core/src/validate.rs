//! Fast self-check suite: round trips, reversion identities and oracle
//! equivalences on tiny instances. Runs in a few seconds and backs the
//! command-line `validate` subcommand.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{
    link_model_for_frame, simulate_link, step_size, FiberParams, FiberPropagator, LinkConfig, Propagation, StepPlan,
};
use crate::detectors::{
    brute_force_map, dbp_detect, dd_detect, sbs_detect, va_detect, va_path, DetectorOptions,
};
use crate::exec::Exec;
use crate::experiment::wilson_interval;
use crate::modem::{count_symbol_errors, Constellation, SymbolSequence};
use crate::rng;
use crate::sdbp::{dbp_waveform, symbol_cloud, SdbpConfig, Schedule, SymbolCloud};
use crate::signal::{make_rrc_pulse, shape, DualPolWaveform};
use crate::stats::{estimate_moments, MetricOptions, PsiTable};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Deliberate defects the suite can inject into itself, so that tests can
/// confirm each check is able to fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mutation {
    /// Wrong sign of the dispersion phase in inverse propagation.
    CdInverseSign,
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:<6}  {:>9}  detail\n", "check", "result", "time");
        for c in &self.checks {
            out += &format!(
                "{:<width$}  {:<6}  {:>7.1}ms  {}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.elapsed.as_secs_f64() * 1e3,
                c.detail
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out += &format!("{} checks, {} failed\n", self.checks.len(), failed);
        out
    }
}

type Outcome = Result<(bool, String)>;

const CHECKS: &[(&str, fn(Option<Mutation>) -> Outcome)] = &[
    ("cd_unitarity", cd_unitarity),
    ("kerr_power", kerr_power),
    ("ssfm_round_trip", ssfm_round_trip),
    ("link_round_trip", link_round_trip),
    ("step_size_formula", step_size_formula),
    ("noiseless_dbp", noiseless_dbp),
    ("sdbp_degenerates_to_dbp", sdbp_degenerates_to_dbp),
    ("moments_two_pass", moments_two_pass),
    ("reversion_identities", reversion_identities),
    ("viterbi_vs_brute_force", viterbi_vs_brute_force),
    ("wilson_interval", wilson_bounds),
];

/// Runs every check, optionally with a defect injected.
pub fn run_suite(mutation: Option<Mutation>) -> ValidationReport {
    let checks = CHECKS
        .iter()
        .map(|&(name, f)| {
            let start = Instant::now();
            let (passed, detail) = match f(mutation) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult {
                name,
                passed,
                detail,
                elapsed: start.elapsed(),
            }
        })
        .collect();
    ValidationReport { checks }
}

const RATE: f64 = 14e9;

fn test_wave(k: usize, power_w: f64, seed: u64) -> Result<DualPolWaveform> {
    let pulse = make_rrc_pulse(0.25, 16, 4)?;
    let s = Constellation::qpsk().random_symbols(k, &mut rng::stream(seed, 0));
    Ok(shape(&s, &pulse, RATE, power_w))
}

fn propagator(fiber: &FiberParams, wave: &DualPolWaveform, steps: usize, mutation: Option<Mutation>) -> Result<FiberPropagator> {
    let mut p = FiberPropagator::new(
        fiber,
        &StepPlan::uniform(fiber.length_km, steps),
        wave.len(),
        wave.sample_rate,
        crate::channel::MANAKOV_FACTOR,
    )?;
    if mutation == Some(Mutation::CdInverseSign) {
        p.corrupt_inverse_dispersion();
    }
    Ok(p)
}

fn cd_unitarity(_: Option<Mutation>) -> Outcome {
    let w = test_wave(128, 1e-3, 1)?;
    let mut fiber = FiberParams::standard_smf(500.0);
    fiber.gamma = 0.0;
    fiber.attenuation_db = 0.0;
    let mut out = w.clone();
    propagator(&fiber, &w, 1, None)?.propagate(&mut out, Propagation::Forward)?;
    let rel = (out.energy() - w.energy()).abs() / w.energy();
    Ok((rel < 1e-10, format!("relative energy change {rel:.2e}")))
}

fn kerr_power(_: Option<Mutation>) -> Outcome {
    // lossless, dispersionless fiber: only the Kerr rotation acts
    let w = test_wave(128, 10e-3, 2)?;
    let mut fiber = FiberParams::standard_smf(100.0);
    fiber.dispersion = 0.0;
    fiber.attenuation_db = 0.0;
    let mut out = w.clone();
    propagator(&fiber, &w, 20, None)?.propagate(&mut out, Propagation::Forward)?;
    let worst = w
        .instantaneous_power()
        .iter()
        .zip(out.instantaneous_power())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let peak = w.instantaneous_power().into_iter().fold(0.0, f64::max);
    Ok((worst <= 1e-12 * peak, format!("max |Δ|E|²| / peak = {:.2e}", worst / peak)))
}

fn ssfm_round_trip(mutation: Option<Mutation>) -> Outcome {
    let w = test_wave(128, 5e-3, 3)?;
    let fiber = FiberParams::standard_smf(80.0);
    let p = propagator(&fiber, &w, 12, mutation)?;
    let mut out = w.clone();
    p.propagate(&mut out, Propagation::Forward)?;
    p.propagate(&mut out, Propagation::Inverse)?;
    let rel = out.relative_error(&w);
    Ok((rel < 1e-6, format!("relative error {rel:.2e}")))
}

fn small_dm_link(spans: usize, power_dbm: f64) -> LinkConfig {
    LinkConfig {
        ase: false,
        receiver_filter: false,
        ..LinkConfig::dispersion_managed(spans, RATE, power_dbm)
    }
}

fn link_round_trip(_: Option<Mutation>) -> Outcome {
    let cfg = small_dm_link(3, 4.0);
    let pulse = make_rrc_pulse(0.25, 16, 4)?;
    let model = link_model_for_frame(&cfg, &pulse, 64)?;
    let s = Constellation::qpsk().random_symbols(64, &mut rng::stream(4, 0));
    let out = simulate_link(&s, &model, &pulse, &mut rng::stream(4, 1))?;
    let back = dbp_waveform(&out.received, &model)?;
    let rel = back.relative_error(&out.truth.transmitted);
    Ok((rel < 1e-6, format!("relative error {rel:.2e} over {} spans", cfg.spans)))
}

fn step_size_formula(_: Option<Mutation>) -> Outcome {
    let mut worst: f64 = 0.0;
    for &p_w in &[1e-4, 1e-3, 1e-2] {
        for &t in &[1.0 / 14e9, 1.0 / 56e9] {
            for &d in &[4.0, 16.0, -80.0] {
                let got = step_size(1e-4, 1.3, p_w, d, 1550.0, t)?;
                // L_D = T²/|β₂| with β₂ = −Dλ²/(2πc), everything in SI then km
                let beta2 = d.abs() * 1e-6 * 1550e-9f64.powi(2) / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT);
                let l_d = t * t / beta2 / 1e3;
                let l_n = 1.0 / (1.3 * p_w);
                let want = (1e-4 * l_n * l_d * l_d).powf(1.0 / 3.0);
                worst = worst.max((got - want).abs() / want);
            }
        }
    }
    Ok((worst < 1e-12, format!("max relative deviation {worst:.2e}")))
}

fn noiseless_dbp(_: Option<Mutation>) -> Outcome {
    let cfg = small_dm_link(2, 6.0);
    let pulse = make_rrc_pulse(0.25, 16, 4)?;
    let k = 64;
    let model = link_model_for_frame(&cfg, &pulse, k)?;
    let c = Constellation::qpsk();
    let s = c.random_symbols(k, &mut rng::stream(5, 0));
    let out = simulate_link(&s, &model, &pulse, &mut rng::stream(5, 1))?;
    let rep = dbp_detect(&out.received, &model, &pulse, out.truth.timing_offset, k, &c)?;
    let errors = count_symbol_errors(&s, &rep.decided)?;
    Ok((errors == 0, format!("{errors} errors in {k} symbols")))
}

fn sdbp_degenerates_to_dbp(_: Option<Mutation>) -> Outcome {
    let cfg = LinkConfig {
        ase: true,
        ..small_dm_link(2, 4.0)
    };
    let pulse = make_rrc_pulse(0.25, 16, 4)?;
    let k = 48;
    let model = link_model_for_frame(&cfg, &pulse, k)?;
    let s = Constellation::qpsk().random_symbols(k, &mut rng::stream(6, 0));
    let out = simulate_link(&s, &model, &pulse, &mut rng::stream(6, 1))?;
    let sdbp = SdbpConfig {
        particles: 1,
        noise: false,
        schedule: Schedule::SpanSynchronous,
        seed: 6,
    };
    let cloud = symbol_cloud(&out.received, &model, &pulse, out.truth.timing_offset, k, &sdbp, Exec::Sequential)?;
    let dbp = dbp_waveform(&out.received, &model)?;
    let dbp_syms = crate::signal::matched_filter_sample(&dbp, &pulse, out.truth.timing_offset, k, cfg.launch_power_w())?;
    let same = cloud.particles()[0] == dbp_syms;
    Ok((same, if same { "bit-identical".into() } else { "symbols differ".into() }))
}

fn gaussian_cloud(np: usize, k: usize, seed: u64) -> Result<SymbolCloud> {
    let mut r = rng::stream(seed, 0);
    let seqs = (0..np)
        .map(|_| {
            SymbolSequence::new(
                (0..k)
                    .map(|_| std::array::from_fn(|_| 0.5 * r.sample::<f64, _>(StandardNormal) + 0.7))
                    .collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SymbolCloud::new(seqs)
}

fn moments_two_pass(_: Option<Mutation>) -> Outcome {
    let cloud = gaussian_cloud(500, 3, 7)?;
    let st = estimate_moments(&cloud, 2, 1)?;
    // textbook two-pass reference over the flattened window
    let rows: Vec<Vec<f64>> = cloud
        .iter()
        .map(|p| p[2].iter().chain(p[1].iter()).copied().collect())
        .collect();
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|i| rows.iter().map(|r| r[i]).sum::<f64>() / n).collect();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        worst = worst.max((mean[i] - st.mu_y[i]).abs());
        for j in 0..d {
            let c = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0);
            worst = worst.max((c - st.sigma_y[i * d + j]).abs());
        }
    }
    Ok((worst < 1e-10, format!("max componentwise deviation {worst:.2e}")))
}

fn reversion_identities(_: Option<Mutation>) -> Outcome {
    let c = Constellation::qpsk();
    let opts = DetectorOptions::default();
    for seed in 0..20 {
        let cloud = gaussian_cloud(30, 8, 100 + seed)?;
        let sbs = sbs_detect(&cloud, &c, &opts, Exec::Sequential)?;
        let dd = dd_detect(&cloud, 0, &c, &opts, Exec::Sequential)?;
        let va = va_detect(&cloud, 0, &c, &opts, Exec::Sequential)?;
        if sbs.decided_indices != dd.decided_indices || sbs.decided_indices != va.decided_indices {
            return Ok((false, format!("cloud {seed}: L = 0 detectors disagree")));
        }
    }
    Ok((true, "20 clouds, identical decisions".into()))
}

fn viterbi_vs_brute_force(_: Option<Mutation>) -> Outcome {
    let c = Constellation::qpsk();
    let opts = DetectorOptions::default();
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let cloud = gaussian_cloud(40, 4, 200 + seed)?;
        let table = PsiTable::from_cloud(&cloud, 1, &c, &MetricOptions::default(), Exec::Sequential)?;
        let (bf, bf_metric) = brute_force_map(&table)?;
        let (path, _) = va_path(&cloud, 1, &c, &opts, Exec::Sequential)?;
        if path.indices != bf {
            return Ok((false, format!("cloud {seed}: argmin sequences differ")));
        }
        worst = worst.max((path.metric - bf_metric).abs() / bf_metric.abs().max(1.0));
    }
    Ok((worst < 1e-9, format!("5 instances, max metric deviation {worst:.2e}")))
}

fn wilson_bounds(_: Option<Mutation>) -> Outcome {
    let cases = [(0usize, 100usize), (5, 100), (100, 100), (1, 1_000_000)];
    for (e, n) in cases {
        let (lo, hi) = wilson_interval(e, n);
        let p = e as f64 / n as f64;
        if !(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0) {
            return Err(Error::OutOfRange(format!("interval [{lo}, {hi}] misses {e}/{n}")));
        }
    }
    Ok((true, "intervals bracket the point estimate".into()))
}
