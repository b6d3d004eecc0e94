//! Fiber parameters, SSFM step sizing and the symmetrized split-step solver.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::signal::{fft_frequencies, DualPolWaveform, FftPlan};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Default Kerr factor of the Manakov model.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FiberKind {
    Smf,
    Dcf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    /// D in ps/(nm·km).
    pub dispersion: f64,
    /// γ in 1/(W·km).
    pub gamma: f64,
    /// α in dB/km.
    pub attenuation_db: f64,
    pub length_km: f64,
    pub wavelength_nm: f64,
    pub kind: FiberKind,
}

impl FiberParams {
    /// Standard single-mode fiber: D = 16 ps/(nm·km), γ = 1.3 1/(W·km),
    /// α = 0.2 dB/km at 1550 nm.
    pub fn standard_smf(length_km: f64) -> Self {
        FiberParams {
            dispersion: 16.0,
            gamma: 1.3,
            attenuation_db: 0.2,
            length_km,
            wavelength_nm: 1550.0,
            kind: FiberKind::Smf,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km > 0.0) {
            return Err(Error::InvalidParameter(format!("fiber length {} km", self.length_km)));
        }
        if !(self.attenuation_db >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fiber attenuation {} dB/km",
                self.attenuation_db
            )));
        }
        if !(self.wavelength_nm > 0.0) {
            return Err(Error::InvalidParameter(format!("wavelength {} nm", self.wavelength_nm)));
        }
        if !self.dispersion.is_finite() || !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter("fiber dispersion/nonlinearity must be finite, γ ≥ 0".into()));
        }
        Ok(())
    }

    /// β₂ = −Dλ²/(2πc) in s²/km.
    pub fn beta2(&self) -> f64 {
        let d_s_per_m_km = self.dispersion * 1e-12 / 1e-9; // s/(m·km)
        let lambda = self.wavelength_nm * 1e-9;
        -d_s_per_m_km * lambda * lambda / (2.0 * PI * SPEED_OF_LIGHT)
    }

    /// Power attenuation coefficient in 1/km.
    pub fn alpha(&self) -> f64 {
        self.attenuation_db * std::f64::consts::LN_10 / 10.0
    }

    /// Total power loss of the fiber as a linear factor ≥ 1.
    pub fn loss(&self) -> f64 {
        10f64.powf(self.attenuation_db * self.length_km / 10.0)
    }

    /// Effective nonlinear length (1 − e^{−αh})/α of a segment of `h` km.
    pub fn effective_length(&self, h: f64) -> f64 {
        let a = self.alpha();
        if a * h < 1e-12 {
            h
        } else {
            -(-a * h).exp_m1() / a
        }
    }
}

/// SSFM segment length Δ = (ε·L_N·L_D²)^{1/3} in km, with the nonlinear
/// length L_N = 1/(γP) and the dispersion length L_D = T²·2πc/(|D|λ²).
///
/// Units: γ in 1/(W·km), P in W, D in ps/(nm·km), λ in nm, T in s.
pub fn step_size(
    epsilon: f64,
    gamma: f64,
    power_w: f64,
    dispersion: f64,
    wavelength_nm: f64,
    symbol_period_s: f64,
) -> Result<f64> {
    for (name, v) in [
        ("epsilon", epsilon),
        ("gamma", gamma),
        ("power", power_w),
        ("|dispersion|", dispersion.abs()),
        ("wavelength", wavelength_nm),
        ("symbol period", symbol_period_s),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size needs positive {name}, got {v}")));
        }
    }
    let nonlinear_length_km = 1.0 / (gamma * power_w);
    let d_si = dispersion.abs() * 1e-6; // ps/(nm·km) → s/m²
    let lambda = wavelength_nm * 1e-9;
    let dispersion_length_km =
        symbol_period_s * symbol_period_s * 2.0 * PI * SPEED_OF_LIGHT / (d_si * lambda * lambda) / 1e3;
    Ok((epsilon * nonlinear_length_km * dispersion_length_km * dispersion_length_km).cbrt())
}

/// Ordered SSFM segment lengths (km) for one fiber.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepPlan {
    pub segments: Vec<f64>,
}

impl StepPlan {
    /// Splits `length_km` into the fewest equal segments no longer than
    /// `max_step_km`.
    pub fn for_length(length_km: f64, max_step_km: f64) -> Result<Self> {
        if !(length_km > 0.0 && max_step_km > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step plan for {length_km} km with Δ = {max_step_km} km"
            )));
        }
        let ratio = length_km / max_step_km;
        let mut n = ratio.ceil().max(1.0) as usize;
        if n > 1 && (ratio - (n - 1) as f64).abs() < 1e-9 {
            n -= 1;
        }
        Ok(Self::uniform(length_km, n))
    }

    pub fn uniform(length_km: f64, n: usize) -> Self {
        StepPlan {
            segments: vec![length_km / n as f64; n.max(1)],
        }
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Propagation {
    Forward,
    Inverse,
}

#[derive(Clone, Debug)]
enum Op {
    /// Index into the linear multiplier table.
    Linear(usize),
    /// Kerr phase coefficient (rad/W) for one segment.
    Kerr(f64),
}

/// Linear frequency-domain multiplier exp((jβ₂ω²/2 − α/2)·z), with the
/// inverse-FFT 1/n normalization folded in.
pub(crate) fn linear_multiplier(
    freqs: &[f64],
    beta2: f64,
    alpha: f64,
    z: f64,
) -> Vec<Complex64> {
    let norm = 1.0 / freqs.len() as f64;
    let amp = (-0.5 * alpha * z).exp() * norm;
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            Complex64::from_polar(amp, 0.5 * beta2 * w * w * z)
        })
        .collect()
}

/// Precomputed symmetrized split-step propagator for one fiber, one step
/// plan and one waveform grid.
///
/// Each segment of length h is: linear(h/2) → Kerr → linear(h/2), with
/// consecutive half steps merged. The Kerr step is the Manakov rotation
/// exp(j·κ·γ·L_eff(h)·e^{αh/2}·(|E_x|²+|E_y|²)) applied at mid-segment; the
/// e^{αh/2} factor refers the mid-segment power back to the segment input,
/// which is what L_eff integrates over.
#[derive(Clone, Debug)]
pub struct FiberPropagator {
    plan: FftPlan,
    ops: Vec<Op>,
    forward_tables: Vec<Vec<Complex64>>,
    inverse_tables: Vec<Vec<Complex64>>,
}

impl FiberPropagator {
    pub fn new(
        fiber: &FiberParams,
        steps: &StepPlan,
        len: usize,
        sample_rate: f64,
        kerr_factor: f64,
    ) -> Result<Self> {
        fiber.validate()?;
        if steps.is_empty() || (steps.total_length() - fiber.length_km).abs() > 1e-9 * fiber.length_km {
            return Err(Error::InvalidParameter(format!(
                "step plan covers {} km but the fiber is {} km",
                steps.total_length(),
                fiber.length_km
            )));
        }
        let freqs = fft_frequencies(len, sample_rate);
        let beta2 = fiber.beta2();
        let alpha = fiber.alpha();
        let mut lengths: Vec<f64> = Vec::new();
        let mut ops = Vec::with_capacity(2 * steps.len() + 1);
        let mut lin = |z: f64, ops: &mut Vec<Op>| {
            let idx = match lengths.iter().position(|&l| l == z) {
                Some(i) => i,
                None => {
                    lengths.push(z);
                    lengths.len() - 1
                }
            };
            ops.push(Op::Linear(idx));
        };
        let segs = &steps.segments;
        lin(segs[0] / 2.0, &mut ops);
        for (i, &h) in segs.iter().enumerate() {
            let coeff = kerr_factor * fiber.gamma * fiber.effective_length(h) * (0.5 * alpha * h).exp();
            ops.push(Op::Kerr(coeff));
            let next = segs.get(i + 1).map_or(0.0, |n| n / 2.0);
            lin(h / 2.0 + next, &mut ops);
        }
        let forward_tables: Vec<_> = lengths
            .iter()
            .map(|&z| linear_multiplier(&freqs, beta2, alpha, z))
            .collect();
        let inverse_tables = lengths
            .iter()
            .map(|&z| linear_multiplier(&freqs, -beta2, -alpha, z))
            .collect();
        Ok(FiberPropagator {
            plan: FftPlan::new(len),
            ops,
            forward_tables,
            inverse_tables,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    /// Fault injection for the validation suite: flips the sign of the
    /// dispersion phase in the inverse direction.
    pub(crate) fn corrupt_inverse_dispersion(&mut self) {
        for table in &mut self.inverse_tables {
            table.iter_mut().for_each(|v| *v = v.conj());
        }
    }

    fn apply_linear(&self, wave: &mut DualPolWaveform, table: &[Complex64]) {
        self.plan.filter(&mut wave.x, table);
        self.plan.filter(&mut wave.y, table);
    }

    /// Manakov Kerr rotation E ← E·exp(j·coeff·(|E_x|² + |E_y|²)).
    pub fn apply_kerr(wave: &mut DualPolWaveform, coeff: f64) {
        for (x, y) in wave.x.iter_mut().zip(wave.y.iter_mut()) {
            let phase = Complex64::cis(coeff * (x.norm_sqr() + y.norm_sqr()));
            *x *= phase;
            *y *= phase;
        }
    }

    /// Propagates in place. The inverse direction walks the operator list
    /// backwards with negated dispersion and Kerr phase and inverted loss.
    pub fn propagate(&self, wave: &mut DualPolWaveform, direction: Propagation) -> Result<()> {
        if wave.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                actual: wave.len(),
            });
        }
        match direction {
            Propagation::Forward => {
                for op in &self.ops {
                    match *op {
                        Op::Linear(i) => self.apply_linear(wave, &self.forward_tables[i]),
                        Op::Kerr(c) => Self::apply_kerr(wave, c),
                    }
                }
            }
            Propagation::Inverse => {
                for op in self.ops.iter().rev() {
                    match *op {
                        Op::Linear(i) => self.apply_linear(wave, &self.inverse_tables[i]),
                        Op::Kerr(c) => Self::apply_kerr(wave, -c),
                    }
                }
            }
        }
        Ok(())
    }
}

/// One-shot SSFM over a fiber (builds the propagator for this waveform grid).
pub fn ssfm(
    wave: &DualPolWaveform,
    fiber: &FiberParams,
    steps: &StepPlan,
    direction: Propagation,
    kerr_factor: f64,
) -> Result<DualPolWaveform> {
    let prop = FiberPropagator::new(fiber, steps, wave.len(), wave.sample_rate, kerr_factor)?;
    let mut out = wave.clone();
    prop.propagate(&mut out, direction)?;
    Ok(out)
}
