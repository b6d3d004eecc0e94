//! Lumped EDFA model: field gain √G plus band-limited circularly-symmetric
//! ASE.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::signal::{fft_frequencies, DualPolWaveform, FftPlan};
use crate::{db_to_linear, PLANCK, SPEED_OF_LIGHT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifierParams {
    /// Linear power gain G.
    pub gain: f64,
    pub noise_figure_db: f64,
    /// One-sided noise bandwidth in Hz.
    pub noise_bandwidth: f64,
    pub wavelength_nm: f64,
}

impl AmplifierParams {
    /// Photon energy hν at the carrier wavelength.
    pub fn photon_energy(&self) -> f64 {
        PLANCK * SPEED_OF_LIGHT / (self.wavelength_nm * 1e-9)
    }

    /// One-sided ASE power spectral density per polarization mode,
    /// (G − 1)·F·hν/2, in W/Hz.
    pub fn ase_psd(&self) -> f64 {
        (self.gain - 1.0) * db_to_linear(self.noise_figure_db) * self.photon_energy() / 2.0
    }

    /// Added noise power per polarization: S_ASE · 2 · B = (G − 1)·F·hν·B.
    pub fn noise_power_per_pol(&self) -> f64 {
        self.ase_psd() * 2.0 * self.noise_bandwidth
    }

    /// Noise figures below the 3 dB quantum limit are unrealistic but allowed.
    pub fn is_physical(&self) -> bool {
        self.noise_figure_db >= 3.0 && self.gain >= 1.0
    }
}

/// Generator of band-limited complex Gaussian noise on a fixed sample grid.
///
/// Noise is drawn directly in the frequency domain on the bins with
/// |f| ≤ bandwidth, so each draw costs one inverse FFT per polarization.
#[derive(Clone, Debug)]
pub struct NoiseShaper {
    plan: FftPlan,
    passband: Vec<usize>,
}

impl NoiseShaper {
    pub fn new(len: usize, sample_rate: f64, bandwidth: f64) -> Self {
        let passband = fft_frequencies(len, sample_rate)
            .iter()
            .enumerate()
            .filter(|(_, f)| f.abs() <= bandwidth)
            .map(|(k, _)| k)
            .collect();
        NoiseShaper {
            plan: FftPlan::new(len),
            passband,
        }
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.is_empty()
    }

    /// Fills `buf` with noise of expected per-sample power `power`.
    fn draw<R: Rng + ?Sized>(&self, buf: &mut [Complex64], power: f64, rng: &mut R) {
        // M bins of variance 2σ² through an unnormalized inverse FFT give a
        // per-sample variance of 2σ²·M, so σ = √(P / 2M)
        let m = self.passband.len().max(1) as f64;
        let sigma = (power / (2.0 * m)).sqrt();
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for &k in &self.passband {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            buf[k] = Complex64::new(re * sigma, im * sigma);
        }
        self.plan.inverse(buf);
    }

    /// A fresh dual-polarization noise realization with `power_per_pol` W
    /// per polarization.
    pub fn sample<R: Rng + ?Sized>(&self, power_per_pol: f64, sample_rate: f64, rng: &mut R) -> DualPolWaveform {
        let mut w = DualPolWaveform::zeros(self.len(), sample_rate);
        self.draw(&mut w.x, power_per_pol, rng);
        self.draw(&mut w.y, power_per_pol, rng);
        w
    }

    /// Adds a noise realization to `wave` in place.
    pub fn add_to<R: Rng + ?Sized>(&self, wave: &mut DualPolWaveform, power_per_pol: f64, rng: &mut R) {
        let noise = self.sample(power_per_pol, wave.sample_rate, rng);
        wave.add_assign(&noise);
    }
}

/// Forward amplifier: scale the field by √G and, when `rng` is given, add
/// ASE of power (G − 1)·F·hν·B per polarization.
pub fn edfa<R: Rng + ?Sized>(
    wave: &mut DualPolWaveform,
    amp: &AmplifierParams,
    noise: &NoiseShaper,
    rng: Option<&mut R>,
) {
    wave.scale(amp.gain.sqrt());
    if let Some(rng) = rng {
        let p = amp.noise_power_per_pol();
        if p > 0.0 {
            noise.add_to(wave, p, rng);
        }
    }
}

/// Particle inverse amplifier r ← (r + w)/√G, with w an independent draw of
/// the forward ASE law. Without `rng` it is the deterministic gain inversion.
pub fn edfa_inverse_particle<R: Rng + ?Sized>(
    wave: &mut DualPolWaveform,
    amp: &AmplifierParams,
    noise: &NoiseShaper,
    rng: Option<&mut R>,
) {
    if let Some(rng) = rng {
        let p = amp.noise_power_per_pol();
        if p > 0.0 {
            noise.add_to(wave, p, rng);
        }
    }
    wave.scale(1.0 / amp.gain.sqrt());
}
