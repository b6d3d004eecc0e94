//! Physical-layer link model: SMF spans with SSFM, EDFAs, optional FBG
//! dispersion-compensating modules and the ideal receiver low-pass filter.
//!
//! A span is `SMF → EDFA1 → [DCM → EDFA2]`; the bracketed stages exist only
//! on dispersion-managed (DM) links. Gains come from the deterministic loss
//! ledger so that every span hands the next one exactly the launch power.

mod amplifier;
mod fiber;

pub use amplifier::{edfa, edfa_inverse_particle, AmplifierParams, NoiseShaper};
pub use fiber::{
    ssfm, step_size, FiberKind, FiberParams, FiberPropagator, Propagation, StepPlan, MANAKOV_FACTOR,
};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::modem::{Modulation, SymbolSequence};
use crate::signal::{fft_frequencies, lowpass_mask, shape, DualPolWaveform, FftPlan, PulseShape};
use crate::{db_to_linear, dbm_to_watts, Error, Result};

/// Fiber Bragg grating DCM: exact inverse of the preceding SMF's chromatic
/// dispersion plus a scalar insertion loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DcmParams {
    pub insertion_loss_db: f64,
}

impl Default for DcmParams {
    fn default() -> Self {
        DcmParams { insertion_loss_db: 3.0 }
    }
}

fn dcm_multiplier(freqs: &[f64], smf: &FiberParams, insertion_loss_db: f64, direction: Propagation) -> Vec<Complex64> {
    let norm = 1.0 / freqs.len() as f64;
    let beta2 = smf.beta2();
    let (sign, field) = match direction {
        Propagation::Forward => (-1.0, db_to_linear(-insertion_loss_db).sqrt()),
        Propagation::Inverse => (1.0, db_to_linear(insertion_loss_db).sqrt()),
    };
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * std::f64::consts::PI * f;
            Complex64::from_polar(field * norm, sign * 0.5 * beta2 * w * w * smf.length_km)
        })
        .collect()
}

/// Applies the FBG DCM (or its inverse) to a waveform.
pub fn fbg_dcm(
    wave: &DualPolWaveform,
    smf: &FiberParams,
    insertion_loss_db: f64,
    direction: Propagation,
) -> DualPolWaveform {
    let freqs = fft_frequencies(wave.len(), wave.sample_rate);
    let mask = dcm_multiplier(&freqs, smf, insertion_loss_db, direction);
    let plan = FftPlan::new(wave.len());
    let mut out = wave.clone();
    plan.filter(&mut out.x, &mask);
    plan.filter(&mut out.y, &mask);
    out
}

/// Full description of an N-span link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub spans: usize,
    pub smf: FiberParams,
    /// Present on DM links.
    pub dcm: Option<DcmParams>,
    pub noise_figure_db: f64,
    /// Total launch power into each SMF, both polarizations.
    pub launch_power_dbm: f64,
    /// Power into the DCM relative to the SMF launch power.
    pub dcm_power_backoff_db: f64,
    /// Symbol rate in baud. Also the one-sided bandwidth of the amplifier
    /// and receiver low-pass filters.
    pub symbol_rate: f64,
    pub step_epsilon: f64,
    /// Kerr factor κ; 8/9 for the Manakov model, 1 for the scalar form.
    pub kerr_factor: f64,
    /// Forward-channel ASE on/off.
    pub ase: bool,
    /// Ideal receiver low-pass filter on/off. Turning it off keeps the
    /// full simulated bandwidth, which makes noiseless DBP an exact
    /// inverse even when nonlinearity has broadened the spectrum.
    #[serde(default = "default_true")]
    pub receiver_filter: bool,
}

fn default_true() -> bool {
    true
}

impl LinkConfig {
    /// DM link with 80 km spans and the standard fiber, 5 dB noise figure,
    /// 3 dB FBG insertion loss and 4 dB DCM power backoff.
    pub fn dispersion_managed(spans: usize, symbol_rate: f64, launch_power_dbm: f64) -> Self {
        LinkConfig {
            spans,
            smf: FiberParams::standard_smf(80.0),
            dcm: Some(DcmParams::default()),
            noise_figure_db: 5.0,
            launch_power_dbm,
            dcm_power_backoff_db: 4.0,
            symbol_rate,
            step_epsilon: 1e-4,
            kerr_factor: MANAKOV_FACTOR,
            ase: true,
            receiver_filter: true,
        }
    }

    /// NDM link; the SMF span is 120 km for QPSK and 80 km for 16-QAM.
    pub fn non_managed(modulation: Modulation, spans: usize, symbol_rate: f64, launch_power_dbm: f64) -> Self {
        let span_km = match modulation {
            Modulation::Qpsk => 120.0,
            Modulation::Qam16 => 80.0,
        };
        LinkConfig {
            smf: FiberParams::standard_smf(span_km),
            dcm: None,
            ..Self::dispersion_managed(spans, symbol_rate, launch_power_dbm)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.spans < 1 {
            return Err(Error::InvalidParameter("link needs at least one span".into()));
        }
        self.smf.validate()?;
        if !(self.symbol_rate > 0.0) {
            return Err(Error::InvalidParameter(format!("symbol rate {}", self.symbol_rate)));
        }
        if !(self.step_epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("step epsilon {}", self.step_epsilon)));
        }
        if !self.launch_power_dbm.is_finite() || !self.kerr_factor.is_finite() {
            return Err(Error::InvalidParameter("launch power and Kerr factor must be finite".into()));
        }
        let (g1, g2) = self.amplifiers();
        for g in std::iter::once(&g1).chain(g2.as_ref()) {
            if g.gain < 1.0 {
                return Err(Error::InvalidParameter(format!(
                    "span loss ledger yields an amplifier gain of {} dB < 0 dB",
                    10.0 * g.gain.log10()
                )));
            }
        }
        Ok(())
    }

    pub fn is_dispersion_managed(&self) -> bool {
        self.dcm.is_some()
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_watts(self.launch_power_dbm)
    }

    pub fn symbol_period(&self) -> f64 {
        1.0 / self.symbol_rate
    }

    /// Maximum SSFM segment length Δ for the SMF at the launch power.
    pub fn step_size(&self) -> Result<f64> {
        step_size(
            self.step_epsilon,
            self.smf.gamma,
            self.launch_power_w(),
            self.smf.dispersion,
            self.smf.wavelength_nm,
            self.symbol_period(),
        )
    }

    /// SMF step plan. A linear fiber (γ = 0) needs a single segment.
    pub fn step_plan(&self) -> Result<StepPlan> {
        if self.smf.gamma == 0.0 {
            return Ok(StepPlan::uniform(self.smf.length_km, 1));
        }
        StepPlan::for_length(self.smf.length_km, self.step_size()?)
    }

    /// EDFA1 and (DM only) EDFA2 from the loss ledger.
    pub fn amplifiers(&self) -> (AmplifierParams, Option<AmplifierParams>) {
        let amp = |gain| AmplifierParams {
            gain,
            noise_figure_db: self.noise_figure_db,
            noise_bandwidth: self.symbol_rate,
            wavelength_nm: self.smf.wavelength_nm,
        };
        match &self.dcm {
            Some(dcm) => (
                amp(self.smf.loss() * db_to_linear(-self.dcm_power_backoff_db)),
                Some(amp(db_to_linear(self.dcm_power_backoff_db + dcm.insertion_loss_db))),
            ),
            None => (amp(self.smf.loss()), None),
        }
    }
}

/// Span counts used for the reference DM/NDM scenarios.
pub fn reference_span_count(modulation: Modulation, symbol_rate_gbd: u32, managed: bool) -> Option<usize> {
    let dm = match (modulation, symbol_rate_gbd) {
        (Modulation::Qpsk, 14) => 50,
        (Modulation::Qpsk, 28 | 56) => 35,
        (Modulation::Qam16, 14) => 50,
        (Modulation::Qam16, 28 | 56) => 40,
        _ => return None,
    };
    Some(if managed { dm } else { 110 })
}

/// Precomputed propagation operators for one link on one sample grid,
/// shared by the channel and every receiver particle.
#[derive(Clone, Debug)]
pub struct LinkModel {
    pub config: LinkConfig,
    pub step_plan: StepPlan,
    pub edfa1: AmplifierParams,
    pub edfa2: Option<AmplifierParams>,
    smf: FiberPropagator,
    dcm_forward: Option<Vec<Complex64>>,
    dcm_inverse: Option<Vec<Complex64>>,
    rx_mask: Option<Vec<Complex64>>,
    noise: NoiseShaper,
    fft: FftPlan,
    len: usize,
    sample_rate: f64,
}

impl LinkModel {
    pub fn new(config: &LinkConfig, len: usize, sample_rate: f64) -> Result<Self> {
        config.validate()?;
        if config.symbol_rate > sample_rate / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "filters of one-sided bandwidth {} Hz exceed the Nyquist frequency of a {} Hz grid",
                config.symbol_rate, sample_rate
            )));
        }
        let step_plan = config.step_plan()?;
        let smf = FiberPropagator::new(&config.smf, &step_plan, len, sample_rate, config.kerr_factor)?;
        let freqs = fft_frequencies(len, sample_rate);
        let (dcm_forward, dcm_inverse) = match &config.dcm {
            Some(d) => (
                Some(dcm_multiplier(&freqs, &config.smf, d.insertion_loss_db, Propagation::Forward)),
                Some(dcm_multiplier(&freqs, &config.smf, d.insertion_loss_db, Propagation::Inverse)),
            ),
            None => (None, None),
        };
        let (edfa1, edfa2) = config.amplifiers();
        Ok(LinkModel {
            config: config.clone(),
            step_plan,
            edfa1,
            edfa2,
            smf,
            dcm_forward,
            dcm_inverse,
            rx_mask: config
                .receiver_filter
                .then(|| lowpass_mask(len, sample_rate, config.symbol_rate)),
            noise: NoiseShaper::new(len, sample_rate, config.symbol_rate),
            fft: FftPlan::new(len),
            len,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn noise_shaper(&self) -> &NoiseShaper {
        &self.noise
    }

    fn check(&self, wave: &DualPolWaveform) -> Result<()> {
        if wave.len() != self.len {
            return Err(Error::LengthMismatch {
                expected: self.len,
                actual: wave.len(),
            });
        }
        Ok(())
    }

    fn apply_mask(&self, wave: &mut DualPolWaveform, mask: &[Complex64]) {
        self.fft.filter(&mut wave.x, mask);
        self.fft.filter(&mut wave.y, mask);
    }

    /// One forward span. ASE is added only when `rng` is given.
    pub fn forward_span<R: Rng + ?Sized>(&self, wave: &mut DualPolWaveform, mut rng: Option<&mut R>) -> Result<()> {
        self.check(wave)?;
        self.smf.propagate(wave, Propagation::Forward)?;
        edfa(wave, &self.edfa1, &self.noise, rng.as_deref_mut());
        if let (Some(mask), Some(amp2)) = (&self.dcm_forward, &self.edfa2) {
            self.apply_mask(wave, mask);
            edfa(wave, amp2, &self.noise, rng.as_deref_mut());
        }
        Ok(())
    }

    /// Ideal receiver low-pass filter of one-sided bandwidth R_s; a no-op
    /// when the configuration disables it.
    pub fn receiver_filter(&self, wave: &mut DualPolWaveform) -> Result<()> {
        self.check(wave)?;
        if let Some(mask) = &self.rx_mask {
            self.apply_mask(wave, mask);
        }
        Ok(())
    }

    /// Inverse of one span for one particle: EDFA2⁻¹, DCM⁻¹, EDFA1⁻¹,
    /// SMF⁻¹. Inverse amplifiers inject fresh ASE draws when `rng` is given.
    pub fn backward_span<R: Rng + ?Sized>(&self, wave: &mut DualPolWaveform, mut rng: Option<&mut R>) -> Result<()> {
        self.check(wave)?;
        if let (Some(mask), Some(amp2)) = (&self.dcm_inverse, &self.edfa2) {
            edfa_inverse_particle(wave, amp2, &self.noise, rng.as_deref_mut());
            self.apply_mask(wave, mask);
        }
        edfa_inverse_particle(wave, &self.edfa1, &self.noise, rng.as_deref_mut());
        self.smf.propagate(wave, Propagation::Inverse)
    }
}

/// Receiver-side facts carried from the transmitter (perfect timing,
/// polarization and phase knowledge).
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub timing_offset: usize,
    pub num_symbols: usize,
    pub launch_power_w: f64,
    pub step_plan: StepPlan,
    pub edfa1_gain: f64,
    pub edfa2_gain: Option<f64>,
    /// Energy fraction above 80 % of Nyquist before the receiver filter.
    pub edge_energy_fraction: f64,
    pub transmitted: DualPolWaveform,
}

impl GroundTruth {
    /// Spectral broadening close to the band edge risks aliasing in the SSFM.
    pub fn aliasing_warning(&self) -> bool {
        self.edge_energy_fraction > 1e-6
    }
}

#[derive(Clone, Debug)]
pub struct LinkOutput {
    pub received: DualPolWaveform,
    pub truth: GroundTruth,
}

/// Transmitter, N forward spans and receiver filter. ASE follows
/// `model.config.ase` and is drawn from `rng`.
pub fn simulate_link<R: Rng + ?Sized>(
    symbols: &SymbolSequence,
    model: &LinkModel,
    pulse: &PulseShape,
    rng: &mut R,
) -> Result<LinkOutput> {
    let cfg = &model.config;
    let tx = shape(symbols, pulse, cfg.symbol_rate, cfg.launch_power_w());
    if tx.len() != model.len() || tx.sample_rate != model.sample_rate() {
        return Err(Error::InvalidParameter(format!(
            "link model grid ({} samples at {} Hz) does not match the shaped frame ({} samples at {} Hz)",
            model.len(),
            model.sample_rate(),
            tx.len(),
            tx.sample_rate
        )));
    }
    let mut wave = tx.clone();
    for _ in 0..cfg.spans {
        if cfg.ase {
            model.forward_span(&mut wave, Some(&mut *rng))?;
        } else {
            model.forward_span::<R>(&mut wave, None)?;
        }
    }
    let edge_energy_fraction = crate::signal::spectral_edge_fraction(&wave, 0.8);
    model.receiver_filter(&mut wave)?;
    if !wave.is_finite() {
        return Err(Error::NonFinite("received waveform".into()));
    }
    Ok(LinkOutput {
        received: wave,
        truth: GroundTruth {
            timing_offset: pulse.timing_offset(),
            num_symbols: symbols.len(),
            launch_power_w: cfg.launch_power_w(),
            step_plan: model.step_plan.clone(),
            edfa1_gain: model.edfa1.gain,
            edfa2_gain: model.edfa2.as_ref().map(|a| a.gain),
            edge_energy_fraction,
            transmitted: tx,
        },
    })
}

/// Builds the link model matching the frame produced by [`shape`] for
/// `num_symbols` symbols.
pub fn link_model_for_frame(config: &LinkConfig, pulse: &PulseShape, num_symbols: usize) -> Result<LinkModel> {
    let len = crate::signal::frame_len(pulse, num_symbols);
    LinkModel::new(config, len, config.symbol_rate * pulse.samples_per_symbol as f64)
}
