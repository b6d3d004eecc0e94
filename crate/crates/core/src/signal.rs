//! Complex baseband signal primitives: dual-polarization waveforms, RRC pulse
//! shaping, matched filtering, spectral transforms and brick-wall filtering.
//!
//! Real 4D symbols use the layout `[Re x, Im x, Re y, Im y]` everywhere in
//! the crate.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::modem::{Symbol, SymbolSequence};
use crate::{Error, Result};

/// Oversampled complex envelope on the x and y polarizations, in √W.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPolWaveform {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_rate: f64,
}

impl DualPolWaveform {
    pub fn new(x: Vec<Complex64>, y: Vec<Complex64>, sample_rate: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                actual: y.len(),
            });
        }
        if x.is_empty() {
            return Err(Error::InvalidParameter("waveform must hold at least one sample".into()));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!("sample rate {sample_rate} Hz")));
        }
        let wave = DualPolWaveform { x, y, sample_rate };
        if !wave.is_finite() {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(wave)
    }

    pub fn zeros(len: usize, sample_rate: f64) -> Self {
        DualPolWaveform {
            x: vec![Complex64::new(0.0, 0.0); len],
            y: vec![Complex64::new(0.0, 0.0); len],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Σ(|x|² + |y|²) over all samples.
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum()
    }

    /// Mean total (both polarizations) power per sample.
    pub fn mean_power(&self) -> f64 {
        self.energy() / self.len() as f64
    }

    /// Instantaneous total power |x|² + |y|² per sample.
    pub fn instantaneous_power(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.y)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for c in self.x.iter_mut().chain(self.y.iter_mut()) {
            *c *= factor;
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale(factor);
        self
    }

    pub fn add_assign(&mut self, other: &DualPolWaveform) {
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        for (a, b) in self.y.iter_mut().zip(&other.y) {
            *a += b;
        }
    }

    /// ‖self − reference‖ / ‖reference‖ over both polarizations.
    pub fn relative_error(&self, reference: &DualPolWaveform) -> f64 {
        let diff: f64 = self
            .x
            .iter()
            .zip(&reference.x)
            .chain(self.y.iter().zip(&reference.y))
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (diff / reference.energy()).sqrt()
    }
}

/// Truncated, symmetric, unit-energy pulse.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseShape {
    pub taps: Vec<f64>,
    pub samples_per_symbol: usize,
    pub rolloff: f64,
    pub span_symbols: usize,
}

impl PulseShape {
    /// Index of the center tap.
    pub fn center(&self) -> usize {
        self.taps.len() / 2
    }

    /// Samples from the start of a shaped frame to the peak of the first data
    /// symbol: `span_symbols / 2` guard symbols plus the pulse half-length.
    pub fn timing_offset(&self) -> usize {
        self.guard_symbols() * self.samples_per_symbol + self.center()
    }

    /// Zero symbols inserted on each side of a shaped block.
    pub fn guard_symbols(&self) -> usize {
        self.span_symbols / 2
    }
}

/// Root-raised-cosine impulse response value at `t` symbol periods.
fn rrc_value(t: f64, rolloff: f64) -> f64 {
    const EPS: f64 = 1e-9;
    if t.abs() < EPS {
        return 1.0 - rolloff + 4.0 * rolloff / PI;
    }
    if rolloff > 0.0 && (t.abs() - 1.0 / (4.0 * rolloff)).abs() < EPS {
        let arg = PI / (4.0 * rolloff);
        return rolloff / 2f64.sqrt()
            * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    let num = (PI * t * (1.0 - rolloff)).sin() + 4.0 * rolloff * t * (PI * t * (1.0 + rolloff)).cos();
    let den = PI * t * (1.0 - (4.0 * rolloff * t).powi(2));
    num / den
}

pub fn make_rrc_pulse(rolloff: f64, span_symbols: usize, samples_per_symbol: usize) -> Result<PulseShape> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::InvalidParameter(format!("rolloff {rolloff} outside [0, 1]")));
    }
    if span_symbols < 2 || span_symbols % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "span_symbols must be even and at least 2, got {span_symbols}"
        )));
    }
    if samples_per_symbol < 2 {
        return Err(Error::InvalidParameter(format!(
            "samples_per_symbol must be at least 2, got {samples_per_symbol}"
        )));
    }
    let n = span_symbols * samples_per_symbol + 1;
    let half = (n / 2) as isize;
    let mut taps: Vec<f64> = (0..n as isize)
        .map(|i| rrc_value((i - half) as f64 / samples_per_symbol as f64, rolloff))
        .collect();
    // enforce exact symmetry
    for i in 0..n / 2 {
        let avg = 0.5 * (taps[i] + taps[n - 1 - i]);
        taps[i] = avg;
        taps[n - 1 - i] = avg;
    }
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|t| *t /= norm);
    Ok(PulseShape {
        taps,
        samples_per_symbol,
        rolloff,
        span_symbols,
    })
}

/// Amplitude mapping unit-energy-per-polarization symbols to a waveform of
/// mean total power `launch_power_w`.
pub fn launch_amplitude(pulse: &PulseShape, launch_power_w: f64) -> f64 {
    (launch_power_w * pulse.samples_per_symbol as f64 / 2.0).sqrt()
}

/// Smallest length ≥ `n` whose prime factors are all in {2, 3, 5}.
pub fn next_smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Waveform length produced by [`shape`] for `num_symbols` data symbols.
pub fn frame_len(pulse: &PulseShape, num_symbols: usize) -> usize {
    let sps = pulse.samples_per_symbol;
    let full = (num_symbols + 2 * pulse.guard_symbols()) * sps + pulse.taps.len() - 1;
    next_smooth_len(full)
}

/// Upsamples by zero insertion and convolves each polarization with the pulse.
///
/// The block is framed by `span_symbols / 2` zero symbols on each side, the
/// full convolution tail is kept, and the frame is zero-extended to an
/// FFT-friendly length. Data symbol `k` peaks at sample
/// `pulse.timing_offset() + k * samples_per_symbol`.
pub fn shape(
    symbols: &SymbolSequence,
    pulse: &PulseShape,
    symbol_rate: f64,
    launch_power_w: f64,
) -> DualPolWaveform {
    let sps = pulse.samples_per_symbol;
    let len = frame_len(pulse, symbols.len());
    let mut wave = DualPolWaveform::zeros(len, symbol_rate * sps as f64);
    let amp = launch_amplitude(pulse, launch_power_w);
    let guard = pulse.guard_symbols();
    for (k, s) in symbols.iter().enumerate() {
        let start = (k + guard) * sps;
        let sx = Complex64::new(s[0], s[1]) * amp;
        let sy = Complex64::new(s[2], s[3]) * amp;
        for (i, &g) in pulse.taps.iter().enumerate() {
            wave.x[start + i] += sx * g;
            wave.y[start + i] += sy * g;
        }
    }
    wave
}

/// Correlates with the pulse (convolution with its time reverse) and samples
/// at the symbol rate starting at `timing_offset`, undoing the launch
/// amplitude so that a back-to-back link returns the transmitted symbols.
pub fn matched_filter_sample(
    wave: &DualPolWaveform,
    pulse: &PulseShape,
    timing_offset: usize,
    num_symbols: usize,
    launch_power_w: f64,
) -> Result<SymbolSequence> {
    let sps = pulse.samples_per_symbol;
    let c = pulse.center();
    let ntaps = pulse.taps.len();
    if num_symbols == 0 {
        return Err(Error::InvalidParameter("num_symbols must be at least 1".into()));
    }
    let last = timing_offset + (num_symbols - 1) * sps;
    if timing_offset < c || last - c + ntaps > wave.len() {
        return Err(Error::OutOfRange(format!(
            "sampling {num_symbols} symbols from offset {timing_offset} needs samples up to {} but the waveform holds {}",
            last - c.min(last) + ntaps,
            wave.len()
        )));
    }
    let inv_amp = 1.0 / launch_amplitude(pulse, launch_power_w);
    let symbols = (0..num_symbols)
        .map(|k| {
            let start = timing_offset + k * sps - c;
            let mut ax = Complex64::new(0.0, 0.0);
            let mut ay = Complex64::new(0.0, 0.0);
            // time-reversed taps of a symmetric pulse are the taps themselves,
            // but index them reversed to keep this a true matched filter
            for i in 0..ntaps {
                let g = pulse.taps[ntaps - 1 - i];
                ax += wave.x[start + i] * g;
                ay += wave.y[start + i] * g;
            }
            [ax.re * inv_amp, ax.im * inv_amp, ay.re * inv_amp, ay.im * inv_amp] as Symbol
        })
        .collect();
    Ok(SymbolSequence::from_vec_unchecked(symbols))
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Cached forward/inverse FFT plans for one transform length.
#[derive(Clone)]
pub struct FftPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("len", &self.len).finish()
    }
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            FftPlan {
                forward: p.plan_fft_forward(len),
                inverse: p.plan_fft_inverse(len),
                len,
            }
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Unnormalized forward transform, in place.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    /// Unnormalized inverse transform, in place (no 1/n factor).
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
    }

    /// Forward transform, multiply by `mask` (which must include the 1/n
    /// normalization), inverse transform.
    pub fn filter(&self, buf: &mut [Complex64], mask: &[Complex64]) {
        self.forward(buf);
        for (b, m) in buf.iter_mut().zip(mask) {
            *b *= m;
        }
        self.inverse(buf);
    }
}

/// Frequency of each FFT bin in Hz, in FFT order.
pub fn fft_frequencies(len: usize, sample_rate: f64) -> Vec<f64> {
    let half = (len + 1) / 2;
    (0..len)
        .map(|k| {
            let signed = if k < half { k as f64 } else { k as f64 - len as f64 };
            signed * sample_rate / len as f64
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Unitary-normalized spectra of both polarizations.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPolSpectrum {
    pub x: Vec<Complex64>,
    pub y: Vec<Complex64>,
    pub sample_rate: f64,
}

impl DualPolSpectrum {
    pub fn energy(&self) -> f64 {
        self.x.iter().chain(&self.y).map(|c| c.norm_sqr()).sum()
    }
}

/// Unitary DFT of both polarizations (1/√n on each direction).
pub fn to_spectrum(wave: &DualPolWaveform) -> DualPolSpectrum {
    let plan = FftPlan::new(wave.len());
    let norm = 1.0 / (wave.len() as f64).sqrt();
    let mut x = wave.x.clone();
    let mut y = wave.y.clone();
    plan.forward(&mut x);
    plan.forward(&mut y);
    x.iter_mut().chain(y.iter_mut()).for_each(|c| *c *= norm);
    DualPolSpectrum {
        x,
        y,
        sample_rate: wave.sample_rate,
    }
}

pub fn from_spectrum(spec: &DualPolSpectrum) -> DualPolWaveform {
    let plan = FftPlan::new(spec.x.len());
    let norm = 1.0 / (spec.x.len() as f64).sqrt();
    let mut x = spec.x.clone();
    let mut y = spec.y.clone();
    plan.inverse(&mut x);
    plan.inverse(&mut y);
    x.iter_mut().chain(y.iter_mut()).for_each(|c| *c *= norm);
    DualPolWaveform {
        x,
        y,
        sample_rate: spec.sample_rate,
    }
}

/// Brick-wall mask passing |f| ≤ `bandwidth`, including the 1/n inverse-FFT
/// normalization.
pub fn lowpass_mask(len: usize, sample_rate: f64, bandwidth: f64) -> Vec<Complex64> {
    let norm = 1.0 / len as f64;
    fft_frequencies(len, sample_rate)
        .into_iter()
        .map(|f| Complex64::new(if f.abs() <= bandwidth { norm } else { 0.0 }, 0.0))
        .collect()
}

/// Ideal low-pass filter with one-sided bandwidth `bandwidth` Hz.
pub fn ideal_lowpass(wave: &DualPolWaveform, bandwidth: f64) -> Result<DualPolWaveform> {
    if !(bandwidth > 0.0 && bandwidth <= wave.sample_rate / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "low-pass bandwidth {bandwidth} Hz must lie in (0, {}] Hz",
            wave.sample_rate / 2.0
        )));
    }
    let plan = FftPlan::new(wave.len());
    let mask = lowpass_mask(wave.len(), wave.sample_rate, bandwidth);
    let mut out = wave.clone();
    plan.filter(&mut out.x, &mask);
    plan.filter(&mut out.y, &mask);
    Ok(out)
}

/// Fraction of the waveform energy at |f| > `fraction` · Nyquist.
pub fn spectral_edge_fraction(wave: &DualPolWaveform, fraction: f64) -> f64 {
    let spec = to_spectrum(wave);
    let edge = fraction * wave.sample_rate / 2.0;
    let freqs = fft_frequencies(wave.len(), wave.sample_rate);
    let outer: f64 = freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| f.abs() > edge)
        .map(|(k, _)| spec.x[k].norm_sqr() + spec.y[k].norm_sqr())
        .sum();
    outer / spec.energy().max(f64::MIN_POSITIVE)
}
