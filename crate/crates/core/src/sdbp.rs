//! Particle backpropagation engine.
//!
//! The received waveform is replicated into N_p particles. Each particle runs
//! backwards through every span (inverse amplifiers with fresh noise draws,
//! inverse DCM, inverse SSFM) and is finally matched-filtered into a symbol
//! sequence. The resulting cloud is a sample-based representation of the
//! posterior over transmitted symbols.

use serde::{Deserialize, Serialize};

use crate::channel::LinkModel;
use crate::exec::Exec;
use crate::modem::{Symbol, SymbolSequence};
use crate::rng::{self, StreamRng};
use crate::signal::{matched_filter_sample, DualPolWaveform, PulseShape};
use crate::{Error, Result};

/// N_p ≥ 1 equally weighted samples of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleCloud<T> {
    particles: Vec<T>,
}

pub type WaveformCloud = ParticleCloud<DualPolWaveform>;
pub type SymbolCloud = ParticleCloud<SymbolSequence>;

impl<T> ParticleCloud<T> {
    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    pub fn particles(&self) -> &[T] {
        &self.particles
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.particles.iter()
    }

    pub fn into_particles(self) -> Vec<T> {
        self.particles
    }
}

impl WaveformCloud {
    pub fn new(particles: Vec<DualPolWaveform>) -> Result<Self> {
        let first = particles.first().ok_or(Error::InsufficientParticles(0))?;
        let (len, fs) = (first.len(), first.sample_rate);
        for p in &particles {
            if p.len() != len {
                return Err(Error::LengthMismatch {
                    expected: len,
                    actual: p.len(),
                });
            }
            if p.sample_rate != fs {
                return Err(Error::InvalidParameter("particles with differing sample rates".into()));
            }
        }
        Ok(ParticleCloud { particles })
    }
}

impl SymbolCloud {
    pub fn new(particles: Vec<SymbolSequence>) -> Result<Self> {
        let first = particles.first().ok_or(Error::InsufficientParticles(0))?;
        let k = first.len();
        if let Some(p) = particles.iter().find(|p| p.len() != k) {
            return Err(Error::LengthMismatch {
                expected: k,
                actual: p.len(),
            });
        }
        Ok(ParticleCloud { particles })
    }

    /// Symbols per particle, K.
    pub fn num_symbols(&self) -> usize {
        self.particles[0].len()
    }

    /// Slot `k` of particle `n`.
    pub fn symbol(&self, n: usize, k: usize) -> &Symbol {
        &self.particles[n][k]
    }

    /// 64-bit FNV-1a digest of every coordinate's bit pattern; equal clouds
    /// have equal digests, so it identifies the cloud a detector consumed.
    pub fn digest(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.n_particles() as u64);
        feed(self.num_symbols() as u64);
        for p in &self.particles {
            for s in p.iter() {
                s.iter().for_each(|v| feed(v.to_bits()));
            }
        }
        h
    }
}

/// Order in which particles traverse the spans. Both give identical clouds;
/// they differ only in peak memory and batching.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// All particles finish span i before any starts span i − 1.
    #[default]
    SpanSynchronous,
    /// Each particle runs through all spans, then is matched-filtered
    /// straight away; waveforms are never held for the whole cloud.
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdbpConfig {
    pub particles: usize,
    /// Inject ASE draws in the inverse amplifiers. Turning this off with a
    /// single particle yields plain DBP.
    pub noise: bool,
    pub schedule: Schedule,
    /// Seed of the particle streams; particle n uses stream n.
    pub seed: u64,
}

impl Default for SdbpConfig {
    fn default() -> Self {
        SdbpConfig {
            particles: 500,
            noise: true,
            schedule: Schedule::default(),
            seed: 0,
        }
    }
}

impl SdbpConfig {
    fn validate(&self) -> Result<()> {
        if self.particles < 1 {
            return Err(Error::InsufficientParticles(self.particles));
        }
        Ok(())
    }

    fn particle_rng(&self, n: usize) -> StreamRng {
        rng::stream(self.seed, n as u64)
    }
}

fn run_particle(model: &LinkModel, wave: &mut DualPolWaveform, rng: &mut StreamRng, noise: bool) -> Result<()> {
    for _ in 0..model.config.spans {
        backward_span(model, wave, rng, noise)?;
    }
    Ok(())
}

fn backward_span(model: &LinkModel, wave: &mut DualPolWaveform, rng: &mut StreamRng, noise: bool) -> Result<()> {
    if noise {
        model.backward_span(wave, Some(rng))
    } else {
        model.backward_span::<StreamRng>(wave, None)
    }
}

/// Backpropagates `r` through the link with `cfg.particles` particles.
pub fn backpropagate(r: &DualPolWaveform, model: &LinkModel, cfg: &SdbpConfig, exec: Exec) -> Result<WaveformCloud> {
    cfg.validate()?;
    let particles = match cfg.schedule {
        Schedule::SpanSynchronous => {
            let mut state: Vec<(DualPolWaveform, StreamRng, Result<()>)> = (0..cfg.particles)
                .map(|n| (r.clone(), cfg.particle_rng(n), Ok(())))
                .collect();
            for _ in 0..model.config.spans {
                exec.for_each_mut(&mut state, |_, (wave, rng, status)| {
                    if status.is_ok() {
                        *status = backward_span(model, wave, rng, cfg.noise);
                    }
                });
            }
            state
                .into_iter()
                .map(|(wave, _, status)| status.map(|_| wave))
                .collect::<Result<Vec<_>>>()?
        }
        Schedule::Streaming => exec
            .map_range(cfg.particles, |n| {
                let mut wave = r.clone();
                run_particle(model, &mut wave, &mut cfg.particle_rng(n), cfg.noise).map(|_| wave)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?,
    };
    WaveformCloud::new(particles)
}

/// Matched filter and symbol-rate sampling of every particle.
pub fn to_symbol_cloud(
    cloud: &WaveformCloud,
    pulse: &PulseShape,
    timing_offset: usize,
    num_symbols: usize,
    launch_power_w: f64,
    exec: Exec,
) -> Result<SymbolCloud> {
    let seqs = exec
        .map(cloud.particles(), |w| {
            matched_filter_sample(w, pulse, timing_offset, num_symbols, launch_power_w)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    SymbolCloud::new(seqs)
}

/// Backpropagation straight to the symbol cloud. With the streaming schedule
/// each particle's waveform is dropped as soon as it has been sampled.
pub fn symbol_cloud(
    r: &DualPolWaveform,
    model: &LinkModel,
    pulse: &PulseShape,
    timing_offset: usize,
    num_symbols: usize,
    cfg: &SdbpConfig,
    exec: Exec,
) -> Result<SymbolCloud> {
    cfg.validate()?;
    let power = model.config.launch_power_w();
    match cfg.schedule {
        Schedule::SpanSynchronous => {
            let cloud = backpropagate(r, model, cfg, exec)?;
            to_symbol_cloud(&cloud, pulse, timing_offset, num_symbols, power, exec)
        }
        Schedule::Streaming => {
            let seqs = exec
                .map_range(cfg.particles, |n| {
                    let mut wave = r.clone();
                    run_particle(model, &mut wave, &mut cfg.particle_rng(n), cfg.noise)?;
                    matched_filter_sample(&wave, pulse, timing_offset, num_symbols, power)
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            SymbolCloud::new(seqs)
        }
    }
}

/// Deterministic single-particle backpropagation (DBP).
pub fn dbp_waveform(r: &DualPolWaveform, model: &LinkModel) -> Result<DualPolWaveform> {
    let cfg = SdbpConfig {
        particles: 1,
        noise: false,
        schedule: Schedule::Streaming,
        seed: 0,
    };
    let mut cloud = backpropagate(r, model, &cfg, Exec::Sequential)?.into_particles();
    Ok(cloud.remove(0))
}
