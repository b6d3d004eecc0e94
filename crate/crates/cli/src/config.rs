//! Run configuration: the on-disk schema, its defaults, and resolution into
//! an [`ExperimentSpec`] plus engine settings.
//!
//! The file format is TOML. Physical quantities are unit-suffixed strings
//! (see [`crate::units`]); unknown keys are rejected, and every validation
//! error names the offending key in dotted form (`link.spans`).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sdbp::channel::{DcmParams, FiberKind, FiberParams, LinkConfig};
use sdbp::detectors::{DetectorKind, DetectorOptions, DetectorSpec};
use sdbp::experiment::{ExperimentSpec, PulseParams};
use sdbp::modem::Modulation;
use sdbp::sdbp::Schedule;
use sdbp::stats::{MetricOptions, Regularization};

use crate::units::{self, Dimension};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub link: LinkSection,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub engine: EngineSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    /// Inline FBG dispersion compensation in every span.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub managed: Option<bool>,
    pub spans: i64,
    pub symbol_rate: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_length: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispersion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_figure: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcm_insertion_loss: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dcm_power_backoff: Option<String>,
    /// Dimensionless SSFM accuracy ε of the step-size rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_epsilon: Option<f64>,
    /// Dimensionless Kerr factor (8/9 for the Manakov model).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kerr_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ase: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver_filter: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub modulation: String,
    pub symbols_per_block: i64,
    pub blocks: i64,
    /// Launch powers, e.g. `["0 dBm", "2 dBm"]`.
    pub powers: Vec<String>,
    pub detectors: Vec<DetectorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub particles: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rolloff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_symbols: Option<i64>,
    /// Simulation oversampling: samples per symbol.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_symbol: Option<i64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    /// Worker threads; 0 uses every core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_budget: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization_floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization_relative: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_logdet: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Parse(String),
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The dotted key a validation error refers to.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid { key, message } => write!(f, "invalid `{key}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Fully resolved run: the experiment plus engine settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub spec: ExperimentSpec,
    pub workers: usize,
    pub output: PathBuf,
}

const DEFAULT_OUTPUT: &str = "results";

fn quantity(key: &str, text: &str, dim: Dimension) -> Result<f64> {
    units::parse(text, dim).map_err(|e| ConfigError::invalid(key, e.to_string()))
}

fn opt_quantity(key: &str, text: &Option<String>, dim: Dimension, default: f64) -> Result<f64> {
    text.as_deref().map_or(Ok(default), |t| quantity(key, t, dim))
}

fn positive_int(key: &str, v: i64) -> Result<usize> {
    if v < 1 {
        return Err(ConfigError::invalid(key, format!("must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

fn non_negative_int(key: &str, v: i64) -> Result<usize> {
    if v < 0 {
        return Err(ConfigError::invalid(key, format!("must be a non-negative integer, got {v}")));
    }
    Ok(v as usize)
}

fn parse_modulation(text: &str) -> Result<Modulation> {
    text.parse()
        .map_err(|e: sdbp::Error| ConfigError::invalid("experiment.modulation", e.to_string()))
}

fn parse_schedule(text: &str) -> Result<Schedule> {
    match text {
        "span-synchronous" => Ok(Schedule::SpanSynchronous),
        "streaming" => Ok(Schedule::Streaming),
        other => Err(ConfigError::invalid(
            "experiment.schedule",
            format!("unknown schedule {other:?} (expected \"span-synchronous\" or \"streaming\")"),
        )),
    }
}

fn schedule_name(s: Schedule) -> &'static str {
    match s {
        Schedule::SpanSynchronous => "span-synchronous",
        Schedule::Streaming => "streaming",
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config schema is TOML-serializable")
    }

    fn managed(&self) -> bool {
        self.link.managed.unwrap_or(true)
    }

    /// Copy with every optional field set to the value the run will use.
    pub fn with_defaults(&self) -> Result<Self> {
        let r = self.resolve()?;
        let link = &r.spec.link;
        let dcm = link.dcm.clone().unwrap_or_default();
        let opts = r.spec.detector_options;
        let mut out = self.clone();
        out.link = LinkSection {
            managed: Some(link.dcm.is_some()),
            spans: self.link.spans,
            symbol_rate: self.link.symbol_rate.clone(),
            span_length: Some(units::format(link.smf.length_km, Dimension::Length)),
            dispersion: Some(units::format(link.smf.dispersion, Dimension::Dispersion)),
            nonlinearity: Some(units::format(link.smf.gamma, Dimension::Nonlinearity)),
            attenuation: Some(units::format(link.smf.attenuation_db, Dimension::Attenuation)),
            wavelength: Some(units::format(link.smf.wavelength_nm, Dimension::Wavelength)),
            noise_figure: Some(units::format(link.noise_figure_db, Dimension::Ratio)),
            dcm_insertion_loss: Some(units::format(dcm.insertion_loss_db, Dimension::Ratio)),
            dcm_power_backoff: Some(units::format(link.dcm_power_backoff_db, Dimension::Ratio)),
            step_epsilon: Some(link.step_epsilon),
            kerr_factor: Some(link.kerr_factor),
            ase: Some(link.ase),
            receiver_filter: Some(link.receiver_filter),
        };
        out.experiment.particles = Some(r.spec.particles as i64);
        out.experiment.schedule = Some(schedule_name(r.spec.schedule).to_string());
        out.experiment.master_seed = Some(r.spec.master_seed as i64);
        out.pulse = PulseSection {
            rolloff: Some(r.spec.pulse.rolloff),
            span_symbols: Some(r.spec.pulse.span_symbols as i64),
            samples_per_symbol: Some(r.spec.pulse.samples_per_symbol as i64),
        };
        out.engine = EngineSection {
            workers: Some(r.workers as i64),
            state_budget: Some(opts.state_budget as i64),
            regularization_floor: Some(opts.metric.regularization.floor),
            regularization_relative: Some(opts.metric.regularization.relative),
            include_logdet: Some(opts.metric.include_logdet),
            output: Some(r.output.display().to_string()),
        };
        Ok(out)
    }

    fn resolve_link(&self, modulation: Modulation) -> Result<LinkConfig> {
        let l = &self.link;
        let spans = positive_int("link.spans", l.spans)?;
        let rate = quantity("link.symbol_rate", &l.symbol_rate, Dimension::SymbolRate)?;
        if !(rate > 0.0) {
            return Err(ConfigError::invalid("link.symbol_rate", "must be positive"));
        }
        let mut base = if self.managed() {
            LinkConfig::dispersion_managed(spans, rate, 0.0)
        } else {
            LinkConfig::non_managed(modulation, spans, rate, 0.0)
        };
        let smf = FiberParams {
            length_km: opt_quantity("link.span_length", &l.span_length, Dimension::Length, base.smf.length_km)?,
            dispersion: opt_quantity("link.dispersion", &l.dispersion, Dimension::Dispersion, base.smf.dispersion)?,
            gamma: opt_quantity("link.nonlinearity", &l.nonlinearity, Dimension::Nonlinearity, base.smf.gamma)?,
            attenuation_db: opt_quantity(
                "link.attenuation",
                &l.attenuation,
                Dimension::Attenuation,
                base.smf.attenuation_db,
            )?,
            wavelength_nm: opt_quantity("link.wavelength", &l.wavelength, Dimension::Wavelength, base.smf.wavelength_nm)?,
            kind: FiberKind::Smf,
        };
        for (key, ok) in [
            ("link.span_length", smf.length_km > 0.0),
            ("link.attenuation", smf.attenuation_db >= 0.0),
            ("link.nonlinearity", smf.gamma >= 0.0),
            ("link.wavelength", smf.wavelength_nm > 0.0),
        ] {
            if !ok {
                return Err(ConfigError::invalid(key, "out of range"));
            }
        }
        base.smf = smf;
        base.noise_figure_db = opt_quantity("link.noise_figure", &l.noise_figure, Dimension::Ratio, base.noise_figure_db)?;
        base.dcm_power_backoff_db = opt_quantity(
            "link.dcm_power_backoff",
            &l.dcm_power_backoff,
            Dimension::Ratio,
            base.dcm_power_backoff_db,
        )?;
        if base.dcm.is_some() {
            let il = opt_quantity(
                "link.dcm_insertion_loss",
                &l.dcm_insertion_loss,
                Dimension::Ratio,
                DcmParams::default().insertion_loss_db,
            )?;
            if il < 0.0 {
                return Err(ConfigError::invalid("link.dcm_insertion_loss", "must be non-negative"));
            }
            base.dcm = Some(DcmParams { insertion_loss_db: il });
        }
        if let Some(eps) = l.step_epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(ConfigError::invalid("link.step_epsilon", format!("must be positive, got {eps}")));
            }
            base.step_epsilon = eps;
        }
        if let Some(k) = l.kerr_factor {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(ConfigError::invalid("link.kerr_factor", format!("must be non-negative, got {k}")));
            }
            base.kerr_factor = k;
        }
        base.ase = l.ase.unwrap_or(true);
        base.receiver_filter = l.receiver_filter.unwrap_or(true);
        if base.smf.gamma > 0.0 && base.smf.dispersion == 0.0 {
            return Err(ConfigError::invalid("link.dispersion", "the step-size rule needs non-zero dispersion"));
        }
        Ok(base)
    }

    fn resolve_detectors(&self, k: usize) -> Result<Vec<DetectorSpec>> {
        if self.experiment.detectors.is_empty() {
            return Err(ConfigError::invalid("experiment.detectors", "at least one detector is required"));
        }
        let mut out: Vec<DetectorSpec> = Vec::new();
        for (i, d) in self.experiment.detectors.iter().enumerate() {
            let key = format!("experiment.detectors[{i}]");
            let kind: DetectorKind = d
                .name
                .parse()
                .map_err(|e: sdbp::Error| ConfigError::invalid(&format!("{key}.name"), e.to_string()))?;
            let memory = match (kind, d.memory) {
                (DetectorKind::Dd | DetectorKind::Va, None) => {
                    return Err(ConfigError::invalid(&format!("{key}.memory"), format!("{kind} needs a memory L")))
                }
                (_, m) => non_negative_int(&format!("{key}.memory"), m.unwrap_or(0))?,
            };
            let spec = DetectorSpec::new(kind, memory)
                .map_err(|e| ConfigError::invalid(&format!("{key}.memory"), e.to_string()))?;
            if memory >= k {
                return Err(ConfigError::invalid(
                    &format!("{key}.memory"),
                    format!("L = {memory} needs more than {k} symbols per block"),
                ));
            }
            if out.contains(&spec) {
                return Err(ConfigError::invalid(&key, format!("duplicate detector {spec}")));
            }
            out.push(spec);
        }
        Ok(out)
    }

    /// Validates the config and builds the experiment.
    pub fn resolve(&self) -> Result<Resolved> {
        let e = &self.experiment;
        let modulation = parse_modulation(&e.modulation)?;
        let link = self.resolve_link(modulation)?;
        let k = positive_int("experiment.symbols_per_block", e.symbols_per_block)?;
        let blocks = positive_int("experiment.blocks", e.blocks)?;
        if e.powers.is_empty() {
            return Err(ConfigError::invalid("experiment.powers", "at least one launch power is required"));
        }
        let powers = e
            .powers
            .iter()
            .enumerate()
            .map(|(i, p)| quantity(&format!("experiment.powers[{i}]"), p, Dimension::Power))
            .collect::<Result<Vec<_>>>()?;
        let detectors = self.resolve_detectors(k)?;
        let uses_particles = detectors.iter().any(|d| d.kind.uses_particles());
        let particles = match e.particles {
            Some(n) => non_negative_int("experiment.particles", n)?,
            None => 500,
        };
        if uses_particles && particles < 2 {
            return Err(ConfigError::invalid(
                "experiment.particles",
                format!("SDBP detectors need at least 2 particles, got {particles}"),
            ));
        }
        let schedule = e.schedule.as_deref().map_or(Ok(Schedule::default()), parse_schedule)?;
        let master_seed = match e.master_seed {
            Some(s) if s < 0 => {
                return Err(ConfigError::invalid("experiment.master_seed", "must be non-negative"))
            }
            Some(s) => s as u64,
            None => 1,
        };
        let p = &self.pulse;
        let pulse = PulseParams {
            rolloff: p.rolloff.unwrap_or(0.25),
            span_symbols: positive_int("pulse.span_symbols", p.span_symbols.unwrap_or(16))?,
            samples_per_symbol: positive_int("pulse.samples_per_symbol", p.samples_per_symbol.unwrap_or(4))?,
        };
        if !(0.0..=1.0).contains(&pulse.rolloff) {
            return Err(ConfigError::invalid("pulse.rolloff", format!("must lie in [0, 1], got {}", pulse.rolloff)));
        }
        if pulse.samples_per_symbol < 2 {
            return Err(ConfigError::invalid(
                "pulse.samples_per_symbol",
                "the R_s filters need at least 2 samples per symbol",
            ));
        }
        pulse
            .build()
            .map_err(|err| ConfigError::invalid("pulse", err.to_string()))?;
        let en = &self.engine;
        let defaults = DetectorOptions::default();
        let state_budget = match en.state_budget {
            Some(b) => positive_int("engine.state_budget", b)? as u128,
            None => defaults.state_budget,
        };
        let reg = Regularization::default();
        let regularization = Regularization {
            floor: en.regularization_floor.unwrap_or(reg.floor),
            relative: en.regularization_relative.unwrap_or(reg.relative),
        };
        if !(regularization.floor > 0.0) {
            return Err(ConfigError::invalid("engine.regularization_floor", "must be positive"));
        }
        if !(regularization.relative >= 0.0) {
            return Err(ConfigError::invalid("engine.regularization_relative", "must be non-negative"));
        }
        let detector_options = DetectorOptions {
            metric: MetricOptions {
                include_logdet: en.include_logdet.unwrap_or(true),
                regularization,
            },
            state_budget,
        };
        let workers = non_negative_int("engine.workers", en.workers.unwrap_or(0))?;
        let spec = ExperimentSpec {
            link,
            modulation,
            symbols_per_block: k,
            blocks,
            powers_dbm: powers,
            detectors,
            particles,
            schedule,
            pulse,
            detector_options,
            master_seed,
        };
        // remaining cross-field checks, e.g. the per-power loss ledger
        for (i, &p) in spec.powers_dbm.iter().enumerate() {
            spec.link_at(p)
                .validate()
                .map_err(|err| ConfigError::invalid(&format!("experiment.powers[{i}]"), err.to_string()))?;
        }
        spec.validate()
            .map_err(|err| ConfigError::invalid("experiment", err.to_string()))?;
        Ok(Resolved {
            spec,
            workers,
            output: PathBuf::from(en.output.as_deref().unwrap_or(DEFAULT_OUTPUT)),
        })
    }
}

/// Launch powers `from, from + step, …` up to and including `to`.
pub fn power_range(from: f64, to: f64, step: f64) -> std::result::Result<Vec<f64>, String> {
    if !(step > 0.0) || !from.is_finite() || !to.is_finite() {
        return Err(format!("invalid power range {from}..{to} step {step}"));
    }
    if to < from {
        return Err(format!("--to ({to}) is below --from ({from})"));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    // round to 1e-9 dB so that 0.1 steps print as written
    Ok((0..=n)
        .map(|i| ((from + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}
