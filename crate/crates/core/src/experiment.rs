//! Seeded Monte Carlo harness: blocks × launch powers × detectors, SER with
//! Wilson confidence intervals, DBP-relative gains and result persistence.
//!
//! Every (power, block) task derives its own streams from the master seed,
//! so results do not depend on execution order, worker count or on how a
//! resumed sweep was split across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::channel::{link_model_for_frame, simulate_link, LinkConfig, LinkModel};
use crate::detectors::{dbp_detect, detect, DetectorKind, DetectorOptions, DetectorSpec};
use crate::exec::Exec;
use crate::modem::{Constellation, Modulation};
use crate::rng::{self, derive_path, Role};
use crate::sdbp::{symbol_cloud, Schedule, SdbpConfig};
use crate::signal::{make_rrc_pulse, PulseShape};
use crate::{Error, Result};

/// Root-raised-cosine transmit/receive filter settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub rolloff: f64,
    pub span_symbols: usize,
    pub samples_per_symbol: usize,
}

impl Default for PulseParams {
    fn default() -> Self {
        PulseParams {
            rolloff: 0.25,
            span_symbols: 16,
            samples_per_symbol: 4,
        }
    }
}

impl PulseParams {
    pub fn build(&self) -> Result<PulseShape> {
        make_rrc_pulse(self.rolloff, self.span_symbols, self.samples_per_symbol)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Link template; its launch power is replaced by each sweep point.
    pub link: LinkConfig,
    pub modulation: Modulation,
    /// Symbols per block, K.
    pub symbols_per_block: usize,
    pub blocks: usize,
    pub powers_dbm: Vec<f64>,
    pub detectors: Vec<DetectorSpec>,
    /// Particles per cloud, N_p.
    pub particles: usize,
    pub schedule: Schedule,
    pub pulse: PulseParams,
    pub detector_options: DetectorOptions,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks < 1 {
            return Err(Error::InvalidParameter("blocks must be at least 1".into()));
        }
        if self.symbols_per_block < 1 {
            return Err(Error::InvalidParameter("symbols per block must be at least 1".into()));
        }
        if self.powers_dbm.is_empty() {
            return Err(Error::InvalidParameter("power sweep is empty".into()));
        }
        if self.powers_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("launch powers must be finite".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::InvalidParameter("no detectors selected".into()));
        }
        let unique: BTreeSet<_> = self.detectors.iter().collect();
        if unique.len() != self.detectors.len() {
            return Err(Error::InvalidParameter("duplicate detector entries".into()));
        }
        for d in &self.detectors {
            DetectorSpec::new(d.kind, d.memory)?;
            if d.memory >= self.symbols_per_block {
                return Err(Error::InvalidParameter(format!(
                    "{d} needs more than {} symbols per block",
                    self.symbols_per_block
                )));
            }
        }
        if self.uses_particles() && self.particles < 2 {
            return Err(Error::InsufficientParticles(self.particles));
        }
        self.pulse.build()?;
        for &p in &self.powers_dbm {
            self.link_at(p).validate()?;
        }
        Ok(())
    }

    pub fn uses_particles(&self) -> bool {
        self.detectors.iter().any(|d| d.kind.uses_particles())
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::new(self.modulation)
    }

    /// Link template at launch power `power_dbm`.
    pub fn link_at(&self, power_dbm: f64) -> LinkConfig {
        LinkConfig {
            launch_power_dbm: power_dbm,
            ..self.link.clone()
        }
    }

    /// Seed for one role inside one (power, block) task.
    pub fn task_seed(&self, power_dbm: f64, block: usize, role: Role) -> u64 {
        derive_path(self.master_seed, &[power_dbm.to_bits(), block as u64, role as u64])
    }
}

/// Error counts of one detector in one block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorCount {
    pub detector: DetectorSpec,
    pub errors: usize,
    pub symbols: usize,
    pub regularization_events: usize,
    pub cloud_digest: Option<u64>,
}

/// Everything one (power, block) task produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub power_dbm: f64,
    pub block: usize,
    pub counts: Vec<DetectorCount>,
    pub aliasing_warning: bool,
}

/// Prepared per-power state shared by all blocks at that power.
struct PowerContext {
    model: LinkModel,
    pulse: PulseShape,
}

fn prepare(spec: &ExperimentSpec, power_dbm: f64) -> Result<PowerContext> {
    let pulse = spec.pulse.build()?;
    let model = link_model_for_frame(&spec.link_at(power_dbm), &pulse, spec.symbols_per_block)?;
    Ok(PowerContext { model, pulse })
}

fn run_prepared(
    spec: &ExperimentSpec,
    ctx: &PowerContext,
    power_dbm: f64,
    block: usize,
    exec: Exec,
) -> Result<BlockOutcome> {
    let constellation = spec.constellation();
    let k = spec.symbols_per_block;
    let symbols = constellation.random_symbols(k, &mut rng::stream(spec.task_seed(power_dbm, block, Role::Symbols), 0));
    let out = simulate_link(
        &symbols,
        &ctx.model,
        &ctx.pulse,
        &mut rng::stream(spec.task_seed(power_dbm, block, Role::Channel), 0),
    )?;
    let timing = out.truth.timing_offset;
    // one cloud per (power, block), shared by every SDBP detector
    let cloud = if spec.uses_particles() {
        let cfg = SdbpConfig {
            particles: spec.particles,
            noise: true,
            schedule: spec.schedule,
            seed: spec.task_seed(power_dbm, block, Role::Particles),
        };
        Some(symbol_cloud(&out.received, &ctx.model, &ctx.pulse, timing, k, &cfg, exec)?)
    } else {
        None
    };
    let mut counts = Vec::with_capacity(spec.detectors.len());
    for &d in &spec.detectors {
        let report = match (d.kind, &cloud) {
            (DetectorKind::Dbp, _) => dbp_detect(&out.received, &ctx.model, &ctx.pulse, timing, k, &constellation)?,
            (_, Some(cloud)) => detect(d, cloud, &constellation, &spec.detector_options, exec)?,
            (_, None) => unreachable!("particle detectors imply a cloud"),
        };
        counts.push(DetectorCount {
            detector: d,
            errors: report.errors(&symbols)?,
            symbols: k,
            regularization_events: report.regularization_events,
            cloud_digest: report.cloud_digest,
        });
    }
    Ok(BlockOutcome {
        power_dbm,
        block,
        counts,
        aliasing_warning: out.truth.aliasing_warning(),
    })
}

/// Runs one Monte Carlo block at one launch power for every detector of the
/// spec.
pub fn run_block(spec: &ExperimentSpec, power_dbm: f64, block: usize, exec: Exec) -> Result<BlockOutcome> {
    spec.validate()?;
    let ctx = prepare(spec, power_dbm)?;
    run_prepared(spec, &ctx, power_dbm, block, exec)
}

/// Wilson score interval at 95 % confidence.
pub fn wilson_interval(errors: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the bounds are exactly 0 and 1 at the extremes; avoid rounding residue
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Counts below this are flagged as statistically weak.
pub const LOW_COUNT: usize = 10;

/// Aggregate for one (detector, power) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub detector: DetectorSpec,
    pub power_dbm: f64,
    pub symbols: usize,
    pub errors: usize,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub low_count: bool,
    pub regularization_events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestPower {
    pub detector: DetectorSpec,
    pub power_dbm: f64,
    pub ser: f64,
}

/// G_X = SER_DBP / SER_X at each detector's best power; `None` when DBP is
/// not in the sweep or SER_X is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gain {
    pub detector: DetectorSpec,
    pub gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Sorted by detector, then power.
    pub cells: Vec<CellResult>,
    pub best: Vec<BestPower>,
    pub gains: Vec<Gain>,
    /// Powers at which some block reported spectral content near Nyquist.
    pub aliasing_warnings: Vec<f64>,
}

fn power_key(p: f64) -> i64 {
    // total order on finite floats that matches numeric order
    let b = p.to_bits() as i64;
    if b < 0 {
        i64::MIN - b
    } else {
        b
    }
}

impl SweepResult {
    /// Aggregates block outcomes; order of `outcomes` does not matter.
    pub fn from_outcomes(outcomes: &[BlockOutcome]) -> Self {
        let mut acc: BTreeMap<(DetectorSpec, i64), (f64, usize, usize, usize)> = BTreeMap::new();
        let mut aliasing = BTreeMap::new();
        for o in outcomes {
            if o.aliasing_warning {
                aliasing.insert(power_key(o.power_dbm), o.power_dbm);
            }
            for c in &o.counts {
                let e = acc.entry((c.detector, power_key(o.power_dbm))).or_insert((o.power_dbm, 0, 0, 0));
                e.1 += c.errors;
                e.2 += c.symbols;
                e.3 += c.regularization_events;
            }
        }
        let cells: Vec<CellResult> = acc
            .into_iter()
            .map(|((detector, _), (power_dbm, errors, symbols, events))| {
                let (ci_lo, ci_hi) = wilson_interval(errors, symbols);
                CellResult {
                    detector,
                    power_dbm,
                    symbols,
                    errors,
                    ser: if symbols > 0 { errors as f64 / symbols as f64 } else { 0.0 },
                    ci_lo,
                    ci_hi,
                    low_count: errors < LOW_COUNT,
                    regularization_events: events,
                }
            })
            .collect();
        // cells are sorted by power within a detector, so a strict < keeps
        // the lowest power on ties
        let mut best: Vec<BestPower> = Vec::new();
        for c in &cells {
            match best.last_mut() {
                Some(b) if b.detector == c.detector => {
                    if c.ser < b.ser {
                        b.power_dbm = c.power_dbm;
                        b.ser = c.ser;
                    }
                }
                _ => best.push(BestPower {
                    detector: c.detector,
                    power_dbm: c.power_dbm,
                    ser: c.ser,
                }),
            }
        }
        let dbp = best.iter().find(|b| b.detector.kind == DetectorKind::Dbp).map(|b| b.ser);
        let gains = best
            .iter()
            .map(|b| Gain {
                detector: b.detector,
                gain: match dbp {
                    Some(d) if b.ser > 0.0 => Some(d / b.ser),
                    _ => None,
                },
            })
            .collect();
        SweepResult {
            cells,
            best,
            gains,
            aliasing_warnings: aliasing.into_values().collect(),
        }
    }

    pub fn cell(&self, detector: DetectorSpec, power_dbm: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.detector == detector && c.power_dbm == power_dbm)
    }

    /// CSV with one row per (detector, power), in canonical order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["detector", "L", "power_dBm", "symbols", "errors", "ser", "ci_lo", "ci_hi"])?;
        for c in &self.cells {
            w.write_record([
                c.detector.kind.to_string(),
                c.detector.memory.to_string(),
                c.power_dbm.to_string(),
                c.symbols.to_string(),
                c.errors.to_string(),
                c.ser.to_string(),
                c.ci_lo.to_string(),
                c.ci_hi.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One whitespace-separated `power ser ci_lo ci_hi` file per detector.
    pub fn write_plot_data(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = BTreeMap::new();
        for c in &self.cells {
            let name = format!("ser_{}_L{}.dat", c.detector.kind, c.detector.memory);
            let text = files
                .entry(name)
                .or_insert_with(|| format!("# {} power_dBm ser ci_lo ci_hi\n", c.detector));
            text.push_str(&format!("{} {} {} {}\n", c.power_dbm, c.ser, c.ci_lo, c.ci_hi));
        }
        let mut paths = Vec::new();
        for (name, text) in files {
            let path = dir.join(name);
            fs::write(&path, text)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Structured summary written next to the CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub spec: ExperimentSpec,
    pub result: SweepResult,
}

/// Append-only JSON-lines log of finished blocks that lets an interrupted
/// sweep resume. The first line records the spec; a log written for a
/// different spec is rejected.
pub struct ProgressLog {
    file: Mutex<File>,
    done: Vec<BlockOutcome>,
}

impl ProgressLog {
    pub fn open(path: &Path, spec: &ExperimentSpec) -> Result<Self> {
        let header = serde_json::to_string(spec)?;
        let mut done = Vec::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            let mut lines = reader.lines();
            match lines.next().transpose()? {
                Some(first) if first == header => {}
                Some(_) => {
                    return Err(Error::InvalidParameter(format!(
                        "{} was written for a different experiment; remove it or pick another output directory",
                        path.display()
                    )))
                }
                None => {}
            }
            for line in lines {
                let line = line?;
                // a torn final line from an interrupted run is skipped
                if let Ok(o) = serde_json::from_str::<BlockOutcome>(&line) {
                    done.push(o);
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if file.metadata()?.len() == 0 {
            writeln!(file, "{header}")?;
        }
        Ok(ProgressLog {
            file: Mutex::new(file),
            done,
        })
    }

    pub fn completed(&self) -> &[BlockOutcome] {
        &self.done
    }

    fn record(&self, outcome: &BlockOutcome) -> Result<()> {
        let line = serde_json::to_string(outcome)?;
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(f, "{line}")?;
        f.flush()?;
        Ok(())
    }
}

/// Full sweep over powers × blocks.
pub fn sweep(spec: &ExperimentSpec, exec: Exec) -> Result<SweepResult> {
    sweep_with_progress(spec, exec, None)
}

/// Sweep that skips blocks already present in `log` and records new ones.
pub fn sweep_with_progress(spec: &ExperimentSpec, exec: Exec, log: Option<&ProgressLog>) -> Result<SweepResult> {
    spec.validate()?;
    let mut outcomes: Vec<BlockOutcome> = Vec::new();
    let mut have = BTreeSet::new();
    if let Some(log) = log {
        for o in log.completed() {
            if spec.powers_dbm.iter().any(|&p| p == o.power_dbm) && o.block < spec.blocks && have.insert((power_key(o.power_dbm), o.block)) {
                outcomes.push(o.clone());
            }
        }
    }
    let contexts = spec
        .powers_dbm
        .iter()
        .map(|&p| prepare(spec, p))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..spec.powers_dbm.len())
        .flat_map(|pi| (0..spec.blocks).map(move |b| (pi, b)))
        .filter(|&(pi, b)| !have.contains(&(power_key(spec.powers_dbm[pi]), b)))
        .collect();
    let results = exec.map(&tasks, |&(pi, block)| {
        let power = spec.powers_dbm[pi];
        let r = run_prepared(spec, &contexts[pi], power, block, exec).map_err(|e| Error::BlockFailed {
            power_dbm: power,
            block,
            message: e.to_string(),
        });
        if let (Ok(o), Some(log)) = (&r, log) {
            log.record(o)?;
        }
        r
    });
    for r in results {
        outcomes.push(r?);
    }
    Ok(SweepResult::from_outcomes(&outcomes))
}

/// Writes `results.csv`, `summary.json` and the plot files into `dir`.
pub fn write_artifacts(spec: &ExperimentSpec, result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    result.write_csv(File::create(dir.join("results.csv"))?)?;
    let summary = Summary {
        spec: spec.clone(),
        result: result.clone(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    result.write_plot_data(&dir.join("plots"))?;
    Ok(())
}
