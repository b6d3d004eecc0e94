//! Decision back ends: DBP slicing, symbol-by-symbol (SBS), decision-directed
//! (DD) and Viterbi (VA) detection over the particle cloud, plus an
//! exhaustive sequence oracle for small instances.
//!
//! Ties are broken toward the lowest constellation index everywhere; for
//! sequences this means the lexicographically smallest index sequence.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::LinkModel;
use crate::exec::Exec;
use crate::modem::{count_symbol_errors, Constellation, Symbol, SymbolSequence};
use crate::sdbp::{dbp_waveform, SymbolCloud};
use crate::signal::{matched_filter_sample, DualPolWaveform, PulseShape};
use crate::stats::{estimate_moments, MetricOptions, PsiTable, SlotMetric};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Dbp,
    Sbs,
    Dd,
    Va,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Dbp => "dbp",
            DetectorKind::Sbs => "sbs",
            DetectorKind::Dd => "dd",
            DetectorKind::Va => "va",
        }
    }

    /// Whether the detector consumes the particle cloud.
    pub fn uses_particles(self) -> bool {
        self != DetectorKind::Dbp
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dbp" => Ok(DetectorKind::Dbp),
            "sbs" => Ok(DetectorKind::Sbs),
            "dd" => Ok(DetectorKind::Dd),
            "va" => Ok(DetectorKind::Va),
            other => Err(Error::InvalidParameter(format!(
                "unknown detector {other:?} (expected dbp, sbs, dd or va)"
            ))),
        }
    }
}

/// A detector and its memory L (0 for DBP and SBS).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub memory: usize,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind, memory: usize) -> Result<Self> {
        if matches!(kind, DetectorKind::Dbp | DetectorKind::Sbs) && memory != 0 {
            return Err(Error::InvalidParameter(format!("{kind} takes no memory (got L = {memory})")));
        }
        Ok(DetectorSpec { kind, memory })
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DetectorKind::Dd | DetectorKind::Va => write!(f, "{}(L={})", self.kind, self.memory),
            _ => write!(f, "{}", self.kind),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorOptions {
    pub metric: MetricOptions,
    /// Largest trellis (|Ω|^L states) the VA accepts.
    pub state_budget: u128,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        DetectorOptions {
            metric: MetricOptions::default(),
            state_budget: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorReport {
    pub detector: DetectorKind,
    pub memory: usize,
    pub decided: SymbolSequence,
    pub decided_indices: Vec<usize>,
    /// Winning ψ per slot (SDBP detectors only).
    pub per_slot_metrics: Option<Vec<f64>>,
    pub regularization_events: usize,
    /// Digest of the particle cloud the decisions came from.
    pub cloud_digest: Option<u64>,
}

impl DetectorReport {
    pub fn errors(&self, truth: &SymbolSequence) -> Result<usize> {
        count_symbol_errors(truth, &self.decided)
    }
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// DBP: one noiseless particle, matched filter, hard decisions.
pub fn dbp_detect(
    r: &DualPolWaveform,
    model: &LinkModel,
    pulse: &PulseShape,
    timing_offset: usize,
    num_symbols: usize,
    constellation: &Constellation,
) -> Result<DetectorReport> {
    let w = dbp_waveform(r, model)?;
    let soft = matched_filter_sample(&w, pulse, timing_offset, num_symbols, model.config.launch_power_w())?;
    let (decided, decided_indices) = constellation.decide_sequence(&soft);
    Ok(DetectorReport {
        detector: DetectorKind::Dbp,
        memory: 0,
        decided,
        decided_indices,
        per_slot_metrics: None,
        regularization_events: 0,
        cloud_digest: None,
    })
}

/// Per-slot L = 0 decisions over `slots`: (index, winning ψ, events).
fn sbs_slots(
    cloud: &SymbolCloud,
    slots: std::ops::Range<usize>,
    constellation: &Constellation,
    opts: &MetricOptions,
    exec: Exec,
) -> Result<Vec<(usize, f64, usize)>> {
    let start = slots.start;
    exec.map_range(slots.len(), |i| {
        let sm = SlotMetric::new(&estimate_moments(cloud, start + i, 0)?, opts);
        let (idx, v) = argmin(&sm.row(constellation, &[]));
        Ok((idx, v, sm.regularization_events))
    })
    .into_iter()
    .collect()
}

fn report(
    detector: DetectorKind,
    memory: usize,
    indices: Vec<usize>,
    metrics: Vec<f64>,
    events: usize,
    cloud: &SymbolCloud,
    constellation: &Constellation,
) -> DetectorReport {
    DetectorReport {
        detector,
        memory,
        decided: constellation.sequence_from_indices(&indices),
        decided_indices: indices,
        per_slot_metrics: Some(metrics),
        regularization_events: events,
        cloud_digest: Some(cloud.digest()),
    }
}

/// SBS-SDBP: a 4D Gaussian fit per slot and the minimum Mahalanobis
/// (plus log-det) decision.
pub fn sbs_detect(
    cloud: &SymbolCloud,
    constellation: &Constellation,
    opts: &DetectorOptions,
    exec: Exec,
) -> Result<DetectorReport> {
    let rows = sbs_slots(cloud, 0..cloud.num_symbols(), constellation, &opts.metric, exec)?;
    let events = rows.iter().map(|r| r.2).sum();
    let (idx, metrics) = rows.into_iter().map(|r| (r.0, r.1)).unzip();
    Ok(report(DetectorKind::Sbs, 0, idx, metrics, events, cloud, constellation))
}

/// DD-SDBP: slots below L by SBS, then ŝ_k = argmin_s ψ_k(s, x̂_k) with the
/// state taken from earlier decisions.
pub fn dd_detect(
    cloud: &SymbolCloud,
    memory: usize,
    constellation: &Constellation,
    opts: &DetectorOptions,
    exec: Exec,
) -> Result<DetectorReport> {
    let k_total = cloud.num_symbols();
    check_block(k_total, memory)?;
    let head = sbs_slots(cloud, 0..memory, constellation, &opts.metric, exec)?;
    let slot_metrics = exec
        .map_range(k_total - memory, |i| {
            Ok(SlotMetric::new(&estimate_moments(cloud, memory + i, memory)?, &opts.metric))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut idx: Vec<usize> = head.iter().map(|r| r.0).collect();
    let mut metrics: Vec<f64> = head.iter().map(|r| r.1).collect();
    let mut events: usize = head.iter().map(|r| r.2).sum();
    for (i, sm) in slot_metrics.iter().enumerate() {
        let k = memory + i;
        let state: Vec<&Symbol> = (1..=memory).map(|j| constellation.point(idx[k - j])).collect();
        let (best, v) = argmin(&sm.row(constellation, &state));
        idx.push(best);
        metrics.push(v);
        events += sm.regularization_events;
    }
    Ok(report(DetectorKind::Dd, memory, idx, metrics, events, cloud, constellation))
}

fn check_block(k_total: usize, memory: usize) -> Result<()> {
    if k_total <= memory {
        return Err(Error::OutOfRange(format!(
            "block of {k_total} symbols is too short for memory {memory}"
        )));
    }
    Ok(())
}

fn state_count(m: usize, memory: usize, budget: u128) -> Result<usize> {
    let states = (m as u128).checked_pow(memory as u32).unwrap_or(u128::MAX);
    if states > budget {
        return Err(Error::StateBudgetExceeded { states, budget });
    }
    Ok(states as usize)
}

/// Incremental Viterbi recursion over states Ω^L with a free initial and
/// terminal state.
///
/// State index Σ_{j=1..L} i(s_{k−j}) · M^{j−1}; the transition on s_k is
/// `state' = s_k + M · (state mod M^{L−1})`. The state at the first trellis
/// slot (k = L) encodes the L preceding symbols, so every path covers the
/// whole block.
#[derive(Clone, Debug)]
pub struct Trellis {
    m: usize,
    memory: usize,
    n_states: usize,
    /// Survivor metrics, renormalized so the best is 0 after every step.
    metric: Vec<f64>,
    /// Sum of the renormalization offsets.
    offset: f64,
    prev: Vec<Vec<u32>>,
    branch: Vec<Vec<f64>>,
}

/// Winning trellis path.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiPath {
    /// Constellation indices for all K slots.
    pub indices: Vec<usize>,
    /// Σ_{k=L}^{K−1} ψ_k along the path.
    pub metric: f64,
    /// ψ_k along the path for k = L..K−1.
    pub branch_metrics: Vec<f64>,
}

impl Trellis {
    pub fn new(m: usize, memory: usize) -> Self {
        let n_states = m.pow(memory as u32);
        Trellis {
            m,
            memory,
            n_states,
            metric: vec![0.0; n_states],
            offset: 0.0,
            prev: Vec::new(),
            branch: Vec::new(),
        }
    }

    /// Slots consumed so far.
    pub fn steps(&self) -> usize {
        self.prev.len()
    }

    fn symbol_of(&self, state: usize) -> usize {
        state % self.m
    }

    /// Index sequence of the survivor ending in `state` after `steps` steps
    /// (slots 0 .. L + steps − 1).
    fn trace(&self, steps: usize, mut state: usize) -> Vec<usize> {
        let mut rev = Vec::with_capacity(self.memory + steps);
        for t in (0..steps).rev() {
            // with L = 0 the single state carries no symbol; the decision is
            // kept in the back pointer's high part
            if self.memory == 0 {
                let packed = self.prev[t][state] as usize;
                rev.push(packed);
                state = 0;
            } else {
                rev.push(self.symbol_of(state));
                state = self.prev[t][state] as usize;
            }
        }
        for _ in 0..self.memory {
            rev.push(state % self.m);
            state /= self.m;
        }
        rev.reverse();
        rev
    }

    /// Lexicographic comparison of two candidate survivors for the same new
    /// state: (predecessor, symbol) pairs at the current step.
    fn compare_candidates(&self, a: (usize, usize), b: (usize, usize)) -> Ordering {
        let steps = self.steps();
        let mut ta = self.trace(steps, a.0);
        let mut tb = self.trace(steps, b.0);
        ta.push(a.1);
        tb.push(b.1);
        ta.cmp(&tb)
    }

    /// Consumes one slot's table (`table[state * M + s]`).
    pub fn step(&mut self, table: &[f64]) {
        let (m, n) = (self.m, self.n_states);
        debug_assert_eq!(table.len(), n * m);
        let keep = if self.memory == 0 { 1 } else { n / m };
        let mut new_metric = vec![f64::INFINITY; n];
        let mut pick: Vec<(usize, usize)> = vec![(usize::MAX, 0); n];
        let mut branch = vec![0.0; n];
        for st in 0..n {
            let base = self.metric[st];
            let shifted = m * (st % keep);
            for s in 0..m {
                let ns = if self.memory == 0 { 0 } else { s + shifted };
                let b = table[st * m + s];
                let cand = base + b;
                let better = pick[ns].0 == usize::MAX
                    || match cand.partial_cmp(&new_metric[ns]) {
                        Some(Ordering::Less) => true,
                        Some(Ordering::Equal) => self.compare_candidates((st, s), pick[ns]) == Ordering::Less,
                        _ => false,
                    };
                if better {
                    new_metric[ns] = cand;
                    pick[ns] = (st, s);
                    branch[ns] = b;
                }
            }
        }
        let best = new_metric.iter().copied().fold(f64::INFINITY, f64::min);
        new_metric.iter_mut().for_each(|v| *v -= best);
        self.offset += best;
        self.metric = new_metric;
        // L = 0: store the symbol itself; otherwise the predecessor state
        let prev = pick
            .iter()
            .map(|&(st, s)| if self.memory == 0 { s as u32 } else { st as u32 })
            .collect();
        self.prev.push(prev);
        self.branch.push(branch);
    }

    /// Best terminal state (ties: lexicographically smallest sequence) and
    /// its traceback.
    pub fn finish(&self) -> ViterbiPath {
        let steps = self.steps();
        let mut best = 0;
        for st in 1..self.n_states {
            match self.metric[st].partial_cmp(&self.metric[best]) {
                Some(Ordering::Less) => best = st,
                Some(Ordering::Equal) if self.trace(steps, st) < self.trace(steps, best) => best = st,
                _ => {}
            }
        }
        let indices = self.trace(steps, best);
        // branch values along the path
        let mut branch_metrics = vec![0.0; steps];
        let mut state = best;
        for t in (0..steps).rev() {
            branch_metrics[t] = self.branch[t][state];
            state = if self.memory == 0 { 0 } else { self.prev[t][state] as usize };
        }
        ViterbiPath {
            indices,
            metric: self.offset + self.metric[best],
            branch_metrics,
        }
    }
}

/// Viterbi over a precomputed table.
pub fn viterbi(table: &PsiTable) -> ViterbiPath {
    let mut t = Trellis::new(table.cardinality, table.memory);
    for slot in &table.slots {
        t.step(slot);
    }
    t.finish()
}

/// Slots per batch of ψ tables in [`va_detect`]; bounds memory to about
/// `TABLE_BUDGET` values regardless of K.
const TABLE_BUDGET: usize = 1 << 22;

/// Raw trellis decision over the cloud (no SBS substitution of the first L
/// slots), with the tables built batch by batch.
pub fn va_path(
    cloud: &SymbolCloud,
    memory: usize,
    constellation: &Constellation,
    opts: &DetectorOptions,
    exec: Exec,
) -> Result<(ViterbiPath, usize)> {
    let k_total = cloud.num_symbols();
    check_block(k_total, memory)?;
    let m = constellation.cardinality();
    let n_states = state_count(m, memory, opts.state_budget)?;
    let per_slot = n_states * m;
    let batch = (TABLE_BUDGET / per_slot).max(1);
    let mut trellis = Trellis::new(m, memory);
    let mut events = 0;
    let mut k = memory;
    while k < k_total {
        let end = (k + batch).min(k_total);
        let tables = exec
            .map_range(end - k, |i| {
                let sm = SlotMetric::new(&estimate_moments(cloud, k + i, memory)?, &opts.metric);
                Ok((sm.table(constellation), sm.regularization_events))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (table, ev) in &tables {
            trellis.step(table);
            events += ev;
        }
        k = end;
    }
    Ok((trellis.finish(), events))
}

/// VA-SDBP: Viterbi over Ω^L with ψ_k branch metrics for slots L..K−1;
/// slots 0..L−1 are decided by SBS.
pub fn va_detect(
    cloud: &SymbolCloud,
    memory: usize,
    constellation: &Constellation,
    opts: &DetectorOptions,
    exec: Exec,
) -> Result<DetectorReport> {
    let (path, mut events) = va_path(cloud, memory, constellation, opts, exec)?;
    let head = sbs_slots(cloud, 0..memory, constellation, &opts.metric, exec)?;
    let mut idx = path.indices;
    let mut metrics: Vec<f64> = head.iter().map(|r| r.1).collect();
    for (k, h) in head.iter().enumerate() {
        idx[k] = h.0;
        events += h.2;
    }
    metrics.extend(path.branch_metrics);
    Ok(report(DetectorKind::Va, memory, idx, metrics, events, cloud, constellation))
}

/// Runs one SDBP detector on a cloud.
pub fn detect(
    spec: DetectorSpec,
    cloud: &SymbolCloud,
    constellation: &Constellation,
    opts: &DetectorOptions,
    exec: Exec,
) -> Result<DetectorReport> {
    match spec.kind {
        DetectorKind::Sbs => sbs_detect(cloud, constellation, opts, exec),
        DetectorKind::Dd => dd_detect(cloud, spec.memory, constellation, opts, exec),
        DetectorKind::Va => va_detect(cloud, spec.memory, constellation, opts, exec),
        DetectorKind::Dbp => Err(Error::InvalidParameter(
            "DBP works on the received waveform, not on a particle cloud".into(),
        )),
    }
}

/// Largest |Ω|^K the exhaustive oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

/// Exhaustive minimization of Σ_{k=L}^{K−1} ψ_k over all index sequences.
/// Sequences are visited in lexicographic order and only a strictly smaller
/// total replaces the incumbent, so ties go to the smallest sequence.
pub fn brute_force_map(table: &PsiTable) -> Result<(Vec<usize>, f64)> {
    let m = table.cardinality;
    let k_total = table.num_symbols();
    let sequences = (m as u128).checked_pow(k_total as u32).unwrap_or(u128::MAX);
    if sequences > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge {
            sequences,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let state_of = |seq: &[usize], k: usize| -> usize {
        (1..=table.memory).rev().fold(0, |acc, j| acc * m + seq[k - j])
    };
    let mut seq = vec![0usize; k_total];
    let mut best = (seq.clone(), f64::INFINITY);
    loop {
        let total: f64 = (table.first_slot..k_total)
            .map(|k| table.get(k, state_of(&seq, k), seq[k]))
            .sum();
        if total < best.1 {
            best = (seq.clone(), total);
        }
        // odometer with slot 0 most significant
        let mut pos = k_total;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            seq[pos] += 1;
            if seq[pos] < m {
                break;
            }
            seq[pos] = 0;
        }
    }
}
