//! Dual-polarization constellations, random symbol generation, slicing and
//! symbol error counting.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A 4D real symbol `[Re x, Im x, Re y, Im y]`.
pub type Symbol = [f64; 4];

/// Squared Euclidean distance between two 4D symbols.
pub fn distance_sqr(a: &Symbol, b: &Symbol) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// Ordered, non-empty sequence of finite 4D symbols.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSequence(Vec<Symbol>);

impl SymbolSequence {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParameter("symbol sequence must be non-empty".into()));
        }
        if symbols.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symbol sequence".into()));
        }
        Ok(SymbolSequence(symbols))
    }

    pub(crate) fn from_vec_unchecked(symbols: Vec<Symbol>) -> Self {
        SymbolSequence(symbols)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Symbol> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Symbol] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Symbol> {
        self.0
    }
}

impl std::ops::Index<usize> for SymbolSequence {
    type Output = Symbol;
    fn index(&self, i: usize) -> &Symbol {
        &self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        })
    }
}

impl FromStr for Modulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" => Ok(Modulation::Qam16),
            other => Err(Error::InvalidParameter(format!(
                "unknown constellation {other:?} (expected \"qpsk\" or \"16qam\")"
            ))),
        }
    }
}

/// The 4D alphabet Ω: the Cartesian product of a per-polarization complex
/// alphabet with itself, indexed lexicographically as `ix * M + iy`.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation {
    modulation: Modulation,
    per_pol: Vec<Complex64>,
    points: Vec<Symbol>,
}

impl Constellation {
    pub fn new(modulation: Modulation) -> Self {
        let levels: Vec<f64> = match modulation {
            Modulation::Qpsk => vec![-1.0, 1.0],
            Modulation::Qam16 => vec![-3.0, -1.0, 1.0, 3.0],
        };
        let mut per_pol: Vec<Complex64> = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| Complex64::new(re, im)))
            .collect();
        let energy = per_pol.iter().map(|c| c.norm_sqr()).sum::<f64>() / per_pol.len() as f64;
        let norm = energy.sqrt();
        per_pol.iter_mut().for_each(|c| *c /= norm);
        let points = per_pol
            .iter()
            .flat_map(|x| per_pol.iter().map(move |y| [x.re, x.im, y.re, y.im]))
            .collect();
        Constellation {
            modulation,
            per_pol,
            points,
        }
    }

    pub fn qpsk() -> Self {
        Self::new(Modulation::Qpsk)
    }

    pub fn qam16() -> Self {
        Self::new(Modulation::Qam16)
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn per_pol_points(&self) -> &[Complex64] {
        &self.per_pol
    }

    pub fn points(&self) -> &[Symbol] {
        &self.points
    }

    /// |Ω|.
    pub fn cardinality(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, index: usize) -> &Symbol {
        &self.points[index]
    }

    /// I.i.d. uniform draws from Ω.
    pub fn random_symbols<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> SymbolSequence {
        let (symbols, _) = self.random_indexed(k, rng);
        symbols
    }

    /// Like [`Constellation::random_symbols`] but also returns the indices.
    pub fn random_indexed<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> (SymbolSequence, Vec<usize>) {
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..self.cardinality())).collect();
        let symbols = idx.iter().map(|&i| self.points[i]).collect();
        (SymbolSequence(symbols), idx)
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn hard_decide(&self, p: &Symbol) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, q) in self.points.iter().enumerate() {
            let d = distance_sqr(p, q);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Slices every symbol; returns the decided sequence and indices.
    pub fn decide_sequence(&self, seq: &SymbolSequence) -> (SymbolSequence, Vec<usize>) {
        let idx: Vec<usize> = seq.iter().map(|s| self.hard_decide(s)).collect();
        (self.sequence_from_indices(&idx), idx)
    }

    pub fn sequence_from_indices(&self, idx: &[usize]) -> SymbolSequence {
        SymbolSequence(idx.iter().map(|&i| self.points[i]).collect())
    }
}

/// Number of 4D slots where the two sequences differ.
pub fn count_symbol_errors(truth: &SymbolSequence, decided: &SymbolSequence) -> Result<usize> {
    if truth.len() != decided.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: decided.len(),
        });
    }
    Ok(truth.iter().zip(decided.iter()).filter(|(a, b)| a != b).count())
}

/// Symbol error rate over joint 4D symbols. A per-polarization count would
/// differ: one 4D error may hold one or two polarization errors.
pub fn ser(truth: &SymbolSequence, decided: &SymbolSequence) -> Result<f64> {
    Ok(count_symbol_errors(truth, decided)? as f64 / truth.len() as f64)
}
