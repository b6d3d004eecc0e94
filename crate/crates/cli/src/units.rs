//! Strict parsing of unit-suffixed quantities such as `"80 km"` or
//! `"16 ps/nm/km"`.
//!
//! Every physical value in a config file is a string `"<number> <unit>"`
//! with a unit from a short, case-sensitive list. Bare numbers are
//! rejected: the classic ps/nm/km bookkeeping mistakes in the step-size
//! formula come from silently assumed units.

use std::fmt;

/// Physical dimension of a config quantity and its canonical unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    /// Canonical km.
    Length,
    /// Canonical Bd.
    SymbolRate,
    /// Canonical ps/nm/km.
    Dispersion,
    /// Canonical 1/W/km.
    Nonlinearity,
    /// Canonical dB/km.
    Attenuation,
    /// Canonical nm.
    Wavelength,
    /// Canonical dBm.
    Power,
    /// Canonical dB.
    Ratio,
}

impl Dimension {
    pub fn canonical_unit(self) -> &'static str {
        self.units()[0].0
    }

    /// Accepted units with their conversion to the canonical unit.
    fn units(self) -> &'static [(&'static str, Conversion)] {
        use Conversion::*;
        match self {
            Dimension::Length => &[("km", Scale(1.0)), ("m", Scale(1e-3))],
            Dimension::SymbolRate => &[("Bd", Scale(1.0)), ("kBd", Scale(1e3)), ("MBd", Scale(1e6)), ("GBd", Scale(1e9))],
            Dimension::Dispersion => &[("ps/nm/km", Scale(1.0))],
            Dimension::Nonlinearity => &[("1/W/km", Scale(1.0))],
            Dimension::Attenuation => &[("dB/km", Scale(1.0))],
            Dimension::Wavelength => &[("nm", Scale(1.0)), ("um", Scale(1e3))],
            Dimension::Power => &[("dBm", Scale(1.0)), ("mW", LogOf(1.0)), ("W", LogOf(1e3))],
            Dimension::Ratio => &[("dB", Scale(1.0))],
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Conversion {
    /// canonical = value · factor
    Scale(f64),
    /// canonical = 10·log10(value · factor), for linear powers into dBm
    LogOf(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitError(pub String);

impl fmt::Display for UnitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UnitError {}

/// Parses `"<number> <unit>"` into the canonical unit of `dim`.
pub fn parse(text: &str, dim: Dimension) -> Result<f64, UnitError> {
    let accepted = || {
        dim.units()
            .iter()
            .map(|(u, _)| *u)
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut parts = text.split_whitespace();
    let (Some(number), Some(unit), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(UnitError(format!(
            "expected \"<number> <unit>\" with unit one of {}, got {text:?}",
            accepted()
        )));
    };
    let value: f64 = number
        .parse()
        .map_err(|_| UnitError(format!("{number:?} is not a number")))?;
    if !value.is_finite() {
        return Err(UnitError(format!("{number:?} is not finite")));
    }
    let Some((_, conv)) = dim.units().iter().find(|(u, _)| *u == unit) else {
        return Err(UnitError(format!("unknown unit {unit:?}, expected one of {}", accepted())));
    };
    match *conv {
        Conversion::Scale(f) => Ok(value * f),
        Conversion::LogOf(f) => {
            if value <= 0.0 {
                return Err(UnitError(format!("a linear power must be positive, got {value} {unit}")));
            }
            Ok(10.0 * (value * f).log10())
        }
    }
}

/// Formats a canonical value so that [`parse`] returns it bit-for-bit.
pub fn format(value: f64, dim: Dimension) -> String {
    format!("{value} {}", dim.canonical_unit())
}
