//! Unit-suffixed quantities in config documents.
//!
//! Values are either bare numbers (already in base units) or strings such as
//! `"80Gb/s"`, `"128MiB"`, `"10Gflops"` or `"5ms"`. Lower-case `b` means
//! bits and upper-case `B` bytes. Decimal prefixes are powers of 1000, `Ki`,
//! `Mi`, ... powers of 1024.

use serde::{Deserialize, Serialize};

/// A raw quantity as it appears in a document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Quantity {
    fn from(v: f64) -> Self {
        Quantity::Float(v)
    }
}

impl From<u64> for Quantity {
    fn from(v: u64) -> Self {
        if v <= i64::MAX as u64 {
            Quantity::Int(v as i64)
        } else {
            Quantity::Float(v as f64)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    /// bytes per second
    Bandwidth,
    /// bytes
    Size,
    /// FLOP per second
    Speed,
    /// seconds
    Time,
}

impl Dimension {
    fn name(self) -> &'static str {
        match self {
            Dimension::Bandwidth => "bandwidth",
            Dimension::Size => "size",
            Dimension::Speed => "compute speed",
            Dimension::Time => "time",
        }
    }
}

impl Quantity {
    pub fn to_base(&self, dim: Dimension) -> Result<f64, String> {
        match self {
            Quantity::Int(v) => Ok(*v as f64),
            Quantity::Float(v) => Ok(*v),
            Quantity::Text(s) => parse_quantity(s, dim),
        }
    }
}

fn split_number(s: &str) -> Result<(f64, &str), String> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '_'
                || ((c == 'e' || c == 'E')
                    && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+'))
                || ((c == '-' || c == '+') && (i == 0 || matches!(s.as_bytes()[i - 1], b'e' | b'E'))))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let num: f64 = s[..end]
        .replace('_', "")
        .parse()
        .map_err(|_| format!("'{s}' does not start with a number"))?;
    Ok((num, s[end..].trim()))
}

/// Splits a unit into its multiplier prefix and the remainder.
fn split_prefix(unit: &str) -> (f64, &str) {
    const BINARY: [(&str, f64); 5] = [
        ("Ki", 1024.0),
        ("Mi", 1024.0 * 1024.0),
        ("Gi", 1024.0 * 1024.0 * 1024.0),
        ("Ti", 1024.0 * 1024.0 * 1024.0 * 1024.0),
        ("Pi", 1024.0 * 1024.0 * 1024.0 * 1024.0 * 1024.0),
    ];
    for (p, m) in BINARY {
        if let Some(rest) = unit.strip_prefix(p) {
            return (m, rest);
        }
    }
    const DECIMAL: [(char, f64); 6] =
        [('k', 1e3), ('K', 1e3), ('M', 1e6), ('G', 1e9), ('T', 1e12), ('P', 1e15)];
    let mut chars = unit.chars();
    if let Some(c) = chars.next() {
        for (p, m) in DECIMAL {
            let rest = chars.as_str();
            // Guard against reading the unit itself as a prefix, e.g. "B" or "b".
            if c == p && !rest.is_empty() {
                return (m, rest);
            }
        }
    }
    (1.0, unit)
}

pub fn parse_quantity(s: &str, dim: Dimension) -> Result<f64, String> {
    let (num, unit) = split_number(s)?;
    if unit.is_empty() {
        return Ok(num);
    }
    let bad = || format!("unrecognized {} unit in '{s}'", dim.name());
    let value = match dim {
        Dimension::Time => match unit {
            "s" | "sec" => num,
            "ms" => num * 1e-3,
            "us" | "µs" => num * 1e-6,
            "ns" => num * 1e-9,
            "min" => num * 60.0,
            "h" => num * 3600.0,
            _ => return Err(bad()),
        },
        Dimension::Size => {
            let (m, base) = split_prefix(unit);
            match base {
                "B" => num * m,
                "b" => num * m / 8.0,
                _ => return Err(bad()),
            }
        }
        Dimension::Bandwidth => {
            let (m, base) = split_prefix(unit);
            match base {
                "B/s" | "Bps" => num * m,
                "b/s" | "bps" | "bit/s" => num * m / 8.0,
                _ => return Err(bad()),
            }
        }
        Dimension::Speed => {
            let (m, base) = split_prefix(unit);
            match base.to_ascii_lowercase().as_str() {
                "flops" | "flop/s" | "f" => num * m,
                _ => return Err(bad()),
            }
        }
    };
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bits_and_bytes_are_distinguished_by_case() {
        assert_eq!(parse_quantity("80Gb/s", Dimension::Bandwidth).unwrap(), 10e9);
        assert_eq!(parse_quantity("80GB/s", Dimension::Bandwidth).unwrap(), 80e9);
        assert_eq!(parse_quantity("100 Gbps", Dimension::Bandwidth).unwrap(), 12.5e9);
        assert_eq!(parse_quantity("1e9", Dimension::Bandwidth).unwrap(), 1e9);
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_quantity("128MiB", Dimension::Size).unwrap(), 134_217_728.0);
        assert_eq!(parse_quantity("2GB", Dimension::Size).unwrap(), 2e9);
        assert_eq!(parse_quantity("10 PB", Dimension::Size).unwrap(), 1e16);
        assert_eq!(parse_quantity("4 KiB", Dimension::Size).unwrap(), 4096.0);
        assert_eq!(parse_quantity("12B", Dimension::Size).unwrap(), 12.0);
    }

    #[test]
    fn speeds_and_times() {
        assert_eq!(parse_quantity("10Gflops", Dimension::Speed).unwrap(), 1e10);
        assert_eq!(parse_quantity("2.5 GFLOP/s", Dimension::Speed).unwrap(), 2.5e9);
        assert_eq!(parse_quantity("5ms", Dimension::Time).unwrap(), 0.005);
        assert_eq!(parse_quantity("1.5e-3 s", Dimension::Time).unwrap(), 0.0015);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_quantity("fast", Dimension::Bandwidth).is_err());
        assert!(parse_quantity("10 furlongs", Dimension::Size).is_err());
        assert!(parse_quantity("10Gb", Dimension::Bandwidth).is_err());
    }
}
