use std::io::IsTerminal;

use num_rational::Ratio;
use serde::Serialize;
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// One document per invocation.
#[derive(Debug, Serialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub command: Vec<String>,
    pub config: Value,
    pub results: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit: Option<Value>,
}

/// An exact rational with a 6-significant-figure rendering.
#[derive(Debug, Clone, Serialize)]
pub struct Exact {
    pub exact: String,
    pub decimal: String,
}

impl Exact {
    pub fn new(r: Ratio<u64>) -> Self {
        Exact {
            exact: r.to_string(),
            decimal: sig6(*r.numer() as f64 / *r.denom() as f64),
        }
    }
}

pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..=9).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub fn millions(p: u64) -> String {
    format!("{:.2}M", p as f64 / 1e6)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
}

pub fn use_color() -> bool {
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stdout().is_terminal()
}

pub fn verdict_word(ok: bool) -> String {
    let word = if ok { "PASS" } else { "FAIL" };
    if use_color() {
        let code = if ok { 32 } else { 31 };
        format!("\x1b[{code}m{word}\x1b[0m")
    } else {
        word.to_string()
    }
}

/// `key  value` lines with the keys padded to one width.
pub fn pairs(rows: &[(String, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter()
        .map(|(k, v)| format!("{k:<w$}  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let n = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, cell) in r.iter().enumerate().take(n) {
            width[i] = width[i].max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<w$}", w = width[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(header.to_vec())];
    out.push(line(width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for r in rows {
        out.push(line(r.iter().map(String::as_str).collect()));
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_figures() {
        assert_eq!(sig6(137.0 / 2304.0), "0.0594618");
        assert_eq!(sig6(1.0 / 9.0), "0.111111");
        assert_eq!(sig6(11_200_000.0), "11200000");
        assert_eq!(sig6(2.5), "2.50000");
        assert_eq!(sig6(1e-7), "1.00000e-7");
    }

    #[test]
    fn exact_keeps_the_fraction() {
        let e = Exact::new(Ratio::new(2192, 36864));
        assert_eq!(e.exact, "137/2304");
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n---  --\nxyz  1");
    }
}
