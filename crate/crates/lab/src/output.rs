//! CSV helpers. Numbers are written with 17 significant digits so they round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// Joins a header and rows into CSV text.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for row in rows {
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 123456789.12345679, f64::MIN_POSITIVE] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
        assert_eq!(fmt_opt(None), "");
    }
}
