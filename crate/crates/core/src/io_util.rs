//! Shared file helpers and the fixed numeric text format.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{KbcError, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| KbcError::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| KbcError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| KbcError::io(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| KbcError::io(path, e))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| KbcError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Formats a float with 9 significant digits, `%.9g` style.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Escapes `\`, tab and newline for single-line TSV text fields.
pub fn escape_text(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_text(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some(other) => return Err(format!("invalid escape `\\{other}`")),
            None => return Err("dangling `\\` at end of field".to_string()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g9_matches_printf() {
        assert_eq!(fmt_g9(1.0), "1");
        assert_eq!(fmt_g9(0.5), "0.5");
        assert_eq!(fmt_g9(-2.25), "-2.25");
        assert_eq!(fmt_g9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_g9(123456789.0), "123456789");
        assert_eq!(fmt_g9(1234567890.0), "1.23456789e+09");
        assert_eq!(fmt_g9(0.0001), "0.0001");
        assert_eq!(fmt_g9(0.00001234), "1.234e-05");
        assert_eq!(fmt_g9(std::f64::consts::PI), "3.14159265");
    }

    #[test]
    fn g9_round_trips_to_nine_digits() {
        for &x in &[std::f64::consts::PI, -1e-7, 6.02214076e23, 0.1] {
            let back: f64 = fmt_g9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8);
        }
    }

    #[test]
    fn escape_round_trip() {
        let s = "a\tb\nc\\d";
        assert_eq!(escape_text(s), "a\\tb\\nc\\\\d");
        assert_eq!(unescape_text(&escape_text(s)).unwrap(), s);
        assert!(unescape_text("bad\\q").is_err());
    }
}
