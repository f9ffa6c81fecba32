//! Scalar grammar and output plumbing shared by the subcommands.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use sha2::{Digest, Sha256};

use greedy_beta::{Backend, Scalar};

/// Decimal places kept when forcing scalars onto the float backend.
const FLOAT_DIGITS: usize = 50;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unparsable scalars: exit 2.
    Usage(String),
    /// Well-formed request that fails in the domain: exit 1.
    Domain(String),
}

impl From<greedy_beta::Error> for CliError {
    fn from(e: greedy_beta::Error) -> Self {
        CliError::Domain(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in {s:?}"))?;
        if d == BigInt::from(0) {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        let negative = int_part.trim_start().starts_with('-');
        let int_part = int_part.trim();
        let digits = frac_part.trim();
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(format!("bad decimal {s:?}"));
        }
        let int_digits = int_part.trim_start_matches('-');
        if !int_digits.chars().all(|c| c.is_ascii_digit()) && !int_digits.is_empty() {
            return Err(format!("bad decimal {s:?}"));
        }
        let scale = BigInt::from(10u32).pow(digits.len() as u32);
        let combined = format!(
            "{}{}",
            if int_digits.is_empty() { "0" } else { int_digits },
            digits
        );
        let unsigned: BigInt = combined.parse().map_err(|_| format!("bad decimal {s:?}"))?;
        let mut v = BigRational::new(unsigned, scale);
        if negative {
            v = -v;
        }
        return Ok(v);
    }
    let n: BigInt = s.parse().map_err(|_| format!("bad integer {s:?}"))?;
    Ok(BigRational::from_integer(n))
}

/// Scalar grammar: a named constant (`golden`, `one_plus_sqrt2`,
/// `sqrt<d>`), a rational / decimal literal, or an exact triple `p:q:d`
/// meaning `p + q·√d`.
pub fn parse_scalar(s: &str) -> Result<Scalar, String> {
    let s = s.trim();
    match s {
        "golden" => return Ok(Scalar::golden()),
        "one_plus_sqrt2" => {
            return Ok(&Scalar::one() + &Scalar::sqrt_of(2).unwrap());
        }
        _ => {}
    }
    if let Some(d) = s.strip_prefix("sqrt") {
        if let Ok(d) = d.parse::<i64>() {
            return Scalar::sqrt_of(d).map_err(|e| e.to_string());
        }
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => Ok(Scalar::from_big_rational(parse_rational(parts[0])?)),
        3 => {
            let p = parse_rational(parts[0])?;
            let q = parse_rational(parts[1])?;
            let d: i64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| format!("bad radicand in {s:?}"))?;
            Scalar::quadratic(p, q, d).map_err(|e| e.to_string())
        }
        _ => Err(format!("scalar {s:?} is neither a literal nor p:q:d")),
    }
}

pub fn parse_backend(s: &str) -> Result<Backend, String> {
    match s {
        "exact" => Ok(Backend::Exact),
        "float" => Ok(Backend::Float),
        other => Err(format!("backend must be exact or float, got {other:?}")),
    }
}

/// Applies the requested backend to a parsed scalar.
pub fn with_backend(x: Scalar, backend: Backend) -> Scalar {
    match backend {
        Backend::Exact => x,
        Backend::Float => x.to_float_backend(FLOAT_DIGITS),
    }
}

/// SHA-256 of the canonical config record, hex-encoded.
pub fn config_hash(config: &serde_json::Value) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

pub fn parse_format(s: &str) -> Result<Format, String> {
    match s {
        "json" => Ok(Format::Json),
        "csv" => Ok(Format::Csv),
        "dot" => Ok(Format::Dot),
        other => Err(format!("format must be json, csv or dot, got {other:?}")),
    }
}

pub struct Sink {
    out: Option<PathBuf>,
}

impl Sink {
    pub fn new(out: Option<PathBuf>) -> Self {
        Sink { out }
    }

    pub fn write(&self, content: &str) -> CliResult<()> {
        match &self.out {
            Some(path) => fs::write(path, content)
                .map_err(|e| CliError::Domain(format!("writing {}: {e}", path.display()))),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout
                    .write_all(content.as_bytes())
                    .map_err(|e| CliError::Domain(format!("writing stdout: {e}")))
            }
        }
    }

    /// Writes an exact-data sidecar next to the main output file
    /// (`<out>.json`); skipped when writing to stdout.
    pub fn write_sidecar(&self, content: &str) -> CliResult<()> {
        if let Some(path) = &self.out {
            let mut sidecar = path.clone().into_os_string();
            sidecar.push(".json");
            let sidecar = PathBuf::from(sidecar);
            fs::write(&sidecar, content)
                .map_err(|e| CliError::Domain(format!("writing {}: {e}", sidecar.display())))?;
        }
        Ok(())
    }
}

/// Wraps a payload with the reproducibility header.
pub fn json_document(
    command: &str,
    config: &serde_json::Value,
    backend: Backend,
    payload: serde_json::Value,
) -> String {
    let doc = serde_json::json!({
        "command": command,
        "config_sha256": config_hash(config),
        "backend": match backend { Backend::Exact => "exact", Backend::Float => "float" },
        "result": payload,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
    s.push('\n');
    s
}

/// CSV header comment carrying the reproducibility data.
pub fn csv_header(command: &str, config: &serde_json::Value, backend: Backend) -> String {
    format!(
        "# command={command} config_sha256={} backend={}\n",
        config_hash(config),
        match backend {
            Backend::Exact => "exact",
            Backend::Float => "float",
        }
    )
}

pub fn to_json<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("serializable")
}
