//! Output plumbing: the shared metadata block, digests, and byte-stable
//! JSON/CSV writers.
//!
//! Every number is serialized with 17 significant digits (via the core
//! serialization helpers), so identical runs produce identical bytes and
//! written matrices re-load losslessly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use sofup_core::io::format_full;
use sofup_core::Result;

/// Reproducibility block attached to every output: tool version, the seed
/// (for verbs that draw randomness), and a digest identifying the input.
#[derive(Serialize)]
pub struct Meta {
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub input_digest: String,
}

impl Meta {
    pub fn new(seed: Option<u64>, input_digest: String) -> Self {
        Meta { version: env!("CARGO_PKG_VERSION"), seed, input_digest }
    }
}

/// Hex SHA-256 of raw bytes — the input digest for file-driven verbs.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// Pretty-printed JSON with a trailing newline, to a file or stdout.
pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// A CSV table with `# key=value` metadata comment lines above the header.
pub struct Csv {
    buffer: String,
}

impl Csv {
    pub fn new() -> Self {
        Csv { buffer: String::new() }
    }

    pub fn comment(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.buffer, "# {key}={value}");
    }

    pub fn meta_comments(&mut self, meta: &Meta) {
        self.comment("version", meta.version);
        if let Some(seed) = meta.seed {
            self.comment("seed", seed);
        }
        self.comment("input_digest", &meta.input_digest);
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for field in fields {
            if !first {
                self.buffer.push(',');
            }
            self.buffer.push_str(field.as_ref());
            first = false;
        }
        self.buffer.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, &self.buffer)?;
        Ok(())
    }
}

/// Full-precision rendering for CSV cells and canonical argument strings.
pub fn num(x: f64) -> String {
    format_full(x)
}
