//! File formats: the JSON model file every front-end verb ingests, the
//! auxiliary gain/perturbation/state files, and full-precision number
//! serialization.
//!
//! The model file is one strict-schema JSON object,
//!
//! ```json
//! {
//!   "A": [[...], ...],
//!   "B": [[...], ...],
//!   "C": [[...], ...],
//!   "F_nominal": [[...], ...],   // optional
//!   "Delta":     [[...], ...],   // optional
//!   "rho":       1.5             // optional
//! }
//! ```
//!
//! with matrices as row-major nested arrays of finite numbers. Unknown keys
//! are rejected — a typo'd optional key must not silently vanish.
//!
//! Numbers are written back with 17 significant digits (`{:.16e}`), enough
//! for every `f64` to reparse bit-exactly, which is what makes byte-level
//! determinism checks on output files meaningful.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::linalg;
use crate::statespace::{GainMatrix, Perturbation, Provenance, StateSpaceModel};

/// Everything a model file can carry.
#[derive(Debug)]
pub struct ModelBundle {
    pub model: StateSpaceModel,
    pub f_nominal: Option<GainMatrix>,
    pub delta: Option<Array2<f64>>,
    pub rho: Option<f64>,
}

impl ModelBundle {
    /// The nominal gain, defaulting to zeros when the file carried none.
    ///
    /// # Errors
    ///
    /// None in practice: a zero matrix of the model's gain shape is always
    /// valid.
    pub fn f_nominal_or_zero(&self) -> Result<GainMatrix> {
        match &self.f_nominal {
            Some(f) => Ok(f.clone()),
            None => GainMatrix::new(
                Array2::zeros((self.model.m(), self.model.p())),
                Provenance::Nominal,
            ),
        }
    }

    /// The perturbation the file describes, if any. A missing `rho` budget
    /// defaults to the perturbation's own norm (the tightest admissible
    /// budget).
    ///
    /// # Errors
    ///
    /// Propagates perturbation validation: a zero `Delta` without a positive
    /// `rho` is rejected, as is `rho < ||Delta||_F`.
    pub fn perturbation(&self) -> Result<Option<Perturbation>> {
        let Some(delta) = &self.delta else { return Ok(None) };
        let rho = match self.rho {
            Some(r) => r,
            None => linalg::fro_norm(&delta.view()),
        };
        Ok(Some(Perturbation::new(delta.clone(), rho)?))
    }
}

/// Load and validate a model file from disk.
///
/// # Errors
///
/// * [`Error::Io`] for filesystem problems.
/// * [`Error::Parse`] for malformed JSON.
/// * [`Error::Schema`] for structural problems: missing/unknown keys,
///   ragged or empty matrices, non-finite entries.
/// * Dimension errors when the matrices do not fit together.
pub fn load_model(path: &Path) -> Result<ModelBundle> {
    load_model_bytes(&std::fs::read(path)?)
}

/// [`load_model`] on in-memory bytes.
///
/// # Errors
///
/// As [`load_model`], minus the filesystem.
pub fn load_model_bytes(bytes: &[u8]) -> Result<ModelBundle> {
    let value: Value = serde_json::from_slice(bytes)?;
    let Value::Object(map) = &value else {
        return Err(Error::Schema("model file must be a JSON object".into()));
    };
    for key in map.keys() {
        if !matches!(key.as_str(), "A" | "B" | "C" | "F_nominal" | "Delta" | "rho") {
            return Err(Error::Schema(format!("unknown key {key:?} in model file")));
        }
    }
    let require = |key: &str| {
        map.get(key).ok_or_else(|| Error::Schema(format!("model file is missing {key:?}")))
    };
    let a = parse_matrix(require("A")?, "A")?;
    let b = parse_matrix(require("B")?, "B")?;
    let c = parse_matrix(require("C")?, "C")?;
    let model = StateSpaceModel::new(a, b, c)?;

    let f_nominal = match map.get("F_nominal") {
        Some(v) => {
            let f = parse_matrix(v, "F_nominal")?;
            if f.dim() != (model.m(), model.p()) {
                return Err(Error::DimensionMismatch(format!(
                    "F_nominal is {} x {}, the model needs {} x {}",
                    f.nrows(),
                    f.ncols(),
                    model.m(),
                    model.p()
                )));
            }
            Some(GainMatrix::new(f, Provenance::Nominal)?)
        }
        None => None,
    };
    let delta = match map.get("Delta") {
        Some(v) => {
            let d = parse_matrix(v, "Delta")?;
            if d.dim() != (model.n(), model.n()) {
                return Err(Error::DimensionMismatch(format!(
                    "Delta is {} x {}, the model state dimension is {}",
                    d.nrows(),
                    d.ncols(),
                    model.n()
                )));
            }
            Some(d)
        }
        None => None,
    };
    let rho = match map.get("rho") {
        Some(v) => {
            let r = parse_f64(v, "rho")?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Schema(format!("rho must be positive and finite, got {r}")));
            }
            Some(r)
        }
        None => None,
    };
    Ok(ModelBundle { model, f_nominal, delta, rho })
}

/// Parse a gain file: either a bare nested array, or an object carrying the
/// matrix under one of the keys `F`, `F_nominal`, `F_updated`, `G_star`
/// (so the result file of an update run feeds straight back in).
///
/// # Errors
///
/// [`Error::Parse`] / [`Error::Schema`] for malformed content.
pub fn parse_gain_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    let value: Value = serde_json::from_slice(bytes)?;
    if value.is_array() {
        return parse_matrix(&value, "gain");
    }
    if let Value::Object(map) = &value {
        for key in ["F", "F_nominal", "F_updated", "G_star"] {
            if let Some(v) = map.get(key) {
                return parse_matrix(v, key);
            }
        }
    }
    Err(Error::Schema(
        "gain file must be a nested array or an object with an F / F_nominal / F_updated / G_star key"
            .into(),
    ))
}

/// Parse a perturbation file: either a bare nested array, or an object with
/// a `Delta` key and optionally `rho` (extra descriptive keys are allowed,
/// so files written by the synthesis verb read back directly).
///
/// # Errors
///
/// [`Error::Parse`] / [`Error::Schema`] for malformed content.
pub fn parse_delta_bytes(bytes: &[u8]) -> Result<(Array2<f64>, Option<f64>)> {
    let value: Value = serde_json::from_slice(bytes)?;
    if value.is_array() {
        return Ok((parse_matrix(&value, "Delta")?, None));
    }
    if let Value::Object(map) = &value {
        if let Some(v) = map.get("Delta") {
            let delta = parse_matrix(v, "Delta")?;
            let rho = match map.get("rho") {
                Some(r) => Some(parse_f64(r, "rho")?),
                None => None,
            };
            return Ok((delta, rho));
        }
    }
    Err(Error::Schema(
        "perturbation file must be a nested array or an object with a Delta key".into(),
    ))
}

/// Parse an initial-state file: a bare array of numbers, or an object with
/// an `x0` key.
///
/// # Errors
///
/// [`Error::Parse`] / [`Error::Schema`] for malformed content.
pub fn parse_state_bytes(bytes: &[u8]) -> Result<Array1<f64>> {
    let value: Value = serde_json::from_slice(bytes)?;
    if value.is_array() {
        return parse_vector(&value, "x0");
    }
    if let Value::Object(map) = &value {
        if let Some(v) = map.get("x0") {
            return parse_vector(v, "x0");
        }
    }
    Err(Error::Schema("state file must be an array or an object with an x0 key".into()))
}

/// Interpret a JSON value as a rectangular, non-empty, finite matrix.
///
/// # Errors
///
/// [`Error::Schema`] describing the first structural problem found.
pub fn parse_matrix(value: &Value, what: &str) -> Result<Array2<f64>> {
    let Value::Array(rows) = value else {
        return Err(Error::Schema(format!("{what} must be a nested array of rows")));
    };
    if rows.is_empty() {
        return Err(Error::Schema(format!("{what} has no rows")));
    }
    let mut data = Vec::new();
    let mut ncols = None;
    for (i, row) in rows.iter().enumerate() {
        let Value::Array(entries) = row else {
            return Err(Error::Schema(format!("{what} row {i} is not an array")));
        };
        match ncols {
            None => {
                if entries.is_empty() {
                    return Err(Error::Schema(format!("{what} row {i} is empty")));
                }
                ncols = Some(entries.len());
            }
            Some(w) if w != entries.len() => {
                return Err(Error::Schema(format!(
                    "{what} is ragged: row {i} has {} entries, row 0 has {w}",
                    entries.len()
                )));
            }
            _ => {}
        }
        for (j, e) in entries.iter().enumerate() {
            data.push(parse_f64(e, &format!("{what}[{i}][{j}]"))?);
        }
    }
    let ncols = ncols.unwrap_or(0);
    Array2::from_shape_vec((rows.len(), ncols), data)
        .map_err(|e| Error::Schema(format!("{what}: {e}")))
}

/// Interpret a JSON value as a non-empty finite vector.
///
/// # Errors
///
/// [`Error::Schema`] describing the first structural problem found.
pub fn parse_vector(value: &Value, what: &str) -> Result<Array1<f64>> {
    let Value::Array(entries) = value else {
        return Err(Error::Schema(format!("{what} must be an array of numbers")));
    };
    if entries.is_empty() {
        return Err(Error::Schema(format!("{what} is empty")));
    }
    let data: Vec<f64> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| parse_f64(e, &format!("{what}[{i}]")))
        .collect::<Result<_>>()?;
    Ok(Array1::from_vec(data))
}

fn parse_f64(value: &Value, what: &str) -> Result<f64> {
    let x = value
        .as_f64()
        .ok_or_else(|| Error::Schema(format!("{what} must be a number, got {value}")))?;
    if !x.is_finite() {
        return Err(Error::Schema(format!("{what} must be finite, got {x}")));
    }
    Ok(x)
}

/// Format a number with 17 significant digits — lossless for every `f64`.
pub fn format_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// A number as a raw JSON token with 17 significant digits. Embedding the
/// token (rather than an `f64` that a serializer would re-round) is what
/// keeps output files byte-stable. Non-finite values become `null`, which
/// JSON numbers cannot carry.
pub fn raw_f64(x: f64) -> Box<RawValue> {
    let token = if x.is_finite() { format_full(x) } else { "null".to_owned() };
    RawValue::from_string(token).expect("formatted float is valid JSON")
}

/// A matrix as nested raw 17-significant-digit tokens.
pub fn raw_matrix(m: &ArrayView2<'_, f64>) -> Vec<Vec<Box<RawValue>>> {
    m.rows().into_iter().map(|row| row.iter().map(|&x| raw_f64(x)).collect()).collect()
}

/// A vector as raw 17-significant-digit tokens.
pub fn raw_vector(v: &ArrayView1<'_, f64>) -> Vec<Box<RawValue>> {
    v.iter().map(|&x| raw_f64(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use std::io::Write;

    fn model_json() -> &'static str {
        r#"{
            "A": [[-1.0, 0.5], [0.0, -2.0]],
            "B": [[1.0], [0.5]],
            "C": [[1.0, 0.0]],
            "F_nominal": [[0.25]],
            "Delta": [[0.0, 0.1], [0.0, 0.0]],
            "rho": 0.5
        }"#
    }

    #[test]
    fn loads_a_complete_model_file() {
        let bundle = load_model_bytes(model_json().as_bytes()).unwrap();
        assert_eq!(bundle.model.n(), 2);
        assert_eq!(bundle.model.m(), 1);
        assert_eq!(bundle.model.p(), 1);
        assert_eq!(bundle.f_nominal.as_ref().unwrap().matrix()[(0, 0)], 0.25);
        assert_eq!(bundle.rho, Some(0.5));
        let pert = bundle.perturbation().unwrap().unwrap();
        assert_abs_diff_eq!(pert.fro_norm(), 0.1, epsilon = 1e-15);
        assert_eq!(pert.rho(), 0.5);
    }

    #[test]
    fn loads_from_disk() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        tmp.write_all(model_json().as_bytes()).unwrap();
        let bundle = load_model(tmp.path()).unwrap();
        assert_eq!(bundle.model.n(), 2);
    }

    #[test]
    fn optional_fields_may_be_absent() {
        let bundle = load_model_bytes(
            br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]]}"#,
        )
        .unwrap();
        assert!(bundle.f_nominal.is_none());
        assert!(bundle.perturbation().unwrap().is_none());
        let zero = bundle.f_nominal_or_zero().unwrap();
        assert_eq!(zero.matrix().dim(), (1, 1));
        assert_eq!(zero.matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn missing_rho_defaults_to_the_perturbation_norm() {
        let bundle = load_model_bytes(
            br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "Delta": [[0.3]]}"#,
        )
        .unwrap();
        let pert = bundle.perturbation().unwrap().unwrap();
        assert_abs_diff_eq!(pert.rho(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn schema_violations_are_named() {
        let cases: &[(&[u8], &str)] = &[
            (br#"[1, 2]"#, "must be a JSON object"),
            (br#"{"B": [[1.0]], "C": [[1.0]]}"#, "missing \"A\""),
            (br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "Alpha": 3}"#, "unknown key"),
            (br#"{"A": [[1, 2], [3]], "B": [[1.0]], "C": [[1.0]]}"#, "ragged"),
            (br#"{"A": [["x"]], "B": [[1.0]], "C": [[1.0]]}"#, "must be a number"),
            (br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "rho": -1}"#, "rho must be positive"),
            (br#"{"A": [], "B": [[1.0]], "C": [[1.0]]}"#, "no rows"),
        ];
        for (bytes, needle) in cases {
            let err = load_model_bytes(bytes).unwrap_err();
            let text = err.to_string();
            assert!(
                text.contains(needle),
                "expected {needle:?} in error for {:?}, got {text:?}",
                std::str::from_utf8(bytes).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        // F_nominal should be 1 x 1 here.
        let err = load_model_bytes(
            br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "F_nominal": [[1.0, 2.0]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
        // Delta must match the state dimension.
        let err = load_model_bytes(
            br#"{"A": [[-1.0]], "B": [[1.0]], "C": [[1.0]], "Delta": [[1.0, 0.0], [0.0, 1.0]]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn gain_file_variants() {
        let bare = parse_gain_bytes(br#"[[1.0, 2.0]]"#).unwrap();
        assert_eq!(bare, array![[1.0, 2.0]]);
        let keyed = parse_gain_bytes(br#"{"F_updated": [[3.0]], "J_star": 1.0}"#).unwrap();
        assert_eq!(keyed, array![[3.0]]);
        assert!(matches!(parse_gain_bytes(br#"{"Z": [[1.0]]}"#), Err(Error::Schema(_))));
    }

    #[test]
    fn delta_and_state_file_variants() {
        let (d, rho) = parse_delta_bytes(br#"{"Delta": [[0.1]], "rho": 2.0, "tau": 0.3}"#).unwrap();
        assert_eq!(d, array![[0.1]]);
        assert_eq!(rho, Some(2.0));
        let (d, rho) = parse_delta_bytes(br#"[[0.25]]"#).unwrap();
        assert_eq!(d[(0, 0)], 0.25);
        assert_eq!(rho, None);
        let x0 = parse_state_bytes(br#"{"x0": [1.0, -2.0]}"#).unwrap();
        assert_eq!(x0, array![1.0, -2.0]);
        let x0 = parse_state_bytes(br#"[0.5]"#).unwrap();
        assert_eq!(x0[0], 0.5);
        assert!(matches!(parse_state_bytes(br#"{}"#), Err(Error::Schema(_))));
    }

    #[test]
    fn full_precision_round_trip() {
        for &x in &[1.0 / 3.0, std::f64::consts::PI, -1.2345678901234567e-300, 0.1 + 0.2] {
            let token = format_full(x);
            let back: f64 = token.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "token {token} lost bits");
        }
        assert_eq!(raw_f64(f64::NAN).get(), "null");
    }

    #[test]
    fn raw_tokens_survive_typed_serialization() {
        // The point of RawValue fields: serializers must emit the token
        // verbatim instead of re-rounding through an f64.
        #[derive(serde::Serialize)]
        struct Out {
            x: Box<RawValue>,
            m: Vec<Vec<Box<RawValue>>>,
        }
        let out = Out {
            x: raw_f64(1.0 / 3.0),
            m: raw_matrix(&array![[0.1, 0.2]].view()),
        };
        let text = serde_json::to_string(&out).unwrap();
        assert!(text.contains("3.3333333333333331e-1"), "got {text}");
        assert!(text.contains("1.0000000000000001e-1"), "got {text}");
    }
}
