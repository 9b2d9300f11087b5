//! Versioned JSON serialization of trained cascades.
//!
//! Writing is fully hand-formatted so output is canonical: every float is
//! printed as a decimal with 17 significant digits, which round-trips any
//! 64-bit value exactly and makes save -> load -> save byte-stable. Reading
//! goes through serde with unknown keys rejected, followed by numeric
//! invariant checks (a text file is hand-editable, so nothing is trusted).

use crate::cascade::{CandidateRecord, Cascade, Standardization, TrainedNet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{MlpParams, MlpSpec};
use crate::pca::PcaModel;
use serde::Deserialize;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;

/// Orthonormality slack allowed on load; text serialization can cost the
/// last ulp, predictions are unaffected at this level.
const ORTHO_LOAD_TOL: f64 = 1e-6;

/// Decimal with 17 significant digits: exact 64-bit roundtrip.
pub fn canonical_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `cascade` to the canonical JSON document text.
pub fn to_json_string(cascade: &Cascade, provenance: &[String]) -> String {
    let mut s = String::new();
    let floats = |xs: &[f64]| -> String {
        let parts: Vec<String> = xs.iter().map(|v| canonical_f64(*v)).collect();
        format!("[{}]", parts.join(","))
    };

    s.push_str("{\n");
    let _ = writeln!(s, "  \"schema_version\": {SCHEMA_VERSION},");
    let quoted: Vec<String> = provenance
        .iter()
        .map(|p| serde_json::to_string(p).expect("strings always serialize"))
        .collect();
    let _ = writeln!(s, "  \"provenance\": [{}],", quoted.join(","));
    let _ = writeln!(
        s,
        "  \"grid\": {{\"height\": {}, \"width\": {}}},",
        cascade.height, cascade.width
    );

    s.push_str("  \"pca\": {\n");
    let _ = writeln!(s, "    \"mean\": {},", floats(&cascade.pca.mean));
    s.push_str("    \"components\": [\n");
    let k_max = cascade.pca.k_max();
    for c in 0..k_max {
        let col = cascade.pca.components.column(c);
        let sep = if c + 1 < k_max { "," } else { "" };
        let _ = writeln!(s, "      {}{sep}", floats(&col));
    }
    s.push_str("    ],\n");
    let _ = writeln!(s, "    \"variances\": {},", floats(&cascade.pca.variances));
    let _ = writeln!(s, "    \"k_max\": {k_max}");
    s.push_str("  },\n");

    let _ = writeln!(s, "  \"k\": {},", cascade.k);
    s.push_str("  \"standardization\": {\n");
    let _ = writeln!(
        s,
        "    \"score_mean\": {},",
        floats(&cascade.score_standardization.mean)
    );
    let _ = writeln!(
        s,
        "    \"score_sd\": {},",
        floats(&cascade.score_standardization.sd)
    );
    let _ = writeln!(
        s,
        "    \"target_mean\": {},",
        canonical_f64(cascade.target_mean)
    );
    let _ = writeln!(s, "    \"target_sd\": {}", canonical_f64(cascade.target_sd));
    s.push_str("  },\n");

    s.push_str("  \"nets\": [\n");
    for (i, net) in cascade.nets.iter().enumerate() {
        let sep = if i + 1 < cascade.nets.len() { "," } else { "" };
        let _ = writeln!(
            s,
            "    {{\"depth\": {}, \"width\": {}, \"flat_params\": {}}}{sep}",
            net.spec.hidden_layers,
            net.spec.hidden_width,
            floats(&net.params.flat)
        );
    }
    s.push_str("  ],\n");

    s.push_str("  \"history\": [\n");
    for (i, rec) in cascade.history.iter().enumerate() {
        let sep = if i + 1 < cascade.history.len() {
            ","
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "    {{\"depth\": {}, \"train_rmse\": {}, \"val_rmse\": {}, \"kept\": {}}}{sep}",
            rec.depth,
            canonical_f64(rec.train_rmse),
            canonical_f64(rec.val_rmse),
            rec.kept
        );
    }
    s.push_str("  ]\n");
    s.push_str("}\n");
    s
}

/// Writes the model document atomically (temp file in the same directory,
/// then rename).
pub fn save(cascade: &Cascade, path: &Path, provenance: &[String]) -> Result<()> {
    let text = to_json_string(cascade, provenance);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentIn {
    // Checked against SCHEMA_VERSION before this struct is deserialized.
    #[allow(dead_code)]
    schema_version: u64,
    #[serde(default)]
    #[allow(dead_code)]
    provenance: Vec<String>,
    grid: GridIn,
    pca: PcaIn,
    k: usize,
    standardization: StandardizationIn,
    nets: Vec<NetIn>,
    history: Vec<HistoryIn>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridIn {
    height: usize,
    width: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PcaIn {
    mean: Vec<f64>,
    /// Columns of the component matrix, each of length D.
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
    k_max: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StandardizationIn {
    score_mean: Vec<f64>,
    score_sd: Vec<f64>,
    target_mean: f64,
    target_sd: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetIn {
    depth: usize,
    width: usize,
    flat_params: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryIn {
    depth: usize,
    train_rmse: f64,
    val_rmse: f64,
    kept: bool,
}

/// Reads and validates a model document.
pub fn load(path: &Path) -> Result<Cascade> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_json_str(&text)
}

/// Parses and validates the canonical JSON document text.
pub fn from_json_str(text: &str) -> Result<Cascade> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Load(format!("malformed JSON: {e}")))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Load("missing integer schema_version".to_string()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Load(format!(
            "unsupported schema_version {version}; this build reads version {SCHEMA_VERSION}"
        )));
    }
    let doc: DocumentIn = serde_json::from_value(value)
        .map_err(|e| Error::Load(format!("document does not match schema: {e}")))?;
    validate(doc)
}

fn validate(doc: DocumentIn) -> Result<Cascade> {
    let invariant = |msg: String| Error::Load(msg);

    let d = doc.pca.mean.len();
    if doc.grid.height == 0 || doc.grid.width == 0 {
        return Err(invariant("grid dimensions must be positive".to_string()));
    }
    if d != 2 * doc.grid.height * doc.grid.width {
        return Err(invariant(format!(
            "pca mean length {d} does not match grid 2*{}*{}",
            doc.grid.height, doc.grid.width
        )));
    }
    let k_max = doc.pca.k_max;
    if doc.pca.components.len() != k_max {
        return Err(invariant(format!(
            "components hold {} columns but k_max is {k_max}",
            doc.pca.components.len()
        )));
    }
    if doc.pca.variances.len() != k_max {
        return Err(invariant(format!(
            "variances hold {} entries but k_max is {k_max}",
            doc.pca.variances.len()
        )));
    }
    for (c, col) in doc.pca.components.iter().enumerate() {
        if col.len() != d {
            return Err(invariant(format!(
                "component {c} has length {}, expected {d}",
                col.len()
            )));
        }
    }
    let mut prev = f64::INFINITY;
    for (c, &v) in doc.pca.variances.iter().enumerate() {
        if v.is_nan() || v < 0.0 {
            return Err(invariant(format!("variance {c} is negative")));
        }
        if v > prev {
            return Err(invariant(format!(
                "variances must be nonincreasing, entry {c} rises"
            )));
        }
        prev = v;
    }

    // Orthonormality gate.
    for a in 0..k_max {
        for b in a..k_max {
            let dot: f64 = doc.pca.components[a]
                .iter()
                .zip(&doc.pca.components[b])
                .map(|(x, y)| x * y)
                .sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (dot - want).abs() > ORTHO_LOAD_TOL {
                return Err(invariant(format!(
                    "components are not orthonormal: |<c{a}, c{b}> - {want}| = {:.3e} exceeds {ORTHO_LOAD_TOL:e}",
                    (dot - want).abs()
                )));
            }
        }
    }

    if doc.k < 1 || doc.k > k_max {
        return Err(invariant(format!("k = {} outside 1..={k_max}", doc.k)));
    }
    if doc.standardization.score_mean.len() != doc.k || doc.standardization.score_sd.len() != doc.k
    {
        return Err(invariant(format!(
            "standardization vectors must have length k = {}",
            doc.k
        )));
    }
    if doc.standardization.score_sd.iter().any(|&s| s.is_nan() || s <= 0.0) {
        return Err(invariant("score_sd entries must be positive".to_string()));
    }
    if doc.standardization.target_sd.is_nan() || doc.standardization.target_sd <= 0.0 {
        return Err(invariant("target_sd must be positive".to_string()));
    }

    if doc.nets.is_empty() {
        return Err(invariant("model must contain at least one net".to_string()));
    }
    // The first net is always the linear one; later nets grow strictly in
    // depth but may skip depths (a rejected candidate under try-all-depths
    // gating leaves a gap).
    let mut nets = Vec::with_capacity(doc.nets.len());
    let mut prev_depth: Option<usize> = None;
    for (i, net) in doc.nets.into_iter().enumerate() {
        if i == 0 && net.depth != 0 {
            return Err(invariant(format!(
                "first net must be linear (depth 0), got depth {}",
                net.depth
            )));
        }
        if let Some(prev) = prev_depth {
            if net.depth <= prev {
                return Err(invariant(format!(
                    "net depths must be strictly increasing, net {i} has depth {} after {prev}",
                    net.depth
                )));
            }
        }
        prev_depth = Some(net.depth);
        let spec = MlpSpec::new(doc.k, net.depth, net.width)
            .map_err(|e| invariant(format!("net {i} spec invalid: {e}")))?;
        let params = MlpParams::from_flat(&spec, net.flat_params)
            .map_err(|e| invariant(format!("net {i} params invalid: {e}")))?;
        nets.push(TrainedNet { spec, params });
    }

    let kept = doc.history.iter().filter(|h| h.kept).count();
    if kept != nets.len() {
        return Err(invariant(format!(
            "history marks {kept} kept candidates but the model holds {} nets",
            nets.len()
        )));
    }
    let history: Vec<CandidateRecord> = doc
        .history
        .into_iter()
        .map(|h| CandidateRecord {
            depth: h.depth,
            train_rmse: h.train_rmse,
            val_rmse: h.val_rmse,
            kept: h.kept,
        })
        .collect();

    let mut components = Matrix::zeros(d, k_max);
    for (c, col) in doc.pca.components.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            components.set(r, c, v);
        }
    }

    Ok(Cascade {
        height: doc.grid.height,
        width: doc.grid.width,
        pca: PcaModel {
            mean: doc.pca.mean,
            components,
            variances: doc.pca.variances,
        },
        k: doc.k,
        score_standardization: Standardization {
            mean: doc.standardization.score_mean,
            sd: doc.standardization.score_sd,
        },
        target_mean: doc.standardization.target_mean,
        target_sd: doc.standardization.target_sd,
        nets,
        history,
    })
}
