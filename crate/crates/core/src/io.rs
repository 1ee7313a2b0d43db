//! File formats: events JSON, raw float32 blobs, curve CSV, multimodal
//! feature containers and dataset manifests.
//!
//! All binary payloads are raw little-endian IEEE-754 float32, row-major,
//! with byte counts checked exactly on load. Paths inside manifests are
//! resolved relative to the manifest's directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::SuspicionCurve;
use crate::error::{Error, Result};
use crate::event::{validate_sequence, Sequence};
use crate::modulator::{FrameFeatureBundle, MODALITY_DIMS, MODALITY_NAMES, NUM_MODALITIES};
use crate::synth::SynthConfig;

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn json_err(path: &Path, source: serde_json::Error) -> Error {
    Error::Json {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn data_err(path: &Path, message: impl Into<String>) -> Error {
    Error::DataFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Resolves `relative` against the directory containing `manifest`.
pub(crate) fn sibling(manifest: &Path, relative: &str) -> PathBuf {
    match manifest.parent() {
        Some(dir) => dir.join(relative),
        None => PathBuf::from(relative),
    }
}

/// Writes values as little-endian float32, narrowing from f64.
pub fn write_f32_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Reads exactly `expected` little-endian float32 values, widening to f64.
/// A size mismatch is reported in both bytes and elements.
pub fn read_f32_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(data_err(
            path,
            format!(
                "expected {} bytes ({expected} float32 values), found {}",
                expected * 4,
                bytes.len()
            ),
        ));
    }
    let mut out = Vec::with_capacity(expected);
    for chunk in bytes.chunks_exact(4) {
        out.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Ok(out)
}

/// Loads an events file and refuses sequences that fail validation.
pub fn load_events(path: &Path) -> Result<Sequence> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let seq: Sequence = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    let violations = validate_sequence(&seq);
    if !violations.is_empty() {
        let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
        let suffix = if violations.len() > 3 {
            format!(" (and {} more)", violations.len() - 3)
        } else {
            String::new()
        };
        return Err(data_err(
            path,
            format!("invalid sequence: {}{suffix}", shown.join("; ")),
        ));
    }
    Ok(seq)
}

pub fn save_events(path: &Path, seq: &Sequence) -> Result<()> {
    let text = serde_json::to_string_pretty(seq).expect("sequence serializes");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One modality entry in a feature-container manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityEntry {
    pub name: String,
    pub dim: usize,
    pub file: String,
}

/// Manifest of a per-sequence feature container.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureManifest {
    pub frames: usize,
    pub modalities: Vec<ModalityEntry>,
    pub fps: f64,
    pub sequence_id: String,
}


/// Writes a feature container: one manifest plus one float32 blob per
/// modality, each `frames x dim`, row-major.
pub fn save_features(
    manifest_path: &Path,
    sequence_id: &str,
    fps: f64,
    features: &[FrameFeatureBundle],
) -> Result<()> {
    if features.is_empty() {
        return Err(Error::invalid("cannot save an empty feature container"));
    }
    for (t, bundle) in features.iter().enumerate() {
        bundle
            .validate()
            .map_err(|e| Error::invalid(format!("frame {t}: {e}")))?;
    }
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    let mut modalities = Vec::with_capacity(NUM_MODALITIES);
    for m in 0..NUM_MODALITIES {
        let file = format!("{stem}_{}.f32", MODALITY_NAMES[m]);
        let mut flat = Vec::with_capacity(features.len() * MODALITY_DIMS[m]);
        for bundle in features {
            flat.extend_from_slice(bundle.modality(m));
        }
        write_f32_blob(&sibling(manifest_path, &file), &flat)?;
        modalities.push(ModalityEntry {
            name: MODALITY_NAMES[m].to_string(),
            dim: MODALITY_DIMS[m],
            file,
        });
    }
    let manifest = FeatureManifest {
        frames: features.len(),
        modalities,
        fps,
        sequence_id: sequence_id.to_string(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, text).map_err(|e| io_err(manifest_path, e))
}

/// Loads a feature container, checking modality names, dims, byte counts
/// and value finiteness. The first non-finite value is reported with its
/// file, frame and column.
pub fn load_features(manifest_path: &Path) -> Result<(FeatureManifest, Vec<FrameFeatureBundle>)> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: FeatureManifest =
        serde_json::from_str(&text).map_err(|e| json_err(manifest_path, e))?;
    if manifest.frames == 0 {
        return Err(data_err(manifest_path, "container has zero frames"));
    }
    if manifest.modalities.len() != NUM_MODALITIES {
        return Err(data_err(
            manifest_path,
            format!(
                "expected {NUM_MODALITIES} modalities, found {}",
                manifest.modalities.len()
            ),
        ));
    }
    let mut per_modality: Vec<Vec<f64>> = Vec::with_capacity(NUM_MODALITIES);
    for m in 0..NUM_MODALITIES {
        let entry = &manifest.modalities[m];
        if entry.name != MODALITY_NAMES[m] || entry.dim != MODALITY_DIMS[m] {
            return Err(data_err(
                manifest_path,
                format!(
                    "modality {m} must be '{}' with dim {}, found '{}' with dim {}",
                    MODALITY_NAMES[m], MODALITY_DIMS[m], entry.name, entry.dim
                ),
            ));
        }
        let blob_path = sibling(manifest_path, &entry.file);
        let values = read_f32_blob(&blob_path, manifest.frames * entry.dim)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(data_err(
                &blob_path,
                format!(
                    "non-finite value at frame {}, column {}",
                    i / entry.dim,
                    i % entry.dim
                ),
            ));
        }
        per_modality.push(values);
    }
    let mut features = Vec::with_capacity(manifest.frames);
    for t in 0..manifest.frames {
        let take = |m: usize| {
            let dim = MODALITY_DIMS[m];
            per_modality[m][t * dim..(t + 1) * dim].to_vec()
        };
        features.push(FrameFeatureBundle {
            visual: take(0),
            conf: take(1),
            temporal: take(2),
            spectrum: take(3),
        });
    }
    Ok((manifest, features))
}

const CURVE_HEADER: &str = "frame,raw,score";

/// Writes a curve as CSV with nine significant digits per value.
pub fn save_curve_csv(path: &Path, curve: &SuspicionCurve) -> Result<()> {
    let mut text = String::with_capacity(curve.raw.len() * 32 + 16);
    text.push_str(CURVE_HEADER);
    text.push('\n');
    for (t, (r, s)) in curve.raw.iter().zip(&curve.scores).enumerate() {
        text.push_str(&format!("{t},{r:.8e},{s:.8e}\n"));
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a curve CSV back; the sequence id is taken from the caller since
/// the format does not carry one.
pub fn load_curve_csv(path: &Path, sequence_id: &str) -> Result<SuspicionCurve> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CURVE_HEADER => {}
        other => {
            return Err(data_err(
                path,
                format!(
                    "expected header '{CURVE_HEADER}', found '{}'",
                    other.unwrap_or_default()
                ),
            ))
        }
    }
    let mut raw = Vec::new();
    let mut scores = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let bad = |what: &str| {
            data_err(
                path,
                format!("line {}: {what}: '{line}'", lineno + 2),
            )
        };
        let frame: usize = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("unreadable frame index"))?;
        if frame != raw.len() {
            return Err(bad(&format!("frame index {frame}, expected {}", raw.len())));
        }
        let mut value = |what: &str| -> Result<f64> {
            let v: f64 = parts
                .next()
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| bad(&format!("unreadable {what}")))?;
            if !v.is_finite() {
                return Err(bad(&format!("non-finite {what}")));
            }
            Ok(v)
        };
        raw.push(value("raw value")?);
        scores.push(value("score")?);
        if parts.next().is_some() {
            return Err(bad("too many columns"));
        }
    }
    if raw.is_empty() {
        return Err(data_err(path, "curve has no rows"));
    }
    Ok(SuspicionCurve {
        sequence_id: sequence_id.to_string(),
        raw,
        scores,
    })
}

pub const DATASET_VERSION: u32 = 1;

/// One sequence of a stored dataset; paths are relative to the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    pub id: String,
    pub events: String,
    pub features: String,
    pub gt_curve: String,
}

/// Top-level index of a generated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    /// Generator settings the dataset was produced with.
    pub config: SynthConfig,
    pub sequences: Vec<DatasetEntry>,
    /// Path of the anchor bank manifest.
    pub anchors: String,
}

pub fn save_dataset_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn load_dataset_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| json_err(path, e))?;
    if manifest.format_version != DATASET_VERSION {
        return Err(data_err(
            path,
            format!(
                "unsupported dataset version {} (this build reads {DATASET_VERSION})",
                manifest.format_version
            ),
        ));
    }
    if manifest.sequences.is_empty() {
        return Err(data_err(path, "dataset lists no sequences"));
    }
    Ok(manifest)
}
