//! Concept anchors: one embedding per action category, compared against
//! frame embeddings by cosine similarity.
//!
//! A bank holds 11 unit-normalized rows. The per-frame spectrum rescales
//! raw cosine into `[0, 1]` via `(1 + cos) / 2`, so 0.5 means orthogonal,
//! 1 means aligned and 0 means opposed. Embeddings are produced by an
//! external text/image encoder; the category definitions bundled with this
//! crate let a bank be regenerated with any encoder at any dimension.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{builtin_categories, NUM_CATEGORIES};
use crate::io::{data_err, io_err, json_err, read_f32_blob, sibling, write_f32_blob};

pub const NUM_ANCHORS: usize = NUM_CATEGORIES;

/// Maximum tolerated deviation of a stored row norm from 1. Rows inside the
/// tolerance are silently re-normalized (float32 storage alone perturbs the
/// norm); anything further off is treated as a corrupt bank.
pub const NORM_TOLERANCE: f64 = 1e-3;

/// 11 unit-normalized anchor embeddings with their labels and definitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorBank {
    dim: usize,
    names: Vec<String>,
    definitions: Vec<String>,
    /// Row-major `NUM_ANCHORS x dim`, each row unit length.
    rows: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BankManifest {
    dim: usize,
    names: Vec<String>,
    definitions: Vec<String>,
    data_file: String,
}

impl AnchorBank {
    /// Builds a bank from raw rows, enforcing shape and near-unit norms.
    pub fn from_rows(
        names: Vec<String>,
        definitions: Vec<String>,
        dim: usize,
        mut rows: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("anchor dimension must be positive"));
        }
        if names.len() != NUM_ANCHORS || definitions.len() != NUM_ANCHORS {
            return Err(Error::invalid(format!(
                "need {NUM_ANCHORS} names and definitions, got {} and {}",
                names.len(),
                definitions.len()
            )));
        }
        if names.iter().any(|n| n.is_empty()) || definitions.iter().any(|d| d.is_empty()) {
            return Err(Error::invalid("anchor names and definitions must be non-empty"));
        }
        if rows.len() != NUM_ANCHORS * dim {
            return Err(Error::invalid(format!(
                "expected {} values for {NUM_ANCHORS} rows of dim {dim}, got {}",
                NUM_ANCHORS * dim,
                rows.len()
            )));
        }
        for (i, row) in rows.chunks_exact_mut(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("anchor row {i} contains non-finite values")));
            }
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() >= NORM_TOLERANCE {
                return Err(Error::data(format!(
                    "anchor row {i} has norm {norm:.6}, outside unit tolerance {NORM_TOLERANCE}"
                )));
            }
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
        Ok(AnchorBank {
            dim,
            names,
            definitions,
            rows,
        })
    }

    /// Same, labeled with the builtin category table.
    pub fn with_builtin_labels(dim: usize, rows: Vec<f64>) -> Result<Self> {
        let cats = builtin_categories();
        Self::from_rows(
            cats.iter().map(|c| c.name.clone()).collect(),
            cats.iter().map(|c| c.definition.clone()).collect(),
            dim,
            rows,
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn definitions(&self) -> &[String] {
        &self.definitions
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Writes the JSON manifest plus a float32 blob next to it.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let data_file = "anchors.f32".to_string();
        let manifest = BankManifest {
            dim: self.dim,
            names: self.names.clone(),
            definitions: self.definitions.clone(),
            data_file: data_file.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(manifest_path, text).map_err(|e| io_err(manifest_path, e))?;
        write_f32_blob(&sibling(manifest_path, &data_file), &self.rows)
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
        let manifest: BankManifest =
            serde_json::from_str(&text).map_err(|e| json_err(manifest_path, e))?;
        let blob_path = sibling(manifest_path, &manifest.data_file);
        let rows = read_f32_blob(&blob_path, NUM_ANCHORS * manifest.dim)?;
        Self::from_rows(manifest.names, manifest.definitions, manifest.dim, rows)
            .map_err(|e| data_err(manifest_path, e.to_string()))
    }
}

/// Per-category similarity of one frame embedding, each value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilaritySpectrum {
    pub values: [f64; NUM_ANCHORS],
}

impl SimilaritySpectrum {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Rescaled cosine similarity of `embedding` against every anchor.
pub fn spectrum(embedding: &[f64], bank: &AnchorBank) -> Result<SimilaritySpectrum> {
    if embedding.len() != bank.dim() {
        return Err(Error::invalid(format!(
            "embedding dim {} does not match bank dim {}",
            embedding.len(),
            bank.dim()
        )));
    }
    if embedding.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("embedding contains non-finite values"));
    }
    let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::invalid("cannot take the spectrum of a zero embedding"));
    }
    let mut values = [0.0; NUM_ANCHORS];
    for (c, value) in values.iter_mut().enumerate() {
        let row = bank.row(c);
        let dot: f64 = row.iter().zip(embedding).map(|(a, b)| a * b).sum();
        let cos = (dot / norm).clamp(-1.0, 1.0);
        *value = 0.5 * (1.0 + cos);
    }
    Ok(SimilaritySpectrum { values })
}

/// Off-diagonal statistics of the anchor-to-anchor similarity matrix.
/// With anchors from a real text encoder the mean tends to sit around 0.74
/// (definitions share a common register); orthonormal synthetic banks give 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityStats {
    pub mean: f64,
    pub std: f64,
    /// Number of off-diagonal entries the stats run over (always 110).
    pub count: usize,
}

/// Pairwise cosine matrix of the bank's rows (row-major 11 x 11) together
/// with off-diagonal mean and population standard deviation.
pub fn similarity_matrix(bank: &AnchorBank) -> (Vec<f64>, SimilarityStats) {
    let n = NUM_ANCHORS;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
        for j in i + 1..n {
            let dot: f64 = bank
                .row(i)
                .iter()
                .zip(bank.row(j))
                .map(|(a, b)| a * b)
                .sum();
            let v = dot.clamp(-1.0, 1.0);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += m[i * n + j];
                count += 1;
            }
        }
    }
    let mean = sum / count as f64;
    let var = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|(i, j)| i != j)
        .map(|(i, j)| {
            let d = m[i * n + j] - mean;
            d * d
        })
        .sum::<f64>()
        / count as f64;
    (
        m,
        SimilarityStats {
            mean,
            std: var.sqrt(),
            count,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rows 0..10 of a `dim`-dimensional standard basis: orthonormal bank.
    fn basis_bank(dim: usize) -> AnchorBank {
        let mut rows = vec![0.0; NUM_ANCHORS * dim];
        for i in 0..NUM_ANCHORS {
            rows[i * dim + i] = 1.0;
        }
        AnchorBank::with_builtin_labels(dim, rows).unwrap()
    }

    #[test]
    fn spectrum_of_an_anchor_hits_one() {
        let bank = basis_bank(16);
        let e = bank.row(4).to_vec();
        let s = spectrum(&e, &bank).unwrap();
        assert!((s.values[4] - 1.0).abs() < 1e-12);
        // all other anchors are orthogonal to this one
        for (c, &v) in s.values.iter().enumerate() {
            if c != 4 {
                assert!((v - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn opposed_direction_maps_to_zero() {
        let bank = basis_bank(16);
        let e: Vec<f64> = bank.row(2).iter().map(|v| -v).collect();
        let s = spectrum(&e, &bank).unwrap();
        assert!((s.values[2] - 0.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_ignores_embedding_scale() {
        let bank = basis_bank(16);
        let mut e = vec![0.1; 16];
        e[3] = 0.9;
        let doubled: Vec<f64> = e.iter().map(|v| v * 2.0).collect();
        let a = spectrum(&e, &bank).unwrap();
        let b = spectrum(&doubled, &bank).unwrap();
        for c in 0..NUM_ANCHORS {
            assert!((a.values[c] - b.values[c]).abs() < 1e-12);
        }
        assert!(a.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn spectrum_rejects_bad_embeddings() {
        let bank = basis_bank(16);
        assert!(spectrum(&[0.0; 16], &bank).is_err());
        assert!(spectrum(&[0.1; 15], &bank).is_err());
        let mut nan = vec![0.1; 16];
        nan[0] = f64::NAN;
        assert!(spectrum(&nan, &bank).is_err());
    }

    #[test]
    fn near_unit_rows_are_renormalized_and_bad_norms_refused() {
        let dim = 8;
        let mut rows = vec![0.0; NUM_ANCHORS * dim];
        for i in 0..NUM_ANCHORS {
            rows[i * dim + (i % dim)] = 1.0005; // within tolerance
        }
        let bank = AnchorBank::with_builtin_labels(dim, rows.clone()).unwrap();
        for i in 0..NUM_ANCHORS {
            let n: f64 = bank.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }

        rows[0] = 0.9; // 10% off: corrupt
        assert!(AnchorBank::with_builtin_labels(dim, rows).is_err());
    }

    #[test]
    fn matrix_is_symmetric_with_unit_diagonal() {
        let dim = 16;
        let mut rows = vec![0.0; NUM_ANCHORS * dim];
        rows[0] = 1.0; // row 0 = e0
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        rows[dim] = inv; // row 1 = (e0 + e1) / sqrt(2)
        rows[dim + 1] = inv;
        for i in 2..NUM_ANCHORS {
            rows[i * dim + i] = 1.0;
        }
        let bank = AnchorBank::with_builtin_labels(dim, rows).unwrap();
        let (m, stats) = similarity_matrix(&bank);
        let n = NUM_ANCHORS;
        for i in 0..n {
            assert_eq!(m[i * n + i], 1.0);
            for j in 0..n {
                assert_eq!(m[i * n + j], m[j * n + i]);
            }
        }
        assert!((m[1] - inv).abs() < 1e-12, "cos(e0, (e0+e1)/sqrt 2)");
        assert_eq!(stats.count, 110);
        // two entries of 1/sqrt(2), the rest zero
        let mean = 2.0 * inv / 110.0;
        assert!((stats.mean - mean).abs() < 1e-12);
        let var = (2.0 * (inv - mean).powi(2) + 108.0 * mean * mean) / 110.0;
        assert!((stats.std - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_bank_has_zero_offdiagonal_stats() {
        let (_, stats) = similarity_matrix(&basis_bank(32));
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.std, 0.0);
    }

    #[test]
    fn bank_round_trips_through_manifest_and_blob() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.json");
        let dim = 24;
        // deterministic non-trivial rows, normalized by the constructor
        let mut rows = vec![0.0; NUM_ANCHORS * dim];
        for i in 0..NUM_ANCHORS {
            let mut norm2 = 0.0;
            for j in 0..dim {
                let v = ((i * 31 + j * 7) % 13) as f64 - 6.0;
                rows[i * dim + j] = v;
                norm2 += v * v;
            }
            let norm = norm2.sqrt();
            for j in 0..dim {
                rows[i * dim + j] /= norm;
            }
        }
        let bank = AnchorBank::with_builtin_labels(dim, rows).unwrap();
        bank.save(&path).unwrap();
        let loaded = AnchorBank::load(&path).unwrap();
        assert_eq!(loaded.dim(), dim);
        assert_eq!(loaded.names(), bank.names());
        for i in 0..NUM_ANCHORS {
            for j in 0..dim {
                // float32 storage costs ~1e-7 of precision
                assert!((loaded.row(i)[j] - bank.row(i)[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn truncated_blob_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anchors.json");
        let bank = basis_bank(16);
        bank.save(&path).unwrap();
        let blob = dir.path().join("anchors.f32");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(AnchorBank::load(&path).is_err());
    }

    #[test]
    fn builtin_labels_are_attached() {
        let bank = basis_bank(16);
        assert_eq!(bank.names()[0], "Quick Glance to the Side");
        assert!(bank.definitions()[6].contains("mask"));
    }
}
