//! Per-frame prediction of the three kernel coefficients from multimodal
//! features.
//!
//! Four modality vectors are projected into a shared hidden space, softly
//! fused by learned attention weights, and the projected tokens plus the
//! fused summary form a 5-token sequence. One cross-attention query per
//! coefficient reads that sequence; its context vector drives a bounded
//! correction `delta in [-0.5, 0.5]` applied multiplicatively to a base
//! value: `coeff = omega * (1 + delta)`.
//!
//! The correction heads initialize to exactly zero, so a fresh (or
//! zero-trained) model reproduces the fixed-coefficient engine bit for bit.
//! Forward passes record a tape; `backward` replays it exactly, so analytic
//! gradients match central finite differences to first order.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::CoefficientTriple;
use crate::error::{Error, Result};
use crate::io::{data_err, io_err, json_err, read_f32_blob, sibling, write_f32_blob};

pub const NUM_MODALITIES: usize = 4;
pub const MODALITY_NAMES: [&str; NUM_MODALITIES] = ["visual", "conf", "temporal", "spectrum"];
pub const MODALITY_DIMS: [usize; NUM_MODALITIES] = [1408, 11, 14, 11];
pub const DEFAULT_HIDDEN: usize = 64;
/// Default base values for (alpha, beta, gamma).
pub const DEFAULT_OMEGA: [f64; 3] = [0.05, 1.0, 0.02];
pub const COEFF_NAMES: [&str; 3] = ["alpha", "beta", "gamma"];
/// Tokens attended over: the four modality projections plus the fused summary.
const TOKENS: usize = NUM_MODALITIES + 1;

/// One frame's input features.
///
/// `temporal` uses the fixed layout: `[0]` ongoing-event count, `[1]`
/// completed-event count, `[2..13]` per-category presence flags, `[13]`
/// timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatureBundle {
    pub visual: Vec<f64>,
    pub conf: Vec<f64>,
    pub temporal: Vec<f64>,
    pub spectrum: Vec<f64>,
}

impl FrameFeatureBundle {
    pub fn zeros() -> Self {
        FrameFeatureBundle {
            visual: vec![0.0; MODALITY_DIMS[0]],
            conf: vec![0.0; MODALITY_DIMS[1]],
            temporal: vec![0.0; MODALITY_DIMS[2]],
            spectrum: vec![0.0; MODALITY_DIMS[3]],
        }
    }

    pub fn modality(&self, m: usize) -> &[f64] {
        match m {
            0 => &self.visual,
            1 => &self.conf,
            2 => &self.temporal,
            3 => &self.spectrum,
            _ => panic!("modality index {m} out of range"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in 0..NUM_MODALITIES {
            let v = self.modality(m);
            if v.len() != MODALITY_DIMS[m] {
                return Err(Error::invalid(format!(
                    "{} features have dim {}, expected {}",
                    MODALITY_NAMES[m],
                    v.len(),
                    MODALITY_DIMS[m]
                )));
            }
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::data(format!(
                    "{} features contain a non-finite value at index {i}",
                    MODALITY_NAMES[m]
                )));
            }
        }
        Ok(())
    }
}

/// Shape and placement of one tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Every tensor in blob order. The base values come last so the checkpoint
/// blob (which excludes them; they live in the manifest at full precision)
/// is simply the prefix of the flat vector.
fn tensor_specs(hidden: usize) -> Vec<TensorSpec> {
    let h = hidden;
    let mut specs: Vec<(String, usize, usize)> = Vec::new();
    for m in 0..NUM_MODALITIES {
        specs.push((format!("proj_w_{}", MODALITY_NAMES[m]), h, MODALITY_DIMS[m]));
        specs.push((format!("proj_b_{}", MODALITY_NAMES[m]), h, 1));
    }
    for m in 0..NUM_MODALITIES {
        specs.push((format!("fuse_w_{}", MODALITY_NAMES[m]), h, 1));
        specs.push((format!("fuse_b_{}", MODALITY_NAMES[m]), 1, 1));
    }
    specs.push(("fuse_out_w".into(), h, h));
    specs.push(("fuse_out_b".into(), h, 1));
    for p in COEFF_NAMES {
        specs.push((format!("query_{p}"), h, 1));
        specs.push((format!("query_map_{p}"), h, h));
    }
    specs.push(("key_map".into(), h, h));
    specs.push(("value_map".into(), h, h));
    for p in COEFF_NAMES {
        specs.push((format!("head_w_{p}"), h, 1));
        specs.push((format!("head_b_{p}"), 1, 1));
    }
    specs.push(("omega".into(), 3, 1));

    let mut offset = 0;
    specs
        .into_iter()
        .map(|(name, rows, cols)| {
            let s = TensorSpec {
                name,
                rows,
                cols,
                offset,
            };
            offset += s.len();
            s
        })
        .collect()
}

/// Precomputed offsets into the flat vector for the hot paths.
#[derive(Debug, Clone, PartialEq)]
struct Offsets {
    proj_w: [usize; NUM_MODALITIES],
    proj_b: [usize; NUM_MODALITIES],
    fuse_w: [usize; NUM_MODALITIES],
    fuse_b: [usize; NUM_MODALITIES],
    fuse_out_w: usize,
    fuse_out_b: usize,
    query: [usize; 3],
    query_map: [usize; 3],
    key_map: usize,
    value_map: usize,
    head_w: [usize; 3],
    head_b: [usize; 3],
    omega: usize,
    total: usize,
}

impl Offsets {
    fn new(hidden: usize) -> Self {
        let specs = tensor_specs(hidden);
        let find = |name: &str| {
            specs
                .iter()
                .find(|s| s.name == name)
                .unwrap_or_else(|| panic!("missing tensor {name}"))
                .offset
        };
        let per_modality = |prefix: &str| {
            let mut out = [0usize; NUM_MODALITIES];
            for m in 0..NUM_MODALITIES {
                out[m] = find(&format!("{prefix}_{}", MODALITY_NAMES[m]));
            }
            out
        };
        let per_coeff = |prefix: &str| {
            let mut out = [0usize; 3];
            for (i, p) in COEFF_NAMES.iter().enumerate() {
                out[i] = find(&format!("{prefix}_{p}"));
            }
            out
        };
        let last = specs.last().unwrap();
        Offsets {
            proj_w: per_modality("proj_w"),
            proj_b: per_modality("proj_b"),
            fuse_w: per_modality("fuse_w"),
            fuse_b: per_modality("fuse_b"),
            fuse_out_w: find("fuse_out_w"),
            fuse_out_b: find("fuse_out_b"),
            query: per_coeff("query"),
            query_map: per_coeff("query_map"),
            key_map: find("key_map"),
            value_map: find("value_map"),
            head_w: per_coeff("head_w"),
            head_b: per_coeff("head_b"),
            omega: find("omega"),
            total: last.offset + last.len(),
        }
    }
}

/// All trainable parameters in one flat vector with a fixed layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorParams {
    hidden: usize,
    off: Offsets,
    data: Vec<f64>,
}

/// Gradient buffer matching [`ModulatorParams::data`] element for element.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorGrads {
    pub data: Vec<f64>,
}

impl ModulatorGrads {
    pub fn zeros_like(params: &ModulatorParams) -> Self {
        ModulatorGrads {
            data: vec![0.0; params.data.len()],
        }
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Initialization settings; weights are Xavier-uniform, biases and the
/// correction heads are zero.
#[derive(Debug, Clone, Copy)]
pub struct ModulatorInit {
    pub hidden: usize,
    pub omega: [f64; 3],
    pub seed: u64,
}

impl Default for ModulatorInit {
    fn default() -> Self {
        ModulatorInit {
            hidden: DEFAULT_HIDDEN,
            omega: DEFAULT_OMEGA,
            seed: 0,
        }
    }
}

impl ModulatorParams {
    pub fn init(cfg: &ModulatorInit) -> Result<Self> {
        if cfg.hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        for (i, &w) in cfg.omega.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!(
                    "omega_{} must be finite and positive, got {w}",
                    COEFF_NAMES[i]
                )));
            }
        }
        let off = Offsets::new(cfg.hidden);
        let mut data = vec![0.0; off.total];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        // weights drawn in blob order; biases and heads stay exactly zero
        for spec in tensor_specs(cfg.hidden) {
            let (fan_in, fan_out) = match spec.name.as_str() {
                n if n.starts_with("proj_w") => (spec.cols, spec.rows),
                n if n.starts_with("fuse_w") => (cfg.hidden, 1),
                "fuse_out_w" | "key_map" | "value_map" => (cfg.hidden, cfg.hidden),
                n if n.starts_with("query_map") => (cfg.hidden, cfg.hidden),
                // query vectors use the square-map convention
                n if n.starts_with("query_") => (cfg.hidden, cfg.hidden),
                _ => continue, // biases, heads, omega
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut data[spec.offset..spec.offset + spec.len()] {
                *v = rng.gen_range(-limit..=limit);
            }
        }
        data[off.omega..off.omega + 3].copy_from_slice(&cfg.omega);
        Ok(ModulatorParams {
            hidden: cfg.hidden,
            off,
            data,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn omega(&self) -> [f64; 3] {
        [
            self.data[self.off.omega],
            self.data[self.off.omega + 1],
            self.data[self.off.omega + 2],
        ]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn parameter_count(&self) -> usize {
        self.data.len()
    }

    /// Name, shape and offset of every tensor; the parameter count is the
    /// sum of the listed sizes and depends only on the hidden width.
    pub fn shape_report(&self) -> Vec<TensorSpec> {
        tensor_specs(self.hidden)
    }

    fn w(&self, offset: usize, len: usize) -> &[f64] {
        &self.data[offset..offset + len]
    }
}

/// Result of one modulation step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorOutput {
    pub coeffs: CoefficientTriple,
    /// Bounded corrections, one per coefficient.
    pub deltas: [f64; 3],
    /// Softmax attention over the four modalities; sums to 1.
    pub fusion_weights: [f64; NUM_MODALITIES],
}

/// Every intermediate needed to replay the forward pass backwards.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    bundle: FrameFeatureBundle,
    z: [Vec<f64>; NUM_MODALITIES],
    fuse_weights: [f64; NUM_MODALITIES],
    u: Vec<f64>,
    h: Vec<f64>,
    k: Vec<f64>, // TOKENS x H
    v: Vec<f64>, // TOKENS x H
    q: [Vec<f64>; 3],
    attn: [[f64; TOKENS]; 3],
    ctx: [Vec<f64>; 3],
    head_tanh: [f64; 3],
    deltas: [f64; 3],
}

fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(w.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        out.push(row.iter().zip(x).map(|(a, b)| a * b).sum());
    }
    out
}

fn softmax<const N: usize>(logits: &[f64; N]) -> [f64; N] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N];
    let mut sum = 0.0;
    for i in 0..N {
        out[i] = (logits[i] - max).exp();
        sum += out[i];
    }
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// Forward pass returning coefficients only.
pub fn modulate(params: &ModulatorParams, bundle: &FrameFeatureBundle) -> Result<ModulatorOutput> {
    modulate_traced(params, bundle).map(|(out, _)| out)
}

/// Forward pass that also returns the tape for [`backward`].
pub fn modulate_traced(
    params: &ModulatorParams,
    bundle: &FrameFeatureBundle,
) -> Result<(ModulatorOutput, ForwardTape)> {
    bundle.validate()?;
    let h = params.hidden;
    let off = &params.off;

    // modality projections
    let mut z: [Vec<f64>; NUM_MODALITIES] = Default::default();
    for m in 0..NUM_MODALITIES {
        let x = bundle.modality(m);
        let mut pre = matvec(params.w(off.proj_w[m], h * x.len()), x, h, x.len());
        let b = params.w(off.proj_b[m], h);
        for i in 0..h {
            pre[i] = (pre[i] + b[i]).tanh();
        }
        z[m] = pre;
    }

    // modality attention and fused summary
    let mut logits = [0.0; NUM_MODALITIES];
    for m in 0..NUM_MODALITIES {
        let wv = params.w(off.fuse_w[m], h);
        logits[m] = wv.iter().zip(&z[m]).map(|(a, b)| a * b).sum::<f64>()
            + params.data[off.fuse_b[m]];
    }
    let fuse_weights = softmax(&logits);
    let mut u = vec![0.0; h];
    for m in 0..NUM_MODALITIES {
        for i in 0..h {
            u[i] += fuse_weights[m] * z[m][i];
        }
    }
    let mut hvec = matvec(params.w(off.fuse_out_w, h * h), &u, h, h);
    let bf = params.w(off.fuse_out_b, h);
    for i in 0..h {
        hvec[i] = (hvec[i] + bf[i]).tanh();
    }

    // 5-token sequence: projected modalities plus the fused summary
    let token = |r: usize| -> &[f64] {
        if r < NUM_MODALITIES {
            &z[r]
        } else {
            &hvec
        }
    };
    let wk = params.w(off.key_map, h * h);
    let wv = params.w(off.value_map, h * h);
    let mut k = vec![0.0; TOKENS * h];
    let mut v = vec![0.0; TOKENS * h];
    for r in 0..TOKENS {
        let s = token(r);
        for j in 0..h {
            let mut ak = 0.0;
            let mut av = 0.0;
            for i in 0..h {
                ak += s[i] * wk[i * h + j];
                av += s[i] * wv[i * h + j];
            }
            k[r * h + j] = ak;
            v[r * h + j] = av;
        }
    }

    // one cross-attention read per coefficient
    let scale = 1.0 / (h as f64).sqrt();
    let mut q: [Vec<f64>; 3] = Default::default();
    let mut attn = [[0.0; TOKENS]; 3];
    let mut ctx: [Vec<f64>; 3] = Default::default();
    let mut head_tanh = [0.0; 3];
    let mut deltas = [0.0; 3];
    let omega = params.omega();
    let mut coeff_values = [0.0; 3];
    for p in 0..3 {
        let qp = params.w(off.query[p], h);
        let wq = params.w(off.query_map[p], h * h);
        let mut qrow = vec![0.0; h];
        for j in 0..h {
            let mut acc = 0.0;
            for i in 0..h {
                acc += qp[i] * wq[i * h + j];
            }
            qrow[j] = acc;
        }
        let mut logits = [0.0; TOKENS];
        for r in 0..TOKENS {
            let mut acc = 0.0;
            for j in 0..h {
                acc += qrow[j] * k[r * h + j];
            }
            logits[r] = acc * scale;
        }
        let weights = softmax(&logits);
        let mut c = vec![0.0; h];
        for r in 0..TOKENS {
            for j in 0..h {
                c[j] += weights[r] * v[r * h + j];
            }
        }
        let hw = params.w(off.head_w[p], h);
        let s = hw.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + params.data[off.head_b[p]];
        let t = s.tanh();
        deltas[p] = 0.5 * t;
        coeff_values[p] = omega[p] * (1.0 + deltas[p]);

        q[p] = qrow;
        attn[p] = weights;
        ctx[p] = c;
        head_tanh[p] = t;
    }

    if coeff_values.iter().any(|c| !c.is_finite()) {
        return Err(Error::numeric(
            "modulator produced non-finite coefficients; parameters are corrupt",
        ));
    }
    let output = ModulatorOutput {
        coeffs: CoefficientTriple {
            alpha: coeff_values[0],
            beta: coeff_values[1],
            gamma: coeff_values[2],
        },
        deltas,
        fusion_weights: fuse_weights,
    };
    let tape = ForwardTape {
        bundle: bundle.clone(),
        z,
        fuse_weights,
        u,
        h: hvec,
        k,
        v,
        q,
        attn,
        ctx,
        head_tanh,
        deltas,
    };
    Ok((output, tape))
}

/// Exact reverse pass. `upstream` holds dL/d(alpha, beta, gamma) for the
/// frame the tape came from; parameter gradients are accumulated into
/// `grads` (call [`ModulatorGrads::zero`] between steps, not between frames).
pub fn backward(
    params: &ModulatorParams,
    tape: &ForwardTape,
    upstream: [f64; 3],
    grads: &mut ModulatorGrads,
) -> Result<()> {
    if grads.data.len() != params.data.len() {
        return Err(Error::invalid("gradient buffer does not match parameters"));
    }
    let h = params.hidden;
    let off = &params.off;
    let scale = 1.0 / (h as f64).sqrt();
    let omega = params.omega();

    let mut d_s = vec![0.0; TOKENS * h]; // gradient on the token rows
    let mut d_k = vec![0.0; TOKENS * h];
    let mut d_v = vec![0.0; TOKENS * h];

    for p in 0..3 {
        let g_coeff = upstream[p];
        if g_coeff == 0.0 {
            continue;
        }
        // coeff = omega * (1 + delta), delta = 0.5 tanh(s)
        grads.data[off.omega + p] += g_coeff * (1.0 + tape.deltas[p]);
        let d_delta = g_coeff * omega[p];
        let t = tape.head_tanh[p];
        let d_s_head = 0.5 * d_delta * (1.0 - t * t);

        let hw = params.w(off.head_w[p], h);
        let c = &tape.ctx[p];
        for j in 0..h {
            grads.data[off.head_w[p] + j] += d_s_head * c[j];
        }
        grads.data[off.head_b[p]] += d_s_head;

        // context -> attention weights and values
        let mut d_attn = [0.0; TOKENS];
        for r in 0..TOKENS {
            let mut acc = 0.0;
            for j in 0..h {
                let d_c = d_s_head * hw[j];
                acc += d_c * tape.v[r * h + j];
                d_v[r * h + j] += tape.attn[p][r] * d_c;
            }
            d_attn[r] = acc;
        }
        // softmax backward
        let dot: f64 = (0..TOKENS).map(|r| tape.attn[p][r] * d_attn[r]).sum();
        let mut d_logits = [0.0; TOKENS];
        for r in 0..TOKENS {
            d_logits[r] = tape.attn[p][r] * (d_attn[r] - dot);
        }
        // logits = (q . k_r) * scale
        let qp = params.w(off.query[p], h);
        let wq = params.w(off.query_map[p], h * h);
        let mut d_q = vec![0.0; h];
        for r in 0..TOKENS {
            let dl = d_logits[r] * scale;
            for j in 0..h {
                d_q[j] += dl * tape.k[r * h + j];
                d_k[r * h + j] += dl * tape.q[p][j];
            }
        }
        // q_row = q_p W^Q
        for i in 0..h {
            let mut acc = 0.0;
            for j in 0..h {
                acc += wq[i * h + j] * d_q[j];
                grads.data[off.query_map[p] + i * h + j] += qp[i] * d_q[j];
            }
            grads.data[off.query[p] + i] += acc;
        }
    }

    // K = S W^K, V = S W^V (shared across coefficients)
    let wk = params.w(off.key_map, h * h);
    let wv = params.w(off.value_map, h * h);
    let token = |r: usize| -> &[f64] {
        if r < NUM_MODALITIES {
            &tape.z[r]
        } else {
            &tape.h
        }
    };
    for r in 0..TOKENS {
        let s = token(r);
        for i in 0..h {
            let mut acc = 0.0;
            for j in 0..h {
                let dk = d_k[r * h + j];
                let dv = d_v[r * h + j];
                acc += wk[i * h + j] * dk + wv[i * h + j] * dv;
                grads.data[off.key_map + i * h + j] += s[i] * dk;
                grads.data[off.value_map + i * h + j] += s[i] * dv;
            }
            d_s[r * h + i] += acc;
        }
    }

    // fused summary h = tanh(W_f u + b_f)
    let mut d_u = vec![0.0; h];
    {
        let wf = params.w(off.fuse_out_w, h * h);
        for i in 0..h {
            let d_pre = d_s[NUM_MODALITIES * h + i] * (1.0 - tape.h[i] * tape.h[i]);
            grads.data[off.fuse_out_b + i] += d_pre;
            for j in 0..h {
                grads.data[off.fuse_out_w + i * h + j] += d_pre * tape.u[j];
                d_u[j] += d_pre * wf[i * h + j];
            }
        }
    }

    // u = sum_m w_m z_m, weights from softmax over fusion logits
    let mut d_weight = [0.0; NUM_MODALITIES];
    for m in 0..NUM_MODALITIES {
        d_weight[m] = d_u.iter().zip(&tape.z[m]).map(|(a, b)| a * b).sum();
    }
    let dot: f64 = (0..NUM_MODALITIES)
        .map(|m| tape.fuse_weights[m] * d_weight[m])
        .sum();
    for m in 0..NUM_MODALITIES {
        let d_logit = tape.fuse_weights[m] * (d_weight[m] - dot);
        let fw = params.w(off.fuse_w[m], h);
        let x = tape.bundle.modality(m);
        let dim = MODALITY_DIMS[m];
        for i in 0..h {
            // token-path + fusion-sum + fusion-logit contributions
            let d_z = d_s[m * h + i] + tape.fuse_weights[m] * d_u[i] + d_logit * fw[i];
            grads.data[off.fuse_w[m] + i] += d_logit * tape.z[m][i];
            let d_pre = d_z * (1.0 - tape.z[m][i] * tape.z[m][i]);
            grads.data[off.proj_b[m] + i] += d_pre;
            let row = off.proj_w[m] + i * dim;
            for (j, &xj) in x.iter().enumerate() {
                grads.data[row + j] += d_pre * xj;
            }
        }
        grads.data[off.fuse_b[m]] += d_logit;
    }
    Ok(())
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointManifest {
    format_version: u32,
    hidden: usize,
    omega: OmegaEntry,
    tensors: Vec<TensorSpec>,
    data_file: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OmegaEntry {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

/// Writes the manifest plus a float32 blob of every tensor except the base
/// values, which stay in the manifest at full precision so that a zero-head
/// checkpoint reproduces fixed coefficients exactly.
pub fn save_checkpoint(params: &ModulatorParams, manifest_path: &Path) -> Result<()> {
    let data_file = manifest_path
        .file_stem()
        .map(|s| format!("{}.f32", s.to_string_lossy()))
        .unwrap_or_else(|| "checkpoint.f32".into());
    let specs: Vec<TensorSpec> = params
        .shape_report()
        .into_iter()
        .filter(|s| s.name != "omega")
        .collect();
    let omega = params.omega();
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        hidden: params.hidden,
        omega: OmegaEntry {
            alpha: omega[0],
            beta: omega[1],
            gamma: omega[2],
        },
        tensors: specs,
        data_file: data_file.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(manifest_path, text).map_err(|e| io_err(manifest_path, e))?;
    write_f32_blob(
        &sibling(manifest_path, &data_file),
        &params.data[..params.off.omega],
    )
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<ModulatorParams> {
    let text = fs::read_to_string(manifest_path).map_err(|e| io_err(manifest_path, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| json_err(manifest_path, e))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(data_err(
            manifest_path,
            format!(
                "unsupported checkpoint version {} (this build reads {CHECKPOINT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    if manifest.hidden == 0 {
        return Err(data_err(manifest_path, "hidden width must be positive"));
    }
    let expected: Vec<TensorSpec> = tensor_specs(manifest.hidden)
        .into_iter()
        .filter(|s| s.name != "omega")
        .collect();
    if manifest.tensors.len() != expected.len()
        || manifest
            .tensors
            .iter()
            .zip(&expected)
            .any(|(a, b)| a.name != b.name || a.rows != b.rows || a.cols != b.cols)
    {
        return Err(data_err(
            manifest_path,
            "checkpoint tensor list does not match this build's layout",
        ));
    }
    let off = Offsets::new(manifest.hidden);
    let weights = read_f32_blob(&sibling(manifest_path, &manifest.data_file), off.omega)?;
    for (i, &w) in [manifest.omega.alpha, manifest.omega.beta, manifest.omega.gamma]
        .iter()
        .enumerate()
    {
        if !(w.is_finite() && w > 0.0) {
            return Err(data_err(
                manifest_path,
                format!("omega_{} must be finite and positive, got {w}", COEFF_NAMES[i]),
            ));
        }
    }
    if let Some(i) = weights.iter().position(|v| !v.is_finite()) {
        return Err(data_err(
            manifest_path,
            format!("non-finite weight at element {i}"),
        ));
    }
    let mut data = weights;
    data.push(manifest.omega.alpha);
    data.push(manifest.omega.beta);
    data.push(manifest.omega.gamma);
    Ok(ModulatorParams {
        hidden: manifest.hidden,
        off,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_bundle(rng: &mut ChaCha8Rng) -> FrameFeatureBundle {
        let mut fill = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        FrameFeatureBundle {
            visual: fill(MODALITY_DIMS[0]),
            conf: fill(MODALITY_DIMS[1]),
            temporal: fill(MODALITY_DIMS[2]),
            spectrum: fill(MODALITY_DIMS[3]),
        }
    }

    fn randomize_heads(params: &mut ModulatorParams, rng: &mut ChaCha8Rng) {
        let off = params.off.clone();
        let h = params.hidden;
        for p in 0..3 {
            for i in 0..h {
                params.data[off.head_w[p] + i] = rng.gen_range(-0.3..0.3);
            }
            params.data[off.head_b[p]] = rng.gen_range(-0.2..0.2);
        }
    }

    #[test]
    fn parameter_count_matches_the_layout() {
        let params = ModulatorParams::init(&ModulatorInit::default()).unwrap();
        let h = 64usize;
        let proj: usize = MODALITY_DIMS.iter().map(|d| h * d + h).sum();
        let fuse = 4 * (h + 1);
        let fuse_out = h * h + h;
        let queries = 3 * (h + h * h);
        let shared_maps = 2 * h * h;
        let heads = 3 * (h + 1);
        let expected = proj + fuse + fuse_out + queries + shared_maps + heads + 3;
        assert_eq!(params.parameter_count(), expected);
        let report = params.shape_report();
        let total: usize = report.iter().map(|s| s.len()).sum();
        assert_eq!(total, expected);
        assert_eq!(report.last().unwrap().name, "omega");
    }

    #[test]
    fn fresh_init_reproduces_base_values_bitwise() {
        let params = ModulatorParams::init(&ModulatorInit {
            seed: 7,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let bundle = random_bundle(&mut rng);
            let out = modulate(&params, &bundle).unwrap();
            assert_eq!(out.coeffs.alpha.to_bits(), DEFAULT_OMEGA[0].to_bits());
            assert_eq!(out.coeffs.beta.to_bits(), DEFAULT_OMEGA[1].to_bits());
            assert_eq!(out.coeffs.gamma.to_bits(), DEFAULT_OMEGA[2].to_bits());
            assert_eq!(out.deltas, [0.0; 3]);
        }
    }

    #[test]
    fn zero_bundle_gives_uniform_attention() {
        let params = ModulatorParams::init(&ModulatorInit {
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let (out, tape) = modulate_traced(&params, &FrameFeatureBundle::zeros()).unwrap();
        for w in out.fusion_weights {
            assert!((w - 0.25).abs() < 1e-15);
        }
        for p in 0..3 {
            for w in tape.attn[p] {
                assert!((w - 0.2).abs() < 1e-15);
            }
        }
        for zm in &tape.z {
            assert!(zm.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fusion_weights_ignore_a_common_logit_shift() {
        let base = ModulatorParams::init(&ModulatorInit {
            seed: 21,
            ..Default::default()
        })
        .unwrap();
        let mut shifted = base.clone();
        for m in 0..NUM_MODALITIES {
            let at = shifted.off.fuse_b[m];
            shifted.data[at] += 3.75;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bundle = random_bundle(&mut rng);
        let a = modulate(&base, &bundle).unwrap();
        let b = modulate(&shifted, &bundle).unwrap();
        for (wa, wb) in a.fusion_weights.iter().zip(b.fusion_weights) {
            assert!((wa - wb).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_stay_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 17,
            ..Default::default()
        })
        .unwrap();
        randomize_heads(&mut params, &mut rng);
        let omega = params.omega();
        for _ in 0..10 {
            let bundle = random_bundle(&mut rng);
            let out = modulate(&params, &bundle).unwrap();
            let sum: f64 = out.fusion_weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for p in 0..3 {
                assert!(out.deltas[p] > -0.5 && out.deltas[p] < 0.5);
            }
            for (c, w) in [out.coeffs.alpha, out.coeffs.beta, out.coeffs.gamma]
                .iter()
                .zip(omega)
            {
                assert!(c.is_finite());
                assert!(*c > 0.5 * w - 1e-15 && *c < 1.5 * w + 1e-15);
            }
        }
    }

    #[test]
    fn saturated_heads_pin_the_correction_range() {
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let off = params.off.clone();
        params.data[off.head_b[0]] = 50.0;
        params.data[off.head_b[1]] = -50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bundle = random_bundle(&mut rng);
        let out = modulate(&params, &bundle).unwrap();
        let omega = params.omega();
        assert!((out.coeffs.alpha - 1.5 * omega[0]).abs() < 1e-12);
        assert!((out.coeffs.beta - 0.5 * omega[1]).abs() < 1e-12);
        assert_eq!(out.coeffs.gamma.to_bits(), omega[2].to_bits());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 31,
            ..Default::default()
        })
        .unwrap();
        randomize_heads(&mut params, &mut rng);
        let bundle = random_bundle(&mut rng);
        let a = modulate(&params, &bundle).unwrap();
        let b = modulate(&params, &bundle).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bundles_with_bad_shapes_or_values_are_refused() {
        let params = ModulatorParams::init(&ModulatorInit::default()).unwrap();
        let mut short = FrameFeatureBundle::zeros();
        short.visual.pop();
        assert!(matches!(
            modulate(&params, &short),
            Err(Error::InvalidArgument(_))
        ));
        let mut poisoned = FrameFeatureBundle::zeros();
        poisoned.conf[3] = f64::NAN;
        assert!(matches!(modulate(&params, &poisoned), Err(Error::Data(_))));
    }

    #[test]
    fn zero_upstream_leaves_gradients_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 41,
            ..Default::default()
        })
        .unwrap();
        randomize_heads(&mut params, &mut rng);
        let bundle = random_bundle(&mut rng);
        let (_, tape) = modulate_traced(&params, &bundle).unwrap();
        let mut grads = ModulatorGrads::zeros_like(&params);
        backward(&params, &tape, [0.0; 3], &mut grads).unwrap();
        assert!(grads.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_head_gradients_stop_at_the_heads() {
        // with zero correction heads only omega and the active head tensors
        // can receive gradient
        let params = ModulatorParams::init(&ModulatorInit {
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bundle = random_bundle(&mut rng);
        let (out, tape) = modulate_traced(&params, &bundle).unwrap();
        assert_eq!(out.deltas, [0.0; 3]);
        let mut grads = ModulatorGrads::zeros_like(&params);
        backward(&params, &tape, [1.0, 0.0, 0.0], &mut grads).unwrap();
        let off = params.off.clone();
        assert_eq!(grads.data[off.omega], 1.0);
        assert_eq!(grads.data[off.omega + 1], 0.0);
        let head_grad_norm: f64 = (0..params.hidden)
            .map(|i| grads.data[off.head_w[0] + i].abs())
            .sum();
        assert!(head_grad_norm > 0.0);
        let touched: Vec<usize> = grads
            .data
            .iter()
            .enumerate()
            .filter(|(_, g)| **g != 0.0)
            .map(|(i, _)| i)
            .collect();
        let allowed = |i: usize| {
            (i >= off.head_w[0] && i < off.head_w[0] + params.hidden)
                || i == off.head_b[0]
                || i == off.omega
        };
        assert!(touched.iter().all(|&i| allowed(i)));
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 2024,
            ..Default::default()
        })
        .unwrap();
        randomize_heads(&mut params, &mut rng);
        let bundle = random_bundle(&mut rng);
        let upstream = [0.8, -1.1, 0.6];

        let (_, tape) = modulate_traced(&params, &bundle).unwrap();
        let mut grads = ModulatorGrads::zeros_like(&params);
        backward(&params, &tape, upstream, &mut grads).unwrap();

        let eval = |p: &ModulatorParams| -> f64 {
            let out = modulate(p, &bundle).unwrap();
            upstream[0] * out.coeffs.alpha
                + upstream[1] * out.coeffs.beta
                + upstream[2] * out.coeffs.gamma
        };
        let h = 1e-5;
        let mut checked = 0usize;
        for spec in params.shape_report() {
            let samples = spec.len().min(4);
            for _ in 0..samples {
                let idx = spec.offset + rng.gen_range(0..spec.len());
                let mut plus = params.clone();
                plus.data[idx] += h;
                let mut minus = params.clone();
                minus.data[idx] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let analytic = grads.data[idx];
                let denom = numeric.abs().max(analytic.abs());
                if denom < 1e-7 {
                    assert!(
                        (numeric - analytic).abs() < 1e-7,
                        "{} [{}]: numeric {numeric} vs analytic {analytic}",
                        spec.name,
                        idx - spec.offset
                    );
                } else {
                    let rel = (numeric - analytic).abs() / denom;
                    assert!(
                        rel < 1e-4,
                        "{} [{}]: numeric {numeric} vs analytic {analytic} (rel {rel})",
                        spec.name,
                        idx - spec.offset
                    );
                }
                checked += 1;
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn checkpoint_round_trips_and_resaves_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: 77,
            ..Default::default()
        })
        .unwrap();
        randomize_heads(&mut params, &mut rng);
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.hidden(), params.hidden());
        let omega_off = params.off.omega;
        for i in 0..omega_off {
            assert_eq!(loaded.data[i], (params.data[i] as f32) as f64);
        }
        assert_eq!(loaded.omega(), params.omega());

        let again = dir.path().join("model2.json");
        save_checkpoint(&loaded, &again).unwrap();
        let manifest_a = std::fs::read(dir.path().join("model.f32")).unwrap();
        let manifest_b = std::fs::read(dir.path().join("model2.f32")).unwrap();
        assert_eq!(manifest_a, manifest_b);
    }

    #[test]
    fn zero_head_initialization_survives_the_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fresh.json");
        let params = ModulatorParams::init(&ModulatorInit {
            seed: 123,
            ..Default::default()
        })
        .unwrap();
        save_checkpoint(&params, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bundle = random_bundle(&mut rng);
        let out = modulate(&loaded, &bundle).unwrap();
        let omega = params.omega();
        assert_eq!(out.coeffs.alpha.to_bits(), omega[0].to_bits());
        assert_eq!(out.coeffs.beta.to_bits(), omega[1].to_bits());
        assert_eq!(out.coeffs.gamma.to_bits(), omega[2].to_bits());
    }

    #[test]
    fn damaged_checkpoints_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let params = ModulatorParams::init(&ModulatorInit::default()).unwrap();
        save_checkpoint(&params, &path).unwrap();

        let blob = dir.path().join("model.f32");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        std::fs::write(&blob, &bytes).unwrap();
        assert!(load_checkpoint(&path).is_ok());

        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"format_version\": 1", "\"format_version\": 9");
        std::fs::write(&path, tampered).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let tampered = text.replace("\"hidden\": 64", "\"hidden\": 32");
        std::fs::write(&path, tampered).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let omega = params.omega();
        let needle = format!("\"alpha\": {}", omega[0]);
        assert!(text.contains(&needle));
        let tampered = text.replace(&needle, "\"alpha\": 0.0");
        std::fs::write(&path, tampered).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
