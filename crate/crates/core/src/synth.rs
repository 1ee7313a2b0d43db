//! Synthetic sequence generator for controlled experiments.
//!
//! Each track gets a latent slow-varying context signal built from a few
//! random sinusoids. A teacher varies the three kernel coefficients with
//! that context and scores the generated event stream to produce the target
//! curve; the context is also planted in the visual features along a fixed
//! direction, so a model can in principle recover what the teacher used.
//! Everything derives from one master seed through per-sequence substreams,
//! making generation reproducible and order-independent.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use crate::anchor::{AnchorBank, NUM_ANCHORS};
use crate::engine::{score_sequence, CoefficientTriple};
use crate::error::{Error, Result};
use crate::event::{partition_at, ActionEvent, Sequence, NUM_CATEGORIES};
use crate::modulator::{FrameFeatureBundle, DEFAULT_OMEGA, MODALITY_DIMS};
use crate::seeding::derive_seed;
use crate::train::TrainSequence;

/// Dimension of the synthetic embedding space the spectrum features are
/// computed in.
pub const EMBED_DIM: usize = 64;
/// Scale of the context direction planted in the visual features.
const CONTEXT_VISUAL_GAIN: f64 = 3.0;
/// Substream ids for assets shared by every sequence of a dataset.
const ASSET_STREAM: u64 = 0xA55E;
const SPLIT_STREAM: u64 = 0x5711;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub fps: f64,
    /// Per-frame arrival probability for each category.
    pub arrival_rates: Vec<f64>,
    /// Mean duration in frames for each category (geometric, clipped to the
    /// track).
    pub mean_durations: Vec<f64>,
    /// Per-frame probability of a low-confidence distractor detection.
    pub distractor_rate: f64,
    /// Number of sinusoids in the context signal.
    pub context_components: usize,
    /// Peak magnitude of the context signal.
    pub context_amplitude: f64,
    /// Multiplies the sinusoid frequencies; >1 makes the context wiggle
    /// faster than the teacher regime was designed for.
    pub freq_scale: f64,
    /// Std-dev of the white noise added to every visual dimension.
    pub noise_std: f64,
    /// Adds frame-level noise to the teacher's coefficient multipliers.
    pub misspecified: bool,
    /// Teacher base coefficients.
    pub omega: [f64; 3],
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            num_sequences: 24,
            frames_per_sequence: 600,
            fps: 30.0,
            arrival_rates: vec![
                0.004, 0.003, 0.002, 0.004, 0.002, 0.003, 0.002, 0.002, 0.003, 0.002, 0.003,
            ],
            mean_durations: vec![
                8.0, 12.0, 20.0, 6.0, 10.0, 15.0, 25.0, 8.0, 5.0, 6.0, 10.0,
            ],
            distractor_rate: 0.004,
            context_components: 3,
            context_amplitude: 0.8,
            freq_scale: 1.0,
            noise_std: 0.05,
            misspecified: false,
            omega: DEFAULT_OMEGA,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_sequences == 0 {
            return Err(Error::invalid("num_sequences must be at least 1"));
        }
        if self.frames_per_sequence < 2 {
            return Err(Error::invalid("frames_per_sequence must be at least 2"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("fps must be finite and positive"));
        }
        if self.arrival_rates.len() != NUM_CATEGORIES {
            return Err(Error::invalid(format!(
                "arrival_rates needs {NUM_CATEGORIES} entries, got {}",
                self.arrival_rates.len()
            )));
        }
        if self.mean_durations.len() != NUM_CATEGORIES {
            return Err(Error::invalid(format!(
                "mean_durations needs {NUM_CATEGORIES} entries, got {}",
                self.mean_durations.len()
            )));
        }
        for (c, &r) in self.arrival_rates.iter().enumerate() {
            if !(r.is_finite() && (0.0..1.0).contains(&r)) {
                return Err(Error::invalid(format!(
                    "arrival_rates[{c}] must lie in [0, 1), got {r}"
                )));
            }
        }
        for (c, &d) in self.mean_durations.iter().enumerate() {
            if !(d.is_finite() && d >= 1.0) {
                return Err(Error::invalid(format!(
                    "mean_durations[{c}] must be at least 1 frame, got {d}"
                )));
            }
        }
        if !(self.distractor_rate.is_finite() && (0.0..1.0).contains(&self.distractor_rate)) {
            return Err(Error::invalid("distractor_rate must lie in [0, 1)"));
        }
        if self.context_components == 0 {
            return Err(Error::invalid("context_components must be at least 1"));
        }
        if !(self.context_amplitude.is_finite() && (0.0..=1.0).contains(&self.context_amplitude)) {
            return Err(Error::invalid("context_amplitude must lie in [0, 1]"));
        }
        if !(self.freq_scale.is_finite() && self.freq_scale > 0.0) {
            return Err(Error::invalid("freq_scale must be finite and positive"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::invalid("noise_std must be finite and non-negative"));
        }
        for (i, &w) in self.omega.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!(
                    "omega[{i}] must be finite and positive, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Directions and patterns shared by all sequences of one dataset.
struct SharedAssets {
    /// Unit direction carrying the context signal in visual space.
    context_dir: Vec<f64>,
    /// Additive visual pattern per category.
    patterns: Vec<Vec<f64>>,
    /// Reference embeddings the spectrum features are measured against.
    bank: AnchorBank,
    /// Baseline embedding present in every frame.
    base_embed: Vec<f64>,
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("valid normal");
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn shared_assets(seed: u64) -> SharedAssets {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ASSET_STREAM));
    let normal = Normal::new(0.0, 0.35).expect("valid normal");
    let context_dir = unit_vector(&mut rng, MODALITY_DIMS[0]);
    let patterns = (0..NUM_CATEGORIES)
        .map(|_| {
            (0..MODALITY_DIMS[0])
                .map(|_| normal.sample(&mut rng))
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(NUM_ANCHORS * EMBED_DIM);
    for _ in 0..NUM_ANCHORS {
        rows.extend(unit_vector(&mut rng, EMBED_DIM));
    }
    let bank = AnchorBank::with_builtin_labels(EMBED_DIM, rows).expect("unit rows form a bank");
    let base_embed = unit_vector(&mut rng, EMBED_DIM);
    SharedAssets {
        context_dir,
        patterns,
        bank,
        base_embed,
    }
}

/// Builds a reference bank of synthetic embeddings, one per category.
/// Real deployments replace this with embeddings of the category
/// definitions; the synthetic rows keep the same shape and normalization.
pub fn synthetic_anchor_bank(seed: u64) -> AnchorBank {
    shared_assets(seed).bank
}

/// A generated dataset: training samples plus the latent context signal
/// each target was produced under.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub items: Vec<TrainSequence>,
    /// Per sequence, the context value at every frame.
    pub contexts: Vec<Vec<f64>>,
    /// Per sequence, the pre-squash accumulator behind each target value.
    pub gt_raw: Vec<Vec<f64>>,
}

fn generate_events(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<ActionEvent> {
    let frames = cfg.frames_per_sequence;
    let mut events = Vec::new();
    let duration = |rng: &mut ChaCha8Rng, c: usize, t: usize| {
        let p = (1.0 / cfg.mean_durations[c]).min(1.0);
        let geo = Geometric::new(p).expect("p in (0, 1]");
        let extra = geo.sample(rng) as usize;
        (t + extra).min(frames - 1)
    };
    for t in 0..frames {
        for c in 0..NUM_CATEGORIES {
            if rng.gen::<f64>() < cfg.arrival_rates[c] {
                let end = duration(rng, c, t);
                events.push(ActionEvent {
                    category: c,
                    start: t,
                    end,
                    confidence: rng.gen_range(0.6..1.0),
                });
            }
        }
        if rng.gen::<f64>() < cfg.distractor_rate {
            let c = rng.gen_range(0..NUM_CATEGORIES);
            let end = duration(rng, c, t);
            events.push(ActionEvent {
                category: c,
                start: t,
                end,
                confidence: rng.gen_range(0.2..0.6),
            });
        }
    }
    events
}

fn context_signal(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let frames = cfg.frames_per_sequence;
    let k = cfg.context_components;
    let comps: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.gen_range(0.5..3.0) * cfg.freq_scale,
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();
    (0..frames)
        .map(|t| {
            let x = t as f64 / frames as f64;
            let s: f64 = comps.iter().map(|(f, phi)| (TAU * f * x + phi).sin()).sum();
            cfg.context_amplitude * s / k as f64
        })
        .collect()
}

fn teacher_history(
    cfg: &SynthConfig,
    context: &[f64],
    rng: &mut ChaCha8Rng,
) -> Vec<CoefficientTriple> {
    let noise = Normal::new(0.0, 0.15).expect("valid normal");
    context
        .iter()
        .map(|&kappa| {
            let mut mult = [0.0; 3];
            for m in &mut mult {
                *m = 1.0 + 0.5 * kappa;
                if cfg.misspecified {
                    *m = (*m + noise.sample(rng)).clamp(0.5, 1.5);
                }
            }
            CoefficientTriple {
                alpha: cfg.omega[0] * mult[0],
                beta: cfg.omega[1] * mult[1],
                gamma: cfg.omega[2] * mult[2],
            }
        })
        .collect()
}

fn generate_sequence(
    cfg: &SynthConfig,
    assets: &SharedAssets,
    index: usize,
) -> Result<(TrainSequence, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, index as u64));
    let frames = cfg.frames_per_sequence;
    let seq = Sequence {
        id: format!("synth-{:04}", index),
        num_frames: frames,
        fps: cfg.fps,
        events: generate_events(cfg, &mut rng),
    };
    let context = context_signal(cfg, &mut rng);
    let history = teacher_history(cfg, &context, &mut rng);
    let gt_curve = score_sequence(&seq, &history)?;
    let gt = gt_curve.scores;

    let visual_noise = Normal::new(0.0, cfg.noise_std).expect("valid normal");
    let embed_noise = Normal::new(0.0, 0.05).expect("valid normal");
    let mut features = Vec::with_capacity(frames);
    for t in 0..frames {
        let part = partition_at(&seq, t)?;

        let mut conf = vec![0.0; NUM_CATEGORIES];
        let mut flags = [0.0; NUM_CATEGORIES];
        for &idx in &part.current {
            let ev = &seq.events[idx];
            flags[ev.category] = 1.0;
            if ev.confidence > conf[ev.category] {
                conf[ev.category] = ev.confidence;
            }
        }

        let mut temporal = Vec::with_capacity(MODALITY_DIMS[2]);
        temporal.push(part.current.len() as f64);
        temporal.push(part.past.len() as f64);
        temporal.extend_from_slice(&flags);
        temporal.push(t as f64 / (frames - 1) as f64);

        let kappa = context[t];
        let mut visual = vec![0.0; MODALITY_DIMS[0]];
        for j in 0..MODALITY_DIMS[0] {
            visual[j] = kappa * CONTEXT_VISUAL_GAIN * assets.context_dir[j];
        }
        for c in 0..NUM_CATEGORIES {
            if flags[c] > 0.0 {
                for j in 0..MODALITY_DIMS[0] {
                    visual[j] += assets.patterns[c][j];
                }
            }
        }
        if cfg.noise_std > 0.0 {
            for v in &mut visual {
                *v += visual_noise.sample(&mut rng);
            }
        }

        let mut embed = vec![0.0; EMBED_DIM];
        for j in 0..EMBED_DIM {
            embed[j] = 0.3 * assets.base_embed[j];
        }
        for c in 0..NUM_CATEGORIES {
            if conf[c] > 0.0 {
                let row = assets.bank.row(c);
                for j in 0..EMBED_DIM {
                    embed[j] += conf[c] * row[j];
                }
            }
        }
        for e in &mut embed {
            *e += embed_noise.sample(&mut rng);
        }
        let spectrum = crate::anchor::spectrum(&embed, &assets.bank)?;

        features.push(FrameFeatureBundle {
            visual,
            conf,
            temporal,
            spectrum: spectrum.as_slice().to_vec(),
        });
    }
    Ok((TrainSequence { seq, features, gt }, context, gt_curve.raw))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let assets = shared_assets(cfg.seed);
    let mut items = Vec::with_capacity(cfg.num_sequences);
    let mut contexts = Vec::with_capacity(cfg.num_sequences);
    let mut gt_raw = Vec::with_capacity(cfg.num_sequences);
    for i in 0..cfg.num_sequences {
        let (item, context, raw) = generate_sequence(cfg, &assets, i)?;
        items.push(item);
        contexts.push(context);
        gt_raw.push(raw);
    }
    Ok(SynthDataset {
        config: cfg.clone(),
        items,
        contexts,
        gt_raw,
    })
}

/// Generates a single sequence of a dataset. Sequences are independent
/// substreams, so callers may generate them in any order or in parallel and
/// obtain the same bytes as [`generate`].
pub fn generate_one(cfg: &SynthConfig, index: usize) -> Result<(TrainSequence, Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    if index >= cfg.num_sequences {
        return Err(Error::invalid(format!(
            "sequence index {index} out of range for {} sequences",
            cfg.num_sequences
        )));
    }
    let assets = shared_assets(cfg.seed);
    generate_sequence(cfg, &assets, index)
}

/// Splits items into train and validation parts by a seeded shuffle. Both
/// sides are guaranteed non-empty.
pub fn split_dataset(
    items: Vec<TrainSequence>,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<TrainSequence>, Vec<TrainSequence>)> {
    if items.len() < 2 {
        return Err(Error::invalid("need at least two sequences to split"));
    }
    if !(val_fraction.is_finite() && val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::invalid("val_fraction must lie strictly in (0, 1)"));
    }
    let n = items.len();
    let val_n = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let val_idx: std::collections::HashSet<usize> = order[..val_n].iter().copied().collect();
    let mut train = Vec::with_capacity(n - val_n);
    let mut val = Vec::with_capacity(val_n);
    for (i, item) in items.into_iter().enumerate() {
        if val_idx.contains(&i) {
            val.push(item);
        } else {
            train.push(item);
        }
    }
    Ok((train, val))
}
