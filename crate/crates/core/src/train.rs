//! End-to-end training of the coefficient modulator.
//!
//! The forward pipeline for one sequence is: per-frame feature bundles ->
//! modulator -> per-frame coefficient triples -> scoring engine -> curve ->
//! loss against a target curve. Everything is differentiated by hand, so
//! this module owns the engine-side coefficient gradients, the optimizer,
//! the training loop, and a finite-difference checker for the whole chain.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    decay_factor, score_sequence, score_sequence_traced, CoefficientTriple, EngineTrace,
    SuspicionCurve,
};
use crate::error::{Error, Result};
use crate::eval::curve_metrics;
use crate::event::Sequence;
use crate::loss::{total_loss, LossWeights};
use crate::modulator::{
    backward, modulate, modulate_traced, ForwardTape, FrameFeatureBundle, ModulatorGrads,
    ModulatorInit, ModulatorParams, MODALITY_DIMS,
};
use crate::seeding::derive_seed;

/// Per-frame loss gradients with respect to the three coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientGrads {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// Propagates dL/d(score) back to the per-frame coefficients.
///
/// Terms from ongoing events credit the coefficients of the frame being
/// scored. A completed event's kernel was frozen with the coefficients of
/// its end frame, so its alpha/beta gradients accumulate there, summed over
/// every later frame it decays into; the decay rate itself credits gamma at
/// the frame of evaluation.
pub fn engine_backward(
    trace: &EngineTrace,
    curve: &SuspicionCurve,
    history: &[CoefficientTriple],
    d_scores: &[f64],
) -> Result<CoefficientGrads> {
    let frames = curve.scores.len();
    if history.len() != frames || d_scores.len() != frames || trace.current.len() != frames {
        return Err(Error::invalid(
            "trace, curve, history and upstream gradients must cover the same frames",
        ));
    }
    let mut g = CoefficientGrads {
        alpha: vec![0.0; frames],
        beta: vec![0.0; frames],
        gamma: vec![0.0; frames],
    };

    // per-kernel sensitivities are constants; precompute them
    struct FrozenSens {
        end: usize,
        value: f64,
        d_alpha: f64,
        d_beta: f64,
    }
    let frozen: Vec<FrozenSens> = trace
        .frozen
        .as_slice()
        .iter()
        .flatten()
        .map(|k| {
            let d = k.duration as f64;
            let n = k.count as f64;
            let th = (k.alpha * d).tanh();
            let dur_term = 1.0 + th;
            let freq_term = (k.beta * n).ln_1p();
            FrozenSens {
                end: k.end,
                value: k.value,
                d_alpha: d * (1.0 - th * th) * freq_term,
                d_beta: dur_term * n / (1.0 + k.beta * n),
            }
        })
        .collect();

    for t in 0..frames {
        let s = curve.scores[t];
        let d_raw = d_scores[t] * (1.0 - s * s);
        if d_raw == 0.0 {
            continue;
        }
        let c = &history[t];
        for term in &trace.current[t] {
            let d = term.duration as f64;
            let n = term.count as f64;
            let th = (c.alpha * d).tanh();
            g.alpha[t] += d_raw * d * (1.0 - th * th) * (c.beta * n).ln_1p();
            g.beta[t] += d_raw * (1.0 + th) * n / (1.0 + c.beta * n);
        }
        for k in &frozen {
            if k.end >= t {
                continue;
            }
            let dt = (t - k.end) as f64;
            let decay = decay_factor(c.gamma, dt);
            g.alpha[k.end] += d_raw * decay * k.d_alpha;
            g.beta[k.end] += d_raw * decay * k.d_beta;
            // past the exponent clamp the factor is constant in gamma
            if c.gamma * dt < 700.0 {
                g.gamma[t] += d_raw * k.value * decay * (-dt);
            }
        }
    }
    Ok(g)
}

/// One training sample: a labelled event track, its per-frame features and
/// the target curve.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    pub seq: Sequence,
    pub features: Vec<FrameFeatureBundle>,
    pub gt: Vec<f64>,
}

impl TrainSequence {
    pub fn validate(&self) -> Result<()> {
        if self.features.len() != self.seq.num_frames {
            return Err(Error::invalid(format!(
                "sequence '{}': {} feature frames for {} video frames",
                self.seq.id,
                self.features.len(),
                self.seq.num_frames
            )));
        }
        if self.gt.len() != self.seq.num_frames {
            return Err(Error::invalid(format!(
                "sequence '{}': {} target values for {} frames",
                self.seq.id,
                self.gt.len(),
                self.seq.num_frames
            )));
        }
        if let Some(t) = self.gt.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "sequence '{}': non-finite target at frame {t}",
                self.seq.id
            )));
        }
        Ok(())
    }
}

fn frame_context(e: Error, id: &str, frame: usize) -> Error {
    let wrap = |m: String| format!("sequence '{id}', frame {frame}: {m}");
    match e {
        Error::Numeric(m) => Error::Numeric(wrap(m)),
        Error::InvalidArgument(m) => Error::InvalidArgument(wrap(m)),
        Error::Data(m) => Error::Data(wrap(m)),
        other => other,
    }
}

fn sequence_context(e: Error, id: &str) -> Error {
    let wrap = |m: String| format!("sequence '{id}': {m}");
    match e {
        Error::Numeric(m) => Error::Numeric(wrap(m)),
        Error::InvalidArgument(m) => Error::InvalidArgument(wrap(m)),
        Error::Data(m) => Error::Data(wrap(m)),
        other => other,
    }
}

/// Runs the modulator over every frame and scores the sequence.
pub fn predict_curve(
    params: &ModulatorParams,
    seq: &Sequence,
    features: &[FrameFeatureBundle],
) -> Result<SuspicionCurve> {
    if features.len() != seq.num_frames {
        return Err(Error::invalid(format!(
            "sequence '{}': {} feature frames for {} video frames",
            seq.id,
            features.len(),
            seq.num_frames
        )));
    }
    let mut history = Vec::with_capacity(features.len());
    for (t, bundle) in features.iter().enumerate() {
        let out = modulate(params, bundle).map_err(|e| frame_context(e, &seq.id, t))?;
        history.push(out.coeffs);
    }
    score_sequence(seq, &history).map_err(|e| sequence_context(e, &seq.id))
}

/// Full-pipeline loss for one sequence. When `grads` is given, parameter
/// gradients are accumulated into it (zero it first for a fresh step).
pub fn sequence_loss(
    params: &ModulatorParams,
    item: &TrainSequence,
    weights: &LossWeights,
    grads: Option<&mut ModulatorGrads>,
) -> Result<f64> {
    item.validate()?;
    let id = &item.seq.id;
    let frames = item.seq.num_frames;
    let want_grads = grads.is_some();

    let mut history: Vec<CoefficientTriple> = Vec::with_capacity(frames);
    let mut tapes: Vec<ForwardTape> = Vec::new();
    if want_grads {
        tapes.reserve(frames);
    }
    for (t, bundle) in item.features.iter().enumerate() {
        if want_grads {
            let (out, tape) =
                modulate_traced(params, bundle).map_err(|e| frame_context(e, id, t))?;
            history.push(out.coeffs);
            tapes.push(tape);
        } else {
            let out = modulate(params, bundle).map_err(|e| frame_context(e, id, t))?;
            history.push(out.coeffs);
        }
    }

    let (curve, trace) =
        score_sequence_traced(&item.seq, &history).map_err(|e| sequence_context(e, id))?;
    if let Some(t) = curve.scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::numeric(format!(
            "sequence '{id}': non-finite score at frame {t}"
        )));
    }
    let loss = total_loss(&curve.scores, &item.gt, weights)?;
    if !loss.value.is_finite() {
        return Err(Error::numeric(format!("sequence '{id}': non-finite loss")));
    }

    if let Some(gbuf) = grads {
        let cg = engine_backward(&trace, &curve, &history, &loss.grad)?;
        for t in 0..frames {
            let upstream = [cg.alpha[t], cg.beta[t], cg.gamma[t]];
            if upstream == [0.0; 3] {
                continue;
            }
            backward(params, &tapes[t], upstream, gbuf).map_err(|e| frame_context(e, id, t))?;
        }
    }
    Ok(loss.value)
}

/// Adam settings plus the global gradient-norm cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::invalid("lr must be finite and positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::invalid("eps must be finite and positive"));
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::invalid("clip_norm must be finite and positive"));
        }
        Ok(())
    }
}

/// Scales `grads` so its L2 norm is at most `max_norm`; returns the
/// pre-clip norm.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Adam with bias correction; one slot per parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn apply(
        &mut self,
        cfg: &OptimizerConfig,
        params: &mut [f64],
        grads: &[f64],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::invalid(
                "optimizer state does not match parameter count",
            ));
        }
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossWeights,
    /// Seed for the per-epoch sample order.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 12,
            optimizer: OptimizerConfig::default(),
            loss: LossWeights::default(),
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        self.optimizer.validate()?;
        self.loss.validate()
    }
}

/// Frame-pooled quality of predicted curves against targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValStats {
    pub mse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    /// Mean squared mismatch of frame-to-frame differences, pooled within
    /// sequences.
    pub diff_mse: f64,
}

/// Scores every sequence with the given parameters and pools all frames.
pub fn pooled_validation(params: &ModulatorParams, set: &[TrainSequence]) -> Result<ValStats> {
    if set.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    let mut diff_sum = 0.0;
    let mut diff_count = 0usize;
    for item in set {
        item.validate()?;
        let curve = predict_curve(params, &item.seq, &item.features)?;
        for t in 1..curve.scores.len() {
            let dp = curve.scores[t] - curve.scores[t - 1];
            let dg = item.gt[t] - item.gt[t - 1];
            diff_sum += (dp - dg) * (dp - dg);
            diff_count += 1;
        }
        preds.extend_from_slice(&curve.scores);
        gts.extend_from_slice(&item.gt);
    }
    let m = curve_metrics(&preds, &gts)?;
    Ok(ValStats {
        mse: m.mse,
        mae: m.mae,
        r2: m.r2,
        diff_mse: if diff_count == 0 {
            0.0
        } else {
            diff_sum / diff_count as f64
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sequence training loss; absent for the pre-training entry.
    pub train_loss: Option<f64>,
    /// Mean pre-clip gradient norm; absent for the pre-training entry.
    pub grad_norm_mean: Option<f64>,
    pub val: ValStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Entry 0 is the untrained baseline; entry k is after epoch k.
    pub epochs: Vec<EpochStats>,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn baseline(&self) -> &EpochStats {
        &self.epochs[0]
    }

    pub fn last(&self) -> &EpochStats {
        self.epochs.last().expect("report has entries")
    }
}

/// Trains in place, one sequence per optimizer step, visiting the training
/// set in a freshly shuffled order each epoch. Reproducible bit for bit for
/// a fixed seed and data.
pub fn train(
    params: &mut ModulatorParams,
    train_set: &[TrainSequence],
    val_set: &[TrainSequence],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for item in train_set.iter().chain(val_set) {
        item.validate()?;
    }
    let started = Instant::now();
    let mut grads = ModulatorGrads::zeros_like(params);
    let mut adam = AdamState::new(params.parameter_count());
    let mut epochs = Vec::with_capacity(cfg.epochs + 1);
    epochs.push(EpochStats {
        epoch: 0,
        train_loss: None,
        grad_norm_mean: None,
        val: pooled_validation(params, val_set)?,
    });

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.shuffle_seed, epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        for &idx in &order {
            let item = &train_set[idx];
            grads.zero();
            let loss = sequence_loss(params, item, &cfg.loss, Some(&mut grads))?;
            let norm = clip_global_norm(&mut grads.data, cfg.optimizer.clip_norm);
            if !norm.is_finite() {
                return Err(Error::numeric(format!(
                    "sequence '{}': non-finite gradients (norm {norm})",
                    item.seq.id
                )));
            }
            adam.apply(&cfg.optimizer, params.data_mut(), &grads.data)?;
            loss_sum += loss;
            norm_sum += norm;
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: Some(loss_sum / train_set.len() as f64),
            grad_norm_mean: Some(norm_sum / train_set.len() as f64),
            val: pooled_validation(params, val_set)?,
        });
    }
    Ok(TrainReport {
        epochs,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Settings for the end-to-end gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub draws: usize,
    pub frames: usize,
    pub events_per_draw: usize,
    /// Central-difference step.
    pub step: f64,
    pub rel_tol: f64,
    /// Absolute fallback when both gradients are this small.
    pub abs_tol: f64,
    pub seed: u64,
    pub samples_per_tensor: usize,
    /// Test hook: scales analytic gradients to prove the check can fail.
    pub(crate) corrupt_scale: Option<f64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            draws: 20,
            frames: 24,
            events_per_draw: 4,
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
            seed: 0,
            samples_per_tensor: 2,
            corrupt_scale: None,
        }
    }
}

impl GradCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 || self.frames < 4 || self.samples_per_tensor == 0 {
            return Err(Error::invalid(
                "gradient check needs at least one draw, four frames and one sample per tensor",
            ));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid("step must be finite and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckFinding {
    pub draw: usize,
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub draws: usize,
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub failures: Vec<GradCheckFinding>,
    pub passed: bool,
}

/// Random training sample used by the gradient check and tests.
pub fn random_train_sequence(id: String, frames: usize, events: usize, seed: u64) -> TrainSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evs = Vec::with_capacity(events);
    // one guaranteed completed event so the decay path always carries signal
    let start = rng.gen_range(0..frames / 6 + 1);
    let end = (start + rng.gen_range(1..4)).min(frames / 2);
    evs.push(crate::event::ActionEvent {
        category: rng.gen_range(0..crate::event::NUM_CATEGORIES),
        start,
        end,
        confidence: rng.gen_range(0.6..1.0),
    });
    for _ in 1..events.max(1) {
        let start = rng.gen_range(0..frames - 1);
        let end = (start + rng.gen_range(0..6)).min(frames - 1);
        evs.push(crate::event::ActionEvent {
            category: rng.gen_range(0..crate::event::NUM_CATEGORIES),
            start,
            end,
            confidence: rng.gen_range(0.6..1.0),
        });
    }
    let mut features = Vec::with_capacity(frames);
    for _ in 0..frames {
        let mut fill =
            |n: usize| (0..n).map(|_| rng.gen_range(-0.7..0.7)).collect::<Vec<f64>>();
        features.push(FrameFeatureBundle {
            visual: fill(MODALITY_DIMS[0]),
            conf: fill(MODALITY_DIMS[1]),
            temporal: fill(MODALITY_DIMS[2]),
            spectrum: fill(MODALITY_DIMS[3]),
        });
    }
    let mut gt = Vec::with_capacity(frames);
    let mut level: f64 = rng.gen_range(0.1..0.9);
    for _ in 0..frames {
        level = (level + rng.gen_range(-0.07..0.07)).clamp(0.0, 1.0);
        gt.push(level);
    }
    TrainSequence {
        seq: Sequence {
            id,
            num_frames: frames,
            fps: 30.0,
            events: evs,
        },
        features,
        gt,
    }
}

/// Compares analytic gradients of the full pipeline loss against central
/// finite differences on freshly drawn random problems.
pub fn gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    cfg.validate()?;
    let weights = LossWeights::default();
    let mut checked = 0usize;
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    let mut failures = Vec::new();

    for draw in 0..cfg.draws {
        let item = random_train_sequence(
            format!("draw-{draw}"),
            cfg.frames,
            cfg.events_per_draw,
            derive_seed(cfg.seed, draw as u64 * 2),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, draw as u64 * 2 + 1));
        let mut params = ModulatorParams::init(&ModulatorInit {
            seed: derive_seed(cfg.seed, 1000 + draw as u64),
            ..Default::default()
        })?;
        for spec in params.shape_report() {
            if spec.name.starts_with("head_") {
                for i in 0..spec.len() {
                    params.data_mut()[spec.offset + i] = rng.gen_range(-0.3..0.3);
                }
            }
        }

        let mut grads = ModulatorGrads::zeros_like(&params);
        sequence_loss(&params, &item, &weights, Some(&mut grads))?;

        for spec in params.shape_report() {
            for _ in 0..cfg.samples_per_tensor.min(spec.len()) {
                let idx = spec.offset + rng.gen_range(0..spec.len());
                let mut plus = params.clone();
                plus.data_mut()[idx] += cfg.step;
                let mut minus = params.clone();
                minus.data_mut()[idx] -= cfg.step;
                let f_plus = sequence_loss(&plus, &item, &weights, None)?;
                let f_minus = sequence_loss(&minus, &item, &weights, None)?;
                let numeric = (f_plus - f_minus) / (2.0 * cfg.step);
                let analytic = grads.data[idx] * cfg.corrupt_scale.unwrap_or(1.0);
                let abs = (numeric - analytic).abs();
                let denom = numeric.abs().max(analytic.abs());
                let rel = if denom > 0.0 { abs / denom } else { 0.0 };
                checked += 1;
                let ok = if denom < cfg.abs_tol {
                    abs < cfg.abs_tol
                } else {
                    rel < cfg.rel_tol
                };
                if denom >= cfg.abs_tol {
                    worst_rel = worst_rel.max(rel);
                }
                worst_abs = worst_abs.max(abs);
                if !ok {
                    failures.push(GradCheckFinding {
                        draw,
                        tensor: spec.name.clone(),
                        index: idx - spec.offset,
                        analytic,
                        numeric,
                        rel,
                        abs,
                    });
                }
            }
        }
    }
    Ok(GradCheckReport {
        draws: cfg.draws,
        checked,
        worst_rel,
        worst_abs,
        passed: failures.is_empty(),
        failures,
    })
}
