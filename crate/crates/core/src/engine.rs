//! Frame-wise suspicion scoring.
//!
//! The raw score at frame `t` sums a kernel over ongoing events plus an
//! exponentially decayed kernel over completed ones:
//!
//! ```text
//! raw(t) = sum_{i in current} f(i; a(t), b(t))
//!        + sum_{j in past}    f(j; a(e_j), b(e_j)) * exp(-g(t) * (t - e_j))
//! ```
//!
//! where `f = (1 + tanh(alpha * d)) * ln(1 + beta * n)`, `d` is the inclusive
//! duration, `n` the cumulative per-category instance count, and `e_j` the
//! last frame of event `j`. A past event's kernel is frozen at its end frame
//! with the coefficients in force there; only the decay tracks the current
//! `gamma`. The reported score is `tanh(raw)`, keeping output in `[0, 1)`.

use crate::error::{Error, Result};
use crate::event::{partition_at, validate_sequence, Sequence, NUM_CATEGORIES};

/// The three kernel coefficients. All must be finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientTriple {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CoefficientTriple {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "coefficient {name} must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Scored curve for one sequence. `scores[t] = tanh(raw[t])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspicionCurve {
    pub sequence_id: String,
    pub raw: Vec<f64>,
    pub scores: Vec<f64>,
}

impl SuspicionCurve {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Duration effect `1 + tanh(alpha * d)`, mathematically inside `(1, 2)`.
/// Grows steeply for short durations and saturates for long ones; in
/// floating point the value reaches 2.0 exactly once `alpha * d` exceeds
/// roughly 18.7, which downstream code accepts.
#[inline]
pub fn duration_effect(alpha: f64, d: usize) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be finite and positive, got {alpha}"
        )));
    }
    if d == 0 {
        return Err(Error::invalid("duration must be at least one frame"));
    }
    Ok(1.0 + (alpha * d as f64).tanh())
}

/// Frequency effect `ln(1 + beta * n)`; zero at `n = 0`, unbounded but with
/// diminishing marginal gain in the repetition count `n`.
#[inline]
pub fn frequency_effect(beta: f64, n: u32) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!(
            "beta must be finite and positive, got {beta}"
        )));
    }
    Ok((beta * n as f64).ln_1p())
}

/// Event kernel `f = duration_effect * frequency_effect`.
#[inline]
pub fn kernel(d: usize, n: u32, c: &CoefficientTriple) -> Result<f64> {
    Ok(duration_effect(c.alpha, d)? * frequency_effect(c.beta, n)?)
}

/// Decay multiplier `exp(-gamma * dt)` with the exponent clamped to
/// `[-700, 0]` as a documented numeric floor.
#[inline]
pub fn decay_factor(gamma: f64, dt: f64) -> f64 {
    (-gamma * dt).clamp(-700.0, 0.0).exp()
}

/// A past event's kernel, frozen at its end frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenKernel {
    /// Last frame of the event; decay is measured from here.
    pub end: usize,
    /// Final inclusive duration in frames.
    pub duration: usize,
    /// Cumulative same-category count at the end frame (includes itself).
    pub count: u32,
    /// Coefficients in force at the end frame.
    pub alpha: f64,
    pub beta: f64,
    /// Kernel value under those coefficients.
    pub value: f64,
}

/// Per-event frozen kernels for one sequence under one coefficient history.
/// An entry is `None` when the history does not yet cover the event's end.
#[derive(Debug, Clone)]
pub struct FrozenKernels {
    per_event: Vec<Option<FrozenKernel>>,
}

impl FrozenKernels {
    pub fn build(seq: &Sequence, history: &[CoefficientTriple]) -> Result<Self> {
        let mut per_event = Vec::with_capacity(seq.events.len());
        for ev in &seq.events {
            if ev.end >= history.len() {
                per_event.push(None);
                continue;
            }
            let c = &history[ev.end];
            c.validate()?;
            let n = same_category_started_by(seq, ev.category, ev.end);
            let d = ev.total_duration();
            per_event.push(Some(FrozenKernel {
                end: ev.end,
                duration: d,
                count: n,
                alpha: c.alpha,
                beta: c.beta,
                value: kernel(d, n, c)?,
            }));
        }
        Ok(FrozenKernels { per_event })
    }

    pub fn get(&self, event: usize) -> Option<&FrozenKernel> {
        self.per_event.get(event).and_then(|k| k.as_ref())
    }

    pub fn as_slice(&self) -> &[Option<FrozenKernel>] {
        &self.per_event
    }
}

fn same_category_started_by(seq: &Sequence, category: usize, t: usize) -> u32 {
    seq.events
        .iter()
        .filter(|e| e.category == category && e.start <= t)
        .count() as u32
}

/// Raw score of a single frame. `history` must cover frames `0..=t` and
/// `frozen` must have been built from a history at least that long.
pub fn score_frame(
    seq: &Sequence,
    t: usize,
    history: &[CoefficientTriple],
    frozen: &FrozenKernels,
) -> Result<f64> {
    if t >= seq.num_frames {
        return Err(Error::FrameOutOfRange {
            frame: t,
            num_frames: seq.num_frames,
        });
    }
    if t >= history.len() {
        return Err(Error::invalid(format!(
            "coefficient history covers {} frames but frame {t} was requested",
            history.len()
        )));
    }
    let c = &history[t];
    c.validate()?;
    let part = partition_at(seq, t)?;

    let mut raw = 0.0;
    for &i in &part.current {
        let ev = &seq.events[i];
        let d = part.durations[i];
        let n = part.counts[ev.category];
        raw += kernel(d, n, c)?;
    }
    for &j in &part.past {
        let fk = frozen.get(j).ok_or_else(|| {
            Error::invalid(format!(
                "no frozen kernel for event {j}; history too short when cache was built"
            ))
        })?;
        raw += fk.value * decay_factor(c.gamma, (t - fk.end) as f64);
    }
    Ok(raw)
}

/// Scores every frame by direct evaluation. Reference implementation; the
/// fast path must agree with this within 1e-9 per frame.
pub fn score_sequence(seq: &Sequence, history: &[CoefficientTriple]) -> Result<SuspicionCurve> {
    Ok(score_sequence_traced(seq, history)?.0)
}

/// A current-event term as evaluated at some frame; kept for gradient work.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentTerm {
    pub event: usize,
    pub duration: usize,
    pub count: u32,
}

/// Everything the backward pass needs to re-derive per-frame coefficient
/// sensitivities without re-partitioning the sequence.
#[derive(Debug, Clone)]
pub struct EngineTrace {
    pub frozen: FrozenKernels,
    /// Per frame, the current-event terms that entered the sum.
    pub current: Vec<Vec<CurrentTerm>>,
}

/// Direct evaluation that also returns the trace used by training.
pub fn score_sequence_traced(
    seq: &Sequence,
    history: &[CoefficientTriple],
) -> Result<(SuspicionCurve, EngineTrace)> {
    check_scoring_inputs(seq, history)?;
    let frozen = FrozenKernels::build(seq, history)?;
    let mut raw = Vec::with_capacity(seq.num_frames);
    let mut current = Vec::with_capacity(seq.num_frames);
    for t in 0..seq.num_frames {
        let c = &history[t];
        c.validate()?;
        let part = partition_at(seq, t)?;
        let mut acc = 0.0;
        let mut terms = Vec::with_capacity(part.current.len());
        for &i in &part.current {
            let ev = &seq.events[i];
            let d = part.durations[i];
            let n = part.counts[ev.category];
            acc += kernel(d, n, c)?;
            terms.push(CurrentTerm {
                event: i,
                duration: d,
                count: n,
            });
        }
        for &j in &part.past {
            let fk = frozen.get(j).expect("history covers the whole sequence");
            acc += fk.value * decay_factor(c.gamma, (t - fk.end) as f64);
        }
        raw.push(acc);
        current.push(terms);
    }
    let scores = raw.iter().map(|r| r.tanh()).collect();
    Ok((
        SuspicionCurve {
            sequence_id: seq.id.clone(),
            raw,
            scores,
        },
        EngineTrace { frozen, current },
    ))
}

/// Incremental scoring for constant coefficients. The decayed past sum is
/// carried across frames instead of being re-evaluated, so a frame update is
/// O(active events). Errors if the history is not exactly constant.
pub fn score_sequence_fast(
    seq: &Sequence,
    history: &[CoefficientTriple],
) -> Result<SuspicionCurve> {
    check_scoring_inputs(seq, history)?;
    let c = history[0];
    c.validate()?;
    if history.iter().any(|h| h != &c) {
        return Err(Error::invalid(
            "fast path requires coefficients constant over the sequence",
        ));
    }

    let t_total = seq.num_frames;
    // Frozen kernel values and per-frame buckets of ending events.
    let mut end_sum = vec![0.0f64; t_total];
    for ev in seq.events.iter() {
        let n = same_category_started_by(seq, ev.category, ev.end);
        end_sum[ev.end] += kernel(ev.total_duration(), n, &c)?;
    }
    let mut by_start: Vec<usize> = (0..seq.events.len()).collect();
    by_start.sort_by_key(|&i| seq.events[i].start);

    let step = decay_factor(c.gamma, 1.0);
    let mut counts = [0u32; NUM_CATEGORIES];
    let mut active: Vec<usize> = Vec::new();
    let mut past_sum = 0.0f64;
    let mut ptr = 0usize;
    let mut raw = Vec::with_capacity(t_total);

    for t in 0..t_total {
        if t > 0 {
            past_sum = (past_sum + end_sum[t - 1]) * step;
        }
        while ptr < by_start.len() && seq.events[by_start[ptr]].start == t {
            let i = by_start[ptr];
            counts[seq.events[i].category] += 1;
            active.push(i);
            ptr += 1;
        }
        active.retain(|&i| seq.events[i].end >= t);

        let mut cur = 0.0;
        for &i in &active {
            let ev = &seq.events[i];
            cur += kernel(t - ev.start + 1, counts[ev.category], &c)?;
        }
        raw.push(cur + past_sum);
    }
    let scores = raw.iter().map(|r| r.tanh()).collect();
    Ok(SuspicionCurve {
        sequence_id: seq.id.clone(),
        raw,
        scores,
    })
}

fn check_scoring_inputs(seq: &Sequence, history: &[CoefficientTriple]) -> Result<()> {
    let violations = validate_sequence(seq);
    if !violations.is_empty() {
        let mut msg = format!("sequence {} failed validation: ", seq.id);
        msg.push_str(&violations[0].to_string());
        if violations.len() > 1 {
            msg.push_str(&format!(" (and {} more)", violations.len() - 1));
        }
        return Err(Error::data(msg));
    }
    if history.len() != seq.num_frames {
        return Err(Error::invalid(format!(
            "coefficient history has {} entries for a {}-frame sequence",
            history.len(),
            seq.num_frames
        )));
    }
    Ok(())
}
