//! Action events on a discrete frame timeline and the per-frame partition
//! into ongoing and completed instances.
//!
//! Time is frame-indexed (`0..num_frames`), intervals are inclusive on both
//! ends, and durations count frames inclusively: an event spanning
//! `[start, end]` has `end - start + 1` frames. Overlapping instances of the
//! same category are legal and are treated as distinct events.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Number of recognized action categories.
pub const NUM_CATEGORIES: usize = 11;

/// A recognized action category with its human-readable definition.
///
/// The builtin table ships with the crate so the anchor bank can be
/// regenerated from the definitions with any external text encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCategory {
    pub id: usize,
    pub name: String,
    pub definition: String,
}

#[derive(Deserialize)]
struct ConceptFile {
    concepts: Vec<ActionCategory>,
}

/// The 11 builtin categories, in id order.
pub fn builtin_categories() -> &'static [ActionCategory] {
    static CATS: OnceLock<Vec<ActionCategory>> = OnceLock::new();
    CATS.get_or_init(|| {
        let raw = include_str!("../data/concepts.json");
        let parsed: ConceptFile =
            serde_json::from_str(raw).expect("builtin concept table must parse");
        assert_eq!(parsed.concepts.len(), NUM_CATEGORIES);
        for (i, c) in parsed.concepts.iter().enumerate() {
            assert_eq!(c.id, i, "concept ids must be dense and ordered");
            assert!(!c.name.is_empty() && !c.definition.is_empty());
        }
        parsed.concepts
    })
}

/// One detected action instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionEvent {
    /// Category id in `0..NUM_CATEGORIES`.
    pub category: usize,
    /// First frame of the instance (inclusive).
    pub start: usize,
    /// Last frame of the instance (inclusive), `start <= end < num_frames`.
    pub end: usize,
    /// Detector confidence in `[0, 1]`.
    pub confidence: f64,
}

impl ActionEvent {
    /// Inclusive frame count of the whole instance.
    pub fn total_duration(&self) -> usize {
        self.end - self.start + 1
    }
}

/// A video's event track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sequence {
    pub id: String,
    pub num_frames: usize,
    pub fps: f64,
    pub events: Vec<ActionEvent>,
}

/// One validation failure; `event` is `None` for sequence-level problems.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub event: Option<usize>,
    pub reason: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.event {
            Some(i) => write!(f, "event {}: {}", i, self.reason),
            None => write!(f, "sequence: {}", self.reason),
        }
    }
}

/// Checks every structural invariant and returns one record per failure.
/// An empty result means the sequence is safe for scoring.
pub fn validate_sequence(seq: &Sequence) -> Vec<Violation> {
    let mut out = Vec::new();
    if seq.num_frames == 0 {
        out.push(Violation {
            event: None,
            reason: "num_frames must be at least 1".into(),
        });
    }
    if !(seq.fps.is_finite() && seq.fps > 0.0) {
        out.push(Violation {
            event: None,
            reason: format!("fps must be positive and finite, got {}", seq.fps),
        });
    }
    for (i, ev) in seq.events.iter().enumerate() {
        let mut fail = |reason: String| {
            out.push(Violation {
                event: Some(i),
                reason,
            })
        };
        if ev.category >= NUM_CATEGORIES {
            fail(format!(
                "category {} out of range 0..{}",
                ev.category, NUM_CATEGORIES
            ));
        }
        if ev.start > ev.end {
            fail(format!("start {} exceeds end {}", ev.start, ev.end));
        }
        if ev.end >= seq.num_frames {
            fail(format!(
                "end {} outside sequence of {} frames",
                ev.end, seq.num_frames
            ));
        }
        if !(ev.confidence.is_finite() && (0.0..=1.0).contains(&ev.confidence)) {
            fail(format!("confidence {} outside [0, 1]", ev.confidence));
        }
    }
    out
}

/// State of the event track as seen from frame `t`.
///
/// `current` holds indices of events with `start <= t <= end`, `past` those
/// with `end < t`. `durations` is parallel to `seq.events`: elapsed frames
/// `t - start + 1` for current events, final frames `end - start + 1` for
/// past ones, and 0 for events that have not started. `counts[c]` is the
/// number of category-`c` events with `start <= t`, so an event is counted
/// from its first frame on (a current instance counts itself).
#[derive(Debug, Clone, PartialEq)]
pub struct FramePartition {
    pub frame: usize,
    pub current: Vec<usize>,
    pub past: Vec<usize>,
    pub durations: Vec<usize>,
    pub counts: [u32; NUM_CATEGORIES],
}

impl FramePartition {
    /// Duration of event `idx` at this frame, if it has started.
    pub fn duration_of(&self, idx: usize) -> Option<usize> {
        match self.durations.get(idx) {
            Some(0) | None => None,
            Some(&d) => Some(d),
        }
    }
}

/// Splits the event track at frame `t`.
pub fn partition_at(seq: &Sequence, t: usize) -> Result<FramePartition> {
    if t >= seq.num_frames {
        return Err(Error::FrameOutOfRange {
            frame: t,
            num_frames: seq.num_frames,
        });
    }
    let mut part = FramePartition {
        frame: t,
        current: Vec::new(),
        past: Vec::new(),
        durations: vec![0; seq.events.len()],
        counts: [0; NUM_CATEGORIES],
    };
    for (i, ev) in seq.events.iter().enumerate() {
        if ev.category >= NUM_CATEGORIES {
            return Err(Error::data(format!(
                "event {i} has category {} out of range",
                ev.category
            )));
        }
        if ev.start <= t {
            part.counts[ev.category] += 1;
        }
        if ev.start <= t && t <= ev.end {
            part.current.push(i);
            part.durations[i] = t - ev.start + 1;
        } else if ev.end < t {
            part.past.push(i);
            part.durations[i] = ev.total_duration();
        }
    }
    Ok(part)
}
