//! Curve metrics, level segmentation and detection-style evaluation.
//!
//! Score curves live in `[0, 1]` and are bucketed into three escalation
//! levels: uncertain below 0.3, suspicious from 0.3 up to 0.6, alert from
//! 0.6 up (lower bound inclusive in each case). Maximal runs of one level
//! form segments, which are matched detection-style against reference
//! segments by temporal IoU to produce average precision.

use serde::Serialize;

use crate::error::{Error, Result};

/// Escalation level of a score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Uncertain,
    Suspicious,
    Alert,
}

pub const LEVELS: [Level; 3] = [Level::Uncertain, Level::Suspicious, Level::Alert];

impl Level {
    pub fn as_str(&self) -> &'static str {
        match self {
            Level::Uncertain => "uncertain",
            Level::Suspicious => "suspicious",
            Level::Alert => "alert",
        }
    }

    fn index(&self) -> usize {
        *self as usize
    }
}

/// Segmentation knobs. Defaults leave the curve untouched: no smoothing and
/// no minimum run length.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    /// (suspicious, alert) lower bounds; must satisfy 0 < t1 < t2 < 1.
    pub thresholds: (f64, f64),
    /// Runs shorter than this are absorbed into the longer neighbor.
    pub min_len: usize,
    /// Odd median-filter width applied before leveling; 0 disables.
    pub smooth_width: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            thresholds: (0.3, 0.6),
            min_len: 1,
            smooth_width: 0,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let (t1, t2) = self.thresholds;
        if !(t1.is_finite() && t2.is_finite() && 0.0 < t1 && t1 < t2 && t2 < 1.0) {
            return Err(Error::invalid(format!(
                "thresholds must satisfy 0 < t1 < t2 < 1, got ({t1}, {t2})"
            )));
        }
        if self.min_len == 0 {
            return Err(Error::invalid("min_len must be at least 1"));
        }
        if self.smooth_width != 0 && self.smooth_width % 2 == 0 {
            return Err(Error::invalid("smooth_width must be odd or 0"));
        }
        Ok(())
    }

    fn level_of(&self, s: f64) -> Level {
        if s < self.thresholds.0 {
            Level::Uncertain
        } else if s < self.thresholds.1 {
            Level::Suspicious
        } else {
            Level::Alert
        }
    }

    /// Triangular membership of `s` in the band of `level`: 1 at the band
    /// center falling linearly to 0 at the band edges. The alert band is
    /// treated as closed at 1.0.
    fn membership(&self, level: Level, s: f64) -> f64 {
        let (lo, hi) = match level {
            Level::Uncertain => (0.0, self.thresholds.0),
            Level::Suspicious => (self.thresholds.0, self.thresholds.1),
            Level::Alert => (self.thresholds.1, 1.0),
        };
        let center = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        (1.0 - (s - center).abs() / half).max(0.0)
    }
}

/// A maximal run of frames sharing one level, inclusive on both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSegment {
    pub level: Level,
    pub start: usize,
    pub end: usize,
    /// Mean triangular band membership over the segment's frames.
    pub confidence: f64,
}

impl LevelSegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Point metrics of one predicted curve against a reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveMetrics {
    pub mse: f64,
    pub mae: f64,
    /// `None` when the reference is constant but the residual is not, which
    /// leaves the coefficient of determination undefined.
    pub r2: Option<f64>,
}

/// MSE, MAE and R^2 (total sum of squares about the reference mean).
pub fn curve_metrics(pred: &[f64], gt: &[f64]) -> Result<CurveMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "curve lengths differ: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("cannot evaluate empty curves"));
    }
    let n = pred.len() as f64;
    let mut sse = 0.0;
    let mut sae = 0.0;
    for i in 0..pred.len() {
        let e = pred[i] - gt[i];
        sse += e * e;
        sae += e.abs();
    }
    let mean = gt.iter().sum::<f64>() / n;
    let sstot: f64 = gt.iter().map(|g| (g - mean) * (g - mean)).sum();
    let r2 = if sstot == 0.0 {
        if sse == 0.0 {
            Some(1.0)
        } else {
            None
        }
    } else {
        Some(1.0 - sse / sstot)
    };
    Ok(CurveMetrics {
        mse: sse / n,
        mae: sae / n,
        r2,
    })
}

fn median_filter(curve: &[f64], width: usize) -> Vec<f64> {
    if width <= 1 {
        return curve.to_vec();
    }
    let half = width / 2;
    let n = curve.len();
    let mut out = Vec::with_capacity(n);
    let mut window = Vec::with_capacity(width);
    for i in 0..n {
        // shrink symmetrically near the edges so the window stays odd
        let h = half.min(i).min(n - 1 - i);
        window.clear();
        window.extend_from_slice(&curve[i - h..=i + h]);
        window.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(window[window.len() / 2]);
    }
    out
}

/// Partitions a score curve into level segments.
///
/// The optional median filter runs first; each frame is then bucketed and
/// maximal equal-level runs become segments. Runs shorter than `min_len`
/// are relabeled into their longer neighbor (ties prefer the earlier run)
/// until none remain, so the output always partitions `[0, len)`.
pub fn segment_levels(curve: &[f64], params: &SegmentParams) -> Result<Vec<LevelSegment>> {
    params.validate()?;
    if curve.is_empty() {
        return Err(Error::invalid("cannot segment an empty curve"));
    }
    for (i, &v) in curve.iter().enumerate() {
        if !v.is_finite() || !(-1e-12..=1.0 + 1e-12).contains(&v) {
            return Err(Error::data(format!(
                "score {v} at frame {i} outside [0, 1]"
            )));
        }
    }
    let smoothed = median_filter(curve, params.smooth_width);
    let smoothed: Vec<f64> = smoothed.iter().map(|v| v.clamp(0.0, 1.0)).collect();

    // maximal runs of equal level
    let mut runs: Vec<(Level, usize, usize)> = Vec::new();
    for (t, &s) in smoothed.iter().enumerate() {
        let lv = params.level_of(s);
        match runs.last_mut() {
            Some((last, _, end)) if *last == lv && *end + 1 == t => *end = t,
            _ => runs.push((lv, t, t)),
        }
    }

    if params.min_len > 1 {
        loop {
            let Some(pos) = runs
                .iter()
                .position(|&(_, s, e)| e - s + 1 < params.min_len)
                .filter(|_| runs.len() > 1)
            else {
                break;
            };
            let len = |r: &(Level, usize, usize)| r.2 - r.1 + 1;
            let into_prev = match (pos.checked_sub(1), runs.get(pos + 1)) {
                (Some(p), Some(next)) => len(&runs[p]) >= len(next),
                (Some(_), None) => true,
                (None, _) => false,
            };
            if into_prev {
                runs[pos - 1].2 = runs[pos].2;
                runs.remove(pos);
            } else {
                runs[pos + 1].1 = runs[pos].1;
                runs.remove(pos);
            }
            // absorption can make neighbors equal-level; re-merge
            let mut merged: Vec<(Level, usize, usize)> = Vec::with_capacity(runs.len());
            for r in runs.drain(..) {
                match merged.last_mut() {
                    Some(last) if last.0 == r.0 => last.2 = r.2,
                    _ => merged.push(r),
                }
            }
            runs = merged;
        }
    }

    Ok(runs
        .into_iter()
        .map(|(level, start, end)| {
            let sum: f64 = smoothed[start..=end]
                .iter()
                .map(|&s| params.membership(level, s))
                .sum();
            LevelSegment {
                level,
                start,
                end,
                confidence: sum / (end - start + 1) as f64,
            }
        })
        .collect())
}

/// Intersection over union of two inclusive frame intervals.
pub fn temporal_iou(a: (usize, usize), b: (usize, usize)) -> Result<f64> {
    if a.0 > a.1 || b.0 > b.1 {
        return Err(Error::invalid("interval start must not exceed end"));
    }
    let inter_lo = a.0.max(b.0);
    let inter_hi = a.1.min(b.1);
    let inter = if inter_lo <= inter_hi {
        inter_hi - inter_lo + 1
    } else {
        0
    };
    let len_a = a.1 - a.0 + 1;
    let len_b = b.1 - b.0 + 1;
    Ok(inter as f64 / (len_a + len_b - inter) as f64)
}

/// Predicted and reference segments of one sequence; matching never crosses
/// sequence boundaries even when scoring a whole corpus at once.
#[derive(Debug, Clone, Copy)]
pub struct SequenceDetections<'a> {
    pub pred: &'a [LevelSegment],
    pub gt: &'a [LevelSegment],
}

/// Average precision per level at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapAtIou {
    pub iou: f64,
    /// Indexed by level; `None` when the reference has no segment of that
    /// level, in which case the level is excluded from the mean.
    pub per_level: [Option<f64>; 3],
    pub map: Option<f64>,
}

/// Detection evaluation across one or more sequences.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapReport {
    pub per_iou: Vec<MapAtIou>,
    /// Mean over thresholds of the per-threshold mAP.
    pub mean_map: Option<f64>,
    /// True when there was nothing to match on either side.
    pub empty: bool,
}

/// Greedy one-to-one matching by descending confidence, per level, with
/// all-point interpolated average precision, averaged over the levels
/// present in the reference.
pub fn mean_average_precision(
    sequences: &[SequenceDetections<'_>],
    iou_thresholds: &[f64],
) -> Result<MapReport> {
    if iou_thresholds.is_empty() {
        return Err(Error::invalid("need at least one IoU threshold"));
    }
    for &t in iou_thresholds {
        if !(t.is_finite() && (0.0..=1.0).contains(&t)) {
            return Err(Error::invalid(format!("IoU threshold {t} outside [0, 1]")));
        }
    }
    let no_gt = sequences.iter().all(|s| s.gt.is_empty());
    let no_pred = sequences.iter().all(|s| s.pred.is_empty());

    let mut per_iou = Vec::with_capacity(iou_thresholds.len());
    for &threshold in iou_thresholds {
        let mut per_level = [None; 3];
        for level in LEVELS {
            per_level[level.index()] = average_precision_for_level(sequences, level, threshold)?;
        }
        let present: Vec<f64> = per_level.iter().flatten().copied().collect();
        let map = if present.is_empty() {
            None
        } else {
            Some(present.iter().sum::<f64>() / present.len() as f64)
        };
        per_iou.push(MapAtIou {
            iou: threshold,
            per_level,
            map,
        });
    }
    let maps: Vec<f64> = per_iou.iter().filter_map(|m| m.map).collect();
    Ok(MapReport {
        per_iou,
        mean_map: if maps.is_empty() {
            None
        } else {
            Some(maps.iter().sum::<f64>() / maps.len() as f64)
        },
        empty: no_gt && no_pred,
    })
}

fn average_precision_for_level(
    sequences: &[SequenceDetections<'_>],
    level: Level,
    threshold: f64,
) -> Result<Option<f64>> {
    let mut num_gt = 0usize;
    for s in sequences {
        num_gt += s.gt.iter().filter(|g| g.level == level).count();
    }
    if num_gt == 0 {
        return Ok(None);
    }

    // (confidence, seq idx, segment) ranked once across the whole corpus
    let mut preds: Vec<(f64, usize, &LevelSegment)> = Vec::new();
    for (si, s) in sequences.iter().enumerate() {
        for p in s.pred.iter().filter(|p| p.level == level) {
            preds.push((p.confidence, si, p));
        }
    }
    preds.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.start.cmp(&b.2.start))
            .then(a.2.end.cmp(&b.2.end))
    });

    let mut used: Vec<Vec<bool>> = sequences
        .iter()
        .map(|s| vec![false; s.gt.len()])
        .collect();
    let mut tp_flags = Vec::with_capacity(preds.len());
    for (_, si, p) in &preds {
        let gts = sequences[*si].gt;
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if g.level != level || used[*si][gi] {
                continue;
            }
            let iou = temporal_iou((p.start, p.end), (g.start, g.end))?;
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        match best {
            Some((gi, iou)) if iou >= threshold => {
                used[*si][gi] = true;
                tp_flags.push(true);
            }
            _ => tp_flags.push(false),
        }
    }
    Ok(Some(all_point_average_precision(num_gt, &tp_flags)))
}

/// AP as the area under the monotone precision envelope of the PR curve.
fn all_point_average_precision(num_gt: usize, tp_flags: &[bool]) -> f64 {
    if tp_flags.is_empty() {
        return 0.0;
    }
    let n = tp_flags.len();
    let mut precision = Vec::with_capacity(n);
    let mut recall = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &hit) in tp_flags.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    let mut ap = 0.0;
    let mut envelope = 0.0f64;
    for i in (0..n).rev() {
        envelope = envelope.max(precision[i]);
        let prev = if i == 0 { 0.0 } else { recall[i - 1] };
        ap += (recall[i] - prev) * envelope;
    }
    ap
}

/// Pearson autocorrelation per lag `0..=max_lag`; `r(0)` is 1 by definition
/// and a lag whose windows are constant is reported as `None`.
pub fn autocorrelation(curve: &[f64], max_lag: usize) -> Result<Vec<Option<f64>>> {
    if max_lag == 0 {
        return Err(Error::invalid("max_lag must be at least 1"));
    }
    if curve.len() <= max_lag {
        return Err(Error::invalid(format!(
            "curve of {} frames cannot support lag {max_lag}",
            curve.len()
        )));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(Some(1.0));
    for k in 1..=max_lag {
        let x = &curve[..curve.len() - k];
        let y = &curve[k..];
        out.push(pearson(x, y));
    }
    Ok(out)
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    // a window that never moves has no defined correlation; check values
    // directly since accumulated means carry rounding noise
    if x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]) {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Running sum of the score curve; how much suspicion has accumulated.
pub fn cumulative_effect(curve: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    curve
        .iter()
        .map(|&v| {
            acc += v;
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(level: Level, start: usize, end: usize, confidence: f64) -> LevelSegment {
        LevelSegment {
            level,
            start,
            end,
            confidence,
        }
    }

    #[test]
    fn metrics_on_identical_curves() {
        let c = [0.1, 0.5, 0.9];
        let m = curve_metrics(&c, &c).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.r2, Some(1.0));
    }

    #[test]
    fn mean_predictor_scores_zero_r2() {
        let m = curve_metrics(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((m.mse - 0.25).abs() < 1e-15);
        assert!((m.mae - 0.5).abs() < 1e-15);
        assert!((m.r2.unwrap() - 0.0).abs() < 1e-15);
    }

    #[test]
    fn constant_reference_leaves_r2_undefined() {
        let m = curve_metrics(&[0.4, 0.6], &[0.5, 0.5]).unwrap();
        assert_eq!(m.r2, None);
        assert!(m.mse > 0.0);

        let exact = curve_metrics(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(exact.r2, Some(1.0));
    }

    #[test]
    fn metrics_reject_bad_shapes() {
        assert!(curve_metrics(&[0.1], &[0.1, 0.2]).is_err());
        assert!(curve_metrics(&[], &[]).is_err());
    }

    #[test]
    fn level_boundaries_are_lower_inclusive() {
        let p = SegmentParams::default();
        assert_eq!(p.level_of(0.0), Level::Uncertain);
        assert_eq!(p.level_of(0.29999), Level::Uncertain);
        assert_eq!(p.level_of(0.3), Level::Suspicious);
        assert_eq!(p.level_of(0.59999), Level::Suspicious);
        assert_eq!(p.level_of(0.6), Level::Alert);
        assert_eq!(p.level_of(1.0), Level::Alert);
    }

    #[test]
    fn flat_curve_yields_one_segment() {
        let segs = segment_levels(&[0.0; 8], &SegmentParams::default()).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].level, segs[0].start, segs[0].end), (Level::Uncertain, 0, 7));
        // 0.0 sits on the band edge, so triangular membership is zero
        assert_eq!(segs[0].confidence, 0.0);

        let centered = segment_levels(&[0.15; 4], &SegmentParams::default()).unwrap();
        assert!((centered[0].confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_band_fixture_segments_and_confidences() {
        let curve = [0.1, 0.4, 0.4, 0.7];
        let segs = segment_levels(&curve, &SegmentParams::default()).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!((segs[0].level, segs[0].start, segs[0].end), (Level::Uncertain, 0, 0));
        assert_eq!((segs[1].level, segs[1].start, segs[1].end), (Level::Suspicious, 1, 2));
        assert_eq!((segs[2].level, segs[2].start, segs[2].end), (Level::Alert, 3, 3));
        // centers 0.15 / 0.45 / 0.8, half-widths 0.15 / 0.15 / 0.2
        assert!((segs[0].confidence - (1.0 - 0.05 / 0.15)).abs() < 1e-12);
        assert!((segs[1].confidence - (1.0 - 0.05 / 0.15)).abs() < 1e-12);
        assert!((segs[2].confidence - 0.5).abs() < 1e-12);
    }

    #[test]
    fn segments_partition_the_whole_curve() {
        let curve: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
        for min_len in [1, 2, 5] {
            let params = SegmentParams {
                min_len,
                ..Default::default()
            };
            let segs = segment_levels(&curve, &params).unwrap();
            assert_eq!(segs[0].start, 0);
            assert_eq!(segs.last().unwrap().end, 49);
            for w in segs.windows(2) {
                assert_eq!(w[0].end + 1, w[1].start, "gap or overlap between runs");
                assert_ne!(w[0].level, w[1].level, "adjacent runs must differ");
            }
        }
    }

    #[test]
    fn min_len_absorbs_short_runs() {
        let curve = [0.1, 0.1, 0.4, 0.1, 0.1];
        let segs = segment_levels(
            &curve,
            &SegmentParams {
                min_len: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].level, Level::Uncertain);
        assert_eq!((segs[0].start, segs[0].end), (0, 4));
    }

    #[test]
    fn median_smoothing_removes_single_frame_spikes() {
        let curve = [0.1, 0.1, 0.9, 0.1, 0.1];
        let params = SegmentParams {
            smooth_width: 3,
            ..Default::default()
        };
        let segs = segment_levels(&curve, &params).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].level, Level::Uncertain);

        let bad = SegmentParams {
            smooth_width: 4,
            ..Default::default()
        };
        assert!(segment_levels(&curve, &bad).is_err());
    }

    #[test]
    fn segment_rejects_out_of_range_scores() {
        assert!(segment_levels(&[0.5, 1.5], &SegmentParams::default()).is_err());
        assert!(segment_levels(&[f64::NAN], &SegmentParams::default()).is_err());
        assert!(segment_levels(&[], &SegmentParams::default()).is_err());
    }

    #[test]
    fn iou_counts_frames_inclusively() {
        assert!((temporal_iou((10, 20), (12, 22)).unwrap() - 9.0 / 13.0).abs() < 1e-15);
        assert_eq!(temporal_iou((0, 9), (0, 9)).unwrap(), 1.0);
        assert_eq!(temporal_iou((0, 4), (5, 9)).unwrap(), 0.0);
        // single-frame touch
        assert!((temporal_iou((0, 4), (4, 8)).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        // containment
        assert!((temporal_iou((0, 9), (2, 5)).unwrap() - 0.4).abs() < 1e-15);
        assert!(temporal_iou((5, 2), (0, 1)).is_err());
    }

    #[test]
    fn iou_is_symmetric() {
        for (a, b) in [((0, 10), (5, 20)), ((3, 3), (1, 9)), ((0, 0), (0, 0))] {
            assert_eq!(
                temporal_iou(a, b).unwrap(),
                temporal_iou(b, a).unwrap()
            );
        }
    }

    #[test]
    fn perfect_detection_scores_full_map() {
        let gt = vec![seg(Level::Alert, 10, 30, 1.0), seg(Level::Suspicious, 40, 60, 1.0)];
        let pred = vec![seg(Level::Alert, 10, 30, 0.9), seg(Level::Suspicious, 40, 60, 0.8)];
        let report = mean_average_precision(
            &[SequenceDetections { pred: &pred, gt: &gt }],
            &[0.3, 0.4, 0.5, 0.6, 0.7],
        )
        .unwrap();
        assert_eq!(report.mean_map, Some(1.0));
        for at in &report.per_iou {
            assert_eq!(at.map, Some(1.0));
            assert_eq!(at.per_level[Level::Uncertain.index()], None);
        }
        assert!(!report.empty);
    }

    #[test]
    fn confident_miss_plus_timid_hit_halves_ap() {
        // one reference segment; the higher-confidence prediction only
        // overlaps IoU 0.2 while the low-confidence one lands IoU ~0.94
        let gt = vec![seg(Level::Alert, 0, 29, 1.0)];
        let pred = vec![
            seg(Level::Alert, 20, 49, 0.9),
            seg(Level::Alert, 1, 30, 0.4),
        ];
        assert!((temporal_iou((20, 49), (0, 29)).unwrap() - 0.2).abs() < 1e-12);
        assert!(temporal_iou((1, 30), (0, 29)).unwrap() >= 0.9);
        let report = mean_average_precision(
            &[SequenceDetections { pred: &pred, gt: &gt }],
            &[0.5],
        )
        .unwrap();
        let ap = report.per_iou[0].per_level[Level::Alert.index()].unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
        assert_eq!(report.per_iou[0].map, Some(0.5));
    }

    #[test]
    fn matching_is_one_to_one() {
        let gt = vec![seg(Level::Alert, 0, 9, 1.0)];
        let pred = vec![seg(Level::Alert, 0, 9, 0.9), seg(Level::Alert, 0, 9, 0.8)];
        let report = mean_average_precision(
            &[SequenceDetections { pred: &pred, gt: &gt }],
            &[0.5],
        )
        .unwrap();
        // second duplicate counts as a false positive but recall is already 1
        assert_eq!(report.per_iou[0].map, Some(1.0));
    }

    #[test]
    fn missing_predictions_score_zero_not_nan() {
        let gt = vec![seg(Level::Alert, 0, 9, 1.0)];
        let report = mean_average_precision(
            &[SequenceDetections { pred: &[], gt: &gt }],
            &[0.5],
        )
        .unwrap();
        assert_eq!(report.per_iou[0].map, Some(0.0));
        assert!(!report.empty);
    }

    #[test]
    fn empty_against_empty_is_flagged() {
        let report =
            mean_average_precision(&[SequenceDetections { pred: &[], gt: &[] }], &[0.5]).unwrap();
        assert!(report.empty);
        assert_eq!(report.mean_map, None);
        assert_eq!(report.per_iou[0].map, None);
    }

    #[test]
    fn levels_absent_from_reference_are_excluded() {
        let gt = vec![seg(Level::Alert, 0, 9, 1.0)];
        // a spurious suspicious prediction must not drag the mean down
        let pred = vec![seg(Level::Alert, 0, 9, 0.9), seg(Level::Suspicious, 20, 29, 0.9)];
        let report = mean_average_precision(
            &[SequenceDetections { pred: &pred, gt: &gt }],
            &[0.5],
        )
        .unwrap();
        assert_eq!(report.per_iou[0].per_level[Level::Suspicious.index()], None);
        assert_eq!(report.per_iou[0].map, Some(1.0));
    }

    #[test]
    fn map_never_improves_as_the_threshold_tightens() {
        let gt = vec![seg(Level::Alert, 0, 29, 1.0), seg(Level::Alert, 50, 69, 1.0)];
        let pred = vec![
            seg(Level::Alert, 5, 34, 0.9),
            seg(Level::Alert, 48, 72, 0.7),
            seg(Level::Alert, 80, 99, 0.6),
        ];
        let report = mean_average_precision(
            &[SequenceDetections { pred: &pred, gt: &gt }],
            &[0.3, 0.4, 0.5, 0.6, 0.7],
        )
        .unwrap();
        let maps: Vec<f64> = report.per_iou.iter().map(|m| m.map.unwrap()).collect();
        for w in maps.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "mAP rose with threshold: {maps:?}");
        }
    }

    #[test]
    fn matching_stays_within_sequences() {
        // prediction in sequence 1 must not match the reference in sequence 0
        let gt0 = vec![seg(Level::Alert, 0, 9, 1.0)];
        let pred1 = vec![seg(Level::Alert, 0, 9, 0.9)];
        let report = mean_average_precision(
            &[
                SequenceDetections { pred: &[], gt: &gt0 },
                SequenceDetections { pred: &pred1, gt: &[] },
            ],
            &[0.5],
        )
        .unwrap();
        assert_eq!(report.per_iou[0].map, Some(0.0));
    }

    #[test]
    fn autocorrelation_basics() {
        let ramp: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ac = autocorrelation(&ramp, 3).unwrap();
        assert_eq!(ac[0], Some(1.0));
        assert!(ac[1].unwrap() > 0.99);

        let wave: Vec<f64> = (0..200)
            .map(|i| 0.5 + 0.4 * (i as f64 * std::f64::consts::TAU / 20.0).sin())
            .collect();
        let ac = autocorrelation(&wave, 40).unwrap();
        assert!(ac[20].unwrap() > 0.99, "period-20 wave at lag 20: {:?}", ac[20]);
        assert!(ac[10].unwrap() < -0.99, "half period anti-correlates");
    }

    #[test]
    fn constant_windows_flag_undefined() {
        let flat = [0.4; 10];
        let ac = autocorrelation(&flat, 2).unwrap();
        assert_eq!(ac[0], Some(1.0));
        assert_eq!(ac[1], None);
        assert_eq!(ac[2], None);
    }

    #[test]
    fn autocorrelation_validates_lag() {
        assert!(autocorrelation(&[0.1; 10], 0).is_err());
        assert!(autocorrelation(&[0.1; 10], 10).is_err());
        assert!(autocorrelation(&[0.1; 10], 9).is_ok());
    }

    #[test]
    fn cumulative_effect_is_a_prefix_sum() {
        let c = cumulative_effect(&[0.1, 0.2, 0.3]);
        assert!((c[0] - 0.1).abs() < 1e-15);
        assert!((c[1] - 0.3).abs() < 1e-15);
        assert!((c[2] - 0.6).abs() < 1e-15);
        assert!(cumulative_effect(&[]).is_empty());

        let scores: Vec<f64> = (0..30).map(|i| (i as f64 * 0.7).sin().abs()).collect();
        let cum = cumulative_effect(&scores);
        for w in cum.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }
}
