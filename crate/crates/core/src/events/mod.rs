//! Car-following events: extraction from tracks, low-speed filtering,
//! train/val/test splits, descriptive statistics and the on-disk event store.

mod split;
mod stats;
pub(crate) mod store;

pub use split::{split_dataset, Split, DEFAULT_SPLIT_RATIOS};
pub use stats::{descriptive_stats, histogram, Histogram, MeasureStats, Moments, StatsReport};
pub use store::{read_event_store, write_event_store, write_stats, EventManifest, EventMeta};

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traj::{VehicleTrack, TIME_TOLERANCE_S};

/// Minimum event duration accepted by [`CarFollowingEvent::new`].
pub const MIN_EVENT_DURATION_S: f64 = 15.0;

/// Allowed gap between the spacing derivative and `-dv`, m/s.
pub const KINEMATIC_TOLERANCE_MPS: f64 = 0.5;

const DV_TOLERANCE: f64 = 1e-9;

/// A fixed-rate follower/leader episode with four aligned channels.
///
/// Channels are private so that every value in circulation has passed
/// [`CarFollowingEvent::validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CarFollowingEvent {
    pub event_id: String,
    pub dt_s: f64,
    spacing_m: Vec<f64>,
    v_fv_mps: Vec<f64>,
    dv_mps: Vec<f64>,
    v_lv_mps: Vec<f64>,
    pub source: String,
    pub fv_is_av: bool,
    pub lv_is_av: bool,
    pub fv_id: i64,
    pub lv_id: i64,
}

impl CarFollowingEvent {
    /// Builds an event from spacing and the two speeds; `dv = v_fv - v_lv`.
    pub fn new(
        event_id: impl Into<String>,
        dt_s: f64,
        spacing_m: Vec<f64>,
        v_fv_mps: Vec<f64>,
        v_lv_mps: Vec<f64>,
    ) -> Result<Self> {
        let dv_mps = v_fv_mps.iter().zip(&v_lv_mps).map(|(f, l)| f - l).collect();
        Self::from_channels(event_id, dt_s, spacing_m, v_fv_mps, dv_mps, v_lv_mps)
    }

    /// Builds an event from all four channels as stored on disk.
    pub fn from_channels(
        event_id: impl Into<String>,
        dt_s: f64,
        spacing_m: Vec<f64>,
        v_fv_mps: Vec<f64>,
        dv_mps: Vec<f64>,
        v_lv_mps: Vec<f64>,
    ) -> Result<Self> {
        let ev = CarFollowingEvent {
            event_id: event_id.into(),
            dt_s,
            spacing_m,
            v_fv_mps,
            dv_mps,
            v_lv_mps,
            source: String::new(),
            fv_is_av: false,
            lv_is_av: false,
            fv_id: 0,
            lv_id: 0,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn with_meta(mut self, meta: &EventMeta) -> Self {
        self.source = meta.source.clone();
        self.fv_id = meta.fv_id;
        self.lv_id = meta.lv_id;
        self.fv_is_av = meta.fv_is_av;
        self.lv_is_av = meta.lv_is_av;
        self
    }

    pub fn meta(&self) -> EventMeta {
        EventMeta {
            event_id: self.event_id.clone(),
            source: self.source.clone(),
            fv_id: self.fv_id,
            lv_id: self.lv_id,
            fv_is_av: self.fv_is_av,
            lv_is_av: self.lv_is_av,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEvent(format!("{}: {msg}", self.event_id)));
        let n = self.spacing_m.len();
        if self.v_fv_mps.len() != n || self.dv_mps.len() != n || self.v_lv_mps.len() != n {
            return bad("channel lengths differ".into());
        }
        if !(self.dt_s > 0.0) || !self.dt_s.is_finite() {
            return bad(format!("dt {}", self.dt_s));
        }
        if n < 2 || (n - 1) as f64 * self.dt_s < MIN_EVENT_DURATION_S - TIME_TOLERANCE_S {
            return bad(format!("duration {} s below {MIN_EVENT_DURATION_S} s", self.duration_s()));
        }
        for k in 0..n {
            let (s, vf, dv, vl) = (self.spacing_m[k], self.v_fv_mps[k], self.dv_mps[k], self.v_lv_mps[k]);
            if !(s.is_finite() && vf.is_finite() && dv.is_finite() && vl.is_finite()) {
                return bad(format!("non-finite value at step {k}"));
            }
            if s <= 0.0 {
                return bad(format!("spacing {s} m at step {k}"));
            }
            if (dv - (vf - vl)).abs() > DV_TOLERANCE {
                return bad(format!("dv inconsistent with speeds at step {k}"));
            }
        }
        for k in 0..n - 1 {
            let ds = (self.spacing_m[k + 1] - self.spacing_m[k]) / self.dt_s;
            let mean_dv = 0.5 * (self.dv_mps[k] + self.dv_mps[k + 1]);
            if (ds + mean_dv).abs() > KINEMATIC_TOLERANCE_MPS {
                return bad(format!(
                    "spacing rate {ds:.3} m/s disagrees with relative speed {mean_dv:.3} m/s at step {k}"
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.spacing_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spacing_m.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt_s
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing_m
    }

    pub fn v_fv(&self) -> &[f64] {
        &self.v_fv_mps
    }

    pub fn dv(&self) -> &[f64] {
        &self.dv_mps
    }

    pub fn v_lv(&self) -> &[f64] {
        &self.v_lv_mps
    }
}

/// Thresholds deciding what counts as a car-following event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionCriteria {
    pub min_duration_s: f64,
    pub max_lateral_gap_m: f64,
    /// Low-speed filter fields; the filter only runs when they are set.
    pub min_avg_speed_mps: Option<f64>,
    pub low_speed_threshold_mps: Option<f64>,
    pub low_speed_max_duration_s: Option<f64>,
}

impl Default for ExtractionCriteria {
    fn default() -> Self {
        ExtractionCriteria {
            min_duration_s: 15.0,
            max_lateral_gap_m: 2.0,
            min_avg_speed_mps: None,
            low_speed_threshold_mps: None,
            low_speed_max_duration_s: None,
        }
    }
}

impl ExtractionCriteria {
    /// Default criteria plus the low-speed filter (mean < 2 m/s, or < 0.2 m/s for more than 5 s).
    pub fn with_low_speed_filter() -> Self {
        ExtractionCriteria {
            min_avg_speed_mps: Some(2.0),
            low_speed_threshold_mps: Some(0.2),
            low_speed_max_duration_s: Some(5.0),
            ..Default::default()
        }
    }

    pub fn filters_low_speed(&self) -> bool {
        self.min_avg_speed_mps.is_some()
            || (self.low_speed_threshold_mps.is_some() && self.low_speed_max_duration_s.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            Some(self.min_duration_s),
            Some(self.max_lateral_gap_m),
            self.min_avg_speed_mps,
            self.low_speed_threshold_mps,
            self.low_speed_max_duration_s,
        ];
        if positive.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(format!("non-positive threshold in {self:?}")));
        }
        Ok(())
    }
}

/// Extracts every maximal span in which a follower keeps one leader within
/// the lateral tolerance for at least the minimum duration.
///
/// Spans whose leader track is missing are skipped with a warning. Output is
/// sorted by event id, so track order does not matter.
pub fn extract_events(tracks: &[VehicleTrack], criteria: &ExtractionCriteria) -> Result<Vec<CarFollowingEvent>> {
    criteria.validate()?;
    let Some(first) = tracks.first() else {
        return Ok(Vec::new());
    };
    let dt = first.dt_s;
    if let Some(t) = tracks.iter().find(|t| (t.dt_s - dt).abs() > TIME_TOLERANCE_S) {
        return Err(Error::InvalidArgument(format!(
            "tracks must share one step: vehicle {} has {} s, expected {dt} s",
            t.vehicle_id, t.dt_s
        )));
    }

    let by_id: HashMap<(&str, i64), &VehicleTrack> = tracks
        .iter()
        .map(|t| ((t.dataset_id.as_str(), t.vehicle_id), t))
        .collect();

    let mut events: Vec<CarFollowingEvent> = tracks
        .par_iter()
        .flat_map_iter(|fv| follower_events(fv, &by_id, criteria, dt))
        .collect();
    events.sort_by(|a, b| a.event_id.cmp(&b.event_id));
    Ok(events)
}

fn follower_events(
    fv: &VehicleTrack,
    by_id: &HashMap<(&str, i64), &VehicleTrack>,
    criteria: &ExtractionCriteria,
    dt: f64,
) -> Vec<CarFollowingEvent> {
    let mut out = Vec::new();
    let mut missing_reported: Option<i64> = None;

    // Leader id per step when every criterion holds at that step, else None.
    let step_leader: Vec<Option<(i64, &VehicleTrack, usize)>> = fv
        .samples
        .iter()
        .map(|s| {
            let leader_id = s.preceding_vehicle_id?;
            let Some(lv) = by_id.get(&(fv.dataset_id.as_str(), leader_id)) else {
                if missing_reported != Some(leader_id) {
                    log::warn!(
                        "vehicle {} references leader {leader_id} absent from the tracks; span skipped",
                        fv.vehicle_id
                    );
                    missing_reported = Some(leader_id);
                }
                return None;
            };
            let k = lv.index_at(s.time_s)?;
            let l = &lv.samples[k];
            let lateral_ok = (l.lateral_pos_m - s.lateral_pos_m).abs() <= criteria.max_lateral_gap_m + 1e-9;
            let spacing = l.longitudinal_pos_m - s.longitudinal_pos_m - l.vehicle_length_m;
            (lateral_ok && spacing > 0.0).then_some((leader_id, *lv, k))
        })
        .collect();

    let mut start = 0;
    while start < step_leader.len() {
        let Some((leader_id, _, _)) = step_leader[start] else {
            start += 1;
            continue;
        };
        let mut end = start;
        while end + 1 < step_leader.len() && matches!(step_leader[end + 1], Some((id, _, _)) if id == leader_id) {
            end += 1;
        }
        let n = end - start + 1;
        if (n - 1) as f64 * dt >= criteria.min_duration_s - TIME_TOLERANCE_S {
            if let Some(ev) = build_event(fv, &step_leader[start..=end], start, dt) {
                if !criteria.filters_low_speed() || low_speed_filter(&ev, criteria) {
                    out.push(ev);
                }
            }
        }
        start = end + 1;
    }
    out
}

fn build_event(
    fv: &VehicleTrack,
    span: &[Option<(i64, &VehicleTrack, usize)>],
    start: usize,
    dt: f64,
) -> Option<CarFollowingEvent> {
    let (leader_id, lv, _) = span[0]?;
    let mut spacing = Vec::with_capacity(span.len());
    let mut v_fv = Vec::with_capacity(span.len());
    let mut v_lv = Vec::with_capacity(span.len());
    let mut lv_is_av = false;
    for (i, step) in span.iter().enumerate() {
        let (_, _, k) = (*step)?;
        let f = &fv.samples[start + i];
        let l = &lv.samples[k];
        spacing.push(l.longitudinal_pos_m - f.longitudinal_pos_m - l.vehicle_length_m);
        v_fv.push(f.speed_mps);
        v_lv.push(l.speed_mps);
        lv_is_av |= l.is_av;
    }
    let id = format!("{}:{}:{}:{}", fv.dataset_id, fv.vehicle_id, leader_id, start);
    match CarFollowingEvent::new(id, dt, spacing, v_fv, v_lv) {
        Ok(mut ev) => {
            ev.source = fv.dataset_id.clone();
            ev.fv_id = fv.vehicle_id;
            ev.lv_id = leader_id;
            ev.fv_is_av = fv.samples[start].is_av;
            ev.lv_is_av = lv_is_av;
            Some(ev)
        }
        Err(e) => {
            log::warn!("dropping span: {e}");
            None
        }
    }
}

/// Returns `true` to keep the event: drops followers whose mean speed is
/// below the minimum, or that stay below the low-speed threshold for longer
/// than the allowed duration. Unset criteria never drop.
pub fn low_speed_filter(event: &CarFollowingEvent, criteria: &ExtractionCriteria) -> bool {
    let v = event.v_fv();
    if v.is_empty() {
        return false;
    }
    if let Some(min_avg) = criteria.min_avg_speed_mps {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        if mean < min_avg {
            return false;
        }
    }
    if let (Some(threshold), Some(max_dur)) = (criteria.low_speed_threshold_mps, criteria.low_speed_max_duration_s) {
        let mut run = 0usize;
        for &s in v {
            if s < threshold {
                run += 1;
                if run > 1 && (run - 1) as f64 * event.dt_s > max_dur + TIME_TOLERANCE_S {
                    return false;
                }
            } else {
                run = 0;
            }
        }
    }
    true
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Constant-gap event: both vehicles at `speed`.
    pub fn constant_event(id: &str, spacing: f64, speed: f64, n: usize) -> CarFollowingEvent {
        CarFollowingEvent::new(id, 0.1, vec![spacing; n], vec![speed; n], vec![speed; n]).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::test_support::constant_track;

    fn pair(n: usize, lateral_offset: f64) -> Vec<VehicleTrack> {
        vec![
            constant_track(1, None, 30.0, 10.0, lateral_offset, 0.1, n),
            constant_track(2, Some(1), 0.0, 10.0, 0.0, 0.1, n),
        ]
    }

    #[test]
    fn twenty_second_pair_gives_one_event() {
        let events = extract_events(&pair(201, 0.0), &ExtractionCriteria::default()).unwrap();
        assert_eq!(events.len(), 1);
        let ev = &events[0];
        assert_eq!(ev.len(), 201);
        assert_eq!((ev.fv_id, ev.lv_id), (2, 1));
        for s in ev.spacing() {
            assert!((s - 25.5).abs() < 1e-9);
        }
    }

    #[test]
    fn short_span_gives_nothing() {
        assert!(extract_events(&pair(150, 0.0), &ExtractionCriteria::default()).unwrap().is_empty());
        assert_eq!(extract_events(&pair(151, 0.0), &ExtractionCriteria::default()).unwrap().len(), 1);
    }

    #[test]
    fn leader_switch_breaks_span() {
        let mut tracks = pair(201, 0.0);
        tracks.push(constant_track(3, None, 30.0, 10.0, 0.0, 0.1, 201));
        for s in &mut tracks[1].samples[100..] {
            s.preceding_vehicle_id = Some(3);
        }
        assert!(extract_events(&tracks, &ExtractionCriteria::default()).unwrap().is_empty());
    }

    #[test]
    fn lateral_offset_breaks_span() {
        let mut tracks = pair(201, 0.0);
        tracks[0].samples[100].lateral_pos_m = 2.5;
        assert!(extract_events(&tracks, &ExtractionCriteria::default()).unwrap().is_empty());
        // Exactly 2 m is still the same lane.
        assert_eq!(extract_events(&pair(201, 2.0), &ExtractionCriteria::default()).unwrap().len(), 1);
    }

    #[test]
    fn lateral_violation_leaves_long_remainder() {
        let mut tracks = pair(301, 0.0);
        tracks[0].samples[50].lateral_pos_m = 2.5;
        let events = extract_events(&tracks, &ExtractionCriteria::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].len(), 250);
    }

    #[test]
    fn missing_leader_is_skipped() {
        let tracks = vec![constant_track(2, Some(99), 0.0, 10.0, 0.0, 0.1, 201)];
        assert!(extract_events(&tracks, &ExtractionCriteria::default()).unwrap().is_empty());
    }

    #[test]
    fn mixed_steps_rejected() {
        let mut tracks = pair(201, 0.0);
        tracks[0] = constant_track(1, None, 30.0, 10.0, 0.0, 0.04, 501);
        assert!(extract_events(&tracks, &ExtractionCriteria::default()).is_err());
    }

    #[test]
    fn extraction_ignores_track_order() {
        let mut tracks = pair(201, 0.0);
        tracks.push(constant_track(3, Some(2), -30.0, 10.0, 0.5, 0.1, 201));
        let forward = extract_events(&tracks, &ExtractionCriteria::default()).unwrap();
        tracks.reverse();
        let backward = extract_events(&tracks, &ExtractionCriteria::default()).unwrap();
        assert_eq!(forward.len(), 2);
        assert_eq!(forward, backward);
    }

    #[test]
    fn event_validation() {
        assert!(CarFollowingEvent::new("short", 0.1, vec![10.0; 150], vec![5.0; 150], vec![5.0; 150]).is_err());
        assert!(CarFollowingEvent::new("ok", 0.1, vec![10.0; 151], vec![5.0; 151], vec![5.0; 151]).is_ok());
        let mut s = vec![10.0; 151];
        s[70] = -1.0;
        assert!(CarFollowingEvent::new("neg", 0.1, s, vec![5.0; 151], vec![5.0; 151]).is_err());
        // Spacing constant while the follower is 3 m/s faster: kinematically impossible.
        assert!(CarFollowingEvent::new("kin", 0.1, vec![10.0; 151], vec![8.0; 151], vec![5.0; 151]).is_err());
        let dv_wrong = vec![0.5; 151];
        assert!(
            CarFollowingEvent::from_channels("dv", 0.1, vec![10.0; 151], vec![5.0; 151], dv_wrong, vec![5.0; 151])
                .is_err()
        );
    }

    fn speed_event(v_fv: Vec<f64>) -> CarFollowingEvent {
        let n = v_fv.len();
        // Leader mirrors the follower so the gap stays fixed.
        CarFollowingEvent::new("ls", 0.1, vec![20.0; n], v_fv.clone(), v_fv).unwrap()
    }

    #[test]
    fn low_speed_rules() {
        let c = ExtractionCriteria::with_low_speed_filter();
        assert!(!low_speed_filter(&speed_event(vec![1.5; 201]), &c));
        let mut stall = vec![20.0; 201];
        for v in &mut stall[50..111] {
            *v = 0.1;
        }
        assert!(!low_speed_filter(&speed_event(stall), &c));
        let mut fast: Vec<f64> = vec![20.0; 201];
        fast[10] = 5.0;
        assert!(low_speed_filter(&speed_event(fast), &c));
        // A 5 s stall (51 samples) is tolerated; the rule needs more than 5 s.
        let mut short_stall = vec![20.0; 201];
        for v in &mut short_stall[50..101] {
            *v = 0.1;
        }
        assert!(low_speed_filter(&speed_event(short_stall), &c));
        assert!(low_speed_filter(&speed_event(vec![1.5; 201]), &ExtractionCriteria::default()));
    }

    #[test]
    fn low_speed_filter_applied_during_extraction() {
        let slow = vec![
            constant_track(1, None, 30.0, 1.0, 0.0, 0.1, 201),
            constant_track(2, Some(1), 0.0, 1.0, 0.0, 0.1, 201),
        ];
        assert_eq!(extract_events(&slow, &ExtractionCriteria::default()).unwrap().len(), 1);
        assert!(extract_events(&slow, &ExtractionCriteria::with_low_speed_filter()).unwrap().is_empty());
    }

    #[test]
    fn lateral_uses_leader_sample_at_same_time() {
        // Leader starts 5 s later than the follower; only the overlap can form an event.
        let mut lv_shifted = constant_track(1, None, 80.0, 10.0, 0.0, 0.1, 200);
        for s in &mut lv_shifted.samples {
            s.time_s += 5.0;
            s.longitudinal_pos_m += 50.0;
        }
        let fv = constant_track(2, Some(1), 0.0, 10.0, 0.0, 0.1, 251);
        let events = extract_events(&[lv_shifted, fv], &ExtractionCriteria::default()).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].len(), 200);
    }
}
