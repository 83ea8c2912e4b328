use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CarFollowingEvent, ExtractionCriteria, StatsReport};
use crate::error::{Error, Result};

pub const EVENT_HEADER: [&str; 6] = ["event_id", "t_index", "spacing_m", "v_fv_mps", "dv_mps", "v_lv_mps"];

/// Per-event labels that do not fit the four-channel CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventMeta {
    pub event_id: String,
    pub source: String,
    pub fv_id: i64,
    pub lv_id: i64,
    pub fv_is_av: bool,
    pub lv_is_av: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventManifest {
    pub dataset_id: String,
    pub dt_s: f64,
    pub n_events: usize,
    pub split: String,
    pub criteria: Option<ExtractionCriteria>,
    pub source_hash: String,
    #[serde(default)]
    pub events: Vec<EventMeta>,
}

fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("manifest.json")
}

/// Writes `<dir>/<split>.csv` and `<dir>/<split>.manifest.json`; returns the CSV path.
pub fn write_event_store(
    dir: impl AsRef<Path>,
    split: &str,
    events: &[CarFollowingEvent],
    dataset_id: &str,
    criteria: Option<ExtractionCriteria>,
    source_hash: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{split}.csv"));
    let dt_s = events.first().map(|e| e.dt_s).unwrap_or(crate::traj::CANONICAL_DT_S);
    if events.iter().any(|e| (e.dt_s - dt_s).abs() > crate::traj::TIME_TOLERANCE_S) {
        return Err(Error::InvalidArgument("events in one store must share dt".into()));
    }

    let file = File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(EVENT_HEADER)?;
    for ev in events {
        for k in 0..ev.len() {
            w.write_record([
                ev.event_id.clone(),
                k.to_string(),
                ev.spacing()[k].to_string(),
                ev.v_fv()[k].to_string(),
                ev.dv()[k].to_string(),
                ev.v_lv()[k].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let manifest = EventManifest {
        dataset_id: dataset_id.to_string(),
        dt_s,
        n_events: events.len(),
        split: split.to_string(),
        criteria,
        source_hash: source_hash.to_string(),
        events: events.iter().map(CarFollowingEvent::meta).collect(),
    };
    write_json(&manifest_path(&csv_path), &manifest)?;
    Ok(csv_path)
}

/// Reads an event CSV and its sibling manifest. Events come back in file order.
pub fn read_event_store(csv_path: impl AsRef<Path>) -> Result<(Vec<CarFollowingEvent>, EventManifest)> {
    let csv_path = csv_path.as_ref();
    let mpath = manifest_path(csv_path);
    let manifest: EventManifest =
        serde_json::from_slice(&fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?)?;
    let meta: BTreeMap<&str, &EventMeta> = manifest.events.iter().map(|m| (m.event_id.as_str(), m)).collect();

    let mut rdr = csv::Reader::from_path(csv_path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != EVENT_HEADER {
        return Err(Error::MalformedRow {
            line: 1,
            message: format!("expected header {}", EVENT_HEADER.join(",")),
        });
    }

    struct Pending {
        id: String,
        channels: [Vec<f64>; 4],
    }
    let mut out = Vec::new();
    let mut current: Option<Pending> = None;
    let finish = |p: Pending, out: &mut Vec<CarFollowingEvent>| -> Result<()> {
        let [s, vf, dv, vl] = p.channels;
        let mut ev = CarFollowingEvent::from_channels(p.id, manifest.dt_s, s, vf, dv, vl)?;
        match meta.get(ev.event_id.as_str()) {
            Some(m) => ev = ev.with_meta(m),
            None => ev.source = manifest.dataset_id.clone(),
        }
        out.push(ev);
        Ok(())
    };

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let malformed = |message: String| Error::MalformedRow { line, message };
        if record.len() != EVENT_HEADER.len() {
            return Err(malformed(format!("expected {} fields", EVENT_HEADER.len())));
        }
        let id = &record[0];
        let t_index: usize = record[1].parse().map_err(|_| malformed(format!("bad t_index {:?}", &record[1])))?;
        let mut vals = [0.0; 4];
        for (i, v) in vals.iter_mut().enumerate() {
            *v = record[i + 2]
                .parse()
                .map_err(|_| malformed(format!("bad number {:?}", &record[i + 2])))?;
        }
        if current.as_ref().is_none_or(|p| p.id != id) {
            if let Some(p) = current.take() {
                finish(p, &mut out)?;
            }
            current = Some(Pending {
                id: id.to_string(),
                channels: Default::default(),
            });
        }
        let p = current.as_mut().unwrap();
        if t_index != p.channels[0].len() {
            return Err(malformed(format!("event {id}: expected t_index {}", p.channels[0].len())));
        }
        for (c, v) in p.channels.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut out)?;
    }
    if out.len() != manifest.n_events {
        return Err(Error::InvalidArgument(format!(
            "{}: manifest lists {} events, file holds {}",
            csv_path.display(),
            manifest.n_events,
            out.len()
        )));
    }
    Ok((out, manifest))
}

/// Writes one histogram CSV per measure plus `stats_summary.json`.
pub fn write_stats(dir: impl AsRef<Path>, report: &StatsReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, m) in &report.measures {
        let path = dir.join(format!("hist_{name}.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (i, c) in m.histogram.counts.iter().enumerate() {
            w.write_record([
                m.histogram.edges[i].to_string(),
                m.histogram.edges[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
        w.write_record(["-inf".to_string(), m.histogram.edges[0].to_string(), m.histogram.underflow.to_string()])?;
        w.write_record([
            m.histogram.edges.last().unwrap().to_string(),
            "inf".to_string(),
            m.histogram.overflow.to_string(),
        ])?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    write_json(&dir.join("stats_summary.json"), report)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::test_support::constant_event;

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = constant_event("x:1:2:0", 20.0, 10.0, 160);
        a.fv_id = 1;
        a.lv_id = 2;
        a.lv_is_av = true;
        a.source = "x".into();
        let b = CarFollowingEvent::new(
            "x:3:4:0",
            0.1,
            (0..151).map(|k| 30.0 - 0.05 * k as f64).collect(),
            vec![10.5; 151],
            vec![10.0; 151],
        )
        .unwrap();
        let path = write_event_store(dir.path(), "train", &[a.clone(), b.clone()], "x", None, "abc").unwrap();
        let (events, manifest) = read_event_store(&path).unwrap();
        assert_eq!(manifest.n_events, 2);
        assert_eq!(events[0], a);
        assert_eq!(events[1].spacing(), b.spacing());
        assert_eq!(events[1].source, "");
    }
}
