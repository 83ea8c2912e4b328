use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrajectorySample, VehicleTrack, CANONICAL_DT_S, TIME_TOLERANCE_S};
use crate::error::{Error, Result};

pub const CANONICAL_HEADER: [&str; 11] = [
    "dataset_id",
    "vehicle_id",
    "time_s",
    "lane_id",
    "longitudinal_pos_m",
    "lateral_pos_m",
    "speed_mps",
    "accel_mps2",
    "preceding_vehicle_id",
    "vehicle_length_m",
    "is_av",
];

const MANDATORY: [&str; 8] = [
    "vehicle_id",
    "time_s",
    "lane_id",
    "longitudinal_pos_m",
    "lateral_pos_m",
    "speed_mps",
    "preceding_vehicle_id",
    "vehicle_length_m",
];

/// Maps foreign column names onto the canonical header.
///
/// An empty adapter reads canonical files. Columns not listed in `columns`
/// are looked up under their canonical name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaAdapter {
    /// canonical name → name in the source file
    pub columns: BTreeMap<String, String>,
    /// canonical name → multiplier applied after parsing (e.g. feet → meters)
    pub scale: BTreeMap<String, f64>,
    /// Dataset label used when the file has no `dataset_id` column.
    pub dataset_id: Option<String>,
    /// Leader id meaning "no leader" (NGSIM writes 0).
    pub no_leader_value: Option<i64>,
}

impl SchemaAdapter {
    pub fn canonical() -> Self {
        Self::default()
    }

    fn source_name<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.columns.get(canonical).map(String::as_str).unwrap_or(canonical)
    }

    fn scale_of(&self, canonical: &str) -> f64 {
        self.scale.get(canonical).copied().unwrap_or(1.0)
    }
}

pub fn load_tracks(path: impl AsRef<Path>, schema: &SchemaAdapter) -> Result<Vec<VehicleTrack>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tracks(BufReader::new(file), schema)
}

/// Parses a trajectory CSV into one track per (dataset, vehicle), ordered by
/// dataset then vehicle id.
pub fn read_tracks<R: Read>(reader: R, schema: &SchemaAdapter) -> Result<Vec<VehicleTrack>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |canonical: &str| -> Option<usize> {
        let name = schema.source_name(canonical);
        headers.iter().position(|h| h.trim() == name)
    };
    for col in MANDATORY {
        if find(col).is_none() {
            return Err(Error::MissingColumn(schema.source_name(col).to_string()));
        }
    }
    let idx: BTreeMap<&str, Option<usize>> = CANONICAL_HEADER.iter().map(|c| (*c, find(c))).collect();

    let mut grouped: BTreeMap<(String, i64), Vec<TrajectorySample>> = BTreeMap::new();
    let mut seen: HashSet<(String, i64, u64)> = HashSet::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |name: &str| -> Option<&str> {
            idx[name].and_then(|i| record.get(i)).map(str::trim).filter(|s| !s.is_empty())
        };
        let required = |name: &str| -> Result<&str> {
            field(name).ok_or_else(|| Error::MalformedRow {
                line,
                message: format!("empty `{}`", schema.source_name(name)),
            })
        };
        let real = |name: &str| -> Result<f64> {
            let raw = required(name)?;
            raw.parse::<f64>()
                .map(|v| v * schema.scale_of(name))
                .map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("`{}` is not a number: {raw:?}", schema.source_name(name)),
                })
        };
        let integer = |raw: &str, name: &str| -> Result<i64> {
            raw.parse::<i64>()
                .or_else(|_| match raw.parse::<f64>() {
                    Ok(v) if v.fract() == 0.0 && v.is_finite() => Ok(v as i64),
                    _ => Err(()),
                })
                .map_err(|_| Error::MalformedRow {
                    line,
                    message: format!("`{}` is not an integer: {raw:?}", schema.source_name(name)),
                })
        };

        let dataset_id = match field("dataset_id") {
            Some(d) => d.to_string(),
            None => schema.dataset_id.clone().unwrap_or_else(|| "default".to_string()),
        };
        let vehicle_id = integer(required("vehicle_id")?, "vehicle_id")?;
        let preceding_vehicle_id = match field("preceding_vehicle_id") {
            Some(raw) => {
                let id = integer(raw, "preceding_vehicle_id")?;
                (Some(id) != schema.no_leader_value).then_some(id)
            }
            None => None,
        };
        let accel_mps2 = match field("accel_mps2") {
            Some(_) => Some(real("accel_mps2")?),
            None => None,
        };
        let is_av = match field("is_av") {
            None => false,
            Some("1") | Some("true") | Some("True") | Some("TRUE") => true,
            Some("0") | Some("false") | Some("False") | Some("FALSE") => false,
            Some(other) => {
                return Err(Error::MalformedRow {
                    line,
                    message: format!("`is_av` is not a boolean: {other:?}"),
                })
            }
        };
        let sample = TrajectorySample {
            time_s: real("time_s")?,
            longitudinal_pos_m: real("longitudinal_pos_m")?,
            lateral_pos_m: real("lateral_pos_m")?,
            speed_mps: real("speed_mps")?,
            accel_mps2,
            lane_id: integer(required("lane_id")?, "lane_id")?,
            preceding_vehicle_id,
            vehicle_length_m: real("vehicle_length_m")?,
            is_av,
        };
        sample.validate().map_err(|e| Error::MalformedRow {
            line,
            message: e.to_string(),
        })?;

        if !seen.insert((dataset_id.clone(), vehicle_id, sample.time_s.to_bits())) {
            return Err(Error::DuplicateSample {
                line,
                vehicle_id,
                time_s: sample.time_s,
            });
        }
        let samples = grouped.entry((dataset_id, vehicle_id)).or_default();
        if let Some(last) = samples.last() {
            if sample.time_s <= last.time_s {
                return Err(Error::NonMonotoneTime {
                    line,
                    vehicle_id,
                    time_s: sample.time_s,
                });
            }
        }
        samples.push(sample);
    }

    // Single-sample tracks inherit the step of their dataset.
    let mut dataset_dt: BTreeMap<String, f64> = BTreeMap::new();
    for ((dataset, _), samples) in &grouped {
        if samples.len() >= 2 && !dataset_dt.contains_key(dataset) {
            dataset_dt.insert(dataset.clone(), samples[1].time_s - samples[0].time_s);
        }
    }

    grouped
        .into_iter()
        .map(|((dataset, vehicle_id), samples)| {
            let dt = if samples.len() >= 2 {
                samples[1].time_s - samples[0].time_s
            } else {
                dataset_dt.get(&dataset).copied().unwrap_or(CANONICAL_DT_S)
            };
            // Round away representation noise such as 0.09999999999999987.
            let dt = round_step(dt);
            VehicleTrack::new(vehicle_id, dataset, dt, samples)
        })
        .collect()
}

fn round_step(dt: f64) -> f64 {
    let rounded = (dt * 1e6).round() / 1e6;
    if (rounded - dt).abs() <= TIME_TOLERANCE_S {
        rounded
    } else {
        dt
    }
}

pub fn save_tracks(path: impl AsRef<Path>, tracks: &[VehicleTrack]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tracks(&mut w, tracks)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes tracks in the canonical CSV layout, in the given order.
pub fn write_tracks<W: Write>(writer: W, tracks: &[VehicleTrack]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(CANONICAL_HEADER)?;
    for track in tracks {
        for s in &track.samples {
            w.write_record([
                track.dataset_id.clone(),
                track.vehicle_id.to_string(),
                s.time_s.to_string(),
                s.lane_id.to_string(),
                s.longitudinal_pos_m.to_string(),
                s.lateral_pos_m.to_string(),
                s.speed_mps.to_string(),
                s.accel_mps2.map(|a| a.to_string()).unwrap_or_default(),
                s.preceding_vehicle_id.map(|p| p.to_string()).unwrap_or_default(),
                s.vehicle_length_m.to_string(),
                if s.is_av { "1" } else { "0" }.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_VEHICLES: &str = "\
dataset_id,vehicle_id,time_s,lane_id,longitudinal_pos_m,lateral_pos_m,speed_mps,accel_mps2,preceding_vehicle_id,vehicle_length_m,is_av
d,1,0,1,30,0,10,,,4.5,0
d,2,0,1,0,0,10,,1,4.5,0
d,1,0.1,1,31,0,10,,,4.5,0
d,2,0.1,1,1,0,10,,1,4.5,0
d,1,0.2,1,32,0,10,,,4.5,1
d,2,0.2,1,2,0,10,0.5,1,4.5,0
";

    #[test]
    fn parses_two_tracks() {
        let tracks = read_tracks(TWO_VEHICLES.as_bytes(), &SchemaAdapter::canonical()).unwrap();
        assert_eq!(tracks.len(), 2);
        assert!(tracks.iter().all(|t| t.len() == 3));
        assert!((tracks[0].dt_s - 0.1).abs() < 1e-12);
        assert_eq!(tracks[1].samples[0].preceding_vehicle_id, Some(1));
        assert_eq!(tracks[0].samples[0].preceding_vehicle_id, None);
        assert_eq!(tracks[1].samples[2].accel_mps2, Some(0.5));
        assert!(tracks[0].samples[2].is_av);
    }

    #[test]
    fn duplicate_row_reports_line() {
        let data = format!("{TWO_VEHICLES}d,2,0.1,1,1,0,10,,1,4.5,0\n");
        match read_tracks(data.as_bytes(), &SchemaAdapter::canonical()) {
            Err(Error::DuplicateSample { line, vehicle_id, .. }) => {
                assert_eq!(line, 8);
                assert_eq!(vehicle_id, 2);
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn backwards_time_rejected() {
        let data = format!("{TWO_VEHICLES}d,2,0.15,1,1,0,10,,1,4.5,0\n");
        assert!(matches!(
            read_tracks(data.as_bytes(), &SchemaAdapter::canonical()),
            Err(Error::NonMonotoneTime { line: 8, .. })
        ));
    }

    #[test]
    fn malformed_and_missing_columns() {
        let bad = TWO_VEHICLES.replace("d,2,0.1,1,1,0,10,,1", "d,2,0.1,1,abc,0,10,,1");
        assert!(matches!(
            read_tracks(bad.as_bytes(), &SchemaAdapter::canonical()),
            Err(Error::MalformedRow { line: 5, .. })
        ));
        let missing = TWO_VEHICLES.replace("speed_mps", "velocity");
        assert!(matches!(
            read_tracks(missing.as_bytes(), &SchemaAdapter::canonical()),
            Err(Error::MissingColumn(c)) if c == "speed_mps"
        ));
    }

    #[test]
    fn adapter_renames_and_scales() {
        let data = "\
Vehicle_ID,Frame_Time,Lane_ID,Local_Y,Local_X,v_Vel,Preceding,v_Length
5,0,2,100,1,33,0,15
5,0.1,2,103.3,1,33,0,15
";
        let mut adapter = SchemaAdapter {
            dataset_id: Some("ngsim".into()),
            no_leader_value: Some(0),
            ..Default::default()
        };
        for (c, f) in [
            ("vehicle_id", "Vehicle_ID"),
            ("time_s", "Frame_Time"),
            ("lane_id", "Lane_ID"),
            ("longitudinal_pos_m", "Local_Y"),
            ("lateral_pos_m", "Local_X"),
            ("speed_mps", "v_Vel"),
            ("preceding_vehicle_id", "Preceding"),
            ("vehicle_length_m", "v_Length"),
        ] {
            adapter.columns.insert(c.into(), f.into());
        }
        for c in ["longitudinal_pos_m", "lateral_pos_m", "speed_mps", "vehicle_length_m"] {
            adapter.scale.insert(c.into(), 0.3048);
        }
        let tracks = read_tracks(data.as_bytes(), &adapter).unwrap();
        assert_eq!(tracks.len(), 1);
        assert_eq!(tracks[0].dataset_id, "ngsim");
        assert_eq!(tracks[0].samples[0].preceding_vehicle_id, None);
        assert!((tracks[0].samples[0].speed_mps - 33.0 * 0.3048).abs() < 1e-12);
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let tracks = read_tracks(TWO_VEHICLES.as_bytes(), &SchemaAdapter::canonical()).unwrap();
        let mut first = Vec::new();
        write_tracks(&mut first, &tracks).unwrap();
        let again = read_tracks(first.as_slice(), &SchemaAdapter::canonical()).unwrap();
        assert_eq!(again, tracks);
        let mut second = Vec::new();
        write_tracks(&mut second, &again).unwrap();
        assert_eq!(first, second);
    }
}
