//! Trajectories in, car-following events out.
//!
//! ```text
//! cargo run --example extract_events [-- <trajectory.csv>]
//! ```
//!
//! Loads a canonical trajectory file (the bundled 200-vehicle fixture by
//! default), smooths every track, extracts events, prints the six behavioral
//! measures and splits 70/15/15.

use std::path::PathBuf;

use followbench::events::{descriptive_stats, extract_events, split_dataset, ExtractionCriteria, DEFAULT_SPLIT_RATIOS};
use followbench::traj::{load_tracks, smooth_track, SchemaAdapter, SmoothingConfig};

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic_200.csv"));
    let tracks = load_tracks(&path, &SchemaAdapter::canonical())?;
    let smoothed = tracks
        .iter()
        .map(|t| smooth_track(t, &SmoothingConfig::default()))
        .collect::<followbench::Result<Vec<_>>>()?;

    let events = extract_events(&smoothed, &ExtractionCriteria::default())?;
    println!("{} tracks -> {} events", tracks.len(), events.len());

    let stats = descriptive_stats(&events)?;
    for (name, m) in &stats.measures {
        println!(
            "{name:<24} mean {:>8.3} {:<6} std {:>7.3}  [{:.2}, {:.2}]",
            m.summary.mean, m.unit, m.summary.std, m.summary.min, m.summary.max
        );
    }

    let split = split_dataset(events, DEFAULT_SPLIT_RATIOS, 0)?;
    println!("train/val/test: {}/{}/{}", split.train.len(), split.val.len(), split.test.len());
    Ok(())
}
