//! Success rate, post-encroachment time and travel velocity from traces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::geometry::Vec2;
use crate::harness::{conflict_areas, read_trace, EpisodeResult, StepRow, TraceLine};
use crate::world::VehicleId;

/// Position samples of one episode plus its conflict areas.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub areas: Vec<Vec2>,
    pub rows: Vec<StepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub average: f64,
    pub max: f64,
    pub min: f64,
}

/// Entry and exit time of a vehicle's first pass through a disk.
fn first_pass(samples: &[(f64, Vec2)], center: Vec2, radius: f64) -> Option<(f64, f64)> {
    let mut entry = None;
    let mut exit = 0.0;
    for (t, p) in samples {
        let inside = p.distance(center) <= radius;
        match (inside, entry) {
            (true, None) => {
                entry = Some(*t);
                exit = *t;
            }
            (true, Some(_)) => exit = *t,
            (false, Some(_)) => break,
            (false, None) => {}
        }
    }
    entry.map(|e| (e, exit))
}

/// PET samples: for every conflict area and every ordered pair of vehicles
/// (at least one a CAV) that both pass through its disk, the time from the
/// first vehicle's exit to the second one's entry, when positive.
pub fn compute_pet(traces: &[EpisodeTrace], radius: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for tr in traces {
        let mut by_vehicle: BTreeMap<VehicleId, (bool, Vec<(f64, Vec2)>)> = BTreeMap::new();
        for r in &tr.rows {
            let e = by_vehicle.entry(r.id).or_insert((r.is_cav, Vec::new()));
            e.1.push((r.t, Vec2::new(r.x, r.y)));
        }
        for s in by_vehicle.values_mut() {
            s.1.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        for c in &tr.areas {
            let passes: Vec<(bool, f64, f64)> = by_vehicle
                .values()
                .filter_map(|(cav, s)| first_pass(s, *c, radius).map(|(en, ex)| (*cav, en, ex)))
                .collect();
            for (i, a) in passes.iter().enumerate() {
                for (j, b) in passes.iter().enumerate() {
                    if i == j || !(a.0 || b.0) {
                        continue;
                    }
                    let pet = b.1 - a.2;
                    if pet > 0.0 {
                        out.push(pet);
                    }
                }
            }
        }
    }
    out
}

pub fn summarize(samples: &[f64]) -> Option<Triple> {
    if samples.is_empty() {
        return None;
    }
    Some(Triple {
        average: samples.iter().sum::<f64>() / samples.len() as f64,
        max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min: samples.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Mean CAV speed over all samples, and the extreme per-episode means.
pub fn compute_velocity(traces: &[EpisodeTrace]) -> Option<Triple> {
    let mut total = 0.0;
    let mut count = 0usize;
    let mut means = Vec::new();
    for tr in traces {
        let speeds: Vec<f64> = tr.rows.iter().filter(|r| r.is_cav).map(|r| r.v).collect();
        if speeds.is_empty() {
            continue;
        }
        total += speeds.iter().sum::<f64>();
        count += speeds.len();
        means.push(speeds.iter().sum::<f64>() / speeds.len() as f64);
    }
    let per_episode = summarize(&means)?;
    Some(Triple { average: total / count as f64, max: per_episode.max, min: per_episode.min })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub collisions: usize,
    pub pet: Option<Triple>,
    pub pet_samples: usize,
    pub travel_velocity: Option<Triple>,
    pub decisions: u64,
    pub fallbacks: u64,
}

pub fn build_report(results: &[EpisodeResult], traces: &[EpisodeTrace], pet_radius: f64) -> MetricsReport {
    let pet = compute_pet(traces, pet_radius);
    let successes = results.iter().filter(|r| r.success).count();
    MetricsReport {
        episodes: results.len(),
        successes,
        success_rate: if results.is_empty() { 0.0 } else { successes as f64 / results.len() as f64 },
        collisions: results.iter().filter(|r| r.collision.is_some()).count(),
        pet: summarize(&pet),
        pet_samples: pet.len(),
        travel_velocity: compute_velocity(traces),
        decisions: results.iter().map(|r| r.decisions).sum(),
        fallbacks: results.iter().map(|r| r.fallbacks).sum(),
    }
}

/// Reads every complete trace in `dir`.
pub fn load_traces(dir: &Path) -> Result<(Vec<EpisodeResult>, Vec<EpisodeTrace>), HarnessError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_seed_") && n.ends_with(".jsonl"))
        })
        .collect();
    paths.sort();
    let mut results = Vec::new();
    let mut traces = Vec::new();
    for path in paths {
        let mut trace = EpisodeTrace::default();
        let mut result = None;
        for line in read_trace(&path)? {
            match line {
                TraceLine::Header(h) => trace.areas = conflict_areas(&h),
                TraceLine::Step(r) => trace.rows.push(r),
                TraceLine::Result(r) => result = Some(r),
            }
        }
        if let Some(r) = result {
            results.push(r);
            traces.push(trace);
        } else {
            log::warn!("{} is incomplete; skipped", path.display());
        }
    }
    Ok((results, traces))
}

fn triple_line(name: &str, unit: &str, t: &Option<Triple>) -> String {
    match t {
        Some(t) => format!("{name}: average {:.3} {unit}, max {:.3} {unit}, min {:.3} {unit}\n", t.average, t.max, t.min),
        None => format!("{name}: no samples\n"),
    }
}

pub fn render_report(r: &MetricsReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "episodes: {}", r.episodes);
    let _ = writeln!(out, "success rate: {:.3} ({}/{})", r.success_rate, r.successes, r.episodes);
    let _ = writeln!(out, "collisions: {}", r.collisions);
    out.push_str(&triple_line("PET", "s", &r.pet));
    let _ = writeln!(out, "PET samples: {}", r.pet_samples);
    out.push_str(&triple_line("travel velocity", "m/s", &r.travel_velocity));
    let _ = writeln!(out, "decisions: {} (fallbacks: {})", r.decisions, r.fallbacks);
    out
}

/// Builds the report for a run directory and writes `summary.txt` and
/// `summary.json` next to the traces.
pub fn report(dir: &Path, pet_radius: f64) -> Result<MetricsReport, HarnessError> {
    let (results, traces) = load_traces(dir)?;
    let report = build_report(&results, &traces, pet_radius);
    std::fs::write(dir.join("summary.txt"), render_report(&report))?;
    let json = serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(report)
}
