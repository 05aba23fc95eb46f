//! Episode loop and seeded batches with JSONL traces.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ResolvedConfig, ScenarioConfig, ScenarioKind};
use crate::decision::{
    action_to_reference, assemble_prompt, assess_action_safety, conflict_text, decide, ActionMask, DecisionOutcome, MetaAction,
    PromptBundle, PromptEgo, SafetyParams,
};
use crate::dynamics::{bicycle_step, hdv_policy, lateral_control, longitudinal_control};
use crate::error::HarnessError;
use crate::gateway::ChatBackend;
use crate::geometry::{OrientedRect, Vec2};
use crate::memory::{augment, render_memory, MemoryStore, Stamp};
use crate::negotiation::{coordinate, detect_conflicts, orders_for, worst_severity, PassingOrder, Rule, RuleTable, Severity};
use crate::perception::{classify, render_scene, share_intent, EgoStatus, Intent, IntentHint};
use crate::scenario::build_resolved;
use crate::world::{Arrival, ConflictKind, ConflictPoint, LaneId, VehicleId, World};

/// Ablation switches and memory settings for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    pub negotiation: bool,
    pub memory: bool,
    pub shots: usize,
    /// Send soft-rule passing orders to the backend for confirmation.
    pub llm_coordinator: bool,
    /// Each episode starts from the initial store and does not write back.
    pub isolated_memory: bool,
}

impl Default for RunFlags {
    fn default() -> Self {
        Self { negotiation: true, memory: true, shots: 2, llm_coordinator: false, isolated_memory: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub a: VehicleId,
    pub b: VehicleId,
    pub time: f64,
    pub position: Vec2,
}

fn footprint(world: &World, id: VehicleId) -> OrientedRect {
    let v = &world.vehicles[&id];
    OrientedRect { center: v.position(), heading: v.heading, length: v.length, width: world.params.vehicle_width }
}

/// First overlapping pair of footprints, by ascending ids.
pub fn collision_check(world: &World) -> Option<Collision> {
    let ids: Vec<VehicleId> = world.vehicles.keys().copied().collect();
    for (i, a) in ids.iter().enumerate() {
        let ra = footprint(world, *a);
        for b in &ids[i + 1..] {
            let rb = footprint(world, *b);
            if ra.center.distance(rb.center) > ra.length + rb.length {
                continue;
            }
            if ra.overlaps(&rb) {
                return Some(Collision { a: *a, b: *b, time: world.time(), position: (ra.center + rb.center) * 0.5 });
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub first: VehicleId,
    pub yielder: VehicleId,
    pub rule: Rule,
    pub severity: Severity,
}

impl OrderSummary {
    fn of(o: &PassingOrder) -> Self {
        Self { first: o.first, yielder: o.yielder, rule: o.rule, severity: o.pair.severity }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub dt: f64,
    pub cav_ids: Vec<VehicleId>,
    pub conflict_points: Vec<ConflictPoint>,
    pub flags: RunFlags,
}

/// One vehicle at the start of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub t: f64,
    pub id: VehicleId,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub phi: f64,
    pub lane: LaneId,
    pub is_cav: bool,
    /// Action in force for a CAV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<MetaAction>,
    /// The CAV decided at this step.
    #[serde(default)]
    pub decided: bool,
    #[serde(default)]
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub orders: Vec<OrderSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub memory_ids: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub dropped_memories: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub success: bool,
    pub collision: Option<Collision>,
    pub steps_run: u64,
    pub arrivals: Vec<Arrival>,
    pub trace_path: String,
    pub decisions: u64,
    pub fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step(StepRow),
    Result(EpisodeResult),
}

/// Full prompt and replies of one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLog {
    pub t: f64,
    pub id: VehicleId,
    pub prompt: String,
    pub replies: Vec<String>,
    pub fallback: bool,
    pub error: Option<String>,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed_{seed:03}.jsonl")
}

pub fn prompt_file_name(seed: u64) -> String {
    format!("prompts_seed_{seed:03}.jsonl")
}

/// Reads every line of a trace file.
pub fn read_trace(path: &Path) -> Result<Vec<TraceLine>, HarnessError> {
    let bad = |reason: String| HarnessError::Trace { path: path.display().to_string(), reason };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        out.push(serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

/// The result line of a finished trace, `None` if the trace is incomplete.
pub fn completed_result(path: &Path) -> Option<EpisodeResult> {
    let lines = read_trace(path).ok()?;
    match (lines.first(), lines.last()) {
        (Some(TraceLine::Header(_)), Some(TraceLine::Result(r))) => Some(r.clone()),
        _ => None,
    }
}

#[derive(Debug, Clone)]
struct Pending {
    scene: String,
    conflicts: String,
    action: MetaAction,
    before: Severity,
}

#[derive(Debug, Clone)]
struct CavState {
    v_ref: f64,
    action: MetaAction,
    intent: Intent,
    pending: Option<Pending>,
}

struct Prep {
    id: VehicleId,
    ctx: crate::perception::LaneContext,
    scene: String,
    conflicts: String,
    mask: ActionMask,
    bundle: PromptBundle,
    memory_ids: Vec<u64>,
    orders: Vec<OrderSummary>,
    before: Severity,
}

/// Per-step trace extras of a CAV that decided.
#[derive(Debug, Clone, Default)]
struct Decided {
    fallback: bool,
    orders: Vec<OrderSummary>,
    memory_ids: Vec<u64>,
    prompt_sha256: Option<String>,
    reply_sha256: Option<String>,
    dropped: usize,
}

/// One running episode.
pub struct Episode {
    pub cfg: ResolvedConfig,
    pub world: World,
    pub points: Vec<ConflictPoint>,
    pub flags: RunFlags,
    pub rules: RuleTable,
    safety: SafetyParams,
    cavs: BTreeMap<VehicleId, CavState>,
    pub rows: Vec<StepRow>,
    pub prompts: Vec<PromptLog>,
    pub collision: Option<Collision>,
    decisions: u64,
    fallbacks: u64,
}

impl Episode {
    pub fn new(cfg: ResolvedConfig, flags: RunFlags) -> Result<Self, HarnessError> {
        let world = build_resolved(&cfg)?;
        Ok(Self::from_world(cfg, world, flags))
    }

    /// Runs an already-built world under `cfg`'s parameters.
    pub fn from_world(cfg: ResolvedConfig, world: World, flags: RunFlags) -> Self {
        let points = world.conflict_points();
        let cavs = world
            .vehicles
            .values()
            .filter(|v| v.is_cav)
            .map(|v| {
                let intent = Intent { vehicle_id: v.id, expected_lane: v.lane_id, expected_speed: v.speed };
                (v.id, CavState { v_ref: v.speed, action: MetaAction::Cruise, intent, pending: None })
            })
            .collect();
        Self {
            safety: SafetyParams::from_config(&cfg),
            cfg,
            world,
            points,
            flags,
            rules: RuleTable::default(),
            cavs,
            rows: Vec::new(),
            prompts: Vec::new(),
            collision: None,
            decisions: 0,
            fallbacks: 0,
        }
    }

    pub fn header(&self) -> TraceHeader {
        TraceHeader {
            scenario: self.cfg.kind,
            seed: self.cfg.seed,
            dt: self.cfg.dt,
            cav_ids: self.world.cav_ids.iter().copied().collect(),
            conflict_points: self.points.clone(),
            flags: self.flags.clone(),
        }
    }

    pub fn is_done(&self) -> bool {
        self.collision.is_some() || self.world.active_cavs().is_empty() || self.world.step >= self.cfg.step_budget
    }

    fn prepare(&self, store: &MemoryStore, id: VehicleId, pairs: &[crate::negotiation::ConflictPair], orders: &[PassingOrder], intents: &[Intent]) -> Result<Prep, HarnessError> {
        let (ctx, groups) = classify(&self.world, id, &self.points, self.cfg.perception_range)?;
        let ego = EgoStatus::of(&self.world, &self.world.vehicles[&id]);
        let scene = render_scene(ego, ctx.clone(), groups.clone(), intents);
        let mine = orders_for(orders, id);
        let conflicts = conflict_text(id, self.flags.negotiation.then_some(mine.as_slice()));
        let (memory_ids, memory_texts): (Vec<u64>, Vec<String>) = if self.flags.memory && self.flags.shots > 0 {
            store.retrieve(&scene.text, &conflicts, self.flags.shots).into_iter().map(|(_, r)| (r.id, render_memory(r))).unzip()
        } else {
            (Vec::new(), Vec::new())
        };
        let mask = assess_action_safety(&self.world, id, &ctx, &groups, pairs, &self.safety);
        let ego_facts = PromptEgo { id, desired_speed: self.cfg.idm.desired_speed, speed_step: self.cfg.speed_step };
        let bundle = assemble_prompt(&ego_facts, &scene, &conflicts, &memory_texts, &mask, self.cfg.prompt_budget);
        let kept = memory_ids.len() - bundle.dropped_memories;
        Ok(Prep {
            id,
            ctx,
            scene: scene.text,
            conflicts,
            mask,
            memory_ids: memory_ids[..kept].to_vec(),
            bundle,
            orders: mine.iter().map(OrderSummary::of).collect(),
            before: worst_severity(pairs, id),
        })
    }

    fn decide_all(&mut self, store: &MemoryStore, backend: &dyn ChatBackend) -> Result<BTreeMap<VehicleId, Decided>, HarnessError> {
        let active = self.world.active_cavs();
        let mut out = BTreeMap::new();
        if active.is_empty() {
            return Ok(out);
        }
        let intents: Vec<Intent> = active.iter().map(|id| self.cavs[id].intent).collect();
        let pairs = detect_conflicts(&self.world, &active, &self.points);
        let orders = if self.flags.negotiation {
            let coord = if self.flags.llm_coordinator { Some(backend) } else { None };
            coordinate(&pairs, &self.rules, coord)
        } else {
            Vec::new()
        };
        let preps = active
            .iter()
            .map(|id| self.prepare(store, *id, &pairs, &orders, &intents))
            .collect::<Result<Vec<_>, _>>()?;
        let outcomes: Vec<DecisionOutcome> = if backend.is_remote() {
            std::thread::scope(|s| {
                let handles: Vec<_> = preps.iter().map(|p| s.spawn(|| decide(&p.bundle, backend, &p.mask))).collect();
                handles.into_iter().map(|h| h.join().expect("decision thread panicked")).collect()
            })
        } else {
            preps.iter().map(|p| decide(&p.bundle, backend, &p.mask)).collect()
        };
        let t = self.world.time();
        for (prep, outcome) in preps.into_iter().zip(outcomes) {
            let step = self.cfg.speed_step;
            let v_max = self.cfg.speed_limit;
            let action = outcome.action;
            let reference = action_to_reference(&self.world, prep.id, action, &prep.ctx, step, v_max);
            let (v_ref, lane_change) = match reference {
                Ok(r) if action.side().is_some() => (r.speed, Some(r.lane)),
                Ok(r) => (r.speed, None),
                Err(_) => {
                    let v = self.world.vehicles[&prep.id].speed;
                    (crate::decision::reference_speed(MetaAction::SlowDown, v, step, v_max), None)
                }
            };
            if let Some(lane) = lane_change {
                let mut state = self.world.vehicles[&prep.id].clone();
                self.world.commit_lane(&mut state, lane);
                self.world.vehicles.insert(prep.id, state);
            }
            let intent = share_intent(&self.world, prep.id, IntentHint { reference_speed: v_ref, lane_change })?;
            let prompt = prep.bundle.render();
            self.decisions += 1;
            if outcome.fallback {
                self.fallbacks += 1;
            }
            out.insert(
                prep.id,
                Decided {
                    fallback: outcome.fallback,
                    orders: prep.orders,
                    memory_ids: prep.memory_ids,
                    prompt_sha256: Some(sha256_hex(&prompt)),
                    reply_sha256: outcome.replies.last().map(|r| sha256_hex(r)),
                    dropped: prep.bundle.dropped_memories,
                },
            );
            self.prompts.push(PromptLog {
                t,
                id: prep.id,
                prompt,
                replies: outcome.replies,
                fallback: outcome.fallback,
                error: outcome.error,
            });
            let cav = self.cavs.get_mut(&prep.id).expect("active CAV has state");
            cav.v_ref = v_ref;
            cav.action = action;
            cav.intent = intent;
            cav.pending = Some(Pending { scene: prep.scene, conflicts: prep.conflicts, action, before: prep.before });
        }
        Ok(out)
    }

    /// Records the outcome of every pending decision.
    fn augment_memories(&mut self, store: &mut MemoryStore) -> Result<(), HarnessError> {
        let active = self.world.active_cavs();
        let pairs = detect_conflicts(&self.world, &active, &self.points);
        let stamp = Stamp { episode: self.cfg.seed, step: self.world.step };
        for (id, cav) in self.cavs.iter_mut() {
            let Some(p) = cav.pending.take() else { continue };
            let after = if self.world.vehicles.contains_key(id) { worst_severity(&pairs, *id) } else { Severity::NoDanger };
            if self.flags.memory {
                augment(store, &p.scene, &p.conflicts, p.action, p.before, after, stamp)?;
            }
        }
        Ok(())
    }

    /// One simulation step: decisions (every decision period), vehicle
    /// updates, collision check, trace rows and memory feedback.
    pub fn run_step(&mut self, store: &mut MemoryStore, backend: &dyn ChatBackend) -> Result<(), HarnessError> {
        let interval = self.cfg.decision_interval_steps();
        let decided = if self.world.step % interval == 0 { self.decide_all(store, backend)? } else { BTreeMap::new() };

        let t = self.world.time();
        for v in self.world.vehicles.values() {
            let d = decided.get(&v.id).cloned().unwrap_or_default();
            self.rows.push(StepRow {
                t,
                id: v.id,
                x: v.x,
                y: v.y,
                v: v.speed,
                phi: v.heading,
                lane: v.lane_id,
                is_cav: v.is_cav,
                action: self.cavs.get(&v.id).map(|c| c.action),
                decided: decided.contains_key(&v.id),
                fallback: d.fallback,
                orders: d.orders,
                memory_ids: d.memory_ids,
                prompt_sha256: d.prompt_sha256,
                reply_sha256: d.reply_sha256,
                dropped_memories: d.dropped,
            });
        }

        let p = &self.world.params;
        let mut next = Vec::with_capacity(self.world.vehicles.len());
        for v in self.world.vehicles.values() {
            if let Some(c) = self.cavs.get(&v.id) {
                let v_ref = c.v_ref.min(self.world.curve_speed(v)).min(self.world.following_speed(v, self.world.dt));
                let a = longitudinal_control(v_ref, v.speed, &p.gains, &p.limits);
                let href = self.world.reference_heading(v, v.lane_id);
                let steer = lateral_control(href, v.heading, v.speed, v.length, &p.gains, p.limits.v_floor);
                next.push(bicycle_step(v, a, steer, self.world.dt));
            } else {
                let cmd = hdv_policy(&self.world, v.id, &p.idm, &p.mobil)?;
                let curve = longitudinal_control(self.world.curve_speed(v), v.speed, &p.gains, &p.limits);
                let mut s = v.clone();
                self.world.commit_lane(&mut s, cmd.target_lane);
                next.push(bicycle_step(&s, cmd.accel.min(curve), cmd.steer, self.world.dt));
            }
        }
        self.world.advance_clock(next)?;
        self.collision = collision_check(&self.world);

        if self.world.step % interval == 0 || self.is_done() {
            self.augment_memories(store)?;
        }
        Ok(())
    }

    pub fn result(&self, trace_path: &str) -> EpisodeResult {
        let all_arrived = self.world.cav_ids.iter().all(|id| self.world.arrivals.iter().any(|a| a.id == *id));
        EpisodeResult {
            scenario: self.cfg.kind,
            seed: self.cfg.seed,
            success: self.collision.is_none() && all_arrived,
            collision: self.collision.clone(),
            steps_run: self.world.step,
            arrivals: self.world.arrivals.clone(),
            trace_path: trace_path.to_string(),
            decisions: self.decisions,
            fallbacks: self.fallbacks,
        }
    }

    /// Steps until every CAV arrived, a collision, or the step budget.
    pub fn run_to_end(&mut self, store: &mut MemoryStore, backend: &dyn ChatBackend) -> Result<(), HarnessError> {
        while !self.is_done() {
            self.run_step(store, backend)?;
        }
        Ok(())
    }
}

/// What to run in a batch.
#[derive(Debug, Clone)]
pub struct BatchSpec {
    pub kind: ScenarioKind,
    pub base: ScenarioConfig,
    /// Seeds `0..seeds`.
    pub seeds: u64,
    pub flags: RunFlags,
    pub out_dir: PathBuf,
    /// Memory file; defaults to `memory.jsonl` in the output directory.
    pub memory_db: Option<PathBuf>,
}

impl BatchSpec {
    pub fn memory_path(&self) -> PathBuf {
        self.memory_db.clone().unwrap_or_else(|| self.out_dir.join("memory.jsonl"))
    }
}

fn write_lines<T: Serialize>(path: &Path, lines: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for line in lines {
            serde_json::to_writer(&mut w, &line).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes the prompt log and then the trace; the trace is written last so
/// that its presence marks a finished episode.
pub fn write_episode(dir: &Path, ep: &Episode, result: &EpisodeResult) -> Result<(), HarnessError> {
    write_lines(&dir.join(prompt_file_name(ep.cfg.seed)), &ep.prompts)?;
    let lines = std::iter::once(TraceLine::Header(ep.header()))
        .chain(ep.rows.iter().cloned().map(TraceLine::Step))
        .chain(std::iter::once(TraceLine::Result(result.clone())));
    write_lines(&dir.join(trace_file_name(ep.cfg.seed)), lines)
}

/// Runs seeds `0..spec.seeds`, skipping seeds whose trace is already
/// complete. With shared memory the store is saved after every episode, so
/// a resumed batch continues from the experience of the finished seeds.
pub fn run_batch(spec: &BatchSpec, backend: &dyn ChatBackend) -> Result<Vec<EpisodeResult>, HarnessError> {
    fs::create_dir_all(&spec.out_dir)?;
    let probe = spec.base.resolve(spec.kind)?;
    let mem_path = spec.memory_path();
    let initial = MemoryStore::open_or_new(&mem_path, probe.memory_dim)?;
    let mut shared = initial.clone();
    let mut results = Vec::new();
    for seed in 0..spec.seeds {
        let trace = spec.out_dir.join(trace_file_name(seed));
        if let Some(done) = completed_result(&trace) {
            log::info!("seed {seed}: already complete, skipping");
            results.push(done);
            continue;
        }
        let mut cfg = spec.base.clone();
        cfg.seed = seed;
        let mut ep = Episode::new(cfg.resolve(spec.kind)?, spec.flags.clone())?;
        let result = if spec.flags.isolated_memory {
            let mut local = initial.clone();
            ep.run_to_end(&mut local, backend)?;
            ep.result(&trace_file_name(seed))
        } else {
            ep.run_to_end(&mut shared, backend)?;
            if spec.flags.memory {
                shared.persist(&mem_path)?;
            }
            ep.result(&trace_file_name(seed))
        };
        log::info!("seed {seed}: success={} steps={}", result.success, result.steps_run);
        write_episode(&spec.out_dir, &ep, &result)?;
        results.push(result);
    }
    let summary = serde_json::to_string_pretty(&results).map_err(std::io::Error::from)?;
    fs::write(spec.out_dir.join("results.json"), summary + "\n")?;
    Ok(results)
}

pub fn success_rate(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

/// Positions of the crossing and merge points in a trace header.
pub fn conflict_areas(header: &TraceHeader) -> Vec<Vec2> {
    header
        .conflict_points
        .iter()
        .filter(|p| p.kind != ConflictKind::RearEndSharedLane)
        .map(|p| p.position)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::StubBackend;
    use crate::scenario::{place_vehicle, MERGE_LEFT};

    fn empty(kind: ScenarioKind) -> (ResolvedConfig, World) {
        let cfg = ScenarioConfig::from_toml_str("[traffic]\ncavs = 0\nhdvs = 0").unwrap().resolve(kind).unwrap();
        let world = build_resolved(&cfg).unwrap();
        (cfg, world)
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn collision_needs_overlap() {
        let (_, mut w) = empty(ScenarioKind::Merge);
        place_vehicle(&mut w, VehicleId(1), MERGE_LEFT, 20.0, 10.0, true).unwrap();
        place_vehicle(&mut w, VehicleId(2), MERGE_LEFT, 26.0, 10.0, false).unwrap();
        assert!(collision_check(&w).is_none());
        place_vehicle(&mut w, VehicleId(3), MERGE_LEFT, 23.0, 10.0, false).unwrap();
        let c = collision_check(&w).unwrap();
        assert_eq!((c.a, c.b), (VehicleId(1), VehicleId(3)));
    }

    #[test]
    fn lone_cav_arrives() {
        let (cfg, mut w) = empty(ScenarioKind::Merge);
        place_vehicle(&mut w, VehicleId(1), MERGE_LEFT, 200.0, 10.0, true).unwrap();
        let mut ep = Episode::from_world(cfg, w, RunFlags::default());
        let mut store = MemoryStore::new(32);
        ep.run_to_end(&mut store, &StubBackend { adversarial: false, seed: 0 }).unwrap();
        let r = ep.result("t.jsonl");
        assert!(r.success, "{r:?}");
        assert_eq!(r.arrivals.len(), 1);
        assert!(r.decisions > 0);
        assert_eq!(r.fallbacks, 0);
        // One memory per decision, each with an outcome.
        assert_eq!(store.len() as u64, r.decisions);
    }

    #[test]
    fn incomplete_trace_is_not_done() {
        assert_eq!(trace_file_name(3), "trace_seed_003.jsonl");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(trace_file_name(0));
        assert!(completed_result(&path).is_none());
        let (cfg, w) = empty(ScenarioKind::Highway);
        let ep = Episode::from_world(cfg, w, RunFlags::default());
        let header = serde_json::to_string(&TraceLine::Header(ep.header())).unwrap();
        std::fs::write(&path, header + "\n").unwrap();
        assert!(completed_result(&path).is_none());
        write_episode(dir.path(), &ep, &ep.result("x")).unwrap();
        assert!(completed_result(&path).is_some());
    }

    #[test]
    fn empty_batch_has_zero_rate() {
        assert_eq!(success_rate(&[]), 0.0);
    }
}
