//! Per-CAV decision: action masking, prompt assembly, reply parsing and the
//! mapping from meta-action to control references.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dynamics::{idm_acceleration, ControlGains, ControlLimits, IdmParams, MobilParams};
use crate::error::DecisionError;
use crate::geometry::{OrientedRect, Vec2};
use crate::gateway::{ChatBackend, ChatMessage, ChatRequest, Role};
use crate::negotiation::{fmt_time, severity_band, ttcp, ConflictPair, PassingOrder, Severity};
use crate::perception::{round1, LaneContext, SceneDescription, VehicleGroups};
use crate::world::{ConflictKind, LaneId, Side, VehicleId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetaAction {
    SlowDown,
    Cruise,
    SpeedUp,
    ChangeLeft,
    ChangeRight,
}

impl MetaAction {
    pub const ALL: [MetaAction; 5] =
        [MetaAction::SlowDown, MetaAction::Cruise, MetaAction::SpeedUp, MetaAction::ChangeLeft, MetaAction::ChangeRight];

    /// Fallback preference, safest first.
    pub const PREFERENCE: [MetaAction; 5] =
        [MetaAction::SlowDown, MetaAction::Cruise, MetaAction::SpeedUp, MetaAction::ChangeRight, MetaAction::ChangeLeft];

    pub fn name(self) -> &'static str {
        match self {
            MetaAction::SlowDown => "slow down",
            MetaAction::Cruise => "cruise",
            MetaAction::SpeedUp => "speed up",
            MetaAction::ChangeLeft => "change left",
            MetaAction::ChangeRight => "change right",
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            MetaAction::ChangeLeft => Some(Side::Left),
            MetaAction::ChangeRight => Some(Side::Right),
            _ => None,
        }
    }

    pub fn is_decelerating(self) -> bool {
        self == MetaAction::SlowDown
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize_words(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Action named by `s`: a canonical name or a close synonym.
pub fn parse_action_name(s: &str) -> Option<MetaAction> {
    let w = normalize_words(s);
    let action = match w.as_str() {
        "slow down" | "slowdown" | "decelerate" | "yield" | "brake" | "slow" => MetaAction::SlowDown,
        "cruise" | "idle" | "keep" | "keep speed" | "maintain" | "maintain speed" => MetaAction::Cruise,
        "speed up" | "speedup" | "accelerate" | "faster" => MetaAction::SpeedUp,
        "change left" | "change lane left" | "lane change left" | "change to left lane" | "left lane change" => MetaAction::ChangeLeft,
        "change right" | "change lane right" | "lane change right" | "change to right lane" | "right lane change" => {
            MetaAction::ChangeRight
        }
        _ => return None,
    };
    Some(action)
}

/// Action of the first `Decision:` line, if that line names one.
pub fn parse_reply(reply: &str) -> Option<MetaAction> {
    for line in reply.lines() {
        let line = line.trim().trim_start_matches(['*', '#', '>', '-', ' ']);
        let lower = line.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("decision") {
            let rest = rest.trim_start_matches(['*', ' ']);
            if let Some(value) = rest.strip_prefix(':') {
                return parse_action_name(value);
            }
        }
    }
    None
}

/// Safest action in `allowed`; slow down if nothing is allowed.
pub fn fallback_action(allowed: &[MetaAction]) -> MetaAction {
    MetaAction::PREFERENCE
        .into_iter()
        .find(|a| allowed.contains(a))
        .unwrap_or(MetaAction::SlowDown)
}

pub const SECTION_SYSTEM: &str = "## System";
pub const SECTION_SCENE: &str = "## Scene";
pub const SECTION_NEGOTIATION: &str = "## Negotiation";
pub const SECTION_MEMORIES: &str = "## Memories";
pub const SECTION_ALLOWED: &str = "## Allowed actions";
pub const SECTION_OUTPUT: &str = "## Output format";

pub const OUTPUT_CONTRACT: &str = "Reply with one line `Decision: <action>`, where <action> is one of the allowed actions written exactly as listed, followed by one line `Rationale: <one sentence>`.";
pub const NO_MEMORY_LINE: &str = "No prior experience is available.";
pub const NO_CONFLICT_LINE: &str = "No conflicts require negotiation.";
pub const NEGOTIATION_OFF_LINE: &str = "Conflict negotiation is not available.";
const REPROMPT: &str = "Your previous reply did not contain a valid `Decision: <action>` line. Answer again using the output format.";

/// Ego facts the system section states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptEgo {
    pub id: VehicleId,
    pub desired_speed: f64,
    pub speed_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub scene: String,
    pub conflict_text: String,
    /// Most similar first.
    pub memories: Vec<String>,
    pub mask_text: String,
    pub output_contract: String,
    /// Memories left out to respect the size budget.
    pub dropped_memories: usize,
}

impl PromptBundle {
    fn user_text(&self) -> String {
        let memories = if self.memories.is_empty() {
            NO_MEMORY_LINE.to_string()
        } else {
            self.memories.iter().enumerate().map(|(i, m)| format!("Experience {}: {m}", i + 1)).collect::<Vec<_>>().join("\n")
        };
        format!(
            "{SECTION_SCENE}\n{}\n{SECTION_NEGOTIATION}\n{}\n{SECTION_MEMORIES}\n{memories}\n{SECTION_ALLOWED}\n{}\n{SECTION_OUTPUT}\n{}\n",
            self.scene.trim_end(),
            self.conflict_text.trim_end(),
            self.mask_text.trim_end(),
            self.output_contract
        )
    }

    fn system_message(&self) -> String {
        format!("{SECTION_SYSTEM}\n{}", self.system_text)
    }

    /// The whole prompt as one text, sections in order.
    pub fn render(&self) -> String {
        format!("{}\n{}", self.system_message(), self.user_text())
    }

    pub fn to_request(&self) -> ChatRequest {
        ChatRequest {
            messages: vec![
                ChatMessage { role: Role::System, content: self.system_message() },
                ChatMessage { role: Role::User, content: self.user_text() },
            ],
            temperature: 0.0,
            max_reply_tokens: 128,
            timeout: 30.0,
        }
    }
}

pub fn system_text(ego: &PromptEgo) -> String {
    format!(
        "You drive connected autonomous vehicle {}. Choose one meta-action for the next decision period. \
         Avoid collisions first, follow the negotiated passing orders, then keep traffic moving. \
         Your desired speed is {} m/s and speed actions change the reference speed by {} m/s.",
        ego.id,
        round1(ego.desired_speed),
        round1(ego.speed_step)
    )
}

fn point_word(kind: ConflictKind) -> &'static str {
    match kind {
        ConflictKind::Crossing => "crossing point",
        ConflictKind::Merging => "merge point",
        ConflictKind::RearEndSharedLane => "shared lane",
    }
}

/// Negotiation section text for `ego`; `None` orders means the coordinator
/// is off.
pub fn conflict_text(ego: VehicleId, orders: Option<&[PassingOrder]>) -> String {
    let Some(orders) = orders else { return NEGOTIATION_OFF_LINE.to_string() };
    let mut lines = Vec::new();
    for o in orders.iter().filter(|o| o.pair.involves(ego)) {
        let Some(me) = o.pair.party(ego) else { continue };
        let other = o.pair.other(ego).expect("pair has two parties");
        let role = if o.yielder == ego {
            format!("- You yield to vehicle {}", other.id)
        } else {
            format!("- You pass first before vehicle {}", other.id)
        };
        let p = o.pair.point.position;
        let place = if o.pair.point.kind == ConflictKind::RearEndSharedLane {
            "on the shared lane".to_string()
        } else {
            format!("at the {} ({}, {})", point_word(o.pair.point.kind), round1(p.x), round1(p.y))
        };
        lines.push(format!(
            "{role} {place}: {}, your time to the point {}, theirs {}. Reason: {}.",
            o.pair.severity,
            fmt_time(me.ttcp),
            fmt_time(other.ttcp),
            o.reason
        ));
    }
    if lines.is_empty() {
        NO_CONFLICT_LINE.to_string()
    } else {
        lines.join("\n")
    }
}

pub fn mask_text(mask: &ActionMask) -> String {
    let mut out: Vec<String> = mask.allowed.iter().map(|a| format!("- {}", a.name())).collect();
    for r in &mask.removed {
        out.push(format!("Not allowed: {} ({}: {}).", r.action.name(), r.layer.label(), r.reason));
    }
    if mask.readmitted {
        out.push("Every action was unsafe; slowing down is kept as the last resort.".to_string());
    }
    out.join("\n")
}

/// Builds the prompt, dropping the least similar memories while the
/// rendered text exceeds `budget` bytes.
pub fn assemble_prompt(
    ego: &PromptEgo,
    scene: &SceneDescription,
    conflicts: &str,
    memories: &[String],
    mask: &ActionMask,
    budget: usize,
) -> PromptBundle {
    let mut bundle = PromptBundle {
        system_text: system_text(ego),
        scene: scene.text.clone(),
        conflict_text: conflicts.to_string(),
        memories: memories.to_vec(),
        mask_text: mask_text(mask),
        output_contract: OUTPUT_CONTRACT.to_string(),
        dropped_memories: 0,
    };
    while !bundle.memories.is_empty() && bundle.render().len() > budget {
        bundle.memories.pop();
        bundle.dropped_memories += 1;
    }
    bundle
}

/// Result of one decision call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub action: MetaAction,
    /// The backend's choice was missing, unparseable or masked.
    pub fallback: bool,
    pub replies: Vec<String>,
    pub error: Option<String>,
}

/// Asks the backend, re-prompting once on an unparseable reply. The result
/// is always in `mask.allowed`.
pub fn decide(bundle: &PromptBundle, backend: &dyn ChatBackend, mask: &ActionMask) -> DecisionOutcome {
    let mut request = bundle.to_request();
    let mut replies = Vec::new();
    let fallback = |replies: Vec<String>, error: Option<String>| DecisionOutcome {
        action: fallback_action(&mask.allowed),
        fallback: true,
        replies,
        error,
    };
    for attempt in 0..2 {
        let reply = match backend.chat(&request) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("decision backend failed: {e}");
                return fallback(replies, Some(e.to_string()));
            }
        };
        let parsed = parse_reply(&reply);
        replies.push(reply.clone());
        match parsed {
            Some(a) if mask.allows(a) => return DecisionOutcome { action: a, fallback: false, replies, error: None },
            Some(a) => return fallback(replies, Some(format!("`{}` is masked", a.name()))),
            None if attempt == 0 => {
                request.messages.push(ChatMessage {
                    role: Role::User,
                    content: format!("Previous reply:\n{reply}\n{REPROMPT}"),
                });
            }
            None => {}
        }
    }
    fallback(replies, Some("no parseable decision".to_string()))
}

/// Reference speed and target lane for an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub speed: f64,
    pub lane: LaneId,
    pub heading: f64,
}

pub fn reference_speed(action: MetaAction, v: f64, step: f64, v_max: f64) -> f64 {
    match action {
        MetaAction::SpeedUp => (v + step).min(v_max),
        MetaAction::SlowDown => (v - step).max(0.0),
        _ => v.min(v_max),
    }
    .clamp(0.0, v_max)
}

pub fn action_to_reference(
    world: &World,
    ego: VehicleId,
    action: MetaAction,
    ctx: &LaneContext,
    step: f64,
    v_max: f64,
) -> Result<Reference, DecisionError> {
    let v = world.vehicle(ego).ok_or(DecisionError::NoSuchLane(ego))?;
    let lane = match action.side() {
        Some(Side::Left) => ctx.left.ok_or(DecisionError::NoSuchLane(ego))?,
        Some(Side::Right) => ctx.right.ok_or(DecisionError::NoSuchLane(ego))?,
        None => v.lane_id,
    };
    Ok(Reference {
        speed: reference_speed(action, v.speed, step, v_max),
        lane,
        heading: world.reference_heading(v, lane),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskLayer {
    SameLane,
    AdjacentLane,
    ConflictLane,
}

impl MaskLayer {
    pub fn label(self) -> &'static str {
        match self {
            MaskLayer::SameLane => "same lane",
            MaskLayer::AdjacentLane => "adjacent lane",
            MaskLayer::ConflictLane => "conflict lane",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub action: MetaAction,
    pub layer: MaskLayer,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMask {
    /// In `MetaAction::ALL` order; never empty.
    pub allowed: Vec<MetaAction>,
    pub removed: Vec<Removal>,
    /// Everything was removed and slow down was put back.
    pub readmitted: bool,
}

impl ActionMask {
    pub fn all() -> Self {
        Self { allowed: MetaAction::ALL.to_vec(), removed: Vec::new(), readmitted: false }
    }

    pub fn allows(&self, a: MetaAction) -> bool {
        self.allowed.contains(&a)
    }

    fn remove(&mut self, action: MetaAction, layer: MaskLayer, reason: String) {
        if let Some(i) = self.allowed.iter().position(|a| *a == action) {
            self.allowed.remove(i);
            self.removed.push(Removal { action, layer, reason });
        }
    }
}

/// Parameters of the safety assessment.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyParams {
    pub horizon: f64,
    /// Integration step of the forward simulation.
    pub dt: f64,
    pub speed_step: f64,
    pub speed_limit: f64,
    pub idm: IdmParams,
    pub mobil: MobilParams,
    pub gains: ControlGains,
    pub limits: ControlLimits,
}

impl SafetyParams {
    pub fn from_config(cfg: &crate::config::ResolvedConfig) -> Self {
        Self {
            horizon: cfg.horizon,
            dt: cfg.dt,
            speed_step: cfg.speed_step,
            speed_limit: cfg.speed_limit,
            idm: cfg.idm.clone(),
            mobil: cfg.mobil.clone(),
            gains: cfg.gains,
            limits: cfg.limits,
        }
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }
}

/// Speed and travelled distance at each step while tracking `v_ref` with
/// the proportional speed controller.
pub fn forward_profile(v0: f64, v_ref: f64, p: &SafetyParams) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(p.steps() + 1);
    let (mut v, mut s) = (v0, 0.0);
    out.push((v, s));
    for _ in 0..p.steps() {
        let a = p.limits.clamp_accel(p.gains.kp * (v_ref - v));
        s += v * p.dt;
        v = (v + a * p.dt).max(0.0);
        out.push((v, s));
    }
    out
}

/// Time to cover `d` meters: the forward profile, then constant speed.
pub fn arrival_time(d: f64, v0: f64, v_ref: f64, p: &SafetyParams) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let profile = forward_profile(v0, v_ref, p);
    for k in 1..profile.len() {
        let (_, s0) = profile[k - 1];
        let (_, s1) = profile[k];
        if s1 >= d {
            let frac = if s1 > s0 { (d - s0) / (s1 - s0) } else { 1.0 };
            return (k as f64 - 1.0 + frac) * p.dt;
        }
    }
    let (v_end, s_end) = profile[profile.len() - 1];
    (profile.len() - 1) as f64 * p.dt + ttcp(d - s_end, v_end)
}

/// Centre distance within which footprints are predicted.
const FOOTPRINT_RANGE: f64 = 40.0;
/// Added to footprint length and width in the prediction.
const BODY_MARGIN: f64 = 0.2;

/// Three-layer safety filter over the five meta-actions.
pub fn assess_action_safety(
    world: &World,
    ego_id: VehicleId,
    ctx: &LaneContext,
    groups: &VehicleGroups,
    pairs: &[ConflictPair],
    p: &SafetyParams,
) -> ActionMask {
    let mut mask = ActionMask::all();
    let Some(ego) = world.vehicle(ego_id) else {
        return mask;
    };
    let v = ego.speed;
    let s0 = p.idm.min_gap;
    let b_safe = p.mobil.safe_decel;

    // Same lane: leader kept at constant speed, ego follows the action's
    // reference; the rear vehicle must not be forced to brake hard.
    for action in MetaAction::ALL {
        let v_ref = reference_speed(action, v, p.speed_step, p.speed_limit);
        let profile = forward_profile(v, v_ref, p);
        if let Some(l) = &groups.leading {
            let min_gap = profile
                .iter()
                .enumerate()
                .map(|(k, (_, s))| l.gap + l.speed * k as f64 * p.dt - s)
                .fold(f64::INFINITY, f64::min);
            if min_gap < s0 {
                mask.remove(action, MaskLayer::SameLane, format!("gap to leading vehicle {} would fall to {} m", l.id, round1(min_gap)));
                continue;
            }
        }
        if let (Some(r), true) = (&groups.rearing, action.is_decelerating()) {
            let gap0 = -r.gap;
            let harsh = profile.iter().enumerate().any(|(k, (ve, s))| {
                let gap = gap0 + s - r.speed * k as f64 * p.dt;
                match idm_acceleration(gap, r.speed, r.speed - ve, &p.idm, f64::INFINITY) {
                    Ok(a) => a < -b_safe,
                    Err(_) => true,
                }
            });
            if harsh {
                mask.remove(action, MaskLayer::SameLane, format!("rearing vehicle {} would have to brake hard", r.id));
            }
        }
    }

    // Adjacent lanes.
    for (action, lane) in [(MetaAction::ChangeLeft, ctx.left), (MetaAction::ChangeRight, ctx.right)] {
        let Some(lane) = lane else {
            mask.remove(action, MaskLayer::AdjacentLane, "no lane on that side".to_string());
            continue;
        };
        let (leader, follower) = world.neighbors_in_lane(ego, lane);
        if let Some(f) = follower {
            let ok = idm_acceleration(f.gap, f.speed, f.speed - v, &p.idm, f64::INFINITY).is_ok_and(|a| a >= -b_safe);
            if !ok {
                mask.remove(action, MaskLayer::AdjacentLane, format!("new follower {} would brake beyond the safe limit", f.id));
                continue;
            }
        }
        if let Some(l) = leader {
            let ok = l.gap >= s0 && idm_acceleration(l.gap, v, v - l.speed, &p.idm, f64::INFINITY).is_ok_and(|a| a >= -b_safe);
            if !ok {
                mask.remove(action, MaskLayer::AdjacentLane, format!("gap to new leader {} is too small", l.id));
            }
        }
    }

    // Conflict lanes: predicted arrival-time difference at each crossing or
    // merge point, the other vehicle keeping its speed. While neither has
    // arrived by the horizon this equals the difference of the horizon-end
    // times to the point.
    for action in MetaAction::ALL {
        if !mask.allows(action) {
            continue;
        }
        let v_ref = reference_speed(action, v, p.speed_step, p.speed_limit);
        let mut worst: Option<(Severity, VehicleId)> = None;
        for pair in pairs.iter().filter(|q| q.point.kind != ConflictKind::RearEndSharedLane) {
            let (Some(me), Some(other)) = (pair.party(ego_id), pair.other(ego_id)) else { continue };
            let te = arrival_time(me.distance, v, v_ref, p);
            let to = ttcp(other.distance, other.speed);
            let sev = if te.is_finite() && to.is_finite() { severity_band((te - to).abs()) } else { Severity::NoDanger };
            if worst.is_none_or(|(w, _)| sev.rank() > w.rank()) {
                worst = Some((sev, other.id));
            }
        }
        if let Some((sev, other)) = worst {
            if sev.is_hazard() {
                mask.remove(action, MaskLayer::ConflictLane, format!("{sev} with vehicle {other}"));
            }
        }
    }

    // Conflict lanes, bodies: centerlines can pass close without meeting,
    // and a stopped vehicle inside the box has no arrival time. Predict
    // footprints along the routes (others at constant speed) and drop
    // keep-lane actions that run the ego into a vehicle ahead of it.
    let (path, s_ego) = world.route_path(ego);
    let others: Vec<_> = world
        .vehicles
        .values()
        .filter(|o| o.id != ego_id && o.lane_id != ego.lane_id && o.position().distance(ego.position()) < FOOTPRINT_RANGE)
        .map(|o| {
            let (p, s) = world.route_path(o);
            (o, p, s)
        })
        .collect();
    let width = world.params.vehicle_width + BODY_MARGIN;
    for action in [MetaAction::SlowDown, MetaAction::Cruise, MetaAction::SpeedUp] {
        if !mask.allows(action) || others.is_empty() {
            continue;
        }
        let v_ref = reference_speed(action, v, p.speed_step, p.speed_limit);
        let profile = forward_profile(v, v_ref, p);
        let hit = profile.iter().enumerate().skip(1).find_map(|(k, (_, ds))| {
            let t = k as f64 * p.dt;
            let se = s_ego + ds;
            let me = OrientedRect { center: path.point_at(se), heading: path.heading_at(se), length: ego.length + BODY_MARGIN, width };
            let forward = Vec2::from_angle(me.heading);
            others.iter().find_map(|(o, op, so)| {
                let s = so + o.speed * t;
                let r = OrientedRect { center: op.point_at(s), heading: op.heading_at(s), length: o.length + BODY_MARGIN, width };
                (me.overlaps(&r) && (r.center - me.center).dot(forward) > 0.0).then_some(o.id)
            })
        });
        if let Some(id) = hit {
            mask.remove(action, MaskLayer::ConflictLane, format!("predicted to run into vehicle {id}"));
        }
    }

    if mask.allowed.is_empty() {
        mask.removed.retain(|r| r.action != MetaAction::SlowDown);
        mask.allowed.push(MetaAction::SlowDown);
        mask.readmitted = true;
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::GatewayError;
    use crate::perception::{render_scene, EgoStatus};
    use proptest::prelude::*;
    use std::sync::Mutex;

    struct Script(Mutex<Vec<Result<String, GatewayError>>>);

    impl Script {
        fn new(replies: Vec<Result<&str, GatewayError>>) -> Self {
            Self(Mutex::new(replies.into_iter().rev().map(|r| r.map(str::to_string)).collect()))
        }
    }

    impl ChatBackend for Script {
        fn chat(&self, _: &ChatRequest) -> Result<String, GatewayError> {
            self.0.lock().unwrap().pop().expect("script exhausted")
        }
    }

    fn scene() -> SceneDescription {
        let ego = EgoStatus { id: VehicleId(1), lane: LaneId(0), speed: 10.0, remaining: 80.0, movement: None };
        let ctx = LaneContext { ego_lane: LaneId(0), left: None, right: None, conflict_lanes: Vec::new() };
        render_scene(ego, ctx, VehicleGroups::default(), &[])
    }

    fn bundle() -> PromptBundle {
        let scene = scene();
        let ego = PromptEgo { id: VehicleId(1), desired_speed: 12.0, speed_step: 2.0 };
        assemble_prompt(&ego, &scene, NO_CONFLICT_LINE, &[], &ActionMask::all(), 8000)
    }

    fn mask_of(allowed: &[MetaAction]) -> ActionMask {
        ActionMask { allowed: allowed.to_vec(), removed: Vec::new(), readmitted: false }
    }

    fn params() -> SafetyParams {
        SafetyParams {
            horizon: 3.0,
            dt: 0.1,
            speed_step: 2.0,
            speed_limit: 15.0,
            idm: IdmParams::default(),
            mobil: MobilParams::default(),
            gains: ControlGains { kp: 1.0, kh: 2.0 },
            limits: ControlLimits::default(),
        }
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_reply("Decision: slow down\nRationale: x"), Some(MetaAction::SlowDown));
        assert_eq!(parse_reply("**Decision:** Speed-Up"), Some(MetaAction::SpeedUp));
        assert_eq!(parse_reply("thinking...\n- decision: change lane left"), Some(MetaAction::ChangeLeft));
        assert_eq!(parse_reply("Decision: fly"), None);
        assert_eq!(parse_reply("I would cruise"), None);
    }

    #[test]
    fn fallback_prefers_safest() {
        assert_eq!(fallback_action(&[MetaAction::SpeedUp, MetaAction::Cruise]), MetaAction::Cruise);
        assert_eq!(fallback_action(&[MetaAction::ChangeLeft, MetaAction::ChangeRight]), MetaAction::ChangeRight);
        assert_eq!(fallback_action(&[]), MetaAction::SlowDown);
    }

    #[test]
    fn decide_reprompts_once() {
        let b = Script::new(vec![Ok("no idea"), Ok("Decision: cruise")]);
        let out = decide(&bundle(), &b, &ActionMask::all());
        assert_eq!((out.action, out.fallback, out.replies.len()), (MetaAction::Cruise, false, 2));

        let b = Script::new(vec![Ok("no idea"), Ok("still none")]);
        let out = decide(&bundle(), &b, &mask_of(&[MetaAction::SpeedUp]));
        assert_eq!((out.action, out.fallback), (MetaAction::SpeedUp, true));
    }

    #[test]
    fn decide_never_returns_masked_action() {
        let b = Script::new(vec![Ok("Decision: speed up")]);
        let out = decide(&bundle(), &b, &mask_of(&[MetaAction::SlowDown, MetaAction::Cruise]));
        assert_eq!((out.action, out.fallback), (MetaAction::SlowDown, true));

        let b = Script::new(vec![Err(GatewayError::Protocol("bad".into()))]);
        let out = decide(&bundle(), &b, &mask_of(&[MetaAction::Cruise]));
        assert_eq!(out.action, MetaAction::Cruise);
        assert!(out.error.is_some());
    }

    #[test]
    fn prompt_sections_in_order() {
        let text = bundle().render();
        let at = |h: &str| text.find(h).unwrap();
        assert!(at(SECTION_SYSTEM) < at(SECTION_SCENE));
        assert!(at(SECTION_SCENE) < at(SECTION_NEGOTIATION));
        assert!(at(SECTION_NEGOTIATION) < at(SECTION_MEMORIES));
        assert!(at(SECTION_MEMORIES) < at(SECTION_ALLOWED));
        assert!(at(SECTION_ALLOWED) < at(SECTION_OUTPUT));
        assert!(text.contains(NO_MEMORY_LINE));
    }

    #[test]
    fn budget_drops_trailing_memories() {
        let scene = scene();
        let ego = PromptEgo { id: VehicleId(1), desired_speed: 12.0, speed_step: 2.0 };
        let memories = vec!["a".repeat(300), "b".repeat(300), "c".repeat(300)];
        let full = assemble_prompt(&ego, &scene, "", &memories, &ActionMask::all(), usize::MAX);
        let budget = full.render().len() - 200;
        let cut = assemble_prompt(&ego, &scene, "", &memories, &ActionMask::all(), budget);
        assert_eq!(cut.memories, memories[..2].to_vec());
        assert_eq!(cut.dropped_memories, 1);
        let none = assemble_prompt(&ego, &scene, "", &memories, &ActionMask::all(), 10);
        assert_eq!(none.dropped_memories, 3);
    }

    #[test]
    fn arrival_time_matches_constant_speed() {
        let p = params();
        // Already at the reference: d / v exactly.
        assert!((arrival_time(25.0, 10.0, 10.0, &p) - 2.5).abs() < 1e-12);
        assert!((arrival_time(100.0, 10.0, 10.0, &p) - 10.0).abs() < 1e-9);
        assert_eq!(arrival_time(0.0, 10.0, 10.0, &p), 0.0);
        assert!(arrival_time(10.0, 0.0, 0.0, &p).is_infinite());
    }

    proptest! {
        #[test]
        fn reference_speed_in_range(v in 0.0..40.0f64, step in 0.0..5.0f64, vmax in 1.0..30.0f64, i in 0usize..5) {
            let r = reference_speed(MetaAction::ALL[i], v, step, vmax);
            prop_assert!((0.0..=vmax).contains(&r));
        }

        #[test]
        fn profile_moves_toward_reference(v0 in 0.0..20.0f64, v_ref in 0.0..20.0f64) {
            let p = params();
            let prof = forward_profile(v0, v_ref, &p);
            prop_assert_eq!(prof.len(), 31);
            for w in prof.windows(2) {
                prop_assert!(w[1].1 >= w[0].1);
                prop_assert!((w[1].0 - v_ref).abs() <= (w[0].0 - v_ref).abs() + 1e-12);
            }
        }

        #[test]
        fn decide_output_in_mask(bits in 1u8..32, reply in 0usize..6) {
            let allowed: Vec<MetaAction> = MetaAction::ALL.iter().enumerate().filter(|(i, _)| bits & (1 << i) != 0).map(|(_, a)| *a).collect();
            let text = MetaAction::ALL.get(reply).map_or("gibberish".to_string(), |a| format!("Decision: {}", a.name()));
            let b = Script::new(vec![Ok(text.as_str()), Ok(text.as_str())]);
            let out = decide(&bundle(), &b, &mask_of(&allowed));
            prop_assert!(allowed.contains(&out.action));
        }
    }
}
