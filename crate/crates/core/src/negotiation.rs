//! Conflict coordinator: pairs of vehicles heading for a shared point,
//! graded by the difference of their times to reach it, with an advisory
//! passing order per pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::NegotiationError;
use crate::gateway::{ChatBackend, ChatRequest};
use crate::perception::{route_movement, shared_point};
use crate::world::{ConflictKind, ConflictPoint, LaneKind, Movement, VehicleId, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    SeriousDanger,
    GeneralDanger,
    SlightDanger,
    NoDanger,
}

impl Severity {
    /// 3 for serious down to 0 for no danger.
    pub fn rank(self) -> u8 {
        match self {
            Severity::SeriousDanger => 3,
            Severity::GeneralDanger => 2,
            Severity::SlightDanger => 1,
            Severity::NoDanger => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Severity::SeriousDanger => "serious danger",
            Severity::GeneralDanger => "general danger",
            Severity::SlightDanger => "slight danger",
            Severity::NoDanger => "no danger",
        }
    }

    /// Serious or general.
    pub fn is_hazard(self) -> bool {
        self.rank() >= 2
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Time to reach a point `d` meters ahead at speed `v`; infinite when stopped.
pub fn ttcp(d: f64, v: f64) -> f64 {
    if v > 0.0 {
        d / v
    } else {
        f64::INFINITY
    }
}

/// Severity band of an arrival-time difference. Exactly 8 s is no danger.
pub fn severity_band(delta: f64) -> Severity {
    if delta <= 2.0 {
        Severity::SeriousDanger
    } else if delta <= 5.0 {
        Severity::GeneralDanger
    } else if delta < 8.0 {
        Severity::SlightDanger
    } else {
        Severity::NoDanger
    }
}

pub fn ttcp_severity(d_i: f64, v_i: f64, d_j: f64, v_j: f64) -> Result<(f64, Severity), NegotiationError> {
    for (name, x) in [("d_i", d_i), ("v_i", v_i), ("d_j", d_j), ("v_j", v_j)] {
        if !(x >= 0.0) {
            return Err(NegotiationError::NegativeInput(name));
        }
    }
    let (ti, tj) = (ttcp(d_i, v_i), ttcp(d_j, v_j));
    if ti.is_infinite() || tj.is_infinite() {
        return Ok((f64::INFINITY, Severity::NoDanger));
    }
    let delta = (ti - tj).abs();
    Ok((delta, severity_band(delta)))
}

/// One side of a conflict pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictParty {
    pub id: VehicleId,
    pub is_cav: bool,
    pub movement: Option<Movement>,
    pub on_ramp: bool,
    /// Remaining path distance to the point, clamped at zero (m).
    pub distance: f64,
    pub speed: f64,
    pub ttcp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictPair {
    /// The lower vehicle id.
    pub vehicle_i: ConflictParty,
    pub vehicle_j: ConflictParty,
    pub point: ConflictPoint,
    pub delta_ttcp: f64,
    pub severity: Severity,
    /// For shared-lane pairs, the vehicle behind.
    pub follower: Option<VehicleId>,
}

impl ConflictPair {
    pub fn involves(&self, id: VehicleId) -> bool {
        self.vehicle_i.id == id || self.vehicle_j.id == id
    }

    pub fn party(&self, id: VehicleId) -> Option<&ConflictParty> {
        [&self.vehicle_i, &self.vehicle_j].into_iter().find(|p| p.id == id)
    }

    pub fn other(&self, id: VehicleId) -> Option<&ConflictParty> {
        if self.vehicle_i.id == id {
            Some(&self.vehicle_j)
        } else if self.vehicle_j.id == id {
            Some(&self.vehicle_i)
        } else {
            None
        }
    }
}

fn party(world: &World, id: VehicleId, distance: f64, speed: f64) -> ConflictParty {
    let v = &world.vehicles[&id];
    ConflictParty {
        id,
        is_cav: v.is_cav,
        movement: route_movement(world, v),
        on_ramp: world.lane(v.lane_id).kind == LaneKind::MergeRamp,
        distance,
        speed,
        ttcp: ttcp(distance, speed),
    }
}

fn point_key(p: &ConflictPoint) -> (ConflictKind, crate::world::LaneId, crate::world::LaneId) {
    (p.kind, p.lane_a, p.lane_b)
}

/// Every pair of vehicles (at least one a CAV) whose remaining routes reach
/// a common crossing or merge point from different lanes, plus every
/// follower/leader pair on a shared lane. A vehicle counts as past a point
/// once its center is more than one vehicle length beyond it.
pub fn detect_conflicts(world: &World, cav_ids: &[VehicleId], points: &[ConflictPoint]) -> Vec<ConflictPair> {
    let is_cav = |id: &VehicleId| cav_ids.contains(id);
    let vehicles: Vec<_> = world.vehicles.values().collect();
    let mut out = Vec::new();
    for (n, a) in vehicles.iter().enumerate() {
        for b in &vehicles[n + 1..] {
            if !is_cav(&a.id) && !is_cav(&b.id) {
                continue;
            }
            for p in points {
                let Some((da, db)) = shared_point(world, a, b, p) else { continue };
                if da < -a.length || db < -b.length {
                    continue;
                }
                let (da, db) = (da.max(0.0), db.max(0.0));
                let (delta, severity) =
                    ttcp_severity(da, a.speed, db, b.speed).expect("clamped distances and speeds are non-negative");
                out.push(ConflictPair {
                    vehicle_i: party(world, a.id, da, a.speed),
                    vehicle_j: party(world, b.id, db, b.speed),
                    point: *p,
                    delta_ttcp: delta,
                    severity,
                    follower: None,
                });
            }
        }
    }
    // Shared lane: the follower reaches the leader's tail at the closing
    // speed, measured in the leader's frame where the leader sits at the
    // point now.
    for f in &vehicles {
        let Some(leader) = world.leader_of(f) else { continue };
        if !is_cav(&f.id) && !is_cav(&leader.id) {
            continue;
        }
        let l = &world.vehicles[&leader.id];
        let Some(marker) = points
            .iter()
            .find(|p| p.kind == ConflictKind::RearEndSharedLane && p.lane_a == l.lane_id)
        else {
            continue;
        };
        let gap = leader.gap.max(0.0);
        let closing = (f.speed - l.speed).max(0.0);
        let t = ttcp(gap, closing);
        let severity = severity_band(t);
        let mut fp = party(world, f.id, gap, closing);
        fp.ttcp = t;
        let mut lp = party(world, l.id, 0.0, l.speed);
        lp.ttcp = 0.0;
        let (vehicle_i, vehicle_j) = if f.id < l.id { (fp, lp) } else { (lp, fp) };
        out.push(ConflictPair { vehicle_i, vehicle_j, point: *marker, delta_ttcp: t, severity, follower: Some(f.id) });
    }
    out.sort_by(|x, y| {
        (x.vehicle_i.id, x.vehicle_j.id, point_key(&x.point))
            .cmp(&(y.vehicle_i.id, y.vehicle_j.id, point_key(&y.point)))
            .then(x.point.position.x.total_cmp(&y.point.position.x))
            .then(x.point.position.y.total_cmp(&y.point.position.y))
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rule {
    /// R1: a turning vehicle yields to one going straight.
    TurnYieldsToStraight,
    /// R2: the merging ramp yields to the mainline.
    RampYieldsToMainline,
    /// R3: on a shared lane, the follower yields.
    FollowerYields,
    /// R4: the later arrival yields.
    LaterArrivalYields,
    /// R5: the lower id passes first.
    LowerIdFirst,
}

impl Rule {
    pub fn code(self) -> &'static str {
        match self {
            Rule::TurnYieldsToStraight => "R1",
            Rule::RampYieldsToMainline => "R2",
            Rule::FollowerYields => "R3",
            Rule::LaterArrivalYields => "R4",
            Rule::LowerIdFirst => "R5",
        }
    }

    /// Traffic-law rules a backend may not overturn.
    pub fn is_hard(self) -> bool {
        matches!(self, Rule::TurnYieldsToStraight | Rule::RampYieldsToMainline | Rule::FollowerYields)
    }

    /// `(first, yielder)` if the rule decides the pair.
    fn apply(self, pair: &ConflictPair) -> Option<(VehicleId, VehicleId)> {
        let (a, b) = (&pair.vehicle_i, &pair.vehicle_j);
        let shared_lane = pair.point.kind == ConflictKind::RearEndSharedLane;
        match self {
            Rule::TurnYieldsToStraight if !shared_lane => match (a.movement, b.movement) {
                (Some(ma), Some(mb)) if ma.is_turn() && !mb.is_turn() => Some((b.id, a.id)),
                (Some(ma), Some(mb)) if !ma.is_turn() && mb.is_turn() => Some((a.id, b.id)),
                _ => None,
            },
            Rule::RampYieldsToMainline if !shared_lane => match (a.on_ramp, b.on_ramp) {
                (true, false) => Some((b.id, a.id)),
                (false, true) => Some((a.id, b.id)),
                _ => None,
            },
            Rule::FollowerYields => {
                let f = pair.follower?;
                let leader = if f == a.id { b.id } else { a.id };
                Some((leader, f))
            }
            Rule::LaterArrivalYields => {
                if a.ttcp > b.ttcp {
                    Some((b.id, a.id))
                } else if b.ttcp > a.ttcp {
                    Some((a.id, b.id))
                } else {
                    None
                }
            }
            Rule::LowerIdFirst => Some((a.id, b.id)),
            _ => None,
        }
    }

    fn reason(self, first: VehicleId, yielder: VehicleId) -> String {
        let why = match self {
            Rule::TurnYieldsToStraight => "turning vehicles yield to vehicles going straight",
            Rule::RampYieldsToMainline => "the merging ramp yields to the mainline",
            Rule::FollowerYields => "the following vehicle yields on a shared lane",
            Rule::LaterArrivalYields => "the later arrival yields",
            Rule::LowerIdFirst => "equal arrival times, the lower id passes first",
        };
        format!("{}: {why}; vehicle {first} passes before vehicle {yielder}", self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    pub rules: Vec<Rule>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self {
            rules: vec![
                Rule::TurnYieldsToStraight,
                Rule::RampYieldsToMainline,
                Rule::FollowerYields,
                Rule::LaterArrivalYields,
                Rule::LowerIdFirst,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassingOrder {
    pub pair: ConflictPair,
    pub first: VehicleId,
    pub yielder: VehicleId,
    pub rule: Rule,
    /// True when the backend swapped a soft-rule verdict.
    pub overridden: bool,
    pub reason: String,
}

/// Header the stub backend uses to recognize a coordinator request.
pub const COORDINATOR_HEADER: &str = "## Coordinator";

/// Rule verdicts for every pair in danger. With a backend, soft-rule (R4/R5)
/// verdicts are sent for confirmation in one request; a reply line
/// `Pair N: swap` reverses order N. Backend errors leave the verdicts as
/// they are.
pub fn coordinate(pairs: &[ConflictPair], table: &RuleTable, backend: Option<&dyn ChatBackend>) -> Vec<PassingOrder> {
    let mut orders: Vec<PassingOrder> = pairs
        .iter()
        .filter(|p| p.severity != Severity::NoDanger)
        .filter_map(|p| {
            table.rules.iter().find_map(|r| {
                r.apply(p).map(|(first, yielder)| PassingOrder {
                    pair: p.clone(),
                    first,
                    yielder,
                    rule: *r,
                    overridden: false,
                    reason: r.reason(first, yielder),
                })
            })
        })
        .collect();
    let Some(backend) = backend else { return orders };
    let soft: Vec<usize> = (0..orders.len()).filter(|i| !orders[*i].rule.is_hard()).collect();
    if soft.is_empty() {
        return orders;
    }
    let mut text = format!("{COORDINATOR_HEADER}\nConfirm or swap each advisory passing order. Reply with one line per pair: `Pair N: keep` or `Pair N: swap`.\n");
    for (n, i) in soft.iter().enumerate() {
        let o = &orders[*i];
        text.push_str(&format!(
            "Pair {n}: vehicle {} (time to conflict point {}) and vehicle {} (time to conflict point {}), {}; proposed: {}\n",
            o.pair.vehicle_i.id,
            fmt_time(o.pair.vehicle_i.ttcp),
            o.pair.vehicle_j.id,
            fmt_time(o.pair.vehicle_j.ttcp),
            o.pair.severity,
            o.reason
        ));
    }
    let request = ChatRequest::single("You coordinate vehicles at traffic conflicts.", &text);
    let Ok(reply) = backend.chat(&request) else {
        log::warn!("coordinator backend failed; keeping rule verdicts");
        return orders;
    };
    for n in parse_swaps(&reply) {
        if let Some(&i) = soft.get(n) {
            let o = &mut orders[i];
            std::mem::swap(&mut o.first, &mut o.yielder);
            o.overridden = true;
            o.reason = format!("{} (swapped by coordinator: vehicle {} passes first)", o.reason, o.first);
        }
    }
    orders
}

fn parse_swaps(reply: &str) -> Vec<usize> {
    reply
        .lines()
        .filter_map(|line| {
            let line = line.trim().to_ascii_lowercase();
            let rest = line.strip_prefix("pair ")?;
            let (n, verdict) = rest.split_once(':')?;
            (verdict.trim() == "swap").then(|| n.trim().parse().ok()).flatten()
        })
        .collect()
}

pub fn fmt_time(t: f64) -> String {
    if t.is_finite() {
        format!("{} s", crate::perception::round1(t))
    } else {
        "never (stopped)".to_string()
    }
}

/// Orders involving `ego`, most severe first, then by the ego's distance to
/// the point.
pub fn orders_for(orders: &[PassingOrder], ego: VehicleId) -> Vec<PassingOrder> {
    let mut mine: Vec<PassingOrder> = orders.iter().filter(|o| o.pair.involves(ego)).cloned().collect();
    mine.sort_by(|a, b| {
        b.pair
            .severity
            .rank()
            .cmp(&a.pair.severity.rank())
            .then(a.pair.party(ego).map(|p| p.distance).unwrap_or(0.0).total_cmp(&b.pair.party(ego).map(|p| p.distance).unwrap_or(0.0)))
    });
    mine
}

/// Worst severity among `pairs` involving `ego`.
pub fn worst_severity(pairs: &[ConflictPair], ego: VehicleId) -> Severity {
    pairs
        .iter()
        .filter(|p| p.involves(ego))
        .map(|p| p.severity)
        .max_by_key(|s| s.rank())
        .unwrap_or(Severity::NoDanger)
}
