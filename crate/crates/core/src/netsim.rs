//! Slot-based simulator of a device-to-device network.
//!
//! Nodes move by random direction inside a rectangle and can exchange
//! messages while within radio range. Each slot the world moves every active
//! node, recomputes contacts on a spatial grid and reports range transitions
//! as MEET/LEAVE events. Gossip, Δ measurement and contact statistics are
//! layered on top.
//!
//! Every random choice comes from a dedicated ChaCha stream derived from the
//! seed (mobility, churn, forwarding, adversary placement), so runs that
//! differ only in, say, the adversary fraction still see identical movement.

use std::fmt::Write as _;
use std::io::{self, Write};

use fixedbitset::FixedBitSet;
use petgraph::unionfind::UnionFind;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryConfig, Strategy};
use crate::crypto::{generate_keypair, Digest, KeyPair};
use crate::geo::{Area, Point};
use crate::Slot;

pub type NodeId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum NetsimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    DomainError(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Radio {
    Bluetooth,
    WifiDirect,
    LteDirect,
    Custom(f64),
}

impl Radio {
    pub fn radius(&self) -> f64 {
        match self {
            Radio::Bluetooth => 20.0,
            Radio::WifiDirect => 50.0,
            Radio::LteDirect => 100.0,
            Radio::Custom(r) => *r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub area: Area,
    pub population: usize,
    pub radio: Radio,
    /// Meters per slot.
    pub speed: f64,
    pub duration: Slot,
    pub seed: u64,
    pub forwarding_probability: f64,
    /// Per-slot probability of drawing a fresh heading.
    pub turn_probability: f64,
    /// Expected departures (and arrivals) per slot.
    pub churn_rate: f64,
    pub adversary: AdversaryConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            area: Area::default(),
            population: 1000,
            radio: Radio::WifiDirect,
            speed: 1.0,
            duration: 100,
            seed: 1,
            forwarding_probability: 1.0,
            turn_probability: 0.05,
            churn_rate: 0.0,
            adversary: AdversaryConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |m: String| Err(NetsimError::InvalidConfig(m));
        let Area { width, height } = self.area;
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return bad(format!("area {width}x{height} must be positive"));
        }
        let r = self.radio.radius();
        if !(r > 0.0 && r <= width.min(height)) {
            return bad(format!("radio radius {r} must lie in (0, {}]", width.min(height)));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return bad(format!("speed {} must be non-negative", self.speed));
        }
        if !(0.0..=1.0).contains(&self.forwarding_probability) {
            return bad("forwarding_probability must lie in [0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.turn_probability) {
            return bad("turn_probability must lie in [0, 1]".into());
        }
        if !(self.churn_rate >= 0.0 && self.churn_rate.is_finite()) {
            return bad("churn_rate must be non-negative".into());
        }
        if self.population > NodeId::MAX as usize {
            return bad("population too large".into());
        }
        self.adversary
            .validate(self.population, 0)
            .map_err(|e| NetsimError::InvalidConfig(e.to_string()))
    }
}

/// Seed of an independent random stream.
pub fn stream_seed(seed: u64, label: &str) -> u64 {
    let mut bytes = label.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    Digest::of(&bytes).prefix_u64()
}

/// Deterministic key pair of node `id` in a world seeded with `seed`.
pub fn node_keypair(seed: u64, id: NodeId) -> KeyPair {
    generate_keypair(stream_seed(seed, &format!("node/{id}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobileNode {
    pub id: NodeId,
    pub position: Point,
    /// Radians.
    pub heading: f64,
    pub active: bool,
    pub inbox: Vec<Digest>,
    pub outbox: Vec<Digest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Meet,
    Leave,
    Forward,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::Meet => "MEET",
            EventKind::Leave => "LEAVE",
            EventKind::Forward => "FORWARD",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimEvent {
    pub slot: Slot,
    pub kind: EventKind,
    pub a: NodeId,
    pub b: NodeId,
    pub payload: Option<Digest>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub meet: u64,
    pub leave: u64,
    pub forward: u64,
}

impl EventCounts {
    pub fn record(&mut self, e: &SimEvent) {
        match e.kind {
            EventKind::Meet => self.meet += 1,
            EventKind::Leave => self.leave += 1,
            EventKind::Forward => self.forward += 1,
        }
    }
}

/// CSV event log: `slot,kind,node_a,node_b,payload_hash`.
pub struct EventLog<W: Write> {
    out: W,
    line: String,
}

impl<W: Write> EventLog<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "slot,kind,node_a,node_b,payload_hash")?;
        Ok(Self {
            out,
            line: String::new(),
        })
    }

    pub fn record(&mut self, e: &SimEvent) -> io::Result<()> {
        self.line.clear();
        let _ = write!(self.line, "{},{},{},{},", e.slot, e.kind.label(), e.a, e.b);
        if let Some(p) = e.payload {
            self.line.push_str(&p.to_hex());
        }
        writeln!(self.out, "{}", self.line)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

pub struct SimWorld {
    config: SimConfig,
    radius: f64,
    nodes: Vec<MobileNode>,
    adjacency: Vec<Vec<NodeId>>,
    malicious: Vec<bool>,
    slot: Slot,
    started: bool,
    mobility: ChaCha8Rng,
    churn: ChaCha8Rng,
    forwarding: ChaCha8Rng,
}

impl SimWorld {
    pub fn new(config: SimConfig) -> Result<Self, NetsimError> {
        config.validate()?;
        let mut mobility = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "mobility"));
        let Area { width, height } = config.area;
        let nodes = (0..config.population as NodeId)
            .map(|id| MobileNode {
                id,
                position: Point::new(mobility.gen_range(0.0..=width), mobility.gen_range(0.0..=height)),
                heading: mobility.gen_range(0.0..std::f64::consts::TAU),
                active: true,
                inbox: Vec::new(),
                outbox: Vec::new(),
            })
            .collect();
        Ok(Self::assemble(config, nodes, mobility))
    }

    /// A world with explicit initial positions and headings.
    pub fn with_layout(config: SimConfig, layout: &[(Point, f64)]) -> Result<Self, NetsimError> {
        let config = SimConfig {
            population: layout.len(),
            ..config
        };
        config.validate()?;
        if let Some((p, _)) = layout.iter().find(|(p, _)| !config.area.contains(p)) {
            return Err(NetsimError::InvalidConfig(format!("position {p:?} outside the area")));
        }
        let mobility = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "mobility"));
        let nodes = layout
            .iter()
            .enumerate()
            .map(|(i, (p, h))| MobileNode {
                id: i as NodeId,
                position: *p,
                heading: *h,
                active: true,
                inbox: Vec::new(),
                outbox: Vec::new(),
            })
            .collect();
        Ok(Self::assemble(config, nodes, mobility))
    }

    fn assemble(config: SimConfig, nodes: Vec<MobileNode>, mobility: ChaCha8Rng) -> Self {
        let n = nodes.len();
        let mut malicious = vec![false; n];
        let adv = &config.adversary;
        if adv.strategy != Strategy::None {
            for (a, b) in &adv.wormhole_links {
                malicious[*a as usize] = true;
                malicious[*b as usize] = true;
            }
            let want = adv.malicious_count(n);
            let pinned = malicious.iter().filter(|m| **m).count();
            if want > pinned {
                let free: Vec<usize> = (0..n).filter(|i| !malicious[*i]).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "adversary"));
                for k in sample(&mut rng, free.len(), want - pinned) {
                    malicious[free[k]] = true;
                }
            }
        }
        Self {
            radius: config.radio.radius(),
            churn: ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "churn")),
            forwarding: ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "forwarding")),
            adjacency: vec![Vec::new(); n],
            config,
            nodes,
            malicious,
            slot: 0,
            started: false,
            mobility,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn population(&self) -> usize {
        self.nodes.len()
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn node(&self, id: NodeId) -> &MobileNode {
        &self.nodes[id as usize]
    }

    pub fn nodes(&self) -> &[MobileNode] {
        &self.nodes
    }

    pub fn positions(&self) -> Vec<Point> {
        self.nodes.iter().map(|n| n.position).collect()
    }

    pub fn is_malicious(&self, id: NodeId) -> bool {
        self.malicious[id as usize]
    }

    /// Malicious nodes under the silent strategy receive but never relay.
    pub fn is_silent(&self, id: NodeId) -> bool {
        self.config.adversary.strategy == Strategy::Silent && self.malicious[id as usize]
    }

    pub fn active_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.active).count()
    }

    /// Current contacts of `id`, sorted.
    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id as usize]
    }

    /// Contacts are computed lazily on the first step.
    pub fn ensure_started(&mut self) -> Vec<SimEvent> {
        if self.started {
            Vec::new()
        } else {
            self.step()
        }
    }

    pub fn mean_degree(&self) -> f64 {
        let active = self.active_count();
        if active == 0 {
            return 0.0;
        }
        self.adjacency.iter().map(Vec::len).sum::<usize>() as f64 / active as f64
    }

    fn compute_adjacency(&self) -> Vec<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        let Area { width, height } = self.config.area;
        let cell = self.radius.max(width / 1024.0).max(height / 1024.0);
        let cols = ((width / cell).ceil() as usize).max(1);
        let rows = ((height / cell).ceil() as usize).max(1);
        let cell_of = |p: &Point| {
            let cx = ((p.x / cell) as usize).min(cols - 1);
            let cy = ((p.y / cell) as usize).min(rows - 1);
            (cx, cy)
        };
        let mut grid: Vec<Vec<NodeId>> = vec![Vec::new(); cols * rows];
        for node in self.nodes.iter().filter(|n| n.active) {
            let (cx, cy) = cell_of(&node.position);
            grid[cy * cols + cx].push(node.id);
        }
        let r2 = self.radius * self.radius;
        for node in self.nodes.iter().filter(|n| n.active) {
            let (cx, cy) = cell_of(&node.position);
            let p = node.position;
            for ny in cy.saturating_sub(1)..=(cy + 1).min(rows - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(cols - 1) {
                    for &j in &grid[ny * cols + nx] {
                        if j <= node.id {
                            continue;
                        }
                        let q = self.nodes[j as usize].position;
                        let (dx, dy) = (p.x - q.x, p.y - q.y);
                        if dx * dx + dy * dy <= r2 {
                            adj[node.id as usize].push(j);
                            adj[j as usize].push(node.id);
                        }
                    }
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    fn move_nodes(&mut self) {
        let Area { width, height } = self.config.area;
        let (speed, turn) = (self.config.speed, self.config.turn_probability);
        if speed == 0.0 {
            return;
        }
        for node in self.nodes.iter_mut().filter(|n| n.active) {
            if turn > 0.0 && self.mobility.gen::<f64>() < turn {
                node.heading = self.mobility.gen_range(0.0..std::f64::consts::TAU);
            }
            let mut x = node.position.x + speed * node.heading.cos();
            let mut y = node.position.y + speed * node.heading.sin();
            let mut h = node.heading;
            if x < 0.0 {
                x = -x;
                h = std::f64::consts::PI - h;
            } else if x > width {
                x = 2.0 * width - x;
                h = std::f64::consts::PI - h;
            }
            if y < 0.0 {
                y = -y;
                h = -h;
            } else if y > height {
                y = 2.0 * height - y;
                h = -h;
            }
            node.position = Point::new(x.clamp(0.0, width), y.clamp(0.0, height));
            node.heading = h.rem_euclid(std::f64::consts::TAU);
        }
    }

    fn apply_churn(&mut self) {
        let rate = self.config.churn_rate;
        if rate <= 0.0 {
            return;
        }
        let poisson = Poisson::new(rate).expect("positive rate");
        let Area { width, height } = self.config.area;
        let leave = poisson.sample(&mut self.churn) as usize;
        let join = poisson.sample(&mut self.churn) as usize;
        let active: Vec<usize> = (0..self.nodes.len()).filter(|i| self.nodes[*i].active).collect();
        let inactive: Vec<usize> = (0..self.nodes.len()).filter(|i| !self.nodes[*i].active).collect();
        for k in sample(&mut self.churn, active.len(), leave.min(active.len())) {
            self.nodes[active[k]].active = false;
        }
        for k in sample(&mut self.churn, inactive.len(), join.min(inactive.len())) {
            let node = &mut self.nodes[inactive[k]];
            node.active = true;
            node.position = Point::new(self.churn.gen_range(0.0..=width), self.churn.gen_range(0.0..=height));
        }
    }

    /// Advances one slot. The first call only reports the initial contacts
    /// (slot 0); every later call moves the nodes and reports transitions.
    pub fn step(&mut self) -> Vec<SimEvent> {
        let mut events = Vec::new();
        if !self.started {
            self.started = true;
            self.adjacency = self.compute_adjacency();
            for (a, list) in self.adjacency.iter().enumerate() {
                for &b in list.iter().filter(|b| **b > a as NodeId) {
                    events.push(SimEvent {
                        slot: 0,
                        kind: EventKind::Meet,
                        a: a as NodeId,
                        b,
                        payload: None,
                    });
                }
            }
            return events;
        }
        self.slot += 1;
        self.apply_churn();
        self.move_nodes();
        let next = self.compute_adjacency();
        let slot = self.slot;
        for (a, (old, new)) in self.adjacency.iter().zip(next.iter()).enumerate() {
            let a = a as NodeId;
            let (mut i, mut j) = (0, 0);
            loop {
                let o = old.get(i).copied().filter(|_| i < old.len());
                let n = new.get(j).copied().filter(|_| j < new.len());
                let ev = match (o, n) {
                    (None, None) => break,
                    (Some(x), Some(y)) if x == y => {
                        i += 1;
                        j += 1;
                        None
                    }
                    (Some(x), Some(y)) if x < y => {
                        i += 1;
                        Some((EventKind::Leave, x))
                    }
                    (Some(_), Some(y)) => {
                        j += 1;
                        Some((EventKind::Meet, y))
                    }
                    (Some(x), None) => {
                        i += 1;
                        Some((EventKind::Leave, x))
                    }
                    (None, Some(y)) => {
                        j += 1;
                        Some((EventKind::Meet, y))
                    }
                };
                if let Some((kind, b)) = ev.filter(|(_, b)| *b > a) {
                    events.push(SimEvent {
                        slot,
                        kind,
                        a,
                        b,
                        payload: None,
                    });
                }
            }
        }
        self.adjacency = next;
        events
    }

    /// Whether `id` relays messages it holds.
    pub fn relays(&self, id: NodeId) -> bool {
        self.nodes[id as usize].active && !self.is_silent(id)
    }

    fn forward_coin(&mut self) -> bool {
        let p = self.config.forwarding_probability;
        p >= 1.0 || (p > 0.0 && self.forwarding.gen::<f64>() < p)
    }
}

/// Per-slot progress of one broadcast.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadCurve {
    /// Fraction of active nodes informed after each slot, starting at slot 0.
    pub fractions: Vec<f64>,
    pub informed_at: Vec<Option<Slot>>,
    pub events: EventCounts,
}

impl SpreadCurve {
    pub fn final_fraction(&self) -> f64 {
        self.fractions.last().copied().unwrap_or(0.0)
    }

    pub fn fraction_at(&self, slot: Slot) -> f64 {
        let i = (slot as usize).min(self.fractions.len().saturating_sub(1));
        self.fractions.get(i).copied().unwrap_or(0.0)
    }
}

/// Epidemic gossip of one message from `origin` for `slots` slots.
///
/// In every slot each relaying holder offers the message to each current
/// contact that lacks it (subject to the forwarding probability); receivers
/// hold it from the next slot. Wormhole endpoints share it instantly.
pub fn broadcast(
    world: &mut SimWorld,
    origin: NodeId,
    message: Digest,
    slots: Slot,
    sink: &mut dyn FnMut(&SimEvent),
) -> SpreadCurve {
    let mut counts = EventCounts::default();
    for e in world.ensure_started() {
        counts.record(&e);
        sink(&e);
    }
    let n = world.population();
    let start = world.slot();
    let mut informed_at: Vec<Option<Slot>> = vec![None; n];
    let mut fractions = Vec::with_capacity(slots as usize + 1);
    if world.node(origin).active {
        informed_at[origin as usize] = Some(start);
    }
    world.nodes[origin as usize].outbox.push(message);
    let informed_fraction = |w: &SimWorld, inf: &[Option<Slot>]| {
        let active = w.active_count();
        if active == 0 {
            return 0.0;
        }
        let count = (0..n).filter(|i| inf[*i].is_some() && w.nodes[*i].active).count();
        count as f64 / active as f64
    };
    fractions.push(informed_fraction(world, &informed_at));
    let links = world.config.adversary.wormhole_links.clone();
    let mut holders: Vec<NodeId> = vec![origin];
    for k in start + 1..=start + slots {
        let mut fresh = Vec::new();
        for &h in &holders {
            if !world.relays(h) {
                continue;
            }
            for idx in 0..world.adjacency[h as usize].len() {
                let nb = world.adjacency[h as usize][idx];
                if informed_at[nb as usize].is_some() || !world.forward_coin() {
                    continue;
                }
                informed_at[nb as usize] = Some(k);
                fresh.push(nb);
                let e = SimEvent {
                    slot: k,
                    kind: EventKind::Forward,
                    a: h,
                    b: nb,
                    payload: Some(message),
                };
                counts.record(&e);
                sink(&e);
            }
        }
        let mut changed = true;
        while changed && !links.is_empty() {
            changed = false;
            for &(a, b) in &links {
                for (from, to) in [(a, b), (b, a)] {
                    if informed_at[from as usize].is_some()
                        && informed_at[to as usize].is_none()
                        && world.nodes[from as usize].active
                        && world.nodes[to as usize].active
                    {
                        informed_at[to as usize] = Some(k);
                        fresh.push(to);
                        changed = true;
                        let e = SimEvent {
                            slot: k,
                            kind: EventKind::Forward,
                            a: from,
                            b: to,
                            payload: Some(message),
                        };
                        counts.record(&e);
                        sink(&e);
                    }
                }
            }
        }
        for &f in &fresh {
            world.nodes[f as usize].inbox.push(message);
        }
        holders.extend(fresh);
        for e in world.step() {
            counts.record(&e);
            sink(&e);
        }
        fractions.push(informed_fraction(world, &informed_at));
    }
    SpreadCurve {
        fractions,
        informed_at,
        events: counts,
    }
}

/// Δ for one origin, with where the origin started.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OriginDelta {
    pub trial: usize,
    pub origin: NodeId,
    pub position: Point,
    /// Slot at which the last active node was informed; `None` if never.
    pub delta: Option<Slot>,
    pub unreached: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaReport {
    /// Worst case over trials and origins; `None` stands for infinity.
    pub delta: Option<Slot>,
    pub per_origin: Vec<OriginDelta>,
    /// Nodes the worst origin never reached.
    pub unreachable: Vec<NodeId>,
}

/// Floods from every origin at once and records when each origin's
/// message has reached every active node.
pub fn flood_all_origins(world: &mut SimWorld, max_slots: Slot, trial: usize) -> (Vec<OriginDelta>, Vec<FixedBitSet>) {
    world.ensure_started();
    let n = world.population();
    let positions = world.positions();
    let mut have: Vec<FixedBitSet> = (0..n)
        .map(|i| {
            let mut b = FixedBitSet::with_capacity(n);
            b.insert(i);
            b
        })
        .collect();
    let mut missing: Vec<usize> = vec![world.active_count().saturating_sub(1); n];
    let mut done: Vec<Option<Slot>> = (0..n).map(|i| (missing[i] == 0).then_some(0)).collect();
    let start = world.slot();
    for k in 1..=max_slots {
        if done
            .iter()
            .enumerate()
            .all(|(i, d)| d.is_some() || !world.nodes[i].active)
        {
            break;
        }
        let prev = have.clone();
        for i in 0..n {
            if !world.nodes[i].active {
                continue;
            }
            for idx in 0..world.adjacency[i].len() {
                let j = world.adjacency[i][idx] as usize;
                if world.relays(j as NodeId) && world.forward_coin() {
                    have[i].union_with(&prev[j]);
                }
            }
        }
        for i in 0..n {
            let mut gained = have[i].clone();
            gained.difference_with(&prev[i]);
            for o in gained.ones() {
                missing[o] -= 1;
                if missing[o] == 0 {
                    done[o] = Some(k);
                }
            }
        }
        world.step();
    }
    let _ = start;
    let per_origin = (0..n)
        .filter(|i| world.nodes[*i].active)
        .map(|i| OriginDelta {
            trial,
            origin: i as NodeId,
            position: positions[i],
            delta: done[i],
            unreached: missing[i],
        })
        .collect();
    (per_origin, have)
}

/// Δ estimate over `trials` independent worlds seeded `seed + t`.
pub fn measure_delta(config: &SimConfig, trials: usize, max_slots: Slot) -> Result<DeltaReport, NetsimError> {
    if trials == 0 {
        return Err(NetsimError::DomainError("need at least one trial".into()));
    }
    let mut per_origin = Vec::new();
    let mut worst: Option<(Option<Slot>, usize, NodeId)> = None;
    let mut unreachable = Vec::new();
    for t in 0..trials {
        let cfg = SimConfig {
            seed: config.seed.wrapping_add(t as u64),
            ..config.clone()
        };
        let mut world = SimWorld::new(cfg)?;
        let (origins, have) = flood_all_origins(&mut world, max_slots, t);
        for o in &origins {
            let key = o.delta.map_or(Slot::MAX, |d| d);
            if worst.is_none_or(|(d, _, _)| key > d.map_or(Slot::MAX, |d| d)) {
                worst = Some((o.delta, t, o.origin));
                unreachable = (0..have.len())
                    .filter(|i| world.nodes[*i].active && !have[*i].contains(o.origin as usize))
                    .map(|i| i as NodeId)
                    .collect();
            }
        }
        per_origin.extend(origins);
    }
    Ok(DeltaReport {
        delta: worst.and_then(|w| w.0),
        per_origin,
        unreachable,
    })
}

/// Boundary handling for geometric graphs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Bounded,
    /// Opposite edges identified, removing the border effect.
    Torus {
        width: f64,
        height: f64,
    },
}

/// Connected components of the geometric graph with edges between points at
/// distance at most `radius`. Components are sorted internally and by their
/// smallest member.
pub fn rgg_components(positions: &[Point], radius: f64) -> Vec<Vec<usize>> {
    rgg_components_with(positions, radius, Boundary::Bounded)
}

pub fn rgg_components_with(positions: &[Point], radius: f64, boundary: Boundary) -> Vec<Vec<usize>> {
    let n = positions.len();
    if n == 0 {
        return Vec::new();
    }
    let (min_x, min_y, span_x, span_y) = match boundary {
        Boundary::Torus { width, height } => (0.0, 0.0, width, height),
        Boundary::Bounded => {
            let min_x = positions.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
            let min_y = positions.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
            let max_x = positions.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
            let max_y = positions.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
            (
                min_x,
                min_y,
                (max_x - min_x).max(f64::MIN_POSITIVE),
                (max_y - min_y).max(f64::MIN_POSITIVE),
            )
        }
    };
    let torus = matches!(boundary, Boundary::Torus { .. });
    let cell = radius.max(span_x / 2048.0).max(span_y / 2048.0).max(f64::MIN_POSITIVE);
    // On a torus the cells must tile the span exactly so wrapped neighbours line up.
    let (cols, rows) = if torus {
        (
            ((span_x / cell).floor() as usize).max(1),
            ((span_y / cell).floor() as usize).max(1),
        )
    } else {
        (
            (span_x / cell).floor() as usize + 1,
            (span_y / cell).floor() as usize + 1,
        )
    };
    let (cell_w, cell_h) = if torus {
        (span_x / cols as f64, span_y / rows as f64)
    } else {
        (cell, cell)
    };
    let cell_of = |p: &Point| {
        (
            (((p.x - min_x) / cell_w) as usize).min(cols - 1),
            (((p.y - min_y) / cell_h) as usize).min(rows - 1),
        )
    };
    let mut grid: Vec<Vec<usize>> = vec![Vec::new(); cols * rows];
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        grid[cy * cols + cx].push(i);
    }
    let dist2 = |a: &Point, b: &Point| {
        let (mut dx, mut dy) = ((a.x - b.x).abs(), (a.y - b.y).abs());
        if let Boundary::Torus { width, height } = boundary {
            dx = dx.min(width - dx);
            dy = dy.min(height - dy);
        }
        dx * dx + dy * dy
    };
    let r2 = radius * radius;
    let mut uf = UnionFind::<usize>::new(n);
    for (i, p) in positions.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        let mut cells = Vec::with_capacity(9);
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                let (x, y) = if torus {
                    (x.rem_euclid(cols as i64), y.rem_euclid(rows as i64))
                } else if x < 0 || y < 0 || x >= cols as i64 || y >= rows as i64 {
                    continue;
                } else {
                    (x, y)
                };
                let c = y as usize * cols + x as usize;
                if !cells.contains(&c) {
                    cells.push(c);
                }
            }
        }
        for c in cells {
            for &j in &grid[c] {
                if j > i && dist2(p, &positions[j]) <= r2 {
                    uf.union(i, j);
                }
            }
        }
    }
    let labels = uf.into_labeling();
    let mut by_root: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for (i, root) in labels.into_iter().enumerate() {
        by_root.entry(root).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = by_root.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    comps
}

/// `π · N_a · R²` with the area normalized to one.
pub fn expected_neighbors(n_active: f64, r_normalized: f64) -> Result<f64, NetsimError> {
    if !(r_normalized > 0.0 && r_normalized <= 1.0) {
        return Err(NetsimError::DomainError(format!("R={r_normalized} outside (0, 1]")));
    }
    if !(n_active >= 0.0) {
        return Err(NetsimError::DomainError(format!("N_a={n_active} must be non-negative")));
    }
    Ok(std::f64::consts::PI * n_active * r_normalized * r_normalized)
}

/// Which nodes each node has been in range of at least once.
#[derive(Debug, Clone)]
pub struct UniqueMeets {
    met: Vec<FixedBitSet>,
}

impl UniqueMeets {
    pub fn new(n: usize) -> Self {
        Self {
            met: vec![FixedBitSet::with_capacity(n); n],
        }
    }

    pub fn observe(&mut self, events: &[SimEvent]) {
        for e in events.iter().filter(|e| e.kind == EventKind::Meet) {
            self.met[e.a as usize].insert(e.b as usize);
            self.met[e.b as usize].insert(e.a as usize);
        }
    }

    pub fn count(&self, id: NodeId) -> usize {
        self.met[id as usize].count_ones(..)
    }

    /// Distinct contacts of each node as a fraction of the other nodes.
    pub fn fractions(&self) -> Vec<f64> {
        let others = self.met.len().saturating_sub(1).max(1) as f64;
        self.met.iter().map(|m| m.count_ones(..) as f64 / others).collect()
    }
}

/// Runs `world` for `slots` slots and returns every node's unique meets.
pub fn run_unique_meets(world: &mut SimWorld, slots: Slot) -> UniqueMeets {
    let mut meets = UniqueMeets::new(world.population());
    meets.observe(&world.ensure_started());
    for _ in 0..slots {
        let events = world.step();
        meets.observe(&events);
    }
    meets
}

/// Runs a world to completion and streams every range transition.
pub fn run_events<W: Write>(config: SimConfig, log: &mut EventLog<W>) -> Result<EventCounts, NetsimError> {
    let mut world = SimWorld::new(config)?;
    let mut counts = EventCounts::default();
    let slots = world.config.duration;
    let mut emit = |events: Vec<SimEvent>| -> Result<(), NetsimError> {
        for e in &events {
            counts.record(e);
            log.record(e).map_err(|err| NetsimError::DomainError(err.to_string()))?;
        }
        Ok(())
    };
    emit(world.ensure_started())?;
    for _ in 0..slots {
        emit(world.step())?;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_cfg(radius: f64) -> SimConfig {
        SimConfig {
            speed: 0.0,
            radio: Radio::Custom(radius),
            ..SimConfig::default()
        }
    }

    #[test]
    fn static_pair_meets_once_at_slot_zero() {
        let layout = [(Point::new(100.0, 100.0), 0.0), (Point::new(110.0, 100.0), 0.0)];
        let mut w = SimWorld::with_layout(static_cfg(20.0), &layout).unwrap();
        let mut all = Vec::new();
        for _ in 0..50 {
            all.extend(w.step());
        }
        assert_eq!(all.len(), 1);
        assert_eq!((all[0].slot, all[0].kind), (0, EventKind::Meet));
    }

    #[test]
    fn head_on_approach_meets_at_slot_five() {
        let cfg = SimConfig {
            speed: 1.0,
            turn_probability: 0.0,
            ..static_cfg(50.0)
        };
        let layout = [
            (Point::new(200.0, 250.0), 0.0),
            (Point::new(260.0, 250.0), std::f64::consts::PI),
        ];
        let mut w = SimWorld::with_layout(cfg, &layout).unwrap();
        let first_meet = (0..20)
            .flat_map(|_| w.step())
            .find(|e| e.kind == EventKind::Meet)
            .unwrap();
        assert_eq!(first_meet.slot, 5);
    }

    #[test]
    fn lone_node_never_emits() {
        let cfg = SimConfig {
            population: 1,
            ..SimConfig::default()
        };
        let mut w = SimWorld::new(cfg).unwrap();
        assert!((0..100).all(|_| w.step().is_empty()));
    }

    #[test]
    fn clique_is_informed_in_one_slot() {
        let layout: Vec<(Point, f64)> = (0..10).map(|i| (Point::new(100.0 + i as f64, 100.0), 0.0)).collect();
        let mut w = SimWorld::with_layout(static_cfg(50.0), &layout).unwrap();
        let curve = broadcast(&mut w, 0, Digest::of(b"m"), 3, &mut |_| {});
        assert_eq!(curve.fractions[1], 1.0);
        let mut w = SimWorld::with_layout(static_cfg(50.0), &layout).unwrap();
        assert_eq!(measure_clique(&mut w), Some(1));
    }

    fn measure_clique(w: &mut SimWorld) -> Option<Slot> {
        let (origins, _) = flood_all_origins(w, 10, 0);
        origins.iter().map(|o| o.delta).max().flatten()
    }

    #[test]
    fn disconnected_world_reports_infinite_delta() {
        let layout = [(Point::new(10.0, 10.0), 0.0), (Point::new(400.0, 400.0), 0.0)];
        let mut w = SimWorld::with_layout(static_cfg(20.0), &layout).unwrap();
        let (origins, _) = flood_all_origins(&mut w, 20, 0);
        assert!(origins.iter().all(|o| o.delta.is_none() && o.unreached == 1));
    }

    #[test]
    fn rgg_boundary_cases() {
        let two = [Point::new(0.0, 0.0), Point::new(5.0, 0.0)];
        assert_eq!(rgg_components(&two, 5.0), vec![vec![0, 1]]);
        let three = [Point::new(0.0, 0.0), Point::new(7.5, 0.0), Point::new(15.0, 0.0)];
        assert_eq!(rgg_components(&three, 5.0).len(), 3);
        let wrap = [Point::new(0.5, 5.0), Point::new(9.5, 5.0)];
        assert_eq!(rgg_components(&wrap, 1.0).len(), 2);
        assert_eq!(
            rgg_components_with(
                &wrap,
                1.0,
                Boundary::Torus {
                    width: 10.0,
                    height: 10.0
                }
            )
            .len(),
            1
        );
    }

    #[test]
    fn expected_neighbors_formula() {
        assert!((expected_neighbors(1000.0, 0.1).unwrap() - 31.4159).abs() < 1e-3);
        assert_eq!(expected_neighbors(0.0, 0.1).unwrap(), 0.0);
        assert!(expected_neighbors(10.0, 0.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let too_wide = SimConfig {
            radio: Radio::Custom(600.0),
            ..SimConfig::default()
        };
        assert!(too_wide.validate().is_err());
        let neg = SimConfig {
            speed: -1.0,
            ..SimConfig::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn churn_keeps_population_and_deactivates_some() {
        let cfg = SimConfig {
            population: 200,
            churn_rate: 2.0,
            duration: 50,
            ..SimConfig::default()
        };
        let mut w = SimWorld::new(cfg).unwrap();
        w.ensure_started();
        for _ in 0..50 {
            w.step();
        }
        assert_eq!(w.population(), 200);
        assert!(w.active_count() < 200);
        for n in w.nodes().iter().filter(|n| !n.active) {
            assert!(w.neighbors(n.id).is_empty());
        }
    }
}
