//! PoC feasibility, Δ self-estimation and the metric tables behind the
//! evaluation figures.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Digest, PublicKey};
use crate::geo::{Area, Point};
use crate::netsim::{
    broadcast, node_keypair, stream_seed, EventCounts, NetsimError, NodeId, OriginDelta, SimConfig, SimWorld,
    SpreadCurve, UniqueMeets,
};
use crate::poe::{initiators, select_committee};
use crate::Slot;

/// Largest candidate set searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 20;
const MAX_GREEDY_STARTS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("design matrix is rank-deficient")]
    DegenerateDesign,
    #[error("probe {0} has out-of-order timestamps")]
    BadProbe(usize),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error("domain error: {0}")]
    DomainError(String),
}

/// A signer set and its average pairwise distance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignerSet {
    /// Indices into the candidate list, ascending.
    pub members: Vec<usize>,
    pub avg_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Feasibility {
    Feasible(SignerSet),
    /// No valid set exists; carries the most dispersed set seen, if any set
    /// was large enough to measure.
    Infeasible(Option<SignerSet>),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }
}

fn pair_sum(points: &[Point], members: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            s += points[*a].distance(&points[*b]);
        }
    }
    s
}

fn pairs(n: usize) -> f64 {
    (n * n.saturating_sub(1) / 2) as f64
}

fn avg_of(points: &[Point], members: &[usize]) -> f64 {
    pair_sum(points, members) / pairs(members.len())
}

/// Orders two candidate answers: smaller average, then fewer members, then
/// lower indices.
fn better(a: &SignerSet, b: &SignerSet) -> bool {
    a.avg_distance
        .total_cmp(&b.avg_distance)
        .then(a.members.len().cmp(&b.members.len()))
        .then(a.members.cmp(&b.members))
        .is_lt()
}

fn capable_points(nodes: &[(Point, bool)]) -> (Vec<usize>, Vec<Point>) {
    nodes
        .iter()
        .enumerate()
        .filter(|(_, (_, can))| *can)
        .map(|(i, (p, _))| (i, *p))
        .unzip()
}

fn check_params(m_rs: usize, m_d: f64) -> Result<(), AnalysisError> {
    if m_rs < 2 || !(m_d >= 0.0 && m_d.is_finite()) {
        return Err(AnalysisError::DomainError(format!(
            "need mRS >= 2 and finite mD >= 0, got {m_rs}, {m_d}"
        )));
    }
    Ok(())
}

/// Exact search over every subset of the capable nodes.
pub fn poc_feasibility_exhaustive(
    nodes: &[(Point, bool)],
    m_rs: usize,
    m_d: f64,
) -> Result<Feasibility, AnalysisError> {
    check_params(m_rs, m_d)?;
    let (index, points) = capable_points(nodes);
    let n = points.len();
    if n > EXHAUSTIVE_LIMIT {
        return Err(AnalysisError::DomainError(format!(
            "{n} candidates exceed the exhaustive limit"
        )));
    }
    if n < m_rs {
        return Ok(Feasibility::Infeasible(None));
    }
    let full = 1usize << n;
    let mut sums = vec![0.0f64; full];
    let mut best: Option<(f64, u32, usize)> = None;
    let mut widest: Option<(f64, usize)> = None;
    for mask in 1..full {
        let low = mask.trailing_zeros() as usize;
        let rest = mask & (mask - 1);
        let mut s = sums[rest];
        let mut r = rest;
        while r != 0 {
            let j = r.trailing_zeros() as usize;
            s += points[low].distance(&points[j]);
            r &= r - 1;
        }
        sums[mask] = s;
        let size = mask.count_ones();
        if (size as usize) < m_rs {
            continue;
        }
        let avg = s / pairs(size as usize);
        if widest.is_none_or(|(w, _)| avg > w) {
            widest = Some((avg, mask));
        }
        if avg >= m_d {
            let key = (avg, size, mask);
            let replace = match best {
                None => true,
                Some(b) => {
                    // Masks visit low indices in their low bits; compare member lists explicitly.
                    key.0.total_cmp(&b.0).then(key.1.cmp(&b.1)).then_with(|| {
                        let ma: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                        let mb: Vec<usize> = (0..n).filter(|i| b.2 >> i & 1 == 1).collect();
                        ma.cmp(&mb)
                    }) == std::cmp::Ordering::Less
                }
            };
            if replace {
                best = Some(key);
            }
        }
    }
    let to_set = |mask: usize, avg: f64| SignerSet {
        members: (0..n).filter(|i| mask >> i & 1 == 1).map(|i| index[i]).collect(),
        avg_distance: avg,
    };
    Ok(match best {
        Some((avg, _, mask)) => Feasibility::Feasible(to_set(mask, avg)),
        None => Feasibility::Infeasible(widest.map(|(avg, mask)| to_set(mask, avg))),
    })
}

/// Greedy farthest-point growth from every start with 1-swap improvement,
/// then an exhaustive pass over the most promising 20 nodes.
pub fn poc_feasibility_heuristic(nodes: &[(Point, bool)], m_rs: usize, m_d: f64) -> Result<Feasibility, AnalysisError> {
    check_params(m_rs, m_d)?;
    let (index, points) = capable_points(nodes);
    let n = points.len();
    if n < m_rs {
        return Ok(Feasibility::Infeasible(None));
    }
    let mut best: Option<SignerSet> = None;
    let mut widest: Option<SignerSet> = None;
    let mut widest_order: Vec<usize> = Vec::new();
    let starts = n.min(MAX_GREEDY_STARTS);
    for start in (0..starts).map(|i| i * n / starts) {
        let mut order = vec![start];
        let mut in_set = vec![false; n];
        in_set[start] = true;
        let mut to_set: Vec<f64> = (0..n).map(|j| points[start].distance(&points[j])).collect();
        let mut sum = 0.0;
        while order.len() < n {
            let next = (0..n)
                .filter(|j| !in_set[*j])
                .max_by(|a, b| to_set[*a].total_cmp(&to_set[*b]).then(b.cmp(a)))
                .expect("unused candidate remains");
            sum += to_set[next];
            in_set[next] = true;
            order.push(next);
            for j in 0..n {
                to_set[j] += points[next].distance(&points[j]);
            }
            let size = order.len();
            if size >= m_rs {
                let avg = sum / pairs(size);
                if avg >= m_d {
                    let mut members = order.clone();
                    members.sort_unstable();
                    let cand = SignerSet {
                        members,
                        avg_distance: avg,
                    };
                    if best.as_ref().is_none_or(|b| better(&cand, b)) {
                        best = Some(cand);
                    }
                }
            }
        }
        let core = swap_improve(&points, order[..m_rs].to_vec());
        let avg = avg_of(&points, &core);
        if widest.as_ref().is_none_or(|w| avg > w.avg_distance) {
            let mut members = core.clone();
            members.sort_unstable();
            widest = Some(SignerSet {
                members,
                avg_distance: avg,
            });
            let mut ord = core;
            ord.extend(order.iter().filter(|j| !widest.as_ref().unwrap().members.contains(j)));
            widest_order = ord;
        }
    }
    let widest = widest.expect("n >= m_rs >= 2");
    if best.is_none() && widest.avg_distance >= m_d {
        best = Some(widest.clone());
    }
    if best.is_some() && m_rs <= EXHAUSTIVE_LIMIT {
        let pool: Vec<usize> = widest_order.iter().copied().take(EXHAUSTIVE_LIMIT.min(n)).collect();
        let sub: Vec<(Point, bool)> = pool.iter().map(|i| (points[*i], true)).collect();
        if let Feasibility::Feasible(s) = poc_feasibility_exhaustive(&sub, m_rs, m_d)? {
            let mut members: Vec<usize> = s.members.iter().map(|i| pool[*i]).collect();
            members.sort_unstable();
            let cand = SignerSet {
                members,
                avg_distance: s.avg_distance,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
    }
    let remap = |s: SignerSet| SignerSet {
        members: s.members.iter().map(|i| index[*i]).collect(),
        avg_distance: s.avg_distance,
    };
    Ok(match best {
        Some(b) => Feasibility::Feasible(remap(b)),
        None => Feasibility::Infeasible(Some(remap(widest))),
    })
}

/// Replaces members by outsiders while that raises the pairwise sum.
fn swap_improve(points: &[Point], mut set: Vec<usize>) -> Vec<usize> {
    let n = points.len();
    loop {
        let mut improved = false;
        for slot in 0..set.len() {
            let out = set[slot];
            let keep_sum = |x: usize| -> f64 {
                set.iter()
                    .filter(|m| **m != out)
                    .map(|m| points[*m].distance(&points[x]))
                    .sum()
            };
            let current = keep_sum(out);
            let candidate = (0..n)
                .filter(|j| !set.contains(j))
                .map(|j| (keep_sum(j), j))
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((gain, j)) = candidate {
                if gain > current + 1e-9 {
                    set[slot] = j;
                    improved = true;
                }
            }
        }
        if !improved {
            return set;
        }
    }
}

/// Exhaustive search for up to 20 capable nodes, the heuristic beyond.
pub fn poc_feasibility(nodes: &[(Point, bool)], m_rs: usize, m_d: f64) -> Result<Feasibility, AnalysisError> {
    if nodes.iter().filter(|(_, c)| *c).count() <= EXHAUSTIVE_LIMIT {
        poc_feasibility_exhaustive(nodes, m_rs, m_d)
    } else {
        poc_feasibility_heuristic(nodes, m_rs, m_d)
    }
}

/// One timing probe between a node and one of its trusted users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeRecord {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub reply_received: f64,
    pub trusted_location: Point,
}

impl ProbeRecord {
    pub fn is_ordered(&self) -> bool {
        self.a <= self.b && self.b <= self.c && self.c <= self.reply_received
    }

    /// One-way time estimate, halving the round trip minus the dwell.
    pub fn one_way(&self) -> f64 {
        ((self.b - self.a) + (self.reply_received - self.c)) / 2.0
    }
}

/// `t = p·d + q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaModel {
    pub p: f64,
    pub q: f64,
}

impl DeltaModel {
    pub fn at(&self, d: f64) -> f64 {
        self.p * d + self.q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaFit {
    pub model: DeltaModel,
    /// `p·(max(x², (1−x)²) + max(y², (1−y)²)) + q`, verbatim.
    pub delta: f64,
    /// `p·√(max(x², (1−x)²) + max(y², (1−y)²)) + q`, the farthest corner.
    pub delta_corner: f64,
}

/// Least-squares fit of one-way time against distance, evaluated at the
/// node's normalized position. Probe locations share the frame of
/// `self_location`.
pub fn fit_delta(probes: &[ProbeRecord], self_location: Point) -> Result<DeltaFit, AnalysisError> {
    if let Some(i) = probes.iter().position(|p| !p.is_ordered()) {
        return Err(AnalysisError::BadProbe(i));
    }
    if probes.len() < 2 {
        return Err(AnalysisError::DegenerateDesign);
    }
    let xs: Vec<f64> = probes
        .iter()
        .map(|p| p.trusted_location.distance(&self_location))
        .collect();
    let ys: Vec<f64> = probes.iter().map(ProbeRecord::one_way).collect();
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    // Normal equations: [sxx sx; sx n] [p q]^T = [sxy sy]^T.
    let det = sxx * n - sx * sx;
    let scale = sxx * n + sx * sx;
    if det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || det == 0.0 {
        return Err(AnalysisError::DegenerateDesign);
    }
    let p = (sxy * n - sx * sy) / det;
    let q = (sxx * sy - sx * sxy) / det;
    let (x, y) = (self_location.x, self_location.y);
    let spread = (x * x).max((1.0 - x) * (1.0 - x)) + (y * y).max((1.0 - y) * (1.0 - y));
    Ok(DeltaFit {
        model: DeltaModel { p, q },
        delta: p * spread + q,
        delta_corner: p * spread.sqrt() + q,
    })
}

/// Probes from `origin` to `count` random peers in a static world, timed by
/// honest flooding, with coordinates normalized to the unit square. Also
/// returns the observed worst delivery slot from `origin`.
pub fn probe_static_world(
    config: &SimConfig,
    origin: NodeId,
    count: usize,
) -> Result<(Vec<ProbeRecord>, Point, Option<Slot>), AnalysisError> {
    let cfg = SimConfig {
        speed: 0.0,
        churn_rate: 0.0,
        ..config.clone()
    };
    let mut world = SimWorld::new(cfg)?;
    world.ensure_started();
    let n = world.population();
    if origin as usize >= n || count == 0 || count >= n {
        return Err(AnalysisError::DomainError("bad origin or probe count".into()));
    }
    let hops = hop_distances(&world, origin);
    let worst = if hops.iter().all(Option::is_some) {
        hops.iter().flatten().copied().max()
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "probes"));
    let others: Vec<usize> = (0..n).filter(|i| *i != origin as usize && hops[*i].is_some()).collect();
    let area = world.config().area;
    let probes = sample(&mut rng, others.len(), count.min(others.len()))
        .into_iter()
        .map(|k| {
            let peer = others[k];
            let h = hops[peer].expect("reachable") as f64;
            ProbeRecord {
                a: 0.0,
                b: h,
                c: h,
                reply_received: 2.0 * h,
                trusted_location: area.normalize(&world.node(peer as NodeId).position),
            }
        })
        .collect();
    Ok((probes, area.normalize(&world.node(origin).position), worst))
}

fn hop_distances(world: &SimWorld, from: NodeId) -> Vec<Option<Slot>> {
    let mut dist = vec![None; world.population()];
    dist[from as usize] = Some(0);
    let mut queue = std::collections::VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u as usize].expect("visited");
        for &v in world.neighbors(u) {
            if dist[v as usize].is_none() {
                dist[v as usize] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// A plot-ready numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_owned(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_cell(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn format_cell(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Informed fraction per slot across seeds.
pub fn spread_table(curves: &[SpreadCurve]) -> Table {
    let mut t = Table::new("spread", &["slot", "mean", "std"]);
    let len = curves.iter().map(|c| c.fractions.len()).max().unwrap_or(0);
    for s in 0..len {
        let xs: Vec<f64> = curves.iter().map(|c| c.fraction_at(s as Slot)).collect();
        let (m, sd) = mean_std(&xs);
        t.push(vec![s as f64, m, sd]);
    }
    t
}

/// Event counts by kind against population size.
pub fn event_count_table(runs: &[(usize, Vec<EventCounts>)]) -> Table {
    let mut t = Table::new(
        "events",
        &[
            "population",
            "meet_mean",
            "meet_std",
            "leave_mean",
            "leave_std",
            "forward_mean",
            "forward_std",
        ],
    );
    for (n, seeds) in runs {
        let col = |f: fn(&EventCounts) -> u64| mean_std(&seeds.iter().map(|c| f(c) as f64).collect::<Vec<_>>());
        let (mm, ms) = col(|c| c.meet);
        let (lm, ls) = col(|c| c.leave);
        let (fm, fs) = col(|c| c.forward);
        t.push(vec![*n as f64, mm, ms, lm, ls, fm, fs]);
    }
    t
}

/// `(min, 25th percentile, mean, 75th percentile, max)`.
pub fn candlestick(values: &[f64]) -> Option<[f64; 5]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Some([v[0], q(0.25), mean, q(0.75), v[v.len() - 1]])
}

/// Unique-meet fractions per epoch duration.
pub fn unique_meets_table(rows: &[(Slot, Vec<f64>)]) -> Table {
    let mut t = Table::new("unique_meets", &["duration", "min", "q25", "mean", "q75", "max"]);
    for (d, fr) in rows {
        if let Some(c) = candlestick(fr) {
            t.push(vec![*d as f64, c[0], c[1], c[2], c[3], c[4]]);
        }
    }
    t
}

/// Delivery fraction against the share of silent nodes.
pub fn silent_table(rows: &[(f64, Vec<f64>)]) -> Table {
    let mut t = Table::new("silent", &["silent_fraction", "delivery_mean", "delivery_std"]);
    for (f, xs) in rows {
        let (m, s) = mean_std(xs);
        t.push(vec![*f, m, s]);
    }
    t
}

/// Per-origin Δ averaged over a `bins × bins` grid of start positions;
/// never-finished origins count as infinite.
pub fn delta_position_table(origins: &[OriginDelta], area: &Area, bins: usize) -> Table {
    let mut t = Table::new(
        "delta_by_position",
        &["x_center", "y_center", "origins", "delta_mean", "delta_max"],
    );
    let bins = bins.max(1);
    let mut cells: Vec<Vec<f64>> = vec![Vec::new(); bins * bins];
    for o in origins {
        let p = area.normalize(&o.position);
        let bx = ((p.x * bins as f64) as usize).min(bins - 1);
        let by = ((p.y * bins as f64) as usize).min(bins - 1);
        cells[by * bins + bx].push(o.delta.map_or(f64::INFINITY, |d| d as f64));
    }
    for by in 0..bins {
        for bx in 0..bins {
            let c = &cells[by * bins + bx];
            if c.is_empty() {
                continue;
            }
            let (m, _) = mean_std(c);
            let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w = area.width / bins as f64;
            let h = area.height / bins as f64;
            t.push(vec![
                (bx as f64 + 0.5) * w,
                (by as f64 + 0.5) * h,
                c.len() as f64,
                m,
                max,
            ]);
        }
    }
    t
}

/// Signers gathered by a block proposal as it spreads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignerCurve {
    /// Signers so far after each slot.
    pub signers_by_slot: Vec<usize>,
    /// Average pairwise distance of those signers; 0 below two signers.
    pub avg_by_slot: Vec<f64>,
    /// Average pairwise distance of the first `n` signers, indexed by `n`.
    pub avg_by_count: Vec<f64>,
}

/// Spreads a block proposal from `origin`. Each node can sign with
/// probability `rho`; signers relay at once and the rest back off
/// `backoff` slots first. A signer's location is fixed when it signs.
pub fn signer_distance_run(
    world: &mut SimWorld,
    origin: NodeId,
    rho: f64,
    slots: Slot,
    backoff: Slot,
) -> Result<SignerCurve, AnalysisError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(AnalysisError::DomainError(format!("rho {rho} outside [0, 1]")));
    }
    world.ensure_started();
    let n = world.population();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(world.config().seed, &format!("sign/{rho}")));
    let can_sign: Vec<bool> = (0..n).map(|i| i == origin as usize || rng.gen::<f64>() < rho).collect();
    let mut ready_at: Vec<Option<Slot>> = vec![None; n];
    ready_at[origin as usize] = Some(0);
    let mut signer_points: Vec<Point> = vec![world.node(origin).position];
    let mut pair_total = 0.0;
    let mut avg_by_count = vec![0.0, 0.0];
    let mut signers_by_slot = vec![1];
    let mut avg_by_slot = vec![0.0];
    for k in 1..=slots {
        let mut fresh = Vec::new();
        for h in 0..n {
            if ready_at[h].is_none_or(|r| r >= k) || !world.relays(h as NodeId) {
                continue;
            }
            for &nb in world.neighbors(h as NodeId) {
                if ready_at[nb as usize].is_none() {
                    let wait = if can_sign[nb as usize] { 0 } else { backoff };
                    ready_at[nb as usize] = Some(k + wait);
                    fresh.push(nb);
                }
            }
        }
        fresh.sort_unstable();
        for nb in fresh.into_iter().filter(|nb| can_sign[*nb as usize]) {
            let p = world.node(nb).position;
            pair_total += signer_points.iter().map(|q| q.distance(&p)).sum::<f64>();
            signer_points.push(p);
            avg_by_count.push(pair_total / pairs(signer_points.len()));
        }
        signers_by_slot.push(signer_points.len());
        avg_by_slot.push(if signer_points.len() < 2 {
            0.0
        } else {
            pair_total / pairs(signer_points.len())
        });
        world.step();
    }
    Ok(SignerCurve {
        signers_by_slot,
        avg_by_slot,
        avg_by_count,
    })
}

/// Average signer distance against slot, one column pair per ρ.
pub fn signer_distance_table(rhos: &[f64], runs: &[Vec<SignerCurve>], by_count: bool) -> Table {
    let mut header = vec![if by_count { "signers" } else { "slot" }.to_string()];
    for r in rhos {
        header.push(format!("rho{:.2}_mean", r));
        header.push(format!("rho{:.2}_std", r));
    }
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(
        if by_count {
            "signer_distance_by_count"
        } else {
            "signer_distance"
        },
        &refs,
    );
    let len = runs
        .iter()
        .flat_map(|rs| rs.iter())
        .map(|c| {
            if by_count {
                c.avg_by_count.len()
            } else {
                c.avg_by_slot.len()
            }
        })
        .min()
        .unwrap_or(0);
    let start = if by_count { 2 } else { 0 };
    for i in start..len {
        let mut row = vec![i as f64];
        for rs in runs {
            let xs: Vec<f64> = rs
                .iter()
                .map(|c| if by_count { c.avg_by_count[i] } else { c.avg_by_slot[i] })
                .collect();
            let (m, s) = mean_std(&xs);
            row.push(m);
            row.push(s);
        }
        t.push(row);
    }
    t
}

/// Outcome of one epoch-termination trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminationTrial {
    pub seed: u64,
    pub initiator: NodeId,
    /// Distinct nodes the initiator met during the epoch.
    pub met: usize,
    /// Slot at which the outcome was settled.
    pub decided_at: Slot,
    pub terminated: bool,
}

/// Runs one epoch of `epoch_slots` and checks whether the first PoE
/// initiator met at least `quorum` distinct corroborators.
pub fn termination_trial(
    config: &SimConfig,
    epoch_slots: Slot,
    committee_size: usize,
    quorum: usize,
) -> Result<TerminationTrial, AnalysisError> {
    let n = config.population;
    if quorum == 0 || quorum > committee_size || committee_size > n {
        return Err(AnalysisError::DomainError(format!(
            "need 1 <= K_m <= K <= N, got K_m={quorum}, K={committee_size}, N={n}"
        )));
    }
    let keys: Vec<PublicKey> = (0..n as NodeId)
        .map(|i| node_keypair(config.seed, i).public_key)
        .collect();
    let by_key: std::collections::BTreeMap<PublicKey, NodeId> =
        keys.iter().enumerate().map(|(i, k)| (*k, i as NodeId)).collect();
    let reps = keys.iter().map(|k| (*k, 1.0 / n as f64)).collect();
    let randomness = Digest::of(&config.seed.to_le_bytes()).prefix_u64();
    let committee: BTreeSet<PublicKey> =
        select_committee(&reps, committee_size, randomness).map_err(|e| AnalysisError::DomainError(e.to_string()))?;
    let initiator = by_key[&initiators(&committee, randomness)[0]];
    let mut world = SimWorld::new(config.clone())?;
    let mut meets = UniqueMeets::new(n);
    meets.observe(&world.ensure_started());
    let mut decided_at = 0;
    // Contacts only accumulate, so the outcome is settled once the quorum is met.
    while meets.count(initiator) < quorum && decided_at < epoch_slots {
        meets.observe(&world.step());
        decided_at += 1;
    }
    let met = meets.count(initiator);
    Ok(TerminationTrial {
        seed: config.seed,
        initiator,
        met,
        decided_at,
        terminated: met >= quorum,
    })
}

/// Final informed fraction of one broadcast from a random honest origin.
pub fn delivery_trial(config: &SimConfig, slots: Slot) -> Result<SpreadCurve, AnalysisError> {
    let mut world = SimWorld::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "origin"));
    let honest: Vec<NodeId> = (0..world.population() as NodeId)
        .filter(|i| !world.is_malicious(*i))
        .collect();
    if honest.is_empty() {
        return Err(AnalysisError::DomainError("no honest origin".into()));
    }
    let origin = honest[rng.gen_range(0..honest.len())];
    let msg = Digest::of(&config.seed.to_le_bytes());
    Ok(broadcast(&mut world, origin, msg, slots, &mut |_| {}))
}

/// Informed fraction when a receiver accepts a broadcast transaction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRuleTrial {
    pub seed: u64,
    pub origin: NodeId,
    pub receiver: NodeId,
    /// Slots until the receiver first held the message.
    pub transfer: Option<Slot>,
    /// `transfer · (1 + multiplier)`.
    pub accept_at: Option<Slot>,
    pub fraction: f64,
}

/// Broadcasts from a random origin to a random receiver, which accepts
/// `multiplier` transfer times after receipt, and reports how much of the
/// network held the message by then.
pub fn delta_rule_trial(config: &SimConfig, multiplier: u64, max_slots: Slot) -> Result<DeltaRuleTrial, AnalysisError> {
    let mut world = SimWorld::new(config.clone())?;
    let n = world.population();
    if n < 2 {
        return Err(AnalysisError::DomainError("need two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, "delta-rule"));
    let picks = sample(&mut rng, n, 2);
    let (origin, receiver) = (picks.index(0) as NodeId, picks.index(1) as NodeId);
    let curve = broadcast(
        &mut world,
        origin,
        Digest::of(&config.seed.to_le_bytes()),
        max_slots,
        &mut |_| {},
    );
    let transfer = curve.informed_at[receiver as usize];
    let accept_at = transfer.map(|t| t.saturating_mul(multiplier + 1));
    Ok(DeltaRuleTrial {
        seed: config.seed,
        origin,
        receiver,
        transfer,
        accept_at,
        fraction: accept_at.map_or(0.0, |a| curve.fraction_at(a)),
    })
}
