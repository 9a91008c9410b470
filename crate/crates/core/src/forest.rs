//! The loop-erasing process: Poisson clocks on the simple cycles of a finite
//! dual graph, processed in batches of length θ, which thins the graph to a
//! spanning forest with the same connected components.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::enumerate::cycles::{dual_edge_graph, simple_cycles, MAX_SIMPLE_CYCLES};
use crate::error::{Error, Result};
use crate::frustration::{components, DualSubgraph, UnionFind};
use crate::lattice::DualEdge;
use crate::rng::{stream, tag, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    /// `a` in `r_γ = exp(-a l_γ)`.
    pub decay: f64,
    /// Interval length; chosen as half the largest admissible value if unset.
    pub theta: Option<f64>,
    pub cycle_cap: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            decay: 0.1,
            theta: None,
            cycle_cap: MAX_SIMPLE_CYCLES,
        }
    }
}

/// Simple cycles of a graph with their clocks.
#[derive(Clone, Debug)]
pub struct CycleClockSystem {
    /// Edges of each cycle, in traversal order.
    pub cycles: Vec<Vec<DualEdge>>,
    pub rates: Vec<f64>,
    /// The edge each cycle deletes when it rings.
    pub chosen: Vec<DualEdge>,
    pub theta: f64,
    pub decay: f64,
    /// `max_e Σ_{γ ∋ e} r_γ l_γ`.
    pub max_edge_load: f64,
    pub seed: u64,
}

impl CycleClockSystem {
    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }

    fn clock(&self, i: usize) -> StreamRng {
        stream(self.seed, &[tag::CLOCK, i as u64])
    }
}

/// Enumerate the simple cycles of `g`, attach rates `exp(-a l)` and a uniform
/// edge to each, and check `θ max_e Σ_{γ ∋ e} r_γ l_γ < 1`.
pub fn build_clock_system(g: &DualSubgraph, params: &ForestParams, seed: u64) -> Result<CycleClockSystem> {
    if !(params.decay > 0.0 && params.decay.is_finite()) {
        return Err(Error::Config(format!("cycle rate decay {} must be positive", params.decay)));
    }
    let (graph, _, ids) = dual_edge_graph(g.torus(), g.edges());
    let raw = simple_cycles(&graph, params.cycle_cap)?;
    let cycles: Vec<Vec<DualEdge>> = raw
        .into_iter()
        .map(|c| c.into_iter().map(|e| ids[e]).collect())
        .collect();
    let rates: Vec<f64> = cycles.iter().map(|c| (-params.decay * c.len() as f64).exp()).collect();
    let mut load: BTreeMap<DualEdge, f64> = BTreeMap::new();
    for (c, r) in cycles.iter().zip(&rates) {
        for &e in c {
            *load.entry(e).or_insert(0.0) += r * c.len() as f64;
        }
    }
    let (worst_edge, max_edge_load) = load
        .iter()
        .fold((None, 0.0), |(we, wl), (&e, &l)| if l > wl { (Some(e), l) } else { (we, wl) });
    let theta = match params.theta {
        Some(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(Error::Config(format!("interval length {t} must be positive")));
        }
        Some(t) => t,
        None if max_edge_load > 0.0 => 0.5 / max_edge_load,
        None => 1.0,
    };
    if theta * max_edge_load >= 1.0 {
        return Err(Error::Config(format!(
            "interval length {theta} too long: dual edge {} carries Σ r l = {max_edge_load}, product {} >= 1",
            worst_edge.map_or(0, |e| e.0),
            theta * max_edge_load
        )));
    }
    let mut sys = CycleClockSystem {
        cycles,
        rates,
        chosen: Vec::new(),
        theta,
        decay: params.decay,
        max_edge_load,
        seed,
    };
    sys.chosen = (0..sys.len())
        .map(|i| {
            let c = &sys.cycles[i];
            c[sys.clock(i).random_range(0..c.len())]
        })
        .collect();
    Ok(sys)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ring {
    pub cycle: usize,
    pub time: f64,
}

#[derive(PartialEq)]
struct Pending(Ring);

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .time
            .total_cmp(&self.0.time)
            .then(other.0.cycle.cmp(&self.0.cycle))
    }
}

/// Ring times of every clock, generated lazily in increasing order. Each clock
/// draws from its own stream, so the realization does not depend on how far
/// ahead other clocks have been read.
pub struct RingSchedule<'a> {
    sys: &'a CycleClockSystem,
    streams: Vec<StreamRng>,
    heap: BinaryHeap<Pending>,
    retired: Vec<bool>,
    last_time: f64,
}

impl<'a> RingSchedule<'a> {
    pub fn new(sys: &'a CycleClockSystem) -> Self {
        let mut streams: Vec<StreamRng> = (0..sys.len())
            .map(|i| {
                let mut s = sys.clock(i);
                // The first draw fixed the chosen edge.
                let _ = s.random_range(0..sys.cycles[i].len());
                s
            })
            .collect();
        let heap = (0..sys.len())
            .map(|i| {
                let t = Exp::new(sys.rates[i]).expect("positive rate").sample(&mut streams[i]);
                Pending(Ring { cycle: i, time: t })
            })
            .collect();
        Self {
            sys,
            streams,
            heap,
            retired: vec![false; sys.len()],
            last_time: f64::NEG_INFINITY,
        }
    }

    /// Stop generating rings for a cycle that no longer exists.
    pub fn retire(&mut self, cycle: usize) {
        self.retired[cycle] = true;
    }

    fn advance(&mut self, ring: Ring) {
        let dt = Exp::new(self.sys.rates[ring.cycle])
            .expect("positive rate")
            .sample(&mut self.streams[ring.cycle]);
        self.heap.push(Pending(Ring {
            cycle: ring.cycle,
            time: ring.time + dt,
        }));
    }

    fn drop_retired(&mut self) {
        while let Some(p) = self.heap.peek() {
            if self.retired[p.0.cycle] {
                self.heap.pop();
            } else {
                break;
            }
        }
    }

    /// Index of the next interval in which a live clock rings.
    pub fn next_interval(&mut self) -> Option<u64> {
        self.drop_retired();
        let t = self.heap.peek()?.0.time;
        Some(self.interval_of(t))
    }

    fn interval_of(&self, t: f64) -> u64 {
        (t / self.sys.theta).floor() as u64
    }

    /// All rings of live clocks in `[nθ, (n+1)θ)`, in time order. A time equal
    /// to an earlier one is discarded and redrawn.
    pub fn take_interval(&mut self, n: u64) -> Vec<Ring> {
        let mut out = Vec::new();
        loop {
            self.drop_retired();
            let Some(p) = self.heap.peek() else { break };
            if self.interval_of(p.0.time) > n {
                break;
            }
            let ring = self.heap.pop().expect("peeked").0;
            self.advance(ring);
            if ring.time == self.last_time {
                continue;
            }
            self.last_time = ring.time;
            out.push(ring);
        }
        out
    }
}

/// One cluster `D` of intersecting ringing cycles and the cycles whose chosen
/// edges were deleted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    /// Cycle indices in ring-time order.
    pub cycles: Vec<usize>,
    pub selected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next: DualSubgraph,
    pub removed: Vec<DualEdge>,
    pub clusters: Vec<ClusterRecord>,
}

/// `G_n -> G_{n+1}` given the rings of one interval.
///
/// Ringing cycles still contained in `g` are grouped into clusters of
/// cycles linked by shared edges. Within a cluster, in ring order, a cycle
/// adds its chosen edge to `H` unless it already meets `H`; the union of the
/// `H` sets is deleted. A cycle ringing more than once counts at its first
/// ring.
pub fn erase_step(g: &DualSubgraph, sys: &CycleClockSystem, rings: &[Ring]) -> Result<StepOutcome> {
    let mut order: Vec<usize> = Vec::new();
    let mut seen = BTreeMap::new();
    let mut sorted = rings.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    for r in &sorted {
        if r.cycle >= sys.len() {
            return Err(Error::range("cycle", r.cycle, sys.len()));
        }
        if seen.contains_key(&r.cycle) || !sys.cycles[r.cycle].iter().all(|&e| g.contains(e)) {
            continue;
        }
        seen.insert(r.cycle, order.len());
        order.push(r.cycle);
    }

    // Clusters: union-find over ringing cycles through shared edges.
    let mut uf = UnionFind::new(order.len());
    let mut owner: BTreeMap<DualEdge, usize> = BTreeMap::new();
    for (i, &c) in order.iter().enumerate() {
        for &e in &sys.cycles[c] {
            if let Some(&j) = owner.get(&e) {
                uf.union(i, j);
            } else {
                owner.insert(e, i);
            }
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..order.len() {
        by_root.entry(uf.find(i)).or_default().push(i);
    }
    let mut clusters: Vec<ClusterRecord> = by_root
        .into_values()
        .map(|members| ClusterRecord {
            cycles: members.iter().map(|&i| order[i]).collect(),
            selected: Vec::new(),
        })
        .collect();
    clusters.sort_by_key(|c| seen[&c.cycles[0]]);

    let mut next = g.clone();
    let mut removed = Vec::new();
    for cl in &mut clusters {
        let mut h: Vec<DualEdge> = Vec::new();
        for &c in &cl.cycles {
            if sys.cycles[c].iter().any(|e| h.contains(e)) {
                continue;
            }
            h.push(sys.chosen[c]);
            cl.selected.push(c);
        }
        for e in h {
            next.remove(e)?;
            removed.push(e);
        }
    }
    removed.sort_unstable();
    Ok(StepOutcome { next, removed, clusters })
}

#[derive(Clone, Debug)]
pub struct ForestRun {
    pub forest: DualSubgraph,
    pub theta: f64,
    pub num_cycles: usize,
    pub max_edge_load: f64,
    /// Intervals in which at least one live clock rang.
    pub active_intervals: u64,
    /// Index of the last interval processed.
    pub last_interval: u64,
    pub steps: Vec<(u64, StepOutcome)>,
}

/// Run the loop-erasing process on `g` until no cycle is left. Only intervals
/// in which some live clock rings count against `max_intervals`.
pub fn extract_forest(
    g: &DualSubgraph,
    params: &ForestParams,
    seed: u64,
    max_intervals: u64,
) -> Result<ForestRun> {
    let sys = build_clock_system(g, params, seed)?;
    let mut incident: BTreeMap<DualEdge, Vec<usize>> = BTreeMap::new();
    for (i, c) in sys.cycles.iter().enumerate() {
        for &e in c {
            incident.entry(e).or_default().push(i);
        }
    }
    let mut alive = sys.len();
    let mut dead = vec![false; sys.len()];
    let mut schedule = RingSchedule::new(&sys);
    let mut current = g.clone();
    let mut steps = Vec::new();
    let mut active = 0u64;
    let mut last = 0u64;
    while alive > 0 {
        if active >= max_intervals {
            return Err(Error::BoundedRun {
                limit: max_intervals,
                unit: "intervals",
                remaining: alive,
            });
        }
        let n = schedule
            .next_interval()
            .ok_or_else(|| Error::Internal("live cycles but no pending rings".into()))?;
        let rings = schedule.take_interval(n);
        active += 1;
        last = n;
        let outcome = erase_step(&current, &sys, &rings)?;
        for e in &outcome.removed {
            for &c in &incident[e] {
                if !std::mem::replace(&mut dead[c], true) {
                    alive -= 1;
                    schedule.retire(c);
                }
            }
        }
        current = outcome.next.clone();
        steps.push((n, outcome));
    }
    Ok(ForestRun {
        forest: current,
        theta: sys.theta,
        num_cycles: sys.len(),
        max_edge_load: sys.max_edge_load,
        active_intervals: active,
        last_interval: last,
        steps,
    })
}

/// Whether `f` has no cycles: per component, edges = vertices - 1.
pub fn is_forest(f: &DualSubgraph) -> bool {
    let c = components(f);
    c.vertex_sizes.iter().zip(&c.edge_sizes).all(|(&v, &e)| e + 1 == v)
}

/// Whether `a` and `b` connect the same pairs of dual vertices.
pub fn same_partition(a: &DualSubgraph, b: &DualSubgraph) -> bool {
    let (ca, cb) = (components(a), components(b));
    let n = a.torus().num_plaquettes();
    let mut map_ab = vec![usize::MAX; ca.count()];
    let mut map_ba = vec![usize::MAX; cb.count()];
    for p in 0..n {
        match (ca.labels[p], cb.labels[p]) {
            (None, None) => {}
            (Some(x), Some(y)) => {
                if map_ab[x] == usize::MAX && map_ba[y] == usize::MAX {
                    map_ab[x] = y;
                    map_ba[y] = x;
                } else if map_ab[x] != y || map_ba[y] != x {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}
