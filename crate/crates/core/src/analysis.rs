//! Window analysis of a dual forest: bridges, tree types and encounter points,
//! the regions cut out by the bridges, their colorings, and the energy of
//! flipping a color class.
//!
//! A window is a box `[N]^2` hosted in a torus. Its dual edges are the duals of
//! the primal edges joining two window vertices. Their endpoints are the
//! `(N-1)^2` internal plaquettes, whose four corners all lie in the window, and
//! the `4N-4` ring plaquettes just outside, each met by exactly one window
//! dual edge. Ring plaquettes stand for the window boundary.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::disorder::Couplings;
use crate::error::{Error, Result};
use crate::forest::is_forest;
use crate::frustration::{DualSubgraph, UnionFind};
use crate::gibbs::{flip_region_delta, SpinConfig};
use crate::lattice::{BoxGeometry, DualEdge, Edge, Geometry, Plaquette, TorusGeometry, Vertex};

/// Dual structure of a hosted window.
#[derive(Clone, Debug)]
struct WindowDual {
    torus: TorusGeometry,
    window_edge: Vec<bool>,
    ring: Vec<bool>,
    internal: Vec<bool>,
}

impl WindowDual {
    fn new(window: &BoxGeometry) -> Result<Self> {
        let host = window
            .host()
            .ok_or_else(|| Error::Contract("window must be hosted in a torus".into()))?;
        let torus = host.torus;
        let mut in_box = vec![false; torus.num_vertices()];
        for v in window.host_vertices()? {
            in_box[v.0] = true;
        }
        let mut window_edge = vec![false; torus.num_edges()];
        let mut touched = vec![false; torus.num_plaquettes()];
        for e in window.interior_edges()? {
            let d = DualEdge(e.0);
            window_edge[d.0] = true;
            let (a, b) = torus.dual_endpoints(d);
            touched[a.0] = true;
            touched[b.0] = true;
        }
        let internal: Vec<bool> = (0..torus.num_plaquettes())
            .map(|p| {
                let (x, y) = torus.plaquette_coords(Plaquette(p));
                let (x, y) = (x as i64, y as i64);
                [(0, 0), (1, 0), (0, 1), (1, 1)]
                    .iter()
                    .all(|&(dx, dy)| in_box[torus.at(x + dx, y + dy).0])
            })
            .collect();
        let ring = touched.iter().zip(&internal).map(|(&t, &i)| t && !i).collect();
        Ok(Self {
            torus,
            window_edge,
            ring,
            internal,
        })
    }

    /// Window edges of `f`, and the degree of each plaquette among them.
    fn restrict(&self, f: &DualSubgraph) -> (Vec<DualEdge>, Vec<usize>) {
        let edges: Vec<DualEdge> = f.edges().filter(|d| self.window_edge[d.0]).collect();
        let mut degree = vec![0; self.torus.num_plaquettes()];
        for &d in &edges {
            let (a, b) = self.torus.dual_endpoints(d);
            degree[a.0] += 1;
            degree[b.0] += 1;
        }
        (edges, degree)
    }

    fn num_ring(&self) -> usize {
        self.ring.iter().filter(|&&r| r).count()
    }
}

/// Bridges of a forest in a window: the union of its simple paths inside the
/// window between two ring plaquettes.
#[derive(Clone, Debug)]
pub struct BridgeSet {
    pub window: BoxGeometry,
    pub bridges: DualSubgraph,
}

/// Prune window leaves that are not ring plaquettes until none is left; in a
/// forest what remains is exactly the union of ring-to-ring paths.
pub fn find_bridges(f: &DualSubgraph, window: &BoxGeometry) -> Result<BridgeSet> {
    if !is_forest(f) {
        return Err(Error::Contract("bridges are defined for forests only".into()));
    }
    let wd = WindowDual::new(window)?;
    if f.torus() != &wd.torus {
        return Err(Error::Contract("forest and window live on different tori".into()));
    }
    let (edges, mut degree) = wd.restrict(f);
    let mut alive: BTreeMap<DualEdge, bool> = edges.iter().map(|&d| (d, true)).collect();
    let mut at: BTreeMap<Plaquette, Vec<DualEdge>> = BTreeMap::new();
    for &d in &edges {
        let (a, b) = wd.torus.dual_endpoints(d);
        at.entry(a).or_default().push(d);
        at.entry(b).or_default().push(d);
    }
    let mut queue: VecDeque<Plaquette> = at
        .keys()
        .copied()
        .filter(|p| degree[p.0] == 1 && !wd.ring[p.0])
        .collect();
    while let Some(p) = queue.pop_front() {
        if degree[p.0] != 1 {
            continue;
        }
        let d = *at[&p].iter().find(|d| alive[d]).expect("a live edge at a leaf");
        alive.insert(d, false);
        let (a, b) = wd.torus.dual_endpoints(d);
        let other = if a == p { b } else { a };
        degree[p.0] -= 1;
        degree[other.0] -= 1;
        if degree[other.0] == 1 && !wd.ring[other.0] {
            queue.push_back(other);
        }
    }
    let bridges = DualSubgraph::from_edges(
        wd.torus,
        alive.into_iter().filter(|&(_, a)| a).map(|(d, _)| d),
    )?;
    Ok(BridgeSet {
        window: *window,
        bridges,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeKind {
    /// No ring plaquette.
    Finite,
    SingleArm,
    BiArm,
    MultiArm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowTree {
    pub kind: TreeKind,
    pub ring_leaves: usize,
    pub vertices: usize,
    pub edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeTypeReport {
    pub side: usize,
    pub trees: Vec<WindowTree>,
    pub kind_counts: BTreeMap<TreeKind, usize>,
    pub encounter_points: Vec<Plaquette>,
    /// `4N - 4`, the number of ring plaquettes.
    pub boundary_bound: usize,
    pub within_bound: bool,
    /// Over vertices of single-arm trees rooted at their ring leaf: height of
    /// the subtree behind the vertex -> number of vertices.
    pub behind_histogram: BTreeMap<usize, usize>,
}

impl TreeTypeReport {
    pub fn encounter_count(&self) -> usize {
        self.encounter_points.len()
    }
}

/// Classify the trees of `f ∩ window` by how many ring plaquettes they reach,
/// and count encounter points: internal plaquettes whose removal leaves at
/// least three parts that reach the ring.
pub fn count_encounter_points(f: &DualSubgraph, window: &BoxGeometry) -> Result<TreeTypeReport> {
    let wd = WindowDual::new(window)?;
    let bs = find_bridges(f, window)?;
    let (edges, _) = wd.restrict(f);
    let torus = wd.torus;
    let np = torus.num_plaquettes();

    let mut adj: Vec<Vec<Plaquette>> = vec![Vec::new(); np];
    let mut uf = UnionFind::new(np);
    for &d in &edges {
        let (a, b) = torus.dual_endpoints(d);
        adj[a.0].push(b);
        adj[b.0].push(a);
        uf.union(a.0, b.0);
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in (0..np).filter(|&p| !adj[p].is_empty()) {
        groups.entry(uf.find(p)).or_default().push(p);
    }
    let mut trees = Vec::new();
    let mut kind_counts = BTreeMap::new();
    let mut behind_histogram = BTreeMap::new();
    for members in groups.values() {
        let rings: Vec<usize> = members.iter().copied().filter(|&p| wd.ring[p]).collect();
        let kind = match rings.len() {
            0 => TreeKind::Finite,
            1 => TreeKind::SingleArm,
            2 => TreeKind::BiArm,
            _ => TreeKind::MultiArm,
        };
        let deg_sum: usize = members.iter().map(|&p| adj[p].len()).sum();
        trees.push(WindowTree {
            kind,
            ring_leaves: rings.len(),
            vertices: members.len(),
            edges: deg_sum / 2,
        });
        *kind_counts.entry(kind).or_insert(0) += 1;
        if kind == TreeKind::SingleArm {
            for h in subtree_heights(&adj, Plaquette(rings[0])) {
                *behind_histogram.entry(h).or_insert(0) += 1;
            }
        }
    }

    let mut bdeg = vec![0usize; np];
    for d in bs.bridges.edges() {
        let (a, b) = torus.dual_endpoints(d);
        bdeg[a.0] += 1;
        bdeg[b.0] += 1;
    }
    let encounter_points: Vec<Plaquette> = (0..np)
        .filter(|&p| wd.internal[p] && bdeg[p] >= 3)
        .map(Plaquette)
        .collect();
    let boundary_bound = wd.num_ring();
    Ok(TreeTypeReport {
        side: window.side(),
        within_bound: encounter_points.len() <= boundary_bound,
        trees,
        kind_counts,
        encounter_points,
        boundary_bound,
        behind_histogram,
    })
}

/// Height of every subtree when the tree containing `root` hangs from it.
fn subtree_heights(adj: &[Vec<Plaquette>], root: Plaquette) -> Vec<usize> {
    let mut order = vec![root.0];
    let mut parent = BTreeMap::from([(root.0, usize::MAX)]);
    let mut i = 0;
    while i < order.len() {
        let p = order[i];
        for q in &adj[p] {
            if !parent.contains_key(&q.0) {
                parent.insert(q.0, p);
                order.push(q.0);
            }
        }
        i += 1;
    }
    let mut height: BTreeMap<usize, usize> = order.iter().map(|&p| (p, 0)).collect();
    for &p in order.iter().rev() {
        let par = parent[&p];
        if par != usize::MAX {
            let h = height[&p] + 1;
            let e = height.get_mut(&par).expect("parent visited");
            *e = (*e).max(h);
        }
    }
    order.iter().map(|p| height[p]).collect()
}

/// The regions of a window cut out by a bridge set.
#[derive(Clone, Debug, Serialize)]
pub struct BridgeDecomposition {
    pub window: BoxGeometry,
    pub bridges: Vec<DualEdge>,
    /// Region of each window vertex, by local id.
    pub regions: Vec<usize>,
    pub num_regions: usize,
    /// Symmetric, irreflexive region adjacency through bridge edges.
    pub adjacency: Vec<BTreeSet<usize>>,
    pub coloring: Option<Vec<u8>>,
}

impl BridgeDecomposition {
    /// Host vertices of the regions with the given color.
    pub fn color_class(&self, color: u8) -> Result<Vec<Vertex>> {
        let colors = self
            .coloring
            .as_ref()
            .ok_or_else(|| Error::Contract("regions have not been colored".into()))?;
        (0..self.window.num_vertices())
            .filter(|&v| colors[self.regions[v]] == color)
            .map(|v| self.window.host_vertex(Vertex(v)))
            .collect()
    }

    pub fn num_colors(&self) -> usize {
        self.coloring
            .as_ref()
            .map_or(0, |c| c.iter().map(|&x| x as usize + 1).max().unwrap_or(0))
    }
}

/// Connected components of the window's vertices where a step is blocked iff
/// the dual of its edge is a bridge.
pub fn decompose_regions(bs: &BridgeSet) -> Result<BridgeDecomposition> {
    let window = bs.window;
    let host = window
        .host()
        .ok_or_else(|| Error::Contract("window must be hosted in a torus".into()))?;
    let torus = host.torus;
    let n = window.num_vertices();
    let mut regions = vec![usize::MAX; n];
    let mut num_regions = 0;
    let blocked = |e: Edge| bs.bridges.contains(DualEdge(e.0));
    for start in 0..n {
        if regions[start] != usize::MAX {
            continue;
        }
        regions[start] = num_regions;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            let hv = window.host_vertex(Vertex(v))?;
            for (u, e) in torus.neighbor_array(hv).into_iter().zip(torus.incident_edges(hv)) {
                let Some(lu) = window.local_of_host(u)? else { continue };
                if regions[lu.0] == usize::MAX && !blocked(e) {
                    regions[lu.0] = num_regions;
                    queue.push_back(lu.0);
                }
            }
        }
        num_regions += 1;
    }
    let mut adjacency = vec![BTreeSet::new(); num_regions];
    let bridges: Vec<DualEdge> = bs.bridges.edges().collect();
    for &d in &bridges {
        let (a, b) = torus.endpoints(Edge(d.0));
        let (la, lb) = match (window.local_of_host(a)?, window.local_of_host(b)?) {
            (Some(la), Some(lb)) => (la, lb),
            _ => return Err(Error::Contract(format!("dual edge {} is not a window edge", d.0))),
        };
        let (ra, rb) = (regions[la.0], regions[lb.0]);
        if ra == rb {
            return Err(Error::Internal(format!(
                "bridge edge {} does not separate two regions",
                d.0
            )));
        }
        adjacency[ra].insert(rb);
        adjacency[rb].insert(ra);
    }
    Ok(BridgeDecomposition {
        window,
        bridges,
        regions,
        num_regions,
        adjacency,
        coloring: None,
    })
}

/// Two-color the region graph when it is bipartite, otherwise five-color it by
/// removing a vertex of minimum degree at a time and reinserting in reverse,
/// with Kempe-chain swaps when all five colors appear around a vertex.
pub fn color_regions(d: &mut BridgeDecomposition, max_colors: usize) -> Result<Vec<u8>> {
    let colors = match two_coloring(&d.adjacency) {
        Some(c) => c,
        None => five_coloring(&d.adjacency)?,
    };
    let used = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    if used > max_colors {
        return Err(Error::Validation(format!(
            "region graph needs {used} colors here, only {max_colors} allowed"
        )));
    }
    verify_coloring(&d.adjacency, &colors)?;
    d.coloring = Some(colors.clone());
    Ok(colors)
}

fn verify_coloring(adjacency: &[BTreeSet<usize>], colors: &[u8]) -> Result<()> {
    for (r, nbrs) in adjacency.iter().enumerate() {
        if let Some(&s) = nbrs.iter().find(|&&s| colors[s] == colors[r]) {
            return Err(Error::Internal(format!("regions {r} and {s} share a color")));
        }
    }
    Ok(())
}

fn two_coloring(adjacency: &[BTreeSet<usize>]) -> Option<Vec<u8>> {
    let n = adjacency.len();
    let mut color = vec![u8::MAX; n];
    for s in 0..n {
        if color[s] != u8::MAX {
            continue;
        }
        color[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(r) = queue.pop_front() {
            for &t in &adjacency[r] {
                if color[t] == u8::MAX {
                    color[t] = 1 - color[r];
                    queue.push_back(t);
                } else if color[t] == color[r] {
                    return None;
                }
            }
        }
    }
    Some(color)
}

fn five_coloring(adjacency: &[BTreeSet<usize>]) -> Result<Vec<u8>> {
    let n = adjacency.len();
    let mut degree: Vec<usize> = adjacency.iter().map(BTreeSet::len).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !removed[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("a vertex remains");
        removed[v] = true;
        order.push(v);
        for &u in &adjacency[v] {
            if !removed[u] {
                degree[u] -= 1;
            }
        }
    }
    let mut color = vec![u8::MAX; n];
    for &v in order.iter().rev() {
        let nbrs: Vec<usize> = adjacency[v].iter().copied().filter(|&u| color[u] != u8::MAX).collect();
        if let Some(c) = free_color(&nbrs, &color) {
            color[v] = c;
            continue;
        }
        let mut done = false;
        'pairs: for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if color[a] == color[b] {
                    continue;
                }
                let chain = kempe_chain(adjacency, &color, a, color[a], color[b]);
                if chain.contains(&b) {
                    continue;
                }
                let (ca, cb) = (color[a], color[b]);
                for &x in &chain {
                    color[x] = if color[x] == ca { cb } else { ca };
                }
                if let Some(c) = free_color(&nbrs, &color) {
                    color[v] = c;
                    done = true;
                    break 'pairs;
                }
            }
        }
        if !done {
            return Err(Error::Internal("five-coloring failed; region graph is not planar".into()));
        }
    }
    Ok(color)
}

fn free_color(nbrs: &[usize], color: &[u8]) -> Option<u8> {
    (0..5u8).find(|c| nbrs.iter().all(|&u| color[u] != *c))
}

/// Colored vertices reachable from `start` through vertices colored `a` or `b`.
fn kempe_chain(adjacency: &[BTreeSet<usize>], color: &[u8], start: usize, a: u8, b: u8) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(x) = queue.pop_front() {
        for &y in &adjacency[x] {
            if (color[y] == a || color[y] == b) && seen.insert(y) {
                queue.push_back(y);
            }
        }
    }
    seen
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassFlip {
    pub color: u8,
    pub regions: usize,
    pub vertices: usize,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipOutcome {
    pub classes: Vec<ClassFlip>,
    pub best_color: Option<u8>,
    pub best_delta: f64,
    /// `E_N`: number of bridge edges.
    pub bridge_edges: usize,
    /// `Y_N = |w|(P_N)`.
    pub bridge_weight: f64,
    /// `|w|(∂[N]^2)` over the primal edges leaving the window.
    pub boundary_abs: f64,
    /// `Σ w_e σ_x σ_y` over the same edges.
    pub boundary_signed: f64,
    /// `Σ_c ΔH_c / 2 - (boundary_signed - 2 Y_N)`; zero up to rounding.
    pub identity_residual: f64,
    /// Whether `2 Y_N > |w|(∂[N]^2)`.
    pub bound_applies: bool,
}

/// For every color class, the energy change of flipping the union of its
/// regions; the most negative is reported as best. All bridge edges must be
/// unsatisfied.
pub fn best_color_class_flip(
    d: &BridgeDecomposition,
    w: &Couplings,
    sigma: &SpinConfig,
) -> Result<FlipOutcome> {
    let host = d
        .window
        .host()
        .ok_or_else(|| Error::Contract("window must be hosted in a torus".into()))?;
    let torus = host.torus;
    w.check_shape(&torus)?;
    sigma.check_len(torus.num_vertices())?;
    let coloring = d
        .coloring
        .as_ref()
        .ok_or_else(|| Error::Contract("regions have not been colored".into()))?;
    let v = |e: Edge| {
        let (a, b) = torus.endpoints(e);
        w.weight(e) * f64::from(sigma.get(a) * sigma.get(b))
    };
    let mut bridge_weight = 0.0;
    for &b in &d.bridges {
        let e = Edge(b.0);
        if v(e) >= 0.0 {
            return Err(Error::Contract(format!("bridge edge {} is satisfied", b.0)));
        }
        bridge_weight += w.weight(e).abs();
    }
    let boundary = d.window.boundary_edges()?;
    let boundary_abs: f64 = boundary.iter().map(|&e| w.weight(e).abs()).sum();
    let boundary_signed: f64 = boundary.iter().map(|&e| v(e)).sum();

    let num_colors = coloring.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut classes = Vec::new();
    for c in 0..num_colors as u8 {
        let region = d.color_class(c)?;
        let delta = flip_region_delta(w, &torus, sigma, &region)?;
        classes.push(ClassFlip {
            color: c,
            regions: coloring.iter().filter(|&&x| x == c).count(),
            vertices: region.len(),
            delta,
        });
    }
    let best = classes.iter().min_by(|a, b| a.delta.total_cmp(&b.delta));
    let sum: f64 = classes.iter().map(|c| c.delta).sum();
    Ok(FlipOutcome {
        best_color: best.map(|c| c.color),
        best_delta: best.map_or(0.0, |c| c.delta),
        classes,
        bridge_edges: d.bridges.len(),
        bridge_weight,
        boundary_abs,
        boundary_signed,
        identity_residual: sum / 2.0 - (boundary_signed - 2.0 * bridge_weight),
        bound_applies: 2.0 * bridge_weight > boundary_abs,
    })
}

/// One `(N, E_N, Y_N)` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeStats {
    pub side: usize,
    pub bridge_edges: usize,
    pub bridge_weight: f64,
    pub n_log_n: f64,
}

pub fn bridge_stats(bs: &BridgeSet, w: &Couplings) -> BridgeStats {
    let n = bs.window.side();
    BridgeStats {
        side: n,
        bridge_edges: bs.bridges.len(),
        bridge_weight: bs.bridges.edges().map(|d| w.weight(Edge(d.0)).abs()).sum(),
        n_log_n: n as f64 * (n as f64).ln(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_couplings;
    use crate::forest::{extract_forest, ForestParams};
    use crate::frustration::unsatisfied_set;
    use crate::gibbs::{energy, sample_ea_pair, InverseTemperature};
    use crate::rng::stream;
    use rand::Rng;

    /// Window of side `n` at (1, 1) in a torus of side `n + 4`.
    fn window(n: usize) -> (TorusGeometry, BoxGeometry) {
        let t = TorusGeometry::new(n + 4).unwrap();
        (t, BoxGeometry::in_host(t, n, (1, 1)).unwrap())
    }

    /// Dual edge crossing the vertical primal edge above host vertex (x, y).
    fn h_step(t: &TorusGeometry, x: i64, y: i64) -> DualEdge {
        DualEdge(t.edge(t.at(x, y), crate::lattice::Orientation::Vertical).0)
    }

    /// Dual edge crossing the horizontal primal edge right of host vertex (x, y).
    fn v_step(t: &TorusGeometry, x: i64, y: i64) -> DualEdge {
        DualEdge(t.edge(t.at(x, y), crate::lattice::Orientation::Horizontal).0)
    }

    /// Dual path across the window between rows `y` and `y + 1`.
    fn horizontal_crossing(t: &TorusGeometry, n: usize, y: i64) -> Vec<DualEdge> {
        (1..=n as i64).map(|x| h_step(t, x, y)).collect()
    }

    #[test]
    fn window_dual_counts() {
        let (_, b) = window(6);
        let wd = WindowDual::new(&b).unwrap();
        assert_eq!(wd.internal.iter().filter(|&&x| x).count(), 25);
        assert_eq!(wd.num_ring(), 20);
        assert_eq!(wd.window_edge.iter().filter(|&&x| x).count(), 2 * 6 * 5);
    }

    #[test]
    fn interior_forest_has_no_bridges() {
        let (t, b) = window(6);
        let f = DualSubgraph::from_edges(t, [h_step(&t, 3, 3), h_step(&t, 4, 3)]).unwrap();
        assert!(find_bridges(&f, &b).unwrap().bridges.is_empty());
        let report = count_encounter_points(&f, &b).unwrap();
        assert_eq!(report.kind_counts[&TreeKind::Finite], 1);
        assert_eq!(report.encounter_count(), 0);
    }

    #[test]
    fn straight_crossing_is_all_bridge() {
        let (t, b) = window(6);
        let path = horizontal_crossing(&t, 6, 3);
        let f = DualSubgraph::from_edges(t, path.clone()).unwrap();
        let bs = find_bridges(&f, &b).unwrap();
        assert_eq!(bs.bridges.edges().collect::<Vec<_>>(), {
            let mut p = path.clone();
            p.sort_unstable();
            p
        });
        let report = count_encounter_points(&f, &b).unwrap();
        assert_eq!(report.kind_counts[&TreeKind::BiArm], 1);
        assert_eq!(report.encounter_count(), 0);
        let mut d = decompose_regions(&bs).unwrap();
        assert_eq!(d.num_regions, 2);
        assert!(d.adjacency[0].contains(&1));
        assert_eq!(color_regions(&mut d, 5).unwrap().len(), 2);
        assert_eq!(d.num_colors(), 2);
    }

    #[test]
    fn t_shape_bridges_all_edges_and_plus_has_one_encounter() {
        let (t, b) = window(7);
        // Horizontal crossing between rows 4 and 5 plus a vertical arm down
        // from the middle to the bottom ring.
        let mut edges = horizontal_crossing(&t, 7, 4);
        let arm_down: Vec<DualEdge> = (1..=4).map(|y| v_step(&t, 4, y)).collect();
        edges.extend(&arm_down);
        let f = DualSubgraph::from_edges(t, edges.clone()).unwrap();
        let bs = find_bridges(&f, &b).unwrap();
        // All-pairs oracle: every edge lies on a path between two of the three tips.
        assert_eq!(bs.bridges.len(), edges.len());
        let report = count_encounter_points(&f, &b).unwrap();
        assert_eq!(report.kind_counts[&TreeKind::MultiArm], 1);
        assert_eq!(report.encounter_count(), 1);

        let arm_up: Vec<DualEdge> = (5..=7).map(|y| v_step(&t, 4, y)).collect();
        edges.extend(arm_up);
        let plus = DualSubgraph::from_edges(t, edges).unwrap();
        let report = count_encounter_points(&plus, &b).unwrap();
        assert_eq!(report.encounter_count(), 1);
        assert_eq!(report.trees[0].ring_leaves, 4);
        let mut d = decompose_regions(&find_bridges(&plus, &b).unwrap()).unwrap();
        assert_eq!(d.num_regions, 4);
        color_regions(&mut d, 5).unwrap();
    }

    #[test]
    fn dangling_branch_is_pruned() {
        let (t, b) = window(6);
        let mut edges = horizontal_crossing(&t, 6, 3);
        edges.push(v_step(&t, 3, 3));
        edges.push(v_step(&t, 3, 2));
        let f = DualSubgraph::from_edges(t, edges).unwrap();
        let bs = find_bridges(&f, &b).unwrap();
        assert_eq!(bs.bridges.len(), 6);
    }

    #[test]
    fn parallel_crossings_alternate_two_colors() {
        let (t, b) = window(8);
        let mut edges = Vec::new();
        for y in [2, 4, 6] {
            edges.extend(horizontal_crossing(&t, 8, y));
        }
        let f = DualSubgraph::from_edges(t, edges).unwrap();
        let mut d = decompose_regions(&find_bridges(&f, &b).unwrap()).unwrap();
        assert_eq!(d.num_regions, 4);
        let colors = color_regions(&mut d, 2).unwrap();
        for r in 0..3 {
            assert_ne!(colors[r], colors[r + 1]);
        }
    }

    #[test]
    fn non_forest_rejected() {
        let (t, b) = window(6);
        let square = t.incident_edges(t.at(3, 3)).map(|e| DualEdge(e.0));
        let f = DualSubgraph::from_edges(t, square).unwrap();
        assert!(matches!(find_bridges(&f, &b), Err(Error::Contract(_))));
    }

    #[test]
    fn five_coloring_of_planar_graphs() {
        // Wheel with an odd rim (needs 4 colors) and an octahedron-like graph.
        let mut wheel = vec![BTreeSet::new(); 6];
        for i in 1..6 {
            let j = if i == 5 { 1 } else { i + 1 };
            for (a, b) in [(0, i), (i, j)] {
                wheel[a].insert(b);
                wheel[b].insert(a);
            }
        }
        let c = five_coloring(&wheel).unwrap();
        verify_coloring(&wheel, &c).unwrap();
        assert!(two_coloring(&wheel).is_none());
        // Random planar graphs: triangulated grids.
        let mut rng = stream(4, &[]);
        for _ in 0..50 {
            let k = 6;
            let id = |x: usize, y: usize| y * k + x;
            let mut g = vec![BTreeSet::new(); k * k];
            for y in 0..k {
                for x in 0..k {
                    let mut link = |a: usize, b: usize| {
                        g[a].insert(b);
                        g[b].insert(a);
                    };
                    if x + 1 < k {
                        link(id(x, y), id(x + 1, y));
                    }
                    if y + 1 < k {
                        link(id(x, y), id(x, y + 1));
                    }
                    if x + 1 < k && y + 1 < k {
                        if rng.random::<bool>() {
                            link(id(x, y), id(x + 1, y + 1));
                        } else {
                            link(id(x + 1, y), id(x, y + 1));
                        }
                    }
                }
            }
            let c = five_coloring(&g).unwrap();
            verify_coloring(&g, &c).unwrap();
            assert!(c.iter().all(|&x| x < 5));
        }
    }

    #[test]
    fn flip_mechanics_match_full_recomputation() {
        let n = 10;
        let (t, b) = window(n);
        let mut checked = 0;
        for seed in 0..60u64 {
            let beta = InverseTemperature::Finite(if seed % 2 == 0 { 1.0 } else { 2.0 });
            let (w, sigma, _) = sample_ea_pair(t.side(), seed, beta, 500, 0).unwrap();
            let g = unsatisfied_set(&w, &sigma).unwrap();
            let params = ForestParams {
                cycle_cap: 20_000,
                ..ForestParams::default()
            };
            let Ok(run) = extract_forest(&g, &params, seed, 1_000_000) else {
                continue;
            };
            let bs = find_bridges(&run.forest, &b).unwrap();
            let mut d = decompose_regions(&bs).unwrap();
            assert!(d.num_regions <= bs.bridges.len() + 1);
            color_regions(&mut d, 5).unwrap();
            let out = best_color_class_flip(&d, &w, &sigma).unwrap();
            assert!(out.identity_residual.abs() < 1e-9);
            let h0 = energy(&w, &t, &sigma).unwrap();
            for class in &out.classes {
                let region = d.color_class(class.color).unwrap();
                let h1 = energy(&w, &t, &sigma.flipped_on(&region)).unwrap();
                assert!((h1 - h0 - class.delta).abs() < 1e-9);
            }
            if out.bound_applies {
                assert!(out.best_delta < 0.0);
            }
            let c = d.num_colors() as f64;
            let pigeonhole = out.classes.iter().map(|x| x.delta).sum::<f64>() / c;
            assert!(out.best_delta <= pigeonhole + 1e-12);
            let report = count_encounter_points(&run.forest, &b).unwrap();
            assert!(report.within_bound);
            checked += 1;
        }
        assert!(checked > 20);
    }

    #[test]
    fn satisfied_bridge_is_a_contract_error() {
        let (t, b) = window(6);
        let f = DualSubgraph::from_edges(t, horizontal_crossing(&t, 6, 3)).unwrap();
        let mut d = decompose_regions(&find_bridges(&f, &b).unwrap()).unwrap();
        color_regions(&mut d, 5).unwrap();
        let w = Couplings::constant(&t, 1.0);
        let s = SpinConfig::all_up(t.num_vertices());
        assert!(matches!(best_color_class_flip(&d, &w, &s), Err(Error::Contract(_))));
    }

    #[test]
    fn empty_bridge_set_flips_whole_window() {
        let (t, b) = window(5);
        let bs = find_bridges(&DualSubgraph::empty(t), &b).unwrap();
        let mut d = decompose_regions(&bs).unwrap();
        assert_eq!(d.num_regions, 1);
        color_regions(&mut d, 5).unwrap();
        let w = sample_couplings(&t, 3);
        let s = SpinConfig::uniform(t.num_vertices(), &mut stream(3, &[]));
        let out = best_color_class_flip(&d, &w, &s).unwrap();
        assert_eq!(out.classes.len(), 1);
        assert!((out.best_delta - 2.0 * out.boundary_signed).abs() < 1e-9);
    }

    #[test]
    fn behind_heights_of_a_single_arm() {
        let (t, b) = window(6);
        // Arm from the bottom ring up three steps.
        let arm: Vec<DualEdge> = (1..=3).map(|y| v_step(&t, 3, y)).collect();
        let f = DualSubgraph::from_edges(t, arm).unwrap();
        let report = count_encounter_points(&f, &b).unwrap();
        assert_eq!(report.kind_counts[&TreeKind::SingleArm], 1);
        let expect: BTreeMap<usize, usize> = (0..=3).map(|h| (h, 1)).collect();
        assert_eq!(report.behind_histogram, expect);
    }
}
