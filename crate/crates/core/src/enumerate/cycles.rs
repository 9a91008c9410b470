//! Simple cycles: through a fixed dual vertex of a torus, and all simple cycles
//! of a finite graph.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::lattice::{DualEdge, Geometry, Plaquette, TorusGeometry};

pub const MAX_CYCLE_LENGTH: usize = 16;

/// Default cap on the number of simple cycles of a finite graph.
pub const MAX_SIMPLE_CYCLES: usize = 1_000_000;

/// A simple dual cycle: `plaquettes[i]` and `plaquettes[i + 1]` (cyclically)
/// are joined by `edges[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DualCycle {
    pub plaquettes: Vec<Plaquette>,
    pub edges: Vec<DualEdge>,
}

impl DualCycle {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn sorted_edges(&self) -> Vec<DualEdge> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }
}

fn torus_distance(torus: &TorusGeometry, a: Plaquette, b: Plaquette) -> usize {
    let l = torus.side();
    let (ax, ay) = torus.plaquette_coords(a);
    let (bx, by) = torus.plaquette_coords(b);
    let d = |p: usize, q: usize| {
        let t = p.abs_diff(q);
        t.min(l - t)
    };
    d(ax, bx) + d(ay, by)
}

/// All simple dual cycles through `x` of length at most `len_max`, each
/// reported once regardless of starting point and direction. Traversals start
/// and end at `x`; of the two directions the one whose first edge id is smaller
/// than its last is kept.
pub fn enumerate_cycles_through(
    torus: &TorusGeometry,
    x: Plaquette,
    len_max: usize,
) -> Result<Vec<DualCycle>> {
    if len_max > MAX_CYCLE_LENGTH {
        return Err(Error::Size {
            what: "cycle length",
            requested: len_max,
            cap: MAX_CYCLE_LENGTH,
        });
    }
    if x.0 >= torus.num_plaquettes() {
        return Err(Error::range("plaquette", x.0, torus.num_plaquettes()));
    }
    let mut out = Vec::new();
    let mut on_path = vec![false; torus.num_plaquettes()];
    let mut path = vec![x];
    let mut edges = Vec::new();
    on_path[x.0] = true;
    extend_through(torus, x, len_max, &mut on_path, &mut path, &mut edges, &mut out);
    Ok(out)
}

fn extend_through(
    torus: &TorusGeometry,
    x: Plaquette,
    len_max: usize,
    on_path: &mut [bool],
    path: &mut Vec<Plaquette>,
    edges: &mut Vec<DualEdge>,
    out: &mut Vec<DualCycle>,
) {
    let here = *path.last().expect("path starts at x");
    for (next, d) in torus.dual_neighbors(here) {
        if edges.contains(&d) {
            continue;
        }
        if next == x {
            let len = edges.len() + 1;
            if len >= 2 && len <= len_max && edges[0] < d {
                let mut cyc = edges.clone();
                cyc.push(d);
                out.push(DualCycle {
                    plaquettes: path.clone(),
                    edges: cyc,
                });
            }
            continue;
        }
        if on_path[next.0] {
            continue;
        }
        // One step to `next` and at least its distance back to x.
        if edges.len() + 1 + torus_distance(torus, next, x) > len_max {
            continue;
        }
        on_path[next.0] = true;
        path.push(next);
        edges.push(d);
        extend_through(torus, x, len_max, on_path, path, edges, out);
        edges.pop();
        path.pop();
        on_path[next.0] = false;
    }
}

/// Counts of simple cycles through the origin of Z^2 by length, computed on a
/// torus wide enough that no wrapping cycle is that short.
pub fn count_plane_cycles_through_origin(len_max: usize) -> Result<BTreeMap<usize, u64>> {
    let torus = TorusGeometry::new(len_max + 1)?;
    let cycles = enumerate_cycles_through(&torus, Plaquette(0), len_max)?;
    let mut counts: BTreeMap<usize, u64> = (1..=len_max).map(|n| (n, 0)).collect();
    for c in cycles {
        *counts.entry(c.len()).or_default() += 1;
    }
    Ok(counts)
}

/// A finite multigraph on compact vertex indices whose edges carry an external id.
#[derive(Clone, Debug, Default)]
pub struct EdgeGraph {
    adjacency: Vec<Vec<(usize, usize)>>,
    endpoints: Vec<(usize, usize)>,
}

impl EdgeGraph {
    pub fn new(num_vertices: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); num_vertices],
            endpoints: Vec::new(),
        }
    }

    /// Add an edge and return its index.
    pub fn add_edge(&mut self, u: usize, v: usize) -> usize {
        let id = self.endpoints.len();
        self.endpoints.push((u, v));
        self.adjacency[u].push((v, id));
        if u != v {
            self.adjacency[v].push((u, id));
        }
        id
    }

    pub fn num_vertices(&self) -> usize {
        self.adjacency.len()
    }

    pub fn num_edges(&self) -> usize {
        self.endpoints.len()
    }

    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        self.endpoints[e]
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    /// Edges that survive repeatedly deleting degree-1 vertices; every cycle
    /// lies in this 2-core.
    pub fn two_core_edges(&self) -> Vec<bool> {
        let mut alive = vec![true; self.num_edges()];
        let mut degree: Vec<usize> = self
            .adjacency
            .iter()
            .enumerate()
            .map(|(v, adj)| adj.iter().map(|&(u, _)| if u == v { 2 } else { 1 }).sum())
            .collect();
        let mut stack: Vec<usize> = (0..self.num_vertices()).filter(|&v| degree[v] == 1).collect();
        while let Some(v) = stack.pop() {
            if degree[v] != 1 {
                continue;
            }
            if let Some(&(u, e)) = self.adjacency[v].iter().find(|&&(_, e)| alive[e]) {
                alive[e] = false;
                degree[v] = 0;
                degree[u] -= 1;
                if degree[u] == 1 {
                    stack.push(u);
                }
            }
        }
        alive
    }
}

/// Every simple cycle of `g` as a list of edge indices in traversal order.
/// Self-loops count as cycles of length 1 and parallel edges as cycles of
/// length 2. Fails once more than `cap` cycles have been found.
pub fn simple_cycles(g: &EdgeGraph, cap: usize) -> Result<Vec<Vec<usize>>> {
    let alive = g.two_core_edges();
    let mut out = Vec::new();
    let n = g.num_vertices();
    let mut on_path = vec![false; n];
    let mut path_edges = Vec::new();
    for start in 0..n {
        if !g.neighbors(start).iter().any(|&(_, e)| alive[e]) {
            continue;
        }
        on_path[start] = true;
        cycles_from(
            g,
            &alive,
            start,
            start,
            &mut on_path,
            &mut path_edges,
            &mut out,
            cap,
        )?;
        on_path[start] = false;
    }
    Ok(out)
}

/// Cycles whose smallest vertex is `start`.
#[allow(clippy::too_many_arguments)]
fn cycles_from(
    g: &EdgeGraph,
    alive: &[bool],
    start: usize,
    here: usize,
    on_path: &mut [bool],
    path_edges: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<()> {
    for &(next, e) in g.neighbors(here) {
        if !alive[e] || path_edges.contains(&e) {
            continue;
        }
        if next == start {
            let closes = match path_edges.first() {
                None => g.endpoints(e).0 == g.endpoints(e).1,
                Some(&first) => first < e,
            };
            if closes {
                let mut cyc = path_edges.clone();
                cyc.push(e);
                out.push(cyc);
                if out.len() > cap {
                    return Err(Error::Size {
                        what: "simple cycle count",
                        requested: out.len(),
                        cap,
                    });
                }
            }
            continue;
        }
        if next < start || on_path[next] {
            continue;
        }
        on_path[next] = true;
        path_edges.push(e);
        cycles_from(g, alive, start, next, on_path, path_edges, out, cap)?;
        path_edges.pop();
        on_path[next] = false;
    }
    Ok(())
}

/// Compact a set of dual edges of a torus into an [`EdgeGraph`]. Returns the
/// graph, the plaquette behind each vertex index and the dual edge behind each
/// edge index.
pub fn dual_edge_graph(
    torus: &TorusGeometry,
    edges: impl IntoIterator<Item = DualEdge>,
) -> (EdgeGraph, Vec<Plaquette>, Vec<DualEdge>) {
    let mut index: HashMap<Plaquette, usize> = HashMap::new();
    let mut plaquettes = Vec::new();
    let mut pairs = Vec::new();
    let mut ids = Vec::new();
    for d in edges {
        let (a, b) = torus.dual_endpoints(d);
        let mut idx = |p: Plaquette| {
            *index.entry(p).or_insert_with(|| {
                plaquettes.push(p);
                plaquettes.len() - 1
            })
        };
        let (ia, ib) = (idx(a), idx(b));
        pairs.push((ia, ib));
        ids.push(d);
    }
    let mut g = EdgeGraph::new(plaquettes.len());
    for (a, b) in pairs {
        g.add_edge(a, b);
    }
    (g, plaquettes, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Independent enumerator: all closed walks from x of length <= n that
    /// never revisit a vertex before closing, canonicalised by edge set.
    fn oracle_cycle_sets(torus: &TorusGeometry, x: Plaquette, n: usize) -> HashSet<Vec<DualEdge>> {
        let mut found = HashSet::new();
        let mut stack = vec![(x, vec![x], Vec::<DualEdge>::new())];
        while let Some((here, verts, es)) = stack.pop() {
            for (next, d) in torus.dual_neighbors(here) {
                if es.contains(&d) {
                    continue;
                }
                if next == x && es.len() + 1 >= 2 {
                    let mut set = es.clone();
                    set.push(d);
                    set.sort();
                    found.insert(set);
                } else if !verts.contains(&next) && es.len() + 1 < n {
                    let mut v2 = verts.clone();
                    v2.push(next);
                    let mut e2 = es.clone();
                    e2.push(d);
                    stack.push((next, v2, e2));
                }
            }
        }
        found
    }

    #[test]
    fn short_cycles_through_a_vertex() {
        let t = TorusGeometry::new(10).unwrap();
        let x = t.plaquette_at(4, 4);
        assert!(enumerate_cycles_through(&t, x, 3).unwrap().is_empty());
        let four = enumerate_cycles_through(&t, x, 4).unwrap();
        assert_eq!(four.len(), 4);
        assert!(four.iter().all(|c| c.len() == 4));
    }

    #[test]
    fn six_cycles_match_oracle() {
        let t = TorusGeometry::new(10).unwrap();
        let x = t.plaquette_at(2, 7);
        let got = enumerate_cycles_through(&t, x, 6).unwrap();
        let got_sets: HashSet<_> = got.iter().map(DualCycle::sorted_edges).collect();
        assert_eq!(got_sets.len(), got.len(), "duplicates reported");
        assert_eq!(got_sets, oracle_cycle_sets(&t, x, 6));
        // 4 unit squares and 2 * 6 dominoes touching x, each containing x on
        // its boundary.
        assert_eq!(got.len(), 4 + 12);
    }

    #[test]
    fn reported_cycles_are_simple_and_closed() {
        let t = TorusGeometry::new(12).unwrap();
        let x = t.plaquette_at(0, 0);
        for c in enumerate_cycles_through(&t, x, 10).unwrap() {
            let distinct: HashSet<_> = c.plaquettes.iter().collect();
            assert_eq!(distinct.len(), c.len());
            assert_eq!(c.plaquettes[0], x);
            for (i, d) in c.edges.iter().enumerate() {
                let (a, b) = t.dual_endpoints(*d);
                let p = c.plaquettes[i];
                let q = c.plaquettes[(i + 1) % c.len()];
                assert!((a, b) == (p, q) || (a, b) == (q, p));
            }
        }
    }

    #[test]
    fn length_cap() {
        let t = TorusGeometry::new(10).unwrap();
        assert!(matches!(
            enumerate_cycles_through(&t, Plaquette(0), 17),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn plane_cycle_counts() {
        let c = count_plane_cycles_through_origin(8).unwrap();
        assert_eq!(c[&4], 4);
        assert_eq!(c[&6], 12);
        assert_eq!(c[&5], 0);
        let t = TorusGeometry::new(9).unwrap();
        let oracle_eights = oracle_cycle_sets(&t, Plaquette(0), 8)
            .iter()
            .filter(|s| s.len() == 8)
            .count();
        assert_eq!(c[&8] as usize, oracle_eights);
    }

    #[test]
    fn two_squares_sharing_an_edge() {
        // Vertices 0..6 on a 2x3 grid: two unit squares sharing edge 1-4.
        let mut g = EdgeGraph::new(6);
        for (a, b) in [(0, 1), (1, 2), (3, 4), (4, 5), (0, 3), (1, 4), (2, 5)] {
            g.add_edge(a, b);
        }
        let cycles = simple_cycles(&g, 100).unwrap();
        let mut lens: Vec<_> = cycles.iter().map(Vec::len).collect();
        lens.sort();
        assert_eq!(lens, vec![4, 4, 6]);
    }

    #[test]
    fn trees_have_no_cycles_and_cap_is_enforced() {
        let mut g = EdgeGraph::new(4);
        g.add_edge(0, 1);
        g.add_edge(1, 2);
        g.add_edge(1, 3);
        assert!(simple_cycles(&g, 10).unwrap().is_empty());
        assert!(g.two_core_edges().iter().all(|a| !a));

        // K4 has 7 simple cycles.
        let mut k4 = EdgeGraph::new(4);
        for a in 0..4 {
            for b in a + 1..4 {
                k4.add_edge(a, b);
            }
        }
        assert_eq!(simple_cycles(&k4, 100).unwrap().len(), 7);
        assert!(matches!(simple_cycles(&k4, 5), Err(Error::Size { .. })));
    }

    #[test]
    fn parallel_edges_and_loops() {
        let mut g = EdgeGraph::new(2);
        g.add_edge(0, 1);
        g.add_edge(0, 1);
        g.add_edge(1, 1);
        let mut lens: Vec<_> = simple_cycles(&g, 10).unwrap().iter().map(Vec::len).collect();
        lens.sort();
        assert_eq!(lens, vec![1, 2]);
    }
}
