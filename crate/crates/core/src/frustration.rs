//! Unsatisfied dual edges, frustrated plaquettes and cluster statistics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::disorder::Couplings;
use crate::error::{Error, Result};
use crate::gibbs::SpinConfig;
use crate::lattice::{DualEdge, Edge, Geometry, Plaquette, TorusGeometry};

/// A set of dual edges of a torus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualSubgraph {
    torus: TorusGeometry,
    members: Vec<bool>,
    len: usize,
}

impl DualSubgraph {
    pub fn empty(torus: TorusGeometry) -> Self {
        Self {
            members: vec![false; torus.num_edges()],
            torus,
            len: 0,
        }
    }

    pub fn from_edges(torus: TorusGeometry, edges: impl IntoIterator<Item = DualEdge>) -> Result<Self> {
        let mut g = Self::empty(torus);
        for d in edges {
            g.insert(d)?;
        }
        Ok(g)
    }

    pub fn torus(&self) -> &TorusGeometry {
        &self.torus
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, d: DualEdge) -> bool {
        self.members.get(d.0).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, d: DualEdge) -> Result<bool> {
        let n = self.members.len();
        let slot = self.members.get_mut(d.0).ok_or_else(|| Error::range("dual edge", d.0, n))?;
        let fresh = !*slot;
        *slot = true;
        self.len += usize::from(fresh);
        Ok(fresh)
    }

    pub fn remove(&mut self, d: DualEdge) -> Result<bool> {
        let n = self.members.len();
        let slot = self.members.get_mut(d.0).ok_or_else(|| Error::range("dual edge", d.0, n))?;
        let was = *slot;
        *slot = false;
        self.len -= usize::from(was);
        Ok(was)
    }

    pub fn edges(&self) -> impl Iterator<Item = DualEdge> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| DualEdge(i))
    }

    pub fn membership(&self) -> &[bool] {
        &self.members
    }

    /// Number of member dual edges at a dual vertex (a self-loop counts twice).
    pub fn degree(&self, p: Plaquette) -> usize {
        self.torus
            .dual_neighbors(p)
            .iter()
            .filter(|(_, d)| self.contains(*d))
            .count()
    }

    pub fn is_subset_of(&self, other: &DualSubgraph) -> bool {
        self.members.len() == other.members.len()
            && self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }
}

/// `e*` is in the set iff `w_e σ_x σ_y < 0`.
pub fn unsatisfied_set(w: &Couplings, sigma: &SpinConfig) -> Result<DualSubgraph> {
    let torus = w.torus()?;
    sigma.check_len(torus.num_vertices())?;
    let members: Vec<bool> = (0..torus.num_edges())
        .map(|e| {
            let (a, b) = torus.endpoints(Edge(e));
            w.weight(Edge(e)) * f64::from(sigma.get(a) * sigma.get(b)) < 0.0
        })
        .collect();
    let len = members.iter().filter(|&&m| m).count();
    Ok(DualSubgraph { torus, members, len })
}

/// Whether the product of the four couplings around `p` is negative.
pub fn plaquette_frustrated(w: &Couplings, p: Plaquette) -> Result<bool> {
    let torus = w.torus()?;
    let edges = torus.plaquette_edges(p)?;
    let negatives = edges.iter().filter(|&&e| w.weight(e) < 0.0).count();
    let zero = edges.iter().any(|&e| w.weight(e) == 0.0);
    Ok(!zero && negatives % 2 == 1)
}

/// Plaquettes where the parity of unsatisfied incident dual edges disagrees
/// with frustration. Zero for every input.
pub fn parity_violations(w: &Couplings, sigma: &SpinConfig) -> Result<usize> {
    let g = unsatisfied_set(w, sigma)?;
    let mut bad = 0;
    for p in 0..g.torus().num_plaquettes() {
        let p = Plaquette(p);
        bad += usize::from((g.degree(p) % 2 == 1) != plaquette_frustrated(w, p)?);
    }
    Ok(bad)
}

pub fn frustrated_fraction(w: &Couplings) -> Result<f64> {
    let torus = w.torus()?;
    let n = torus.num_plaquettes();
    let mut count = 0;
    for p in 0..n {
        count += usize::from(plaquette_frustrated(w, Plaquette(p))?);
    }
    Ok(count as f64 / n as f64)
}

/// Union-find with path compression (halving) and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Clusters of a [`DualSubgraph`]. Only dual vertices touched by a member edge
/// are labeled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    /// Component index per plaquette, `None` for untouched plaquettes.
    pub labels: Vec<Option<usize>>,
    /// Dual vertices per component.
    pub vertex_sizes: Vec<usize>,
    /// Dual edges per component.
    pub edge_sizes: Vec<usize>,
    /// Size in dual vertices -> number of components.
    pub vertex_histogram: BTreeMap<usize, usize>,
    /// Size in dual edges -> number of components.
    pub edge_histogram: BTreeMap<usize, usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.vertex_sizes.len()
    }

    pub fn largest_vertices(&self) -> usize {
        self.vertex_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn largest_edges(&self) -> usize {
        self.edge_sizes.iter().copied().max().unwrap_or(0)
    }

    pub fn same_component(&self, a: Plaquette, b: Plaquette) -> bool {
        match (self.labels[a.0], self.labels[b.0]) {
            (Some(x), Some(y)) => x == y,
            _ => a == b,
        }
    }
}

/// Label the clusters of `g` by union-find. Components are numbered in order
/// of their smallest plaquette.
pub fn components(g: &DualSubgraph) -> Components {
    let torus = g.torus();
    let n = torus.num_plaquettes();
    let mut uf = UnionFind::new(n);
    let mut touched = vec![false; n];
    for d in g.edges() {
        let (a, b) = torus.dual_endpoints(d);
        touched[a.0] = true;
        touched[b.0] = true;
        uf.union(a.0, b.0);
    }
    let mut index = vec![usize::MAX; n];
    let mut labels = vec![None; n];
    let mut vertex_sizes = Vec::new();
    for p in 0..n {
        if !touched[p] {
            continue;
        }
        let r = uf.find(p);
        if index[r] == usize::MAX {
            index[r] = vertex_sizes.len();
            vertex_sizes.push(0);
        }
        labels[p] = Some(index[r]);
        vertex_sizes[index[r]] += 1;
    }
    let mut edge_sizes = vec![0; vertex_sizes.len()];
    for d in g.edges() {
        let (a, _) = torus.dual_endpoints(d);
        edge_sizes[labels[a.0].expect("endpoint labeled")] += 1;
    }
    let histogram = |sizes: &[usize]| {
        let mut h = BTreeMap::new();
        for &s in sizes {
            *h.entry(s).or_insert(0) += 1;
        }
        h
    };
    Components {
        vertex_histogram: histogram(&vertex_sizes),
        edge_histogram: histogram(&edge_sizes),
        labels,
        vertex_sizes,
        edge_sizes,
    }
}
