//! Finite pieces of the square lattice and its dual.
//!
//! Vertices are dense row-major ids `y * side + x`. On a torus of side `L` the
//! edge leaving vertex `v` to the east is `2v` and the one leaving it to the
//! north is `2v + 1`; plaquette `p` is the unit square whose lower-left corner
//! is vertex `p`. A dual edge carries the same index as the primal edge it
//! crosses, so the edge/dual-edge pairing is the identity on indices while the
//! orientation is swapped.
//!
//! A standalone [`BoxGeometry`] has free boundary and its own dense edge ids.
//! A box embedded in a host torus maps its local vertices onto host vertices,
//! which is what conditioning on an exterior needs.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualEdge(pub usize);

/// A unit square of the primal lattice, i.e. a vertex of the dual lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Plaquette(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl Orientation {
    pub fn swapped(self) -> Self {
        match self {
            Orientation::Horizontal => Orientation::Vertical,
            Orientation::Vertical => Orientation::Horizontal,
        }
    }
}

/// Position-independent name of an edge: the coordinates of its lower/left
/// endpoint and its orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EdgeKey {
    pub x: usize,
    pub y: usize,
    pub orientation: Orientation,
}

/// A dual edge in plaquette coordinates, from its lower (or left) plaquette to
/// its upper (or right) one. Plaquette `(a, b)` has lower-left corner `(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DualSegment {
    pub from: (i64, i64),
    pub to: (i64, i64),
}

/// Behaviour shared by tori and boxes.
pub trait Geometry {
    fn side(&self) -> usize;
    fn num_vertices(&self) -> usize;
    fn num_edges(&self) -> usize;

    /// Neighbors in E, N, W, S order, skipping any that do not exist.
    fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>>;
    fn edge_endpoints(&self, e: Edge) -> Result<(Vertex, Vertex)>;
    fn edge_key(&self, e: Edge) -> Result<EdgeKey>;
    fn edge_from_key(&self, key: EdgeKey) -> Option<Edge>;
    fn dual_segment(&self, d: DualEdge) -> Result<DualSegment>;

    /// Map an unwrapped lattice point to a vertex of this geometry.
    fn fold_point(&self, x: i64, y: i64) -> Option<Vertex>;

    /// Period used to turn unwrapped displacement into winding numbers.
    fn period(&self) -> Option<i64>;

    fn vertex_coords(&self, v: Vertex) -> Result<(usize, usize)> {
        if v.0 >= self.num_vertices() {
            return Err(Error::range("vertex", v.0, self.num_vertices()));
        }
        Ok((v.0 % self.side(), v.0 / self.side()))
    }

    fn vertex_at(&self, x: usize, y: usize) -> Result<Vertex> {
        let n = self.side();
        if x >= n || y >= n {
            return Err(Error::Validation(format!(
                "coordinates ({x}, {y}) outside side {n}"
            )));
        }
        Ok(Vertex(y * n + x))
    }

    fn edges(&self) -> std::iter::Map<std::ops::Range<usize>, fn(usize) -> Edge> {
        (0..self.num_edges()).map(Edge as fn(usize) -> Edge)
    }

    fn dual_edge(&self, e: Edge) -> Result<DualEdge> {
        if e.0 >= self.num_edges() {
            return Err(Error::range("edge", e.0, self.num_edges()));
        }
        Ok(DualEdge(e.0))
    }

    fn primal_edge(&self, d: DualEdge) -> Result<Edge> {
        if d.0 >= self.num_edges() {
            return Err(Error::range("dual edge", d.0, self.num_edges()));
        }
        Ok(Edge(d.0))
    }

    /// Orientation of the dual edge, which is the swap of its primal edge's.
    fn dual_orientation(&self, d: DualEdge) -> Result<Orientation> {
        Ok(self.edge_key(self.primal_edge(d)?)?.orientation.swapped())
    }

    /// Vertices of the finite region enclosed by a simple closed dual cycle,
    /// found by even-odd crossing counts along rays in the +x direction.
    fn cycle_interior(&self, cycle: &[DualEdge]) -> Result<Vec<Vertex>> {
        let walk = unwrap_dual_cycle(self, cycle)?;
        if let Some(period) = self.period() {
            let (dx, dy) = walk.displacement;
            if dx != 0 || dy != 0 {
                return Err(Error::NoInterior {
                    wx: dx / period,
                    wy: dy / period,
                });
            }
        }
        // A vertical dual segment from (a, b-1) to (a, b) crosses the primal
        // horizontal edge on row b at x = a + 1/2.
        let mut crossings: HashMap<i64, Vec<i64>> = HashMap::new();
        for seg in &walk.segments {
            if seg.from.0 == seg.to.0 {
                let (a, lo) = (seg.from.0, seg.from.1.min(seg.to.1));
                crossings.entry(lo + 1).or_default().push(a);
            }
        }
        let mut inside = BTreeSet::new();
        for (row, mut xs) in crossings {
            xs.sort_unstable();
            for pair in xs.chunks(2) {
                if let [left, right] = *pair {
                    for x in (left + 1)..=right {
                        let v = self.fold_point(x, row).ok_or_else(|| {
                            Error::Validation(format!("enclosed point ({x}, {row}) not in geometry"))
                        })?;
                        inside.insert(v);
                    }
                }
            }
        }
        Ok(inside.into_iter().collect())
    }
}

struct UnwrappedCycle {
    segments: Vec<DualSegment>,
    displacement: (i64, i64),
}

/// Walk a dual cycle given as an unordered edge list, checking it is simple and
/// closed, and lift it to the plane.
fn unwrap_dual_cycle<G: Geometry + ?Sized>(geom: &G, cycle: &[DualEdge]) -> Result<UnwrappedCycle> {
    if cycle.is_empty() {
        return Err(Error::Validation("empty dual cycle".into()));
    }
    let fold = |p: (i64, i64)| match geom.period() {
        Some(l) => (p.0.rem_euclid(l), p.1.rem_euclid(l)),
        None => p,
    };
    let mut seen = BTreeSet::new();
    let mut incidence: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut segs = Vec::with_capacity(cycle.len());
    for (i, &d) in cycle.iter().enumerate() {
        if !seen.insert(d) {
            return Err(Error::Validation(format!("dual edge {} repeated", d.0)));
        }
        let s = geom.dual_segment(d)?;
        incidence.entry(fold(s.from)).or_default().push(i);
        incidence.entry(fold(s.to)).or_default().push(i);
        segs.push(s);
    }
    if let Some((p, inc)) = incidence.iter().find(|(_, inc)| inc.len() != 2) {
        return Err(Error::Validation(format!(
            "dual vertex {:?} has degree {} in the cycle",
            p,
            inc.len()
        )));
    }

    let start = fold(segs[0].from);
    let mut pos = segs[0].from;
    let mut at = start;
    let mut used = vec![false; segs.len()];
    let mut out = Vec::with_capacity(segs.len());
    let mut prev = usize::MAX;
    for _ in 0..segs.len() {
        let next = incidence[&at]
            .iter()
            .copied()
            .find(|&i| !used[i] && i != prev)
            .ok_or_else(|| Error::Validation("dual edges do not form a single cycle".into()))?;
        used[next] = true;
        prev = next;
        let s = segs[next];
        let step = (s.to.0 - s.from.0, s.to.1 - s.from.1);
        let (from, to) = if fold(s.from) == at {
            (pos, (pos.0 + step.0, pos.1 + step.1))
        } else {
            (pos, (pos.0 - step.0, pos.1 - step.1))
        };
        out.push(DualSegment { from, to });
        pos = to;
        at = fold(pos);
    }
    if at != start || used.iter().any(|u| !u) {
        return Err(Error::Validation("dual edges do not form a single closed cycle".into()));
    }
    Ok(UnwrappedCycle {
        segments: out,
        displacement: (pos.0 - segs[0].from.0, pos.1 - segs[0].from.1),
    })
}

/// Periodic `L x L` lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusGeometry {
    side: usize,
}

impl TorusGeometry {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Validation("torus side must be positive".into()));
        }
        Ok(Self { side })
    }

    pub fn num_plaquettes(&self) -> usize {
        self.side * self.side
    }

    #[inline]
    fn wrap(&self, c: i64) -> usize {
        c.rem_euclid(self.side as i64) as usize
    }

    #[inline]
    pub fn at(&self, x: i64, y: i64) -> Vertex {
        Vertex(self.wrap(y) * self.side + self.wrap(x))
    }

    #[inline]
    pub fn coords(&self, v: Vertex) -> (usize, usize) {
        (v.0 % self.side, v.0 / self.side)
    }

    /// Unchecked neighbor table in E, N, W, S order.
    #[inline]
    pub fn neighbor_array(&self, v: Vertex) -> [Vertex; 4] {
        let (x, y) = self.coords(v);
        let (x, y) = (x as i64, y as i64);
        [
            self.at(x + 1, y),
            self.at(x, y + 1),
            self.at(x - 1, y),
            self.at(x, y - 1),
        ]
    }

    /// Edges at `v` in E, N, W, S order, matching [`Self::neighbor_array`].
    #[inline]
    pub fn incident_edges(&self, v: Vertex) -> [Edge; 4] {
        let (x, y) = self.coords(v);
        let (x, y) = (x as i64, y as i64);
        [
            Edge(2 * v.0),
            Edge(2 * v.0 + 1),
            Edge(2 * self.at(x - 1, y).0),
            Edge(2 * self.at(x, y - 1).0 + 1),
        ]
    }

    #[inline]
    pub fn endpoints(&self, e: Edge) -> (Vertex, Vertex) {
        let base = Vertex(e.0 / 2);
        let (x, y) = self.coords(base);
        let (x, y) = (x as i64, y as i64);
        if e.0 % 2 == 0 {
            (base, self.at(x + 1, y))
        } else {
            (base, self.at(x, y + 1))
        }
    }

    pub fn edge(&self, v: Vertex, orientation: Orientation) -> Edge {
        match orientation {
            Orientation::Horizontal => Edge(2 * v.0),
            Orientation::Vertical => Edge(2 * v.0 + 1),
        }
    }

    #[inline]
    pub fn plaquette_at(&self, x: i64, y: i64) -> Plaquette {
        Plaquette(self.at(x, y).0)
    }

    pub fn plaquette_coords(&self, p: Plaquette) -> (usize, usize) {
        (p.0 % self.side, p.0 / self.side)
    }

    /// The four edges bounding plaquette `p`: bottom, right, top, left.
    pub fn plaquette_edges(&self, p: Plaquette) -> Result<[Edge; 4]> {
        if p.0 >= self.num_plaquettes() {
            return Err(Error::range("plaquette", p.0, self.num_plaquettes()));
        }
        Ok(self.plaquette_edges_unchecked(p))
    }

    #[inline]
    pub fn plaquette_edges_unchecked(&self, p: Plaquette) -> [Edge; 4] {
        let (x, y) = self.plaquette_coords(p);
        let (x, y) = (x as i64, y as i64);
        [
            Edge(2 * self.at(x, y).0),
            Edge(2 * self.at(x + 1, y).0 + 1),
            Edge(2 * self.at(x, y + 1).0),
            Edge(2 * self.at(x, y).0 + 1),
        ]
    }

    /// Endpoints of a dual edge: lower then upper plaquette for duals of
    /// horizontal edges, left then right for duals of vertical edges.
    #[inline]
    pub fn dual_endpoints(&self, d: DualEdge) -> (Plaquette, Plaquette) {
        let (x, y) = self.coords(Vertex(d.0 / 2));
        let (x, y) = (x as i64, y as i64);
        if d.0 % 2 == 0 {
            (self.plaquette_at(x, y - 1), self.plaquette_at(x, y))
        } else {
            (self.plaquette_at(x - 1, y), self.plaquette_at(x, y))
        }
    }

    /// Dual neighbors of a plaquette with the connecting dual edge, in E, N, W, S order.
    #[inline]
    pub fn dual_neighbors(&self, p: Plaquette) -> [(Plaquette, DualEdge); 4] {
        let (x, y) = self.plaquette_coords(p);
        let (x, y) = (x as i64, y as i64);
        let [bottom, right, top, left] = self.plaquette_edges_unchecked(p);
        [
            (self.plaquette_at(x + 1, y), DualEdge(right.0)),
            (self.plaquette_at(x, y + 1), DualEdge(top.0)),
            (self.plaquette_at(x - 1, y), DualEdge(left.0)),
            (self.plaquette_at(x, y - 1), DualEdge(bottom.0)),
        ]
    }
}

impl Geometry for TorusGeometry {
    fn side(&self) -> usize {
        self.side
    }

    fn num_vertices(&self) -> usize {
        self.side * self.side
    }

    fn num_edges(&self) -> usize {
        2 * self.side * self.side
    }

    fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>> {
        self.vertex_coords(v)?;
        Ok(self.neighbor_array(v).to_vec())
    }

    fn edge_endpoints(&self, e: Edge) -> Result<(Vertex, Vertex)> {
        if e.0 >= self.num_edges() {
            return Err(Error::range("edge", e.0, self.num_edges()));
        }
        Ok(self.endpoints(e))
    }

    fn edge_key(&self, e: Edge) -> Result<EdgeKey> {
        if e.0 >= self.num_edges() {
            return Err(Error::range("edge", e.0, self.num_edges()));
        }
        let (x, y) = self.coords(Vertex(e.0 / 2));
        let orientation = if e.0 % 2 == 0 {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        };
        Ok(EdgeKey { x, y, orientation })
    }

    fn edge_from_key(&self, key: EdgeKey) -> Option<Edge> {
        if key.x >= self.side || key.y >= self.side {
            return None;
        }
        Some(self.edge(Vertex(key.y * self.side + key.x), key.orientation))
    }

    fn dual_segment(&self, d: DualEdge) -> Result<DualSegment> {
        let key = self.edge_key(self.primal_edge(d)?)?;
        Ok(segment_for(key))
    }

    fn fold_point(&self, x: i64, y: i64) -> Option<Vertex> {
        Some(self.at(x, y))
    }

    fn period(&self) -> Option<i64> {
        Some(self.side as i64)
    }
}

fn segment_for(key: EdgeKey) -> DualSegment {
    let (x, y) = (key.x as i64, key.y as i64);
    match key.orientation {
        Orientation::Horizontal => DualSegment {
            from: (x, y - 1),
            to: (x, y),
        },
        Orientation::Vertical => DualSegment {
            from: (x - 1, y),
            to: (x, y),
        },
    }
}

/// Placement of a box inside a host torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxHost {
    pub torus: TorusGeometry,
    /// Host coordinates of the box's local vertex (0, 0).
    pub anchor: (usize, usize),
}

/// The box `[N]^2`, standalone (free boundary) or embedded in a host torus.
///
/// Local edge ids are dense: horizontal edges first (`y * (N-1) + x`), then
/// vertical ones (`N(N-1) + y * N + x`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxGeometry {
    side: usize,
    host: Option<BoxHost>,
}

impl BoxGeometry {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::Validation("box side must be positive".into()));
        }
        Ok(Self { side, host: None })
    }

    /// Embed `[N]^2` in `torus` with local (0, 0) at `anchor`. Requires
    /// `L >= N + 2` so the box and its exterior boundary do not overlap.
    pub fn in_host(torus: TorusGeometry, side: usize, anchor: (usize, usize)) -> Result<Self> {
        if side == 0 {
            return Err(Error::Validation("box side must be positive".into()));
        }
        if torus.side() < side + 2 {
            return Err(Error::Validation(format!(
                "box of side {side} needs a host torus of side >= {}, got {}",
                side + 2,
                torus.side()
            )));
        }
        Ok(Self {
            side,
            host: Some(BoxHost {
                torus,
                anchor: (anchor.0 % torus.side(), anchor.1 % torus.side()),
            }),
        })
    }

    pub fn host(&self) -> Option<&BoxHost> {
        self.host.as_ref()
    }

    fn require_host(&self) -> Result<&BoxHost> {
        self.host
            .as_ref()
            .ok_or_else(|| Error::Contract("box has no host torus".into()))
    }

    fn horizontal_count(&self) -> usize {
        self.side * (self.side - 1)
    }

    /// Vertices with a lattice neighbor outside the box.
    pub fn is_boundary(&self, v: Vertex) -> Result<bool> {
        let (x, y) = self.vertex_coords(v)?;
        let m = self.side - 1;
        Ok(x == 0 || y == 0 || x == m || y == m)
    }

    pub fn host_vertex(&self, v: Vertex) -> Result<Vertex> {
        let host = self.require_host()?;
        let (x, y) = self.vertex_coords(v)?;
        Ok(host
            .torus
            .at((host.anchor.0 + x) as i64, (host.anchor.1 + y) as i64))
    }

    /// Host ids of the box's vertices in local id order.
    pub fn host_vertices(&self) -> Result<Vec<Vertex>> {
        (0..self.num_vertices())
            .map(|i| self.host_vertex(Vertex(i)))
            .collect()
    }

    /// Whether a host vertex lies in the box.
    pub fn contains_host(&self, v: Vertex) -> Result<bool> {
        Ok(self.local_of_host(v)?.is_some())
    }

    pub fn local_of_host(&self, v: Vertex) -> Result<Option<Vertex>> {
        let host = self.require_host()?;
        let l = host.torus.side();
        if v.0 >= host.torus.num_vertices() {
            return Err(Error::range("vertex", v.0, host.torus.num_vertices()));
        }
        let (hx, hy) = host.torus.coords(v);
        let dx = (hx + l - host.anchor.0) % l;
        let dy = (hy + l - host.anchor.1) % l;
        Ok((dx < self.side && dy < self.side).then(|| Vertex(dy * self.side + dx)))
    }

    /// Host vertices outside the box with a neighbor inside it, sorted.
    pub fn exterior_boundary(&self) -> Result<Vec<Vertex>> {
        let host = self.require_host()?;
        let mut out = BTreeSet::new();
        for hv in self.host_vertices()? {
            for u in host.torus.neighbor_array(hv) {
                if !self.contains_host(u)? {
                    out.insert(u);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Host edges with one endpoint in the box and the other outside.
    pub fn boundary_edges(&self) -> Result<Vec<Edge>> {
        let host = self.require_host()?;
        let mut out = BTreeSet::new();
        for hv in self.host_vertices()? {
            for (u, e) in host
                .torus
                .neighbor_array(hv)
                .into_iter()
                .zip(host.torus.incident_edges(hv))
            {
                if !self.contains_host(u)? {
                    out.insert(e);
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    /// Host edges with both endpoints in the box.
    pub fn interior_edges(&self) -> Result<Vec<Edge>> {
        let host = self.require_host()?;
        let mut out = Vec::with_capacity(2 * self.side * (self.side - 1));
        for hv in self.host_vertices()? {
            let [east, north, _, _] = host.torus.neighbor_array(hv);
            let [e_east, e_north, _, _] = host.torus.incident_edges(hv);
            if self.contains_host(east)? {
                out.push(e_east);
            }
            if self.contains_host(north)? {
                out.push(e_north);
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

impl Geometry for BoxGeometry {
    fn side(&self) -> usize {
        self.side
    }

    fn num_vertices(&self) -> usize {
        self.side * self.side
    }

    fn num_edges(&self) -> usize {
        2 * self.side * (self.side - 1)
    }

    fn neighbors(&self, v: Vertex) -> Result<Vec<Vertex>> {
        let (x, y) = self.vertex_coords(v)?;
        let n = self.side;
        let mut out = Vec::with_capacity(4);
        if x + 1 < n {
            out.push(Vertex(v.0 + 1));
        }
        if y + 1 < n {
            out.push(Vertex(v.0 + n));
        }
        if x > 0 {
            out.push(Vertex(v.0 - 1));
        }
        if y > 0 {
            out.push(Vertex(v.0 - n));
        }
        Ok(out)
    }

    fn edge_endpoints(&self, e: Edge) -> Result<(Vertex, Vertex)> {
        let key = self.edge_key(e)?;
        let a = Vertex(key.y * self.side + key.x);
        let b = match key.orientation {
            Orientation::Horizontal => Vertex(a.0 + 1),
            Orientation::Vertical => Vertex(a.0 + self.side),
        };
        Ok((a, b))
    }

    fn edge_key(&self, e: Edge) -> Result<EdgeKey> {
        if e.0 >= self.num_edges() {
            return Err(Error::range("edge", e.0, self.num_edges()));
        }
        let h = self.horizontal_count();
        Ok(if e.0 < h {
            let w = self.side - 1;
            EdgeKey {
                x: e.0 % w,
                y: e.0 / w,
                orientation: Orientation::Horizontal,
            }
        } else {
            let i = e.0 - h;
            EdgeKey {
                x: i % self.side,
                y: i / self.side,
                orientation: Orientation::Vertical,
            }
        })
    }

    fn edge_from_key(&self, key: EdgeKey) -> Option<Edge> {
        let n = self.side;
        match key.orientation {
            Orientation::Horizontal if key.x + 1 < n && key.y < n => {
                Some(Edge(key.y * (n - 1) + key.x))
            }
            Orientation::Vertical if key.x < n && key.y + 1 < n => {
                Some(Edge(self.horizontal_count() + key.y * n + key.x))
            }
            _ => None,
        }
    }

    fn dual_segment(&self, d: DualEdge) -> Result<DualSegment> {
        let key = self.edge_key(self.primal_edge(d)?)?;
        Ok(segment_for(key))
    }

    fn fold_point(&self, x: i64, y: i64) -> Option<Vertex> {
        let n = self.side as i64;
        if (0..n).contains(&x) && (0..n).contains(&y) {
            Some(Vertex((y * n + x) as usize))
        } else {
            None
        }
    }

    fn period(&self) -> Option<i64> {
        None
    }
}
