//! Lattice animals: connected vertex sets and connected edge sets of Z^2 that
//! contain the origin.
//!
//! Two enumerators are provided. [`for_each_connected_set`] is Redelmeier's
//! untried-set recursion on an arbitrary graph, which reaches every connected
//! set containing a root exactly once without storing anything. [`count_by_growth`]
//! grows sets one cell at a time level by level and deduplicates by the sorted
//! cell set; it is slower and memory hungry but shares no logic with the first.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Visit every connected set of at most `max_size` cells that contains `root`
/// and no cell for which `excluded` holds. Each set is visited exactly once, as
/// a slice in insertion order.
///
/// `num_cells` bounds the cell ids; `neighbors` appends the neighbors of a cell.
pub fn for_each_connected_set<N, X, F>(
    num_cells: usize,
    root: usize,
    max_size: usize,
    mut neighbors: N,
    excluded: X,
    mut visit: F,
) where
    N: FnMut(usize, &mut Vec<usize>),
    X: Fn(usize) -> bool,
    F: FnMut(&[usize]),
{
    if max_size == 0 || excluded(root) {
        return;
    }
    let mut seen = vec![false; num_cells];
    seen[root] = true;
    let mut current = Vec::with_capacity(max_size);
    let mut scratch = Vec::with_capacity(8);
    redelmeier(
        vec![root],
        &mut current,
        &mut seen,
        max_size,
        &mut neighbors,
        &excluded,
        &mut visit,
        &mut scratch,
    );
}

#[allow(clippy::too_many_arguments)]
fn redelmeier<N, X, F>(
    mut untried: Vec<usize>,
    current: &mut Vec<usize>,
    seen: &mut [bool],
    max_size: usize,
    neighbors: &mut N,
    excluded: &X,
    visit: &mut F,
    scratch: &mut Vec<usize>,
) where
    N: FnMut(usize, &mut Vec<usize>),
    X: Fn(usize) -> bool,
    F: FnMut(&[usize]),
{
    while let Some(cell) = untried.pop() {
        current.push(cell);
        visit(current);
        if current.len() < max_size {
            let mut next = untried.clone();
            let mark = next.len();
            scratch.clear();
            neighbors(cell, scratch);
            for &nb in scratch.iter() {
                if !seen[nb] && !excluded(nb) {
                    seen[nb] = true;
                    next.push(nb);
                }
            }
            let added: Vec<usize> = next[mark..].to_vec();
            redelmeier(next, current, seen, max_size, neighbors, excluded, visit, scratch);
            for nb in added {
                seen[nb] = false;
            }
        }
        current.pop();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnimalMode {
    /// Connected vertex sets containing the origin, sized by vertex count.
    VertexAnimals,
    /// Connected edge sets with the origin as an endpoint, sized by edge count.
    EdgeAnimals,
    /// Simple cycles through the origin, sized by length.
    SimpleCyclesThroughOrigin,
}

impl AnimalMode {
    pub fn label(&self) -> &'static str {
        match self {
            AnimalMode::VertexAnimals => "vertex",
            AnimalMode::EdgeAnimals => "edge",
            AnimalMode::SimpleCyclesThroughOrigin => "cycles",
        }
    }
}

impl std::str::FromStr for AnimalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertex" | "vertex-animals" => Ok(AnimalMode::VertexAnimals),
            "edge" | "edge-animals" => Ok(AnimalMode::EdgeAnimals),
            "cycles" | "simple-cycles-through-origin" => Ok(AnimalMode::SimpleCyclesThroughOrigin),
            other => Err(Error::Validation(format!("unknown enumeration mode {other:?}"))),
        }
    }
}

/// Exact counts by size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable {
    pub mode: AnimalMode,
    pub counts: BTreeMap<usize, u64>,
}

/// Base of the exponential upper bound on the number of connected subgraphs
/// of a given size containing the origin.
pub const GROWTH_BOUND: u64 = 32;

pub const MAX_ANIMAL_SIZE: usize = 12;
pub const MAX_EDGE_ANIMAL_SIZE: usize = 10;

/// A square window of Z^2 centred on the origin, large enough to hold every
/// animal of the requested size.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Window {
    radius: i64,
}

impl Window {
    pub(crate) fn new(radius: usize) -> Self {
        Self {
            radius: radius as i64,
        }
    }

    pub(crate) fn width(&self) -> i64 {
        2 * self.radius + 1
    }

    pub(crate) fn num_points(&self) -> usize {
        (self.width() * self.width()) as usize
    }

    pub(crate) fn origin(&self) -> usize {
        self.point(0, 0).expect("origin inside window")
    }

    pub(crate) fn point(&self, x: i64, y: i64) -> Option<usize> {
        let r = self.radius;
        ((-r..=r).contains(&x) && (-r..=r).contains(&y))
            .then(|| ((y + r) * self.width() + (x + r)) as usize)
    }

    pub(crate) fn coords(&self, id: usize) -> (i64, i64) {
        let w = self.width();
        let id = id as i64;
        (id % w - self.radius, id / w - self.radius)
    }

    fn point_neighbors(&self, id: usize, out: &mut Vec<usize>) {
        let (x, y) = self.coords(id);
        for (dx, dy) in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            if let Some(n) = self.point(x + dx, y + dy) {
                out.push(n);
            }
        }
    }

    /// Edge cells: `2 * point + {0: east, 1: north}`.
    fn num_edge_cells(&self) -> usize {
        2 * self.num_points()
    }

    fn edge_endpoints(&self, cell: usize) -> Option<((i64, i64), (i64, i64))> {
        let (x, y) = self.coords(cell / 2);
        let to = if cell % 2 == 0 { (x + 1, y) } else { (x, y + 1) };
        self.point(to.0, to.1).map(|_| ((x, y), to))
    }

    fn edge_cell(&self, a: (i64, i64), b: (i64, i64)) -> Option<usize> {
        let (lo, hi) = if (a.1, a.0) <= (b.1, b.0) { (a, b) } else { (b, a) };
        let base = self.point(lo.0, lo.1)?;
        self.point(hi.0, hi.1)?;
        match (hi.0 - lo.0, hi.1 - lo.1) {
            (1, 0) => Some(2 * base),
            (0, 1) => Some(2 * base + 1),
            _ => None,
        }
    }

    fn edges_at(&self, p: (i64, i64)) -> impl Iterator<Item = usize> + '_ {
        [(1, 0), (0, 1), (-1, 0), (0, -1)]
            .into_iter()
            .filter_map(move |(dx, dy)| self.edge_cell(p, (p.0 + dx, p.1 + dy)))
    }

    fn edge_neighbors(&self, cell: usize, out: &mut Vec<usize>) {
        if let Some((a, b)) = self.edge_endpoints(cell) {
            for p in [a, b] {
                out.extend(self.edges_at(p).filter(|&c| c != cell));
            }
        }
    }

    fn origin_edges(&self) -> Vec<usize> {
        self.edges_at((0, 0)).collect()
    }
}

fn check_size(mode: AnimalMode, n_max: usize) -> Result<()> {
    let cap = match mode {
        AnimalMode::VertexAnimals => MAX_ANIMAL_SIZE,
        AnimalMode::EdgeAnimals => MAX_EDGE_ANIMAL_SIZE,
        AnimalMode::SimpleCyclesThroughOrigin => super::cycles::MAX_CYCLE_LENGTH,
    };
    if n_max > cap {
        return Err(Error::Size {
            what: "animal enumeration",
            requested: n_max,
            cap,
        });
    }
    Ok(())
}

/// Exact counts for sizes `1..=n_max` via the untried-set recursion.
pub fn enumerate_animals(mode: AnimalMode, n_max: usize) -> Result<CountTable> {
    check_size(mode, n_max)?;
    let mut counts: BTreeMap<usize, u64> = (1..=n_max).map(|n| (n, 0)).collect();
    match mode {
        AnimalMode::VertexAnimals => {
            let win = Window::new(n_max.saturating_sub(1));
            for_each_connected_set(
                win.num_points(),
                win.origin(),
                n_max,
                |c, out| win.point_neighbors(c, out),
                |_| false,
                |set| *counts.get_mut(&set.len()).expect("size in range") += 1,
            );
        }
        AnimalMode::EdgeAnimals => {
            let win = Window::new(n_max);
            let roots = win.origin_edges();
            // Sets containing the i-th origin edge but none of the earlier ones.
            for (i, &root) in roots.iter().enumerate() {
                let earlier = &roots[..i];
                for_each_connected_set(
                    win.num_edge_cells(),
                    root,
                    n_max,
                    |c, out| win.edge_neighbors(c, out),
                    |c| earlier.contains(&c),
                    |set| *counts.get_mut(&set.len()).expect("size in range") += 1,
                );
            }
        }
        AnimalMode::SimpleCyclesThroughOrigin => {
            let lengths = super::cycles::count_plane_cycles_through_origin(n_max)?;
            for (len, c) in lengths {
                counts.insert(len, c);
            }
        }
    }
    Ok(CountTable { mode, counts })
}

/// Level-by-level growth with deduplication by sorted cell set. Each set is
/// packed into a `u128` of 10-bit cell codes, which fits sizes up to 12.
pub fn count_by_growth(mode: AnimalMode, n_max: usize) -> Result<CountTable> {
    check_size(mode, n_max)?;
    if mode == AnimalMode::SimpleCyclesThroughOrigin {
        return Err(Error::Validation(
            "growth enumerator only counts vertex and edge animals".into(),
        ));
    }
    let mut counts = BTreeMap::new();
    if n_max == 0 {
        return Ok(CountTable { mode, counts });
    }
    let radius = match mode {
        AnimalMode::VertexAnimals => n_max - 1,
        _ => n_max,
    };
    let win = Window::new(radius);
    let bits = 10u32;
    let limit = (128 / bits) as usize;
    let codes = match mode {
        AnimalMode::VertexAnimals => win.num_points(),
        _ => win.num_edge_cells(),
    };
    if n_max > limit || codes >= (1 << bits) {
        return Err(Error::Size {
            what: "growth enumeration",
            requested: n_max,
            cap: limit,
        });
    }
    let pack = |cells: &[usize]| -> u128 {
        cells
            .iter()
            .fold(0u128, |acc, &c| (acc << bits) | (c as u128 + 1))
    };
    let unpack = |mut code: u128| -> Vec<usize> {
        let mut out = Vec::new();
        while code != 0 {
            out.push((code & ((1u128 << bits) - 1)) as usize - 1);
            code >>= bits;
        }
        out.reverse();
        out
    };

    let mut level: HashSet<u128> = match mode {
        AnimalMode::VertexAnimals => [pack(&[win.origin()])].into_iter().collect(),
        _ => win.origin_edges().into_iter().map(|c| pack(&[c])).collect(),
    };
    let mut nbrs = Vec::new();
    for n in 1..=n_max {
        counts.insert(n, level.len() as u64);
        if n == n_max {
            break;
        }
        let mut next = HashSet::with_capacity(level.len() * 4);
        for &code in &level {
            let cells = unpack(code);
            for &c in &cells {
                nbrs.clear();
                match mode {
                    AnimalMode::VertexAnimals => win.point_neighbors(c, &mut nbrs),
                    _ => win.edge_neighbors(c, &mut nbrs),
                }
                for &nb in &nbrs {
                    if let Err(pos) = cells.binary_search(&nb) {
                        let mut grown = cells.clone();
                        grown.insert(pos, nb);
                        next.insert(pack(&grown));
                    }
                }
            }
        }
        level = next;
    }
    Ok(CountTable { mode, counts })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n: usize,
    pub count: u64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub within: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnimalBoundVerdict {
    pub pass: bool,
    pub rows: Vec<BoundRow>,
    /// Sizes where the count is below the headline `2^n` while satisfying the
    /// path-counting bound `2^(n-1)`.
    pub below_headline: Vec<usize>,
}

/// Check `2^(n-1) <= count(n) <= 32^n` row by row.
pub fn check_animal_bounds(table: &CountTable) -> AnimalBoundVerdict {
    let rows: Vec<BoundRow> = table
        .counts
        .iter()
        .map(|(&n, &count)| {
            let lower_bound = 2f64.powi(n as i32 - 1);
            let upper_bound = (GROWTH_BOUND as f64).powi(n as i32);
            let c = count as f64;
            BoundRow {
                n,
                count,
                lower_bound,
                upper_bound,
                within: lower_bound <= c && c <= upper_bound,
            }
        })
        .collect();
    let below_headline = rows
        .iter()
        .filter(|r| (r.count as f64) < 2f64.powi(r.n as i32))
        .map(|r| r.n)
        .collect();
    AnimalBoundVerdict {
        pass: rows.iter().all(|r| r.within),
        rows,
        below_headline,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force over all (n-1)-subsets of the diamond of radius n-1 around
    /// the origin, keeping those that are connected together with the origin.
    fn windowed_subset_count(n: usize) -> u64 {
        let r = n as i64 - 1;
        let cells: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|x| (-r..=r).map(move |y| (x, y)))
            .filter(|&(x, y)| x.abs() + y.abs() <= r && (x, y) != (0, 0))
            .collect();
        let mut count = 0;
        let mut chosen = Vec::new();
        fn rec(
            cells: &[(i64, i64)],
            start: usize,
            need: usize,
            chosen: &mut Vec<(i64, i64)>,
            count: &mut u64,
        ) {
            if need == 0 {
                let mut set: Vec<(i64, i64)> = chosen.clone();
                set.push((0, 0));
                let mut reached = vec![(0i64, 0i64)];
                let mut stack = vec![(0i64, 0i64)];
                while let Some((x, y)) = stack.pop() {
                    for d in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                        let q = (x + d.0, y + d.1);
                        if set.contains(&q) && !reached.contains(&q) {
                            reached.push(q);
                            stack.push(q);
                        }
                    }
                }
                if reached.len() == set.len() {
                    *count += 1;
                }
                return;
            }
            for i in start..cells.len() {
                chosen.push(cells[i]);
                rec(cells, i + 1, need - 1, chosen, count);
                chosen.pop();
            }
        }
        rec(&cells, 0, n - 1, &mut chosen, &mut count);
        count
    }

    #[test]
    fn small_vertex_counts() {
        let t = enumerate_animals(AnimalMode::VertexAnimals, 3).unwrap();
        assert_eq!(t.counts[&1], 1);
        assert_eq!(t.counts[&2], 4);
        assert_eq!(t.counts[&3], windowed_subset_count(3));
    }

    #[test]
    fn enumerators_agree_with_windowed_oracle() {
        let fast = enumerate_animals(AnimalMode::VertexAnimals, 6).unwrap();
        let grown = count_by_growth(AnimalMode::VertexAnimals, 6).unwrap();
        for n in 1..=6 {
            let oracle = windowed_subset_count(n);
            assert_eq!(fast.counts[&n], oracle, "n = {n}");
            assert_eq!(grown.counts[&n], oracle, "n = {n}");
        }
    }

    #[test]
    fn edge_animal_enumerators_agree() {
        let fast = enumerate_animals(AnimalMode::EdgeAnimals, 6).unwrap();
        let grown = count_by_growth(AnimalMode::EdgeAnimals, 6).unwrap();
        assert_eq!(fast, grown);
        assert_eq!(fast.counts[&1], 4);
        // Size 2: unordered pairs of adjacent edges, at least one at the origin.
        let pairs_touching_origin = {
            let win = Window::new(2);
            let mut set = std::collections::HashSet::new();
            for e in win.origin_edges() {
                let mut nb = Vec::new();
                win.edge_neighbors(e, &mut nb);
                for f in nb {
                    set.insert((e.min(f), e.max(f)));
                }
            }
            set.len() as u64
        };
        assert_eq!(fast.counts[&2], pairs_touching_origin);
    }

    #[test]
    fn bounds_hold_and_are_monotone() {
        let t = enumerate_animals(AnimalMode::VertexAnimals, 10).unwrap();
        let v = check_animal_bounds(&t);
        assert!(v.pass);
        assert_eq!(v.below_headline, vec![1]);
        assert!((t.counts[&10] as f64) / 32f64.powi(10) < 1e-6);
        for n in 1..10 {
            assert!(t.counts[&(n + 1)] > t.counts[&n]);
        }
    }

    #[test]
    fn size_caps() {
        assert!(matches!(
            enumerate_animals(AnimalMode::VertexAnimals, 13),
            Err(Error::Size { .. })
        ));
        assert!(count_by_growth(AnimalMode::SimpleCyclesThroughOrigin, 4).is_err());
    }

    #[test]
    fn connected_sets_on_small_graph() {
        // Path 0-1-2: sets containing 0 are {0}, {0,1}, {0,1,2}.
        let mut seen = Vec::new();
        for_each_connected_set(
            3,
            0,
            3,
            |c, out| {
                if c > 0 {
                    out.push(c - 1)
                }
                if c < 2 {
                    out.push(c + 1)
                }
            },
            |_| false,
            |s| {
                let mut s = s.to_vec();
                s.sort();
                seen.push(s)
            },
        );
        seen.sort();
        assert_eq!(seen, vec![vec![0], vec![0, 1], vec![0, 1, 2]]);
    }
}
