//! Empirical concentration of `|w|(G) / |E(G)|` over connected edge sets.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::animals::for_each_connected_set;
use crate::disorder::Couplings;
use crate::error::{Error, Result};
use crate::lattice::{Edge, Geometry, Vertex};
use crate::rng::{stream, tag};

/// Which edge sets to measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRatioParams {
    /// Sets of at most this many edges are enumerated exhaustively around
    /// each anchor.
    pub enumerate_max: usize,
    /// Number of anchor vertices for the exhaustive part.
    pub anchors: usize,
    /// Sizes of randomly grown sets.
    pub grow_sizes: Vec<usize>,
    /// Random sets per grown size.
    pub samples: usize,
    /// Smallest size counted by the concentration estimates.
    pub min_size: usize,
    pub seed: u64,
}

impl Default for WeightRatioParams {
    fn default() -> Self {
        Self {
            enumerate_max: 4,
            anchors: 16,
            grow_sizes: vec![8, 16, 32, 64],
            samples: 200,
            min_size: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeStats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Counts in bins of width `HIST_BIN` starting at zero; the last bin is open.
    pub histogram: Vec<u64>,
}

pub const HIST_BIN: f64 = 0.1;
pub const HIST_BINS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRatioStats {
    pub by_size: BTreeMap<usize, SizeStats>,
    pub min_size: usize,
    /// 1% quantile of the ratio over sets of at least `min_size` edges.
    pub lower_estimate: f64,
    /// 99% quantile of the ratio over the same sets.
    pub upper_estimate: f64,
    #[serde(skip)]
    ratios: Vec<(usize, f64)>,
}

impl WeightRatioStats {
    /// Fraction of measured sets of at least `min_size` edges whose ratio lies
    /// outside `[lower, upper]`.
    pub fn violation_frequency(&self, lower: f64, upper: f64) -> f64 {
        let eligible: Vec<f64> = self
            .ratios
            .iter()
            .filter(|(s, _)| *s >= self.min_size)
            .map(|&(_, r)| r)
            .collect();
        if eligible.is_empty() {
            return 0.0;
        }
        let bad = eligible.iter().filter(|&&r| r < lower || r > upper).count();
        bad as f64 / eligible.len() as f64
    }

    pub fn violations(&self, lower: f64, upper: f64) -> (usize, usize) {
        let eligible = self.ratios.iter().filter(|(s, _)| *s >= self.min_size);
        let total = eligible.clone().count();
        let bad = eligible.filter(|&&(_, r)| r < lower || r > upper).count();
        (bad, total)
    }

    pub fn ratios(&self) -> &[(usize, f64)] {
        &self.ratios
    }
}

/// Edge incidence of an arbitrary geometry.
struct EdgeIncidence {
    at_vertex: Vec<Vec<Edge>>,
    ends: Vec<(Vertex, Vertex)>,
}

impl EdgeIncidence {
    fn new<G: Geometry>(geom: &G) -> Result<Self> {
        let mut at_vertex = vec![Vec::new(); geom.num_vertices()];
        let mut ends = Vec::with_capacity(geom.num_edges());
        for e in geom.edges() {
            let (a, b) = geom.edge_endpoints(e)?;
            at_vertex[a.0].push(e);
            if a != b {
                at_vertex[b.0].push(e);
            }
            ends.push((a, b));
        }
        Ok(Self { at_vertex, ends })
    }

    fn adjacent(&self, e: Edge, out: &mut Vec<usize>) {
        let (a, b) = self.ends[e.0];
        for v in [a, b] {
            out.extend(self.at_vertex[v.0].iter().filter(|&&f| f != e).map(|f| f.0));
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Record `|w|(G)/|E(G)|` over small connected edge sets enumerated around
/// random anchors and over larger sets grown edge by edge from a random edge.
pub fn weight_ratio_stats<G: Geometry>(
    w: &Couplings,
    geom: &G,
    params: &WeightRatioParams,
) -> Result<WeightRatioStats> {
    if w.len() != geom.num_edges() {
        return Err(Error::Contract(format!(
            "{} couplings for {} edges",
            w.len(),
            geom.num_edges()
        )));
    }
    if geom.num_edges() == 0 {
        return Err(Error::Validation("geometry has no edges".into()));
    }
    let inc = EdgeIncidence::new(geom)?;
    let mut rng = stream(params.seed, &[tag::ANIMAL]);
    let mut ratios: Vec<(usize, f64)> = Vec::new();
    let ratio = |set: &[usize]| set.iter().map(|&e| w.weight(Edge(e)).abs()).sum::<f64>() / set.len() as f64;

    if params.enumerate_max > 0 {
        for _ in 0..params.anchors {
            let v = Vertex(rng.random_range(0..geom.num_vertices()));
            let roots = inc.at_vertex[v.0].clone();
            for (i, root) in roots.iter().enumerate() {
                let earlier: Vec<usize> = roots[..i].iter().map(|e| e.0).collect();
                for_each_connected_set(
                    geom.num_edges(),
                    root.0,
                    params.enumerate_max,
                    |c, out| inc.adjacent(Edge(c), out),
                    |c| earlier.contains(&c),
                    |set| ratios.push((set.len(), ratio(set))),
                );
            }
        }
    }

    let mut in_set = vec![false; geom.num_edges()];
    let mut frontier = Vec::new();
    let mut nb = Vec::new();
    for &size in &params.grow_sizes {
        if size == 0 || size > geom.num_edges() {
            return Err(Error::Validation(format!("cannot grow a set of {size} edges")));
        }
        for _ in 0..params.samples {
            let mut set = vec![rng.random_range(0..geom.num_edges())];
            in_set[set[0]] = true;
            while set.len() < size {
                frontier.clear();
                for &e in &set {
                    nb.clear();
                    inc.adjacent(Edge(e), &mut nb);
                    frontier.extend(nb.iter().copied().filter(|&f| !in_set[f]));
                }
                frontier.sort_unstable();
                frontier.dedup();
                if frontier.is_empty() {
                    break;
                }
                let f = frontier[rng.random_range(0..frontier.len())];
                in_set[f] = true;
                set.push(f);
            }
            ratios.push((set.len(), ratio(&set)));
            for &e in &set {
                in_set[e] = false;
            }
        }
    }

    let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &(s, r) in &ratios {
        by_size.entry(s).or_default().push(r);
    }
    let by_size = by_size
        .into_iter()
        .map(|(s, rs)| {
            let mut histogram = vec![0u64; HIST_BINS];
            for &r in &rs {
                histogram[((r / HIST_BIN) as usize).min(HIST_BINS - 1)] += 1;
            }
            let stats = SizeStats {
                count: rs.len(),
                min: rs.iter().copied().fold(f64::INFINITY, f64::min),
                max: rs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                mean: rs.iter().sum::<f64>() / rs.len() as f64,
                histogram,
            };
            (s, stats)
        })
        .collect();
    let mut eligible: Vec<f64> = ratios
        .iter()
        .filter(|(s, _)| *s >= params.min_size)
        .map(|&(_, r)| r)
        .collect();
    eligible.sort_by(f64::total_cmp);
    Ok(WeightRatioStats {
        by_size,
        min_size: params.min_size,
        lower_estimate: quantile(&eligible, 0.01),
        upper_estimate: quantile(&eligible, 0.99),
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_couplings;
    use crate::lattice::{BoxGeometry, TorusGeometry};

    #[test]
    fn single_edges_follow_half_normal() {
        let t = TorusGeometry::new(224).unwrap();
        let w = sample_couplings(&t, 5);
        let params = WeightRatioParams {
            enumerate_max: 0,
            anchors: 0,
            grow_sizes: vec![1],
            samples: 100_000,
            min_size: 1,
            seed: 1,
        };
        let stats = weight_ratio_stats(&w, &t, &params).unwrap();
        let mean = stats.by_size[&1].mean;
        let half_normal_mean = (2.0 / std::f64::consts::PI).sqrt();
        assert!((mean - half_normal_mean).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn invariant_under_sign_flip() {
        let t = TorusGeometry::new(16).unwrap();
        let w = sample_couplings(&t, 8);
        let params = WeightRatioParams::default();
        let a = weight_ratio_stats(&w, &t, &params).unwrap();
        let b = weight_ratio_stats(&w.negated(), &t, &params).unwrap();
        assert_eq!(a.ratios(), b.ratios());
        assert!(a.lower_estimate > 0.0 && a.lower_estimate <= a.upper_estimate);
    }

    #[test]
    fn enumerated_sets_cover_all_small_sizes() {
        let t = TorusGeometry::new(12).unwrap();
        let w = sample_couplings(&t, 2);
        let params = WeightRatioParams {
            enumerate_max: 3,
            anchors: 1,
            grow_sizes: vec![],
            samples: 0,
            min_size: 1,
            seed: 4,
        };
        let stats = weight_ratio_stats(&w, &t, &params).unwrap();
        // Sets containing a fixed vertex: 4 single edges, then pairs and
        // triples of adjacent edges with the vertex as an endpoint.
        assert_eq!(stats.by_size[&1].count, 4);
        let plane = crate::enumerate::enumerate_animals(crate::enumerate::AnimalMode::EdgeAnimals, 3).unwrap();
        assert_eq!(stats.by_size[&2].count as u64, plane.counts[&2]);
        assert_eq!(stats.by_size[&3].count as u64, plane.counts[&3]);
    }

    #[test]
    fn ratios_of_large_sets_stay_between_constants() {
        let b = BoxGeometry::new(64).unwrap();
        let params = WeightRatioParams {
            min_size: (64f64).ln().ceil() as usize,
            ..WeightRatioParams::default()
        };
        let (mut bad, mut total) = (0, 0);
        for seed in 0..100 {
            let w = sample_couplings(&b, seed);
            let stats = weight_ratio_stats(&w, &b, &WeightRatioParams { seed, ..params.clone() }).unwrap();
            let (v, n) = stats.violations(0.1, 3.0);
            bad += v;
            total += n;
        }
        assert!(total > 0);
        assert!((bad as f64) / (total as f64) < 1e-2, "{bad} of {total}");
    }

    #[test]
    fn rejects_mismatched_geometry() {
        let t = TorusGeometry::new(4).unwrap();
        let b = BoxGeometry::new(4).unwrap();
        let w = sample_couplings(&t, 0);
        assert!(weight_ratio_stats(&w, &b, &WeightRatioParams::default()).is_err());
    }
}
