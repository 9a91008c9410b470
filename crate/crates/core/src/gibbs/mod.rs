//! Spin configurations, Hamiltonians and the finite-volume Gibbs measures.

mod exact;
mod loops;
mod sampler;

pub use exact::{conditional_law, exact_boltzmann, torus_boltzmann, BoltzmannTable, MAX_EXACT_VERTICES};
pub use loops::{
    check_ground_state, loop_dynamics_run, GroundStateVerdict, LoopDynamicsConfig, LoopRunError,
    Snapshot, Trajectory, MAX_GROUND_STATE_REGION, MAX_LOOP_SUBSET,
};
pub use sampler::{
    default_burn_in, glauber_sweep, heat_bath_flip_probability, sample_ea_pair, HeatBath,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::disorder::Couplings;
use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, Geometry, TorusGeometry, Vertex};

/// One ±1 spin per vertex id.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct SpinConfig {
    spins: Vec<i8>,
}

impl TryFrom<Vec<i8>> for SpinConfig {
    type Error = Error;

    fn try_from(spins: Vec<i8>) -> Result<Self> {
        Self::new(spins)
    }
}

impl From<SpinConfig> for Vec<i8> {
    fn from(s: SpinConfig) -> Self {
        s.spins
    }
}

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::Validation(format!("spin {i} is {}, not ±1", spins[i])));
        }
        Ok(Self { spins })
    }

    pub fn all_up(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    pub fn uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self {
            spins: (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        }
    }

    /// Bit `i` of `mask` set means spin `i` is +1.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self {
            spins: (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect(),
        }
    }

    pub fn to_mask(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn get(&self, v: Vertex) -> i8 {
        self.spins[v.0]
    }

    #[inline]
    pub fn set(&mut self, v: Vertex, s: i8) {
        debug_assert!(s == 1 || s == -1);
        self.spins[v.0] = s;
    }

    #[inline]
    pub fn flip(&mut self, v: Vertex) {
        self.spins[v.0] = -self.spins[v.0];
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn flipped_on(&self, region: &[Vertex]) -> Self {
        let mut out = self.clone();
        let mut done = vec![false; self.len()];
        for &v in region {
            if !std::mem::replace(&mut done[v.0], true) {
                out.flip(v);
            }
        }
        out
    }

    pub fn negated(&self) -> Self {
        Self {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    pub fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::Contract(format!(
                "spin configuration has {} entries, geometry has {n} vertices",
                self.len()
            )));
        }
        Ok(())
    }
}

/// `β`, with a distinct value for zero temperature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub enum InverseTemperature {
    Finite(f64),
    Infinite,
}

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::Validation(format!("inverse temperature {beta} must be >= 0")));
        }
        Ok(if beta.is_infinite() {
            Self::Infinite
        } else {
            Self::Finite(beta)
        })
    }

    pub fn finite(self) -> Result<f64> {
        match self {
            Self::Finite(b) => Ok(b),
            Self::Infinite => Err(Error::Validation("a finite inverse temperature is required".into())),
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Finite(b) => b,
            Self::Infinite => f64::INFINITY,
        }
    }

    /// Probability of accepting a flip with energy change `2 * delta`:
    /// `e^{-βΔ} / (e^{-βΔ} + e^{βΔ})`, and at zero temperature 1 iff `Δ < 0`.
    pub fn flip_probability(self, delta: f64) -> f64 {
        match self {
            Self::Infinite => {
                if delta < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Finite(b) => 1.0 / (1.0 + (2.0 * b * delta).exp()),
        }
    }
}

impl From<InverseTemperature> for f64 {
    fn from(b: InverseTemperature) -> f64 {
        b.value()
    }
}

impl TryFrom<f64> for InverseTemperature {
    type Error = Error;

    fn try_from(b: f64) -> Result<Self> {
        Self::new(b)
    }
}

impl FromStr for InverseTemperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "infinite" => Ok(Self::Infinite),
            t => Self::new(t.parse().map_err(|_| Error::Parse(format!("bad inverse temperature {s:?}")))?),
        }
    }
}

impl fmt::Display for InverseTemperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(b) => write!(f, "{b}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

/// `H(σ) = -Σ_e w_e σ_x σ_y` over every edge of `geom`.
pub fn energy<G: Geometry>(w: &Couplings, geom: &G, sigma: &SpinConfig) -> Result<f64> {
    if w.len() != geom.num_edges() {
        return Err(Error::Contract("couplings do not match the geometry".into()));
    }
    sigma.check_len(geom.num_vertices())?;
    let mut h = 0.0;
    for e in geom.edges() {
        let (a, b) = geom.edge_endpoints(e)?;
        h -= w.weight(e) * f64::from(sigma.get(a) * sigma.get(b));
    }
    Ok(h)
}

/// Torus energy without per-edge checks.
pub(crate) fn torus_energy(w: &Couplings, torus: &TorusGeometry, sigma: &SpinConfig) -> f64 {
    let mut h = 0.0;
    for v in 0..torus.num_vertices() {
        let s = f64::from(sigma.spins[v]);
        let [east, north, _, _] = torus.neighbor_array(Vertex(v));
        h -= w.weight(crate::lattice::Edge(2 * v)) * s * f64::from(sigma.get(east));
        h -= w.weight(crate::lattice::Edge(2 * v + 1)) * s * f64::from(sigma.get(north));
    }
    h
}

/// Host edges with both endpoints in `C̄`, the box together with its
/// exterior boundary, sorted.
pub fn closure_edges(c: &BoxGeometry) -> Result<Vec<crate::lattice::Edge>> {
    let host = c.host().ok_or_else(|| Error::Contract("box has no host torus".into()))?;
    let torus = host.torus;
    let mut inside = vec![false; torus.num_vertices()];
    for v in c.host_vertices()?.into_iter().chain(c.exterior_boundary()?) {
        inside[v.0] = true;
    }
    let mut out: Vec<_> = torus
        .edges()
        .filter(|&e| {
            let (a, b) = torus.endpoints(e);
            inside[a.0] && inside[b.0]
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// `H^{C,τ}_w(σ) = -Σ w_xy σ_x σ_y` over neighboring pairs in `C̄`.
///
/// `sigma` and `tau` are configurations of the host torus; only the values of
/// `tau` on the exterior boundary of `C` are used and `sigma` must agree with
/// them there.
pub fn restricted_hamiltonian(
    w: &Couplings,
    c: &BoxGeometry,
    sigma: &SpinConfig,
    tau: &SpinConfig,
) -> Result<f64> {
    let host = c.host().ok_or_else(|| Error::Contract("box has no host torus".into()))?;
    let torus = host.torus;
    w.check_shape(&torus)?;
    sigma.check_len(torus.num_vertices())?;
    tau.check_len(torus.num_vertices())?;
    for v in c.exterior_boundary()? {
        if sigma.get(v) != tau.get(v) {
            return Err(Error::Contract(format!(
                "configuration disagrees with the boundary condition at vertex {}",
                v.0
            )));
        }
    }
    Ok(closure_edges(c)?
        .into_iter()
        .map(|e| {
            let (a, b) = torus.endpoints(e);
            -w.weight(e) * f64::from(sigma.get(a) * sigma.get(b))
        })
        .sum())
}

/// `H(σ^R) - H(σ)` on the torus, from the edges cut by `region`.
pub fn flip_region_delta(
    w: &Couplings,
    torus: &TorusGeometry,
    sigma: &SpinConfig,
    region: &[Vertex],
) -> Result<f64> {
    w.check_shape(torus)?;
    sigma.check_len(torus.num_vertices())?;
    let mut in_r = vec![false; torus.num_vertices()];
    let mut distinct = Vec::with_capacity(region.len());
    for &v in region {
        if v.0 >= in_r.len() {
            return Err(Error::range("vertex", v.0, in_r.len()));
        }
        if !std::mem::replace(&mut in_r[v.0], true) {
            distinct.push(v);
        }
    }
    Ok(cut_delta(w, torus, sigma, &in_r, &distinct))
}

/// `region` must be free of repeats and `in_r` its indicator.
pub(crate) fn cut_delta(
    w: &Couplings,
    torus: &TorusGeometry,
    sigma: &SpinConfig,
    in_r: &[bool],
    region: &[Vertex],
) -> f64 {
    let mut sum = 0.0;
    for &v in region {
        let s = f64::from(sigma.get(v));
        for (u, e) in torus.neighbor_array(v).into_iter().zip(torus.incident_edges(v)) {
            if !in_r[u.0] {
                sum += w.weight(e) * s * f64::from(sigma.get(u));
            }
        }
    }
    2.0 * sum
}

/// `(1/n) Σ σ¹_v σ²_v`.
pub fn overlap(a: &SpinConfig, b: &SpinConfig) -> Result<f64> {
    a.check_len(b.len())?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: i64 = a.spins.iter().zip(&b.spins).map(|(&x, &y)| i64::from(x * y)).sum();
    Ok(s as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_couplings;
    use crate::lattice::Edge;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn brute_hamiltonian(w: &Couplings, t: &TorusGeometry, s: &SpinConfig) -> f64 {
        let mut h = 0.0;
        for e in 0..t.num_edges() {
            let (a, b) = t.endpoints(Edge(e));
            h -= w.weights()[e] * f64::from(s.spins()[a.0]) * f64::from(s.spins()[b.0]);
        }
        h
    }

    #[test]
    fn spin_config_validation() {
        assert!(SpinConfig::new(vec![1, -1, 1]).is_ok());
        assert!(SpinConfig::new(vec![1, 0]).is_err());
        let s = SpinConfig::from_mask(5, 0b10110);
        assert_eq!(s.spins(), &[-1, 1, 1, -1, 1]);
        assert_eq!(s.to_mask(), 0b10110);
    }

    #[test]
    fn inverse_temperature_parsing() {
        assert_eq!("inf".parse::<InverseTemperature>().unwrap(), InverseTemperature::Infinite);
        assert_eq!("0.5".parse::<InverseTemperature>().unwrap(), InverseTemperature::Finite(0.5));
        assert!("-1".parse::<InverseTemperature>().is_err());
        assert!("x".parse::<InverseTemperature>().is_err());
    }

    #[test]
    fn flip_probability_formula() {
        let b = InverseTemperature::Finite(0.8);
        assert_eq!(b.flip_probability(0.0), 0.5);
        assert_eq!(InverseTemperature::Finite(0.0).flip_probability(7.3), 0.5);
        let d: f64 = 0.6;
        let expected = (-0.8 * d).exp() / ((-0.8 * d).exp() + (0.8 * d).exp());
        assert!((b.flip_probability(d) - expected).abs() < 1e-15);
        assert_eq!(InverseTemperature::Infinite.flip_probability(0.0), 0.0);
        assert_eq!(InverseTemperature::Infinite.flip_probability(-1e-9), 1.0);
    }

    #[test]
    fn restricted_hamiltonian_zero_couplings() {
        let t = TorusGeometry::new(6).unwrap();
        let c = BoxGeometry::in_host(t, 2, (2, 2)).unwrap();
        let w = Couplings::constant(&t, 0.0);
        let mut rng = stream(1, &[]);
        let s = SpinConfig::uniform(36, &mut rng);
        assert_eq!(restricted_hamiltonian(&w, &c, &s, &s).unwrap(), 0.0);
    }

    #[test]
    fn restricted_hamiltonian_single_vertex() {
        let t = TorusGeometry::new(5).unwrap();
        let c = BoxGeometry::in_host(t, 1, (2, 2)).unwrap();
        let mut w = Couplings::constant(&t, 0.0);
        for e in t.incident_edges(t.at(2, 2)) {
            w.set(e, 1.0).unwrap();
        }
        let mut s = SpinConfig::all_up(25);
        assert_eq!(restricted_hamiltonian(&w, &c, &s, &s).unwrap(), -4.0);
        s.flip(t.at(2, 2));
        let tau = SpinConfig::all_up(25);
        assert_eq!(restricted_hamiltonian(&w, &c, &s, &tau).unwrap(), 4.0);
    }

    #[test]
    fn restricted_hamiltonian_matches_edge_list_sum() {
        let t = TorusGeometry::new(6).unwrap();
        let c = BoxGeometry::in_host(t, 2, (1, 3)).unwrap();
        let w = sample_couplings(&t, 77);
        let s = SpinConfig::uniform(36, &mut stream(3, &[]));
        // C̄ is the 2x2 block at (1..=2, 3..=4) plus the 8 vertices around it.
        let mut in_closure = vec![false; 36];
        for (x, y) in [(1, 3), (2, 3), (1, 4), (2, 4)] {
            in_closure[t.at(x, y).0] = true;
        }
        for (x, y) in [(0, 3), (0, 4), (3, 3), (3, 4), (1, 2), (2, 2), (1, 5), (2, 5)] {
            in_closure[t.at(x, y).0] = true;
        }
        let mut h = 0.0;
        for e in 0..72 {
            let (a, b) = t.endpoints(Edge(e));
            if in_closure[a.0] && in_closure[b.0] {
                h -= w.weights()[e] * f64::from(s.spins()[a.0] * s.spins()[b.0]);
            }
        }
        let got = restricted_hamiltonian(&w, &c, &s, &s).unwrap();
        assert!((got - h).abs() < 1e-12);
    }

    #[test]
    fn restricted_hamiltonian_rejects_boundary_mismatch() {
        let t = TorusGeometry::new(5).unwrap();
        let c = BoxGeometry::in_host(t, 2, (0, 0)).unwrap();
        let w = sample_couplings(&t, 1);
        let s = SpinConfig::all_up(25);
        let tau = s.negated();
        assert!(matches!(
            restricted_hamiltonian(&w, &c, &s, &tau),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn flip_delta_trivial_regions() {
        let t = TorusGeometry::new(4).unwrap();
        let w = sample_couplings(&t, 5);
        let s = SpinConfig::uniform(16, &mut stream(9, &[]));
        assert_eq!(flip_region_delta(&w, &t, &s, &[]).unwrap(), 0.0);
        let all: Vec<Vertex> = (0..16).map(Vertex).collect();
        assert_eq!(flip_region_delta(&w, &t, &s, &all).unwrap(), 0.0);
    }

    #[test]
    fn flip_delta_all_cut_edges_unsatisfied() {
        let t = TorusGeometry::new(4).unwrap();
        let mut w = Couplings::constant(&t, 0.5);
        let v = t.at(1, 1);
        for (e, x) in t.incident_edges(v).into_iter().zip([0.3, 1.2, 0.7, 2.0]) {
            w.set(e, -x).unwrap();
        }
        let s = SpinConfig::all_up(16);
        let d = flip_region_delta(&w, &t, &s, &[v]).unwrap();
        assert!((d + 2.0 * (0.3 + 1.2 + 0.7 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn overlap_values() {
        let a = SpinConfig::new(vec![1, 1, -1, -1]).unwrap();
        assert_eq!(overlap(&a, &a).unwrap(), 1.0);
        assert_eq!(overlap(&a, &a.negated()).unwrap(), -1.0);
        assert_eq!(overlap(&a, &SpinConfig::all_up(4)).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn flip_delta_equals_energy_difference(seed in any::<u64>(), mask in any::<u64>(), side in 2usize..7) {
            let t = TorusGeometry::new(side).unwrap();
            let n = side * side;
            let w = sample_couplings(&t, seed);
            let s = SpinConfig::uniform(n, &mut stream(seed, &[1]));
            let region: Vec<Vertex> = (0..n).filter(|i| mask.rotate_left(*i as u32 % 64) & 1 == 1).map(Vertex).collect();
            let d = flip_region_delta(&w, &t, &s, &region).unwrap();
            let direct = brute_hamiltonian(&w, &t, &s.flipped_on(&region)) - brute_hamiltonian(&w, &t, &s);
            prop_assert!((d - direct).abs() < 1e-12 * (1.0 + direct.abs()) * n as f64);
            let complement: Vec<Vertex> = (0..n).map(Vertex).filter(|v| !region.contains(v)).collect();
            let dc = flip_region_delta(&w, &t, &s, &complement).unwrap();
            prop_assert!((d - dc).abs() < 1e-9);
        }

        #[test]
        fn energy_agrees_with_brute_force(seed in any::<u64>(), side in 1usize..6) {
            let t = TorusGeometry::new(side).unwrap();
            let w = sample_couplings(&t, seed);
            let s = SpinConfig::uniform(side * side, &mut stream(seed, &[2]));
            let a = energy(&w, &t, &s).unwrap();
            prop_assert!((a - brute_hamiltonian(&w, &t, &s)).abs() < 1e-12);
            prop_assert!((torus_energy(&w, &t, &s) - a).abs() < 1e-12);
        }
    }
}
