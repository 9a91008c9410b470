//! Heat-bath (Glauber) sampling of the torus Boltzmann measure.

use rand::Rng;

use super::{InverseTemperature, SpinConfig};
use crate::disorder::{sample_couplings, Couplings};
use crate::error::Result;
use crate::lattice::{Geometry, TorusGeometry, Vertex};
use crate::rng::{stream, tag, StreamRng};

/// Burn-in used when none is given: `1000 * L` sweeps.
pub fn default_burn_in(side: usize) -> u64 {
    1000 * side as u64
}

/// Neighbor and coupling tables for repeated sweeps over one torus.
#[derive(Clone, Debug)]
pub struct HeatBath {
    bonds: Vec<[(u32, f64); 4]>,
    degree: Vec<u8>,
}

impl HeatBath {
    pub fn new(w: &Couplings, torus: &TorusGeometry) -> Result<Self> {
        w.check_shape(torus)?;
        let n = torus.num_vertices();
        let mut bonds = vec![[(0u32, 0.0); 4]; n];
        let mut degree = vec![0u8; n];
        for v in 0..n {
            let vv = Vertex(v);
            for (u, e) in torus.neighbor_array(vv).into_iter().zip(torus.incident_edges(vv)) {
                // Self-loops on a 1x1 torus contribute a constant.
                if u != vv {
                    bonds[v][degree[v] as usize] = (u.0 as u32, w.weight(e));
                    degree[v] += 1;
                }
            }
        }
        Ok(Self { bonds, degree })
    }

    pub fn num_vertices(&self) -> usize {
        self.bonds.len()
    }

    /// `h_v = Σ_u w_vu σ_u`.
    #[inline]
    pub fn local_field(&self, sigma: &SpinConfig, v: usize) -> f64 {
        self.bonds[v][..self.degree[v] as usize]
            .iter()
            .map(|&(u, w)| w * f64::from(sigma.get(Vertex(u as usize))))
            .sum()
    }

    /// Probability that the heat-bath update at `v` sets the spin to +1.
    #[inline]
    pub fn up_probability(&self, sigma: &SpinConfig, v: usize, beta: f64) -> f64 {
        1.0 / (1.0 + (-2.0 * beta * self.local_field(sigma, v)).exp())
    }

    #[inline]
    pub fn update<R: Rng + ?Sized>(&self, sigma: &mut SpinConfig, v: usize, beta: f64, rng: &mut R) {
        let p = self.up_probability(sigma, v, beta);
        sigma.set(Vertex(v), if rng.random::<f64>() < p { 1 } else { -1 });
    }

    /// Update every vertex once, in id order.
    pub fn sweep<R: Rng + ?Sized>(&self, sigma: &mut SpinConfig, beta: f64, rng: &mut R) {
        for v in 0..self.num_vertices() {
            self.update(sigma, v, beta, rng);
        }
    }

    /// A sweep that calls `observe` after every single-site update.
    pub fn sweep_observed<R, F>(&self, sigma: &mut SpinConfig, beta: f64, rng: &mut R, mut observe: F)
    where
        R: Rng + ?Sized,
        F: FnMut(&SpinConfig),
    {
        for v in 0..self.num_vertices() {
            self.update(sigma, v, beta, rng);
            observe(sigma);
        }
    }
}

/// One heat-bath sweep of `sigma` on the torus.
pub fn glauber_sweep<R: Rng + ?Sized>(
    w: &Couplings,
    torus: &TorusGeometry,
    sigma: &mut SpinConfig,
    beta: InverseTemperature,
    rng: &mut R,
) -> Result<()> {
    let beta = beta.finite()?;
    sigma.check_len(torus.num_vertices())?;
    HeatBath::new(w, torus)?.sweep(sigma, beta, rng);
    Ok(())
}

/// Probability that a heat-bath update at `v` changes the spin there.
pub fn heat_bath_flip_probability(
    w: &Couplings,
    torus: &TorusGeometry,
    sigma: &SpinConfig,
    v: Vertex,
    beta: f64,
) -> Result<f64> {
    sigma.check_len(torus.num_vertices())?;
    let p = HeatBath::new(w, torus)?.up_probability(sigma, v.0, beta);
    Ok(if sigma.get(v) == 1 { 1.0 - p } else { p })
}

/// Couplings from `disorder_seed`, then `burn_in` sweeps from a uniform start
/// drawn from the chain stream `chain_seed`. Returns the chain's generator so
/// callers can keep sampling.
pub fn sample_ea_pair(
    side: usize,
    disorder_seed: u64,
    beta: InverseTemperature,
    burn_in: u64,
    chain_seed: u64,
) -> Result<(Couplings, SpinConfig, StreamRng)> {
    let torus = TorusGeometry::new(side)?;
    let beta = beta.finite()?;
    let w = sample_couplings(&torus, disorder_seed);
    let mut rng = stream(disorder_seed, &[tag::CHAIN, chain_seed]);
    let mut sigma = SpinConfig::uniform(torus.num_vertices(), &mut rng);
    let hb = HeatBath::new(&w, &torus)?;
    for _ in 0..burn_in {
        hb.sweep(&mut sigma, beta, &mut rng);
    }
    Ok((w, sigma, rng))
}

#[cfg(test)]
mod tests {
    use super::super::torus_boltzmann;
    use super::*;
    use crate::frustration::unsatisfied_set;

    #[test]
    fn detailed_balance_on_three_by_three() {
        let t = TorusGeometry::new(3).unwrap();
        let w = sample_couplings(&t, 21);
        let beta = 1.1;
        let table = torus_boltzmann(&w, &t, InverseTemperature::Finite(beta)).unwrap();
        for m in 0..512u64 {
            let s = SpinConfig::from_mask(9, m);
            for v in 0..9 {
                let flipped = SpinConfig::from_mask(9, m ^ 1 << v);
                let forward = heat_bath_flip_probability(&w, &t, &s, Vertex(v), beta).unwrap();
                let back = heat_bath_flip_probability(&w, &t, &flipped, Vertex(v), beta).unwrap();
                let lhs = table.probabilities[m as usize] * forward;
                let rhs = table.probabilities[(m ^ 1 << v) as usize] * back;
                assert!((lhs - rhs).abs() < 1e-12, "state {m} site {v}");
            }
        }
    }

    #[test]
    fn single_site_marginals_match_exact() {
        let t = TorusGeometry::new(3).unwrap();
        let w = sample_couplings(&t, 6);
        let beta = 0.7;
        let table = torus_boltzmann(&w, &t, InverseTemperature::Finite(beta)).unwrap();
        let mut exact_up = [0.0; 9];
        for (m, p) in table.probabilities.iter().enumerate() {
            for (v, up) in exact_up.iter_mut().enumerate() {
                if m >> v & 1 == 1 {
                    *up += p;
                }
            }
        }
        let hb = HeatBath::new(&w, &t).unwrap();
        let mut rng = stream(6, &[tag::CHAIN]);
        let mut s = SpinConfig::uniform(9, &mut rng);
        let sweeps = 200_000;
        let mut ups = [0u64; 9];
        for _ in 0..sweeps {
            hb.sweep(&mut s, beta, &mut rng);
            for (v, c) in ups.iter_mut().enumerate() {
                *c += u64::from(s.spins()[v] == 1);
            }
        }
        for v in 0..9 {
            let emp = ups[v] as f64 / sweeps as f64;
            // Total variation of a two-point law is the difference in one mass.
            assert!((emp - exact_up[v]).abs() < 0.01, "site {v}: {emp} vs {}", exact_up[v]);
        }
    }

    #[test]
    fn beta_zero_sweep_gives_fair_coins() {
        let t = TorusGeometry::new(8).unwrap();
        let w = sample_couplings(&t, 2);
        let mut rng = stream(2, &[]);
        let mut s = SpinConfig::all_up(64);
        let mut ups = 0u64;
        let rounds = 2000;
        for _ in 0..rounds {
            glauber_sweep(&w, &t, &mut s, InverseTemperature::Finite(0.0), &mut rng).unwrap();
            ups += s.spins().iter().filter(|&&x| x == 1).count() as u64;
        }
        let frac = ups as f64 / (rounds * 64) as f64;
        // 4 standard errors of 128000 fair coins.
        assert!((frac - 0.5).abs() < 4.0 * 0.5 / (128_000f64).sqrt());
    }

    #[test]
    fn glauber_requires_finite_beta() {
        let t = TorusGeometry::new(3).unwrap();
        let w = sample_couplings(&t, 2);
        let mut s = SpinConfig::all_up(9);
        assert!(glauber_sweep(&w, &t, &mut s, InverseTemperature::Infinite, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn ea_pair_is_deterministic_and_low_temperature_satisfies_more() {
        let (w1, s1, _) = sample_ea_pair(12, 4, InverseTemperature::Finite(3.0), 300, 1).unwrap();
        let (w2, s2, _) = sample_ea_pair(12, 4, InverseTemperature::Finite(3.0), 300, 1).unwrap();
        assert_eq!(w1, w2);
        assert_eq!(s1, s2);
        assert_eq!(s1.len(), 144);
        let unsat = unsatisfied_set(&w1, &s1).unwrap();
        assert!((unsat.len() as f64) / 288.0 < 0.5);
    }
}
