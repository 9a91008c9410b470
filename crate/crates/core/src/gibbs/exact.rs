//! Boltzmann tables by exhaustive enumeration.

use serde::Serialize;

use super::{closure_edges, torus_energy, InverseTemperature, SpinConfig};
use crate::disorder::Couplings;
use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, Geometry, TorusGeometry, Vertex};

pub const MAX_EXACT_VERTICES: usize = 25;

/// Energies and probabilities of every configuration of the free vertices.
///
/// State `m` sets free vertex `vertices[i]` to +1 iff bit `i` of `m` is set.
#[derive(Clone, Debug, Serialize)]
pub struct BoltzmannTable {
    pub vertices: Vec<Vertex>,
    pub energies: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub log_partition: f64,
}

impl BoltzmannTable {
    pub fn num_states(&self) -> usize {
        self.probabilities.len()
    }

    /// State index of a configuration of the host (or torus) vertices.
    pub fn state_of(&self, sigma: &SpinConfig) -> usize {
        self.vertices
            .iter()
            .enumerate()
            .filter(|(_, &v)| sigma.get(v) == 1)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn probability_of(&self, sigma: &SpinConfig) -> f64 {
        self.probabilities[self.state_of(sigma)]
    }

    /// Write state `m` onto the free vertices of `sigma`.
    pub fn apply_state(&self, m: usize, sigma: &mut SpinConfig) {
        for (i, &v) in self.vertices.iter().enumerate() {
            sigma.set(v, if m >> i & 1 == 1 { 1 } else { -1 });
        }
    }

    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .probabilities
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

enum End {
    Free(usize),
    Fixed(f64),
}

fn enumerate(
    vertices: Vec<Vertex>,
    bonds: impl Iterator<Item = (Vertex, Vertex, f64)>,
    fixed: &dyn Fn(Vertex) -> f64,
    num_host_vertices: usize,
    beta: InverseTemperature,
) -> Result<BoltzmannTable> {
    let n = vertices.len();
    if n > MAX_EXACT_VERTICES {
        return Err(Error::Size {
            what: "exact enumeration vertices",
            requested: n,
            cap: MAX_EXACT_VERTICES,
        });
    }
    let mut slot = vec![usize::MAX; num_host_vertices];
    for (i, v) in vertices.iter().enumerate() {
        slot[v.0] = i;
    }
    let end = |v: Vertex| {
        if slot[v.0] == usize::MAX {
            End::Fixed(fixed(v))
        } else {
            End::Free(slot[v.0])
        }
    };
    // Local fields: free neighbors with weights, plus a constant field from
    // fixed neighbors. Energies start from the all-minus state.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut field = vec![0.0; n];
    let mut h0 = 0.0;
    for (a, b, w) in bonds {
        match (end(a), end(b)) {
            (End::Free(i), End::Free(j)) if i == j => h0 -= w,
            (End::Free(i), End::Free(j)) => {
                adj[i].push((j, w));
                adj[j].push((i, w));
                h0 -= w;
            }
            (End::Free(i), End::Fixed(t)) | (End::Fixed(t), End::Free(i)) => {
                field[i] += w * t;
                h0 += w * t;
            }
            (End::Fixed(s), End::Fixed(t)) => h0 -= w * s * t,
        }
    }
    let states = 1usize << n;
    let mut energies = vec![0.0; states];
    let mut spin = vec![-1.0f64; n];
    let mut h = h0;
    energies[0] = h;
    for k in 1..states {
        let i = k.trailing_zeros() as usize;
        let local: f64 = field[i] + adj[i].iter().map(|&(j, w)| w * spin[j]).sum::<f64>();
        h += 2.0 * spin[i] * local;
        spin[i] = -spin[i];
        energies[k ^ (k >> 1)] = h;
    }
    let (probabilities, log_partition) = normalize(&energies, beta);
    Ok(BoltzmannTable {
        vertices,
        energies,
        probabilities,
        log_partition,
    })
}

fn normalize(energies: &[f64], beta: InverseTemperature) -> (Vec<f64>, f64) {
    match beta {
        InverseTemperature::Finite(b) => {
            let max = energies.iter().map(|&e| -b * e).fold(f64::NEG_INFINITY, f64::max);
            let mut p: Vec<f64> = energies.iter().map(|&e| (-b * e - max).exp()).collect();
            let z: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= z);
            (p, max + z.ln())
        }
        InverseTemperature::Infinite => {
            let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
            let tol = 1e-9 * (1.0 + min.abs());
            let count = energies.iter().filter(|&&e| e <= min + tol).count();
            let p = energies
                .iter()
                .map(|&e| if e <= min + tol { 1.0 / count as f64 } else { 0.0 })
                .collect();
            (p, f64::INFINITY)
        }
    }
}

/// `P^{C,τ}_{w,β}` over all configurations of the box `C`, which must live in a
/// host torus; `tau` supplies the spins on the exterior boundary.
pub fn exact_boltzmann(
    w: &Couplings,
    c: &BoxGeometry,
    tau: &SpinConfig,
    beta: InverseTemperature,
) -> Result<BoltzmannTable> {
    let host = c.host().ok_or_else(|| Error::Contract("box has no host torus".into()))?;
    let torus = host.torus;
    w.check_shape(&torus)?;
    tau.check_len(torus.num_vertices())?;
    if c.num_vertices() > MAX_EXACT_VERTICES {
        return Err(Error::Size {
            what: "exact enumeration vertices",
            requested: c.num_vertices(),
            cap: MAX_EXACT_VERTICES,
        });
    }
    let edges = closure_edges(c)?;
    let bonds = edges.into_iter().map(|e| {
        let (a, b) = torus.endpoints(e);
        (a, b, w.weight(e))
    });
    enumerate(
        c.host_vertices()?,
        bonds,
        &|v| f64::from(tau.get(v)),
        torus.num_vertices(),
        beta,
    )
}

/// The Boltzmann measure of the whole torus, for `L^2 <= 25`.
pub fn torus_boltzmann(
    w: &Couplings,
    torus: &TorusGeometry,
    beta: InverseTemperature,
) -> Result<BoltzmannTable> {
    w.check_shape(torus)?;
    let bonds = torus.edges().map(|e| {
        let (a, b) = torus.endpoints(e);
        (a, b, w.weight(e))
    });
    enumerate(
        (0..torus.num_vertices()).map(Vertex).collect(),
        bonds,
        &|_| 0.0,
        torus.num_vertices(),
        beta,
    )
}

/// Law of the spins of box `C` under the torus Boltzmann measure given every
/// spin outside `C` (taken from `outside`), computed from the full torus energy
/// of each completion. States are ordered as in [`exact_boltzmann`].
pub fn conditional_law(
    w: &Couplings,
    c: &BoxGeometry,
    outside: &SpinConfig,
    beta: InverseTemperature,
) -> Result<Vec<f64>> {
    let host = c.host().ok_or_else(|| Error::Contract("box has no host torus".into()))?;
    let torus = host.torus;
    w.check_shape(&torus)?;
    outside.check_len(torus.num_vertices())?;
    let vertices = c.host_vertices()?;
    if vertices.len() > MAX_EXACT_VERTICES {
        return Err(Error::Size {
            what: "exact enumeration vertices",
            requested: vertices.len(),
            cap: MAX_EXACT_VERTICES,
        });
    }
    let mut sigma = outside.clone();
    let energies: Vec<f64> = (0..1usize << vertices.len())
        .map(|m| {
            for (i, &v) in vertices.iter().enumerate() {
                sigma.set(v, if m >> i & 1 == 1 { 1 } else { -1 });
            }
            torus_energy(w, &torus, &sigma)
        })
        .collect();
    Ok(normalize(&energies, beta).0)
}
