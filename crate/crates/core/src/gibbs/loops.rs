//! Loop dynamics on connected vertex sets, and ground-state checks.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::{cut_delta, torus_energy, InverseTemperature, SpinConfig};
use crate::disorder::Couplings;
use crate::enumerate::{enumerate_animals, for_each_connected_set, AnimalMode};
use crate::error::{Error, Result};
use crate::lattice::{Geometry, TorusGeometry, Vertex};

pub const MAX_LOOP_SUBSET: usize = 6;
pub const MAX_GROUND_STATE_REGION: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopDynamicsConfig {
    /// `a` in the rates `r_C = exp(-a |C|)`.
    pub rate_decay: f64,
    pub max_subset_size: usize,
    pub horizon: f64,
    /// Time between recorded snapshots.
    pub snapshot_interval: f64,
    pub max_events: u64,
}

impl Default for LoopDynamicsConfig {
    fn default() -> Self {
        Self {
            rate_decay: 3.0,
            max_subset_size: 4,
            horizon: 10.0,
            snapshot_interval: 1.0,
            max_events: 10_000_000,
        }
    }
}

impl LoopDynamicsConfig {
    /// `Σ_{C ∋ v} r_C |C|` over the tracked sets of the plane.
    pub fn vertex_load(&self) -> Result<f64> {
        let counts = enumerate_animals(AnimalMode::VertexAnimals, self.max_subset_size)?;
        Ok(counts
            .counts
            .iter()
            .map(|(&s, &c)| c as f64 * s as f64 * (-self.rate_decay * s as f64).exp())
            .sum())
    }

    pub fn validate(&self) -> Result<f64> {
        if !(self.rate_decay > 0.0 && self.rate_decay.is_finite()) {
            return Err(Error::Config(format!("rate decay {} must be positive", self.rate_decay)));
        }
        if self.max_subset_size == 0 || self.max_subset_size > MAX_LOOP_SUBSET {
            return Err(Error::Size {
                what: "loop dynamics subset size",
                requested: self.max_subset_size,
                cap: MAX_LOOP_SUBSET,
            });
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon {} must be positive", self.horizon)));
        }
        if !(self.snapshot_interval > 0.0 && self.snapshot_interval.is_finite()) {
            return Err(Error::Config("snapshot interval must be positive".into()));
        }
        let load = self.vertex_load()?;
        if !(load < 1.0) {
            return Err(Error::Config(format!(
                "rate decay {} too small: per-vertex load {load} >= 1",
                self.rate_decay
            )));
        }
        Ok(load)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub energy: f64,
    pub spins: SpinConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    pub events: u64,
    pub flips: u64,
    pub last: SpinConfig,
}

#[derive(Debug)]
pub enum LoopRunError {
    Invalid(Error),
    /// The event budget ran out; `partial` holds everything up to that point.
    Bounded { error: Error, partial: Box<Trajectory> },
}

impl From<Error> for LoopRunError {
    fn from(e: Error) -> Self {
        LoopRunError::Invalid(e)
    }
}

impl From<LoopRunError> for Error {
    fn from(e: LoopRunError) -> Self {
        match e {
            LoopRunError::Invalid(e) => e,
            LoopRunError::Bounded { error, .. } => error,
        }
    }
}

/// Connected vertex sets of the torus with at most `k` vertices, grouped by
/// size and stored flat.
struct TrackedSets {
    by_size: Vec<Vec<u32>>,
}

impl TrackedSets {
    fn new(torus: &TorusGeometry, k: usize) -> Self {
        let n = torus.num_vertices();
        let mut by_size = vec![Vec::new(); k + 1];
        for root in 0..n {
            for_each_connected_set(
                n,
                root,
                k,
                |c, out| out.extend(torus.neighbor_array(Vertex(c)).iter().map(|v| v.0)),
                |c| c < root,
                |set| {
                    if set.len() < n {
                        by_size[set.len()].extend(set.iter().map(|&c| c as u32));
                    }
                },
            );
        }
        Self { by_size }
    }

    fn count(&self, s: usize) -> usize {
        self.by_size[s].len() / s.max(1)
    }

    fn get(&self, s: usize, i: usize) -> &[u32] {
        &self.by_size[s][i * s..(i + 1) * s]
    }
}

/// Continuous-time loop dynamics: every connected set `C` with at most
/// `max_subset_size` vertices carries a rate `exp(-a|C|)` clock; when it rings
/// the set flips with probability `e^{-βΔ}/(e^{-βΔ}+e^{βΔ})` where `2Δ` is the
/// energy change, and at `β = ∞` iff `Δ < 0`.
pub fn loop_dynamics_run<R: Rng + ?Sized>(
    w: &Couplings,
    torus: &TorusGeometry,
    start: &SpinConfig,
    beta: InverseTemperature,
    cfg: &LoopDynamicsConfig,
    rng: &mut R,
) -> std::result::Result<Trajectory, LoopRunError> {
    w.check_shape(torus)?;
    start.check_len(torus.num_vertices())?;
    cfg.validate()?;
    let sets = TrackedSets::new(torus, cfg.max_subset_size);
    let size_rates: Vec<f64> = (0..=cfg.max_subset_size)
        .map(|s| {
            if s == 0 {
                0.0
            } else {
                sets.count(s) as f64 * (-cfg.rate_decay * s as f64).exp()
            }
        })
        .collect();
    let total: f64 = size_rates.iter().sum();

    let mut sigma = start.clone();
    let mut energy = torus_energy(w, torus, &sigma);
    let mut traj = Trajectory {
        snapshots: Vec::new(),
        events: 0,
        flips: 0,
        last: sigma.clone(),
    };
    let mut next_snapshot = 0.0;
    let mut in_r = vec![false; torus.num_vertices()];
    let mut region = Vec::with_capacity(cfg.max_subset_size);
    let mut t = 0.0;
    let clock = (total > 0.0).then(|| Exp::new(total).expect("positive rate"));
    loop {
        t += match &clock {
            Some(c) => c.sample(rng),
            None => f64::INFINITY,
        };
        while next_snapshot <= t.min(cfg.horizon) {
            traj.snapshots.push(Snapshot {
                time: next_snapshot,
                energy,
                spins: sigma.clone(),
            });
            next_snapshot += cfg.snapshot_interval;
        }
        if t > cfg.horizon {
            break;
        }
        if traj.events >= cfg.max_events {
            traj.last = sigma;
            return Err(LoopRunError::Bounded {
                error: Error::BoundedRun {
                    limit: cfg.max_events,
                    unit: "events",
                    remaining: ((cfg.horizon - t) / cfg.snapshot_interval).ceil() as usize,
                },
                partial: Box::new(traj),
            });
        }
        traj.events += 1;
        let mut u = rng.random::<f64>() * total;
        let mut s = cfg.max_subset_size;
        for (size, &r) in size_rates.iter().enumerate().skip(1) {
            if u < r {
                s = size;
                break;
            }
            u -= r;
        }
        if sets.count(s) == 0 {
            continue;
        }
        let i = rng.random_range(0..sets.count(s));
        region.clear();
        region.extend(sets.get(s, i).iter().map(|&c| Vertex(c as usize)));
        for v in &region {
            in_r[v.0] = true;
        }
        let two_delta = cut_delta(w, torus, &sigma, &in_r, &region);
        for v in &region {
            in_r[v.0] = false;
        }
        let p = beta.flip_probability(two_delta / 2.0);
        if p > 0.0 && (p >= 1.0 || rng.random::<f64>() < p) {
            for &v in &region {
                sigma.flip(v);
            }
            energy += two_delta;
            traj.flips += 1;
        }
    }
    traj.last = sigma;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundStateVerdict {
    pub pass: bool,
    pub max_region_size: usize,
    pub regions_checked: u64,
    /// A smallest region whose flip does not raise the energy.
    pub witness: Option<Vec<Vertex>>,
    pub witness_delta: Option<f64>,
}

/// Check that flipping any connected set of at most `k` vertices strictly
/// raises the energy. Sets of at most four vertices are also checked under
/// every nonempty partial flip.
pub fn check_ground_state(
    w: &Couplings,
    torus: &TorusGeometry,
    sigma: &SpinConfig,
    k: usize,
) -> Result<GroundStateVerdict> {
    if k > MAX_GROUND_STATE_REGION {
        return Err(Error::Size {
            what: "ground-state region size",
            requested: k,
            cap: MAX_GROUND_STATE_REGION,
        });
    }
    w.check_shape(torus)?;
    sigma.check_len(torus.num_vertices())?;
    let n = torus.num_vertices();
    let mut in_r = vec![false; n];
    let mut checked = 0u64;
    let mut worst: Option<(Vec<Vertex>, f64)> = None;
    let mut sub = Vec::with_capacity(k);
    let mut consider = |region: &[Vertex], in_r: &mut [bool], checked: &mut u64| {
        for v in region {
            in_r[v.0] = true;
        }
        let d = cut_delta(w, torus, sigma, in_r, region);
        for v in region {
            in_r[v.0] = false;
        }
        *checked += 1;
        if d <= 0.0 {
            let better = match &worst {
                None => true,
                Some((r, wd)) => region.len() < r.len() || (region.len() == r.len() && d < *wd),
            };
            if better {
                worst = Some((region.to_vec(), d));
            }
        }
    };
    for root in 0..n {
        for_each_connected_set(
            n,
            root,
            k,
            |c, out| out.extend(torus.neighbor_array(Vertex(c)).iter().map(|v| v.0)),
            |c| c < root,
            |set| {
                if set.len() == n {
                    return;
                }
                let region: Vec<Vertex> = set.iter().map(|&c| Vertex(c)).collect();
                if region.len() <= 4 {
                    for mask in 1u32..(1 << region.len()) {
                        sub.clear();
                        sub.extend((0..region.len()).filter(|i| mask >> i & 1 == 1).map(|i| region[i]));
                        consider(&sub, &mut in_r, &mut checked);
                    }
                } else {
                    consider(&region, &mut in_r, &mut checked);
                }
            },
        );
    }
    let (witness, witness_delta) = match worst {
        Some((r, d)) => (Some(r), Some(d)),
        None => (None, None),
    };
    Ok(GroundStateVerdict {
        pass: witness.is_none(),
        max_region_size: k,
        regions_checked: checked,
        witness,
        witness_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::sample_couplings;
    use crate::rng::stream;

    #[test]
    fn config_validation() {
        assert!(LoopDynamicsConfig::default().validate().is_ok());
        let small = LoopDynamicsConfig {
            rate_decay: 0.2,
            ..Default::default()
        };
        assert!(matches!(small.validate(), Err(Error::Config(_))));
        let big = LoopDynamicsConfig {
            max_subset_size: 9,
            ..Default::default()
        };
        assert!(matches!(big.validate(), Err(Error::Size { .. })));
    }

    #[test]
    fn tracked_sets_counts() {
        let t = TorusGeometry::new(6).unwrap();
        let sets = TrackedSets::new(&t, 3);
        // Per vertex: 1 singleton, 2 dominoes, 6 trominoes of each kind counted once.
        assert_eq!(sets.count(1), 36);
        assert_eq!(sets.count(2), 72);
        assert_eq!(sets.count(3), 36 * 6);
    }

    #[test]
    fn zero_temperature_never_raises_energy() {
        let t = TorusGeometry::new(8).unwrap();
        let w = sample_couplings(&t, 17);
        let mut rng = stream(17, &[]);
        let start = SpinConfig::uniform(64, &mut rng);
        let cfg = LoopDynamicsConfig {
            rate_decay: 2.5,
            max_subset_size: 3,
            horizon: 50.0,
            snapshot_interval: 0.5,
            max_events: 1_000_000,
        };
        let traj = loop_dynamics_run(&w, &t, &start, InverseTemperature::Infinite, &cfg, &mut rng).unwrap();
        assert_eq!(traj.snapshots.len(), 101);
        for pair in traj.snapshots.windows(2) {
            assert!(pair[1].energy <= pair[0].energy + 1e-9);
        }
        for snap in &traj.snapshots {
            assert!((snap.energy - torus_energy(&w, &t, &snap.spins)).abs() < 1e-9);
        }
        assert!(traj.flips > 0);
    }

    #[test]
    fn single_flip_fixed_points_pass_k1() {
        let t = TorusGeometry::new(6).unwrap();
        let w = sample_couplings(&t, 3);
        let mut rng = stream(3, &[1]);
        let start = SpinConfig::uniform(36, &mut rng);
        let cfg = LoopDynamicsConfig {
            rate_decay: 0.5,
            max_subset_size: 1,
            horizon: 300.0,
            snapshot_interval: 300.0,
            max_events: 1_000_000,
        };
        let traj = loop_dynamics_run(&w, &t, &start, InverseTemperature::Infinite, &cfg, &mut rng).unwrap();
        assert!(check_ground_state(&w, &t, &traj.last, 1).unwrap().pass);
    }

    #[test]
    fn event_budget_returns_partial_run() {
        let t = TorusGeometry::new(4).unwrap();
        let w = sample_couplings(&t, 1);
        let mut rng = stream(1, &[]);
        let cfg = LoopDynamicsConfig {
            max_events: 5,
            horizon: 1e6,
            ..Default::default()
        };
        match loop_dynamics_run(&w, &t, &SpinConfig::all_up(16), InverseTemperature::Finite(1.0), &cfg, &mut rng) {
            Err(LoopRunError::Bounded { error, partial }) => {
                assert!(matches!(error, Error::BoundedRun { limit: 5, .. }));
                assert_eq!(partial.events, 5);
                assert!(!partial.snapshots.is_empty());
            }
            other => panic!("expected a bounded run, got {other:?}"),
        }
    }

    #[test]
    fn ferromagnet_is_ground_state() {
        let t = TorusGeometry::new(5).unwrap();
        let w = Couplings::constant(&t, 1.0);
        for k in 1..=5 {
            assert!(check_ground_state(&w, &t, &SpinConfig::all_up(25), k).unwrap().pass);
        }
        assert!(check_ground_state(&w, &t, &SpinConfig::all_up(25), 9).is_err());
    }

    #[test]
    fn misresolved_plaquette_found_by_single_flip() {
        // Exhaustive minimum of a 4x4 torus, then one spin of it flipped: the
        // check must report that vertex alone.
        let t = TorusGeometry::new(4).unwrap();
        let w = sample_couplings(&t, 44);
        let best = (0..1u64 << 16)
            .map(|m| SpinConfig::from_mask(16, m))
            .min_by(|a, b| torus_energy(&w, &t, a).total_cmp(&torus_energy(&w, &t, b)))
            .unwrap();
        assert!(check_ground_state(&w, &t, &best, 4).unwrap().pass);
        let mut bad = best.clone();
        let v = Vertex(5);
        bad.flip(v);
        let verdict = check_ground_state(&w, &t, &bad, 4).unwrap();
        assert!(!verdict.pass);
        assert_eq!(verdict.witness.unwrap(), vec![v]);
        assert!(verdict.witness_delta.unwrap() < 0.0);
    }
}
