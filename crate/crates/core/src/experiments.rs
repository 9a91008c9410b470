//! Orchestration: flip-bound checks, unsatisfied-cluster sweeps over β,
//! unsatisfied-cycle censuses, and the full pipeline from a Gibbs sample to a
//! color-class flip. Replicas run on a worker pool; results are collected in
//! task order so every report is a function of the configuration alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    best_color_class_flip, color_regions, count_encounter_points, decompose_regions, find_bridges, TreeKind,
};
use crate::disorder::{sample_couplings, Couplings};
use crate::enumerate::{enumerate_cycles_through, weight_ratio_stats, WeightRatioParams};
use crate::error::{Error, Result};
use crate::forest::{extract_forest, ForestParams};
use crate::frustration::{components, frustrated_fraction, unsatisfied_set};
use crate::gibbs::{default_burn_in, energy, overlap, HeatBath, SpinConfig};
use crate::lattice::{BoxGeometry, DualEdge, Edge, Geometry, Plaquette, TorusGeometry, Vertex};
use crate::rng::{stream, stream_key, tag, StreamRng};

pub const FORMAT_VERSION: u32 = 1;

/// χ² critical value for one degree of freedom at the 1% level.
pub const CHI2_1DF_1PCT: f64 = 6.634_896_601_021_214;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub format_version: u32,
    pub side: usize,
    pub betas: Vec<f64>,
    pub replicas: usize,
    pub chains: usize,
    /// Burn-in sweeps; `1000 * side` when unset.
    pub sweeps: Option<u64>,
    pub seed: u64,
    /// Output directory; not written into manifests.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Longest cycle in the unsatisfied-cycle census.
    pub cycle_length_cap: usize,
    /// Plaquette the census cycles pass through.
    pub census_plaquette: usize,
    pub forest_decay: f64,
    pub forest_theta: Option<f64>,
    pub forest_cycle_cap: usize,
    pub forest_max_intervals: u64,
    /// Window side; `side - 2` when unset.
    pub window: Option<usize>,
    /// Cycles per replica in the flip-bound check.
    pub flip_cycles: usize,
    /// Measurement sweeps per chain in the flip-bound check.
    pub flip_samples: u64,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let forest = ForestParams::default();
        Self {
            format_version: FORMAT_VERSION,
            side: 16,
            betas: vec![0.0, 1.0, 2.0],
            replicas: 4,
            chains: 1,
            sweeps: None,
            seed: 0,
            out: None,
            cycle_length_cap: 8,
            census_plaquette: 0,
            forest_decay: forest.decay,
            forest_theta: forest.theta,
            forest_cycle_cap: forest.cycle_cap,
            forest_max_intervals: 1_000_000,
            window: None,
            flip_cycles: 20,
            flip_samples: 100_000,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn burn_in(&self) -> u64 {
        self.sweeps.unwrap_or_else(|| default_burn_in(self.side))
    }

    pub fn window_side(&self) -> usize {
        self.window.unwrap_or(self.side.saturating_sub(2))
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            decay: self.forest_decay,
            theta: self.forest_theta,
            cycle_cap: self.forest_cycle_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.format_version != FORMAT_VERSION {
            return bad(format!(
                "format_version {} not supported (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        for (name, v) in [
            ("side", self.side),
            ("replicas", self.replicas),
            ("chains", self.chains),
            ("jobs", self.jobs),
            ("forest_cycle_cap", self.forest_cycle_cap),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.betas.is_empty() {
            return bad("betas must not be empty".into());
        }
        if let Some(&b) = self.betas.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
            return bad(format!("beta {b} must be finite and nonnegative"));
        }
        if self.sweeps == Some(0) || self.flip_samples == 0 || self.forest_max_intervals == 0 {
            return bad("sweeps, flip_samples and forest_max_intervals must be positive".into());
        }
        let n = self.window_side();
        if n == 0 || n + 2 > self.side {
            return bad(format!("window {n} must satisfy 1 <= N <= side - 2 = {}", self.side as i64 - 2));
        }
        if self.census_plaquette >= self.side * self.side {
            return bad(format!("census_plaquette {} out of range", self.census_plaquette));
        }
        if !(self.forest_decay.is_finite() && self.forest_decay > 0.0) {
            return bad("forest_decay must be positive".into());
        }
        Ok(())
    }

    /// Disorder seed of replica `r`.
    pub fn replica_seed(&self, r: usize) -> u64 {
        stream_key(self.seed, &[tag::REPLICA, r as u64])
    }

    fn tasks(&self) -> Vec<(usize, usize)> {
        (0..self.betas.len())
            .flat_map(|b| (0..self.replicas).map(move |r| (b, r)))
            .collect()
    }
}

/// Chain stream of (replica seed, β, chain index).
pub fn chain_rng(replica_seed: u64, beta: f64, chain: usize) -> StreamRng {
    stream(replica_seed, &[tag::CHAIN, beta.to_bits(), chain as u64])
}

/// Uniform start followed by `sweeps` heat-bath sweeps.
pub fn equilibrate(hb: &HeatBath, beta: f64, sweeps: u64, rng: &mut StreamRng) -> SpinConfig {
    let mut sigma = SpinConfig::uniform(hb.num_vertices(), rng);
    for _ in 0..sweeps {
        hb.sweep(&mut sigma, beta, rng);
    }
    sigma
}

pub fn run_pool<T, F>(jobs: usize, tasks: &[(usize, usize)], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, usize) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| tasks.par_iter().map(|&(b, r)| f(b, r)).collect())
}

// ---------------------------------------------------------------- flip bound

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipCheckParams {
    pub burn_in: u64,
    /// Number of recorded samples; at least 10^4.
    pub samples: u64,
    /// Sweeps between recorded samples.
    pub thin: u64,
    /// Thresholds `c` for `P(Σ_γ w_e σ_x σ_y <= -c) < exp(-2βc)`.
    pub c_grid: Vec<f64>,
}

impl Default for FlipCheckParams {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            samples: 100_000,
            thin: 1,
            c_grid: (1..=8).map(|i| 0.25 * i as f64).collect(),
        }
    }
}

pub const MIN_FLIP_SAMPLES: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub c: f64,
    pub hits: u64,
    pub frequency: f64,
    pub bound: f64,
    pub standard_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipBoundCheck {
    pub edges: Vec<DualEdge>,
    pub abs_weight: f64,
    pub bound: f64,
    pub hits: u64,
    pub samples: u64,
    pub frequency: f64,
    /// Binomial standard error at the bound.
    pub standard_error: f64,
    pub pass: bool,
    pub thresholds: Vec<ThresholdRow>,
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Frequency with which every edge of each contractible dual cycle is
/// unsatisfied along one heat-bath chain, against `exp(-2β|w|(γ))`.
pub fn run_flip_bound_check(
    w: &Couplings,
    torus: &TorusGeometry,
    beta: f64,
    cycles: &[Vec<DualEdge>],
    params: &FlipCheckParams,
    rng: &mut StreamRng,
) -> Result<Vec<FlipBoundCheck>> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::Validation(format!("beta {beta} must be finite and nonnegative")));
    }
    if params.samples < MIN_FLIP_SAMPLES {
        return Err(Error::Validation(format!(
            "flip-bound check needs at least {MIN_FLIP_SAMPLES} samples, got {}",
            params.samples
        )));
    }
    for c in cycles {
        torus.cycle_interior(c)?;
    }
    let hb = HeatBath::new(w, torus)?;
    let primal: Vec<Vec<(Vertex, Vertex, f64)>> = cycles
        .iter()
        .map(|c| {
            c.iter()
                .map(|d| {
                    let (a, b) = torus.endpoints(Edge(d.0));
                    (a, b, w.weight(Edge(d.0)))
                })
                .collect()
        })
        .collect();
    let mut sigma = equilibrate(&hb, beta, params.burn_in, rng);
    let mut hits = vec![0u64; cycles.len()];
    let mut below = vec![vec![0u64; params.c_grid.len()]; cycles.len()];
    for _ in 0..params.samples {
        for _ in 0..params.thin.max(1) {
            hb.sweep(&mut sigma, beta, rng);
        }
        for (i, edges) in primal.iter().enumerate() {
            let mut all = true;
            let mut signed = 0.0;
            for &(a, b, we) in edges {
                let v = we * f64::from(sigma.get(a) * sigma.get(b));
                all &= v < 0.0;
                signed += v;
            }
            hits[i] += u64::from(all);
            for (k, &c) in params.c_grid.iter().enumerate() {
                below[i][k] += u64::from(signed <= -c);
            }
        }
    }
    let n = params.samples;
    Ok(cycles
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let abs_weight: f64 = primal[i].iter().map(|e| e.2.abs()).sum();
            let bound = (-2.0 * beta * abs_weight).exp();
            let frequency = hits[i] as f64 / n as f64;
            let standard_error = binomial_se(bound, n);
            let thresholds = params
                .c_grid
                .iter()
                .zip(&below[i])
                .map(|(&c, &h)| {
                    let bound = (-2.0 * beta * c).exp();
                    let frequency = h as f64 / n as f64;
                    let standard_error = binomial_se(bound, n);
                    ThresholdRow {
                        c,
                        hits: h,
                        frequency,
                        bound,
                        standard_error,
                        pass: frequency < bound + 3.0 * standard_error,
                    }
                })
                .collect();
            FlipBoundCheck {
                edges: c.clone(),
                abs_weight,
                bound,
                hits: hits[i],
                samples: n,
                frequency,
                standard_error,
                pass: frequency < bound + 3.0 * standard_error,
                thresholds,
            }
        })
        .collect())
}

/// The four dual edges around primal vertex `v`: the plaquette 4-cycle of the
/// dual lattice enclosing `v`.
pub fn dual_square_around(torus: &TorusGeometry, v: Vertex) -> Vec<DualEdge> {
    torus.incident_edges(v).iter().map(|e| DualEdge(e.0)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipBoundRow {
    pub beta: f64,
    pub replica: usize,
    pub cycle: usize,
    pub vertex: usize,
    pub check: FlipBoundCheck,
}

/// Flip-bound check on `flip_cycles` random dual squares per (β, replica).
pub fn run_flip_check(cfg: &ExperimentConfig) -> Result<Vec<FlipBoundRow>> {
    cfg.validate()?;
    let torus = TorusGeometry::new(cfg.side)?;
    let params = FlipCheckParams {
        burn_in: cfg.burn_in(),
        samples: cfg.flip_samples,
        ..FlipCheckParams::default()
    };
    let per_task = run_pool(cfg.jobs, &cfg.tasks(), |b, r| {
        let beta = cfg.betas[b];
        let seed = cfg.replica_seed(r);
        let w = sample_couplings(&torus, seed);
        let mut pick = stream(seed, &[tag::WINDOW]);
        let vertices: Vec<Vertex> = (0..cfg.flip_cycles)
            .map(|_| Vertex(pick.random_range(0..torus.num_vertices())))
            .collect();
        let cycles: Vec<Vec<DualEdge>> = vertices.iter().map(|&v| dual_square_around(&torus, v)).collect();
        let checks = run_flip_bound_check(&w, &torus, beta, &cycles, &params, &mut chain_rng(seed, beta, 0))?;
        Ok(checks
            .into_iter()
            .zip(vertices)
            .enumerate()
            .map(|(i, (check, v))| FlipBoundRow {
                beta,
                replica: r,
                cycle: i,
                vertex: v.0,
                check,
            })
            .collect::<Vec<_>>())
    })?;
    Ok(per_task.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- clusters

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub beta: f64,
    pub replica: usize,
    pub chains: usize,
    /// Unsatisfied dual edges over all dual edges, averaged over chains.
    pub unsat_density: f64,
    pub frustrated_fraction: f64,
    pub components: usize,
    pub largest_vertices: usize,
    pub largest_edges: usize,
    /// Largest component's dual vertices over all plaquettes, averaged over chains.
    pub largest_fraction: f64,
    /// Mean |overlap| of consecutive chains, when there are at least two.
    pub overlap: Option<f64>,
    /// Summed over chains.
    pub vertex_histogram: BTreeMap<usize, usize>,
    pub edge_histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaTrend {
    pub beta: f64,
    pub replicas: usize,
    pub mean_density: f64,
    pub mean_largest_fraction: f64,
    pub se_largest_fraction: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn beta_trend(rows: &[ClusterRow], betas: &[f64]) -> Vec<BetaTrend> {
    betas
        .iter()
        .map(|&beta| {
            let sel: Vec<&ClusterRow> = rows.iter().filter(|r| r.beta == beta).collect();
            let fr: Vec<f64> = sel.iter().map(|r| r.largest_fraction).collect();
            let de: Vec<f64> = sel.iter().map(|r| r.unsat_density).collect();
            let (m, se) = mean_se(&fr);
            BetaTrend {
                beta,
                replicas: sel.len(),
                mean_density: mean_se(&de).0,
                mean_largest_fraction: m,
                se_largest_fraction: se,
            }
        })
        .collect()
}

/// Whether the mean largest-cluster fraction at `hi` is below that at `lo`
/// by more than `sigmas` combined standard errors.
pub fn one_sided_decrease(lo: &BetaTrend, hi: &BetaTrend, sigmas: f64) -> bool {
    let se = (lo.se_largest_fraction.powi(2) + hi.se_largest_fraction.powi(2)).sqrt();
    lo.mean_largest_fraction - hi.mean_largest_fraction > sigmas * se
}

/// Per β and replica: sample, extract the unsatisfied set, and record its
/// component statistics.
pub fn run_cluster_sweep(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let torus = TorusGeometry::new(cfg.side)?;
    let clusters = run_pool(cfg.jobs, &cfg.tasks(), |b, r| {
        let beta = cfg.betas[b];
        let seed = cfg.replica_seed(r);
        let w = sample_couplings(&torus, seed);
        let hb = HeatBath::new(&w, &torus)?;
        let plaquettes = torus.num_plaquettes() as f64;
        let mut row = ClusterRow {
            beta,
            replica: r,
            chains: cfg.chains,
            unsat_density: 0.0,
            frustrated_fraction: frustrated_fraction(&w)?,
            components: 0,
            largest_vertices: 0,
            largest_edges: 0,
            largest_fraction: 0.0,
            overlap: None,
            vertex_histogram: BTreeMap::new(),
            edge_histogram: BTreeMap::new(),
        };
        let mut states = Vec::with_capacity(cfg.chains);
        for c in 0..cfg.chains {
            let sigma = equilibrate(&hb, beta, cfg.burn_in(), &mut chain_rng(seed, beta, c));
            let g = unsatisfied_set(&w, &sigma)?;
            let comp = components(&g);
            row.unsat_density += g.len() as f64 / torus.num_edges() as f64;
            row.components += comp.count();
            row.largest_vertices = row.largest_vertices.max(comp.largest_vertices());
            row.largest_edges = row.largest_edges.max(comp.largest_edges());
            row.largest_fraction += comp.largest_vertices() as f64 / plaquettes;
            for (&s, &k) in &comp.vertex_histogram {
                *row.vertex_histogram.entry(s).or_insert(0) += k;
            }
            for (&s, &k) in &comp.edge_histogram {
                *row.edge_histogram.entry(s).or_insert(0) += k;
            }
            states.push(sigma);
        }
        let k = cfg.chains as f64;
        row.unsat_density /= k;
        row.largest_fraction /= k;
        if states.len() >= 2 {
            let q: Result<Vec<f64>> = states.windows(2).map(|p| overlap(&p[0], &p[1])).collect();
            let q = q?;
            row.overlap = Some(q.iter().map(|x| x.abs()).sum::<f64>() / q.len() as f64);
        }
        Ok(row)
    })?;
    let trend = beta_trend(&clusters, &cfg.betas);
    Ok(ExperimentReport {
        experiment: "cluster-sweep".into(),
        replica_seeds: (0..cfg.replicas).map(|r| cfg.replica_seed(r)).collect(),
        config: cfg.clone(),
        clusters,
        trend,
        elapsed: start.elapsed(),
        ..ExperimentReport::empty(cfg)
    })
}

// ---------------------------------------------------------------- census

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub beta: f64,
    pub replica: usize,
    pub length: usize,
    /// Simple dual cycles of this length through the plaquette.
    pub cycles: usize,
    /// Of those, fully unsatisfied, averaged over chains.
    pub unsatisfied: f64,
    /// `4 (32 exp(-2β λ₂))^length` with λ₂ estimated from the replica's couplings.
    pub reference: f64,
}

/// Counts of fully unsatisfied simple dual cycles through `x`, by length.
pub fn run_unsat_cycle_census(cfg: &ExperimentConfig, x: Plaquette, len_cap: usize) -> Result<Vec<CensusRow>> {
    cfg.validate()?;
    const MAX_CENSUS_LENGTH: usize = 12;
    if len_cap > MAX_CENSUS_LENGTH {
        return Err(Error::Size {
            what: "census cycle length",
            requested: len_cap,
            cap: MAX_CENSUS_LENGTH,
        });
    }
    let torus = TorusGeometry::new(cfg.side)?;
    let cycles = enumerate_cycles_through(&torus, x, len_cap)?;
    let per_task = run_pool(cfg.jobs, &cfg.tasks(), |b, r| {
        let beta = cfg.betas[b];
        let seed = cfg.replica_seed(r);
        let w = sample_couplings(&torus, seed);
        let hb = HeatBath::new(&w, &torus)?;
        let lambda2 = weight_ratio_stats(
            &w,
            &torus,
            &WeightRatioParams {
                seed,
                ..WeightRatioParams::default()
            },
        )?
        .lower_estimate;
        let mut unsat: BTreeMap<usize, f64> = BTreeMap::new();
        let mut total: BTreeMap<usize, usize> = BTreeMap::new();
        for c in &cycles {
            *total.entry(c.len()).or_insert(0) += 1;
        }
        for ch in 0..cfg.chains {
            let sigma = equilibrate(&hb, beta, cfg.burn_in(), &mut chain_rng(seed, beta, ch));
            let g = unsatisfied_set(&w, &sigma)?;
            for c in &cycles {
                if c.edges.iter().all(|&d| g.contains(d)) {
                    *unsat.entry(c.len()).or_insert(0.0) += 1.0 / cfg.chains as f64;
                }
            }
        }
        Ok(total
            .into_iter()
            .map(|(length, count)| CensusRow {
                beta,
                replica: r,
                length,
                cycles: count,
                unsatisfied: unsat.get(&length).copied().unwrap_or(0.0),
                reference: 4.0 * (32.0 * (-2.0 * beta * lambda2).exp()).powi(length as i32),
            })
            .collect::<Vec<_>>())
    })?;
    Ok(per_task.into_iter().flatten().collect())
}

// ---------------------------------------------------------------- pipeline

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRow {
    pub beta: f64,
    pub replica: usize,
    pub window_anchor: (usize, usize),
    pub unsat_edges: usize,
    pub forest_edges: usize,
    pub forest_cycles: usize,
    pub bridge_edges: usize,
    pub bridge_weight: f64,
    pub boundary_abs: f64,
    pub regions: usize,
    pub colors: usize,
    pub encounter_points: usize,
    pub single_arm: usize,
    pub bi_arm: usize,
    pub multi_arm: usize,
    pub best_color: Option<u8>,
    pub best_delta: f64,
    /// Energy after applying the best class flip minus energy before.
    pub recomputed_delta: f64,
    pub identity_residual: f64,
    /// Whether `2 Y_N > |w|(∂[N]^2)`.
    pub bound_applies: bool,
    /// The best flip was applied: the bound applies and the flip lowers H.
    pub flipped: bool,
}

/// sample → unsatisfied set → forest → bridges → regions → coloring → flip,
/// for one β and replica.
pub fn pipeline_instance(cfg: &ExperimentConfig, beta: f64, replica: usize) -> Result<PipelineRow> {
    let torus = TorusGeometry::new(cfg.side)?;
    let seed = cfg.replica_seed(replica);
    let w = sample_couplings(&torus, seed);
    let hb = HeatBath::new(&w, &torus).map_err(|e| e.in_stage("sample"))?;
    let sigma = equilibrate(&hb, beta, cfg.burn_in(), &mut chain_rng(seed, beta, 0));
    let g = unsatisfied_set(&w, &sigma).map_err(|e| e.in_stage("frustration"))?;
    let forest_seed = stream_key(seed, &[tag::CLOCK, beta.to_bits()]);
    let run = extract_forest(&g, &cfg.forest_params(), forest_seed, cfg.forest_max_intervals)
        .map_err(|e| e.in_stage("forest"))?;
    let mut pick = stream(seed, &[tag::WINDOW, beta.to_bits()]);
    let anchor = (pick.random_range(0..cfg.side), pick.random_range(0..cfg.side));
    let window = BoxGeometry::in_host(torus, cfg.window_side(), anchor).map_err(|e| e.in_stage("window"))?;
    let bridges = find_bridges(&run.forest, &window).map_err(|e| e.in_stage("bridges"))?;
    let trees = count_encounter_points(&run.forest, &window).map_err(|e| e.in_stage("bridges"))?;
    let mut d = decompose_regions(&bridges).map_err(|e| e.in_stage("regions"))?;
    color_regions(&mut d, 5).map_err(|e| e.in_stage("coloring"))?;
    let flip = best_color_class_flip(&d, &w, &sigma).map_err(|e| e.in_stage("flip"))?;
    let recomputed_delta = match flip.best_color {
        Some(c) => {
            let region = d.color_class(c)?;
            let before = energy(&w, &torus, &sigma)?;
            energy(&w, &torus, &sigma.flipped_on(&region))? - before
        }
        None => 0.0,
    };
    let kind = |k| trees.kind_counts.get(&k).copied().unwrap_or(0);
    Ok(PipelineRow {
        beta,
        replica,
        window_anchor: anchor,
        unsat_edges: g.len(),
        forest_edges: run.forest.len(),
        forest_cycles: run.num_cycles,
        bridge_edges: flip.bridge_edges,
        bridge_weight: flip.bridge_weight,
        boundary_abs: flip.boundary_abs,
        regions: d.num_regions,
        colors: d.num_colors(),
        encounter_points: trees.encounter_count(),
        single_arm: kind(TreeKind::SingleArm),
        bi_arm: kind(TreeKind::BiArm),
        multi_arm: kind(TreeKind::MultiArm),
        best_color: flip.best_color,
        best_delta: flip.best_delta,
        recomputed_delta,
        identity_residual: flip.identity_residual,
        bound_applies: flip.bound_applies,
        flipped: flip.bound_applies && flip.best_delta < 0.0,
    })
}

pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let pipeline = run_pool(cfg.jobs, &cfg.tasks(), |b, r| pipeline_instance(cfg, cfg.betas[b], r))?;
    Ok(ExperimentReport {
        experiment: "pipeline".into(),
        pipeline,
        elapsed: start.elapsed(),
        ..ExperimentReport::empty(cfg)
    })
}

// ---------------------------------------------------------------- β = 0

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceCheck {
    pub samples: u64,
    pub unsat_fraction: f64,
    /// 2x2 table of (first edge unsatisfied, second edge unsatisfied).
    pub table: [[u64; 2]; 2],
    pub chi2: f64,
    pub pass: bool,
}

/// At β = 0, record pairs of adjacent edges sharing a vertex (the east and
/// north edge of every vertex) over `samples` sweeps, and test independence of
/// their unsatisfied indicators with a 2x2 χ² test at the 1% level.
pub fn beta_zero_independence(side: usize, seed: u64, samples: u64) -> Result<IndependenceCheck> {
    let torus = TorusGeometry::new(side)?;
    let w = sample_couplings(&torus, seed);
    let hb = HeatBath::new(&w, &torus)?;
    let mut rng = chain_rng(seed, 0.0, 0);
    let mut sigma = SpinConfig::uniform(torus.num_vertices(), &mut rng);
    let mut table = [[0u64; 2]; 2];
    let mut unsat = 0u64;
    // Only every other vertex, so that no edge enters two pairs.
    let pivots: Vec<Vertex> = (0..torus.num_vertices())
        .map(Vertex)
        .filter(|&v| {
            let (x, y) = torus.coords(v);
            (x + y) % 2 == 0
        })
        .collect();
    for _ in 0..samples {
        hb.sweep(&mut sigma, 0.0, &mut rng);
        for &v in &pivots {
            let [east, north, ..] = torus.incident_edges(v);
            let bad = |e: Edge| {
                let (a, b) = torus.endpoints(e);
                usize::from(w.weight(e) * f64::from(sigma.get(a) * sigma.get(b)) < 0.0)
            };
            let (i, j) = (bad(east), bad(north));
            table[i][j] += 1;
            unsat += (i + j) as u64;
        }
    }
    let n: f64 = table.iter().flatten().sum::<u64>() as f64;
    let row = [table[0][0] + table[0][1], table[1][0] + table[1][1]];
    let col = [table[0][0] + table[1][0], table[0][1] + table[1][1]];
    let mut chi2 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = row[i] as f64 * col[j] as f64 / n;
            chi2 += (table[i][j] as f64 - expected).powi(2) / expected;
        }
    }
    Ok(IndependenceCheck {
        samples,
        unsat_fraction: unsat as f64 / (2.0 * n),
        table,
        chi2,
        pass: chi2 < CHI2_1DF_1PCT,
    })
}

// ---------------------------------------------------------------- reports

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub replica_seeds: Vec<u64>,
    pub clusters: Vec<ClusterRow>,
    pub trend: Vec<BetaTrend>,
    pub flip_bounds: Vec<FlipBoundRow>,
    pub census: Vec<CensusRow>,
    pub pipeline: Vec<PipelineRow>,
    /// Wall time; kept out of written files so they depend on the config only.
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ExperimentReport {
    pub fn empty(cfg: &ExperimentConfig) -> Self {
        Self {
            experiment: String::new(),
            config: cfg.clone(),
            replica_seeds: (0..cfg.replicas).map(|r| cfg.replica_seed(r)).collect(),
            clusters: Vec::new(),
            trend: Vec::new(),
            flip_bounds: Vec::new(),
            census: Vec::new(),
            pipeline: Vec::new(),
            elapsed: Duration::ZERO,
        }
    }
}

/// A CSV file whose first line is `# format-version: 1`.
pub struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<std::fs::File>,
}

impl CsvOut {
    pub fn create(path: impl AsRef<Path>, header: &[&str]) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        writeln!(file, "# format-version: {FORMAT_VERSION}").map_err(|e| Error::io(&path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header).map_err(|e| csv_error(&path, e))?;
        Ok(Self { path, inner })
    }

    pub fn row<I, T>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| csv_error(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Internal(format!("csv on {}: {other:?}", path.display())),
    }
}

/// Shortest decimal that reads back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// JSON file with `format_version` as its first key.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, kind: &str, body: &T) -> Result<()> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        format_version: u32,
        kind: &'a str,
        #[serde(flatten)]
        body: &'a T,
    }
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&Envelope {
        format_version: FORMAT_VERSION,
        kind,
        body,
    })
    .map_err(|e| Error::Internal(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Write every non-empty table of `report` into `dir`, plus `manifest.json`
/// echoing the raw configuration text. Returns the files written.
pub fn write_report(report: &ExperimentReport, dir: &Path, raw_config: Option<&str>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    if !report.clusters.is_empty() {
        let p = dir.join("clusters.csv");
        let mut out = CsvOut::create(
            &p,
            &[
                "beta",
                "replica",
                "chains",
                "unsat_density",
                "frustrated_fraction",
                "components",
                "largest_vertices",
                "largest_edges",
                "largest_fraction",
                "overlap",
            ],
        )?;
        for r in &report.clusters {
            out.row([
                fmt_f64(r.beta),
                r.replica.to_string(),
                r.chains.to_string(),
                fmt_f64(r.unsat_density),
                fmt_f64(r.frustrated_fraction),
                r.components.to_string(),
                r.largest_vertices.to_string(),
                r.largest_edges.to_string(),
                fmt_f64(r.largest_fraction),
                opt(r.overlap.map(fmt_f64)),
            ])?;
        }
        out.finish()?;
        files.push(p);
        let p = dir.join("cluster_histograms.csv");
        let mut out = CsvOut::create(&p, &["beta", "replica", "measure", "size", "count"])?;
        for r in &report.clusters {
            for (measure, h) in [("vertices", &r.vertex_histogram), ("edges", &r.edge_histogram)] {
                for (s, k) in h {
                    out.row([fmt_f64(r.beta), r.replica.to_string(), measure.into(), s.to_string(), k.to_string()])?;
                }
            }
        }
        out.finish()?;
        files.push(p);
    }
    if !report.trend.is_empty() {
        let p = dir.join("beta_trend.csv");
        let mut out = CsvOut::create(
            &p,
            &["beta", "replicas", "mean_density", "mean_largest_fraction", "se_largest_fraction"],
        )?;
        for t in &report.trend {
            out.row([
                fmt_f64(t.beta),
                t.replicas.to_string(),
                fmt_f64(t.mean_density),
                fmt_f64(t.mean_largest_fraction),
                fmt_f64(t.se_largest_fraction),
            ])?;
        }
        out.finish()?;
        files.push(p);
    }
    if !report.flip_bounds.is_empty() {
        let p = dir.join("flip_bound.csv");
        let mut out = CsvOut::create(
            &p,
            &["beta", "replica", "cycle", "vertex", "abs_weight", "bound", "hits", "samples", "frequency", "standard_error", "pass"],
        )?;
        for r in &report.flip_bounds {
            let c = &r.check;
            out.row([
                fmt_f64(r.beta),
                r.replica.to_string(),
                r.cycle.to_string(),
                r.vertex.to_string(),
                fmt_f64(c.abs_weight),
                fmt_f64(c.bound),
                c.hits.to_string(),
                c.samples.to_string(),
                fmt_f64(c.frequency),
                fmt_f64(c.standard_error),
                c.pass.to_string(),
            ])?;
        }
        out.finish()?;
        files.push(p);
        let p = dir.join("flip_thresholds.csv");
        let mut out = CsvOut::create(&p, &["beta", "replica", "cycle", "c", "frequency", "bound", "pass"])?;
        for r in &report.flip_bounds {
            for t in &r.check.thresholds {
                out.row([
                    fmt_f64(r.beta),
                    r.replica.to_string(),
                    r.cycle.to_string(),
                    fmt_f64(t.c),
                    fmt_f64(t.frequency),
                    fmt_f64(t.bound),
                    t.pass.to_string(),
                ])?;
            }
        }
        out.finish()?;
        files.push(p);
    }
    if !report.census.is_empty() {
        let p = dir.join("cycle_census.csv");
        let mut out = CsvOut::create(&p, &["beta", "replica", "length", "cycles", "unsatisfied", "reference"])?;
        for r in &report.census {
            out.row([
                fmt_f64(r.beta),
                r.replica.to_string(),
                r.length.to_string(),
                r.cycles.to_string(),
                fmt_f64(r.unsatisfied),
                fmt_f64(r.reference),
            ])?;
        }
        out.finish()?;
        files.push(p);
    }
    if !report.pipeline.is_empty() {
        let p = dir.join("pipeline.csv");
        let mut out = CsvOut::create(
            &p,
            &[
                "beta",
                "replica",
                "anchor_x",
                "anchor_y",
                "unsat_edges",
                "forest_edges",
                "forest_cycles",
                "bridge_edges",
                "bridge_weight",
                "boundary_abs",
                "regions",
                "colors",
                "encounter_points",
                "single_arm",
                "bi_arm",
                "multi_arm",
                "best_color",
                "best_delta",
                "recomputed_delta",
                "identity_residual",
                "bound_applies",
                "flipped",
            ],
        )?;
        for r in &report.pipeline {
            out.row([
                fmt_f64(r.beta),
                r.replica.to_string(),
                r.window_anchor.0.to_string(),
                r.window_anchor.1.to_string(),
                r.unsat_edges.to_string(),
                r.forest_edges.to_string(),
                r.forest_cycles.to_string(),
                r.bridge_edges.to_string(),
                fmt_f64(r.bridge_weight),
                fmt_f64(r.boundary_abs),
                r.regions.to_string(),
                r.colors.to_string(),
                r.encounter_points.to_string(),
                r.single_arm.to_string(),
                r.bi_arm.to_string(),
                r.multi_arm.to_string(),
                opt(r.best_color),
                fmt_f64(r.best_delta),
                fmt_f64(r.recomputed_delta),
                fmt_f64(r.identity_residual),
                r.bound_applies.to_string(),
                r.flipped.to_string(),
            ])?;
        }
        out.finish()?;
        files.push(p);
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        experiment: &'a str,
        config_text: Option<&'a str>,
        config: &'a ExperimentConfig,
        replica_seeds: &'a [u64],
        outputs: Vec<String>,
    }
    let manifest = dir.join("manifest.json");
    write_json(
        &manifest,
        "manifest",
        &Manifest {
            experiment: &report.experiment,
            config_text: raw_config,
            config: &report.config,
            replica_seeds: &report.replica_seeds,
            outputs: files
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect(),
        },
    )?;
    files.push(manifest);
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(side: usize, betas: &[f64], replicas: usize) -> ExperimentConfig {
        ExperimentConfig {
            side,
            betas: betas.to_vec(),
            replicas,
            sweeps: Some(300),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_round_trips_and_validates() {
        let text = "side = 12\nbetas = [0.5, 1.5]\nreplicas = 2\nwindow = 8\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.side, 12);
        assert_eq!(cfg.window_side(), 8);
        cfg.validate().unwrap();
        assert!(matches!(ExperimentConfig::from_toml("sidee = 3"), Err(Error::Config(_))));
        let too_wide = ExperimentConfig { window: Some(11), ..cfg.clone() };
        assert!(matches!(too_wide.validate(), Err(Error::Config(_))));
        let no_replicas = ExperimentConfig { replicas: 0, ..cfg };
        assert!(no_replicas.validate().is_err());
    }

    #[test]
    fn flip_bound_formula_and_beta_zero() {
        let t = TorusGeometry::new(8).unwrap();
        let mut w = Couplings::constant(&t, 0.5);
        let gamma = dual_square_around(&t, t.at(3, 3));
        for d in &gamma {
            w.set(Edge(d.0), 0.5).unwrap();
        }
        let params = FlipCheckParams {
            burn_in: 10,
            samples: MIN_FLIP_SAMPLES,
            ..FlipCheckParams::default()
        };
        let r = run_flip_bound_check(&w, &t, 1.0, &[gamma.clone()], &params, &mut stream(0, &[])).unwrap();
        assert!((r[0].abs_weight - 2.0).abs() < 1e-12);
        assert!((r[0].bound - (-4.0f64).exp()).abs() < 1e-15);
        assert!(r[0].pass);
        let r0 = run_flip_bound_check(&w, &t, 0.0, &[gamma], &params, &mut stream(0, &[])).unwrap();
        assert_eq!(r0[0].bound, 1.0);
        assert!(r0[0].pass && r0[0].thresholds.iter().all(|x| x.pass));
    }

    #[test]
    fn flip_bound_rejects_few_samples_and_winding_cycles() {
        let t = TorusGeometry::new(4).unwrap();
        let w = sample_couplings(&t, 1);
        let few = FlipCheckParams {
            samples: 10,
            ..FlipCheckParams::default()
        };
        let gamma = dual_square_around(&t, t.at(1, 1));
        assert!(matches!(
            run_flip_bound_check(&w, &t, 1.0, &[gamma], &few, &mut stream(0, &[])),
            Err(Error::Validation(_))
        ));
        // Dual edges crossing the vertical primal edges of column 0 wind around once.
        let winding: Vec<DualEdge> = (0..4)
            .map(|y| DualEdge(t.edge(t.at(0, y), crate::lattice::Orientation::Horizontal).0))
            .collect();
        let params = FlipCheckParams {
            samples: MIN_FLIP_SAMPLES,
            ..FlipCheckParams::default()
        };
        assert!(run_flip_bound_check(&w, &t, 1.0, &[winding], &params, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn flip_bound_holds_on_eight_by_eight() {
        let cfg = ExperimentConfig {
            flip_cycles: 5,
            flip_samples: 20_000,
            ..small(8, &[2.0], 1)
        };
        let rows = run_flip_check(&cfg).unwrap();
        assert_eq!(rows.len(), 5);
        for r in &rows {
            assert!(r.check.pass, "{r:?}");
            assert!(r.check.thresholds.iter().all(|t| t.pass));
        }
    }

    #[test]
    fn beta_zero_edges_are_independent_fair_coins() {
        let check = beta_zero_independence(8, 3, 4000).unwrap();
        // 4000 sweeps x 64 edges; 4 standard errors of a fair coin.
        assert!((check.unsat_fraction - 0.5).abs() < 4.0 * 0.5 / (256_000f64).sqrt());
        assert!(check.pass, "chi2 = {}", check.chi2);
    }

    #[test]
    fn cluster_sweep_density_bounds_and_histograms() {
        let cfg = ExperimentConfig {
            chains: 2,
            ..small(12, &[0.0, 3.0], 3)
        };
        let rep = run_cluster_sweep(&cfg).unwrap();
        assert_eq!(rep.clusters.len(), 6);
        for r in &rep.clusters {
            assert!((0.0..=1.0).contains(&r.unsat_density));
            // Every frustrated plaquette has an unsatisfied dual edge, each edge
            // touching two plaquettes.
            assert!(r.unsat_density >= r.frustrated_fraction / 4.0 - 1e-12);
            let total: usize = r.vertex_histogram.values().sum();
            assert_eq!(total, r.components);
            assert_eq!(r.edge_histogram.values().sum::<usize>(), r.components);
            assert!(r.overlap.is_some());
        }
        assert_eq!(rep.trend.len(), 2);
        assert!((rep.trend[0].mean_density - 0.5).abs() < 0.05);
        assert!(rep.trend[1].mean_density < rep.trend[0].mean_density);
    }

    #[test]
    fn census_all_positive_ground_state_has_no_unsatisfied_cycles() {
        let t = TorusGeometry::new(8).unwrap();
        let w = Couplings::constant(&t, 1.0);
        let g = unsatisfied_set(&w, &SpinConfig::all_up(64)).unwrap();
        assert!(g.is_empty());
        let cfg = small(8, &[0.5, 3.0], 2);
        let rows = run_unsat_cycle_census(&cfg, Plaquette(0), 6).unwrap();
        assert!(rows.iter().all(|r| r.unsatisfied <= r.cycles as f64));
        assert_eq!(rows.iter().filter(|r| r.length == 4).map(|r| r.cycles).next(), Some(4));
        assert!(run_unsat_cycle_census(&cfg, Plaquette(0), 14).is_err());
    }

    #[test]
    fn pipeline_is_deterministic_and_consistent() {
        let cfg = ExperimentConfig {
            window: Some(8),
            jobs: 2,
            ..small(12, &[2.0], 4)
        };
        let a = run_pipeline(&cfg).unwrap();
        let b = run_pipeline(&ExperimentConfig { jobs: 1, ..cfg.clone() }).unwrap();
        assert_eq!(a.pipeline, b.pipeline);
        for r in &a.pipeline {
            assert!((r.best_delta - r.recomputed_delta).abs() < 1e-9);
            assert!(r.identity_residual.abs() < 1e-9);
            assert!(r.colors <= 5);
            assert!(r.encounter_points <= 4 * 8 - 4);
            if r.bound_applies {
                assert!(r.best_delta < 0.0);
            }
        }
    }

    #[test]
    fn pipeline_small_window() {
        let cfg = ExperimentConfig {
            window: Some(4),
            ..small(6, &[1.0], 1)
        };
        let row = pipeline_instance(&cfg, 1.0, 0).unwrap();
        assert!(row.regions >= 1);
        if row.unsat_edges == 0 {
            assert_eq!(row.regions, 1);
            assert!(!row.flipped);
        }
    }

    #[test]
    fn reports_write_versioned_files_deterministically() {
        let cfg = small(8, &[0.0, 2.0], 2);
        let rep = run_cluster_sweep(&cfg).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = write_report(&rep, d1.path(), Some("side = 8\n")).unwrap();
        let rep2 = run_cluster_sweep(&cfg).unwrap();
        let f2 = write_report(&rep2, d2.path(), Some("side = 8\n")).unwrap();
        assert_eq!(f1.len(), f2.len());
        for (a, b) in f1.iter().zip(&f2) {
            let (ta, tb) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
            assert_eq!(ta, tb, "{}", a.display());
        }
        let csv = std::fs::read_to_string(d1.path().join("clusters.csv")).unwrap();
        assert!(csv.starts_with("# format-version: 1\n"));
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(d1.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_text"], "side = 8\n");
        assert_eq!(manifest["format_version"], 1);
    }
}
