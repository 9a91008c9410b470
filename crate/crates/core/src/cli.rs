//! The `ealab` command line: subcommands, configuration, snapshot files and
//! exit codes (0 success, 1 bad input or configuration, 2 internal failure).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::Serialize;

use crate::analysis::{bridge_stats, color_regions, decompose_regions, find_bridges};
use crate::disorder::{sample_couplings, Couplings, Shape};
use crate::enumerate::{check_animal_bounds, count_by_growth, enumerate_animals, AnimalMode};
use crate::error::{Error, Result};
use crate::experiments::{
    beta_zero_independence, chain_rng, equilibrate, fmt_f64, pipeline_instance, run_cluster_sweep, run_flip_check,
    run_pipeline, run_pool, run_unsat_cycle_census, write_json, write_report, CsvOut, ExperimentConfig, FORMAT_VERSION,
};
use crate::forest::{extract_forest, is_forest, same_partition};
use crate::frustration::{components, frustrated_fraction, parity_violations, unsatisfied_set, DualSubgraph};
use crate::gibbs::{conditional_law, energy, exact_boltzmann, flip_region_delta, HeatBath, InverseTemperature, SpinConfig};
use crate::lattice::{BoxGeometry, DualEdge, Edge, Geometry, Plaquette, TorusGeometry, Vertex};
use crate::rng::{stream, stream_key, tag};

#[derive(Debug, Parser)]
#[command(name = "ealab", version, about = "Edwards-Anderson spin glass laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Flags override config-file values.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub side: Option<usize>,
    /// One or more inverse temperatures, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub beta: Vec<f64>,
    /// Burn-in sweeps.
    #[arg(long)]
    pub sweeps: Option<u64>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Window side for the bridge analysis.
    #[arg(long)]
    pub window: Option<usize>,
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample couplings and equilibrated spins; write snapshot files.
    Sample(Common),
    /// Unsatisfied-set statistics of a snapshot, or a cluster sweep with a
    /// cycle census when no input is given.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Exact counts of lattice animals or cycles through the origin.
    Enumerate {
        #[command(flatten)]
        common: Common,
        /// vertex, edge or cycles.
        #[arg(long, default_value = "vertex")]
        mode: String,
        #[arg(long, default_value_t = 8)]
        max: usize,
        /// redelmeier or growth.
        #[arg(long, default_value = "redelmeier")]
        method: String,
    },
    /// Loop-erasing forest of the unsatisfied set, with window bridges,
    /// regions and colorings.
    Forest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Empirical frequency of unsatisfied dual squares against exp(-2β|w|).
    FlipCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        cycles: Option<usize>,
    },
    /// sample → frustration → forest → bridges → regions → coloring → flip.
    Pipeline(Common),
    /// Built-in property suites.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quick: bool,
    },
}

/// Run with `argv` (including the program name); returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ealab: {e}");
            if e.is_internal() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Sample(c) => cmd_sample(&c),
        Command::Analyze { common, input } => cmd_analyze(&common, input.as_deref()),
        Command::Enumerate {
            common,
            mode,
            max,
            method,
        } => cmd_enumerate(&common, &mode, max, &method),
        Command::Forest { common, input, theta } => cmd_forest(&common, input.as_deref(), theta),
        Command::FlipCheck {
            common,
            samples,
            cycles,
        } => cmd_flip_check(&common, samples, cycles),
        Command::Pipeline(c) => cmd_pipeline(&c),
        Command::Verify { common, quick } => cmd_verify(&common, quick),
    }
}

/// Configuration file (if any) with flags applied, plus its raw text.
fn resolve(c: &Common) -> Result<(ExperimentConfig, Option<String>)> {
    let (mut cfg, raw) = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            (ExperimentConfig::from_toml(&text)?, Some(text))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(s) = c.side {
        cfg.side = s;
    }
    if !c.beta.is_empty() {
        cfg.betas = c.beta.clone();
    }
    if c.sweeps.is_some() {
        cfg.sweeps = c.sweeps;
    }
    if let Some(v) = c.chains {
        cfg.chains = v;
    }
    if let Some(v) = c.replicas {
        cfg.replicas = v;
    }
    if let Some(v) = c.jobs {
        cfg.jobs = v;
    }
    if c.window.is_some() {
        cfg.window = c.window;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    cfg.validate()?;
    Ok((cfg, raw))
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("ealab-out"));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

// ---------------------------------------------------------------- snapshots

/// Couplings with optional spins, and how they were produced.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSnapshot {
    pub couplings: Couplings,
    pub beta: Option<f64>,
    pub sweeps: Option<u64>,
    pub chain: Option<usize>,
    pub spins: Option<SpinConfig>,
}

/// Line-oriented text: a `# format-version` line, `key value` header lines,
/// then `weights <count>` followed by one weight per line and optionally
/// `spins <count>` followed by one line of `+`/`-`.
pub fn write_snapshot(path: &Path, s: &StateSnapshot) -> Result<()> {
    let mut t = String::new();
    let (shape, side) = match s.couplings.shape() {
        Shape::Torus { side } => ("torus", side),
        Shape::Box { side } => ("box", side),
    };
    let _ = writeln!(t, "# format-version: {FORMAT_VERSION}");
    let _ = writeln!(t, "kind snapshot");
    let _ = writeln!(t, "shape {shape}");
    let _ = writeln!(t, "side {side}");
    let _ = writeln!(t, "seed {}", s.couplings.seed());
    if let Some(b) = s.beta {
        let _ = writeln!(t, "beta {}", fmt_f64(b));
    }
    if let Some(n) = s.sweeps {
        let _ = writeln!(t, "sweeps {n}");
    }
    if let Some(c) = s.chain {
        let _ = writeln!(t, "chain {c}");
    }
    let _ = writeln!(t, "weights {}", s.couplings.len());
    for &x in s.couplings.weights() {
        let _ = writeln!(t, "{}", fmt_f64(x));
    }
    if let Some(sp) = &s.spins {
        let _ = writeln!(t, "spins {}", sp.len());
        t.extend(sp.spins().iter().map(|&x| if x == 1 { '+' } else { '-' }));
        t.push('\n');
    }
    std::fs::write(path, t).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<StateSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_snapshot(&text)
}

pub fn parse_snapshot(text: &str) -> Result<StateSnapshot> {
    let bad = |m: String| Error::Parse(format!("snapshot: {m}"));
    let mut lines = text.lines();
    match lines.next() {
        Some(l) if l.trim() == format!("# format-version: {FORMAT_VERSION}") => {}
        other => return Err(bad(format!("expected format-version {FORMAT_VERSION} header, got {other:?}"))),
    }
    let (mut shape, mut side, mut seed) = (None, None, None);
    let (mut beta, mut sweeps, mut chain) = (None, None, None);
    let mut weights: Option<Vec<f64>> = None;
    let mut spins = None;
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once(' ').ok_or_else(|| bad(format!("malformed line {line:?}")))?;
        let num = |v: &str| v.parse::<u64>().map_err(|e| bad(format!("{key}: {e}")));
        match key {
            "kind" if value == "snapshot" => {}
            "shape" => shape = Some(value.to_string()),
            "side" => side = Some(num(value)? as usize),
            "seed" => seed = Some(num(value)?),
            "beta" => beta = Some(value.parse::<f64>().map_err(|e| bad(format!("beta: {e}")))?),
            "sweeps" => sweeps = Some(num(value)?),
            "chain" => chain = Some(num(value)? as usize),
            "weights" => {
                let n = num(value)? as usize;
                let w: Result<Vec<f64>> = (0..n)
                    .map(|i| {
                        lines
                            .next()
                            .ok_or_else(|| bad(format!("weights end after {i} of {n}")))?
                            .trim()
                            .parse::<f64>()
                            .map_err(|e| bad(format!("weight {i}: {e}")))
                    })
                    .collect();
                weights = Some(w?);
            }
            "spins" => {
                let n = num(value)? as usize;
                let row = lines.next().ok_or_else(|| bad("missing spin line".into()))?.trim();
                let v: Result<Vec<i8>> = row
                    .chars()
                    .map(|c| match c {
                        '+' => Ok(1),
                        '-' => Ok(-1),
                        other => Err(bad(format!("spin {other:?}"))),
                    })
                    .collect();
                let v = v?;
                if v.len() != n {
                    return Err(bad(format!("{} spins, header says {n}", v.len())));
                }
                spins = Some(SpinConfig::new(v)?);
            }
            _ => return Err(bad(format!("unknown key {key:?}"))),
        }
    }
    let side = side.ok_or_else(|| bad("missing side".into()))?;
    let shape = match shape.as_deref() {
        Some("torus") => Shape::Torus { side },
        Some("box") => Shape::Box { side },
        other => return Err(bad(format!("shape {other:?}"))),
    };
    let couplings = Couplings::from_weights(
        shape,
        seed.ok_or_else(|| bad("missing seed".into()))?,
        weights.ok_or_else(|| bad("missing weights".into()))?,
    )?;
    Ok(StateSnapshot {
        couplings,
        beta,
        sweeps,
        chain,
        spins,
    })
}

// ---------------------------------------------------------------- commands

fn cmd_sample(c: &Common) -> Result<()> {
    let (cfg, raw) = resolve(c)?;
    let dir = out_dir(&cfg)?;
    let torus = TorusGeometry::new(cfg.side)?;
    let w = sample_couplings(&torus, cfg.seed);
    let tasks: Vec<(usize, usize)> = (0..cfg.betas.len())
        .flat_map(|b| (0..cfg.chains).map(move |ch| (b, ch)))
        .collect();
    let states = run_pool(cfg.jobs, &tasks, |b, ch| {
        let beta = cfg.betas[b];
        let hb = HeatBath::new(&w, &torus)?;
        Ok(equilibrate(&hb, beta, cfg.burn_in(), &mut chain_rng(cfg.seed, beta, ch)))
    })?;
    let mut outputs = Vec::new();
    for (&(b, ch), sigma) in tasks.iter().zip(states) {
        let name = format!("snapshot-b{b}-c{ch}.txt");
        write_snapshot(
            &dir.join(&name),
            &StateSnapshot {
                couplings: w.clone(),
                beta: Some(cfg.betas[b]),
                sweeps: Some(cfg.burn_in()),
                chain: Some(ch),
                spins: Some(sigma),
            },
        )?;
        outputs.push(name);
    }
    write_manifest(&dir, "sample", &cfg, raw.as_deref(), outputs)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    raw: Option<&str>,
    outputs: Vec<String>,
) -> Result<()> {
    #[derive(Serialize)]
    struct M<'a> {
        command: &'a str,
        config_text: Option<&'a str>,
        config: &'a ExperimentConfig,
        outputs: Vec<String>,
    }
    write_json(
        dir.join("manifest.json"),
        "manifest",
        &M {
            command,
            config_text: raw,
            config: cfg,
            outputs,
        },
    )
}

/// Snapshot from `--input`, or a fresh sample at the first β.
fn load_or_sample(cfg: &ExperimentConfig, input: Option<&Path>) -> Result<(Couplings, SpinConfig, f64)> {
    match input {
        Some(p) => {
            let s = read_snapshot(p)?;
            let spins = s
                .spins
                .ok_or_else(|| Error::Validation(format!("{} has no spins", p.display())))?;
            Ok((s.couplings, spins, s.beta.unwrap_or(f64::NAN)))
        }
        None => {
            let torus = TorusGeometry::new(cfg.side)?;
            let beta = cfg.betas[0];
            let w = sample_couplings(&torus, cfg.seed);
            let hb = HeatBath::new(&w, &torus)?;
            let sigma = equilibrate(&hb, beta, cfg.burn_in(), &mut chain_rng(cfg.seed, beta, 0));
            Ok((w, sigma, beta))
        }
    }
}

fn write_edge_list(path: &Path, g: &DualSubgraph) -> Result<()> {
    let mut out = CsvOut::create(path, &["dual_edge"])?;
    for d in g.edges() {
        out.row([d.0.to_string()])?;
    }
    out.finish()
}

fn cmd_analyze(c: &Common, input: Option<&Path>) -> Result<()> {
    let (cfg, raw) = resolve(c)?;
    let dir = out_dir(&cfg)?;
    let Some(input) = input else {
        let mut report = run_cluster_sweep(&cfg)?;
        report.census = run_unsat_cycle_census(&cfg, Plaquette(cfg.census_plaquette), cfg.cycle_length_cap)?;
        report.experiment = "cluster-sweep+census".into();
        write_report(&report, &dir, raw.as_deref())?;
        return Ok(());
    };
    let (w, sigma, beta) = load_or_sample(&cfg, Some(input))?;
    let g = unsatisfied_set(&w, &sigma)?;
    let comp = components(&g);
    write_edge_list(&dir.join("unsat_edges.csv"), &g)?;
    let mut out = CsvOut::create(dir.join("components.csv"), &["measure", "size", "count"])?;
    for (measure, h) in [("vertices", &comp.vertex_histogram), ("edges", &comp.edge_histogram)] {
        for (s, k) in h {
            out.row([measure.to_string(), s.to_string(), k.to_string()])?;
        }
    }
    out.finish()?;
    #[derive(Serialize)]
    struct Summary {
        input: String,
        beta: f64,
        unsat_edges: usize,
        unsat_density: f64,
        frustrated_fraction: f64,
        components: usize,
        largest_vertices: usize,
        largest_edges: usize,
    }
    let torus = w.torus()?;
    write_json(
        dir.join("summary.json"),
        "analyze",
        &Summary {
            input: input.display().to_string(),
            beta,
            unsat_edges: g.len(),
            unsat_density: g.len() as f64 / torus.num_edges() as f64,
            frustrated_fraction: frustrated_fraction(&w)?,
            components: comp.count(),
            largest_vertices: comp.largest_vertices(),
            largest_edges: comp.largest_edges(),
        },
    )?;
    write_manifest(
        &dir,
        "analyze",
        &cfg,
        raw.as_deref(),
        vec!["unsat_edges.csv".into(), "components.csv".into(), "summary.json".into()],
    )
}

fn cmd_enumerate(c: &Common, mode: &str, max: usize, method: &str) -> Result<()> {
    let (cfg, raw) = resolve(c)?;
    let dir = out_dir(&cfg)?;
    let mode: AnimalMode = mode.parse()?;
    let table = match method {
        "redelmeier" => enumerate_animals(mode, max)?,
        "growth" => count_by_growth(mode, max)?,
        other => return Err(Error::Validation(format!("unknown method {other:?}"))),
    };
    let verdict = check_animal_bounds(&table);
    let animals = mode != AnimalMode::SimpleCyclesThroughOrigin;
    let mut out = CsvOut::create(dir.join("counts.csv"), &["n", "count", "lower_bound", "upper_bound"])?;
    for r in &verdict.rows {
        let (lo, hi) = if animals {
            (fmt_f64(r.lower_bound), fmt_f64(r.upper_bound))
        } else {
            (String::new(), String::new())
        };
        out.row([r.n.to_string(), r.count.to_string(), lo, hi])?;
    }
    out.finish()?;
    if animals && !verdict.pass {
        return Err(Error::Internal("animal counts outside 2^(n-1) <= count <= 32^n".into()));
    }
    write_manifest(&dir, "enumerate", &cfg, raw.as_deref(), vec!["counts.csv".into()])
}

fn cmd_forest(c: &Common, input: Option<&Path>, theta: Option<f64>) -> Result<()> {
    let (mut cfg, raw) = resolve(c)?;
    if theta.is_some() {
        cfg.forest_theta = theta;
    }
    let dir = out_dir(&cfg)?;
    let (w, sigma, beta) = load_or_sample(&cfg, input)?;
    let torus = w.torus()?;
    let g = unsatisfied_set(&w, &sigma)?;
    let seed = stream_key(cfg.seed, &[tag::CLOCK, beta.to_bits()]);
    let run = extract_forest(&g, &cfg.forest_params(), seed, cfg.forest_max_intervals)
        .map_err(|e| e.in_stage("forest"))?;
    let acyclic = is_forest(&run.forest);
    let partition = same_partition(&g, &run.forest);
    if !(acyclic && partition && run.forest.is_subset_of(&g)) {
        return Err(Error::Internal("forest extraction broke its invariants".into()));
    }
    write_edge_list(&dir.join("forest.csv"), &run.forest)?;
    let mut outputs = vec!["forest.csv".to_string()];

    let n = cfg.window_side().min(torus.side().saturating_sub(2));
    if n >= 1 {
        let mut rows = CsvOut::create(dir.join("bridges.csv"), &["N", "E_N", "Y_N", "N_log_N"])?;
        for k in 1..=n {
            let window = BoxGeometry::in_host(torus, k, (0, 0))?;
            let s = bridge_stats(&find_bridges(&run.forest, &window)?, &w);
            rows.row([
                s.side.to_string(),
                s.bridge_edges.to_string(),
                fmt_f64(s.bridge_weight),
                fmt_f64(s.n_log_n),
            ])?;
        }
        rows.finish()?;
        let window = BoxGeometry::in_host(torus, n, (0, 0))?;
        let mut d = decompose_regions(&find_bridges(&run.forest, &window)?)?;
        let colors = color_regions(&mut d, 5)?;
        write_grid(&dir.join("regions.csv"), n, |v| d.regions[v].to_string())?;
        write_grid(&dir.join("colors.csv"), n, |v| colors[d.regions[v]].to_string())?;
        outputs.extend(["bridges.csv", "regions.csv", "colors.csv"].map(String::from));
    }
    #[derive(Serialize)]
    struct Summary {
        beta: f64,
        unsat_edges: usize,
        forest_edges: usize,
        cycles: usize,
        theta: f64,
        max_edge_load: f64,
        active_intervals: u64,
        last_interval: u64,
        acyclic: bool,
        same_partition: bool,
    }
    write_json(
        dir.join("summary.json"),
        "forest",
        &Summary {
            beta,
            unsat_edges: g.len(),
            forest_edges: run.forest.len(),
            cycles: run.num_cycles,
            theta: run.theta,
            max_edge_load: run.max_edge_load,
            active_intervals: run.active_intervals,
            last_interval: run.last_interval,
            acyclic,
            same_partition: partition,
        },
    )?;
    outputs.push("summary.json".into());
    write_manifest(&dir, "forest", &cfg, raw.as_deref(), outputs)
}

/// `n` rows of `n` cells, top row first; cell `(x, y)` is local vertex `y n + x`.
fn write_grid(path: &Path, n: usize, cell: impl Fn(usize) -> String) -> Result<()> {
    let header: Vec<String> = (0..n).map(|x| format!("x{x}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut out = CsvOut::create(path, &header)?;
    for y in (0..n).rev() {
        out.row((0..n).map(|x| cell(y * n + x)))?;
    }
    out.finish()
}

fn cmd_flip_check(c: &Common, samples: Option<u64>, cycles: Option<usize>) -> Result<()> {
    let (mut cfg, raw) = resolve(c)?;
    if let Some(s) = samples {
        cfg.flip_samples = s;
    }
    if let Some(k) = cycles {
        cfg.flip_cycles = k;
    }
    let dir = out_dir(&cfg)?;
    let mut report = crate::experiments::ExperimentReport::empty(&cfg);
    report.experiment = "flip-check".into();
    report.flip_bounds = run_flip_check(&cfg)?;
    write_report(&report, &dir, raw.as_deref())?;
    let failed = report.flip_bounds.iter().filter(|r| !r.check.pass).count();
    if failed > 0 {
        eprintln!("flip-check: {failed} of {} cycles above the bound", report.flip_bounds.len());
    }
    Ok(())
}

fn cmd_pipeline(c: &Common) -> Result<()> {
    let (cfg, raw) = resolve(c)?;
    let dir = out_dir(&cfg)?;
    let report = run_pipeline(&cfg)?;
    write_report(&report, &dir, raw.as_deref())?;
    Ok(())
}

// ---------------------------------------------------------------- verify

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: u64,
    pub failed: u64,
}

fn tally(name: &'static str, checks: impl IntoIterator<Item = bool>) -> SuiteResult {
    let (mut passed, mut failed) = (0, 0);
    for ok in checks {
        if ok {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    SuiteResult { name, passed, failed }
}

/// Property suites over seeded random instances.
pub fn run_verify(seed: u64, quick: bool) -> Result<Vec<SuiteResult>> {
    let mut suites = Vec::new();
    let scale = if quick { 1 } else { 4 };

    // Parity of unsatisfied dual edges at each plaquette.
    let mut rng = stream(seed, &[1]);
    let mut checks = Vec::new();
    for _ in 0..500 * scale {
        let side = rng.random_range(3..9);
        let t = TorusGeometry::new(side)?;
        let w = sample_couplings(&t, rng.random());
        let sigma = SpinConfig::uniform(t.num_vertices(), &mut rng);
        checks.push(parity_violations(&w, &sigma)? == 0);
    }
    suites.push(tally("plaquette-parity", checks));

    // Single-flip and region-flip energies against full recomputation.
    let t4 = TorusGeometry::new(4)?;
    let mut checks = Vec::new();
    for _ in 0..100 * scale {
        let w = sample_couplings(&t4, rng.random());
        let sigma = SpinConfig::uniform(16, &mut rng);
        let region: Vec<Vertex> = (0..16).filter(|_| rng.random::<bool>()).map(Vertex).collect();
        let delta = flip_region_delta(&w, &t4, &sigma, &region)?;
        let full = energy(&w, &t4, &sigma.flipped_on(&region))? - energy(&w, &t4, &sigma)?;
        checks.push((delta - full).abs() < 1e-9);
    }
    suites.push(tally("flip-energy", checks));

    // DLR: conditional law of a box given its exterior equals the restricted table.
    let (side, n) = if quick { (4, 2) } else { (5, 3) };
    let t = TorusGeometry::new(side)?;
    let c = BoxGeometry::in_host(t, n, (1, 1))?;
    let mut checks = Vec::new();
    for k in 0..4 * scale {
        let w = sample_couplings(&t, stream_key(seed, &[2, k as u64]));
        let tau = SpinConfig::uniform(t.num_vertices(), &mut rng);
        let beta = InverseTemperature::Finite(rng.random_range(0.1..2.0));
        let law = conditional_law(&w, &c, &tau, beta)?;
        checks.push(exact_boltzmann(&w, &c, &tau, beta)?.total_variation(&law) < 1e-10);
    }
    suites.push(tally("dlr", checks));

    // Two enumerators agree and respect the growth bounds.
    let n_max = if quick { 6 } else { 8 };
    let mut checks = Vec::new();
    for mode in [AnimalMode::VertexAnimals, AnimalMode::EdgeAnimals] {
        let a = enumerate_animals(mode, n_max)?;
        let b = count_by_growth(mode, n_max)?;
        checks.push(a == b);
        checks.push(check_animal_bounds(&a).pass);
    }
    suites.push(tally("animals", checks));

    // Forest extraction keeps the vertex partition and removes every cycle.
    let cfg = ExperimentConfig {
        side: 8,
        betas: vec![1.0],
        sweeps: Some(200),
        seed,
        ..ExperimentConfig::default()
    };
    let t8 = TorusGeometry::new(8)?;
    let mut checks = Vec::new();
    for r in 0..5 * scale {
        let s = cfg.replica_seed(r);
        let w = sample_couplings(&t8, s);
        let hb = HeatBath::new(&w, &t8)?;
        let sigma = equilibrate(&hb, 1.0, 200, &mut chain_rng(s, 1.0, 0));
        let g = unsatisfied_set(&w, &sigma)?;
        match extract_forest(&g, &cfg.forest_params(), s, cfg.forest_max_intervals) {
            Ok(run) => checks.push(is_forest(&run.forest) && same_partition(&g, &run.forest)),
            Err(Error::Size { .. }) | Err(Error::BoundedRun { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    suites.push(tally("forest", checks));

    // Window pipeline: proper colorings, exact flip energies, encounter bound.
    let cfg = ExperimentConfig {
        side: 12,
        window: Some(8),
        betas: vec![2.0],
        sweeps: Some(300),
        seed,
        ..ExperimentConfig::default()
    };
    let mut checks = Vec::new();
    for r in 0..3 * scale {
        let row = pipeline_instance(&cfg, 2.0, r)?;
        checks.push(row.colors <= 5);
        checks.push((row.best_delta - row.recomputed_delta).abs() < 1e-9);
        checks.push(row.identity_residual.abs() < 1e-9);
        checks.push(!row.bound_applies || row.best_delta < 0.0);
        checks.push(row.encounter_points <= 4 * 8 - 4);
    }
    suites.push(tally("window", checks));

    // β = 0: unsatisfied indicators are fair and independent.
    let ind = beta_zero_independence(8, seed, 500 * scale as u64)?;
    suites.push(tally(
        "beta-zero",
        [ind.pass, (ind.unsat_fraction - 0.5).abs() < 0.02],
    ));

    // Dual bookkeeping: every dual edge joins the two plaquettes it separates.
    let mut checks = Vec::new();
    for d in 0..t8.num_edges() {
        let (a, b) = t8.dual_endpoints(DualEdge(d));
        checks.push(
            t8.plaquette_edges_unchecked(a).contains(&Edge(d)) && t8.plaquette_edges_unchecked(b).contains(&Edge(d)),
        );
    }
    suites.push(tally("dual-lattice", checks));
    Ok(suites)
}

fn cmd_verify(c: &Common, quick: bool) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let suites = run_verify(seed, quick)?;
    for s in &suites {
        println!("{:<18} passed {:>5}  failed {:>3}", s.name, s.passed, s.failed);
    }
    if let Some(dir) = &c.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = CsvOut::create(dir.join("verify.csv"), &["suite", "passed", "failed"])?;
        for s in &suites {
            out.row([s.name.to_string(), s.passed.to_string(), s.failed.to_string()])?;
        }
        out.finish()?;
    }
    let failed: u64 = suites.iter().map(|s| s.failed).sum();
    if failed > 0 {
        return Err(Error::Internal(format!("{failed} property checks failed")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let t = TorusGeometry::new(5).unwrap();
        let w = sample_couplings(&t, 9);
        let s = StateSnapshot {
            couplings: w,
            beta: Some(1.25),
            sweeps: Some(10),
            chain: Some(2),
            spins: Some(SpinConfig::uniform(25, &mut stream(1, &[]))),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        write_snapshot(&p, &s).unwrap();
        assert_eq!(read_snapshot(&p).unwrap(), s);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# format-version: 1\n"));
        assert!(matches!(parse_snapshot("side 3\n"), Err(Error::Parse(_))));
        let truncated: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        assert!(parse_snapshot(&truncated).is_err());
    }

    #[test]
    fn unknown_flags_and_bad_values_exit_one() {
        assert_eq!(main_with_args(["ealab", "sample", "--bogus"]), 1);
        assert_eq!(main_with_args(["ealab"]), 1);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(main_with_args(["ealab", "sample", "--side", "0", "--out", out]), 1);
        assert_eq!(main_with_args(["ealab", "enumerate", "--mode", "hex", "--out", out]), 1);
        assert_eq!(main_with_args(["ealab", "--help"]), 0);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "side = 10\nseed = 3\nbetas = [1.0]\n").unwrap();
        let c = Common {
            config: Some(p),
            seed: Some(8),
            ..Common::default()
        };
        let (cfg, raw) = resolve(&c).unwrap();
        assert_eq!(cfg.side, 10);
        assert_eq!(cfg.seed, 8);
        assert_eq!(raw.as_deref(), Some("side = 10\nseed = 3\nbetas = [1.0]\n"));
    }

    #[test]
    fn quick_verify_passes() {
        let suites = run_verify(0, true).unwrap();
        for s in &suites {
            assert_eq!(s.failed, 0, "{s:?}");
            assert!(s.passed > 0, "{s:?}");
        }
    }
}
