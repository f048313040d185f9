//! Problem generators, processor topologies, the delay mapping and the
//! experiment drivers behind the command-line tool.
//!
//! Random streams are ChaCha8 seeded with `seed_from_u64`, so every generated
//! system, topology and trace replays across platforms.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::DtlpSpec;
use crate::error::{Error, Result};
use crate::evs::{apply_split, multilevel_split, validate_partition, Partition, SplitPlan};
use crate::graph::{graph_from_system, VertexId};
use crate::matrix::{direct_solve, DefinitenessClass, SymmetricSystem};
use crate::sim::{rms_error, run_async, run_vtm, ConvergenceCriterion, RecordMode, SimConfig, Trace};

/// Largest system for which `run_case` computes a dense reference solution.
pub const REFERENCE_LIMIT: usize = 1500;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sparse, strictly diagonally dominant system with `b` uniform in `[-1, 1]`.
///
/// Each off-diagonal pair is filled with probability `density`, magnitude
/// uniform in `[0.1, 1]` and random sign. The diagonal is the absolute row
/// sum plus a margin uniform in `[0.5, 1.5]`.
pub fn gen_random_spd(n: usize, density: f64, seed: u64) -> Result<SymmetricSystem> {
    if n == 0 {
        return Err(Error::Config("system order must be at least 1".into()));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    let mut r = rng(seed);
    let mut entries = Vec::new();
    let mut row_sum = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            if r.random_bool(density) {
                let mag: f64 = r.random_range(0.1..=1.0);
                let v = if r.random_bool(0.5) { mag } else { -mag };
                entries.push((i, j, v));
                row_sum[i] += mag;
                row_sum[j] += mag;
            }
        }
    }
    for (i, s) in row_sum.iter().enumerate() {
        entries.push((i, i, s + r.random_range(0.5..=1.5)));
    }
    let b = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
    SymmetricSystem::new(n, entries, b)
}

/// Five-point system on a `rows × cols` vertex grid; vertex `(r, c)` is
/// unknown `r·cols + c`. Couplings are `−U[0.1, 1]` and the diagonal is twice
/// the absolute row sum plus `U[0.1, 1]`, so any half split stays SPD.
pub fn gen_grid_spd(rows: usize, cols: usize, seed: u64) -> Result<SymmetricSystem> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("grid must have at least one row and column".into()));
    }
    let n = rows * cols;
    let mut r = rng(seed);
    let mut entries = Vec::new();
    let mut row_sum = vec![0.0; n];
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut couple = |other: usize, r: &mut ChaCha8Rng| {
                let mag: f64 = r.random_range(0.1..=1.0);
                entries.push((k, other, -mag));
                row_sum[k] += mag;
                row_sum[other] += mag;
            };
            if j + 1 < cols {
                couple(k + 1, &mut r);
            }
            if i + 1 < rows {
                couple(k + cols, &mut r);
            }
        }
    }
    for (k, s) in row_sum.iter().enumerate() {
        entries.push((k, k, 2.0 * s + r.random_range(0.1..=1.0)));
    }
    let b = (0..n).map(|_| r.random_range(-1.0..=1.0)).collect();
    SymmetricSystem::new(n, entries, b)
}

/// Directed processor links with fixed delays.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    links: BTreeMap<(usize, usize), f64>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: usize, to: usize, delay: f64) -> Result<()> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(Error::Config(format!("link {from}->{to} has non-positive delay {delay}")));
        }
        if self.links.insert((from, to), delay).is_some() {
            return Err(Error::Config(format!("link {from}->{to} listed twice")));
        }
        Ok(())
    }

    pub fn delay(&self, from: usize, to: usize) -> Option<f64> {
        self.links.get(&(from, to)).copied()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.links.iter().map(|(&(f, t), &d)| (f, t, d))
    }

    /// `L from to delay` lines; `#` starts a comment line.
    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        let mut topo = Topology::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let perr = |m: &str| Error::Parse { line: idx + 1, message: m.to_string() };
            match t.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["L", f, to, d] => {
                    let f = f.parse().map_err(|_| perr("bad source node"))?;
                    let to = to.parse().map_err(|_| perr("bad target node"))?;
                    let d = d.parse().map_err(|_| perr("bad delay"))?;
                    topo.insert(f, to, d).map_err(|e| perr(&e.to_string()))?;
                }
                _ => return Err(perr(&format!("expected 'L from to delay', got '{t}'"))),
            }
        }
        Ok(topo)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (f, t, d) in self.links() {
            writeln!(w, "L {f} {t} {d}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshTopology {
    pub rows: usize,
    pub cols: usize,
    pub topology: Topology,
}

impl MeshTopology {
    pub fn node(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }
}

/// Mesh of `rows × cols` processors (node `r·cols + c`) with an independent
/// uniform delay in `[delay_min, delay_max]` on each direction of every
/// adjacency.
pub fn gen_mesh_topology(rows: usize, cols: usize, delay_min: f64, delay_max: f64, seed: u64) -> Result<MeshTopology> {
    if rows == 0 || cols == 0 {
        return Err(Error::Config("mesh must have at least one row and column".into()));
    }
    if !(delay_min > 0.0 && delay_min <= delay_max && delay_max.is_finite()) {
        return Err(Error::Config(format!("invalid delay range [{delay_min}, {delay_max}]")));
    }
    let mut r = rng(seed);
    let mut topology = Topology::new();
    for i in 0..rows {
        for j in 0..cols {
            let k = i * cols + j;
            let mut neighbours = Vec::new();
            if j + 1 < cols {
                neighbours.push(k + 1);
            }
            if i + 1 < rows {
                neighbours.push(k + cols);
            }
            for m in neighbours {
                topology.insert(k, m, r.random_range(delay_min..=delay_max))?;
                topology.insert(m, k, r.random_range(delay_min..=delay_max))?;
            }
        }
    }
    Ok(MeshTopology { rows, cols, topology })
}

/// Line pair specifications from processor link delays: pair `k` joins
/// processors `placement[a]` and `placement[b]` of its two ends and takes the
/// two directed delays between them.
pub fn map_delays(p: &Partition, topo: &Topology, placement: &[usize], z: &[f64]) -> Result<Vec<DtlpSpec>> {
    if placement.len() != p.len() {
        return Err(Error::Config(format!(
            "placement lists {} processors for {} subgraphs",
            placement.len(),
            p.len()
        )));
    }
    if z.len() != p.twin_pairs().len() {
        return Err(Error::Config(format!("{} impedances for {} twin pairs", z.len(), p.twin_pairs().len())));
    }
    p.twin_pairs()
        .iter()
        .zip(z)
        .map(|(pair, &z)| {
            let (from, to) = (placement[pair.a.subgraph], placement[pair.b.subgraph]);
            let lookup = |f, t| {
                topo.delay(f, t)
                    .ok_or_else(|| Error::Config(format!("topology has no link {f}->{t}")))
            };
            DtlpSpec::new(z, lookup(from, to)?, lookup(to, from)?)
        })
        .collect()
}

/// Impedance per twin pair: one value everywhere, or per base vertex with an
/// optional fallback.
#[derive(Debug, Clone, PartialEq)]
pub enum Impedance {
    Uniform(f64),
    PerVertex { values: BTreeMap<usize, f64>, default: Option<f64> },
}

impl Impedance {
    /// `Z vertex value` and `DEFAULT value` lines.
    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        let mut values = BTreeMap::new();
        let mut default = None;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let perr = |m: String| Error::Parse { line: idx + 1, message: m };
            let num = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad impedance '{s}'")));
            match t.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["Z", v, z] => {
                    let v = v.parse().map_err(|_| perr(format!("bad vertex '{v}'")))?;
                    values.insert(v, num(z)?);
                }
                ["DEFAULT", z] => default = Some(num(z)?),
                _ => return Err(perr(format!("expected 'Z vertex value' or 'DEFAULT value', got '{t}'"))),
            }
        }
        Ok(Impedance::PerVertex { values, default })
    }

    /// A number is a uniform impedance; anything else names a file.
    pub fn parse_arg(arg: &str) -> Result<Self> {
        match arg.parse::<f64>() {
            Ok(z) => Ok(Impedance::Uniform(z)),
            Err(_) => Self::read_text(fs::File::open(arg)?),
        }
    }

    pub fn resolve(&self, p: &Partition) -> Result<Vec<f64>> {
        let z: Vec<f64> = match self {
            Impedance::Uniform(z) => vec![*z; p.twin_pairs().len()],
            Impedance::PerVertex { values, default } => p
                .twin_pairs()
                .iter()
                .map(|pair| {
                    let v = pair.a.vertex.index;
                    values
                        .get(&v)
                        .copied()
                        .or(*default)
                        .ok_or_else(|| Error::Config(format!("no impedance for vertex {v}")))
                })
                .collect::<Result<_>>()?,
        };
        if let Some(bad) = z.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
            return Err(Error::Config(format!("impedance must be positive, got {bad}")));
        }
        Ok(z)
    }
}

/// Tears a `(bh·h + 1) × (bw·h + 1)` vertex grid into `bh × bw` blocks of side
/// `h`: row bands first, then each band along the interface columns. Block
/// `(i, j)` becomes subgraph `i·bw + j`. Interface vertices are split in half,
/// so a vertex on an interface crossing ends up in four blocks joined by three
/// pairs.
pub fn grid_block_partition(sys: &SymmetricSystem, bh: usize, bw: usize, h: usize) -> Result<Partition> {
    if bh == 0 || bw == 0 || h < 2 {
        return Err(Error::Config("need at least one block per side and block side ≥ 2".into()));
    }
    let (rows, cols) = (bh * h + 1, bw * h + 1);
    if sys.dim() != rows * cols {
        return Err(Error::Config(format!(
            "a {bh}×{bw} block grid of side {h} needs {} unknowns, system has {}",
            rows * cols,
            sys.dim()
        )));
    }
    // band of a coordinate, or the two bands it separates
    let band = |x: usize, blocks: usize| -> (usize, Option<usize>) {
        if x.is_multiple_of(h) && x > 0 && x < blocks * h {
            (x / h - 1, Some(x / h))
        } else {
            ((x / h).min(blocks - 1), None)
        }
    };
    let coords = |id: &VertexId| ((id.index - 1) / cols, (id.index - 1) % cols);

    let g = graph_from_system(sys);
    let mut plan = SplitPlan::new();
    for v in g.vertices() {
        let (r, _) = coords(&v.id);
        plan = match band(r, bh) {
            (a, Some(b)) => plan.split(v.id.clone(), a, b),
            (a, None) => plan.assign(v.id.clone(), a),
        };
    }
    let mut p = apply_split(&g, &plan)?;

    if bw > 1 {
        for j in 0..bh {
            let sub = p.subgraph(j).clone();
            let mut plan = SplitPlan::new();
            for v in sub.vertices() {
                let (_, c) = coords(&v.id);
                plan = match band(c, bw) {
                    (a, Some(b)) => plan.split(v.id.clone(), a, b),
                    (a, None) => plan.assign(v.id.clone(), a),
                };
            }
            p = multilevel_split(&p, j, &plan)?;
        }
    }

    // place each subgraph by the mean coordinate of its vertices
    let mut order = vec![usize::MAX; bh * bw];
    for (k, sub) in p.subgraphs().iter().enumerate() {
        let n = sub.len() as f64;
        let (sr, sc) = sub.vertices().iter().fold((0.0, 0.0), |(a, b), v| {
            let (r, c) = coords(&v.id);
            (a + r as f64, b + c as f64)
        });
        let (bi, bj) = (((sr / n) / h as f64) as usize, ((sc / n) / h as f64) as usize);
        let slot = bi.min(bh - 1) * bw + bj.min(bw - 1);
        if order[slot] != usize::MAX {
            return Err(Error::Config(format!("two subgraphs land on block {slot}")));
        }
        order[slot] = k;
    }
    p.permuted(&order)
}

/// Random system of order `n` with every vertex split between two subgraphs,
/// weight, source and edge fractions uniform in `[0.3, 0.7]`. Redrawn until
/// both halves are SPD.
pub fn random_all_split(n: usize, density: f64, seed: u64) -> Result<(SymmetricSystem, Partition)> {
    let mut r = rng(seed);
    for _ in 0..100 {
        let sys = gen_random_spd(n, density, r.random())?;
        let g = graph_from_system(&sys);
        let mut plan = SplitPlan::new();
        for v in 1..=n {
            plan = plan.split_with(v, 0, 1, r.random_range(0.3..=0.7), r.random_range(0.3..=0.7));
        }
        for (a, b, _) in g.edge_ids() {
            plan = plan.edge(a.clone(), b.clone(), r.random_range(0.3..=0.7));
        }
        let p = apply_split(&g, &plan)?;
        let report = validate_partition(&p, &g)?;
        if report.classes.iter().all(|c| *c == DefinitenessClass::Spd) {
            return Ok((sys, p));
        }
    }
    Err(Error::Config(format!("no SPD/SPD split found for order {n}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RunMode {
    #[default]
    Async,
    Vtm,
}

/// A fully resolved run: system, partition, line pairs and stopping rule.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SymmetricSystem,
    pub partition: Partition,
    pub dtlps: Vec<DtlpSpec>,
    pub compute_delay: f64,
    pub criterion: ConvergenceCriterion,
    pub t_max: f64,
    pub mode: RunMode,
    pub record: RecordMode,
}

impl ExperimentConfig {
    pub fn sim_config(&self) -> SimConfig {
        let mut cfg = SimConfig::new(self.dtlps.clone(), self.t_max);
        cfg.convergence = self.criterion;
        cfg.record = self.record;
        if self.compute_delay > 0.0 {
            cfg.compute_delay = vec![self.compute_delay; self.partition.len()];
        }
        cfg
    }

    /// Dense reference solution, when the system is small enough.
    pub fn reference(&self) -> Result<Option<Vec<f64>>> {
        if self.system.dim() > REFERENCE_LIMIT {
            return Ok(None);
        }
        direct_solve(&self.system.to_dense(), self.system.rhs()).map(Some)
    }
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub trace: Trace,
    /// RMS distance of the final potentials from the reference solution.
    pub final_error: Option<f64>,
}

fn simulate(cfg: &ExperimentConfig, sim: &SimConfig) -> Result<Trace> {
    match cfg.mode {
        RunMode::Async => run_async(&cfg.partition, sim),
        RunMode::Vtm => run_vtm(&cfg.partition, sim, cfg.t_max.floor() as usize + 1),
    }
}

/// Runs one case and, given a directory, writes `trace.csv` and `summary.txt` there.
pub fn run_case(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<CaseResult> {
    let trace = simulate(cfg, &cfg.sim_config())?;
    let final_error = match cfg.reference()? {
        Some(x) => Some(rms_error(&trace.final_x, &x)?),
        None => None,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        trace.write_csv(std::io::BufWriter::new(fs::File::create(dir.join("trace.csv"))?))?;
        trace.write_summary(fs::File::create(dir.join("summary.txt"))?)?;
    }
    Ok(CaseResult { trace, final_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub z: Vec<f64>,
    /// RMS error against the reference at the sample time.
    pub rms_at: f64,
    pub converged_at: Option<f64>,
}

/// One run per impedance vector (one value per twin pair), everything else
/// fixed. Rows come back in grid order.
pub fn impedance_sweep(cfg: &ExperimentConfig, grid: &[Vec<f64>], sample_time: f64) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::Config("impedance grid is empty".into()));
    }
    if !(sample_time > 0.0) {
        return Err(Error::Config(format!("sample time must be positive, got {sample_time}")));
    }
    let reference = cfg
        .reference()?
        .ok_or_else(|| Error::Config(format!("sweeps need a system of at most {REFERENCE_LIMIT} unknowns")))?;
    grid.par_iter()
        .map(|z| {
            if z.len() != cfg.dtlps.len() {
                return Err(Error::Config(format!("grid point has {} impedances for {} pairs", z.len(), cfg.dtlps.len())));
            }
            let dtlps = cfg
                .dtlps
                .iter()
                .zip(z)
                .map(|(d, &z)| DtlpSpec::new(z, d.tau_fwd, d.tau_bwd))
                .collect::<Result<Vec<_>>>()?;
            let mut sim = cfg.sim_config();
            sim.dtlps = dtlps;
            sim.record = RecordMode::Residual;
            let full = simulate(cfg, &sim)?;
            sim.t_max = sample_time;
            let early = simulate(cfg, &sim)?;
            Ok(SweepRow {
                z: z.clone(),
                rms_at: rms_error(&early.final_x, &reference)?,
                converged_at: full.converged_at,
            })
        })
        .collect()
}

/// Every combination of `values` across `pairs` impedances, last pair fastest.
pub fn cartesian_grid(values: &[f64], pairs: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![Vec::new()];
    for _ in 0..pairs {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect();
    }
    grid
}

pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    let pairs = rows.first().map_or(0, |r| r.z.len());
    let header: Vec<String> = (0..pairs).map(|k| format!("z{k}")).collect();
    writeln!(w, "{},rms_at,converged_at", header.join(","))?;
    for r in rows {
        let z: Vec<String> = r.z.iter().map(|z| z.to_string()).collect();
        let conv = r.converged_at.map_or("none".to_string(), |t| t.to_string());
        writeln!(w, "{},{:e},{}", z.join(","), r.rms_at, conv)?;
    }
    Ok(())
}

/// Parameters of a scaled mesh experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshSpec {
    pub blocks: usize,
    pub block_side: usize,
    pub delay_min: f64,
    pub delay_max: f64,
    pub z: f64,
    pub compute_delay: f64,
    pub tol: f64,
    pub t_max: f64,
    pub seed: u64,
}

impl MeshSpec {
    pub fn unknowns(&self) -> usize {
        let side = self.blocks * self.block_side + 1;
        side * side
    }
}

/// Grid system, block partition onto a `blocks × blocks` processor mesh and
/// mapped line pairs. The system uses `seed`, the topology `seed + 1`.
pub fn mesh_experiment(spec: &MeshSpec) -> Result<(ExperimentConfig, MeshTopology)> {
    let side = spec.blocks * spec.block_side + 1;
    let system = gen_grid_spd(side, side, spec.seed)?;
    let partition = grid_block_partition(&system, spec.blocks, spec.blocks, spec.block_side)?;
    let mesh = gen_mesh_topology(spec.blocks, spec.blocks, spec.delay_min, spec.delay_max, spec.seed.wrapping_add(1))?;
    let placement: Vec<usize> = (0..partition.len()).collect();
    let z = vec![spec.z; partition.twin_pairs().len()];
    let dtlps = map_delays(&partition, &mesh.topology, &placement, &z)?;
    let cfg = ExperimentConfig {
        system,
        partition,
        dtlps,
        compute_delay: spec.compute_delay,
        criterion: ConvergenceCriterion::residual(spec.tol),
        t_max: spec.t_max,
        mode: RunMode::Async,
        record: RecordMode::Residual,
    };
    Ok((cfg, mesh))
}

/// Outcome of one named check of [`verify_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (r.random_range(lo.ln()..=hi.ln())).exp()
}

/// Randomized checks of the spectral machinery: `Z·A` eigenvalues against
/// the symmetric form, the `Λ` magnitude bounds, and for all-split
/// two-subgraph cases the synchronous fixed point, the final-value limit
/// and `det(I − T(s))` on the right half-plane grid.
pub fn verify_suite(seed: u64, cases: usize) -> Result<Vec<Check>> {
    use crate::spectral::{lambda_bounds, min_det_on_grid, za_eigen, TwoSplit};
    let mut r = rng(seed);
    let mut checks = Vec::new();

    let mut failures = Vec::new();
    for k in 0..cases {
        let n = r.random_range(1..=16);
        let a = gen_random_spd(n, 0.4, r.random())?.to_dense();
        let z: Vec<f64> = (0..n).map(|_| log_uniform(&mut r, 0.01, 100.0)).collect();
        if let Err(e) = za_eigen(&a, &z) {
            failures.push(format!("case {k}: {e}"));
        }
    }
    checks.push(Check {
        name: "za_eigen".into(),
        passed: failures.is_empty(),
        detail: if failures.is_empty() { format!("{cases} cases") } else { failures.join("; ") },
    });

    let t: Vec<f64> = (0..1000)
        .map(|_| log_uniform(&mut r, 1e-3, 1e3))
        .filter(|t| (t - 1.0).abs() > 1e-9)
        .collect();
    let lambda = lambda_bounds(&t);
    checks.push(Check {
        name: "lambda_bounds".into(),
        passed: lambda.is_ok(),
        detail: match lambda {
            Ok(_) => format!("{} values", t.len()),
            Err(e) => e.to_string(),
        },
    });

    let mut worst_limit: f64 = 0.0;
    let mut worst_fixed: f64 = 0.0;
    let mut min_det = f64::INFINITY;
    let mut unconverged = 0;
    for _ in 0..cases {
        let n = r.random_range(2..=8);
        let (sys, p) = random_all_split(n, 0.5, r.random())?;
        let dtlps = (0..n)
            .map(|_| DtlpSpec::new(log_uniform(&mut r, 0.1, 10.0), r.random_range(0.5..=5.0), r.random_range(0.5..=5.0)))
            .collect::<Result<Vec<_>>>()?;
        let split = TwoSplit::from_partition(&p, &dtlps)?;
        let x = direct_solve(&sys.to_dense(), sys.rhs())?;
        // pair k of an all-split partition is original vertex k
        let base: Vec<usize> = p.twin_pairs().iter().map(|pair| pair.a.vertex.index - 1).collect();
        let limit = split.final_value_limit()?;
        for (k, &i) in base.iter().enumerate() {
            worst_limit = worst_limit.max((limit[k] - x[i]).abs());
        }
        min_det = min_det.min(min_det_on_grid(&split)?);
        let mut sim = SimConfig::new(dtlps, 1.0);
        sim.convergence = ConvergenceCriterion::residual(1e-13);
        sim.record = RecordMode::Residual;
        let trace = run_vtm(&p, &sim, 100_000)?;
        if trace.converged_at.is_none() {
            unconverged += 1;
        }
        worst_fixed = worst_fixed.max(rms_error(&trace.final_x, &x)? * (n as f64).sqrt());
    }
    checks.push(Check {
        name: "final_value_limit".into(),
        passed: worst_limit <= 1e-8,
        detail: format!("max deviation from the direct solution {worst_limit:e}"),
    });
    checks.push(Check {
        name: "vtm_fixed_point".into(),
        passed: unconverged == 0 && worst_fixed <= 1e-8,
        detail: format!("{unconverged} unconverged, max deviation {worst_fixed:e}"),
    });
    checks.push(Check {
        name: "det_right_half_plane".into(),
        passed: min_det > 1e-12,
        detail: format!("min |det(I - T(s))| {min_det:e}"),
    });
    Ok(checks)
}
