//! Deterministic discrete-event simulation of the asynchronous protocol.
//!
//! Every subgraph solves once at `t = 0` with its initial remote values, then
//! re-solves whenever a message arrives and sends its fresh port values on all
//! outgoing lines. Lines sharing sender, receiver and delay are bundled into
//! one link so a solve produces one message per link.
//!
//! Events are popped in `(time, kind, subgraph, sequence)` order with arrivals
//! ranked before publications and solves, so simultaneous arrivals at one
//! receiver trigger a single solve.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::io::Write;

use crate::engine::{assemble_all, gather_remote, local_update, BoundaryState, DtlpSpec, LocalSolution};
use crate::error::{structural, Error, Result};
use crate::evs::{Partition, PortRef, Side};
use crate::matrix::{norm2, CsrMatrix, SymmetricSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    /// `‖Ax − b‖ / ‖b‖ ≤ tol`, evaluated by an observer that sees every subgraph.
    Residual,
    /// No port value moved by more than `tol` during the trailing `window`.
    Stagnation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCriterion {
    pub mode: ConvergenceMode,
    pub tol: f64,
    pub window: f64,
}

impl ConvergenceCriterion {
    pub fn residual(tol: f64) -> Self {
        Self { mode: ConvergenceMode::Residual, tol, window: 0.0 }
    }

    pub fn stagnation(tol: f64, window: f64) -> Self {
        Self { mode: ConvergenceMode::Stagnation, tol, window }
    }
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self::residual(1e-8)
    }
}

/// What each sample keeps. `Residual` drops the port snapshots, which keeps
/// long runs on large partitions small.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecordMode {
    #[default]
    Full,
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// One entry per twin pair.
    pub dtlps: Vec<DtlpSpec>,
    /// Time per local solve, per subgraph; empty means zero everywhere.
    pub compute_delay: Vec<f64>,
    pub t_max: f64,
    pub convergence: ConvergenceCriterion,
    /// Port values each subgraph starts from; `None` is all zero.
    pub initial: Option<Vec<BoundaryState>>,
    pub record: RecordMode,
}

impl SimConfig {
    pub fn new(dtlps: Vec<DtlpSpec>, t_max: f64) -> Self {
        Self {
            dtlps,
            compute_delay: Vec::new(),
            t_max,
            convergence: ConvergenceCriterion::default(),
            initial: None,
            record: RecordMode::Full,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.convergence.tol = tol;
        self
    }

    fn validate(&self, p: &Partition) -> Result<()> {
        if !(self.t_max > 0.0) {
            return Err(Error::Config(format!("t_max must be positive, got {}", self.t_max)));
        }
        if !(self.convergence.tol > 0.0) {
            return Err(Error::Config(format!("tolerance must be positive, got {}", self.convergence.tol)));
        }
        if self.convergence.mode == ConvergenceMode::Stagnation && !(self.convergence.window > 0.0) {
            return Err(Error::Config("stagnation window must be positive".into()));
        }
        if self.dtlps.len() != p.twin_pairs().len() {
            return Err(Error::Config(format!(
                "partition has {} twin pairs but {} line pair specifications were given",
                p.twin_pairs().len(),
                self.dtlps.len()
            )));
        }
        for d in &self.dtlps {
            DtlpSpec::new(d.z, d.tau_fwd, d.tau_bwd)?;
        }
        if !self.compute_delay.is_empty() {
            if self.compute_delay.len() != p.len() {
                return Err(Error::Config(format!(
                    "expected {} compute delays, got {}",
                    p.len(),
                    self.compute_delay.len()
                )));
            }
            if let Some(c) = self.compute_delay.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
                return Err(Error::Config(format!("compute delay must be non-negative, got {c}")));
            }
        }
        if let Some(init) = &self.initial {
            if init.len() != p.len() || init.iter().enumerate().any(|(j, s)| s.ports.len() != p.ports(j).len()) {
                return Err(Error::Config("initial boundary state does not match the partition".into()));
            }
        }
        Ok(())
    }

    fn compute_delay_of(&self, j: usize) -> f64 {
        self.compute_delay.get(j).copied().unwrap_or(0.0)
    }

    /// Longest time for information to travel out and back across any line
    /// pair, including two solves.
    pub fn round_trip(&self) -> f64 {
        let lines = self.dtlps.iter().map(|d| d.tau_fwd + d.tau_bwd).fold(0.0, f64::max);
        let solve = self.compute_delay.iter().copied().fold(0.0, f64::max);
        lines + 2.0 * solve
    }
}

/// State after one subgraph published a new solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub subgraph: usize,
    /// Port values of `subgraph` (empty in residual-only recording).
    pub state: BoundaryState,
    /// `‖Ax − b‖₂ / √n` over the assembled potentials.
    pub rms_residual: f64,
    pub rel_residual: f64,
    /// Largest port-value change of `subgraph` caused by this publication.
    pub change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub converged_at: Option<f64>,
    pub event_count: usize,
    /// RMS residual of the all-zero potential vector.
    pub initial_rms: f64,
    pub t_end: f64,
    /// Last published potentials, per subgraph in vertex order.
    pub final_potentials: Vec<Vec<f64>>,
    pub final_states: Vec<BoundaryState>,
    /// Assembled potentials (copies averaged), 0-based original order.
    pub final_x: Vec<f64>,
    /// `vertex:pair` label of every port entry, per subgraph.
    pub port_labels: Vec<Vec<String>>,
}

impl Trace {
    pub fn final_rms(&self) -> f64 {
        self.samples.last().map_or(self.initial_rms, |s| s.rms_residual)
    }

    /// RMS residual in effect at time `t` (the last sample at or before `t`).
    pub fn rms_at(&self, t: f64) -> f64 {
        let k = self.samples.partition_point(|s| s.time <= t);
        if k == 0 {
            self.initial_rms
        } else {
            self.samples[k - 1].rms_residual
        }
    }

    /// Long-form CSV: one row per port of the publishing subgraph per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,subgraph,rms_residual,port_id,u,omega")?;
        for s in &self.samples {
            if s.state.ports.is_empty() {
                writeln!(w, "{},{},{:e},,,", s.time, s.subgraph, s.rms_residual)?;
                continue;
            }
            for (label, pv) in self.port_labels[s.subgraph].iter().zip(&s.state.ports) {
                writeln!(w, "{},{},{:e},{},{:e},{:e}", s.time, s.subgraph, s.rms_residual, label, pv.u, pv.omega)?;
            }
        }
        Ok(())
    }

    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        match self.converged_at {
            Some(t) => writeln!(w, "converged_at={t}")?,
            None => writeln!(w, "converged_at=none")?,
        }
        writeln!(w, "events={}", self.event_count)?;
        writeln!(w, "final_rms={:e}", self.final_rms())?;
        Ok(())
    }
}

/// Root-mean-square difference between `x` and `reference`.
pub fn rms_error(x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(structural(format!(
            "state has {} entries, reference has {}",
            x.len(),
            reference.len()
        )));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let ss: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

fn stagnated<'a>(tail: impl DoubleEndedIterator<Item = (f64, f64)> + 'a, now: f64, c: &ConvergenceCriterion) -> bool {
    let start = now - c.window;
    for (t, change) in tail.rev() {
        if t < start {
            // the window is fully covered
            return true;
        }
        if change > c.tol {
            return false;
        }
    }
    start <= 0.0 && now >= c.window
}

/// Convergence test on the tail of a trace.
pub fn check_converged(samples: &[Sample], criterion: &ConvergenceCriterion) -> bool {
    let Some(last) = samples.last() else {
        return false;
    };
    match criterion.mode {
        ConvergenceMode::Residual => last.rel_residual <= criterion.tol,
        ConvergenceMode::Stagnation => stagnated(
            samples.iter().map(|s| (s.time, s.change)),
            last.time,
            criterion,
        ),
    }
}

/// The original system recovered by summing every copy back onto its base
/// vertex.
pub fn observer_system(p: &Partition) -> Result<SymmetricSystem> {
    let n = p.original_len();
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut b = vec![0.0; n];
    for g in p.subgraphs() {
        for v in g.vertices() {
            let i = v.id.index - 1;
            *entries.entry((i, i)).or_default() += v.weight;
            b[i] += v.source;
        }
        for (x, y, w) in g.edge_ids() {
            let (i, j) = (x.index - 1, y.index - 1);
            if i == j {
                return Err(structural(format!("edge {x}-{y} joins copies of one vertex")));
            }
            *entries.entry((i.min(j), i.max(j))).or_default() += w;
        }
    }
    SymmetricSystem::new(n, entries.into_iter().map(|((i, j), v)| (i, j, v)), b)
}

/// Assembled potentials plus the residual they leave on the original system.
struct Observer {
    a: CsrMatrix,
    b: Vec<f64>,
    b_norm: f64,
    x: Vec<f64>,
    /// `(subgraph, vertex position)` of every copy of each original vertex.
    copies: Vec<Vec<(usize, usize)>>,
    /// Original index of each vertex of each subgraph.
    base: Vec<Vec<usize>>,
}

impl Observer {
    fn new(p: &Partition) -> Result<Self> {
        let sys = observer_system(p)?;
        let n = sys.dim();
        let mut copies = vec![Vec::new(); n];
        let base: Vec<Vec<usize>> = p
            .subgraphs()
            .iter()
            .map(|g| g.vertices().iter().map(|v| v.id.index - 1).collect())
            .collect();
        for (j, idx) in base.iter().enumerate() {
            for (pos, &i) in idx.iter().enumerate() {
                copies[i].push((j, pos));
            }
        }
        let b = sys.rhs().to_vec();
        Ok(Self {
            a: sys.to_csr(),
            b_norm: norm2(&b),
            b,
            x: vec![0.0; n],
            copies,
            base,
        })
    }

    fn update(&mut self, j: usize, potentials: &[Vec<f64>]) {
        for &i in &self.base[j] {
            let c = &self.copies[i];
            let sum: f64 = c.iter().map(|&(k, pos)| potentials[k][pos]).sum();
            self.x[i] = sum / c.len() as f64;
        }
    }

    /// `(rms, relative)` residual of the current potentials.
    fn residual(&self) -> (f64, f64) {
        let r = self.a.residual(&self.x, &self.b);
        let nr = norm2(&r);
        let n = self.x.len().max(1) as f64;
        let rel = if self.b_norm > 0.0 { nr / self.b_norm } else { nr };
        (nr / n.sqrt(), rel)
    }

    fn initial_rms(&self) -> f64 {
        self.b_norm / (self.x.len().max(1) as f64).sqrt()
    }
}

/// Shared bookkeeping for the asynchronous and synchronous drivers.
struct Recorder<'a> {
    cfg: &'a SimConfig,
    observer: Observer,
    potentials: Vec<Vec<f64>>,
    states: Vec<BoundaryState>,
    samples: Vec<Sample>,
    tail: VecDeque<(f64, f64)>,
    converged_at: Option<f64>,
}

impl<'a> Recorder<'a> {
    fn new(p: &Partition, cfg: &'a SimConfig) -> Result<Self> {
        let states = match &cfg.initial {
            Some(init) => init.clone(),
            None => (0..p.len()).map(|j| BoundaryState::zeros(p.ports(j).len())).collect(),
        };
        Ok(Self {
            cfg,
            observer: Observer::new(p)?,
            potentials: p.subgraphs().iter().map(|g| vec![0.0; g.len()]).collect(),
            states,
            samples: Vec::new(),
            tail: VecDeque::new(),
            converged_at: None,
        })
    }

    /// Records a publication; returns true once converged.
    fn publish(&mut self, t: f64, j: usize, vertex_order: Vec<f64>, sol: &LocalSolution) -> bool {
        let state = BoundaryState::from_solution(sol, t);
        let change = state.max_change(&self.states[j]);
        self.potentials[j] = vertex_order;
        self.observer.update(j, &self.potentials);
        let (rms, rel) = self.observer.residual();
        self.samples.push(Sample {
            time: t,
            subgraph: j,
            state: match self.cfg.record {
                RecordMode::Full => state.clone(),
                RecordMode::Residual => BoundaryState { ports: Vec::new() },
            },
            rms_residual: rms,
            rel_residual: rel,
            change,
        });
        self.states[j] = state;
        let c = &self.cfg.convergence;
        let done = match c.mode {
            ConvergenceMode::Residual => rel <= c.tol,
            ConvergenceMode::Stagnation => {
                self.tail.push_back((t, change));
                while self.tail.front().is_some_and(|&(s, _)| s < t - 2.0 * c.window) {
                    self.tail.pop_front();
                }
                stagnated(self.tail.iter().copied(), t, c)
            }
        };
        if done {
            self.converged_at = Some(t);
        }
        done
    }

    fn finish(self, p: &Partition, event_count: usize, t_end: f64) -> Trace {
        Trace {
            initial_rms: self.observer.initial_rms(),
            samples: self.samples,
            converged_at: self.converged_at,
            event_count,
            t_end,
            final_potentials: self.potentials,
            final_states: self.states,
            final_x: self.observer.x,
            port_labels: port_labels(p),
        }
    }
}

pub fn port_labels(p: &Partition) -> Vec<Vec<String>> {
    (0..p.len())
        .map(|j| {
            p.ports(j)
                .iter()
                .map(|&port| format!("{}:{}", p.end(port).vertex, port.pair))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Arrival = 0,
    Publish = 1,
    Solve = 2,
}

#[derive(Debug)]
struct Event {
    time: f64,
    kind: Kind,
    subgraph: usize,
    seq: u64,
    /// Link index and `(receiver entry, u, ω)` triples for arrivals.
    payload: Option<(usize, Vec<(usize, f64, f64)>)>,
}

impl Event {
    fn key(&self) -> (f64, Kind, usize, u64) {
        (self.time, self.kind, self.subgraph, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    }
}

/// Lines bundled by (sender, receiver, delay).
#[derive(Debug, Clone)]
struct Link {
    to: usize,
    delay: f64,
    /// (sender entry, receiver entry)
    entries: Vec<(usize, usize)>,
}

fn build_links(p: &Partition, dtlps: &[DtlpSpec]) -> Vec<Vec<Link>> {
    let mut grouped: BTreeMap<(usize, usize, u64), Vec<(usize, usize)>> = BTreeMap::new();
    for (pair, d) in dtlps.iter().enumerate() {
        for side in [Side::A, Side::B] {
            let from = PortRef { pair, side };
            let to = from.twin();
            let key = (p.end(from).subgraph, p.end(to).subgraph, d.delay_from(side).to_bits());
            grouped.entry(key).or_default().push((p.slot(from), p.slot(to)));
        }
    }
    let mut links: Vec<Vec<Link>> = vec![Vec::new(); p.len()];
    for ((from, to, bits), entries) in grouped {
        links[from].push(Link { to, delay: f64::from_bits(bits), entries });
    }
    links
}

/// Runs the asynchronous protocol until convergence or `t_max`.
pub fn run_async(p: &Partition, cfg: &SimConfig) -> Result<Trace> {
    cfg.validate(p)?;
    let systems = assemble_all(p, &cfg.dtlps)?;
    let links = build_links(p, &cfg.dtlps);
    let mut rec = Recorder::new(p, cfg)?;

    let n_sub = p.len();
    let mut remote: Vec<(Vec<f64>, Vec<f64>)> = systems
        .iter()
        .map(|ls| gather_remote(ls, &rec.states))
        .collect::<Result<_>>()?;
    let mut busy = vec![false; n_sub];
    let mut dirty = vec![false; n_sub];
    let mut solve_pending = vec![false; n_sub];
    let mut in_flight: Vec<Option<LocalSolution>> = vec![None; n_sub];

    let mut queue: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |queue: &mut BinaryHeap<Reverse<Event>>, time, kind, subgraph, payload| {
        queue.push(Reverse(Event { time, kind, subgraph, seq, payload }));
        seq += 1;
    };
    for j in 0..n_sub {
        push(&mut queue, 0.0, Kind::Solve, j, None);
        solve_pending[j] = true;
    }

    let mut events = 0usize;
    let mut t_end = 0.0;
    while let Some(Reverse(ev)) = queue.pop() {
        if ev.time > cfg.t_max {
            break;
        }
        events += 1;
        t_end = ev.time;
        let j = ev.subgraph;
        let publish_now = match ev.kind {
            Kind::Arrival => {
                let (_, values) = ev.payload.expect("arrival carries a payload");
                let (ru, rw) = &mut remote[j];
                for (entry, u, w) in values {
                    ru[entry] = u;
                    rw[entry] = w;
                }
                if busy[j] {
                    dirty[j] = true;
                } else if !solve_pending[j] {
                    solve_pending[j] = true;
                    push(&mut queue, ev.time, Kind::Solve, j, None);
                }
                None
            }
            Kind::Solve => {
                solve_pending[j] = false;
                let sol = local_update(&systems[j], &remote[j].0, &remote[j].1)?;
                let c = cfg.compute_delay_of(j);
                if c > 0.0 {
                    busy[j] = true;
                    in_flight[j] = Some(sol);
                    push(&mut queue, ev.time + c, Kind::Publish, j, None);
                    None
                } else {
                    Some(sol)
                }
            }
            Kind::Publish => {
                busy[j] = false;
                if dirty[j] {
                    dirty[j] = false;
                    solve_pending[j] = true;
                    push(&mut queue, ev.time, Kind::Solve, j, None);
                }
                in_flight[j].take()
            }
        };
        if let Some(sol) = publish_now {
            let vertex_order = systems[j].to_vertex_order(&sol.x);
            if rec.publish(ev.time, j, vertex_order, &sol) {
                break;
            }
            for (li, link) in links[j].iter().enumerate() {
                let values = link
                    .entries
                    .iter()
                    .map(|&(s, r)| (r, sol.u[s], sol.omega[s]))
                    .collect();
                push(&mut queue, ev.time + link.delay, Kind::Arrival, link.to, Some((li, values)));
            }
        }
    }
    Ok(rec.finish(p, events, t_end))
}

/// Synchronous sweeps; iterate `k` (from 1) is stamped at time `k − 1`, which
/// is when a unit-delay asynchronous run produces it. Delays in `cfg` are
/// ignored; only impedances are used. Subgraphs without ports are solved in
/// the first sweep only.
pub fn run_vtm(p: &Partition, cfg: &SimConfig, k_max: usize) -> Result<Trace> {
    cfg.validate(p)?;
    let systems = assemble_all(p, &cfg.dtlps)?;
    let mut rec = Recorder::new(p, cfg)?;
    let mut events = 0usize;
    let mut t_end = 0.0;
    'sweeps: for k in 1..=k_max {
        let t = (k - 1) as f64;
        let previous = rec.states.clone();
        let mut solutions = Vec::with_capacity(systems.len());
        for ls in &systems {
            if k > 1 && ls.n_ports() == 0 {
                solutions.push(None);
                continue;
            }
            let (ru, rw) = gather_remote(ls, &previous)?;
            solutions.push(Some(local_update(ls, &ru, &rw)?));
        }
        t_end = t;
        for (j, sol) in solutions.into_iter().enumerate() {
            let Some(sol) = sol else { continue };
            events += 1;
            if rec.publish(t, j, systems[j].to_vertex_order(&sol.x), &sol) {
                break 'sweeps;
            }
        }
    }
    Ok(rec.finish(p, events, t_end))
}
