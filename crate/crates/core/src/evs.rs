//! Electric vertex splitting.
//!
//! A [`SplitPlan`] names a boundary, the subgraph of every inner vertex and the
//! pair of subgraphs receiving the twins of every boundary vertex. Applying it
//! apportions weights, sources and boundary-edge weights between the twins and
//! records one twin pair per split vertex. Splits can be applied again to a
//! single subgraph of an existing [`Partition`] (multilevel tearing).
//!
//! Edge rules:
//! * inner–inner edges must stay inside one subgraph;
//! * boundary–inner (cut) edges go whole to the inner endpoint's subgraph;
//! * boundary–boundary edges are split `γ : 1−γ` when both endpoints have twins
//!   in the same two subgraphs, the `γ` share going to the subgraph holding the
//!   first endpoint's `a` twin. If the endpoints share only one subgraph the
//!   edge goes there whole.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{structural, Error, Result};
use crate::graph::{ElectricGraph, Vertex, VertexId};
use crate::matrix::{definiteness_class, DefinitenessClass, DEFAULT_DEFINITENESS_TOL};

pub const DEFAULT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySplit {
    /// Subgraphs receiving the `a` and `b` twins.
    pub subgraphs: (usize, usize),
    /// Share `α` of the vertex weight kept by the `a` twin.
    pub weight_fraction: f64,
    /// Share `β` of the vertex source kept by the `a` twin.
    pub source_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitPlan {
    pub boundary: BTreeMap<VertexId, BoundarySplit>,
    pub assignment: BTreeMap<VertexId, usize>,
    /// Share `γ` of a boundary edge weight, keyed by the ordered id pair.
    pub edge_fraction: BTreeMap<(VertexId, VertexId), f64>,
}

fn edge_key(i: &VertexId, j: &VertexId) -> (VertexId, VertexId) {
    if i <= j {
        (i.clone(), j.clone())
    } else {
        (j.clone(), i.clone())
    }
}

impl SplitPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(mut self, v: impl Into<VertexId>, subgraph: usize) -> Self {
        self.assignment.insert(v.into(), subgraph);
        self
    }

    /// Marks `v` as boundary with default fractions.
    pub fn split(self, v: impl Into<VertexId>, a: usize, b: usize) -> Self {
        self.split_with(v, a, b, DEFAULT_FRACTION, DEFAULT_FRACTION)
    }

    pub fn split_with(
        mut self,
        v: impl Into<VertexId>,
        a: usize,
        b: usize,
        weight_fraction: f64,
        source_fraction: f64,
    ) -> Self {
        self.boundary.insert(
            v.into(),
            BoundarySplit {
                subgraphs: (a, b),
                weight_fraction,
                source_fraction,
            },
        );
        self
    }

    pub fn edge(mut self, i: impl Into<VertexId>, j: impl Into<VertexId>, gamma: f64) -> Self {
        self.edge_fraction.insert(edge_key(&i.into(), &j.into()), gamma);
        self
    }

    pub fn is_empty(&self) -> bool {
        self.boundary.is_empty() && self.assignment.is_empty() && self.edge_fraction.is_empty()
    }

    fn subgraph_count(&self) -> usize {
        let inner = self.assignment.values().copied();
        let twins = self.boundary.values().flat_map(|b| [b.subgraphs.0, b.subgraphs.1]);
        inner.chain(twins).max().map_or(1, |m| m + 1)
    }

    fn check(&self, g: &ElectricGraph) -> Result<usize> {
        let frac_ok = |x: f64| x > 0.0 && x < 1.0;
        for (v, b) in &self.boundary {
            if g.position(v).is_none() {
                return Err(Error::Plan(format!("boundary vertex {v} not in graph")));
            }
            if b.subgraphs.0 == b.subgraphs.1 {
                return Err(Error::Plan(format!("twins of {v} assigned to the same subgraph")));
            }
            if !frac_ok(b.weight_fraction) || !frac_ok(b.source_fraction) {
                return Err(Error::Plan(format!("fraction for {v} outside (0, 1)")));
            }
            if self.assignment.contains_key(v) {
                return Err(Error::Plan(format!("{v} is both boundary and inner")));
            }
        }
        for v in self.assignment.keys() {
            if g.position(v).is_none() {
                return Err(Error::Plan(format!("assigned vertex {v} not in graph")));
            }
        }
        for ((i, j), gamma) in &self.edge_fraction {
            if !frac_ok(*gamma) {
                return Err(Error::Plan(format!("edge fraction for ({i}, {j}) outside (0, 1)")));
            }
            if !self.boundary.contains_key(i) || !self.boundary.contains_key(j) {
                return Err(Error::Plan(format!("edge ({i}, {j}) is not a boundary edge")));
            }
        }
        let n_sub = self.subgraph_count();
        let mut used = vec![false; n_sub];
        for v in g.vertices() {
            if let Some(b) = self.boundary.get(&v.id) {
                used[b.subgraphs.0] = true;
                used[b.subgraphs.1] = true;
            } else if let Some(&s) = self.assignment.get(&v.id) {
                used[s] = true;
            } else {
                return Err(Error::Plan(format!("vertex {} has no subgraph assignment", v.id)));
            }
        }
        if let Some(s) = used.iter().position(|u| !u) {
            return Err(Error::Plan(format!("subgraph {s} receives no vertices")));
        }
        Ok(n_sub)
    }

    /// Writes the plan in the plain-text plan format (`B`, `BE`, `ASSIGN` lines).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (v, b) in &self.boundary {
            writeln!(w, "ASSIGN {v} {} {}", b.subgraphs.0, b.subgraphs.1)?;
            writeln!(w, "B {v} {} {}", b.weight_fraction, b.source_fraction)?;
        }
        for ((i, j), gamma) in &self.edge_fraction {
            writeln!(w, "BE {i} {j} {gamma}")?;
        }
        for (v, s) in &self.assignment {
            writeln!(w, "ASSIGN {v} {s}")?;
        }
        Ok(())
    }
}

/// A level-one plan plus optional refinements, as stored in a plan file.
///
/// Lines before the first `SPLIT <subgraph>` header form the level-one plan;
/// each header starts a plan applied with [`multilevel_split`] to that subgraph
/// of the partition produced so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanFile {
    pub level_one: SplitPlan,
    pub refinements: Vec<(usize, SplitPlan)>,
}

impl PlanFile {
    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        #[derive(Default)]
        struct Pending {
            assign: BTreeMap<VertexId, Vec<usize>>,
            fractions: BTreeMap<VertexId, (f64, f64)>,
            edges: BTreeMap<(VertexId, VertexId), f64>,
        }
        fn finish(p: Pending) -> Result<SplitPlan> {
            let mut plan = SplitPlan::new();
            for (v, subs) in p.assign {
                match subs.as_slice() {
                    [s] => {
                        if p.fractions.contains_key(&v) {
                            return Err(Error::Plan(format!(
                                "vertex {v} has fractions but a single subgraph"
                            )));
                        }
                        plan.assignment.insert(v, *s);
                    }
                    [a, b] => {
                        let (alpha, beta) = p
                            .fractions
                            .get(&v)
                            .copied()
                            .unwrap_or((DEFAULT_FRACTION, DEFAULT_FRACTION));
                        plan = plan.split_with(v, *a, *b, alpha, beta);
                    }
                    _ => unreachable!("parser accepts one or two subgraphs"),
                }
            }
            if let Some(v) = p.fractions.keys().find(|v| !plan.boundary.contains_key(*v)) {
                return Err(Error::Plan(format!("B line for {v} without a two-subgraph ASSIGN")));
            }
            plan.edge_fraction = p.edges;
            Ok(plan)
        }

        let mut file = PlanFile::default();
        let mut current = Pending::default();
        let mut target: Option<usize> = None;
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let perr = |m: String| Error::Parse { line: lineno, message: m };
            let vid = |s: &str| s.parse::<VertexId>().map_err(|e| perr(e.to_string()));
            let num = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("bad number '{s}'")));
            let sub = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("bad subgraph '{s}'")));
            match f.as_slice() {
                ["SPLIT", s] => {
                    let done = finish(std::mem::take(&mut current))?;
                    match target {
                        None => file.level_one = done,
                        Some(j) => file.refinements.push((j, done)),
                    }
                    target = Some(sub(s)?);
                }
                ["B", v, alpha, beta] => {
                    current.fractions.insert(vid(v)?, (num(alpha)?, num(beta)?));
                }
                ["BE", i, j, gamma] => {
                    current.edges.insert(edge_key(&vid(i)?, &vid(j)?), num(gamma)?);
                }
                ["ASSIGN", v, rest @ ..] if (1..=2).contains(&rest.len()) => {
                    let subs = rest.iter().map(|s| sub(s)).collect::<Result<Vec<_>>>()?;
                    if current.assign.insert(vid(v)?, subs).is_some() {
                        return Err(perr(format!("vertex {v} assigned twice")));
                    }
                }
                _ => return Err(perr(format!("unrecognized plan line '{t}'"))),
            }
        }
        let done = finish(current)?;
        match target {
            None => file.level_one = done,
            Some(j) => file.refinements.push((j, done)),
        }
        Ok(file)
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        self.level_one.write_text(&mut w)?;
        for (j, plan) in &self.refinements {
            writeln!(w, "SPLIT {j}")?;
            plan.write_text(&mut w)?;
        }
        Ok(())
    }

    /// Applies the level-one plan and then every refinement in order.
    pub fn apply(&self, g: &ElectricGraph) -> Result<Partition> {
        let mut p = apply_split(g, &self.level_one)?;
        for (j, plan) in &self.refinements {
            p = multilevel_split(&p, *j, plan)?;
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

/// One end of a twin pair: a vertex of a specific subgraph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortEnd {
    pub subgraph: usize,
    pub vertex: VertexId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TwinPair {
    pub a: PortEnd,
    pub b: PortEnd,
}

impl TwinPair {
    pub fn end(&self, side: Side) -> &PortEnd {
        match side {
            Side::A => &self.a,
            Side::B => &self.b,
        }
    }
}

/// Port entry of a subgraph: one end of one twin pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortRef {
    pub pair: usize,
    pub side: Side,
}

impl PortRef {
    pub fn twin(self) -> PortRef {
        PortRef {
            pair: self.pair,
            side: self.side.other(),
        }
    }
}

/// Subgraphs produced by vertex splitting plus the twin pairs joining them.
///
/// Port entries of subgraph `j` are the twin-pair ends lying in `j`, ordered
/// by pair index; the twin list of `j` is the opposite ends in the same order.
/// A vertex re-split by multilevel tearing can be the end of several pairs, in
/// which case it appears once per pair in the port list.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    subgraphs: Vec<ElectricGraph>,
    twin_pairs: Vec<TwinPair>,
    ports: Vec<Vec<PortRef>>,
    /// Position of each pair end inside its subgraph's port list.
    port_slot: Vec<[usize; 2]>,
}

impl Partition {
    pub fn new(subgraphs: Vec<ElectricGraph>, twin_pairs: Vec<TwinPair>) -> Result<Self> {
        let mut ports = vec![Vec::new(); subgraphs.len()];
        let mut port_slot = Vec::with_capacity(twin_pairs.len());
        for (k, pair) in twin_pairs.iter().enumerate() {
            let mut slots = [0usize; 2];
            for side in [Side::A, Side::B] {
                let end = pair.end(side);
                let g = subgraphs.get(end.subgraph).ok_or_else(|| {
                    structural(format!("pair {k} references missing subgraph {}", end.subgraph))
                })?;
                if g.position(&end.vertex).is_none() {
                    return Err(structural(format!(
                        "pair {k} references vertex {} absent from subgraph {}",
                        end.vertex, end.subgraph
                    )));
                }
                slots[side as usize] = ports[end.subgraph].len();
                ports[end.subgraph].push(PortRef { pair: k, side });
            }
            if pair.a.subgraph == pair.b.subgraph {
                return Err(structural(format!("pair {k} joins subgraph {} to itself", pair.a.subgraph)));
            }
            if pair.a.vertex.index != pair.b.vertex.index {
                return Err(structural(format!(
                    "pair {k} joins copies of different vertices ({}, {})",
                    pair.a.vertex, pair.b.vertex
                )));
            }
            port_slot.push(slots);
        }
        Ok(Self {
            subgraphs,
            twin_pairs,
            ports,
            port_slot,
        })
    }

    /// The whole graph as one subgraph with no ports.
    pub fn single(g: &ElectricGraph) -> Self {
        Self {
            subgraphs: vec![g.clone()],
            twin_pairs: Vec::new(),
            ports: vec![Vec::new()],
            port_slot: Vec::new(),
        }
    }

    pub fn subgraphs(&self) -> &[ElectricGraph] {
        &self.subgraphs
    }

    pub fn subgraph(&self, j: usize) -> &ElectricGraph {
        &self.subgraphs[j]
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }

    pub fn twin_pairs(&self) -> &[TwinPair] {
        &self.twin_pairs
    }

    /// Port entries `Γ_port` of subgraph `j`.
    pub fn ports(&self, j: usize) -> &[PortRef] {
        &self.ports[j]
    }

    pub fn end(&self, p: PortRef) -> &PortEnd {
        self.twin_pairs[p.pair].end(p.side)
    }

    /// Index of a port entry inside its own subgraph's port list.
    pub fn slot(&self, p: PortRef) -> usize {
        self.port_slot[p.pair][p.side as usize]
    }

    pub fn port_ids(&self, j: usize) -> Vec<VertexId> {
        self.ports[j].iter().map(|&p| self.end(p).vertex.clone()).collect()
    }

    /// `Γ_twin`: the twin of every port entry of `j`, same order as [`Self::port_ids`].
    pub fn twin_ids(&self, j: usize) -> Vec<VertexId> {
        self.ports[j].iter().map(|&p| self.end(p.twin()).vertex.clone()).collect()
    }

    /// `Γ_inner`: vertices of `j` that carry no port entry, in subgraph order.
    pub fn inner_ids(&self, j: usize) -> Vec<VertexId> {
        let ports: BTreeSet<VertexId> = self.port_ids(j).into_iter().collect();
        self.subgraphs[j]
            .vertices()
            .iter()
            .filter(|v| !ports.contains(&v.id))
            .map(|v| v.id.clone())
            .collect()
    }

    /// Subgraphs adjacent to `j` (sharing at least one twin pair).
    pub fn neighbors(&self, j: usize) -> BTreeSet<usize> {
        self.ports[j]
            .iter()
            .map(|&p| self.end(p.twin()).subgraph)
            .collect()
    }

    /// Original vertex count implied by the copies (largest base index).
    pub fn original_len(&self) -> usize {
        self.subgraphs
            .iter()
            .flat_map(|g| g.vertices().iter().map(|v| v.id.index))
            .max()
            .unwrap_or(0)
    }

    /// Averages every copy's value into the original 1-based vertex slot
    /// (returned 0-based). `values[j][k]` belongs to vertex `k` of subgraph `j`.
    pub fn assemble(&self, values: &[Vec<f64>]) -> Result<Vec<f64>> {
        if values.len() != self.subgraphs.len() {
            return Err(structural(format!(
                "expected values for {} subgraphs, got {}",
                self.subgraphs.len(),
                values.len()
            )));
        }
        let n = self.original_len();
        let mut sum = vec![0.0; n];
        let mut count = vec![0usize; n];
        for (g, vals) in self.subgraphs.iter().zip(values) {
            if vals.len() != g.len() {
                return Err(structural("value vector length does not match subgraph size"));
            }
            for (v, x) in g.vertices().iter().zip(vals) {
                sum[v.id.index - 1] += x;
                count[v.id.index - 1] += 1;
            }
        }
        Ok(sum
            .into_iter()
            .zip(count)
            .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect())
    }

    /// Reorders subgraphs: new subgraph `k` is old subgraph `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Partition> {
        let n = self.subgraphs.len();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in order.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(structural("subgraph order is not a permutation"));
            }
            inverse[old] = new;
        }
        if order.len() != n {
            return Err(structural("subgraph order is not a permutation"));
        }
        let subgraphs = order.iter().map(|&o| self.subgraphs[o].clone()).collect();
        let pairs = self
            .twin_pairs
            .iter()
            .map(|p| TwinPair {
                a: PortEnd { subgraph: inverse[p.a.subgraph], vertex: p.a.vertex.clone() },
                b: PortEnd { subgraph: inverse[p.b.subgraph], vertex: p.b.vertex.clone() },
            })
            .collect();
        Partition::new(subgraphs, pairs)
    }

    /// Plain-text dump: a `SUBGRAPH j` header followed by the graph format for
    /// every subgraph, then `PAIR sub_a vertex_a sub_b vertex_b` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        for (j, g) in self.subgraphs.iter().enumerate() {
            writeln!(w, "SUBGRAPH {j}")?;
            g.write_text(&mut w)?;
        }
        for p in &self.twin_pairs {
            writeln!(w, "PAIR {} {} {} {}", p.a.subgraph, p.a.vertex, p.b.subgraph, p.b.vertex)?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        let mut blocks: Vec<String> = Vec::new();
        let mut pairs = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let t = line.trim();
            let f: Vec<&str> = t.split_whitespace().collect();
            let perr = |m: &str| Error::Parse { line: idx + 1, message: m.to_string() };
            match f.as_slice() {
                ["SUBGRAPH", j] => {
                    if j.parse::<usize>().ok() != Some(blocks.len()) {
                        return Err(perr("subgraphs must be numbered 0, 1, 2, ..."));
                    }
                    blocks.push(String::new());
                }
                ["PAIR", sa, va, sb, vb] => {
                    let sub = |s: &str| s.parse::<usize>().map_err(|_| perr("bad subgraph"));
                    pairs.push(TwinPair {
                        a: PortEnd { subgraph: sub(sa)?, vertex: va.parse()? },
                        b: PortEnd { subgraph: sub(sb)?, vertex: vb.parse()? },
                    });
                }
                _ => match blocks.last_mut() {
                    Some(b) if pairs.is_empty() => {
                        b.push_str(t);
                        b.push('\n');
                    }
                    _ if t.is_empty() => {}
                    _ => return Err(perr("unexpected line")),
                },
            }
        }
        let subgraphs = blocks
            .iter()
            .map(|b| ElectricGraph::read_text(b.as_bytes()))
            .collect::<Result<Vec<_>>>()?;
        Partition::new(subgraphs, pairs)
    }
}

/// Where a vertex of the split graph ended up: its `a` copy for boundary
/// vertices, itself for inner ones.
struct Placement {
    subgraph: usize,
    id: VertexId,
}

struct SplitOutcome {
    subgraphs: Vec<ElectricGraph>,
    pairs: Vec<TwinPair>,
    placement: HashMap<VertexId, Placement>,
}

fn split_graph(g: &ElectricGraph, plan: &SplitPlan) -> Result<SplitOutcome> {
    let n_sub = plan.check(g)?;
    let mut verts: Vec<Vec<Vertex>> = vec![Vec::new(); n_sub];
    let mut edges: Vec<Vec<(VertexId, VertexId, f64)>> = vec![Vec::new(); n_sub];
    let mut pairs = Vec::new();
    let mut placement = HashMap::with_capacity(g.len());

    for v in g.vertices() {
        if let Some(b) = plan.boundary.get(&v.id) {
            let (sa, sb) = b.subgraphs;
            let (ida, idb) = (v.id.twin('a'), v.id.twin('b'));
            verts[sa].push(Vertex {
                id: ida.clone(),
                weight: b.weight_fraction * v.weight,
                source: b.source_fraction * v.source,
            });
            verts[sb].push(Vertex {
                id: idb.clone(),
                weight: (1.0 - b.weight_fraction) * v.weight,
                source: (1.0 - b.source_fraction) * v.source,
            });
            pairs.push(TwinPair {
                a: PortEnd { subgraph: sa, vertex: ida.clone() },
                b: PortEnd { subgraph: sb, vertex: idb },
            });
            placement.insert(v.id.clone(), Placement { subgraph: sa, id: ida });
        } else {
            let s = plan.assignment[&v.id];
            verts[s].push(v.clone());
            placement.insert(v.id.clone(), Placement { subgraph: s, id: v.id.clone() });
        }
    }

    // copy of boundary vertex `v` living in subgraph `s`
    let copy_in = |v: &VertexId, s: usize| -> Option<VertexId> {
        let b = plan.boundary.get(v)?;
        if b.subgraphs.0 == s {
            Some(v.twin('a'))
        } else if b.subgraphs.1 == s {
            Some(v.twin('b'))
        } else {
            None
        }
    };

    for (i, j, w) in g.edge_ids() {
        let bi = plan.boundary.get(i);
        let bj = plan.boundary.get(j);
        match (bi, bj) {
            (None, None) => {
                let (si, sj) = (plan.assignment[i], plan.assignment[j]);
                if si != sj {
                    return Err(Error::Plan(format!(
                        "boundary does not separate: edge ({i}, {j}) joins subgraphs {si} and {sj}"
                    )));
                }
                edges[si].push((i.clone(), j.clone(), w));
            }
            (Some(_), None) | (None, Some(_)) => {
                let (bv, inner) = if bi.is_some() { (i, j) } else { (j, i) };
                let s = plan.assignment[inner];
                let copy = copy_in(bv, s).ok_or_else(|| {
                    Error::Plan(format!(
                        "boundary does not separate: {inner} (subgraph {s}) touches {bv}, which has no twin there"
                    ))
                })?;
                edges[s].push((copy, inner.clone(), w));
            }
            (Some(pi), Some(pj)) => {
                let si = [pi.subgraphs.0, pi.subgraphs.1];
                let common: Vec<usize> = si
                    .iter()
                    .copied()
                    .filter(|s| *s == pj.subgraphs.0 || *s == pj.subgraphs.1)
                    .collect();
                let key = edge_key(i, j);
                match common.as_slice() {
                    [first, second] => {
                        let gamma = plan.edge_fraction.get(&key).copied().unwrap_or(DEFAULT_FRACTION);
                        for (s, share) in [(*first, gamma), (*second, 1.0 - gamma)] {
                            edges[s].push((
                                copy_in(i, s).expect("common subgraph"),
                                copy_in(j, s).expect("common subgraph"),
                                share * w,
                            ));
                        }
                    }
                    [only] => {
                        if plan.edge_fraction.contains_key(&key) {
                            return Err(Error::Plan(format!(
                                "edge ({i}, {j}) has a fraction but its endpoints share only subgraph {only}"
                            )));
                        }
                        edges[*only].push((
                            copy_in(i, *only).expect("common subgraph"),
                            copy_in(j, *only).expect("common subgraph"),
                            w,
                        ));
                    }
                    _ => {
                        return Err(Error::Plan(format!(
                            "boundary vertices {i} and {j} are adjacent but share no subgraph"
                        )));
                    }
                }
            }
        }
    }
    for (i, j) in plan.edge_fraction.keys() {
        let (Some(pi), Some(pj)) = (g.position(i), g.position(j)) else {
            return Err(Error::Plan(format!("edge ({i}, {j}) not in graph")));
        };
        let (a, b) = (pi.min(pj), pi.max(pj));
        if !g.edges().iter().any(|e| e.a == a && e.b == b) {
            return Err(Error::Plan(format!("edge ({i}, {j}) not in graph")));
        }
    }

    let subgraphs = verts
        .into_iter()
        .zip(edges)
        .map(|(v, e)| ElectricGraph::new(v, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitOutcome {
        subgraphs,
        pairs,
        placement,
    })
}

/// Level-one splitting of `g`.
pub fn apply_split(g: &ElectricGraph, plan: &SplitPlan) -> Result<Partition> {
    if plan.is_empty() {
        return Ok(Partition::single(g));
    }
    let out = split_graph(g, plan)?;
    Partition::new(out.subgraphs, out.pairs)
}

/// Splits subgraph `j` of `p` again. Local subgraph 0 of the plan replaces `j`;
/// local subgraphs `1..` are appended after the existing ones. A pre-existing
/// pair whose end is re-split follows the `a` copy.
pub fn multilevel_split(p: &Partition, j: usize, plan: &SplitPlan) -> Result<Partition> {
    if j >= p.len() {
        return Err(structural(format!("no subgraph {j} in a {}-way partition", p.len())));
    }
    if plan.is_empty() {
        return Ok(p.clone());
    }
    let out = split_graph(&p.subgraphs[j], plan)?;
    let base = p.len();
    let global = |local: usize| if local == 0 { j } else { base + local - 1 };

    let mut subgraphs = p.subgraphs.clone();
    let mut pieces = out.subgraphs.into_iter();
    subgraphs[j] = pieces.next().expect("at least one piece");
    subgraphs.extend(pieces);

    let mut pairs: Vec<TwinPair> = p
        .twin_pairs
        .iter()
        .map(|pair| {
            let remap = |end: &PortEnd| {
                if end.subgraph != j {
                    return end.clone();
                }
                let place = &out.placement[&end.vertex];
                PortEnd {
                    subgraph: global(place.subgraph),
                    vertex: place.id.clone(),
                }
            };
            TwinPair {
                a: remap(&pair.a),
                b: remap(&pair.b),
            }
        })
        .collect();
    pairs.extend(out.pairs.into_iter().map(|pair| TwinPair {
        a: PortEnd { subgraph: global(pair.a.subgraph), vertex: pair.a.vertex },
        b: PortEnd { subgraph: global(pair.b.subgraph), vertex: pair.b.vertex },
    }));
    Partition::new(subgraphs, pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub reassembly_ok: bool,
    pub classes: Vec<DefinitenessClass>,
    /// At least one SPD subgraph and every other subgraph SNND.
    pub convergence_hypothesis_ok: bool,
    pub messages: Vec<String>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reassembly_ok={}", self.reassembly_ok)?;
        writeln!(f, "convergence_hypothesis_ok={}", self.convergence_hypothesis_ok)?;
        for (j, c) in self.classes.iter().enumerate() {
            writeln!(f, "subgraph {j}: {c}")?;
        }
        for m in &self.messages {
            writeln!(f, "note: {m}")?;
        }
        Ok(())
    }
}

const REASSEMBLY_TOL: f64 = 1e-12;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REASSEMBLY_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Merges every twin pair back together and compares with `g`, then classifies
/// each subgraph.
pub fn validate_partition(p: &Partition, g: &ElectricGraph) -> Result<ValidationReport> {
    let n = g.len();
    let pos_of = |index: usize| -> Result<usize> {
        g.position(&VertexId::original(index))
            .ok_or_else(|| structural(format!("copy of vertex {index} has no original in the graph")))
    };

    let mut messages = Vec::new();
    let mut weight = vec![0.0; n];
    let mut source = vec![0.0; n];
    let mut copies: Vec<Vec<(usize, VertexId)>> = vec![Vec::new(); n];
    let mut edge_sum: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut self_loops = false;

    for (j, sg) in p.subgraphs.iter().enumerate() {
        for v in sg.vertices() {
            let k = pos_of(v.id.index)?;
            weight[k] += v.weight;
            source[k] += v.source;
            copies[k].push((j, v.id.clone()));
        }
        for (a, b, w) in sg.edge_ids() {
            let (ka, kb) = (pos_of(a.index)?, pos_of(b.index)?);
            if ka == kb {
                self_loops = true;
                messages.push(format!("subgraph {j} has an edge between copies {a} and {b}"));
                continue;
            }
            *edge_sum.entry((ka.min(kb), ka.max(kb))).or_insert(0.0) += w;
        }
    }
    for (k, pair) in p.twin_pairs.iter().enumerate() {
        for end in [&pair.a, &pair.b] {
            if p.subgraphs[end.subgraph].position(&end.vertex).is_none() {
                return Err(structural(format!("pair {k} references unknown port {}", end.vertex)));
            }
        }
    }

    let mut ok = !self_loops;

    // copies of one original vertex must be tied together by twin pairs
    let mut parent: HashMap<(usize, VertexId), (usize, VertexId)> = HashMap::new();
    fn find(
        parent: &mut HashMap<(usize, VertexId), (usize, VertexId)>,
        x: (usize, VertexId),
    ) -> (usize, VertexId) {
        let mut cur = x;
        while let Some(next) = parent.get(&cur) {
            if *next == cur {
                break;
            }
            cur = next.clone();
        }
        cur
    }
    for pair in &p.twin_pairs {
        let ra = find(&mut parent, (pair.a.subgraph, pair.a.vertex.clone()));
        let rb = find(&mut parent, (pair.b.subgraph, pair.b.vertex.clone()));
        if ra != rb {
            parent.insert(ra, rb);
        }
    }
    for (k, cs) in copies.iter().enumerate() {
        let id = &g.vertices()[k].id;
        if cs.is_empty() {
            ok = false;
            messages.push(format!("vertex {id} has no copy in any subgraph"));
            continue;
        }
        let roots: BTreeSet<(usize, VertexId)> =
            cs.iter().map(|c| find(&mut parent, c.clone())).collect();
        if roots.len() > 1 {
            ok = false;
            messages.push(format!("copies of vertex {id} are not all joined by twin pairs"));
        }
    }

    for (k, v) in g.vertices().iter().enumerate() {
        if !close(weight[k], v.weight) {
            ok = false;
            messages.push(format!("vertex {} weight reassembles to {} (expected {})", v.id, weight[k], v.weight));
        }
        if !close(source[k], v.source) {
            ok = false;
            messages.push(format!("vertex {} source reassembles to {} (expected {})", v.id, source[k], v.source));
        }
    }
    let mut expected: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for e in g.edges() {
        expected.insert((e.a, e.b), e.weight);
    }
    let keys: BTreeSet<(usize, usize)> = expected.keys().chain(edge_sum.keys()).copied().collect();
    for key in keys {
        let want = expected.get(&key).copied().unwrap_or(0.0);
        let got = edge_sum.get(&key).copied().unwrap_or(0.0);
        if !close(got, want) {
            ok = false;
            messages.push(format!(
                "edge ({}, {}) reassembles to {got} (expected {want})",
                g.vertices()[key.0].id,
                g.vertices()[key.1].id
            ));
        }
    }

    let classes = p
        .subgraphs
        .iter()
        .map(|sg| definiteness_class(&sg.matrix(), DEFAULT_DEFINITENESS_TOL))
        .collect::<Result<Vec<_>>>()?;
    let any_spd = classes.contains(&DefinitenessClass::Spd);
    let none_indef = !classes.contains(&DefinitenessClass::Indefinite);
    let convergence_hypothesis_ok = any_spd && none_indef;
    if !any_spd {
        messages.push("no subgraph is SPD".to_string());
    }
    for (j, c) in classes.iter().enumerate() {
        if *c == DefinitenessClass::Indefinite {
            messages.push(format!("subgraph {j} is indefinite"));
        }
    }
    Ok(ValidationReport {
        reassembly_ok: ok,
        classes,
        convergence_hypothesis_ok,
        messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::graph::graph_from_system;

    fn weights(g: &ElectricGraph) -> Vec<f64> {
        g.vertices().iter().map(|v| v.weight).collect()
    }

    #[test]
    fn four_vertex_split_reproduces_hand_subsystems() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &demo::four_vertex_plan()).unwrap();
        assert_eq!(p.len(), 2);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-14);
        let s1 = p.subgraph(0);
        let s2 = p.subgraph(1);
        let ids1: Vec<String> = s1.vertices().iter().map(|v| v.id.to_string()).collect();
        let ids2: Vec<String> = s2.vertices().iter().map(|v| v.id.to_string()).collect();
        assert_eq!(ids1, ["1", "2a", "3a"]);
        assert_eq!(ids2, ["2b", "3b", "4"]);
        assert!(close(&weights(s1), &[5.0, 2.5, 3.3]));
        assert!(close(&weights(s2), &[3.5, 3.7, 8.0]));
        assert!(close(&s1.sources(), &[1.0, 0.8, 1.6]));
        assert!(close(&s2.sources(), &[1.2, 1.4, 4.0]));
        let m1 = s1.matrix();
        let m2 = s2.matrix();
        assert!((m1[(1, 2)] + 0.9).abs() <= 1e-14);
        assert!((m2[(0, 1)] + 1.1).abs() <= 1e-14);
        assert_eq!(m1[(0, 1)], -1.0);
        assert_eq!(m2[(1, 2)], -2.0);
        assert_eq!(p.port_ids(0), vec!["2a".parse().unwrap(), "3a".parse().unwrap()]);
        assert_eq!(p.twin_ids(0), vec!["2b".parse().unwrap(), "3b".parse().unwrap()]);
        assert_eq!(p.inner_ids(1), vec![VertexId::original(4)]);
    }

    #[test]
    fn empty_boundary_keeps_graph_whole() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &SplitPlan::new()).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.subgraph(0), &g);
        assert!(p.ports(0).is_empty());
        let mut plan = SplitPlan::new();
        for i in 1..=4 {
            plan = plan.assign(i, 0);
        }
        assert_eq!(apply_split(&g, &plan).unwrap().subgraph(0), &g);
    }

    #[test]
    fn half_split_sums_back() {
        let g = graph_from_system(&demo::four_vertex_system());
        let plan = SplitPlan::new().assign(1, 0).assign(4, 1).split(2, 0, 1).split(3, 0, 1);
        let p = apply_split(&g, &plan).unwrap();
        assert_eq!(weights(p.subgraph(0)), vec![5.0, 3.0, 3.5]);
        assert_eq!(weights(p.subgraph(1)), vec![3.0, 3.5, 8.0]);
        assert_eq!(p.subgraph(0).sources(), vec![1.0, 1.0, 1.5]);
        assert_eq!(p.subgraph(1).sources(), vec![1.0, 1.5, 4.0]);
        assert_eq!(p.subgraph(0).matrix()[(1, 2)], -1.0);
        assert_eq!(p.subgraph(1).matrix()[(0, 1)], -1.0);
        assert!(validate_partition(&p, &g).unwrap().reassembly_ok);
    }

    #[test]
    fn plan_errors() {
        let g = graph_from_system(&demo::four_vertex_system());
        // 1 and 4 are not adjacent, but 1–2 with 2 inner in another subgraph breaks separation
        let no_sep = SplitPlan::new().assign(1, 0).assign(2, 1).assign(4, 1).split(3, 0, 1);
        assert!(matches!(apply_split(&g, &no_sep), Err(Error::Plan(_))));
        let bad_frac = SplitPlan::new().assign(1, 0).assign(4, 1).split_with(2, 0, 1, 1.0, 0.5).split(3, 0, 1);
        assert!(matches!(apply_split(&g, &bad_frac), Err(Error::Plan(_))));
        let bad_gamma = demo::four_vertex_plan().edge(2, 3, 0.0);
        assert!(matches!(apply_split(&g, &bad_gamma), Err(Error::Plan(_))));
        let missing = SplitPlan::new().assign(1, 0).split(2, 0, 1).split(3, 0, 1);
        assert!(matches!(apply_split(&g, &missing), Err(Error::Plan(_))));
        let not_boundary_edge = demo::four_vertex_plan().edge(1, 2, 0.5);
        assert!(matches!(apply_split(&g, &not_boundary_edge), Err(Error::Plan(_))));
    }

    #[test]
    fn validation_flags_broken_sums_and_indefinite_pieces() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &demo::four_vertex_plan()).unwrap();
        let report = validate_partition(&p, &g).unwrap();
        assert!(report.reassembly_ok);
        assert_eq!(report.classes, vec![DefinitenessClass::Spd; 2]);
        assert!(report.convergence_hypothesis_ok);

        let mut verts = p.subgraph(0).vertices().to_vec();
        verts[1].weight += 0.1;
        let edges: Vec<_> = p.subgraph(0).edge_ids().map(|(a, b, w)| (a.clone(), b.clone(), w)).collect();
        let broken = Partition::new(
            vec![ElectricGraph::new(verts, edges).unwrap(), p.subgraph(1).clone()],
            p.twin_pairs().to_vec(),
        )
        .unwrap();
        assert!(!validate_partition(&broken, &g).unwrap().reassembly_ok);

        // a 1% weight share on V2 leaves 0.06 on the diagonal against off-diagonal mass 1 + 1
        let plan = SplitPlan::new()
            .assign(1, 0)
            .assign(4, 1)
            .split_with(2, 0, 1, 0.01, 0.5)
            .split(3, 0, 1);
        let p = apply_split(&g, &plan).unwrap();
        let report = validate_partition(&p, &g).unwrap();
        assert!(report.reassembly_ok);
        assert_eq!(report.classes[0], DefinitenessClass::Indefinite);
        assert!(!report.convergence_hypothesis_ok);
        assert!(report.messages.iter().any(|m| m.contains("indefinite")));
    }

    #[test]
    fn ports_and_twins_are_consistent() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &demo::four_vertex_plan()).unwrap();
        let total: usize = (0..p.len()).map(|j| p.ports(j).len()).sum();
        assert_eq!(total, 2 * p.twin_pairs().len());
        for j in 0..p.len() {
            for (k, &port) in p.ports(j).iter().enumerate() {
                assert_eq!(p.slot(port), k);
                assert_eq!(p.end(port).subgraph, j);
                assert_ne!(p.end(port.twin()).subgraph, j);
            }
        }
    }

    fn path_graph(n: usize) -> ElectricGraph {
        let verts = (1..=n)
            .map(|i| Vertex { id: i.into(), weight: 3.0 + i as f64 * 0.1, source: i as f64 })
            .collect();
        let edges = (1..n).map(|i| (VertexId::from(i), VertexId::from(i + 1), -1.0 - 0.01 * i as f64));
        ElectricGraph::new(verts, edges).unwrap()
    }

    #[test]
    fn two_level_split_of_path() {
        let g = path_graph(8);
        let level1 = SplitPlan::new()
            .assign(1, 0).assign(2, 0).assign(3, 0)
            .split_with(4, 0, 1, 0.3, 0.6)
            .assign(5, 1).assign(6, 1).assign(7, 1).assign(8, 1);
        let p = apply_split(&g, &level1).unwrap();
        let left = SplitPlan::new().assign(1, 0).split(2, 0, 1).assign(3, 1).assign("4a".parse::<VertexId>().unwrap(), 1);
        let p = multilevel_split(&p, 0, &left).unwrap();
        let right = SplitPlan::new()
            .assign("4b".parse::<VertexId>().unwrap(), 0)
            .assign(5, 0)
            .split_with(6, 0, 1, 0.7, 0.2)
            .assign(7, 1)
            .assign(8, 1);
        let p = multilevel_split(&p, 1, &right).unwrap();
        assert_eq!(p.len(), 4);
        assert_eq!(p.twin_pairs().len(), 3);
        let report = validate_partition(&p, &g).unwrap();
        assert!(report.reassembly_ok, "{report}");
        // the level-one pair now lives between subgraph 2 (holding 4a) and 1
        assert_eq!(p.twin_pairs()[0].a.subgraph, 2);
        assert_eq!(p.twin_pairs()[0].b.subgraph, 1);
    }

    #[test]
    fn resplit_port_follows_first_copy() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &demo::four_vertex_plan()).unwrap();
        let v2a: VertexId = "2a".parse().unwrap();
        let plan = SplitPlan::new()
            .assign(1, 0)
            .split_with(v2a.clone(), 0, 1, 0.25, 0.5)
            .assign("3a".parse::<VertexId>().unwrap(), 0);
        let q = multilevel_split(&p, 0, &plan).unwrap();
        assert_eq!(q.len(), 3);
        let old = &q.twin_pairs()[0];
        assert_eq!(old.a.vertex, v2a.twin('a'));
        assert_eq!(old.a.subgraph, 0);
        let new = &q.twin_pairs()[2];
        assert_eq!((new.a.vertex.to_string(), new.b.vertex.to_string()), ("2aa".into(), "2ab".into()));
        // 2aa now carries two port entries
        let port_ids = q.port_ids(0);
        assert_eq!(port_ids.iter().filter(|v| **v == v2a.twin('a')).count(), 2);
        let total: f64 = q
            .subgraphs()
            .iter()
            .flat_map(|s| s.vertices().iter().filter(|v| v.id.index == 2).map(|v| v.weight))
            .sum();
        assert!((total - 6.0).abs() < 1e-12);
        assert!(validate_partition(&q, &g).unwrap().reassembly_ok);
        assert_eq!(multilevel_split(&q, 1, &SplitPlan::new()).unwrap(), q);
    }

    #[test]
    fn plan_file_round_trip() {
        let text = "ASSIGN 1 0\nASSIGN 2 0 1\nB 2 0.4166 0.4\nASSIGN 3 0 1\nBE 2 3 0.45\nASSIGN 4 1\nSPLIT 0\nASSIGN 1 0\nASSIGN 2a 0 1\nASSIGN 3a 0 1\n";
        let pf = PlanFile::read_text(text.as_bytes()).unwrap();
        assert_eq!(pf.level_one.boundary.len(), 2);
        assert_eq!(pf.level_one.boundary[&VertexId::from(2)].weight_fraction, 0.4166);
        assert_eq!(pf.level_one.boundary[&VertexId::from(3)].weight_fraction, 0.5);
        assert_eq!(pf.refinements.len(), 1);
        let mut buf = Vec::new();
        pf.write_text(&mut buf).unwrap();
        assert_eq!(PlanFile::read_text(buf.as_slice()).unwrap(), pf);
        let g = graph_from_system(&demo::four_vertex_system());
        let p = pf.apply(&g).unwrap();
        assert_eq!(p.len(), 3);
        assert!(PlanFile::read_text("B 2 0.5 0.5\nASSIGN 2 0\n".as_bytes()).is_err());
        assert!(PlanFile::read_text("FOO\n".as_bytes()).is_err());
    }

    #[test]
    fn partition_text_round_trip_and_permutation() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = apply_split(&g, &demo::four_vertex_plan()).unwrap();
        let mut buf = Vec::new();
        p.write_text(&mut buf).unwrap();
        assert_eq!(Partition::read_text(buf.as_slice()).unwrap(), p);
        let q = p.permuted(&[1, 0]).unwrap();
        assert_eq!(q.subgraph(0), p.subgraph(1));
        assert_eq!(q.twin_pairs()[0].a.subgraph, 1);
        assert!(validate_partition(&q, &g).unwrap().reassembly_ok);
        assert!(p.permuted(&[0, 0]).is_err());
    }
}
