//! Electric graph of a symmetric system: vertex weight `a_ii`, vertex source
//! `b_i`, edge weight `a_ij`. The mapping to [`SymmetricSystem`] is a bijection.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use crate::error::{structural, Error, Result};
use crate::matrix::SymmetricSystem;

/// Vertex label: the 1-based index of the original unknown plus a copy path.
///
/// Original vertices have an empty path (`"7"`). Splitting a vertex appends
/// `a` or `b` to the path of each twin, so `"7ab"` is the second copy of the
/// first copy of vertex 7.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    pub index: usize,
    pub copy: String,
}

impl VertexId {
    pub fn original(index: usize) -> Self {
        Self {
            index,
            copy: String::new(),
        }
    }

    pub fn twin(&self, tag: char) -> Self {
        let mut copy = self.copy.clone();
        copy.push(tag);
        Self {
            index: self.index,
            copy,
        }
    }

    pub fn is_original(&self) -> bool {
        self.copy.is_empty()
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.index, self.copy)
    }
}

impl FromStr for VertexId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
        let (digits, copy) = s.split_at(split);
        let index: usize = digits
            .parse()
            .map_err(|_| structural(format!("bad vertex id '{s}'")))?;
        if index == 0 || !copy.chars().all(|c| c == 'a' || c == 'b') {
            return Err(structural(format!("bad vertex id '{s}'")));
        }
        Ok(Self {
            index,
            copy: copy.to_string(),
        })
    }
}

impl From<usize> for VertexId {
    fn from(index: usize) -> Self {
        VertexId::original(index)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub id: VertexId,
    pub weight: f64,
    pub source: f64,
}

/// Edge between two vertex positions `a < b` of the owning graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElectricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    index: HashMap<VertexId, usize>,
}

impl ElectricGraph {
    /// Builds a graph from vertices and id-addressed edges. Zero-weight edges
    /// are dropped; self-edges, unknown ids and duplicates are rejected.
    pub fn new<I>(vertices: Vec<Vertex>, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (VertexId, VertexId, f64)>,
    {
        let mut index = HashMap::with_capacity(vertices.len());
        for (pos, v) in vertices.iter().enumerate() {
            if index.insert(v.id.clone(), pos).is_some() {
                return Err(structural(format!("duplicate vertex {}", v.id)));
            }
        }
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for (i, j, w) in edges {
            let a = *index
                .get(&i)
                .ok_or_else(|| structural(format!("edge references unknown vertex {i}")))?;
            let b = *index
                .get(&j)
                .ok_or_else(|| structural(format!("edge references unknown vertex {j}")))?;
            if a == b {
                return Err(structural(format!("self-edge on vertex {i}")));
            }
            let (a, b) = (a.min(b), a.max(b));
            if !seen.insert((a, b)) {
                return Err(structural(format!("duplicate edge ({i}, {j})")));
            }
            if w != 0.0 {
                out.push(Edge { a, b, weight: w });
            }
        }
        Ok(Self {
            vertices,
            edges: out,
            index,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn position(&self, id: &VertexId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn vertex(&self, id: &VertexId) -> Option<&Vertex> {
        self.position(id).map(|p| &self.vertices[p])
    }

    /// Edges as `(id_a, id_b, weight)`.
    pub fn edge_ids(&self) -> impl Iterator<Item = (&VertexId, &VertexId, f64)> + '_ {
        self.edges
            .iter()
            .map(|e| (&self.vertices[e.a].id, &self.vertices[e.b].id, e.weight))
    }

    /// Dense coefficient matrix in vertex order.
    pub fn matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, v) in self.vertices.iter().enumerate() {
            m[(i, i)] = v.weight;
        }
        for e in &self.edges {
            m[(e.a, e.b)] = e.weight;
            m[(e.b, e.a)] = e.weight;
        }
        m
    }

    pub fn sources(&self) -> Vec<f64> {
        self.vertices.iter().map(|v| v.source).collect()
    }

    /// Writes the plain-text graph format: `n m`, then `V id weight source`
    /// lines, then `E i j weight` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.vertices.len(), self.edges.len())?;
        for v in &self.vertices {
            writeln!(w, "V {} {} {}", v.id, v.weight, v.source)?;
        }
        for (i, j, wt) in self.edge_ids() {
            writeln!(w, "E {i} {j} {wt}")?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(reader: R) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut vertices = Vec::new();
        let mut edges = Vec::new();
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            let perr = |m: &str| Error::Parse {
                line: lineno,
                message: m.to_string(),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|_| perr("bad number"));
            let vid = |s: &str| s.parse::<VertexId>().map_err(|e| perr(&e.to_string()));
            match (header, f.first().copied()) {
                (None, _) => {
                    if f.len() != 2 {
                        return Err(perr("expected header 'n m'"));
                    }
                    header = Some((
                        f[0].parse().map_err(|_| perr("bad vertex count"))?,
                        f[1].parse().map_err(|_| perr("bad edge count"))?,
                    ));
                }
                (Some(_), Some("V")) if f.len() == 4 => vertices.push(Vertex {
                    id: vid(f[1])?,
                    weight: num(f[2])?,
                    source: num(f[3])?,
                }),
                (Some(_), Some("E")) if f.len() == 4 => edges.push((vid(f[1])?, vid(f[2])?, num(f[3])?)),
                _ => return Err(perr("expected 'V id weight source' or 'E i j weight'")),
            }
        }
        let (n, m) = header.ok_or_else(|| Error::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        if vertices.len() != n || edges.len() != m {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "header declares {n} vertices and {m} edges, found {} and {}",
                    vertices.len(),
                    edges.len()
                ),
            });
        }
        Self::new(vertices, edges)
    }
}

/// Vertex `i` (1-based id `i+1`) gets weight `a_ii` and source `b_i`; an edge
/// exists exactly where `a_ij ≠ 0`.
pub fn graph_from_system(sys: &SymmetricSystem) -> ElectricGraph {
    let n = sys.dim();
    let mut vertices: Vec<Vertex> = (0..n)
        .map(|i| Vertex {
            id: VertexId::original(i + 1),
            weight: 0.0,
            source: sys.rhs()[i],
        })
        .collect();
    let mut edges = Vec::new();
    for (i, j, v) in sys.entries() {
        if i == j {
            vertices[i].weight = v;
        } else {
            edges.push(Edge { a: i, b: j, weight: v });
        }
    }
    let index = vertices
        .iter()
        .enumerate()
        .map(|(p, v)| (v.id.clone(), p))
        .collect();
    ElectricGraph {
        vertices,
        edges,
        index,
    }
}

/// Inverse of [`graph_from_system`]; vertex order defines the unknown order.
pub fn system_from_graph(g: &ElectricGraph) -> Result<SymmetricSystem> {
    let entries = g
        .vertices
        .iter()
        .enumerate()
        .map(|(i, v)| (i, i, v.weight))
        .chain(g.edges.iter().map(|e| (e.a, e.b, e.weight)));
    SymmetricSystem::new(g.len(), entries, g.sources())
}
