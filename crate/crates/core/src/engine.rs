//! Per-subgraph transmission-line mathematics.
//!
//! A directed line carries `u − z·ω` from its input port; the receiving port
//! imposes `u + z·ω` equal to that delayed value. Eliminating `ω` from the
//! subgraph equations turns each local problem into a constant SPD system
//!
//! ```text
//! [ C + Z⁻¹  E ] [u]   [ f + Z⁻¹ u_twin − ω_twin ]
//! [ F        D ] [y] = [ g                       ]
//! ω = −Z⁻¹ u + Z⁻¹ u_twin − ω_twin
//! ```
//!
//! which is factored once and re-solved for every new set of remote values.
//! Ports are ordered first (in the partition's port order), inner vertices after.

use nalgebra::DMatrix;

use crate::error::{structural, Error, Result};
use crate::evs::{Partition, Side};
use crate::matrix::{factor_spd, solve_factored_in_place, SpdFactor};

/// Characteristic impedance and the two directed delays of one twin pair.
/// `tau_fwd` runs from the pair's `a` end to its `b` end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtlpSpec {
    pub z: f64,
    pub tau_fwd: f64,
    pub tau_bwd: f64,
}

impl DtlpSpec {
    pub fn new(z: f64, tau_fwd: f64, tau_bwd: f64) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::Config(format!("impedance must be positive, got {z}")));
        }
        if !(tau_fwd > 0.0 && tau_bwd > 0.0 && tau_fwd.is_finite() && tau_bwd.is_finite()) {
            return Err(Error::Config(format!(
                "delays must be positive, got {tau_fwd} and {tau_bwd}"
            )));
        }
        Ok(Self { z, tau_fwd, tau_bwd })
    }

    /// Delay of the line leaving the given end.
    pub fn delay_from(&self, side: Side) -> f64 {
        match side {
            Side::A => self.tau_fwd,
            Side::B => self.tau_bwd,
        }
    }
}

/// Value carried by a line from an input port with potential `u` and inflow `omega`.
pub fn incident_value(u: f64, omega: f64, z: f64) -> f64 {
    u - z * omega
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortValue {
    pub u: f64,
    pub omega: f64,
    pub stamp: f64,
}

/// Potential and inflow current of every port entry of one subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryState {
    pub ports: Vec<PortValue>,
}

impl BoundaryState {
    pub fn zeros(n_ports: usize) -> Self {
        Self {
            ports: vec![PortValue { u: 0.0, omega: 0.0, stamp: 0.0 }; n_ports],
        }
    }

    pub fn from_solution(sol: &LocalSolution, stamp: f64) -> Self {
        Self {
            ports: sol
                .u
                .iter()
                .zip(&sol.omega)
                .map(|(&u, &omega)| PortValue { u, omega, stamp })
                .collect(),
        }
    }

    /// Largest absolute change of any `u` or `ω` between two states.
    pub fn max_change(&self, other: &BoundaryState) -> f64 {
        self.ports
            .iter()
            .zip(&other.ports)
            .map(|(a, b)| (a.u - b.u).abs().max((a.omega - b.omega).abs()))
            .fold(0.0, f64::max)
    }
}

/// Result of one local solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    /// Potentials in local order: port vertices, then inner vertices.
    pub x: Vec<f64>,
    /// Potential of each port entry.
    pub u: Vec<f64>,
    /// Inflow current of each port entry.
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LocalSystem {
    subgraph: usize,
    /// Local index → vertex position in the subgraph.
    order: Vec<usize>,
    n_port_vertices: usize,
    /// Port entry → local index of its vertex.
    entry_vertex: Vec<usize>,
    z: Vec<f64>,
    /// Port entry → (subgraph, slot) of its twin.
    twins: Vec<(usize, usize)>,
    c: DMatrix<f64>,
    e: DMatrix<f64>,
    f_blk: DMatrix<f64>,
    d: DMatrix<f64>,
    f_src: Vec<f64>,
    g_src: Vec<f64>,
    reduced: DMatrix<f64>,
    factor: SpdFactor,
}

impl LocalSystem {
    pub fn subgraph(&self) -> usize {
        self.subgraph
    }

    pub fn n_ports(&self) -> usize {
        self.entry_vertex.len()
    }

    pub fn n_port_vertices(&self) -> usize {
        self.n_port_vertices
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Port entry → local index of its vertex.
    pub fn entry_vertices(&self) -> &[usize] {
        &self.entry_vertex
    }

    pub fn impedances(&self) -> &[f64] {
        &self.z
    }

    pub fn twins(&self) -> &[(usize, usize)] {
        &self.twins
    }

    pub fn blocks(&self) -> (&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>) {
        (&self.c, &self.e, &self.f_blk, &self.d)
    }

    pub fn sources(&self) -> (&[f64], &[f64]) {
        (&self.f_src, &self.g_src)
    }

    /// Reduced matrix in local (ports first) order.
    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Reduced matrix permuted back to the subgraph's vertex order.
    pub fn reduced_in_vertex_order(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(self.order[i], self.order[j])] = self.reduced[(i, j)];
            }
        }
        out
    }

    /// Scatters a local-order vector into subgraph vertex order.
    pub fn to_vertex_order(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (local, &pos) in self.order.iter().enumerate() {
            out[pos] = x[local];
        }
        out
    }

    /// Max-norm residual of the three block rows of the un-reduced system
    /// `[C E −I; F D 0; I 0 Z] [u; y; ω] = [f; g; u_twin − Z ω_twin]`.
    pub fn augmented_residual(&self, sol: &LocalSolution, remote_u: &[f64], remote_omega: &[f64]) -> f64 {
        let np = self.n_port_vertices;
        let (xu, xy) = sol.x.split_at(np);
        let mut worst: f64 = 0.0;
        let mut row1: Vec<f64> = (0..np)
            .map(|i| {
                let cu: f64 = (0..np).map(|k| self.c[(i, k)] * xu[k]).sum();
                let ey: f64 = (0..xy.len()).map(|k| self.e[(i, k)] * xy[k]).sum();
                cu + ey - self.f_src[i]
            })
            .collect();
        for (entry, &v) in self.entry_vertex.iter().enumerate() {
            row1[v] -= sol.omega[entry];
        }
        for r in row1 {
            worst = worst.max(r.abs());
        }
        for i in 0..xy.len() {
            let fu: f64 = (0..np).map(|k| self.f_blk[(i, k)] * xu[k]).sum();
            let dy: f64 = (0..xy.len()).map(|k| self.d[(i, k)] * xy[k]).sum();
            worst = worst.max((fu + dy - self.g_src[i]).abs());
        }
        for (entry, &v) in self.entry_vertex.iter().enumerate() {
            let z = self.z[entry];
            let lhs = xu[v] + z * sol.omega[entry];
            let rhs = incident_value(remote_u[entry], remote_omega[entry], z);
            worst = worst.max((lhs - rhs).abs());
        }
        worst
    }
}

/// Builds and factors the local system of subgraph `j`; `z` holds one
/// impedance per port entry, in port order.
pub fn assemble_local(p: &Partition, j: usize, z: &[f64]) -> Result<LocalSystem> {
    let g = p
        .subgraphs()
        .get(j)
        .ok_or_else(|| structural(format!("no subgraph {j}")))?;
    let ports = p.ports(j);
    if z.len() != ports.len() {
        return Err(structural(format!(
            "subgraph {j} has {} ports but {} impedances were given",
            ports.len(),
            z.len()
        )));
    }
    if let Some(bad) = z.iter().find(|z| !(**z > 0.0 && z.is_finite())) {
        return Err(Error::Config(format!("impedance must be positive, got {bad}")));
    }

    let mut order: Vec<usize> = Vec::with_capacity(g.len());
    let mut local_of = vec![usize::MAX; g.len()];
    let mut entry_vertex = Vec::with_capacity(ports.len());
    for &port in ports {
        let pos = g
            .position(&p.end(port).vertex)
            .ok_or_else(|| structural("port vertex missing from subgraph"))?;
        if local_of[pos] == usize::MAX {
            local_of[pos] = order.len();
            order.push(pos);
        }
        entry_vertex.push(local_of[pos]);
    }
    let np = order.len();
    for pos in 0..g.len() {
        if local_of[pos] == usize::MAX {
            local_of[pos] = order.len();
            order.push(pos);
        }
    }

    let full = g.matrix();
    let n = order.len();
    let permuted = DMatrix::from_fn(n, n, |r, c| full[(order[r], order[c])]);
    let sources = g.sources();
    let local_src: Vec<f64> = order.iter().map(|&pos| sources[pos]).collect();

    let mut reduced = permuted.clone();
    for (entry, &v) in entry_vertex.iter().enumerate() {
        reduced[(v, v)] += 1.0 / z[entry];
    }
    let factor = factor_spd(&reduced).map_err(|err| Error::Assembly {
        subgraph: j,
        reason: match err {
            Error::Factorization { pivot, value } => format!(
                "reduced matrix is not SPD (pivot {pivot}, value {value:e}); \
                 the subgraph must be SPD or SNND with a null space not confined to inner vertices"
            ),
            other => other.to_string(),
        },
    })?;

    let twins = ports
        .iter()
        .map(|&port| {
            let t = port.twin();
            (p.end(t).subgraph, p.slot(t))
        })
        .collect();

    Ok(LocalSystem {
        subgraph: j,
        c: permuted.view((0, 0), (np, np)).into_owned(),
        e: permuted.view((0, np), (np, n - np)).into_owned(),
        f_blk: permuted.view((np, 0), (n - np, np)).into_owned(),
        d: permuted.view((np, np), (n - np, n - np)).into_owned(),
        f_src: local_src[..np].to_vec(),
        g_src: local_src[np..].to_vec(),
        order,
        n_port_vertices: np,
        entry_vertex,
        z: z.to_vec(),
        twins,
        reduced,
        factor,
    })
}

/// Impedance of every port entry of subgraph `j`, taken from its pair.
pub fn port_impedances(p: &Partition, dtlps: &[DtlpSpec], j: usize) -> Result<Vec<f64>> {
    p.ports(j)
        .iter()
        .map(|port| {
            dtlps
                .get(port.pair)
                .map(|d| d.z)
                .ok_or_else(|| Error::Config(format!("no line pair specification for twin pair {}", port.pair)))
        })
        .collect()
}

/// Assembles every subgraph with impedances from `dtlps` (indexed by pair).
pub fn assemble_all(p: &Partition, dtlps: &[DtlpSpec]) -> Result<Vec<LocalSystem>> {
    if dtlps.len() != p.twin_pairs().len() {
        return Err(Error::Config(format!(
            "partition has {} twin pairs but {} line pair specifications were given",
            p.twin_pairs().len(),
            dtlps.len()
        )));
    }
    (0..p.len())
        .map(|j| assemble_local(p, j, &port_impedances(p, dtlps, j)?))
        .collect()
}

/// Solves the local system for the given remote values (ordered like the
/// subgraph's twin list) and recovers the inflow currents.
pub fn local_update(ls: &LocalSystem, remote_u: &[f64], remote_omega: &[f64]) -> Result<LocalSolution> {
    let m = ls.n_ports();
    if remote_u.len() != m || remote_omega.len() != m {
        return Err(structural(format!(
            "subgraph {} expects {m} remote values, got {} and {}",
            ls.subgraph,
            remote_u.len(),
            remote_omega.len()
        )));
    }
    let mut x: Vec<f64> = ls.f_src.iter().chain(&ls.g_src).copied().collect();
    for (entry, &v) in ls.entry_vertex.iter().enumerate() {
        x[v] += remote_u[entry] / ls.z[entry] - remote_omega[entry];
    }
    solve_factored_in_place(&ls.factor, &mut x)?;
    let u: Vec<f64> = ls.entry_vertex.iter().map(|&v| x[v]).collect();
    let omega = (0..m)
        .map(|e| -u[e] / ls.z[e] + remote_u[e] / ls.z[e] - remote_omega[e])
        .collect();
    Ok(LocalSolution { x, u, omega })
}

/// Remote values seen by subgraph `j` when every subgraph holds `states`.
pub fn gather_remote(ls: &LocalSystem, states: &[BoundaryState]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut ru = Vec::with_capacity(ls.n_ports());
    let mut rw = Vec::with_capacity(ls.n_ports());
    for &(k, slot) in &ls.twins {
        let pv = states
            .get(k)
            .and_then(|s| s.ports.get(slot))
            .ok_or_else(|| structural(format!("missing boundary state for subgraph {k} slot {slot}")))?;
        ru.push(pv.u);
        rw.push(pv.omega);
    }
    Ok((ru, rw))
}

/// One synchronous sweep: every subgraph solves against its neighbours'
/// previous boundary states.
pub fn vtm_sweep(systems: &[LocalSystem], states: &[BoundaryState]) -> Result<Vec<LocalSolution>> {
    if systems.len() != states.len() {
        return Err(structural(format!(
            "{} local systems but {} boundary states",
            systems.len(),
            states.len()
        )));
    }
    systems
        .iter()
        .map(|ls| {
            let (ru, rw) = gather_remote(ls, states)?;
            local_update(ls, &ru, &rw)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::evs::apply_split;
    use crate::graph::graph_from_system;
    use crate::matrix::direct_solve;

    fn four_vertex_partition() -> Partition {
        let g = graph_from_system(&demo::four_vertex_system());
        apply_split(&g, &demo::four_vertex_plan()).unwrap()
    }

    fn assert_matrix(got: &DMatrix<f64>, want: &[f64]) {
        let n = got.nrows();
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (got[(i, j)] - want[i * n + j]).abs() <= 1e-14,
                    "entry ({i},{j}): {} vs {}",
                    got[(i, j)],
                    want[i * n + j]
                );
            }
        }
    }

    #[test]
    fn incident_value_arithmetic() {
        assert_eq!(incident_value(0.0, 0.0, 0.2), 0.0);
        assert!((incident_value(1.0, 2.0, 0.2) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn dtlp_rejects_nonpositive() {
        assert!(DtlpSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(DtlpSpec::new(1.0, 0.0, 1.0).is_err());
        assert!(DtlpSpec::new(1.0, 1.0, -2.0).is_err());
        assert_eq!(DtlpSpec::new(1.0, 2.0, 3.0).unwrap().delay_from(Side::B), 3.0);
    }

    #[test]
    fn reduced_matrices_of_worked_example() {
        let p = four_vertex_partition();
        let ls = assemble_all(&p, &demo::two_processor_dtlps()).unwrap();
        assert_matrix(
            &ls[0].reduced_in_vertex_order(),
            &[5.0, -1.0, -1.0, -1.0, 7.5, -0.9, -1.0, -0.9, 13.3],
        );
        assert_matrix(
            &ls[1].reduced_in_vertex_order(),
            &[8.5, -1.1, -1.0, -1.1, 13.7, -2.0, -1.0, -2.0, 8.0],
        );
        // ports first inside the local system
        assert_eq!(ls[0].n_port_vertices(), 2);
        assert_eq!(ls[0].blocks().3.nrows(), 1);
    }

    #[test]
    fn portless_subgraph_keeps_its_matrix() {
        let g = graph_from_system(&demo::four_vertex_system());
        let p = Partition::single(&g);
        let ls = assemble_local(&p, 0, &[]).unwrap();
        assert_eq!(ls.reduced_in_vertex_order(), g.matrix());
    }

    #[test]
    fn zero_remote_solve_matches_oracle() {
        let p = four_vertex_partition();
        let ls = assemble_all(&p, &demo::two_processor_dtlps()).unwrap();
        let sol = local_update(&ls[0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[5.0, -1.0, -1.0, -1.0, 7.5, -0.9, -1.0, -0.9, 13.3]);
        let want = direct_solve(&a, &[1.0, 0.8, 1.6]).unwrap();
        let got = ls[0].to_vertex_order(&sol.x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12);
        }
        // ω = −u/z when both remote values are zero
        assert!((sol.omega[0] + sol.u[0] / 0.2).abs() <= 1e-12);
        assert!(ls[0].augmented_residual(&sol, &[0.0, 0.0], &[0.0, 0.0]) <= 1e-10);
    }

    #[test]
    fn converged_values_are_a_fixed_point() {
        let sys = demo::four_vertex_system();
        let x = direct_solve(&sys.to_dense(), sys.rhs()).unwrap();
        let p = four_vertex_partition();
        let ls = assemble_all(&p, &demo::two_processor_dtlps()).unwrap();
        // ω at a port of subgraph 0 is what flows in from the other side:
        // row of the subgraph equation minus its source.
        let states: Vec<BoundaryState> = (0..2)
            .map(|j| {
                let g = p.subgraph(j);
                let m = g.matrix();
                let xs: Vec<f64> = g.vertices().iter().map(|v| x[v.id.index - 1]).collect();
                let ports = p
                    .ports(j)
                    .iter()
                    .map(|&port| {
                        let pos = g.position(&p.end(port).vertex).unwrap();
                        let row: f64 = (0..g.len()).map(|k| m[(pos, k)] * xs[k]).sum();
                        PortValue { u: xs[pos], omega: row - g.vertices()[pos].source, stamp: 0.0 }
                    })
                    .collect();
                BoundaryState { ports }
            })
            .collect();
        let next = vtm_sweep(&ls, &states).unwrap();
        for (j, sol) in next.iter().enumerate() {
            let st = BoundaryState::from_solution(sol, 0.0);
            assert!(st.max_change(&states[j]) <= 1e-12);
        }
    }

    #[test]
    fn sweep_from_zero_is_two_independent_updates() {
        let p = four_vertex_partition();
        let ls = assemble_all(&p, &demo::two_processor_dtlps()).unwrap();
        let zeros = vec![BoundaryState::zeros(2), BoundaryState::zeros(2)];
        let swept = vtm_sweep(&ls, &zeros).unwrap();
        for j in 0..2 {
            assert_eq!(swept[j], local_update(&ls[j], &[0.0; 2], &[0.0; 2]).unwrap());
        }
    }

    #[test]
    fn indefinite_reduced_matrix_is_an_assembly_error() {
        let g = graph_from_system(&demo::four_vertex_system());
        let plan = crate::evs::SplitPlan::new()
            .assign(1, 0)
            .assign(4, 1)
            .split_with(2, 0, 1, 0.01, 0.5)
            .split_with(3, 0, 1, 0.01, 0.5);
        let p = apply_split(&g, &plan).unwrap();
        // large impedances add almost nothing to the port diagonal
        let err = assemble_local(&p, 0, &[1e6, 1e6]).unwrap_err();
        assert!(matches!(err, Error::Assembly { subgraph: 0, .. }));
        assert!(matches!(local_update(&assemble_local(&p, 1, &[1.0, 1.0]).unwrap(), &[0.0], &[0.0]), Err(Error::Structural(_))));
    }
}
