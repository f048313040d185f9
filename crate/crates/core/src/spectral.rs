//! Numeric checks of the convergence analysis for two subgraphs whose every
//! vertex is split: eigenvalues of `Z·A`, the delayed transfer matrix
//!
//! ```text
//! T(s) = (I+ZA₁)⁻¹ e^{−sτ} (I−ZA₂)(I+ZA₂)⁻¹ e^{−sσ} (I−ZA₁)
//! ```
//!
//! and its final-value limit `(I − T(0))⁻¹ (sW₁ + sW₂) = A⁻¹b`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::engine::DtlpSpec;
use crate::error::{structural, Error, Result};
use crate::evs::{Partition, Side};
use crate::matrix::{factor_spd, norm2};
use crate::sim::{observer_system, Trace};

/// Agreement required between the two eigenvalue routes, relative to each eigenvalue.
pub const EIGEN_RTOL: f64 = 1e-10;

fn check_spd(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Precondition(format!("{what} is not square")));
    }
    let scale = a.abs().max().max(1.0);
    if (a - a.transpose()).abs().max() > 1e-12 * scale {
        return Err(Error::Precondition(format!("{what} is not symmetric")));
    }
    factor_spd(a).map_err(|_| Error::Precondition(format!("{what} is not positive definite")))?;
    Ok(())
}

fn check_positive(z: &[f64], what: &str) -> Result<()> {
    match z.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::Precondition(format!("{what} entries must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    let total: f64 = m.iter().map(|v| v * v).sum();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)] * m[(p, q)];
            }
        }
        if off <= 1e-32 * total {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (kp, kq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * kp - s * kq;
                    m[(k, q)] = s * kp + c * kq;
                }
                for k in 0..n {
                    let (pk, qk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * pk - s * qk;
                    m[(q, k)] = s * pk + c * qk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Eigenvalues of `diag(z)·A`, ascending.
///
/// Computed from the non-symmetric product by a real Schur decomposition and
/// cross-checked against Jacobi on `√Z A √Z`; both must agree and be real and
/// positive.
pub fn za_eigen(a: &DMatrix<f64>, z: &[f64]) -> Result<Vec<f64>> {
    check_spd(a, "A")?;
    check_positive(z, "Z")?;
    let n = a.nrows();
    if z.len() != n {
        return Err(Error::Precondition(format!("Z has {} entries, A has order {n}", z.len())));
    }
    let za = DMatrix::from_fn(n, n, |i, j| z[i] * a[(i, j)]);
    let mut general: Vec<Complex64> = za.complex_eigenvalues().iter().copied().collect();
    general.sort_by(|x, y| x.re.total_cmp(&y.re));
    let sqrt_z: Vec<f64> = z.iter().map(|v| v.sqrt()).collect();
    let sym = DMatrix::from_fn(n, n, |i, j| sqrt_z[i] * a[(i, j)] * sqrt_z[j]);
    let reference = jacobi_eigenvalues(&sym);

    let mut out = Vec::with_capacity(n);
    for (g, r) in general.iter().zip(&reference) {
        if g.im.abs() > EIGEN_RTOL * g.norm() {
            return Err(Error::Precondition(format!("eigenvalue {g} of ZA is not real")));
        }
        if !(g.re > 0.0) {
            return Err(Error::Precondition(format!("eigenvalue {} of ZA is not positive", g.re)));
        }
        if (g.re - r).abs() > EIGEN_RTOL * r.abs() {
            return Err(Error::Precondition(format!(
                "eigenvalue {} of ZA differs from {r} of the symmetric form",
                g.re
            )));
        }
        out.push(g.re);
    }
    Ok(out)
}

/// `Λ₁ = (1+t)/(1−t)` and `Λ₂ = (1−t)/(1+t)` entrywise, after checking that
/// every `Λ₁` entry has square above one and every `Λ₂` entry below one.
pub fn lambda_bounds(t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_positive(t, "t")?;
    let mut l1 = Vec::with_capacity(t.len());
    let mut l2 = Vec::with_capacity(t.len());
    for &ti in t {
        if ti == 1.0 {
            return Err(Error::Singularity("t = 1 makes (1 − t) vanish".into()));
        }
        let a = (1.0 + ti) / (1.0 - ti);
        let b = (1.0 - ti) / (1.0 + ti);
        if !(a * a > 1.0 && b * b < 1.0) {
            return Err(Error::Precondition(format!("magnitude bounds fail numerically at t = {ti}")));
        }
        l1.push(a);
        l2.push(b);
    }
    Ok((l1, l2))
}

/// Two subgraphs sharing all `r` vertices: `A = A₁ + A₂`, `b = b₁ + b₂`.
/// `tau` delays the lines into the first subgraph, `sigma` the lines into the second.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSplit {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub z: Vec<f64>,
    pub tau: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl TwoSplit {
    pub fn new(
        a1: DMatrix<f64>,
        a2: DMatrix<f64>,
        b1: Vec<f64>,
        b2: Vec<f64>,
        z: Vec<f64>,
        tau: Vec<f64>,
        sigma: Vec<f64>,
    ) -> Result<Self> {
        let r = a1.nrows();
        if a1.shape() != (r, r) || a2.shape() != (r, r) {
            return Err(structural("A₁ and A₂ must be square of equal order"));
        }
        if [b1.len(), b2.len(), z.len(), tau.len(), sigma.len()].iter().any(|&l| l != r) {
            return Err(structural(format!("every vector must have {r} entries")));
        }
        check_positive(&z, "Z")?;
        check_positive(&tau, "tau")?;
        check_positive(&sigma, "sigma")?;
        Ok(Self { a1, a2, b1, b2, z, tau, sigma })
    }

    /// Reads the split off a two-subgraph partition in which every vertex is
    /// a port with exactly one twin. Entry `k` is twin pair `k`.
    pub fn from_partition(p: &Partition, dtlps: &[DtlpSpec]) -> Result<Self> {
        if p.len() != 2 {
            return Err(Error::Precondition(format!("expected 2 subgraphs, found {}", p.len())));
        }
        let pairs = p.twin_pairs();
        let r = pairs.len();
        if dtlps.len() != r {
            return Err(Error::Config(format!("{r} twin pairs but {} line pair specifications", dtlps.len())));
        }
        for j in 0..2 {
            if p.subgraph(j).len() != r || p.ports(j).len() != r {
                return Err(Error::Precondition(
                    "every vertex must be split exactly once between the two subgraphs".into(),
                ));
            }
        }
        let mut pos = [vec![0usize; r], vec![0usize; r]];
        let mut tau = vec![0.0; r];
        let mut sigma = vec![0.0; r];
        for (k, pair) in pairs.iter().enumerate() {
            let first = if pair.a.subgraph == 0 { Side::A } else { Side::B };
            for (j, side) in [(0, first), (1, first.other())] {
                let end = pair.end(side);
                if end.subgraph != j {
                    return Err(Error::Precondition(format!("pair {k} does not join the two subgraphs")));
                }
                pos[j][k] = p
                    .subgraph(j)
                    .position(&end.vertex)
                    .ok_or_else(|| structural("pair end missing from its subgraph"))?;
            }
            sigma[k] = dtlps[k].delay_from(first);
            tau[k] = dtlps[k].delay_from(first.other());
        }
        let pick = |j: usize| {
            let g = p.subgraph(j);
            let m = g.matrix();
            let src = g.sources();
            let a = DMatrix::from_fn(r, r, |x, y| m[(pos[j][x], pos[j][y])]);
            let b: Vec<f64> = pos[j].iter().map(|&i| src[i]).collect();
            (a, b)
        };
        let (a1, b1) = pick(0);
        let (a2, b2) = pick(1);
        Self::new(a1, a2, b1, b2, dtlps.iter().map(|d| d.z).collect(), tau, sigma)
    }

    pub fn order(&self) -> usize {
        self.z.len()
    }

    pub fn a(&self) -> DMatrix<f64> {
        &self.a1 + &self.a2
    }

    pub fn b(&self) -> Vec<f64> {
        self.b1.iter().zip(&self.b2).map(|(x, y)| x + y).collect()
    }

    fn za(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.order(), self.order(), |i, j| self.z[i] * a[(i, j)])
    }

    /// `(I+ZA₁)⁻¹, I−ZA₁, (I+ZA₂)⁻¹, I−ZA₂`.
    fn factors(&self) -> Result<[DMatrix<f64>; 4]> {
        let id = DMatrix::identity(self.order(), self.order());
        let (za1, za2) = (self.za(&self.a1), self.za(&self.a2));
        let inv = |m: DMatrix<f64>| m.try_inverse().ok_or_else(|| Error::Singularity("I + ZAᵢ is singular".into()));
        Ok([inv(&id + &za1)?, &id - za1, inv(&id + &za2)?, id - za2])
    }

    /// `lim_{s→0} sW₁` and `lim_{s→0} sW₂`.
    pub fn limit_sources(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let [m1_inv, _, m2_inv, n2] = self.factors()?;
        let through = &m1_inv * &n2 * &m2_inv;
        let w = |b: &[f64]| {
            let zb = nalgebra::DVector::from_iterator(b.len(), b.iter().zip(&self.z).map(|(b, z)| b * z));
            let v = &through * &zb + &m1_inv * &zb;
            v.iter().copied().collect::<Vec<f64>>()
        };
        Ok((w(&self.b1), w(&self.b2)))
    }

    /// `(I − T(0))⁻¹ (sW₁ + sW₂)` at `s → 0`; equals `A⁻¹b`.
    pub fn final_value_limit(&self) -> Result<Vec<f64>> {
        let r = self.order();
        let t0 = transfer_matrix(self, Complex64::new(0.0, 0.0))?.map(|c| c.re);
        let lhs = DMatrix::<f64>::identity(r, r) - t0;
        let (w1, w2) = self.limit_sources()?;
        let rhs = nalgebra::DVector::from_iterator(r, w1.iter().zip(&w2).map(|(x, y)| x + y));
        let sol = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Singularity("I − T(0) is singular".into()))?;
        Ok(sol.iter().copied().collect())
    }
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

fn delay_diag(s: Complex64, d: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(d.len(), d.iter().map(|&t| (-s * t).exp())))
}

pub fn transfer_matrix(split: &TwoSplit, s: Complex64) -> Result<DMatrix<Complex64>> {
    let [m1_inv, n1, m2_inv, n2] = split.factors()?;
    Ok(complexify(&m1_inv)
        * delay_diag(s, &split.tau)
        * complexify(&(n2 * m2_inv))
        * delay_diag(s, &split.sigma)
        * complexify(&n1))
}

/// `det(I − T(s))`.
pub fn characteristic_det(split: &TwoSplit, s: Complex64) -> Result<Complex64> {
    let r = split.order();
    Ok((DMatrix::<Complex64>::identity(r, r) - transfer_matrix(split, s)?).determinant())
}

/// Polar sample of the closed right half-plane: radii `1..=10`, ten angles
/// spread evenly over `[−π/2, π/2]`.
pub fn right_half_plane_grid() -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(100);
    for k in 1..=10 {
        for m in 0..10 {
            let theta = -std::f64::consts::FRAC_PI_2 + m as f64 * std::f64::consts::PI / 9.0;
            pts.push(Complex64::from_polar(k as f64, theta));
        }
    }
    pts
}

/// Smallest `|det(I − T(s))|` over the grid.
pub fn min_det_on_grid(split: &TwoSplit) -> Result<f64> {
    right_half_plane_grid()
        .into_iter()
        .map(|s| characteristic_det(split, s).map(|d| d.norm()))
        .try_fold(f64::INFINITY, |acc, d| d.map(|d| acc.min(d)))
}

/// `‖Ax − b‖ / ‖b‖` of the final assembled potentials of a trace.
pub fn steady_state_residual(p: &Partition, trace: &Trace) -> Result<f64> {
    if trace.samples.is_empty() {
        return Err(structural("trace has no samples"));
    }
    let x = p.assemble(&trace.final_potentials)?;
    let sys = observer_system(p)?;
    let r = sys.to_csr().residual(&x, sys.rhs());
    let bn = norm2(sys.rhs());
    Ok(if bn > 0.0 { norm2(&r) / bn } else { norm2(&r) })
}
