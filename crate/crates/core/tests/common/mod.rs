#![allow(dead_code)]

use dtm::evs::{apply_split, validate_partition, Partition, SplitPlan};
use dtm::experiment::gen_random_spd;
use dtm::graph::{graph_from_system, ElectricGraph, VertexId};
use dtm::matrix::DefinitenessClass;
use dtm::SymmetricSystem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo.ln()..=hi.ln()).exp()
}

pub fn dense_rows(sys: &SymmetricSystem) -> Vec<Vec<f64>> {
    let n = sys.dim();
    (0..n).map(|i| (0..n).map(|j| sys.get(i, j)).collect()).collect()
}

/// Gaussian elimination with partial pivoting on plain vectors.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

pub fn reference_solution(sys: &SymmetricSystem) -> Vec<f64> {
    gauss_solve(dense_rows(sys), sys.rhs().to_vec())
}

pub fn rms(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Random two-way split plan for `g`: each vertex picks a side and side-0
/// vertices touching side 1 form the boundary. A boundary copy gets the
/// coupling weight of its own edges plus a share in `[0.3, 0.7]` of the
/// diagonal margin, so diagonally dominant graphs stay dominant on both
/// sides. Source and boundary-edge fractions are uniform in `[0.3, 0.7]`.
/// `None` when the draw has no boundary.
pub fn random_plan(g: &ElectricGraph, r: &mut ChaCha8Rng) -> Option<SplitPlan> {
    let n = g.len();
    let pos = |id: &VertexId| g.position(id).unwrap();
    let side: Vec<usize> = (0..n).map(|_| r.random_range(0..2)).collect();
    let mut boundary = vec![false; n];
    for (a, b, _) in g.edge_ids() {
        let (i, j) = (pos(a), pos(b));
        if side[i] != side[j] {
            boundary[if side[i] == 0 { i } else { j }] = true;
        }
    }
    if !boundary.iter().any(|&b| b) || !side.contains(&1) {
        return None;
    }
    let mut plan = SplitPlan::new();
    // coupling weight each boundary copy carries into subgraph 0 and 1
    let mut held = vec![(0.0, 0.0); n];
    for (a, b, w) in g.edge_ids() {
        let (i, j) = (pos(a), pos(b));
        let w = w.abs();
        match (boundary[i], boundary[j]) {
            (true, true) => {
                let gamma = r.random_range(0.3..=0.7);
                plan = plan.edge(a.clone(), b.clone(), gamma);
                for k in [i, j] {
                    held[k].0 += gamma * w;
                    held[k].1 += (1.0 - gamma) * w;
                }
            }
            (true, false) => if side[j] == 0 { held[i].0 += w } else { held[i].1 += w },
            (false, true) => if side[i] == 0 { held[j].0 += w } else { held[j].1 += w },
            (false, false) => {}
        }
    }
    for (i, v) in g.vertices().iter().enumerate() {
        plan = if boundary[i] {
            let d = g.matrix()[(i, i)];
            let margin = d - held[i].0 - held[i].1;
            let wf = (held[i].0 + r.random_range(0.3..=0.7) * margin) / d;
            plan.split_with(v.id.clone(), 0, 1, wf, r.random_range(0.3..=0.7))
        } else {
            plan.assign(v.id.clone(), side[i])
        };
    }
    Some(plan)
}

/// A validated level-one split of `sys` with both halves SPD.
pub fn random_level_one(sys: &SymmetricSystem, r: &mut ChaCha8Rng) -> Option<Partition> {
    let g = graph_from_system(sys);
    for _ in 0..200 {
        let Some(plan) = random_plan(&g, r) else { continue };
        let Ok(p) = apply_split(&g, &plan) else { continue };
        let report = validate_partition(&p, &g).unwrap();
        if report.reassembly_ok && report.classes.iter().all(|c| *c == DefinitenessClass::Spd) {
            return Some(p);
        }
    }
    None
}

/// Random SPD system of order in `[lo, hi]` with a validated level-one split.
pub fn random_case(r: &mut ChaCha8Rng, lo: usize, hi: usize, density: f64) -> (SymmetricSystem, Partition) {
    loop {
        let n = r.random_range(lo..=hi);
        let sys = gen_random_spd(n, density, r.random()).unwrap();
        if let Some(p) = random_level_one(&sys, r) {
            return (sys, p);
        }
    }
}
