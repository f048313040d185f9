mod common;

use dtm::engine::{assemble_all, local_update};
use dtm::evs::{multilevel_split, validate_partition, PortRef, Side};
use dtm::experiment::{gen_grid_spd, gen_random_spd};
use dtm::graph::{graph_from_system, system_from_graph};
use dtm::io::{read_matrix_market, write_matrix_market};
use dtm::matrix::{definiteness_class, direct_solve, factor_spd, solve_factored, DEFAULT_DEFINITENESS_TOL};
use dtm::nalgebra::{DMatrix, DVector};
use dtm::sim::RecordMode;
use dtm::spectral::lambda_bounds;
use dtm::{run_async, run_vtm, DefinitenessClass, DtlpSpec, SimConfig, SymmetricSystem};
use proptest::prelude::*;
use rand::Rng;

use common::{log_uniform, random_case, random_plan, rng};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(48)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn cholesky_solve_matches_elimination(n in 1usize..=64, density in 0.05f64..0.6, seed in any::<u64>()) {
        let sys = gen_random_spd(n, density, seed).unwrap();
        let a = sys.to_dense();
        let x = solve_factored(&factor_spd(&a).unwrap(), sys.rhs()).unwrap();
        let y = direct_solve(&a, sys.rhs()).unwrap();
        let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (p, q) in x.iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn cholesky_accepts_exactly_the_spd_matrices(n in 1usize..=12, shift in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        let a = (&m + m.transpose()) * 0.5 + DMatrix::identity(n, n) * shift;
        let min = a.clone().symmetric_eigenvalues().min();
        prop_assume!(min.abs() > 1e-6);
        prop_assert_eq!(factor_spd(&a).is_ok(), min > 0.0);
    }

    #[test]
    fn graph_round_trip_is_exact(n in 1usize..=40, density in 0.05f64..0.5, seed in any::<u64>()) {
        let sys = gen_random_spd(n, density, seed).unwrap();
        let g = graph_from_system(&sys);
        prop_assert_eq!(system_from_graph(&g).unwrap(), sys.clone());
        prop_assert_eq!(g.matrix(), sys.to_dense());
        prop_assert_eq!(g.sources(), sys.rhs().to_vec());
    }

    #[test]
    fn graph_and_system_share_definiteness(n in 1usize..=10, shift in -2.0f64..2.0, seed in any::<u64>()) {
        let mut r = rng(seed);
        let entries: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, if i == j { shift + 1.0 } else { r.random_range(-0.5..0.5) }))
            .collect();
        let sys = SymmetricSystem::new(n, entries, vec![1.0; n]).unwrap();
        let g = graph_from_system(&sys);
        prop_assert_eq!(
            definiteness_class(&g.matrix(), DEFAULT_DEFINITENESS_TOL).unwrap(),
            definiteness_class(&sys.to_dense(), DEFAULT_DEFINITENESS_TOL).unwrap()
        );
    }

    #[test]
    fn splits_reassemble_at_every_level(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (sys, p) = random_case(&mut r, 3, 40, 0.2);
        let g = graph_from_system(&sys);
        prop_assert!(validate_partition(&p, &g).unwrap().reassembly_ok);
        let ports: usize = (0..p.len()).map(|j| p.ports(j).len()).sum();
        prop_assert_eq!(ports, 2 * p.twin_pairs().len());

        for j in 0..p.len() {
            if let Some(plan) = random_plan(p.subgraph(j), &mut r) {
                let deeper = multilevel_split(&p, j, &plan).unwrap();
                prop_assert_eq!(deeper.len(), p.len() + 1);
                prop_assert!(validate_partition(&deeper, &g).unwrap().reassembly_ok);
                let ports: usize = (0..deeper.len()).map(|k| deeper.ports(k).len()).sum();
                prop_assert_eq!(ports, 2 * deeper.twin_pairs().len());
            }
        }
    }

    #[test]
    fn local_solve_satisfies_the_augmented_system(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, p) = random_case(&mut r, 3, 30, 0.2);
        let dtlps: Vec<DtlpSpec> = (0..p.twin_pairs().len())
            .map(|_| DtlpSpec::new(log_uniform(&mut r, 0.05, 20.0), 1.0, 1.0).unwrap())
            .collect();
        for ls in assemble_all(&p, &dtlps).unwrap() {
            prop_assert_eq!(
                definiteness_class(ls.reduced(), DEFAULT_DEFINITENESS_TOL).unwrap(),
                DefinitenessClass::Spd
            );
            let m = ls.n_ports();
            let ru: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
            let rw: Vec<f64> = (0..m).map(|_| r.random_range(-1.0..1.0)).collect();
            let sol = local_update(&ls, &ru, &rw).unwrap();
            prop_assert!(ls.augmented_residual(&sol, &ru, &rw) <= 1e-10);

            // [C E −P; F D 0; Pᵀ 0 Z] [u; y; ω] = [f; g; ru − Z·rw], solved by LU
            let (c, e, f, d) = ls.blocks();
            let (fs, gs) = ls.sources();
            let (np, dim) = (ls.n_port_vertices(), ls.dim());
            let z = ls.impedances();
            let mut big = DMatrix::zeros(dim + m, dim + m);
            big.view_mut((0, 0), (np, np)).copy_from(c);
            big.view_mut((0, np), (np, dim - np)).copy_from(e);
            big.view_mut((np, 0), (dim - np, np)).copy_from(f);
            big.view_mut((np, np), (dim - np, dim - np)).copy_from(d);
            let mut rhs = DVector::zeros(dim + m);
            rhs.rows_mut(0, np).copy_from_slice(fs);
            rhs.rows_mut(np, dim - np).copy_from_slice(gs);
            for (k, &v) in ls.entry_vertices().iter().enumerate() {
                big[(v, dim + k)] = -1.0;
                big[(dim + k, v)] = 1.0;
                big[(dim + k, dim + k)] = z[k];
                rhs[dim + k] = ru[k] - z[k] * rw[k];
            }
            let want = big.lu().solve(&rhs).unwrap();
            for (k, got) in sol.x.iter().chain(&sol.omega).enumerate() {
                prop_assert!((got - want[k]).abs() <= 1e-9 * want[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn settled_twins_agree(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, p) = random_case(&mut r, 3, 24, 0.25);
        let dtlps: Vec<DtlpSpec> = (0..p.twin_pairs().len())
            .map(|_| DtlpSpec::new(log_uniform(&mut r, 0.1, 10.0), 1.0, 1.0).unwrap())
            .collect();
        let mut cfg = SimConfig::new(dtlps, 1.0).with_tol(1e-12);
        cfg.record = RecordMode::Residual;
        let trace = run_vtm(&p, &cfg, 200_000).unwrap();
        prop_assert!(trace.converged_at.is_some());
        for (k, pair) in p.twin_pairs().iter().enumerate() {
            let pot = |s: Side| {
                let end = pair.end(s);
                trace.final_potentials[end.subgraph][p.subgraph(end.subgraph).position(&end.vertex).unwrap()]
            };
            let omega = |s: Side| {
                let port = PortRef { pair: k, side: s };
                trace.final_states[p.end(port).subgraph].ports[p.slot(port)].omega
            };
            prop_assert!((pot(Side::A) - pot(Side::B)).abs() <= 1e-7);
            prop_assert!((omega(Side::A) + omega(Side::B)).abs() <= 1e-7);
        }
    }

    #[test]
    fn lambda_magnitudes(t in prop::collection::vec(1e-3f64..1e3, 1..50)) {
        prop_assume!(t.iter().all(|&t| (t - 1.0).abs() > 1e-9));
        let (l1, l2) = lambda_bounds(&t).unwrap();
        for (a, b) in l1.iter().zip(&l2) {
            prop_assert!(a * a > 1.0 && b * b < 1.0);
            prop_assert!((a * b - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn matrix_market_round_trip(n in 1usize..=40, density in 0.05f64..0.5, seed in any::<u64>()) {
        let sys = gen_random_spd(n, density, seed).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &sys).unwrap();
        let mm = read_matrix_market(buf.as_slice()).unwrap();
        prop_assert_eq!(SymmetricSystem::new(mm.n, mm.entries, sys.rhs().to_vec()).unwrap(), sys);
    }

    #[test]
    fn sample_times_never_decrease(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, p) = random_case(&mut r, 3, 20, 0.3);
        let (fwd, bwd) = (r.random_range(0.5..5.0), r.random_range(0.5..5.0));
        let dtlps: Vec<DtlpSpec> = (0..p.twin_pairs().len())
            .map(|_| DtlpSpec::new(log_uniform(&mut r, 0.1, 10.0), fwd, bwd).unwrap())
            .collect();
        let trace = run_async(&p, &SimConfig::new(dtlps, 60.0)).unwrap();
        prop_assert!(trace.samples.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert!(trace.samples.iter().all(|s| s.time <= 60.0));
    }

    #[test]
    fn generators_are_deterministic(n in 1usize..=30, seed in any::<u64>()) {
        prop_assert_eq!(gen_random_spd(n, 0.2, seed).unwrap(), gen_random_spd(n, 0.2, seed).unwrap());
        prop_assert_eq!(gen_grid_spd(n.min(8), 3, seed).unwrap(), gen_grid_spd(n.min(8), 3, seed).unwrap());
    }
}
