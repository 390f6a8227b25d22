use proptest::prelude::*;
use rayon::prelude::*;
use skm_core::generators::{gen_qp_family, gen_repair_problem};
use skm_core::oracle::project_exact;
use skm_core::skm::{skm_step, RowSystem};
use skm_core::{
    batch_solve, naive_solve, recover, transform, tskm_solve, DVector, SkmConfig, SkmState,
    Termination,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn equalities_hold_at_every_iterate(seed in any::<u64>(), q in 1usize..6) {
        let inst = gen_repair_problem(8, 10, q, seed, 100.0).unwrap();
        let s = &inst.system;
        let t = transform(s).unwrap();
        let rows = RowSystem::new(&t.a_new, &t.b_new).unwrap();
        let cfg = SkmConfig { seed, ..Default::default() };
        let mut state = SkmState::new(DVector::zeros(t.reduced_dim()), seed);
        let tol = 1e-8 * s.d.amax().max(1.0);
        for _ in 0..300 {
            skm_step(&mut state, &rows, &cfg);
            let z = recover(&t, &state.w).unwrap();
            prop_assert!(s.max_equality_violation(&z) <= tol);
        }
    }

    #[test]
    fn tight_solve_lands_between_projection_and_ceiling(seed in any::<u64>()) {
        let inst = gen_repair_problem(6, 6, 2, seed, 100.0).unwrap();
        let s = &inst.system;
        let y0 = s.start();
        let cert = project_exact(s, &y0).unwrap();
        prop_assert!(cert.verify(s, &y0));
        let d = cert.distance(&y0);
        let cfg = SkmConfig { tolerance: 1e-10, max_iters: 1_000_000, seed, ..Default::default() };
        let r = tskm_solve(s, &cfg).unwrap();
        prop_assert!(r.is_success());
        prop_assert!(r.max_ineq_violation <= 1e-10);
        prop_assert!(r.distance_moved >= d - 1e-8);
        prop_assert!(r.distance_moved <= 5f64.sqrt() * d);
    }
}

#[test]
fn null_space_needs_fewer_iterations_than_naive() {
    let wins: usize = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let inst = gen_repair_problem(50, 50, 25, seed, 100.0).unwrap();
            let cfg = SkmConfig {
                seed,
                max_iters: 2_000_000,
                ..Default::default()
            };
            let t = tskm_solve(&inst.system, &cfg).unwrap();
            let n = naive_solve(&inst.system, &cfg).unwrap();
            assert_eq!(t.termination, Termination::Converged);
            assert_eq!(n.termination, Termination::Converged);
            usize::from(t.iterations < n.iterations)
        })
        .sum();
    assert!(wins >= 40, "null-space won {wins}/50");
}

#[test]
fn generated_instances_always_converge() {
    (0..100u64).into_par_iter().for_each(|seed| {
        let n = 5 + (seed as usize % 40);
        let inst = gen_repair_problem(n, n, n / 2, seed, 100.0).unwrap();
        let cfg = SkmConfig {
            seed,
            max_iters: 1_000_000,
            ..Default::default()
        };
        let r = tskm_solve(&inst.system, &cfg).unwrap();
        assert_eq!(r.termination, Termination::Converged, "seed {seed}");
    });
}

#[test]
fn qp_family_inputs_are_repairable() {
    let fam = gen_qp_family(100, 50, 50, 3).unwrap();
    let systems: Vec<_> = (0..8)
        .map(|i| {
            let x = fam.sample_input(i);
            fam.constraint_system(&x)
                .unwrap()
                .with_y0(DVector::from_element(100, 3.0))
        })
        .collect();
    for r in batch_solve(&systems, &SkmConfig::default(), 0) {
        let r = r.unwrap();
        assert!(r.is_success());
        assert!(r.max_ineq_violation <= 1e-6);
        assert!(r.max_eq_violation <= 1e-8);
    }
}

#[test]
fn batch_results_do_not_depend_on_worker_count() {
    let systems: Vec<_> = (0..12u64)
        .map(|s| gen_repair_problem(15, 15, 7, s, 100.0).unwrap().system)
        .collect();
    let cfg = SkmConfig {
        seed: 77,
        ..Default::default()
    };
    let one = batch_solve(&systems, &cfg, 1);
    let many = batch_solve(&systems, &cfg, 8);
    for (a, b) in one.iter().zip(&many) {
        assert_eq!(a.as_ref().unwrap().to_json(), b.as_ref().unwrap().to_json());
    }
}
