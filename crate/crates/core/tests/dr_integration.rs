mod common;

use common::*;
use relocsplit::diagnostics::{fixed_point_oracle, verify_one_step_contraction, verify_rate_theorem, annotate_distances, FixedPointCache};
use relocsplit::dr::{
    affine_primal_dual, algorithm1_run, fix_decomposition_check, primal_dual_extract, DrFamily,
};
use relocsplit::family::{relocated_iterate, relocator_only_sequence, GammaInterval};
use relocsplit::operators::Operator;
use relocsplit::{OperatorFamily, StepsizeSchedule};

fn gi() -> GammaInterval {
    GammaInterval::new(0.5, 2.0).unwrap()
}

fn pair(seed: u64, dim: usize) -> (Affine, Affine, DrFamily) {
    let mut r = rng(seed);
    let a1 = Affine::random_spd(&mut r, dim, 0.5, 3.0);
    let a2 = Affine::random_spd(&mut r, dim, 1.0, 2.0);
    let fam = DrFamily::new(a1.op(), a2.op(), gi()).unwrap();
    (a1, a2, fam)
}

#[test]
fn apply_matches_dense_oracle() {
    let mut r = rng(1);
    let a1 = Affine::new(skew(&mut r, 4, 1.5) + spd(&mut r, 4, 0.0, 1.0), gaussian(&mut r, 4));
    let a2 = Affine::random_spd(&mut r, 4, 0.2, 2.0);
    let fam = DrFamily::new(a1.op(), a2.op(), gi()).unwrap();
    for _ in 0..20 {
        let x = gaussian(&mut r, 4) * 3.0;
        let g = uniform(&mut r, 0.5, 2.0);
        assert!((fam.apply(g, &x).unwrap() - dr_apply(&a1, &a2, g, &x)).norm() < 1e-12);
    }
}

#[test]
fn two_dimensional_geometric_run_converges() {
    let (a1, a2, fam) = pair(2, 2);
    let s = StepsizeSchedule::geometric(1.0, 0.8, 0.5, gi()).unwrap();
    let trace = relocated_iterate(&fam, &s, &V::from_vec(vec![4.0, -3.0]), 200).unwrap();
    assert!(trace.last().unwrap().residual <= 1e-10);
    assert!((&trace.last().unwrap().x - dr_fixed_point(&a1, &a2, 1.0)).norm() < 1e-10);
}

#[test]
fn constant_schedule_is_classical_dr() {
    let (a1, a2, fam) = pair(3, 2);
    let s = StepsizeSchedule::constant(1.3, gi()).unwrap();
    let trace = algorithm1_run(&fam, &s, &V::from_vec(vec![1.0, 1.0]), 300).unwrap();
    let z = trace.last().unwrap().block("z").unwrap();
    let m = &a1.m + &a2.m;
    assert!((&m * z + &a1.b + &a2.b).norm() <= 1e-10);
    let mut x = V::from_vec(vec![1.0, 1.0]);
    for row in &trace.rows {
        assert!((&row.x - &x).norm() < 1e-10);
        x = dr_apply(&a1, &a2, 1.3, &x);
    }
}

#[test]
fn relocated_fixed_point_is_fixed() {
    let (a1, a2, fam) = pair(4, 5);
    for (g, d) in [(0.5, 2.0), (1.7, 0.6), (1.0, 1.0)] {
        let x = fixed_point_oracle(&fam, g, &V::zeros(5), None, None).unwrap();
        assert!((&x - dr_fixed_point(&a1, &a2, g)).norm() < 1e-10);
        let y = fam.relocate(d, g, &x).unwrap();
        assert!(fam.fixed_point_residual(d, &y).unwrap() <= 1e-8);
    }
}

#[test]
fn geometric_rate_respects_contraction_bound() {
    let (a1, a2, fam) = pair(5, 6);
    let s = StepsizeSchedule::geometric(1.0, 1.0, 0.5, gi()).unwrap();
    let rep = verify_rate_theorem(&fam, &s, &(gaussian(&mut rng(6), 6) * 3.0), 300, &mut FixedPointCache::new()).unwrap();
    assert!(rep.pass);
    let beta = fam.contraction_factor().unwrap();
    assert!(rep.iterate_rate.r <= beta.max(0.5) + 0.05);
    assert!((&rep.limit - dr_fixed_point(&a1, &a2, 1.0)).norm() < 1e-10);
}

#[test]
fn one_step_worst_ratio_below_one() {
    let (_, _, fam) = pair(7, 6);
    let s = StepsizeSchedule::geometric(1.0, 1.0, 0.5, gi()).unwrap();
    let mut trace = relocated_iterate(&fam, &s, &(gaussian(&mut rng(8), 6) * 3.0), 200).unwrap();
    annotate_distances(&fam, &mut trace, &mut FixedPointCache::new()).unwrap();
    let kappa = fam.uniform_regularity_constant().unwrap();
    let rep = verify_one_step_contraction(&fam, &trace, kappa).unwrap();
    assert!(rep.pass(), "{rep:?}");
    assert!(rep.worst_ratio < 1.0);
}

#[test]
fn exact_jacobian_norm_within_contraction_factor() {
    let mut r = rng(9);
    for _ in 0..10 {
        let dim = 4;
        let l = uniform(&mut r, 0.2, 3.0);
        let mu = uniform(&mut r, 0.2, 3.0);
        let a1 = Affine::random_skew(&mut r, dim, l);
        let a2 = Affine::random_spd(&mut r, dim, mu, mu + 2.0);
        for g in [0.5, 1.0, 2.0] {
            let norm = jacobian_norm(dim, |x| dr_apply(&a1, &a2, g, x));
            assert!(norm <= beta_formula(g, mu, l) + 1e-9, "norm {norm} > beta at g={g}, mu={mu}, L={l}");
        }
    }
}

#[test]
fn primal_dual_limits_and_dual_residual() {
    let (a1, a2, fam) = pair(10, 4);
    let s = StepsizeSchedule::geometric(1.0, 0.5, 0.5, gi()).unwrap();
    let trace = algorithm1_run(&fam, &s, &V::from_element(4, 2.0), 300).unwrap();
    let pd = primal_dual_extract(&trace).unwrap();
    let z_star = zero_of_sum(&[&a1, &a2]);
    let (z_lib, g_lib) = affine_primal_dual(&fam).unwrap();
    assert!((&z_lib - &z_star).norm() < 1e-12);
    assert!((pd.z.last().unwrap() - &z_star).norm() < 1e-10);
    let g = pd.g.last().unwrap();
    assert!((g - &g_lib).norm() < 1e-10);
    let u = a1.m.clone().lu().solve(&(g - &a1.b)).unwrap();
    let v = a2.m.clone().lu().solve(&(-g - &a2.b)).unwrap();
    assert!((u - v).norm() <= 1e-6);
}

#[test]
fn oracle_fixed_point_decomposes() {
    let (a1, a2, fam) = pair(11, 5);
    for g in [0.5, 1.25, 2.0] {
        let x = fixed_point_oracle(&fam, g, &V::zeros(5), None, None).unwrap();
        let d = fix_decomposition_check(&fam, g, &x).unwrap();
        assert!(d.primal_residual <= 1e-8 && d.dual_residual <= 1e-8);
        assert!(d.reconstruction_error <= 1e-14);
        let z = zero_of_sum(&[&a1, &a2]);
        assert!((&d.z - &z).norm() <= 1e-8);
    }
}

#[test]
fn box_problem_fixed_points_relocate() {
    let mut r = rng(12);
    let a1 = Affine::random_spd(&mut r, 3, 1.0, 2.0);
    let cone = Operator::normal_cone(V::from_element(3, -0.1), V::from_element(3, 0.1)).unwrap();
    let fam = DrFamily::new(a1.op(), cone, gi()).unwrap();
    let x = fixed_point_oracle(&fam, 1.0, &V::zeros(3), None, None).unwrap();
    let y = fam.relocate(1.8, 1.0, &x).unwrap();
    assert!(fam.fixed_point_residual(1.8, &y).unwrap() <= 1e-8);
    let d = fix_decomposition_check(&fam, 1.0, &x).unwrap();
    assert!(d.primal_residual <= 1e-8);
}

#[test]
fn relocator_only_distance_tracks_stepsize() {
    let (a1, a2, fam) = pair(13, 4);
    let s = StepsizeSchedule::geometric(1.0, 0.9, 0.7, gi()).unwrap();
    let trace = relocator_only_sequence(&fam, &s, &dr_fixed_point(&a1, &a2, s.gamma(0)), 80).unwrap();
    let limit = dr_fixed_point(&a1, &a2, 1.0);
    let z = zero_of_sum(&[&a1, &a2]);
    let lip = a1.eval(&z).norm();
    for row in &trace.rows {
        assert!((&row.x - &limit).norm() <= lip * (row.gamma - 1.0).abs() + 1e-12);
    }
}
