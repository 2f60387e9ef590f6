mod common;

use common::*;
use relocsplit::diagnostics::fixed_point_oracle;
use relocsplit::family::{gamma_lipschitz_probe, relocated_iterate, GammaInterval};
use relocsplit::mt::{
    algorithm2_run, mt_contraction_certificate, mt_fixed_point_to_zero, BlockVector, ContractionCase, MtFamily,
};
use relocsplit::operators::Operator;
use relocsplit::{OperatorFamily, StepsizeSchedule};

fn gi() -> GammaInterval {
    GammaInterval::new(0.5, 2.0).unwrap()
}

fn family(ops: &[Affine], theta: f64) -> MtFamily {
    MtFamily::new(ops.iter().map(Affine::op).collect(), theta, gi()).unwrap()
}

#[test]
fn two_operators_reduce_to_relaxed_dr() {
    let mut r = rng(1);
    let ops = vec![Affine::random_spd(&mut r, 3, 0.0, 2.0), Affine::random_skew(&mut r, 3, 1.0)];
    for theta in [0.3, 0.5, 0.9] {
        let fam = family(&ops, theta);
        for _ in 0..10 {
            let x = gaussian(&mut r, 3);
            let g = uniform(&mut r, 0.5, 2.0);
            let z = ops[0].resolvent(g, &x);
            let expected = &x + (ops[1].resolvent(g, &(&z * 2.0 - &x)) - &z) * theta;
            assert!((fam.apply(g, &x).unwrap() - expected).norm() < 1e-12);
        }
    }
}

#[test]
fn two_operator_run_matches_relaxed_dr_driver() {
    let mut r = rng(2);
    let ops = vec![Affine::random_spd(&mut r, 3, 0.5, 2.0), Affine::random_spd(&mut r, 3, 0.5, 1.0)];
    let theta = 0.7;
    let fam = family(&ops, theta);
    let s = StepsizeSchedule::geometric(1.0, 0.5, 0.5, gi()).unwrap();
    let x0 = gaussian(&mut r, 3);
    let trace = algorithm2_run(&fam, &s, &BlockVector::new(1, 3, x0.clone()).unwrap(), 60).unwrap();
    let mut x = x0;
    for (n, row) in trace.rows.iter().enumerate() {
        assert!((&row.x - &x).norm() < 1e-12, "step {n}");
        let g = s.gamma(n);
        let z = ops[0].resolvent(g, &x);
        let w = &x + (ops[1].resolvent(g, &(&z * 2.0 - &x)) - &z) * theta;
        let t = s.gamma(n + 1) / g;
        x = &w * t + ops[0].resolvent(g, &w) * (1.0 - t);
    }
}

#[test]
fn triple_chain_matches_straight_line() {
    let mut r = rng(3);
    let ops = vec![
        Affine::random_spd(&mut r, 4, 0.5, 2.0),
        Affine::random_skew(&mut r, 4, 1.0),
        Affine::random_spd(&mut r, 4, 0.0, 1.0),
    ];
    let fam = family(&ops, 0.5);
    for _ in 0..10 {
        let x = gaussian(&mut r, 8);
        let (t, z) = mt_apply(&ops, 0.5, 1.0, &x);
        let (tl, zl) = fam.apply_with_chain(1.0, &x).unwrap();
        assert!((t - tl).norm() < 1e-12);
        for (a, b) in z.iter().zip(&zl) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn fixed_points_and_recovered_zero() {
    let mut r = rng(4);
    let ops = vec![
        Affine::random_spd(&mut r, 3, 1.0, 2.0),
        Affine::random_spd(&mut r, 3, 0.5, 1.5),
        Affine::random_skew(&mut r, 3, 1.0),
    ];
    let fam = family(&ops, 0.5);
    for g in [0.5, 1.1, 2.0] {
        let x = fixed_point_oracle(&fam, g, &V::zeros(6), None, None).unwrap();
        assert!((&x - mt_fixed_point(&ops, g)).norm() < 1e-9);
        let zero = mt_fixed_point_to_zero(&fam, g, &x).unwrap();
        assert!((&zero.z - zero_of_sum(&[&ops[0], &ops[1], &ops[2]])).norm() <= 1e-7);
        let y = fam.relocate(2.5 - g, g, &x).unwrap();
        assert!(fam.fixed_point_residual(2.5 - g, &y).unwrap() <= 1e-8);
    }
}

#[test]
fn box_constrained_zero_satisfies_kkt() {
    let mut r = rng(5);
    let a1 = Affine::random_spd(&mut r, 4, 1.0, 3.0);
    let (lo, hi) = (-0.3, 0.3);
    let cone = Operator::normal_cone(V::from_element(4, lo), V::from_element(4, hi)).unwrap();
    let fam = MtFamily::new(vec![a1.op(), cone], 0.5, gi()).unwrap();
    let x = fixed_point_oracle(&fam, 1.0, &V::zeros(4), None, None).unwrap();
    let zero = mt_fixed_point_to_zero(&fam, 1.0, &x).unwrap();
    let v = -a1.eval(&zero.z);
    for i in 0..4 {
        let zi = zero.z[i];
        assert!((lo - 1e-9..=hi + 1e-9).contains(&zi));
        if zi > lo + 1e-9 && zi < hi - 1e-9 {
            assert!(v[i].abs() <= 1e-7);
        } else if (zi - hi).abs() <= 1e-9 {
            assert!(v[i] >= -1e-7);
        } else {
            assert!(v[i] <= 1e-7);
        }
    }
    assert!(zero.inclusion_residual <= 1e-7);
}

#[test]
fn sampled_relocator_ratio_within_l_hat() {
    let mut r = rng(6);
    let ops = vec![
        Affine::random_spd(&mut r, 3, 0.0, 4.0),
        Affine::random_skew(&mut r, 3, 2.0),
        Affine::random_spd(&mut r, 3, 0.0, 1.0),
    ];
    let fam = family(&ops, 0.5);
    for _ in 0..1000 {
        let (d, g) = (uniform(&mut r, 0.5, 2.0), uniform(&mut r, 0.5, 2.0));
        let x = gaussian(&mut r, 6) * 4.0;
        let y = &x + gaussian(&mut r, 6) * 1e-2;
        let ratio = (fam.relocate(d, g, &x).unwrap() - fam.relocate(d, g, &y).unwrap()).norm() / (&x - &y).norm();
        assert!(ratio <= mt_l_hat(d, g, 3) + 1e-9);
    }
}

#[test]
fn gamma_probe_is_finite() {
    let mut r = rng(7);
    let ops = vec![Affine::random_spd(&mut r, 2, 1.0, 2.0), Affine::random_skew(&mut r, 2, 1.0), Affine::random_spd(&mut r, 2, 1.0, 2.0)];
    let fam = family(&ops, 0.5);
    let grid = gi().grid(10);
    let points: Vec<(V, f64)> = grid.iter().map(|&g| (mt_fixed_point(&ops, g), g)).collect();
    let probe = gamma_lipschitz_probe(&fam, &points, &grid).unwrap();
    assert!(probe.l_estimate.is_finite() && probe.l_estimate > 0.0);
}

#[test]
fn certificates_for_structural_cases() {
    let mut r = rng(8);
    let skew2 = Affine::new(M::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), V::zeros(2));
    let two_i = Affine::new(M::identity(2, 2) * 2.0, V::zeros(2));
    let fam = family(&[skew2, two_i], 0.5);
    let cert = mt_contraction_certificate(&fam, ContractionCase::LastStrong).unwrap();
    assert!(cert.valid && cert.beta.unwrap() < 1.0);

    let cone = Operator::normal_cone(V::from_element(3, -1.0), V::from_element(3, 1.0)).unwrap();
    let fam = MtFamily::new(
        vec![Affine::random_spd(&mut r, 3, 1.0, 2.0).op(), Affine::random_spd(&mut r, 3, 0.5, 1.0).op(), cone],
        0.5,
        gi(),
    )
    .unwrap();
    let cert = mt_contraction_certificate(&fam, ContractionCase::FirstStrong).unwrap();
    assert!(cert.valid && cert.beta.unwrap() < 1.0);
    assert!(!mt_contraction_certificate(&fam, ContractionCase::LastStrong).unwrap().valid);
}

#[test]
fn generic_driver_agrees_with_algorithm2() {
    let mut r = rng(9);
    let ops = vec![
        Affine::random_spd(&mut r, 2, 0.5, 2.0),
        Affine::random_spd(&mut r, 2, 0.5, 2.0),
        Affine::random_skew(&mut r, 2, 1.0),
        Affine::random_spd(&mut r, 2, 0.5, 1.0),
    ];
    let fam = family(&ops, 0.4);
    let s = StepsizeSchedule::polynomial(1.0, -0.4, 1.5, gi()).unwrap();
    let x0 = gaussian(&mut r, 6);
    let a = algorithm2_run(&fam, &s, &BlockVector::new(3, 2, x0.clone()).unwrap(), 100).unwrap();
    let b = relocated_iterate(&fam, &s, &x0, 100).unwrap();
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert!((&ra.x - &rb.x).norm() <= 1e-10 * (1.0 + rb.x.norm()));
    }
}
