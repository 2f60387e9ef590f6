//! Resolvents of an affine operator and a box normal cone.
use relocsplit::diagnostics::fixed_point_oracle;
use relocsplit::dr::DrFamily;
use relocsplit::family::GammaInterval;
use relocsplit::operators::{inclusion_residual, Operator};
use relocsplit::{Matrix, Vector};

fn main() -> relocsplit::Result<()> {
    let a = Operator::affine(
        Matrix::from_row_slice(2, 2, &[2.0, 1.0, -1.0, 1.0]),
        Vector::from_vec(vec![-1.0, 0.5]),
    )?;
    let cone = Operator::normal_cone(Vector::from_element(2, -0.5), Vector::from_element(2, 0.5))?;
    let x = Vector::from_vec(vec![3.0, -2.0]);

    for gamma in [0.5, 1.0, 2.0] {
        let ja = a.resolvent(gamma, &x)?;
        let jc = cone.resolvent(gamma, &x)?;
        let ra = a.reflected_resolvent(gamma, &x)?;
        println!("gamma={gamma}: J_A x = {:?}, R_A x = {:?}, P_box x = {:?}", ja.as_slice(), ra.as_slice(), jc.as_slice());
    }
    println!("mu(A) = {:.4}, L(A) = {:.4}", a.mu(), a.lipschitz().unwrap_or(f64::NAN));

    let fam = DrFamily::new(a.clone(), cone.clone(), GammaInterval::new(0.5, 2.0)?)?;
    let fix = fixed_point_oracle(&fam, 1.0, &x, None, None)?;
    let z = cone.resolvent(1.0, &(2.0 * a.resolvent(1.0, &fix)? - &fix))?;
    println!("zero of A + N_box: {:.6?}, inclusion residual {:.1e}", z.as_slice(), inclusion_residual(&[&a, &cone], &z, 1e-9)?);
    Ok(())
}
