//! Relocated Malitsky-Tam splitting for three operators.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relocsplit::cli::{skew_with_norm, symmetric_with_spectrum};
use relocsplit::family::GammaInterval;
use relocsplit::mt::{algorithm2_run, consensus_gaps, mt_fixed_point_to_zero, mt_relocator_lipschitz, BlockVector, MtFamily, DEFAULT_THETA};
use relocsplit::operators::Operator;
use relocsplit::{StepsizeSchedule, Vector};

fn main() -> relocsplit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 4;
    let ops = vec![
        Operator::affine(symmetric_with_spectrum(&mut rng, d, 1.0, 2.0), Vector::from_element(d, 1.0))?,
        Operator::affine(skew_with_norm(&mut rng, d, 1.0), Vector::zeros(d))?,
        Operator::normal_cone(Vector::from_element(d, -0.4), Vector::from_element(d, 0.4))?,
    ];
    let interval = GammaInterval::new(0.5, 2.0)?;
    let fam = MtFamily::new(ops, DEFAULT_THETA, interval)?;
    let schedule = StepsizeSchedule::geometric(1.0, -0.5, 0.6, interval)?;

    let x0 = BlockVector::zeros(fam.n_ops() - 1, d);
    let trace = algorithm2_run(&fam, &schedule, &x0, 300)?;
    let gaps = consensus_gaps(&trace, fam.n_ops())?;
    for n in (0..=300).step_by(50) {
        println!("n={n:>3} gamma={:.6} residual={:.3e} consensus={:.3e}", trace.rows[n].gamma, trace.rows[n].residual, gaps[n]);
    }

    let zero = mt_fixed_point_to_zero(&fam, 1.0, &trace.last().unwrap().x)?;
    println!("zero = {:.6?} (inclusion residual {:.2e})", zero.z.as_slice(), zero.inclusion_residual);

    let l = mt_relocator_lipschitz(1.5, 1.0, fam.n_ops())?;
    println!("relocator constants 1.0 -> 1.5: check {:.4}, hat {:.4}", l.l_check, l.l_hat);
    Ok(())
}
