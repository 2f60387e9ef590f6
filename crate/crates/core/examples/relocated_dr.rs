//! Relocated Douglas-Rachford with a geometric stepsize schedule.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relocsplit::cli::symmetric_with_spectrum;
use relocsplit::dr::{algorithm1_run, primal_dual_extract, DrFamily};
use relocsplit::family::GammaInterval;
use relocsplit::operators::Operator;
use relocsplit::{StepsizeSchedule, Vector};

fn main() -> relocsplit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 6;
    let a1 = Operator::affine(symmetric_with_spectrum(&mut rng, dim, 1.0, 4.0), Vector::from_element(dim, 1.0))?;
    let a2 = Operator::affine(symmetric_with_spectrum(&mut rng, dim, 0.5, 2.0), Vector::from_element(dim, -2.0))?;
    let interval = GammaInterval::new(0.5, 2.0)?;
    let fam = DrFamily::new(a1, a2, interval)?;
    println!("contraction factor over [0.5, 2]: {:.4}", fam.contraction_factor().unwrap());
    println!("uniform kappa: {:.4}", fam.uniform_regularity_constant().unwrap());

    let schedule = StepsizeSchedule::geometric(1.0, 1.0, 0.5, interval)?;
    let trace = algorithm1_run(&fam, &schedule, &Vector::from_element(dim, 5.0), 60)?;
    for row in trace.rows.iter().step_by(10) {
        println!("n={:>3} gamma={:.6} residual={:.3e}", row.n, row.gamma, row.residual);
    }

    let pd = primal_dual_extract(&trace)?;
    println!("z_N = {:.6?}", pd.z.last().unwrap().as_slice());
    println!("g_N = {:.6?}", pd.g.last().unwrap().as_slice());
    Ok(())
}
