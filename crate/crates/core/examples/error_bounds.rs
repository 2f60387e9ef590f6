//! Sampled checks of the error bound and the one-step contraction.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relocsplit::cli::symmetric_with_spectrum;
use relocsplit::diagnostics::{annotate_distances, fixed_point_oracle, verify_error_bound, verify_one_step_contraction, FixedPointCache, SampleBox};
use relocsplit::dr::DrFamily;
use relocsplit::family::{relocated_iterate, GammaInterval};
use relocsplit::operators::Operator;
use relocsplit::{StepsizeSchedule, Vector};

fn main() -> relocsplit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dim = 5;
    let a1 = Operator::affine(symmetric_with_spectrum(&mut rng, dim, 1.0, 3.0), Vector::from_element(dim, 0.3))?;
    let a2 = Operator::affine(symmetric_with_spectrum(&mut rng, dim, 0.5, 1.0), Vector::zeros(dim))?;
    let interval = GammaInterval::new(0.5, 2.0)?;
    let fam = DrFamily::new(a1, a2, interval)?;
    let kappa = fam.uniform_regularity_constant().unwrap();

    let fix = fixed_point_oracle(&fam, 1.0, &Vector::zeros(dim), None, None)?;
    let bound = verify_error_bound(&fam, 1.0, kappa, &SampleBox::cube(&fix, 5.0), 2000, 0)?;
    println!("error bound: {} violations, worst ratio {:.4}, kappa {:.4}", bound.violations, bound.worst_ratio, bound.certified_constant);

    let schedule = StepsizeSchedule::geometric(1.0, 1.0, 0.5, interval)?;
    let mut trace = relocated_iterate(&fam, &schedule, &Vector::from_element(dim, 4.0), 100)?;
    annotate_distances(&fam, &mut trace, &mut FixedPointCache::new())?;
    let step = verify_one_step_contraction(&fam, &trace, kappa)?;
    println!("one-step: {} violations, worst ratio {:.4}", step.violations, step.worst_ratio);
    Ok(())
}
