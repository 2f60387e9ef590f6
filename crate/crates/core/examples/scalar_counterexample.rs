//! A contraction family whose relocated iterates copy the stepsizes, so a
//! slowly converging schedule gives a slowly converging iteration.
use relocsplit::diagnostics::fit_linear_rate;
use relocsplit::family::{relocated_iterate, GammaInterval, ScalarShiftFamily};
use relocsplit::{StepsizeSchedule, Vector};

fn main() -> relocsplit::Result<()> {
    let interval = GammaInterval::new(1.0, 2.0)?;
    let fam = ScalarShiftFamily::new(0.5, interval)?;
    let schedules = [
        ("geometric r=0.5", StepsizeSchedule::geometric(1.0, 1.0, 0.5, interval)?),
        ("polynomial p=2", StepsizeSchedule::polynomial(1.0, 1.0, 2.0, interval)?),
    ];
    for (name, s) in schedules {
        let trace = relocated_iterate(&fam, &s, &Vector::from_element(1, s.gamma(0)), 200)?;
        let errs: Vec<f64> = trace.xs().map(|x| (x[0] - 1.0).abs()).collect();
        let fit = fit_linear_rate(&errs, None)?;
        println!("{name}: x_200 - 1 = {:.3e}, r = {:.4}, R^2 = {:.4} [{}]", errs[200], fit.r, fit.fit_quality, fit.label());
    }
    Ok(())
}
