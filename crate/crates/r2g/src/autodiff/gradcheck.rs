use super::{AutodiffError, Tape, Tensor};

/// One gradient-check instance: the parameters under test plus a loss
/// constructor that can be re-evaluated after parameter perturbations.
/// The constructor must be deterministic given the current parameter values
/// (any randomness fixed at build time).
pub struct GradCheckCase {
    pub params: Vec<Tensor>,
    #[allow(clippy::type_complexity)]
    pub loss: Box<dyn Fn(&mut Tape, &[Tensor]) -> Result<Tensor, AutodiffError>>,
}

/// Compares reverse-mode gradients against central finite differences,
/// coordinate by coordinate, over `trials` independently built cases.
/// Returns the worst relative error seen.
///
/// Relative error uses a denominator floor of 1e-3 so that near-zero true
/// gradients are judged on an absolute scale where finite differences are
/// dominated by cancellation noise.
pub fn grad_check(
    build: impl Fn(u64) -> GradCheckCase,
    trials: usize,
    h: f64,
) -> Result<f64, AutodiffError> {
    assert!(trials >= 1, "grad_check requires at least one trial");
    let mut worst = 0.0f64;

    for trial in 0..trials {
        let case = build(trial as u64);

        let mut tape = Tape::new();
        let loss = (case.loss)(&mut tape, &case.params)?;
        for p in &case.params {
            p.zero_grad();
        }
        tape.backward(&loss)?;
        let analytic: Vec<Vec<f64>> = case.params.iter().map(|p| p.grad()).collect();

        for (pi, p) in case.params.iter().enumerate() {
            for j in 0..p.numel() {
                p.nudge_value(j, h);
                let up = eval_loss(&case, &case.params)?;
                p.nudge_value(j, -2.0 * h);
                let down = eval_loss(&case, &case.params)?;
                p.nudge_value(j, h);

                let fd = (up - down) / (2.0 * h);
                let ad = analytic[pi][j];
                let denom = ad.abs().max(fd.abs()).max(1e-3);
                worst = worst.max((ad - fd).abs() / denom);
            }
        }
    }
    Ok(worst)
}

fn eval_loss(case: &GradCheckCase, params: &[Tensor]) -> Result<f64, AutodiffError> {
    let mut tape = Tape::new();
    let loss = (case.loss)(&mut tape, params)?;
    Ok(loss.scalar_value())
}
