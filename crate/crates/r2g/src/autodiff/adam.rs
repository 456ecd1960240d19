use super::{AutodiffError, Tensor};

/// Adam state: one pair of moment accumulators per parameter tensor, plus the
/// shared step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Standard coefficients (beta1 = 0.9, beta2 = 0.999, eps = 1e-8);
    /// only the learning rate varies between network kinds.
    pub fn new(lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update over `params`, consuming their currently
/// accumulated gradients. Gradients are left untouched; the caller decides
/// when to zero them.
pub fn adam_step(params: &[Tensor], state: &mut AdamState) -> Result<(), AutodiffError> {
    if state.first_moment.is_empty() {
        state.first_moment = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        state.second_moment = params.iter().map(|p| vec![0.0; p.numel()]).collect();
    }
    if state.first_moment.len() != params.len() {
        return Err(AutodiffError::AdamArityMismatch {
            expected: state.first_moment.len(),
            actual: params.len(),
        });
    }

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.epsilon);

    for (i, p) in params.iter().enumerate() {
        if p.numel() != state.first_moment[i].len() {
            return Err(AutodiffError::AdamArityMismatch {
                expected: state.first_moment[i].len(),
                actual: p.numel(),
            });
        }
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        p.apply_update(|j, value, grad| {
            m[j] = b1 * m[j] + (1.0 - b1) * grad;
            v[j] = b2 * v[j] + (1.0 - b2) * grad * grad;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            value - lr * m_hat / (v_hat.sqrt() + eps)
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let p = Tensor::param(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut st = AdamState::new(0.1);
        adam_step(&[p.clone()], &mut st).unwrap();
        assert_eq!(p.values(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_about_lr() {
        // Hand-evaluated recurrence: m1 = 0.1, v1 = 1e-3, bias-corrected
        // m_hat = 1, v_hat = 1, so delta = lr / (1 + eps).
        let p = Tensor::param(vec![1], vec![0.0]).unwrap();
        p.grad_add(&[1.0]);
        let mut st = AdamState::new(0.1);
        adam_step(&[p.clone()], &mut st).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-15, "{}", p.values()[0]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn step_counter_increases_by_one_per_call() {
        let p = Tensor::param(vec![1], vec![0.0]).unwrap();
        let mut st = AdamState::new(0.01);
        for expect in 1..=5u64 {
            adam_step(&[p.clone()], &mut st).unwrap();
            assert_eq!(st.step, expect);
        }
    }

    #[test]
    fn matches_scalar_reference_over_many_steps() {
        // Reference recurrence evaluated independently on plain f64 state.
        let p = Tensor::param(vec![1], vec![0.3]).unwrap();
        let mut st = AdamState::new(0.05);
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 0.3f64);
        for t in 1..=40 {
            let g = (x * 2.0).sin() + 0.1; // arbitrary deterministic gradient
            p.zero_grad();
            p.grad_add(&[g]);
            adam_step(&[p.clone()], &mut st).unwrap();

            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((p.values()[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_count_change_is_rejected() {
        let p = Tensor::param(vec![1], vec![0.0]).unwrap();
        let q = Tensor::param(vec![1], vec![0.0]).unwrap();
        let mut st = AdamState::new(0.1);
        adam_step(&[p.clone()], &mut st).unwrap();
        assert!(adam_step(&[p, q], &mut st).is_err());
    }
}
