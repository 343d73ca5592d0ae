use crate::error::{OdError, Result};

/// Adam with bias correction. Moment buffers are keyed by tensor position, so
/// callers must pass parameters and gradients in a stable order.
#[derive(Clone, Debug)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Standard coefficients: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
    pub fn new(lr: f64, tensor_lens: &[usize]) -> Result<Self> {
        if !(lr.is_finite() && lr > 0.0) {
            return Err(OdError::InvalidParam(format!(
                "learning rate must be finite and positive, got {lr}"
            )));
        }
        Ok(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over every tensor: `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(OdError::InvalidParam(format!(
                "optimizer holds {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for i in 0..params.len() {
            if params[i].len() != self.m[i].len() || grads[i].len() != self.m[i].len() {
                return Err(OdError::InvalidParam(format!(
                    "tensor {i} length mismatch: state {}, params {}, grads {}",
                    self.m[i].len(),
                    params[i].len(),
                    grads[i].len()
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, param) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, p) in param.iter_mut().enumerate() {
                let g = grads[i][j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_roughly_lr() {
        // With zero moments, m_hat/sqrt(v_hat) = g/|g|, so the first update is
        // lr * sign(g) up to eps.
        let mut adam = AdamState::new(0.01, &[1]).unwrap();
        let mut p = vec![1.0];
        adam.step(&mut [&mut p], &[vec![2.0]]).unwrap();
        assert!((p[0] - 0.99).abs() < 1e-8, "got {}", p[0]);

        let mut adam = AdamState::new(0.01, &[1]).unwrap();
        let mut p = vec![1.0];
        adam.step(&mut [&mut p], &[vec![-0.5]]).unwrap();
        assert!((p[0] - 1.01).abs() < 1e-8, "got {}", p[0]);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut adam = AdamState::new(0.1, &[3]).unwrap();
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step(&mut [&mut p], &[vec![0.0; 3]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn descends_a_quadratic() {
        // f(x) = (x - 3)^2 from x = 0 should approach 3.
        let mut adam = AdamState::new(0.05, &[1]).unwrap();
        let mut x = vec![0.0];
        for _ in 0..2000 {
            let g = 2.0 * (x[0] - 3.0);
            adam.step(&mut [&mut x], &[vec![g]]).unwrap();
        }
        assert!((x[0] - 3.0).abs() < 1e-3, "got {}", x[0]);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut adam = AdamState::new(0.01, &[2]).unwrap();
        let mut p = vec![0.0, 0.0];
        let r = adam.step(&mut [&mut p], &[vec![1.0]]);
        assert!(r.is_err());
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(AdamState::new(0.0, &[1]).is_err());
        assert!(AdamState::new(f64::NAN, &[1]).is_err());
    }
}
