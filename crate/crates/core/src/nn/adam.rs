use super::params::ParamSet;

/// Bias-corrected Adam over one [`ParamSet`].
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        Self::with_hyper(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || params.iter().map(|p| vec![0.0; p.value.numel()]).collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            m: zeros(),
            v: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) {
        self.steps += 1;
        let t = self.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for (((x, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_set(v: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("p", Tensor::scalar(v));
        ps
    }

    fn value(ps: &ParamSet) -> f64 {
        ps.iter().next().unwrap().value.item()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut ps = scalar_set(0.0);
        let mut opt = Adam::new(&ps, 1e-3);
        ps.iter_mut().next().unwrap().grad[0] = 1.0;
        opt.step(&mut ps);
        assert!((value(&ps) + 1e-3).abs() < 1e-9);
        assert_eq!(opt.steps(), 1);
        assert_eq!(ps.iter().next().unwrap().grad, vec![0.0]);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = scalar_set(0.7);
        let mut opt = Adam::new(&ps, 1e-3);
        for _ in 0..5 {
            opt.step(&mut ps);
        }
        assert_eq!(value(&ps), 0.7);
    }

    #[test]
    fn quadratic_trajectory_matches_hand_rolled_adam() {
        // f(p) = (p - 3)^2, grad = 2(p - 3)
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut ps = scalar_set(1.0);
        let mut opt = Adam::new(&ps, lr);
        let (mut p, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * (p - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p -= lr * mh / (vh.sqrt() + eps);

            let cur = value(&ps);
            ps.iter_mut().next().unwrap().grad[0] = 2.0 * (cur - 3.0);
            opt.step(&mut ps);
            assert!((value(&ps) - p).abs() < 1e-12, "step {t}");
        }
    }

    #[test]
    fn identical_state_is_bitwise_reproducible() {
        let run = || {
            let mut ps = scalar_set(0.3);
            let mut opt = Adam::new(&ps, 1e-2);
            for i in 0..10 {
                ps.iter_mut().next().unwrap().grad[0] = (i as f64).sin();
                opt.step(&mut ps);
            }
            value(&ps).to_bits()
        };
        assert_eq!(run(), run());
    }
}
