use super::tape::Mat;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Mat>,
    v: Vec<Mat>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Mat>, grads: &[Mat]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Mat::zeros(g.dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = array![[1.0, -2.0]];
        let mut opt = Adam::new(1e-3);
        opt.step(vec![&mut p], &[array![[0.0, 0.0]]]);
        assert_eq!(p, array![[1.0, -2.0]]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = array![[0.0]];
        let mut opt = Adam::new(1e-3);
        opt.step(vec![&mut p], &[array![[2.0]]]);
        let expected = -1e-3 * 2.0 / (2.0 + 1e-8);
        assert!((p[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn opposite_gradients_stay_within_two_steps() {
        let mut p = array![[0.0]];
        let mut opt = Adam::new(1e-3);
        opt.step(vec![&mut p], &[array![[3.0]]]);
        opt.step(vec![&mut p], &[array![[-3.0]]]);
        assert!(p[[0, 0]].abs() < 2e-3);
    }
}
