use super::matrix::Matrix;
use super::NnError;

/// Adam with bias correction and per-epoch exponential learning-rate decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplies `lr` at every [`end_epoch`](Self::end_epoch).
    pub decay: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. Fails without touching any parameter if a gradient is not
    /// finite.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix]) -> Result<(), NnError> {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count");
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.data.len() != g.data.len() {
                return Err(NnError::Shape(format!(
                    "gradient block {i} has {} entries, parameter has {}",
                    g.data.len(),
                    p.data.len()
                )));
            }
            if g.data.iter().any(|x| !x.is_finite()) {
                return Err(NnError::NonFinite { block: i });
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.data.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p.data[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn end_epoch(&mut self) {
        self.lr *= self.decay;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut w = Matrix::scalar(0.0);
        let g = Matrix::scalar(1.0);
        let mut opt = Adam::new(0.1, 0.95);
        opt.step(&mut [&mut w], &[&g]).unwrap();
        assert!((w.data[0] + 0.1).abs() < 1e-9);
        opt.end_epoch();
        assert!((opt.lr - 0.095).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut a = Matrix::scalar(0.0);
        let mut b = Matrix::scalar(0.0);
        let mut opt = Adam::new(0.1, 1.0);
        let err = opt
            .step(&mut [&mut a, &mut b], &[&Matrix::scalar(1.0), &Matrix::scalar(f64::NAN)])
            .unwrap_err();
        assert!(matches!(err, NnError::NonFinite { block: 1 }));
        assert_eq!(a.data[0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut w = Matrix::from_vec(1, 2, vec![3.0, -2.0]);
        let mut opt = Adam::new(0.05, 1.0);
        for _ in 0..2000 {
            let g = w.map(|x| 2.0 * x);
            opt.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.data.iter().all(|x| x.abs() < 1e-3));
    }
}
