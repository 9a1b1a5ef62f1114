use super::module::Module;
use super::Tensor;

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step<M: Module>(&mut self, params: &mut M, grads: &M) {
        let grads = grads.params();
        if self.m.is_empty() {
            self.m = grads.iter().map(|(_, g)| Tensor::zeros(&g.shape)).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (k, ((_, p), (_, g))) in params.params_mut().into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k].data, &mut self.v[k].data);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                p.data[i] -= self.learning_rate * update;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::Linear;
    use crate::seed;

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut rng = seed::rng(5);
        let mut lin = Linear::new(3, 2, &mut rng);
        let before = lin.clone();
        let mut g = lin.clone();
        g.w.data.iter_mut().for_each(|v| *v = 0.37);
        let mut adam = Adam::new(0.0);
        adam.step(&mut lin, &g);
        for ((_, a), (_, b)) in lin.params().into_iter().zip(before.params()) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut lin = Linear {
            w: Tensor::zeros(&[1, 1]),
            b: Tensor::zeros(&[1]),
        };
        let mut g = lin.clone();
        g.w.data[0] = 4.0;
        g.b.data[0] = -0.5;
        let mut adam = Adam::new(0.1);
        adam.step(&mut lin, &g);
        assert!((lin.w.data[0] + 0.1).abs() < 1e-6);
        assert!((lin.b.data[0] - 0.1).abs() < 1e-6);
    }
}
