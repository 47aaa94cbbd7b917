use crate::tensor::Real;

/// Heavy-ball SGD: `v <- mu * v - lr * g; theta <- theta + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentumSgd<T> {
    pub learning_rate: T,
    pub momentum: T,
    pub velocities: Vec<Vec<T>>,
}

impl<T: Real> MomentumSgd<T> {
    pub fn new(learning_rate: T, momentum: T, shapes: &[usize]) -> Self {
        Self {
            learning_rate,
            momentum,
            velocities: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [T]>, grads: &[Vec<T>]) {
        assert_eq!(params.len(), self.velocities.len(), "parameter list changed");
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocities) {
            for ((theta, &grad), vel) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vel = self.momentum * *vel - self.learning_rate * grad;
                *theta += *vel;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_steps_match_closed_form() {
        let (lr, mu) = (0.1, 0.9);
        let mut opt = MomentumSgd::new(lr, mu, &[2]);
        let mut theta = vec![1.0f64, -2.0];
        let g1 = vec![0.5, -1.0];
        opt.step(vec![&mut theta], &[g1.clone()]);
        let v1: Vec<f64> = g1.iter().map(|g| -lr * g).collect();
        assert_eq!(theta, vec![1.0 + v1[0], -2.0 + v1[1]]);
        let g2 = vec![0.2, 0.4];
        opt.step(vec![&mut theta], &[g2.clone()]);
        let v2: Vec<f64> = (0..2).map(|i| mu * v1[i] - lr * g2[i]).collect();
        assert!((theta[0] - (1.0 + v1[0] + v2[0])).abs() < 1e-15);
        assert!((theta[1] - (-2.0 + v1[1] + v2[1])).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut opt = MomentumSgd::new(0.0f32, 0.9, &[3]);
        let mut theta = vec![1.0f32, 2.0, 3.0];
        opt.step(vec![&mut theta], &[vec![5.0, 5.0, 5.0]]);
        assert_eq!(theta, vec![1.0, 2.0, 3.0]);
    }
}
