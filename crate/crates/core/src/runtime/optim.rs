use crate::error::{KgeError, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Optimizer {
    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Adam { .. } => "adam",
            Optimizer::Sgd => "sgd",
        }
    }

    /// Applies one update to `param`. `t` is the 1-based global step used
    /// for Adam bias correction; `m` and `v` are ignored by SGD.
    pub fn update<T: Real>(&self, param: &mut [T], grad: &[T], m: &mut [T], v: &mut [T], lr: T, t: u64) {
        match *self {
            Optimizer::Sgd => {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p = *p - lr * *g;
                }
            }
            Optimizer::Adam { beta1, beta2, epsilon } => {
                let b1 = T::lit(beta1);
                let b2 = T::lit(beta2);
                let one = T::one();
                let bc1 = T::lit(1.0 - beta1.powf(t as f64));
                let bc2 = T::lit(1.0 - beta2.powf(t as f64));
                let eps = T::lit(epsilon);
                for i in 0..param.len() {
                    let g = grad[i];
                    m[i] = b1 * m[i] + (one - b1) * g;
                    v[i] = b2 * v[i] + (one - b2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrDecay {
    /// `initial · (1 − step / total_steps)`
    Linear,
    Constant,
}

impl LrDecay {
    pub fn name(self) -> &'static str {
        match self {
            LrDecay::Linear => "linear",
            LrDecay::Constant => "constant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    pub total_steps: u64,
    pub initial_lr: f64,
    pub decay: LrDecay,
    pub optimizer: Optimizer,
    /// Steps between evaluations; 0 evaluates only at the end.
    pub eval_interval: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            total_steps: 1000,
            initial_lr: 1e-3,
            decay: LrDecay::Linear,
            optimizer: Optimizer::default(),
            eval_interval: 100,
        }
    }
}

impl TrainSchedule {
    pub fn lr_at(&self, step: u64) -> Result<f64> {
        if step > self.total_steps {
            return Err(KgeError::Schedule(format!(
                "step {step} is past the last step {}",
                self.total_steps
            )));
        }
        Ok(match self.decay {
            LrDecay::Constant => self.initial_lr,
            LrDecay::Linear => {
                if self.total_steps == 0 {
                    0.0
                } else {
                    self.initial_lr * (1.0 - step as f64 / self.total_steps as f64)
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_schedule_points() {
        let s = TrainSchedule {
            total_steps: 100,
            initial_lr: 3e-3,
            ..Default::default()
        };
        assert_eq!(s.lr_at(0).unwrap(), 3e-3);
        assert_eq!(s.lr_at(100).unwrap(), 0.0);
        assert!((s.lr_at(50).unwrap() - 1.5e-3).abs() < 1e-18);
        assert!(s.lr_at(101).is_err());
    }

    #[test]
    fn constant_schedule() {
        let s = TrainSchedule {
            decay: LrDecay::Constant,
            ..Default::default()
        };
        assert_eq!(s.lr_at(s.total_steps).unwrap(), s.initial_lr);
    }
}
