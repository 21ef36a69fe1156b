use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sgd,
    Adam,
    AdamW,
}

/// One entry of a piecewise-constant learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrStep {
    pub from_epoch: usize,
    pub lr: f64,
}

/// `lr` until the first step's `from_epoch`, then each step's rate in turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr: f64,
    #[serde(default)]
    pub steps: Vec<LrStep>,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        LrSchedule { lr, steps: vec![] }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.from_epoch <= epoch)
            .max_by_key(|s| s.from_epoch)
            .map_or(self.lr, |s| s.lr)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        LrSchedule {
            lr: self.lr * factor,
            steps: self
                .steps
                .iter()
                .map(|s| LrStep {
                    from_epoch: s.from_epoch,
                    lr: s.lr * factor,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub schedule: LrSchedule,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn adam(lr: f64, weight_decay: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Adam,
            schedule: LrSchedule::constant(lr),
            weight_decay,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        OptimizerConfig {
            algorithm: Algorithm::Sgd,
            ..Self::adam(lr, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let lrs = std::iter::once(self.schedule.lr).chain(self.schedule.steps.iter().map(|s| s.lr));
        for lr in lrs {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::structural(format!(
                    "learning rate {lr} must be positive"
                )));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::structural("weight decay must be nonnegative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::structural(format!("{name} = {b} outside (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::structural("eps must be positive"));
        }
        Ok(())
    }
}

/// Optimizer moments and step counter for one flat parameter buffer.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    config: OptimizerConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, num_params: usize) -> Result<Self> {
        config.validate()?;
        let moments = if config.algorithm == Algorithm::Sgd {
            0
        } else {
            num_params
        };
        Ok(OptimizerState {
            lr: config.schedule.lr,
            config,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies the schedule's rate for `epoch`.
    pub fn set_epoch(&mut self, epoch: usize) {
        self.lr = self.config.schedule.lr_at(epoch);
    }

    /// One update of `params` along `-grads`. Non-finite gradients leave both
    /// parameters and state untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::structural(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.config.algorithm != Algorithm::Sgd && self.m.len() != params.len() {
            return Err(Error::structural(format!(
                "optimizer holds {} moments for {} parameters",
                self.m.len(),
                params.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric(format!("non-finite gradient at index {i}")));
        }
        self.step += 1;
        let lr = self.lr;
        let wd = self.config.weight_decay;
        match self.config.algorithm {
            Algorithm::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * (g + wd * *p);
                }
            }
            Algorithm::Adam | Algorithm::AdamW => {
                let decoupled = self.config.algorithm == Algorithm::AdamW;
                let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
                let t = self.step as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    let g = if decoupled {
                        *p -= lr * wd * *p;
                        *g
                    } else {
                        g + wd * *p
                    };
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_zero_gradient_is_a_no_op() {
        let mut s = OptimizerState::new(OptimizerConfig::sgd(0.1), 3).unwrap();
        let mut p = vec![1.0, -2.0, 3.0];
        s.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.steps_taken(), 1);
    }

    #[test]
    fn sgd_rule() {
        let mut s = OptimizerState::new(OptimizerConfig::sgd(0.1), 1).unwrap();
        let mut p = vec![1.0];
        s.step(&mut p, &[0.5]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_sign_scaled() {
        let lr = 1e-3;
        let grads = [0.5, -3.0, 1e-3];
        let mut s = OptimizerState::new(OptimizerConfig::adam(lr, 0.0), 3).unwrap();
        let mut p = vec![0.0; 3];
        s.step(&mut p, &grads).unwrap();
        for (pi, g) in p.iter().zip(grads) {
            let expect = -lr * g / (g.abs() + 1e-8);
            assert!((pi - expect).abs() < 1e-15, "{pi} vs {expect}");
        }
    }

    #[test]
    fn adamw_decays_decoupled_from_gradient() {
        let mut cfg = OptimizerConfig::adam(0.1, 0.5);
        cfg.algorithm = Algorithm::AdamW;
        let mut s = OptimizerState::new(cfg, 1).unwrap();
        let mut p = vec![2.0];
        s.step(&mut p, &[0.0]).unwrap();
        // zero gradient: only the decay term acts
        assert!((p[0] - 2.0 * (1.0 - 0.05)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut s = OptimizerState::new(OptimizerConfig::adam(0.1, 0.0), 2).unwrap();
        let mut p = vec![1.0, 1.0];
        assert!(matches!(
            s.step(&mut p, &[f64::NAN, 0.0]),
            Err(Error::Numeric(_))
        ));
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(s.steps_taken(), 0);
    }

    #[test]
    fn schedule_is_piecewise_constant() {
        let s = LrSchedule {
            lr: 1e-3,
            steps: vec![LrStep {
                from_epoch: 40,
                lr: 1e-4,
            }],
        };
        assert_eq!(s.lr_at(0), 1e-3);
        assert_eq!(s.lr_at(39), 1e-3);
        assert_eq!(s.lr_at(40), 1e-4);
        assert!(OptimizerConfig::adam(0.0, 0.0).validate().is_err());
    }
}
