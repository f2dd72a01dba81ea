//! Per-epoch schedules for the smoothing weight and the learning rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing weight over training. `Linear` evaluates `alpha0 + alpha1·t/T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Constant { alpha0: f64 },
    Linear { alpha0: f64, alpha1: f64 },
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = match *self {
            AlphaSchedule::Constant { alpha0 } => (alpha0, 0.0),
            AlphaSchedule::Linear { alpha0, alpha1 } => (alpha0, alpha1),
        };
        if !a0.is_finite() || !a1.is_finite() {
            return Err(Error::Domain(
                "alpha schedule coefficients must be finite".into(),
            ));
        }
        // Linear in t, so checking both endpoints covers the whole range.
        for end in [a0, a0 + a1] {
            if !(0.0..=1.0).contains(&end) {
                return Err(Error::Domain(format!(
                    "alpha schedule leaves [0, 1] (reaches {end})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        base_lr: f64,
    },
    /// Cosine annealing, floored at `base_lr·1e-4`.
    Cosine {
        base_lr: f64,
    },
    /// Multiply by `gamma` every `step_size` epochs.
    Step {
        base_lr: f64,
        step_size: usize,
        gamma: f64,
    },
}

/// Fraction of `base_lr` below which cosine annealing never drops.
pub const COSINE_FLOOR: f64 = 1e-4;

impl LrSchedule {
    pub fn base_lr(&self) -> f64 {
        match *self {
            LrSchedule::Constant { base_lr }
            | LrSchedule::Cosine { base_lr }
            | LrSchedule::Step { base_lr, .. } => base_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let base = self.base_lr();
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::Domain(format!("base_lr must be > 0, got {base}")));
        }
        if let LrSchedule::Step {
            step_size, gamma, ..
        } = *self
        {
            if step_size == 0 {
                return Err(Error::Domain("step_size must be >= 1".into()));
            }
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(Error::Domain(format!(
                    "gamma must be in (0, 1], got {gamma}"
                )));
            }
        }
        Ok(())
    }
}

fn check_epoch(t: usize, total: usize) -> Result<()> {
    if total == 0 {
        return Err(Error::Domain("total epochs must be >= 1".into()));
    }
    if t > total {
        return Err(Error::Domain(format!("epoch {t} beyond total {total}")));
    }
    Ok(())
}

pub fn alpha_at(s: &AlphaSchedule, t: usize, total: usize) -> Result<f64> {
    check_epoch(t, total)?;
    let alpha = match *s {
        AlphaSchedule::Constant { alpha0 } => alpha0,
        AlphaSchedule::Linear { alpha0, alpha1 } => alpha0 + alpha1 * t as f64 / total as f64,
    };
    Ok(alpha.clamp(0.0, 1.0))
}

pub fn lr_at(s: &LrSchedule, t: usize, total: usize) -> Result<f64> {
    check_epoch(t, total)?;
    Ok(match *s {
        LrSchedule::Constant { base_lr } => base_lr,
        LrSchedule::Cosine { base_lr } => {
            let progress = t as f64 / total as f64;
            let lr = base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            lr.max(base_lr * COSINE_FLOOR)
        }
        LrSchedule::Step {
            base_lr,
            step_size,
            gamma,
        } => base_lr * gamma.powi((t / step_size) as i32),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn increasing_alpha_endpoints() {
        let s = AlphaSchedule::Linear {
            alpha0: 0.1,
            alpha1: 0.1,
        };
        assert_eq!(alpha_at(&s, 0, 90).unwrap(), 0.1);
        assert_abs_diff_eq!(alpha_at(&s, 90, 90).unwrap(), 0.2, epsilon = 1e-15);
        let c = AlphaSchedule::Constant { alpha0: 0.1 };
        for t in [0, 7, 90] {
            assert_eq!(alpha_at(&c, t, 90).unwrap(), 0.1);
        }
        assert!(alpha_at(&c, 0, 0).is_err());
    }

    #[test]
    fn alpha_schedule_validation() {
        assert!(AlphaSchedule::Linear {
            alpha0: 0.95,
            alpha1: 0.1
        }
        .validate()
        .is_err());
        assert!(AlphaSchedule::Linear {
            alpha0: 0.2,
            alpha1: -0.3
        }
        .validate()
        .is_err());
        assert!(AlphaSchedule::Linear {
            alpha0: 0.0,
            alpha1: 0.1
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn cosine_endpoints() {
        let s = LrSchedule::Cosine { base_lr: 0.1 };
        assert_eq!(lr_at(&s, 0, 60).unwrap(), 0.1);
        assert_eq!(lr_at(&s, 60, 60).unwrap(), 0.1 * COSINE_FLOOR);
        assert_abs_diff_eq!(lr_at(&s, 30, 60).unwrap(), 0.05, epsilon = 1e-15);
    }

    #[test]
    fn step_schedule() {
        let s = LrSchedule::Step {
            base_lr: 0.1,
            step_size: 30,
            gamma: 0.1,
        };
        assert_eq!(lr_at(&s, 29, 90).unwrap(), 0.1);
        assert_abs_diff_eq!(lr_at(&s, 30, 90).unwrap(), 0.01, epsilon = 1e-17);
        assert_abs_diff_eq!(lr_at(&s, 60, 90).unwrap(), 0.001, epsilon = 1e-17);
        assert!(LrSchedule::Step {
            base_lr: 0.1,
            step_size: 0,
            gamma: 0.1
        }
        .validate()
        .is_err());
        assert!(LrSchedule::Step {
            base_lr: 0.1,
            step_size: 3,
            gamma: 1.5
        }
        .validate()
        .is_err());
        assert!(LrSchedule::Cosine { base_lr: 0.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn linear_alpha_nondecreasing(a0 in 0.0..0.5f64, a1 in 0.0..0.5f64, total in 1usize..200) {
            let s = AlphaSchedule::Linear { alpha0: a0, alpha1: a1 };
            let mut prev = f64::NEG_INFINITY;
            for t in 0..=total {
                let a = alpha_at(&s, t, total).unwrap();
                prop_assert!(a >= prev && (0.0..=1.0).contains(&a));
                prev = a;
            }
        }

        #[test]
        fn cosine_nonincreasing_and_positive(base in 1e-4..10.0f64, total in 1usize..300) {
            let s = LrSchedule::Cosine { base_lr: base };
            let mut prev = f64::INFINITY;
            for t in 0..=total {
                let lr = lr_at(&s, t, total).unwrap();
                prop_assert!(lr <= prev && lr > 0.0);
                prev = lr;
            }
        }
    }
}
