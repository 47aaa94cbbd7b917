//! Adversarial objectives for the detector and the inpainter.
//!
//! The literal form works on squared norms of the whole score grid:
//! the detector minimises `-ln(|o_real|^2 + eps) - ln(|Y - o_fake|^2 + eps)`
//! and the inpainter minimises `ln(|Y - o_fake|^2 + eps)`, with `Y` all ones.
//! The per-cell form replaces both with mean binary cross-entropies that
//! have the same targets (real -> 1, inpainted -> 0 for the detector;
//! inpainted -> 1 for the inpainter).

use serde::{Deserialize, Serialize};

use crate::error::{AvidError, Result};
use crate::models::ScoreGrid;
use crate::tensor::Real;

/// Offset inside every logarithm of the literal form.
pub const LOG_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    Literal,
    #[default]
    PerCellBce,
}

impl std::str::FromStr for LossForm {
    type Err = AvidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(Self::Literal),
            "per_cell_bce" | "bce" => Ok(Self::PerCellBce),
            other => Err(AvidError::config(format!("unknown loss form '{other}'"))),
        }
    }
}

impl std::fmt::Display for LossForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Literal => "literal",
            Self::PerCellBce => "per_cell_bce",
        })
    }
}

/// The all-ones target grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdversarialTargets {
    pub rows: usize,
    pub cols: usize,
}

impl AdversarialTargets {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn value<T: Real>(&self) -> T {
        T::one()
    }

    fn check<T: Real>(&self, grid: &ScoreGrid<T>) -> Result<()> {
        if grid.dims() != (self.rows, self.cols) {
            return Err(AvidError::argument(format!(
                "score grid {:?} does not match targets {:?}",
                grid.dims(),
                (self.rows, self.cols)
            )));
        }
        Ok(())
    }
}

/// Detector loss and its gradients w.r.t. both score grids.
pub fn detector_loss_grad<T: Real>(
    o_real: &ScoreGrid<T>,
    o_fake: &ScoreGrid<T>,
    targets: &AdversarialTargets,
    form: LossForm,
) -> Result<(T, Vec<T>, Vec<T>)> {
    targets.check(o_real)?;
    targets.check(o_fake)?;
    let y: T = targets.value();
    match form {
        LossForm::Literal => {
            let eps = T::lit(LOG_EPS);
            let two = T::lit(2.0);
            let real_norm: T = o_real.values().iter().map(|&o| o * o).sum::<T>() + eps;
            let fake_norm: T = o_fake.values().iter().map(|&o| (y - o) * (y - o)).sum::<T>() + eps;
            let loss = -real_norm.ln() - fake_norm.ln();
            let g_real = o_real.values().iter().map(|&o| -two * o / real_norm).collect();
            let g_fake = o_fake.values().iter().map(|&o| two * (y - o) / fake_norm).collect();
            Ok((loss, g_real, g_fake))
        }
        LossForm::PerCellBce => {
            let n = T::lit(o_real.len() as f64);
            let loss = -o_real.values().iter().map(|&o| o.ln()).sum::<T>() / n
                - o_fake.values().iter().map(|&o| (T::one() - o).ln()).sum::<T>() / n;
            let g_real = o_real.values().iter().map(|&o| -T::one() / (n * o)).collect();
            let g_fake = o_fake.values().iter().map(|&o| T::one() / (n * (T::one() - o))).collect();
            Ok((loss, g_real, g_fake))
        }
    }
}

pub fn detector_loss<T: Real>(
    o_real: &ScoreGrid<T>,
    o_fake: &ScoreGrid<T>,
    targets: &AdversarialTargets,
    form: LossForm,
) -> Result<T> {
    Ok(detector_loss_grad(o_real, o_fake, targets, form)?.0)
}

/// Inpainter loss and its gradient w.r.t. the detector's scores on the inpainted input.
pub fn inpainter_loss_grad<T: Real>(
    o_fake: &ScoreGrid<T>,
    targets: &AdversarialTargets,
    form: LossForm,
) -> Result<(T, Vec<T>)> {
    targets.check(o_fake)?;
    let y: T = targets.value();
    match form {
        LossForm::Literal => {
            let eps = T::lit(LOG_EPS);
            let norm: T = o_fake.values().iter().map(|&o| (y - o) * (y - o)).sum::<T>() + eps;
            let grad = o_fake
                .values()
                .iter()
                .map(|&o| -T::lit(2.0) * (y - o) / norm)
                .collect();
            Ok((norm.ln(), grad))
        }
        LossForm::PerCellBce => {
            let n = T::lit(o_fake.len() as f64);
            let loss = -o_fake.values().iter().map(|&o| o.ln()).sum::<T>() / n;
            let grad = o_fake.values().iter().map(|&o| -T::one() / (n * o)).collect();
            Ok((loss, grad))
        }
    }
}

pub fn inpainter_loss<T: Real>(
    o_fake: &ScoreGrid<T>,
    targets: &AdversarialTargets,
    form: LossForm,
) -> Result<T> {
    Ok(inpainter_loss_grad(o_fake, targets, form)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<f64>) -> ScoreGrid<f64> {
        ScoreGrid::new(2, 2, values).unwrap()
    }

    const T22: AdversarialTargets = AdversarialTargets { rows: 2, cols: 2 };

    #[test]
    fn half_scores_give_unit_norm() {
        let real = grid(vec![0.5; 4]);
        let fake = grid(vec![0.0; 4]);
        // |o_real|^2 = 1 so only the fake term remains: -ln(4 + eps).
        let l = detector_loss(&real, &fake, &T22, LossForm::Literal).unwrap();
        assert!((l - (-(1.0 + LOG_EPS).ln() - (4.0 + LOG_EPS).ln())).abs() < 1e-12);
        assert!((-(1.0f64 + LOG_EPS).ln()).abs() < 1e-7);
    }

    #[test]
    fn detector_optimum_is_minus_two_ln_four() {
        let l = detector_loss(&grid(vec![1.0; 4]), &grid(vec![0.0; 4]), &T22, LossForm::Literal).unwrap();
        assert!((l + 2.0 * 4.0f64.ln()).abs() < 1e-8);
    }

    #[test]
    fn random_literal_loss_matches_hand_computation() {
        let real = [0.2, 0.9, 0.4, 0.7];
        let fake = [0.1, 0.3, 0.8, 0.5];
        let rn: f64 = 0.04 + 0.81 + 0.16 + 0.49;
        let fnorm: f64 = 0.81 + 0.49 + 0.04 + 0.25;
        let want = -(rn + 1e-8).ln() - (fnorm + 1e-8).ln();
        let got = detector_loss(&grid(real.to_vec()), &grid(fake.to_vec()), &T22, LossForm::Literal).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn inpainter_literal_extremes() {
        let at_target = inpainter_loss(&grid(vec![1.0; 4]), &T22, LossForm::Literal).unwrap();
        assert!((at_target - LOG_EPS.ln()).abs() < 1e-9);
        let zeros = inpainter_loss(&grid(vec![0.0; 4]), &T22, LossForm::Literal).unwrap();
        assert!((zeros - (4.0 + LOG_EPS).ln()).abs() < 1e-12);
    }

    fn fd_check(form: LossForm) {
        let base = [0.23, 0.61, 0.48, 0.87];
        let (_, g) = inpainter_loss_grad(&grid(base.to_vec()), &T22, form).unwrap();
        let (_, gr, gf) = detector_loss_grad(&grid(base.to_vec()), &grid(base.to_vec()), &T22, form).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut p = base.to_vec();
            let mut m = base.to_vec();
            p[i] += h;
            m[i] -= h;
            let fd = (inpainter_loss(&grid(p.clone()), &T22, form).unwrap()
                - inpainter_loss(&grid(m.clone()), &T22, form).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-3 * fd.abs().max(1e-8), "{form}: {fd} vs {}", g[i]);
            let b = grid(base.to_vec());
            let fd_r = (detector_loss(&grid(p.clone()), &b, &T22, form).unwrap()
                - detector_loss(&grid(m.clone()), &b, &T22, form).unwrap())
                / (2.0 * h);
            assert!((fd_r - gr[i]).abs() <= 1e-3 * fd_r.abs());
            let fd_f = (detector_loss(&b, &grid(p), &T22, form).unwrap()
                - detector_loss(&b, &grid(m), &T22, form).unwrap())
                / (2.0 * h);
            assert!((fd_f - gf[i]).abs() <= 1e-3 * fd_f.abs());
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check(LossForm::Literal);
        fd_check(LossForm::PerCellBce);
    }

    #[test]
    fn bce_is_permutation_invariant() {
        let a = detector_loss(&grid(vec![0.1, 0.2, 0.3, 0.4]), &grid(vec![0.5, 0.6, 0.7, 0.8]), &T22, LossForm::PerCellBce).unwrap();
        let b = detector_loss(&grid(vec![0.4, 0.3, 0.1, 0.2]), &grid(vec![0.8, 0.5, 0.7, 0.6]), &T22, LossForm::PerCellBce).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_argument_error() {
        let g = ScoreGrid::new(1, 4, vec![0.5f64; 4]).unwrap();
        assert!(matches!(inpainter_loss(&g, &T22, LossForm::Literal), Err(AvidError::Argument(_))));
        assert!(detector_loss(&grid(vec![0.5; 4]), &g, &T22, LossForm::PerCellBce).is_err());
    }
}
