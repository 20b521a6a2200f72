//! Smooth cutoff η with plateaus η = 1 on the left and η = 0 on the right.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffVariant {
    /// η = 1 for x ≤ 0, η = 0 for x ≥ 1 (used by the doubling).
    Gluing,
    /// η = 1 for x ≤ 1/2, η = 0 for x ≥ 1 (used for the initial perturbation and transplanting).
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffEta {
    pub variant: CutoffVariant,
}

fn psi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// The smooth step 1 → 0 on [0, 1] built from e^{−1/t}.
fn step(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let a = psi(1.0 - x);
        a / (a + psi(x))
    }
}

impl CutoffEta {
    pub const GLUING: CutoffEta = CutoffEta { variant: CutoffVariant::Gluing };
    pub const BUMP: CutoffEta = CutoffEta { variant: CutoffVariant::Bump };

    /// (start, end) of the transition interval.
    pub fn transition(&self) -> (f64, f64) {
        match self.variant {
            CutoffVariant::Gluing => (0.0, 1.0),
            CutoffVariant::Bump => (0.5, 1.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (a, b) = self.transition();
        step((x - a) / (b - a))
    }

    /// First derivative, by differentiating the closed form.
    pub fn deriv(&self, x: f64) -> f64 {
        let (a, b) = self.transition();
        let w = b - a;
        let t = (x - a) / w;
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        // η = p/(p+q) with p = ψ(1−t), q = ψ(t), ψ' = ψ/t²
        let p = psi(1.0 - t);
        let q = psi(t);
        let dp = -p / ((1.0 - t) * (1.0 - t));
        let dq = q / (t * t);
        (dp * q - p * dq) / ((p + q) * (p + q)) / w
    }

    /// Reported sup|η'| and sup|η''| on a fine grid.
    pub fn derivative_bounds(&self) -> (f64, f64) {
        let (a, b) = self.transition();
        let m = 20_000;
        let h = (b - a) / m as f64;
        let mut d1: f64 = 0.0;
        let mut d2: f64 = 0.0;
        for i in 1..m {
            let x = a + i as f64 * h;
            d1 = d1.max(self.deriv(x).abs());
            let dd = (self.deriv(x + 1e-6) - self.deriv(x - 1e-6)) / 2e-6;
            d2 = d2.max(dd.abs());
        }
        (d1, d2)
    }
}

/// Evaluates η with the plateau convention of the requested variant.
pub fn eval_eta(eta: &CutoffEta, x: f64) -> f64 {
    eta.eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus() {
        let g = CutoffEta::GLUING;
        assert_eq!(g.eval(-1.0), 1.0);
        assert_eq!(g.eval(0.0), 1.0);
        assert_eq!(g.eval(2.0), 0.0);
        assert_eq!(g.eval(1.0), 0.0);
        let v = g.eval(0.5);
        assert!(v > 0.0 && v < 1.0);
        let b = CutoffEta::BUMP;
        assert_eq!(b.eval(0.4), 1.0);
        assert_eq!(b.eval(1.2), 0.0);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let g = CutoffEta::GLUING;
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let fd = (g.eval(x + 1e-6) - g.eval(x - 1e-6)) / 2e-6;
            assert!((fd - g.deriv(x)).abs() < 1e-6);
        }
        let (d1, d2) = g.derivative_bounds();
        assert!(d1 > 1.0 && d1 < 3.0);
        assert!(d2.is_finite() && d2 > 0.0);
    }
}
