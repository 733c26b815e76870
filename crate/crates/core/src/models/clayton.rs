use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Below this dependence parameter the copula is evaluated as the product
/// (independence) copula.
pub const INDEPENDENCE_THRESHOLD: f64 = 1e-8;

/// Largest supported number of coordinates.
pub const MAX_DIM: usize = 16;

/// Clayton copula restricted to positive dependence, `theta0 > 0`.
///
/// The multivariate (Archimedean) form is used throughout:
/// `C(u) = (Σ u_i^{-θ} - L + 1)^{-1/θ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaytonCopula {
    theta0: f64,
}

/// `ln(Σ e^{a_i} - (n - 1))` for nonnegative `a_i`, without overflow.
fn ln_generator_sum(a: &[f64]) -> f64 {
    let m = a.iter().copied().fold(0.0_f64, f64::max);
    if m < 30.0 {
        let s: f64 = a.iter().map(|&x| x.exp_m1()).sum();
        s.ln_1p()
    } else {
        let n = a.len() as f64;
        let s: f64 = a.iter().map(|&x| (x - m).exp()).sum::<f64>() - (n - 1.0) * (-m).exp();
        m + s.ln()
    }
}

impl ClaytonCopula {
    pub fn new(theta0: f64) -> Result<Self> {
        if !(theta0 > 0.0 && theta0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Clayton parameter must be positive and finite, got {theta0}"
            )));
        }
        Ok(ClaytonCopula { theta0 })
    }

    pub fn theta0(&self) -> f64 {
        self.theta0
    }

    pub fn is_independence(&self) -> bool {
        self.theta0 < INDEPENDENCE_THRESHOLD
    }

    /// Bivariate copula CDF. Arguments are clamped into `[0, 1]`, so the
    /// margins `C(u, 1) = u` and `C(1, v) = v` hold exactly.
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        self.cdf_multi(&[u, v])
    }

    /// Copula CDF in up to [`MAX_DIM`] dimensions. Coordinates equal to 1
    /// drop out exactly.
    pub fn cdf_multi(&self, us: &[f64]) -> f64 {
        assert!(us.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut a = [0.0_f64; MAX_DIM];
        let mut n = 0;
        let mut product = 1.0;
        let mut last = 1.0;
        for &u in us {
            let u = u.clamp(0.0, 1.0);
            if u == 0.0 {
                return 0.0;
            }
            if u < 1.0 {
                product *= u;
                last = u;
                a[n] = -self.theta0 * u.ln();
                n += 1;
            }
        }
        match n {
            0 => 1.0,
            1 => last,
            _ if self.is_independence() => product,
            _ => (-ln_generator_sum(&a[..n]) / self.theta0).exp(),
        }
    }

    /// The bivariate density `c(u, v)`; interior arguments only.
    pub fn density(&self, u: f64, v: f64) -> Result<f64> {
        for x in [u, v] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Domain(format!("copula density needs arguments in (0, 1), got {x}")));
            }
        }
        Ok(self.ln_density_multi(&[u, v]).exp())
    }

    /// Log density for `L` coordinates in `(0, 1]`:
    /// `Σ_{k<L} ln(1 + kθ) - (1 + θ) Σ ln u_i - (L + 1/θ) ln(Σ u_i^{-θ} - L + 1)`.
    pub(crate) fn ln_density_multi(&self, us: &[f64]) -> f64 {
        if us.len() < 2 || self.is_independence() {
            return 0.0;
        }
        assert!(us.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let th = self.theta0;
        let mut a = [0.0_f64; MAX_DIM];
        let mut sum_ln_u = 0.0;
        for (ai, &u) in a.iter_mut().zip(us) {
            let lu = u.ln();
            sum_ln_u += lu;
            *ai = -th * lu;
        }
        let terms = &a[..us.len()];
        let l = us.len() as f64;
        let mut out = 0.0;
        for k in 1..us.len() {
            out += (k as f64 * th).ln_1p();
        }
        out - (1.0 + th) * sum_ln_u - (l + 1.0 / th) * ln_generator_sum(terms)
    }

    /// Maps independent uniforms `w` to a draw from the copula by sequential
    /// conditional inversion. For the second coordinate this is
    /// `v = ((w^{-θ/(1+θ)} - 1) u^{-θ} + 1)^{-1/θ}`.
    pub fn conditional_inversion(&self, w: &[f64], out: &mut [f64]) {
        debug_assert_eq!(w.len(), out.len());
        if self.is_independence() {
            out.copy_from_slice(w);
            return;
        }
        let th = self.theta0;
        // ln of A_k = Σ_{i<k} u_i^{-θ} - k + 1, which satisfies A_{k+1} = A_k w_k^{e_k}
        let mut ln_acc = 0.0_f64;
        for (k, (&wk, o)) in w.iter().zip(out.iter_mut()).enumerate() {
            if k == 0 {
                *o = wk;
                ln_acc = -th * wk.ln();
                continue;
            }
            let expo = -th / (1.0 + k as f64 * th);
            // u_k^{-θ} = A_k (w^{e_k} - 1) + 1
            let z = ln_acc + (expo * wk.ln()).exp_m1().ln();
            let ln_uk = if z < 30.0 { z.exp().ln_1p() } else { z + (-z).exp().ln_1p() };
            *o = (-ln_uk / th).exp();
            ln_acc += expo * wk.ln();
        }
    }

    /// Spearman's rank correlation `12 ∫∫ C(u, v) du dv - 3`, by adaptive
    /// quadrature to an absolute tolerance of 1e-5.
    pub fn spearman_rho(&self) -> f64 {
        if self.is_independence() {
            return 0.0;
        }
        let integral = quad::integrate_2d(|u, v| self.cdf(u, v), (0.0, 1.0), (0.0, 1.0), 1e-5 / 24.0);
        12.0 * integral - 3.0
    }

    /// The positive `theta0` whose Spearman's rho equals `rho`, by bisection
    /// on [`ClaytonCopula::spearman_rho`] in log-parameter space.
    pub fn from_spearman(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 0.99) {
            return Err(Error::InvalidParameter(format!(
                "Spearman's rho must lie in (0, 0.99) for a positive Clayton parameter, got {rho}"
            )));
        }
        let rho_at = |ln_t: f64| ClaytonCopula { theta0: ln_t.exp() }.spearman_rho();
        let (mut lo, mut hi) = ((1e-6_f64).ln(), (500.0_f64).ln());
        if rho_at(hi) < rho {
            return Err(Error::InvalidParameter(format!("Spearman's rho {rho} is out of reach")));
        }
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if rho_at(mid) < rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ClaytonCopula::new((0.5 * (lo + hi)).exp())
    }
}
