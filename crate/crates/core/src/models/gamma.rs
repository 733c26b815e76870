use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Gamma distribution with the estimated shape and a fixed, known scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub struct GammaMarginal {
    shape: f64,
    scale: f64,
    ln_gamma_shape: f64,
}

#[derive(Serialize, Deserialize)]
struct GammaRepr {
    shape: f64,
    scale: f64,
}

impl TryFrom<GammaRepr> for GammaMarginal {
    type Error = Error;
    fn try_from(r: GammaRepr) -> Result<Self> {
        GammaMarginal::new(r.shape, r.scale)
    }
}

impl From<GammaMarginal> for GammaRepr {
    fn from(m: GammaMarginal) -> Self {
        GammaRepr { shape: m.shape, scale: m.scale }
    }
}

impl GammaMarginal {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma shape must be positive, got {shape}")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma scale must be positive, got {scale}")));
        }
        Ok(GammaMarginal { shape, scale, ln_gamma_shape: special::ln_gamma(shape) })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    fn check_support(y: f64) -> Result<()> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("gamma support is y >= 0, got {y}")));
        }
        Ok(())
    }

    /// `y^(k-1) e^(-y/s) / (s^k Γ(k))`.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok(self.ln_pdf(y).exp())
    }

    /// Log density; `-inf` outside the support.
    pub fn ln_pdf(&self, y: f64) -> f64 {
        if !(y >= 0.0) {
            return f64::NEG_INFINITY;
        }
        if y == 0.0 {
            return if self.shape == 1.0 {
                -self.scale.ln()
            } else if self.shape < 1.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
        }
        (self.shape - 1.0) * y.ln() - y / self.scale - self.shape * self.scale.ln() - self.ln_gamma_shape
    }

    /// Regularized lower incomplete gamma `P(k, y/s)`.
    pub fn cdf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok(self.cdf_unchecked(y))
    }

    pub(crate) fn cdf_unchecked(&self, y: f64) -> f64 {
        if !(y > 0.0) {
            return 0.0;
        }
        special::gamma_p_with(self.shape, y / self.scale, self.ln_gamma_shape)
    }

    /// Survival function `P(Y >= y)`, accurate in the upper tail.
    pub fn sf(&self, y: f64) -> Result<f64> {
        Self::check_support(y)?;
        Ok(special::gamma_q_with(self.shape, y / self.scale, self.ln_gamma_shape))
    }

    /// The `y` with `cdf(y) = p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {p}")));
        }
        Ok(self.quantile_unchecked(p))
    }

    pub(crate) fn quantile_unchecked(&self, p: f64) -> f64 {
        self.scale * special::gamma_p_inv_with(self.shape, p, self.ln_gamma_shape)
    }
}
