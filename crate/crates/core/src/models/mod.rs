//! Gamma marginals, the Clayton copula, and their Sklar composition.

mod clayton;
mod gamma;

pub use clayton::{ClaytonCopula, INDEPENDENCE_THRESHOLD, MAX_DIM};
pub use gamma::GammaMarginal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unknown parameters `(θ0, θ1, …, θL)`: the copula parameter followed by one
/// Gamma shape per sensor. Every component is strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector {
    components: Vec<f64>,
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParameterVector::from_vec(v)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.components
    }
}

impl ParameterVector {
    pub fn new(theta0: f64, shapes: &[f64]) -> Result<Self> {
        let mut v = Vec::with_capacity(shapes.len() + 1);
        v.push(theta0);
        v.extend_from_slice(shapes);
        Self::from_vec(v)
    }

    /// Builds from `[θ0, θ1, …]`.
    pub fn from_vec(components: Vec<f64>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidParameter(
                "parameter vector needs the copula parameter and at least one shape".into(),
            ));
        }
        if components.len() - 1 > MAX_DIM {
            return Err(Error::InvalidParameter(format!("at most {MAX_DIM} sensors are supported")));
        }
        if let Some(bad) = components.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "parameter components must be positive and finite, got {bad}"
            )));
        }
        Ok(ParameterVector { components })
    }

    pub fn from_log(log_components: &[f64]) -> Result<Self> {
        Self::from_vec(log_components.iter().map(|x| x.exp()).collect())
    }

    pub fn to_log(&self) -> Vec<f64> {
        self.components.iter().map(|x| x.ln()).collect()
    }

    pub fn theta0(&self) -> f64 {
        self.components[0]
    }

    pub fn shapes(&self) -> &[f64] {
        &self.components[1..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.components
    }

    /// Dimension `k = L + 1`.
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_sensors(&self) -> usize {
        self.components.len() - 1
    }

    /// Copy with component `i` replaced.
    pub fn with_component(&self, i: usize, value: f64) -> Result<Self> {
        let mut v = self.components.clone();
        v[i] = value;
        Self::from_vec(v)
    }
}

/// The parametric family: Gamma marginals with fixed, known scales joined by
/// a Clayton copula. Instantiating it at a [`ParameterVector`] yields a
/// [`JointModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    scales: Vec<f64>,
}

impl ModelSpec {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() || scales.len() > MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "number of sensors must be in 1..={MAX_DIM}, got {}",
                scales.len()
            )));
        }
        if let Some(bad) = scales.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(format!("scales must be positive, got {bad}")));
        }
        Ok(ModelSpec { scales })
    }

    /// Two sensors, both with scale 4.
    pub fn two_sensor_default() -> Self {
        ModelSpec { scales: vec![4.0, 4.0] }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn n_sensors(&self) -> usize {
        self.scales.len()
    }

    /// Number of unknown parameters, `L + 1`.
    pub fn n_params(&self) -> usize {
        self.scales.len() + 1
    }

    pub fn at(&self, theta: &ParameterVector) -> Result<JointModel> {
        if theta.n_sensors() != self.n_sensors() {
            return Err(Error::InvalidParameter(format!(
                "parameter vector has {} shapes but the model has {} sensors",
                theta.n_sensors(),
                self.n_sensors()
            )));
        }
        let marginals = theta
            .shapes()
            .iter()
            .zip(&self.scales)
            .map(|(&k, &s)| GammaMarginal::new(k, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(JointModel { marginals, copula: ClaytonCopula::new(theta.theta0())? })
    }
}

/// A fully specified joint distribution `p(y1, …, yL | θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    marginals: Vec<GammaMarginal>,
    copula: ClaytonCopula,
}

impl JointModel {
    pub fn new(marginals: Vec<GammaMarginal>, copula: ClaytonCopula) -> Result<Self> {
        if marginals.is_empty() || marginals.len() > MAX_DIM {
            return Err(Error::InvalidParameter(format!("need 1..={MAX_DIM} marginals")));
        }
        Ok(JointModel { marginals, copula })
    }

    pub fn marginals(&self) -> &[GammaMarginal] {
        &self.marginals
    }

    pub fn copula(&self) -> &ClaytonCopula {
        &self.copula
    }

    pub fn n_sensors(&self) -> usize {
        self.marginals.len()
    }

    pub fn theta(&self) -> ParameterVector {
        let shapes: Vec<f64> = self.marginals.iter().map(|m| m.shape()).collect();
        ParameterVector::new(self.copula.theta0(), &shapes).expect("validated at construction")
    }

    /// Joint CDF `C(F1(y1), …, FL(yL))`.
    pub fn cdf(&self, y: &[f64]) -> f64 {
        let mut u = [0.0_f64; MAX_DIM];
        for ((ui, m), &yi) in u.iter_mut().zip(&self.marginals).zip(y) {
            *ui = m.cdf_unchecked(yi);
        }
        self.copula.cdf_multi(&u[..self.marginals.len()])
    }

    /// `ln c(F1(y1), …) + Σ ln p_i(y_i)`; `-inf` outside the support.
    pub fn ln_pdf(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.marginals.len());
        let mut u = [0.0_f64; MAX_DIM];
        let mut out = 0.0;
        for ((ui, m), &yi) in u.iter_mut().zip(&self.marginals).zip(y) {
            if !(yi > 0.0) || !yi.is_finite() {
                return f64::NEG_INFINITY;
            }
            out += m.ln_pdf(yi);
            *ui = m.cdf_unchecked(yi).max(f64::MIN_POSITIVE);
        }
        if self.marginals.len() > 1 {
            out += self.copula.ln_density_multi(&u[..self.marginals.len()]);
        }
        out
    }

    pub fn pdf(&self, y: &[f64]) -> f64 {
        self.ln_pdf(y).exp()
    }
}

/// Log joint density of `y` under the family `spec` at parameters `theta`.
pub fn joint_logpdf(y: &[f64], theta: &ParameterVector, spec: &ModelSpec) -> Result<f64> {
    if y.len() != spec.n_sensors() {
        return Err(Error::Domain(format!(
            "point has {} coordinates, model has {} sensors",
            y.len(),
            spec.n_sensors()
        )));
    }
    Ok(spec.at(theta)?.ln_pdf(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn theta_star() -> ParameterVector {
        ParameterVector::new(1.0759, &[4.0, 5.0]).unwrap()
    }

    #[test]
    fn parameter_vector_validation() {
        assert!(ParameterVector::new(0.0, &[1.0]).is_err());
        assert!(ParameterVector::new(1.0, &[-1.0, 2.0]).is_err());
        assert!(ParameterVector::from_vec(vec![1.0]).is_err());
        let p = theta_star();
        assert_eq!(p.len(), 3);
        assert_eq!(p.n_sensors(), 2);
        let back = ParameterVector::from_log(&p.to_log()).unwrap();
        for (a, b) in back.as_slice().iter().zip(p.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn sklar_marginal_consistency() {
        let model = ModelSpec::two_sensor_default().at(&theta_star()).unwrap();
        let y1 = 13.0;
        let f1 = model.marginals()[0].cdf(y1).unwrap();
        assert_eq!(model.cdf(&[y1, f64::INFINITY]), f1);
    }

    #[test]
    fn independence_limit() {
        let spec = ModelSpec::two_sensor_default();
        let theta = ParameterVector::new(1e-9, &[4.0, 5.0]).unwrap();
        let y = [12.0, 21.0];
        let lp = joint_logpdf(&y, &theta, &spec).unwrap();
        let m1 = GammaMarginal::new(4.0, 4.0).unwrap();
        let m2 = GammaMarginal::new(5.0, 4.0).unwrap();
        let sum = m1.pdf(y[0]).unwrap().ln() + m2.pdf(y[1]).unwrap().ln();
        assert!((lp - sum).abs() < 1e-6);

        let near = ParameterVector::new(2e-8, &[4.0, 5.0]).unwrap();
        assert!((joint_logpdf(&y, &near, &spec).unwrap() - sum).abs() < 1e-6);
    }

    #[test]
    fn compositional_value_at_four_four() {
        let spec = ModelSpec::two_sensor_default();
        let y = [4.0, 4.0];
        let m1 = GammaMarginal::new(4.0, 4.0).unwrap();
        let m2 = GammaMarginal::new(5.0, 4.0).unwrap();
        let c = ClaytonCopula::new(1.0759).unwrap();
        let expect = (c.density(m1.cdf(4.0).unwrap(), m2.cdf(4.0).unwrap()).unwrap()
            * m1.pdf(4.0).unwrap()
            * m2.pdf(4.0).unwrap())
        .ln();
        let got = joint_logpdf(&y, &theta_star(), &spec).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn out_of_support_is_negative_infinity() {
        let spec = ModelSpec::two_sensor_default();
        assert_eq!(joint_logpdf(&[-1.0, 3.0], &theta_star(), &spec).unwrap(), f64::NEG_INFINITY);
        assert_eq!(joint_logpdf(&[0.0, 3.0], &theta_star(), &spec).unwrap(), f64::NEG_INFINITY);
        assert!(joint_logpdf(&[1.0], &theta_star(), &spec).is_err());
    }

    #[test]
    fn joint_density_normalizes_on_truncated_grid() {
        let model = ModelSpec::two_sensor_default().at(&theta_star()).unwrap();
        let mass = quad::integrate_2d(|a, b| model.pdf(&[a, b]), (1e-9, 120.0), (1e-9, 120.0), 1e-7);
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn logpdf_is_continuous_near_theta_star() {
        let spec = ModelSpec::two_sensor_default();
        let y = [14.0, 22.0];
        let base = joint_logpdf(&y, &theta_star(), &spec).unwrap();
        for i in 0..3 {
            let t = theta_star();
            let bumped = t.with_component(i, t.as_slice()[i] + 1e-7).unwrap();
            let v = joint_logpdf(&y, &bumped, &spec).unwrap();
            assert!((v - base).abs() < 1e-5);
        }
    }

    #[test]
    fn mismatched_dimension_rejected() {
        let spec = ModelSpec::two_sensor_default();
        let theta = ParameterVector::new(1.0, &[2.0, 3.0, 4.0]).unwrap();
        assert!(spec.at(&theta).is_err());
    }
}
