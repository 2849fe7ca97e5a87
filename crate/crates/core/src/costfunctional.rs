//! Weighted multi-term cost functionals with initial-magnitude scaling.

use crate::error::{check_len, Error, Result};
use crate::optimize::{Gradient, Objective};
use crate::reduced_problem::ScalarProduct;

type ValueFn<'a> = Box<dyn FnMut(&[f64]) -> Result<f64> + 'a>;
type GradientFn<'a> = Box<dyn FnMut(&[f64]) -> Result<Vec<f64>> + 'a>;

/// Terms below this magnitude at the initial iterate keep a unit factor.
pub const DEGENERATE_MAGNITUDE: f64 = 1e-15;

pub struct CostTerm<'a> {
    pub name: String,
    pub weight: f64,
    value: ValueFn<'a>,
    gradient: Option<GradientFn<'a>>,
}

impl<'a> CostTerm<'a> {
    pub fn new(name: impl Into<String>, weight: f64, value: impl FnMut(&[f64]) -> Result<f64> + 'a) -> Self {
        Self {
            name: name.into(),
            weight,
            value: Box::new(value),
            gradient: None,
        }
    }

    /// Attaches the Euclidean derivative of the term.
    pub fn with_gradient(mut self, gradient: impl FnMut(&[f64]) -> Result<Vec<f64>> + 'a) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }
}

/// `J(x) = Σ γ_i J_i(x)`.
pub struct CostFunctional<'a> {
    dim: usize,
    terms: Vec<CostTerm<'a>>,
    factors: Vec<f64>,
    degenerate: Vec<usize>,
    frozen: bool,
    product: ScalarProduct,
}

impl<'a> CostFunctional<'a> {
    pub fn new(dim: usize, terms: Vec<CostTerm<'a>>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("cost functional needs at least one term".into()));
        }
        if let Some(t) = terms.iter().find(|t| !(t.weight > 0.0) || !t.weight.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight of term '{}' must be positive",
                t.name
            )));
        }
        let factors = vec![1.0; terms.len()];
        Ok(Self {
            dim,
            terms,
            factors,
            degenerate: Vec::new(),
            frozen: false,
            product: ScalarProduct::Identity,
        })
    }

    pub fn with_product(mut self, product: ScalarProduct) -> Self {
        self.product = product;
        self
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// Indices of terms that were too small to scale.
    pub fn degenerate_terms(&self) -> &[usize] {
        &self.degenerate
    }

    /// Sets `γ_i = w_i / |J_i(x0)|`, or `γ_i = 1` with a warning when
    /// `|J_i(x0)| < 1e-15`. The factors are computed once; later calls return
    /// them unchanged.
    pub fn compute_scaling(&mut self, x0: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x0.len())?;
        if self.frozen {
            return Ok(self.factors.clone());
        }
        for (i, term) in self.terms.iter_mut().enumerate() {
            let j = (term.value)(x0)?;
            if !j.is_finite() {
                return Err(Error::NonFiniteCost);
            }
            if j.abs() < DEGENERATE_MAGNITUDE {
                log::warn!(
                    "cost term {i} ('{}') has magnitude {j:e} at the initial iterate; using factor 1",
                    term.name
                );
                self.factors[i] = 1.0;
                self.degenerate.push(i);
            } else {
                self.factors[i] = term.weight / j.abs();
            }
        }
        self.frozen = true;
        Ok(self.factors.clone())
    }

    /// Unscaled term values.
    pub fn term_values(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        self.terms.iter_mut().map(|t| (t.value)(x)).collect()
    }

    pub fn evaluate(&mut self, x: &[f64]) -> Result<f64> {
        let values = self.term_values(x)?;
        Ok(values.iter().zip(&self.factors).map(|(j, g)| g * j).sum())
    }

    /// Euclidean derivative `Σ γ_i ∇J_i`.
    pub fn derivative(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, x.len())?;
        let mut total = vec![0.0; self.dim];
        for (term, &gamma) in self.terms.iter_mut().zip(&self.factors) {
            let grad = term
                .gradient
                .as_mut()
                .ok_or_else(|| Error::InvalidArgument(format!("term '{}' has no gradient", term.name)))?;
            let g = grad(x)?;
            check_len(self.dim, g.len())?;
            total.iter_mut().zip(&g).for_each(|(t, g)| *t += gamma * g);
        }
        Ok(total)
    }
}

impl Objective for CostFunctional<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluate(x)
    }

    fn gradient(&mut self, x: &[f64]) -> Result<Gradient> {
        let derivative = self.derivative(x)?;
        let riesz = self.product.riesz(&derivative)?;
        Ok(Gradient { riesz, derivative })
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.product.inner(a, b)
    }

    fn riesz(&self, derivative: &[f64]) -> Result<Vec<f64>> {
        self.product.riesz(derivative)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_terms<'a>(values: &[f64], weights: &[f64]) -> Vec<CostTerm<'a>> {
        values
            .iter()
            .zip(weights)
            .enumerate()
            .map(|(i, (&v, &w))| CostTerm::new(format!("t{i}"), w, move |_: &[f64]| Ok(v)))
            .collect()
    }

    #[test]
    fn factors_follow_definition() {
        let mut c = CostFunctional::new(1, constant_terms(&[2.0, 0.5], &[1.0, 1.0])).unwrap();
        assert_eq!(c.compute_scaling(&[0.0]).unwrap(), vec![0.5, 2.0]);
        let mut c = CostFunctional::new(1, constant_terms(&[2.0, 0.5], &[10.0, 1.0])).unwrap();
        assert_eq!(c.compute_scaling(&[0.0]).unwrap(), vec![5.0, 2.0]);
    }

    #[test]
    fn zero_term_keeps_unit_factor() {
        let mut c = CostFunctional::new(1, constant_terms(&[0.0, -4.0], &[3.0, 1.0])).unwrap();
        assert_eq!(c.compute_scaling(&[0.0]).unwrap(), vec![1.0, 0.25]);
        assert_eq!(c.degenerate_terms(), &[0]);
    }

    #[test]
    fn factors_are_frozen() {
        let mut calls = 0;
        let term = CostTerm::new("x", 1.0, |x: &[f64]| {
            calls += 1;
            Ok(x[0])
        });
        let mut c = CostFunctional::new(1, vec![term]).unwrap();
        assert_eq!(c.compute_scaling(&[4.0]).unwrap(), vec![0.25]);
        assert_eq!(c.compute_scaling(&[100.0]).unwrap(), vec![0.25]);
        assert_eq!(c.evaluate(&[8.0]).unwrap(), 2.0);
        drop(c);
        assert_eq!(calls, 2);
    }

    #[test]
    fn rejects_nonpositive_weight() {
        assert!(CostFunctional::new(1, constant_terms(&[1.0], &[0.0])).is_err());
        assert!(CostFunctional::new(1, Vec::new()).is_err());
    }

    #[test]
    fn missing_gradient_is_reported() {
        let mut c = CostFunctional::new(1, constant_terms(&[1.0], &[1.0])).unwrap();
        assert!(matches!(c.derivative(&[0.0]), Err(Error::InvalidArgument(_))));
    }
}
