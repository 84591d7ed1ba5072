//! Cohomogeneity-one tensor fields: one pointwise value per sample of `t`.

pub mod calculus;
pub mod grid;
pub mod io;

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::error::FieldError;
use crate::geom::{Linear, Vec4};
pub use grid::{cumulative_integral, Grid, GridSpec, Scheme};

/// Coordinate gradient of `t = 2(r x1 - x2)`, `r = b/a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameConstants {
    pub c: [f64; 4],
}

impl FrameConstants {
    pub fn from_ratio(r: f64) -> FrameConstants {
        FrameConstants { c: [2.0 * r, 0.0, -2.0, 0.0] }
    }

    pub fn vector(&self) -> Vec4 {
        Vec4::from(self.c)
    }
}

/// A grid together with the data needed to turn `d/dt` into coordinate
/// derivatives and `dt` integrals into integrals over the compact surface.
#[derive(Debug)]
pub struct Domain {
    pub grid: Grid,
    pub frame: FrameConstants,
    /// Coordinate volume of a fundamental domain per unit of `t`.
    pub deck_factor: f64,
}

impl Domain {
    pub fn new(spec: GridSpec, frame: FrameConstants, deck_factor: f64) -> Result<Arc<Domain>, FieldError> {
        Ok(Arc::new(Domain { grid: Grid::new(spec)?, frame, deck_factor }))
    }

    pub fn c(&self) -> Vec4 {
        self.frame.vector()
    }

    pub fn t(&self) -> &[f64] {
        self.grid.t()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Tensor field depending on `t` only.
#[derive(Clone, Debug)]
pub struct ReducedField<T> {
    domain: Arc<Domain>,
    data: Vec<T>,
}

impl<T: Copy> ReducedField<T> {
    pub fn new(domain: Arc<Domain>, data: Vec<T>) -> Result<Self, FieldError> {
        if data.len() != domain.len() {
            return Err(FieldError::GridMismatch);
        }
        Ok(ReducedField { domain, data })
    }

    pub fn from_fn(domain: &Arc<Domain>, f: impl Fn(f64) -> T) -> Self {
        let data = domain.t().iter().map(|&t| f(t)).collect();
        ReducedField { domain: domain.clone(), data }
    }

    pub fn constant(domain: &Arc<Domain>, v: T) -> Self {
        ReducedField { domain: domain.clone(), data: vec![v; domain.len()] }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn into_values(self) -> Vec<T> {
        self.data
    }

    pub fn t(&self) -> &[f64] {
        self.domain.t()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, i: usize) -> T {
        self.data[i]
    }

    pub fn same_domain<U>(&self, o: &ReducedField<U>) -> bool {
        Arc::ptr_eq(&self.domain, &o.domain)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(&T) -> U) -> ReducedField<U> {
        ReducedField { domain: self.domain.clone(), data: self.data.iter().map(f).collect() }
    }

    /// Sample-wise combination; both fields must share a domain.
    pub fn zip<U: Copy, V: Copy>(
        &self,
        o: &ReducedField<U>,
        f: impl Fn(&T, &U) -> V,
    ) -> Result<ReducedField<V>, FieldError> {
        if !self.same_domain(o) {
            return Err(FieldError::GridMismatch);
        }
        let data = self.data.iter().zip(&o.data).map(|(a, b)| f(a, b)).collect();
        Ok(ReducedField { domain: self.domain.clone(), data })
    }

    /// Largest `norm` over the interior samples.
    pub fn sup_interior(&self, norm: impl Fn(&T) -> f64) -> f64 {
        self.data[self.domain.grid.interior()]
            .iter()
            .map(norm)
            .fold(0.0, |m, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
    }
}

impl<T: Linear> ReducedField<T> {
    /// Derivative in `t`.
    pub fn dt(&self) -> ReducedField<T> {
        ReducedField { domain: self.domain.clone(), data: self.domain.grid.derivative(&self.data) }
    }

    pub fn sub(&self, o: &ReducedField<T>) -> Result<ReducedField<T>, FieldError> {
        self.zip(o, |a, b| {
            let mut x = *a;
            x.add_scaled(-1.0, b);
            x
        })
    }

    pub fn add(&self, o: &ReducedField<T>) -> Result<ReducedField<T>, FieldError> {
        self.zip(o, |a, b| {
            let mut x = *a;
            x.add_scaled(1.0, b);
            x
        })
    }

    pub fn scale(&self, a: f64) -> ReducedField<T> {
        self.map(|x| x.scaled(a))
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.sup_interior(|x| x.max_abs())
    }
}

impl ReducedField<f64> {
    pub fn integrate_t(&self) -> f64 {
        self.domain.grid.integrate(&self.data)
    }

    pub fn check_finite(&self, what: &'static str) -> Result<(), FieldError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(FieldError::NonFinite(what))
        }
    }
}
