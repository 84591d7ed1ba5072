//! One-dimensional grids in the invariant variable `t`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

use crate::error::FieldError;
use crate::geom::Linear;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Scheme {
    /// Uniform samples, 4th-order central differences, Simpson quadrature.
    UniformCentral4,
    /// Chebyshev-Lobatto samples in `s = tanh(t/L)`, spectral differentiation,
    /// Clenshaw-Curtis quadrature.
    ChebyshevMapped { length_scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t_max: f64,
    pub n: usize,
    pub scheme: Scheme,
}

impl GridSpec {
    pub fn uniform(t_max: f64, n: usize) -> GridSpec {
        GridSpec { t_max, n, scheme: Scheme::UniformCentral4 }
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.n < 32 {
            return Err(FieldError::InvalidGrid(format!("n = {} is below 32", self.n)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(FieldError::InvalidGrid(format!("t_max = {} must be positive", self.t_max)));
        }
        if let Scheme::ChebyshevMapped { length_scale } = self.scheme {
            if !(length_scale > 0.0 && length_scale.is_finite()) {
                return Err(FieldError::InvalidGrid("length scale must be positive".into()));
            }
            if (self.t_max / length_scale).tanh() >= 1.0 {
                return Err(FieldError::InvalidGrid("t_max/L too large for the map".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
enum DiffOp {
    Uniform { h: f64 },
    Dense(Vec<f64>),
}

/// Samples, differentiation operator and quadrature weights for a spec.
#[derive(Debug)]
pub struct Grid {
    spec: GridSpec,
    t: Vec<f64>,
    quad: Vec<f64>,
    op: DiffOp,
}

// 5-point one-sided 4th-order stencils for the two outermost samples.
const EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];
const CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid, FieldError> {
        spec.validate()?;
        let n = spec.n;
        match spec.scheme {
            Scheme::UniformCentral4 => {
                let h = 2.0 * spec.t_max / (n - 1) as f64;
                let t = (0..n).map(|i| -spec.t_max + h * i as f64).collect();
                Ok(Grid { spec, t, quad: simpson_weights(n, h), op: DiffOp::Uniform { h } })
            }
            Scheme::ChebyshevMapped { length_scale: l } => {
                let smax = (spec.t_max / l).tanh();
                let nn = n - 1;
                let x: Vec<f64> = (0..n).map(|j| -(PI * j as f64 / nn as f64).cos()).collect();
                let s: Vec<f64> = x.iter().map(|v| smax * v).collect();
                let t = s.iter().map(|v| l * v.atanh()).collect();
                let cc = clenshaw_curtis(nn);
                let quad = (0..n).map(|j| cc[j] * smax * l / (1.0 - s[j] * s[j])).collect();
                let w: Vec<f64> = (0..n)
                    .map(|j| {
                        let sgn = if j % 2 == 0 { 1.0 } else { -1.0 };
                        if j == 0 || j == nn {
                            0.5 * sgn
                        } else {
                            sgn
                        }
                    })
                    .collect();
                let mut d = vec![0.0; n * n];
                for i in 0..n {
                    let scale = (1.0 - s[i] * s[i]) / (l * smax);
                    let mut diag = 0.0;
                    for j in 0..n {
                        if i != j {
                            let v = (w[j] / w[i]) / (x[i] - x[j]);
                            d[i * n + j] = v * scale;
                            diag -= v;
                        }
                    }
                    d[i * n + i] = diag * scale;
                }
                Ok(Grid { spec, t, quad, op: DiffOp::Dense(d) })
            }
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Uniform spacing, if the grid is uniform.
    pub fn spacing(&self) -> Option<f64> {
        match self.op {
            DiffOp::Uniform { h } => Some(h),
            DiffOp::Dense(_) => None,
        }
    }

    /// Samples used for sup-norms: the outermost 2% on each side are dropped.
    pub fn interior(&self) -> Range<usize> {
        let n = self.len();
        let skip = ((0.02 * n as f64).ceil() as usize).max(3);
        skip..n - skip
    }

    /// Derivative in `t` of sampled values.
    pub fn derivative<T: Linear>(&self, v: &[T]) -> Vec<T> {
        let n = self.len();
        assert_eq!(v.len(), n, "sample count does not match the grid");
        match &self.op {
            DiffOp::Uniform { h } => {
                let inv = 1.0 / (12.0 * h);
                // Integer weights are summed first so constants differentiate to
                // exactly zero.
                let apply = |samples: &mut dyn Iterator<Item = (f64, usize)>| {
                    let mut acc = T::zero();
                    for (w, k) in samples {
                        if w != 0.0 {
                            acc.add_scaled(w, &v[k]);
                        }
                    }
                    acc.scaled(inv)
                };
                let mut out = Vec::with_capacity(n);
                out.push(apply(&mut EDGE0.iter().enumerate().map(|(k, w)| (*w, k))));
                out.push(apply(&mut EDGE1.iter().enumerate().map(|(k, w)| (*w, k))));
                for i in 2..n - 2 {
                    out.push(apply(&mut CENTRAL.iter().enumerate().map(|(k, w)| (*w, i - 2 + k))));
                }
                // Mirrored stencils: reverse the sample order and flip the sign.
                out.push(apply(&mut EDGE1.iter().enumerate().map(|(k, w)| (-*w, n - 1 - k))));
                out.push(apply(&mut EDGE0.iter().enumerate().map(|(k, w)| (-*w, n - 1 - k))));
                out
            }
            DiffOp::Dense(d) => (0..n)
                .map(|i| {
                    let row = &d[i * n..(i + 1) * n];
                    let mut acc = T::zero();
                    for (w, x) in row.iter().zip(v) {
                        acc.add_scaled(*w, x);
                    }
                    acc
                })
                .collect(),
        }
    }

    /// `int f dt` over the whole grid.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.len());
        self.quad.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    pub fn quadrature_weights(&self) -> &[f64] {
        &self.quad
    }

    /// Running integral from the first sample, exact for piecewise cubics.
    pub fn cumulative(&self, v: &[f64]) -> Vec<f64> {
        cumulative_integral(&self.t, v)
    }

    /// Four-point Lagrange interpolation at `t0`.
    pub fn interpolate(&self, v: &[f64], t0: f64) -> f64 {
        let (idx, w) = self.interpolation_weights(t0);
        idx.iter().zip(w.iter()).map(|(&i, w)| w * v[i]).sum()
    }

    pub fn interpolation_weights(&self, t0: f64) -> ([usize; 4], [f64; 4]) {
        let n = self.len();
        let k = self.t.partition_point(|&x| x < t0).clamp(2, n - 2);
        let start = k - 2;
        let idx = [start, start + 1, start + 2, start + 3];
        let mut w = [1.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                if a != b {
                    w[a] *= (t0 - self.t[idx[b]]) / (self.t[idx[a]] - self.t[idx[b]]);
                }
            }
        }
        (idx, w)
    }
}

fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    // Simpson needs an even number of intervals; close with a 3/8 panel.
    let simpson = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    for k in (0..simpson).step_by(2) {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
    }
    if simpson < intervals {
        let k = simpson;
        for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
            w[k + o] += 3.0 * h / 8.0 * c;
        }
    }
    w
}

fn clenshaw_curtis(nn: usize) -> Vec<f64> {
    let theta: Vec<f64> = (0..=nn).map(|j| PI * j as f64 / nn as f64).collect();
    let mut w = vec![0.0; nn + 1];
    let nf = nn as f64;
    let mut v = vec![1.0; nn.saturating_sub(1)];
    if nn % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[nn] = w[0];
        for k in 1..nn / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (i, vi) in v.iter_mut().enumerate() {
            *vi -= (nf * theta[i + 1]).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[nn] = w[0];
        for k in 1..=(nn - 1) / 2 {
            let kf = k as f64;
            for (i, vi) in v.iter_mut().enumerate() {
                *vi -= 2.0 * (2.0 * kf * theta[i + 1]).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (i, vi) in v.iter().enumerate() {
        w[i + 1] = 2.0 * vi / nf;
    }
    w
}

/// Running integral on arbitrary increasing nodes using local cubics,
/// integrated exactly by two-point Gauss rules.
pub fn cumulative_integral(t: &[f64], v: &[f64]) -> Vec<f64> {
    let n = t.len();
    assert_eq!(v.len(), n);
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * (t[i] - t[i - 1]) * (v[i] + v[i - 1]);
        }
        return out;
    }
    let g = 0.5 / 3f64.sqrt();
    for i in 0..n - 1 {
        let start = i.saturating_sub(1).min(n - 4);
        let idx = [start, start + 1, start + 2, start + 3];
        let (a, b) = (t[i], t[i + 1]);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for xg in [mid - g * (b - a), mid + g * (b - a)] {
            for p in 0..4 {
                let mut l = 1.0;
                for q in 0..4 {
                    if p != q {
                        l *= (xg - t[idx[q]]) / (t[idx[p]] - t[idx[q]]);
                    }
                }
                acc += l * v[idx[p]];
            }
        }
        out[i + 1] = out[i] + 0.5 * (b - a) * acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> Grid {
        Grid::new(GridSpec::uniform(3.0, n)).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Grid::new(GridSpec::uniform(3.0, 16)).is_err());
        assert!(Grid::new(GridSpec::uniform(-1.0, 64)).is_err());
    }

    #[test]
    fn stencils_exact_on_quartics() {
        let g = uniform(64);
        let v: Vec<f64> = g.t().iter().map(|t| t.powi(4) - 2.0 * t.powi(3) + t).collect();
        let d = g.derivative(&v);
        for (t, dv) in g.t().iter().zip(&d) {
            let exact = 4.0 * t.powi(3) - 6.0 * t * t + 1.0;
            assert!((dv - exact).abs() < 1e-9, "t={t} {dv} {exact}");
        }
    }

    #[test]
    fn quadrature_and_cumulative() {
        for n in [64, 65] {
            let g = uniform(n);
            let v: Vec<f64> = g.t().iter().map(|t| t * t * t + t * t).collect();
            assert!((g.integrate(&v) - 18.0).abs() < 1e-12);
            let c = g.cumulative(&v);
            assert!((c[n - 1] - 18.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_grid_is_spectral() {
        let spec = GridSpec {
            t_max: 10.0,
            n: 96,
            scheme: Scheme::ChebyshevMapped { length_scale: 4.0 },
        };
        let g = Grid::new(spec).unwrap();
        let v: Vec<f64> = g.t().iter().map(|t| (t / 2.0).tanh()).collect();
        let d = g.derivative(&v);
        let err = g
            .t()
            .iter()
            .zip(&d)
            .map(|(t, dv)| (dv - 0.5 / (t / 2.0).cosh().powi(2)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let sech: Vec<f64> = g.t().iter().map(|t| 1.0 / t.cosh()).collect();
        let gd = 2.0 * (10f64.sinh()).atan();
        assert!((g.integrate(&sech) - gd).abs() < 1e-9);
    }

    #[test]
    fn interpolation_is_cubic_exact() {
        let g = uniform(64);
        let v: Vec<f64> = g.t().iter().map(|t| t * t * t - t).collect();
        let x = 0.123;
        assert!((g.interpolate(&v, x) - (x * x * x - x)).abs() < 1e-13);
    }
}
