//! Exterior, Lie and Riemannian calculus for fields depending on `t` only.
//!
//! Every coordinate derivative reduces to `d_i = c_i d/dt` with `c` the
//! gradient of `t`, so all operators below are 1-D differentiation followed by
//! pointwise algebra.

use crate::error::FieldError;
use crate::field::ReducedField;
use crate::geom::{act_on_form, basis, interior, minor, wedge, AltForm, Bivector, Endo4, Linear, Mat4, Metric4, Vec4};

/// Christoffel symbols, `gamma[k][(i, j)]`.
pub type Christoffel = [Mat4; 4];
/// A (1,2)-tensor, `n[i][(a, b)]`.
pub type Tensor12 = [Mat4; 4];

pub fn partial<T: Linear>(f: &ReducedField<T>, axis: usize) -> ReducedField<T> {
    let c = f.domain().c()[axis];
    f.dt().scale(c)
}

/// `df` of a scalar field.
pub fn d_scalar(f: &ReducedField<f64>) -> ReducedField<AltForm> {
    let c = f.domain().c();
    f.dt().map(|d| AltForm::one(c * *d))
}

fn with_rank(mut x: AltForm, k: usize) -> AltForm {
    if x.rank() != k {
        debug_assert_eq!(x.max_abs(), 0.0);
        x = AltForm::zero(k);
    }
    x
}

pub fn exterior_d(a: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    let k = a.values().first().map(|x| x.rank()).unwrap_or(0);
    if k > 3 {
        return Err(crate::error::GeomError::RankOverflow(k + 1).into());
    }
    let c = AltForm::one(a.domain().c());
    // d(alpha(t)) = dt ^ alpha'(t).
    Ok(a.dt().map(|d| wedge(&c, &with_rank(*d, k)).expect("rank checked")))
}

/// `d^c_K alpha = K(d alpha)`.
pub fn d_c(k: &ReducedField<Endo4>, a: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    exterior_d(a)?.zip(k, |f, kk| act_on_form(kk, f))
}

pub fn act_field(k: &ReducedField<Endo4>, a: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    a.zip(k, |f, kk| act_on_form(kk, f))
}

pub fn wedge_field(a: &ReducedField<AltForm>, b: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.values().iter().zip(b.values()) {
        out.push(wedge(x, y)?);
    }
    if !a.same_domain(b) {
        return Err(FieldError::GridMismatch);
    }
    ReducedField::new(a.domain().clone(), out)
}

pub fn interior_field(x: &ReducedField<Vec4>, a: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    if !a.same_domain(x) {
        return Err(FieldError::GridMismatch);
    }
    let mut out = Vec::with_capacity(a.len());
    for (v, f) in x.values().iter().zip(a.values()) {
        out.push(interior(v, f)?);
    }
    ReducedField::new(a.domain().clone(), out)
}

/// Tensors whose Lie derivative along a `t`-dependent vector field has a
/// closed pointwise expression in terms of values and `t`-derivatives.
pub trait LieTensor: Linear {
    /// `L_X T` given `X`, `X'`, `T`, `T'` and the gradient `c` of `t`.
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self;
}

impl LieTensor for f64 {
    fn lie(x: &Vec4, _dx: &Vec4, _t: &Self, dt: &Self, c: &Vec4) -> Self {
        c.dot(x) * dt
    }
}

impl LieTensor for Vec4 {
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self {
        c.dot(x) * dt - c.dot(t) * dx
    }
}

impl LieTensor for Endo4 {
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self {
        let k = &t.0;
        Endo4(c.dot(x) * dt.0 - dx * (k.transpose() * c).transpose() + (k * dx) * c.transpose())
    }
}

impl LieTensor for Metric4 {
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self {
        let b = &t.0;
        Metric4(c.dot(x) * dt.0 + c * (b.transpose() * dx).transpose() + (b * dx) * c.transpose())
    }
}

impl LieTensor for Bivector {
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self {
        let s = &t.0;
        Bivector(c.dot(x) * dt.0 - dx * (s.transpose() * c).transpose() - (s * c) * dx.transpose())
    }
}

impl LieTensor for AltForm {
    fn lie(x: &Vec4, dx: &Vec4, t: &Self, dt: &Self, c: &Vec4) -> Self {
        let k = t.rank();
        let dt = with_rank(*dt, k);
        let mut out = dt.scaled(c.dot(x));
        let mut extra = AltForm::zero(k);
        for (s, &mask) in basis(k).iter().enumerate() {
            let idx: Vec<usize> = (0..4).filter(|i| mask & (1 << i) != 0).collect();
            let mut acc = 0.0;
            for m in 0..k {
                let mut j_idx = idx.clone();
                for j in 0..4 {
                    j_idx[m] = j;
                    acc += t.get(&j_idx) * c[idx[m]] * dx[j];
                }
            }
            extra.components_mut()[s] = acc;
        }
        out.add_scaled(1.0, &extra);
        out
    }
}

pub fn lie_derivative<T: LieTensor>(x: &ReducedField<Vec4>, t: &ReducedField<T>) -> Result<ReducedField<T>, FieldError> {
    if !x.same_domain(t) {
        return Err(FieldError::GridMismatch);
    }
    let c = x.domain().c();
    let (dx, dtt) = (x.dt(), t.dt());
    let data = (0..t.len())
        .map(|i| T::lie(&x.at(i), &dx.at(i), &t.at(i), &dtt.at(i), &c))
        .collect();
    ReducedField::new(t.domain().clone(), data)
}

/// Lie bracket `[X, Y]` of vector fields.
pub fn bracket(x: &ReducedField<Vec4>, y: &ReducedField<Vec4>) -> Result<ReducedField<Vec4>, FieldError> {
    lie_derivative(x, y)
}

/// Nijenhuis tensor `N(X,Y) = [JX,JY] - J[JX,Y] - J[X,JY] - [X,Y]` on
/// coordinate fields.
pub fn nijenhuis(j: &ReducedField<Endo4>) -> ReducedField<Tensor12> {
    let c = j.domain().c();
    let dj = j.dt();
    j.zip(&dj, |jj, d| {
        let (jm, dm) = (&jj.0, &d.0);
        let cj = jm.transpose() * c;
        let jd = jm * dm;
        let mut n = [Mat4::zeros(); 4];
        for (i, ni) in n.iter_mut().enumerate() {
            for a in 0..4 {
                for b in 0..4 {
                    ni[(a, b)] = cj[a] * dm[(i, b)] - cj[b] * dm[(i, a)] + c[b] * jd[(i, a)] - c[a] * jd[(i, b)];
                }
            }
        }
        n
    })
    .expect("same domain")
}

/// Pointwise norm of a (1,2)-tensor.
pub fn tensor12_norm(g: &Mat4, ginv: &Mat4, n: &Tensor12) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            if g[(i, j)] != 0.0 {
                acc += g[(i, j)] * (n[i].transpose() * ginv * n[j] * ginv).trace();
            }
        }
    }
    acc.max(0.0).sqrt()
}

fn inverse_field(g: &ReducedField<Metric4>) -> Result<ReducedField<Mat4>, FieldError> {
    let mut out = Vec::with_capacity(g.len());
    for (i, m) in g.values().iter().enumerate() {
        out.push(m.inverse().map_err(|_| FieldError::DegenerateMetric { index: i, t: g.t()[i] })?);
    }
    ReducedField::new(g.domain().clone(), out)
}

pub fn levi_civita(g: &ReducedField<Metric4>) -> Result<ReducedField<Christoffel>, FieldError> {
    let c = g.domain().c();
    let ginv = inverse_field(g)?;
    let dg = g.dt();
    ginv.zip(&dg, |gi, d| {
        let d = &d.0;
        let u = gi * c;
        let m = gi * d;
        let mut gam = [Mat4::zeros(); 4];
        for (k, gk) in gam.iter_mut().enumerate() {
            for i in 0..4 {
                for j in 0..4 {
                    gk[(i, j)] = 0.5 * (c[i] * m[(k, j)] + c[j] * m[(k, i)] - u[k] * d[(i, j)]);
                }
            }
        }
        gam
    })
}

pub fn ricci(g: &ReducedField<Metric4>) -> Result<ReducedField<Mat4>, FieldError> {
    let c = g.domain().c();
    let gam = levi_civita(g)?;
    let dgam = gam.dt();
    gam.zip(&dgam, |gm, dg| {
        let mut r = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut v = 0.0;
                for k in 0..4 {
                    v += c[k] * dg[k][(i, j)] - c[j] * dg[k][(i, k)];
                    for l in 0..4 {
                        v += gm[k][(k, l)] * gm[l][(i, j)] - gm[k][(j, l)] * gm[l][(i, k)];
                    }
                }
                r[(i, j)] = v;
            }
        }
        r
    })
}

/// Covariant Hessian of a scalar.
pub fn hessian(g: &ReducedField<Metric4>, f: &ReducedField<f64>) -> Result<ReducedField<Mat4>, FieldError> {
    let c = g.domain().c();
    let gam = levi_civita(g)?;
    let df = f.dt();
    let ddf = df.dt();
    let first = gam.zip(&df, |gm, d| (*gm, *d))?;
    first.zip(&ddf, |(gm, d), dd| {
        let mut h = c * c.transpose() * *dd;
        for k in 0..4 {
            h -= gm[k] * (c[k] * d);
        }
        h
    })
}

/// `(H^2)_{jk} = H_{jpq} H_k^{pq}`.
pub fn h_squared(g: &ReducedField<Metric4>, h: &ReducedField<AltForm>) -> Result<ReducedField<Mat4>, FieldError> {
    let ginv = inverse_field(g)?;
    h.zip(&ginv, |hh, gi| {
        let mut raised = [[[0.0; 4]; 4]; 4];
        for (k, rk) in raised.iter_mut().enumerate() {
            for p in 0..4 {
                for q in 0..4 {
                    let mut v = 0.0;
                    for r in 0..4 {
                        for s in 0..4 {
                            v += hh.get(&[k, r, s]) * gi[(p, r)] * gi[(q, s)];
                        }
                    }
                    rk[p][q] = v;
                }
            }
        }
        Mat4::from_fn(|j, k| {
            let mut v = 0.0;
            for p in 0..4 {
                for q in 0..4 {
                    v += hh.get(&[j, p, q]) * raised[k][p][q];
                }
            }
            v
        })
    })
}

/// Applies `Lambda^k m` to basis components (raises or lowers every index).
fn transform_form(m: &Mat4, a: &AltForm) -> AltForm {
    let k = a.rank();
    let mut out = AltForm::zero(k);
    let b = basis(k);
    for (s, &mi) in b.iter().enumerate() {
        let mut acc = 0.0;
        for (&mj, cj) in b.iter().zip(a.components()) {
            acc += cj * minor(m, mi, mj);
        }
        out.components_mut()[s] = acc;
    }
    out
}

/// Codifferential `d*` (formal adjoint of `d`), computed as the divergence
/// `-(1/sqrt g) d_j (sqrt g alpha^{j...})` of the fully raised form.
pub fn codifferential(g: &ReducedField<Metric4>, a: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, FieldError> {
    let ginv = inverse_field(g)?;
    let c = g.domain().c();
    let k = a.values().first().map(|x| x.rank()).unwrap_or(0);
    if k == 0 {
        return Err(crate::error::GeomError::RankMismatch { expected: 1, got: 0 }.into());
    }
    let vol = g.map(|m| m.volume_density());
    let raised = a.zip(&ginv, |f, gi| transform_form(gi, f))?;
    let dens = raised.zip(&vol, |f, v| f.scaled(*v))?;
    let div = dens.dt().map(|d| interior(&c, &with_rank(*d, k)).expect("rank >= 1"));
    let scaled = div.zip(&vol, |d, v| d.scaled(-1.0 / v))?;
    scaled.zip(g, |d, m| transform_form(&m.0, d))
}

/// `int_M h dV_coord` for a `t`-dependent coordinate density `h`.
pub fn integrate_m(density: &ReducedField<f64>) -> Result<f64, FieldError> {
    density.check_finite("density")?;
    Ok(density.domain().deck_factor * density.integrate_t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Domain, FrameConstants, GridSpec};
    use std::sync::Arc;

    fn domain(n: usize) -> Arc<Domain> {
        Domain::new(GridSpec::uniform(4.0, n), FrameConstants::from_ratio(0.7), 1.0).unwrap()
    }

    #[test]
    fn partial_of_square() {
        let d = domain(128);
        let f = ReducedField::from_fn(&d, |t| t * t);
        let p = partial(&f, 2);
        for (t, v) in d.t().iter().zip(p.values()) {
            assert!((v + 4.0 * t).abs() < 1e-10);
        }
        assert_eq!(partial(&f, 1).max_abs_interior(), 0.0);
        assert_eq!(partial(&f, 3).max_abs_interior(), 0.0);
    }

    #[test]
    fn d_squared_vanishes() {
        let d = domain(256);
        let a = ReducedField::from_fn(&d, |t| AltForm::dx(2).scaled(t.sin() * (-t * t / 4.0).exp()));
        let dd = exterior_d(&exterior_d(&a).unwrap()).unwrap();
        assert!(dd.max_abs_interior() < 1e-10);
        assert_eq!(dd.at(0).rank(), 3);
    }

    #[test]
    fn cartan_formula() {
        let d = domain(1024);
        let x = ReducedField::from_fn(&d, |t| Vec4::new(t.cos(), 0.3, (0.5 * t).sin(), t * 0.1));
        let a = ReducedField::from_fn(&d, |t| {
            wedge(&AltForm::dx(0), &AltForm::dx(3)).unwrap().scaled(t.tanh())
                + wedge(&AltForm::dx(1), &AltForm::dx(2)).unwrap().scaled((-t * t).exp())
        });
        let lie = lie_derivative(&x, &a).unwrap();
        let cartan = interior_field(&x, &exterior_d(&a).unwrap())
            .unwrap()
            .add(&exterior_d(&interior_field(&x, &a).unwrap()).unwrap())
            .unwrap();
        let err = lie.sub(&cartan).unwrap().max_abs_interior();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn y_directions_are_symmetries() {
        let d = domain(128);
        let x = ReducedField::constant(&d, Vec4::new(0.0, 1.0, 0.0, 0.0));
        let g = ReducedField::from_fn(&d, |t| Metric4::diagonal([1.0 + t * t, 2.0, 1.0, 3.0 + t.sin()]));
        assert_eq!(lie_derivative(&x, &g).unwrap().max_abs_interior(), 0.0);
    }

    #[test]
    fn flat_metric_has_no_curvature() {
        let d = domain(64);
        let g = ReducedField::constant(&d, Metric4::diagonal([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(ricci(&g).unwrap().max_abs_interior(), 0.0);
        let f = ReducedField::constant(&d, 2.5);
        assert_eq!(hessian(&g, &f).unwrap().max_abs_interior(), 0.0);
        let h = ReducedField::constant(&d, AltForm::zero(3));
        assert_eq!(h_squared(&g, &h).unwrap().max_abs_interior(), 0.0);
    }

    #[test]
    fn integrability_of_constant_structure() {
        let d = domain(64);
        let i = ReducedField::constant(&d, Endo4::standard());
        assert_eq!(nijenhuis(&i).max_abs_interior(), 0.0);
    }
}
