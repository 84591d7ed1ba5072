//! The explicit generalized Kahler family on a diagonal Hopf surface.
//!
//! Coordinates `w_k = x_k + i y_k`, `a = log|alpha|`, `b = log|beta|`,
//! `r = b/a` and `t = 2(r x1 - x2)`. Given a profile `p(t)` in (-1, 1) the
//! family is
//!
//! ```text
//! g = r(1+p)/2 (dx1^2 + dy1^2) + (1-p)/(2r) (dx2^2 + dy2^2)
//! ```
//!
//! with `I` standard and `J` determined by the two covectors
//! `dw1 - dw2bar/r` and `r(1+p)/2 dw1bar + (1-p)/2 dw2`.

use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{FieldError, HopfError};
use crate::field::calculus::{
    d_scalar, exterior_d, integrate_m, lie_derivative, nijenhuis, tensor12_norm,
};
use crate::field::{Domain, FrameConstants, GridSpec, ReducedField};
use crate::geom::{
    act_on_form, angle, bivector_norm, endo_norm, form_norm, sym_part, two_tensor_norm, top_density,
    vector_norm, wedge, AltForm, Bivector, Endo4, Linear, Mat4, Metric4, Vec4,
};
use crate::report::Report;

type CMat4 = nalgebra::Matrix4<Complex<f64>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopfParams {
    pub alpha_abs: f64,
    pub beta_abs: f64,
    pub a: f64,
    pub b: f64,
}

impl HopfParams {
    /// Moduli `0 < |alpha| <= |beta| < 1` of the two contraction factors.
    pub fn new(alpha_abs: f64, beta_abs: f64) -> Result<HopfParams, HopfError> {
        if !(alpha_abs > 0.0 && alpha_abs <= beta_abs && beta_abs < 1.0) {
            return Err(HopfError::InvalidParams(format!(
                "need 0 < |alpha| <= |beta| < 1, got |alpha| = {alpha_abs}, |beta| = {beta_abs}"
            )));
        }
        Ok(HopfParams { alpha_abs, beta_abs, a: alpha_abs.ln(), b: beta_abs.ln() })
    }

    pub fn from_logs(a: f64, b: f64) -> Result<HopfParams, HopfError> {
        HopfParams::new(a.exp(), b.exp()).map(|mut p| {
            p.a = a;
            p.b = b;
            p
        })
    }

    /// `r = b/a` in (0, 1].
    pub fn ratio(&self) -> f64 {
        self.b / self.a
    }

    /// Coordinate volume of a fundamental domain per unit `t`: `(2 pi)^2 |a| / 2`.
    pub fn deck_factor(&self) -> f64 {
        (2.0 * PI).powi(2) * self.a.abs() / 2.0
    }

    pub fn frame(&self) -> FrameConstants {
        FrameConstants::from_ratio(self.ratio())
    }

    pub fn domain(&self, spec: GridSpec) -> Result<Arc<Domain>, FieldError> {
        Domain::new(spec, self.frame(), self.deck_factor())
    }

    /// The Killing frame `{d/dy1, d/dy2, a d/dx1 + b d/dx2}`.
    pub fn killing_frame(&self) -> [Vec4; 3] {
        [Vec4::new(0.0, 1.0, 0.0, 0.0), Vec4::new(0.0, 0.0, 0.0, 1.0), Vec4::new(self.a, 0.0, self.b, 0.0)]
    }
}

/// Angle profile with accurately stored margins `1 + p` and `1 - p`.
#[derive(Clone, Debug)]
pub struct Profile {
    pub p: ReducedField<f64>,
    pub one_plus: ReducedField<f64>,
    pub one_minus: ReducedField<f64>,
    pub f: Option<ReducedField<f64>>,
}

impl Profile {
    pub fn new(p: ReducedField<f64>) -> Result<Profile, HopfError> {
        let one_plus = p.map(|v| 1.0 + v);
        let one_minus = p.map(|v| 1.0 - v);
        Profile::with_margins(p, one_plus, one_minus)
    }

    pub fn with_margins(
        p: ReducedField<f64>,
        one_plus: ReducedField<f64>,
        one_minus: ReducedField<f64>,
    ) -> Result<Profile, HopfError> {
        if !p.same_domain(&one_plus) || !p.same_domain(&one_minus) {
            return Err(FieldError::GridMismatch.into());
        }
        for (k, &v) in p.values().iter().enumerate() {
            let ok = v.is_finite() && v.abs() < 1.0 && one_plus.at(k) > 0.0 && one_minus.at(k) > 0.0;
            if !ok {
                return Err(HopfError::ProfileRange { t: p.t()[k], p: v });
            }
        }
        Ok(Profile { p, one_plus, one_minus, f: None })
    }

    /// `p = amplitude * tanh(t / scale)`.
    pub fn tanh(domain: &Arc<Domain>, amplitude: f64, scale: f64) -> Result<Profile, HopfError> {
        let x = |t: f64| t / scale;
        let p = ReducedField::from_fn(domain, |t| amplitude * x(t).tanh());
        // 1 + A tanh(x) = (1 - A) + 2A / (1 + e^{-2x}), without cancellation.
        let one_plus = ReducedField::from_fn(domain, |t| (1.0 - amplitude) + 2.0 * amplitude / (1.0 + (-2.0 * x(t)).exp()));
        let one_minus = ReducedField::from_fn(domain, |t| (1.0 - amplitude) + 2.0 * amplitude / (1.0 + (2.0 * x(t)).exp()));
        Profile::with_margins(p, one_plus, one_minus)
    }

    /// Profile from `u = log((1+p)/(1-p))`.
    pub fn from_log_ratio(u: &ReducedField<f64>) -> Result<Profile, HopfError> {
        let p = u.map(|v| (0.5 * v).tanh());
        let one_plus = u.map(|v| 2.0 / (1.0 + (-v).exp()));
        let one_minus = u.map(|v| 2.0 / (1.0 + v.exp()));
        Profile::with_margins(p, one_plus, one_minus)
    }

    pub fn with_potential(mut self, f: ReducedField<f64>) -> Profile {
        self.f = Some(f);
        self
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.p.domain()
    }

    /// `log((1+p)/(1-p))`.
    pub fn log_ratio(&self) -> ReducedField<f64> {
        self.one_plus.zip(&self.one_minus, |a, b| (a / b).ln()).expect("same domain")
    }
}

pub fn build_i(domain: &Arc<Domain>) -> ReducedField<Endo4> {
    ReducedField::constant(domain, Endo4::standard())
}

fn complex_row(re: [f64; 4], im: [f64; 4]) -> [Complex<f64>; 4] {
    [0, 1, 2, 3].map(|k| Complex::new(re[k], im[k]))
}

/// The two covectors spanning the (0,1)-forms of `J`, as complex rows.
pub fn j_covectors(one_plus: f64, one_minus: f64, r: f64) -> [[Complex<f64>; 4]; 2] {
    let (c, d) = (0.5 * r * one_plus, 0.5 * one_minus);
    [
        complex_row([1.0, 0.0, -1.0 / r, 0.0], [0.0, 1.0, 0.0, 1.0 / r]),
        complex_row([c, 0.0, d, 0.0], [0.0, -c, 0.0, d]),
    ]
}

/// Pointwise `J` from its eigen-covectors: the rows `eta` of
/// [`j_covectors`] and their conjugates satisfy `eta(J X) = -i eta(X)` and
/// `conj(eta)(J X) = i conj(eta)(X)`.
pub fn j_matrix(one_plus: f64, one_minus: f64, r: f64) -> Option<Endo4> {
    let eta = j_covectors(one_plus, one_minus, r);
    let mut e = CMat4::zeros();
    for k in 0..4 {
        e[(0, k)] = eta[0][k];
        e[(1, k)] = eta[1][k];
        e[(2, k)] = eta[0][k].conj();
        e[(3, k)] = eta[1][k].conj();
    }
    let scale = e.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if e.determinant().norm() <= 1e-14 * scale.powi(4) {
        return None;
    }
    let inv = e.try_inverse()?;
    let i = Complex::new(0.0, 1.0);
    let d = CMat4::from_diagonal(&nalgebra::Vector4::new(-i, -i, i, i));
    let j = inv * d * e;
    Some(Endo4(j.map(|z| z.re)))
}

/// Closed form of [`j_matrix`]. Every entry is a margin or `p` itself, so
/// the small entries near `p = +-1` keep full relative precision.
pub fn j_closed_form(p: f64, one_plus: f64, one_minus: f64, r: f64) -> Endo4 {
    let (q, s) = (one_minus / r, r * one_plus);
    Endo4(Mat4::new(
        0.0, -p, 0.0, q, //
        p, 0.0, q, 0.0, //
        0.0, -s, 0.0, -p, //
        -s, 0.0, p, 0.0,
    ))
}

pub fn build_j(params: &HopfParams, profile: &Profile) -> Result<ReducedField<Endo4>, HopfError> {
    let r = params.ratio();
    let p = &profile.p;
    Ok(p.zip(&profile.one_plus, |p, op| (*p, *op))?
        .zip(&profile.one_minus, |(p, op), om| j_closed_form(*p, *op, *om, r))?)
}

pub fn build_metric(params: &HopfParams, profile: &Profile) -> Result<ReducedField<Metric4>, HopfError> {
    let r = params.ratio();
    let mut out = Vec::with_capacity(profile.p.len());
    for k in 0..profile.p.len() {
        let (ca, cb) = (0.5 * r * profile.one_plus.at(k), 0.5 * profile.one_minus.at(k) / r);
        if !(ca > 0.0 && cb > 0.0) {
            return Err(HopfError::ProfileRange { t: profile.p.t()[k], p: profile.p.at(k) });
        }
        out.push(Metric4::diagonal([ca, ca, cb, cb]));
    }
    Ok(ReducedField::new(profile.domain().clone(), out)?)
}

/// Solves `theta ^ omega = d omega` sample by sample.
pub fn lee_form(omega: &ReducedField<AltForm>) -> Result<ReducedField<AltForm>, HopfError> {
    let d_omega = exterior_d(omega)?;
    let t = omega.t();
    let data: Result<Vec<AltForm>, HopfError> = (0..omega.len())
        .into_par_iter()
        .map(|k| {
            let w = omega.at(k);
            let mut l = Mat4::zeros();
            for j in 0..4 {
                let col = wedge(&AltForm::dx(j), &w).expect("rank 3");
                for (row, v) in col.components().iter().enumerate() {
                    l[(row, j)] = *v;
                }
            }
            let rhs = Vec4::from_column_slice(d_omega.at(k).components());
            l.lu().solve(&rhs).map(AltForm::one).ok_or(HopfError::LeeSingular { t: t[k] })
        })
        .collect();
    Ok(ReducedField::new(omega.domain().clone(), data?)?)
}

/// A GK triple `(g, I, J)` together with every derived tensor.
#[derive(Clone, Debug)]
pub struct GkState {
    pub params: HopfParams,
    pub g: ReducedField<Metric4>,
    pub i: ReducedField<Endo4>,
    pub j: ReducedField<Endo4>,
    pub ginv: ReducedField<Mat4>,
    pub omega_i: ReducedField<AltForm>,
    pub omega_j: ReducedField<AltForm>,
    pub h: ReducedField<AltForm>,
    pub theta_i: ReducedField<AltForm>,
    pub theta_j: ReducedField<AltForm>,
    pub sigma: ReducedField<Bivector>,
    /// Real and imaginary parts of `sigma_I = sigma - i I sigma`.
    pub sigma_i_re: ReducedField<Mat4>,
    pub sigma_i_im: ReducedField<Mat4>,
    pub f_plus: ReducedField<AltForm>,
    pub f_minus: ReducedField<AltForm>,
    pub det_plus: ReducedField<f64>,
    pub det_minus: ReducedField<f64>,
    pub angle: ReducedField<f64>,
    /// Riemannian volume density `sqrt(det g)`.
    pub volume: ReducedField<f64>,
    pub profile: Option<Profile>,
}

/// Builds the family member for `profile`.
pub fn derive_state(params: &HopfParams, profile: &Profile) -> Result<GkState, HopfError> {
    let g = build_metric(params, profile)?;
    let i = build_i(profile.domain());
    let j = build_j(params, profile)?;
    let mut s = GkState::from_structures(*params, g, i, j)?;
    s.profile = Some(profile.clone());
    Ok(s)
}

impl GkState {
    pub fn from_structures(
        params: HopfParams,
        g: ReducedField<Metric4>,
        i: ReducedField<Endo4>,
        j: ReducedField<Endo4>,
    ) -> Result<GkState, HopfError> {
        if !g.same_domain(&i) || !g.same_domain(&j) {
            return Err(FieldError::GridMismatch.into());
        }
        let n = g.len();
        let t = g.t().to_vec();
        let mut ginv = Vec::with_capacity(n);
        for k in 0..n {
            ginv.push(g.at(k).inverse().map_err(|_| FieldError::DegenerateMetric { index: k, t: t[k] })?);
        }
        let ginv = ReducedField::new(g.domain().clone(), ginv)?;
        let omega_i = g.zip(&i, |gg, ii| gg.fundamental_form(ii))?;
        let omega_j = g.zip(&j, |gg, jj| gg.fundamental_form(jj))?;
        let h = exterior_d(&omega_i)?.zip(&i, |d, ii| act_on_form(ii, d))?;
        let theta_i = lee_form(&omega_i)?;
        let theta_j = lee_form(&omega_j)?;

        let mut sigma = Vec::with_capacity(n);
        let mut s_re = Vec::with_capacity(n);
        let mut s_im = Vec::with_capacity(n);
        let mut fp = Vec::with_capacity(n);
        let mut fm = Vec::with_capacity(n);
        let mut dp = Vec::with_capacity(n);
        let mut dm = Vec::with_capacity(n);
        let mut ang = Vec::with_capacity(n);
        let mut vol = Vec::with_capacity(n);
        for k in 0..n {
            let (gg, ii, jj, gi) = (g.at(k), i.at(k), j.at(k), ginv.at(k));
            let s = Bivector::poisson(&ii, &jj, &gi);
            s_re.push(s.0);
            s_im.push(-(ii.0 * s.0));
            sigma.push(s);
            for (sign, sym, fs, ds) in [(1.0, '+', &mut fp, &mut dp), (-1.0, '-', &mut fm, &mut dm)] {
                let m = ii.0 + sign * jj.0;
                let det = m.determinant();
                let inv = m.try_inverse();
                match inv {
                    Some(inv) if det > 0.0 && det.is_finite() => {
                        fs.push(AltForm::from_matrix(&(-2.0 * inv.transpose() * gg.0)));
                        ds.push(det);
                    }
                    _ => return Err(HopfError::LogDegenerate { sign: sym, t: t[k] }),
                }
            }
            ang.push(angle(&ii, &jj));
            vol.push(gg.volume_density());
        }
        let dom = g.domain().clone();
        let mk = |v: Vec<f64>| ReducedField::new(dom.clone(), v);
        Ok(GkState {
            params,
            sigma: ReducedField::new(dom.clone(), sigma)?,
            sigma_i_re: ReducedField::new(dom.clone(), s_re)?,
            sigma_i_im: ReducedField::new(dom.clone(), s_im)?,
            f_plus: ReducedField::new(dom.clone(), fp)?,
            f_minus: ReducedField::new(dom.clone(), fm)?,
            det_plus: mk(dp)?,
            det_minus: mk(dm)?,
            angle: mk(ang)?,
            volume: mk(vol)?,
            g,
            i,
            j,
            ginv,
            omega_i,
            omega_j,
            h,
            theta_i,
            theta_j,
            profile: None,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        self.g.domain()
    }

    pub fn t(&self) -> &[f64] {
        self.g.t()
    }

    /// Total Riemannian volume.
    pub fn volume_total(&self) -> f64 {
        integrate_m(&self.volume).unwrap_or(f64::NAN)
    }

    /// The same complex structures with metric `c g`.
    pub fn scaled(&self, c: f64) -> Result<GkState, HopfError> {
        let mut s = GkState::from_structures(self.params, self.g.scale(c), self.i.clone(), self.j.clone())?;
        s.profile = self.profile.clone();
        Ok(s)
    }

    /// `|sigma_I|^2_g` with the normalization `(1/8) sigma^{ij} conj(sigma^{kl}) g_ik g_jl`.
    pub fn sigma_i_norm_sq(&self) -> ReducedField<f64> {
        let dom = self.domain().clone();
        let data = (0..self.g.len())
            .map(|k| {
                let g = self.g.at(k).0;
                let (re, im) = (self.sigma_i_re.at(k), self.sigma_i_im.at(k));
                0.125 * ((g * re * g * re.transpose()).trace() + (g * im * g * im.transpose()).trace())
            })
            .collect();
        ReducedField::new(dom, data).expect("same domain")
    }

    /// Coefficient of `sigma_I` against `dw1 ^ dw2`-dual bivector
    /// `d/dw1 ^ d/dw2`, and the relative size of the remainder.
    pub fn sigma_i_coefficient(&self) -> (Vec<Complex<f64>>, Vec<f64>) {
        let pi = holomorphic_bivector();
        let norm: f64 = pi.iter().map(|z| z.norm_sqr()).sum();
        let mut coef = Vec::with_capacity(self.g.len());
        let mut rest = Vec::with_capacity(self.g.len());
        for k in 0..self.g.len() {
            let s = CMat4::from_fn(|a, b| Complex::new(self.sigma_i_re.at(k)[(a, b)], self.sigma_i_im.at(k)[(a, b)]));
            let c: Complex<f64> = s.iter().zip(pi.iter()).map(|(x, y)| x * y.conj()).sum::<Complex<f64>>() / norm;
            let r = s - pi * c;
            let sn = s.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            rest.push(r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt() / sn.max(f64::MIN_POSITIVE));
            coef.push(c);
        }
        (coef, rest)
    }

    /// `X_I = I(theta_I# - grad f)/2` and `X_J = J(theta_J# - grad f)/2`.
    pub fn soliton_vector_fields(&self, f: &ReducedField<f64>) -> Result<(ReducedField<Vec4>, ReducedField<Vec4>), HopfError> {
        let df = d_scalar(f);
        let mut xi = Vec::with_capacity(f.len());
        let mut xj = Vec::with_capacity(f.len());
        for k in 0..f.len() {
            let gi = self.ginv.at(k);
            let grad = gi * df.at(k).as_covector()?;
            let ti = gi * self.theta_i.at(k).as_covector()?;
            let tj = gi * self.theta_j.at(k).as_covector()?;
            xi.push(0.5 * self.i.at(k).apply(&(ti - grad)));
            xj.push(0.5 * self.j.at(k).apply(&(tj - grad)));
        }
        let dom = self.domain().clone();
        Ok((ReducedField::new(dom.clone(), xi)?, ReducedField::new(dom, xj)?))
    }

    /// The two symplectic densities `top_density(F+-)`.
    pub fn symplectic_densities(&self) -> (ReducedField<f64>, ReducedField<f64>) {
        (self.f_plus.map(top_density), self.f_minus.map(top_density))
    }

    /// `sigma^{-1}` as a 2-form (the inverse-transpose of the bivector
    /// matrix), or `None` where `sigma` degenerates.
    pub fn sigma_inverse(&self, k: usize) -> Option<Mat4> {
        self.sigma.at(k).0.try_inverse().map(|m| m.transpose())
    }
}

/// `d/dw1 ^ d/dw2` as a complex antisymmetric matrix.
pub fn holomorphic_bivector() -> CMat4 {
    let u = nalgebra::Vector4::new(Complex::new(0.5, 0.0), Complex::new(0.0, -0.5), Complex::new(0.0, 0.0), Complex::new(0.0, 0.0));
    let v = nalgebra::Vector4::new(Complex::new(0.0, 0.0), Complex::new(0.0, 0.0), Complex::new(0.5, 0.0), Complex::new(0.0, -0.5));
    u * v.transpose() - v * u.transpose()
}

/// Hamiltonian potentials with their normalization constants.
#[derive(Clone, Debug)]
pub struct Potentials {
    pub plus: ReducedField<f64>,
    pub minus: ReducedField<f64>,
    pub c_plus: f64,
    pub c_minus: f64,
    pub reference_volume: f64,
}

impl Potentials {
    /// Adds the constants making `int e^{psi} top_density(F)` equal to the
    /// reference volume.
    pub fn normalized(
        state: &GkState,
        raw_plus: ReducedField<f64>,
        raw_minus: ReducedField<f64>,
        reference_volume: f64,
    ) -> Result<Potentials, HopfError> {
        let (rho_p, rho_m) = state.symplectic_densities();
        let mass = |raw: &ReducedField<f64>, rho: &ReducedField<f64>| -> Result<f64, HopfError> {
            let dens = raw.zip(rho, |a, b| a.exp() * b)?;
            Ok(integrate_m(&dens)?)
        };
        let (mp, mm) = (mass(&raw_plus, &rho_p)?, mass(&raw_minus, &rho_m)?);
        if !(mp > 0.0 && mm > 0.0 && reference_volume > 0.0) {
            return Err(HopfError::Normalization(format!(
                "masses {mp:e}, {mm:e}, reference {reference_volume:e}"
            )));
        }
        let (cp, cm) = ((reference_volume / mp).ln(), (reference_volume / mm).ln());
        Ok(Potentials {
            plus: raw_plus.map(|v| v + cp),
            minus: raw_minus.map(|v| v + cm),
            c_plus: cp,
            c_minus: cm,
            reference_volume,
        })
    }

    /// `e^{psi+} top_density(F+)` and `e^{psi-} top_density(F-)`.
    pub fn densities(&self, state: &GkState) -> (ReducedField<f64>, ReducedField<f64>) {
        let (rp, rm) = state.symplectic_densities();
        (
            self.plus.zip(&rp, |a, b| a.exp() * b).expect("same domain"),
            self.minus.zip(&rm, |a, b| a.exp() * b).expect("same domain"),
        )
    }
}

/// `psi+- = log det(I +- J) / 2 - f`, normalized against `reference_volume`
/// (the state's own volume when `None`).
pub fn psi_pm(state: &GkState, f: &ReducedField<f64>, reference_volume: Option<f64>) -> Result<Potentials, HopfError> {
    let t = state.t();
    for (k, (dp, dm)) in state.det_plus.values().iter().zip(state.det_minus.values()).enumerate() {
        if !(*dp > 0.0 && *dm > 0.0) {
            return Err(HopfError::NonpositiveDeterminant { t: t[k] });
        }
    }
    let raw_p = state.det_plus.zip(f, |d, f| 0.5 * d.ln() - f)?;
    let raw_m = state.det_minus.zip(f, |d, f| 0.5 * d.ln() - f)?;
    Potentials::normalized(state, raw_p, raw_m, reference_volume.unwrap_or_else(|| state.volume_total()))
}

fn sharp_field(state: &GkState, a: &ReducedField<AltForm>) -> ReducedField<Vec4> {
    a.zip(&state.ginv, |f, gi| gi * f.as_covector().expect("1-form")).expect("same domain")
}

fn log_field(v: &ReducedField<f64>) -> ReducedField<f64> {
    v.map(|x| x.ln())
}

/// How derivatives of derived scalars (`log det(I +- J)`, `Phi`, `p`,
/// `log |sigma_I|^2`) are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMode {
    /// Chain rule through the pointwise algebra from the `t`-derivatives of
    /// `g`, `I`, `J` (Jacobi's formula for determinants). Identities then hold
    /// to rounding.
    ChainRule,
    /// Difference the derived scalar itself; identities then hold to the
    /// truncation error of the stencil.
    DirectDifference,
}

/// Exterior derivatives of the derived scalars used by the identity checks.
pub struct DerivedDerivatives {
    pub dlog_det_plus: ReducedField<AltForm>,
    pub dlog_det_minus: ReducedField<AltForm>,
    pub dphi: ReducedField<AltForm>,
    pub dp: ReducedField<AltForm>,
    pub dlog_sigma_norm: ReducedField<AltForm>,
}

impl DerivedDerivatives {
    pub fn new(s: &GkState, mode: DerivativeMode) -> Result<DerivedDerivatives, HopfError> {
        match mode {
            DerivativeMode::DirectDifference => {
                let phi = s.det_minus.zip(&s.det_plus, |m, p| 0.5 * (m / p).ln())?;
                Ok(DerivedDerivatives {
                    dlog_det_plus: d_scalar(&log_field(&s.det_plus)),
                    dlog_det_minus: d_scalar(&log_field(&s.det_minus)),
                    dphi: d_scalar(&phi),
                    dp: d_scalar(&s.angle),
                    dlog_sigma_norm: d_scalar(&log_field(&s.sigma_i_norm_sq())),
                })
            }
            DerivativeMode::ChainRule => {
                let c = s.domain().c();
                let (dg, di, dj) = (s.g.dt(), s.i.dt(), s.j.dt());
                let n = s.g.len();
                let (mut lp, mut lm, mut ph, mut pp, mut ls) =
                    (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
                for k in 0..n {
                    let (g, i, j, gi) = (s.g.at(k).0, s.i.at(k).0, s.j.at(k).0, s.ginv.at(k));
                    let (g1, i1, j1) = (dg.at(k).0, di.at(k).0, dj.at(k).0);
                    let t = s.t()[k];
                    let jac = |m: Mat4, m1: Mat4, sign: char| -> Result<f64, HopfError> {
                        let inv = m.try_inverse().ok_or(HopfError::LogDegenerate { sign, t })?;
                        Ok((inv * m1).trace())
                    };
                    let vp = jac(i + j, i1 + j1, '+')?;
                    let vm = jac(i - j, i1 - j1, '-')?;
                    // sigma = [I,J] g^-1 / 2 and its I-twist, differentiated.
                    let br = i * j - j * i;
                    let br1 = i1 * j + i * j1 - j1 * i - j * i1;
                    let sg = 0.5 * br * gi;
                    let sg1 = 0.5 * br1 * gi - 0.5 * br * gi * g1 * gi;
                    let tw = -(i * sg);
                    let tw1 = -(i1 * sg + i * sg1);
                    let quad = |m: Mat4, m1: Mat4| {
                        (g1 * m * g * m.transpose()).trace()
                            + (g * m1 * g * m.transpose()).trace()
                            + (g * m * g1 * m.transpose()).trace()
                            + (g * m * g * m1.transpose()).trace()
                    };
                    let n2 = 0.125 * ((g * sg * g * sg.transpose()).trace() + (g * tw * g * tw.transpose()).trace());
                    let n21 = 0.125 * (quad(sg, sg1) + quad(tw, tw1));
                    let p1 = -0.25 * (i1 * j + i * j1).trace();
                    lp.push(AltForm::one(c * vp));
                    lm.push(AltForm::one(c * vm));
                    ph.push(AltForm::one(c * (0.5 * (vm - vp))));
                    pp.push(AltForm::one(c * p1));
                    ls.push(AltForm::one(c * (n21 / n2)));
                }
                let dom = s.domain().clone();
                let mk = |v: Vec<AltForm>| ReducedField::new(dom.clone(), v);
                Ok(DerivedDerivatives {
                    dlog_det_plus: mk(lp)?,
                    dlog_det_minus: mk(lm)?,
                    dphi: mk(ph)?,
                    dp: mk(pp)?,
                    dlog_sigma_norm: mk(ls)?,
                })
            }
        }
    }
}

/// Pointwise residual fields of the GK identities, in metric norms.
pub fn pointwise_residuals(state: &GkState, mode: DerivativeMode) -> Result<Vec<(&'static str, ReducedField<f64>)>, HopfError> {
    let s = state;
    let dom = s.domain().clone();
    let n = s.g.len();
    let g = |k: usize| s.g.at(k).0;
    let gi = |k: usize| s.ginv.at(k);
    let scalar = |v: Vec<f64>| ReducedField::new(dom.clone(), v).expect("sample count");
    let mut out = Vec::new();

    let dc_i = exterior_d(&s.omega_i)?.zip(&s.i, |d, k| act_on_form(k, d))?;
    let dc_j = exterior_d(&s.omega_j)?.zip(&s.j, |d, k| act_on_form(k, d))?;
    out.push(("dc_sum", scalar((0..n).map(|k| form_norm(&gi(k), &(dc_i.at(k) + dc_j.at(k)))).collect())));
    let dh = exterior_d(&s.h)?;
    out.push(("dh", scalar((0..n).map(|k| form_norm(&gi(k), &dh.at(k))).collect())));
    let ni = nijenhuis(&s.i);
    let nj = nijenhuis(&s.j);
    out.push(("nijenhuis_i", scalar((0..n).map(|k| tensor12_norm(&g(k), &gi(k), &ni.at(k))).collect())));
    out.push(("nijenhuis_j", scalar((0..n).map(|k| tensor12_norm(&g(k), &gi(k), &nj.at(k))).collect())));

    let dd = DerivedDerivatives::new(s, mode)?;
    let (lp, lm) = (&dd.dlog_det_plus, &dd.dlog_det_minus);
    // I theta_I +- J theta_J = (I +- J) d log det(I +- J) / 2
    let mut lee_p = Vec::with_capacity(n);
    let mut lee_m = Vec::with_capacity(n);
    for k in 0..n {
        let (ii, jj) = (s.i.at(k), s.j.at(k));
        let ai = act_on_form(&ii, &s.theta_i.at(k));
        let aj = act_on_form(&jj, &s.theta_j.at(k));
        let rp = ai + aj - (act_on_form(&ii, &lp.at(k)) + act_on_form(&jj, &lp.at(k))) * 0.5;
        let rm = ai - aj - (act_on_form(&ii, &lm.at(k)) - act_on_form(&jj, &lm.at(k))) * 0.5;
        lee_p.push(form_norm(&gi(k), &rp));
        lee_m.push(form_norm(&gi(k), &rm));
    }
    out.push(("lee_plus", scalar(lee_p)));
    out.push(("lee_minus", scalar(lee_m)));

    let ti = sharp_field(s, &s.theta_i);
    let tj = sharp_field(s, &s.theta_j);
    let (dphi, dp, dlog_n2) = (&dd.dphi, &dd.dp, &dd.dlog_sigma_norm);
    let n2 = s.sigma_i_norm_sq();
    let mut lee_sharp = Vec::with_capacity(n);
    let mut p_sigma = Vec::with_capacity(n);
    let mut canonical = Vec::with_capacity(n);
    let mut norm_rel = Vec::with_capacity(n);
    let mut theta_sum = Vec::with_capacity(n);
    for k in 0..n {
        let sg = s.sigma.at(k);
        let diff = ti.at(k) - tj.at(k);
        lee_sharp.push(vector_norm(&g(k), &(diff - sg.apply(&dphi.at(k).as_covector()?))));
        let p = s.angle.at(k);
        let q = dp.at(k).as_covector()? * (2.0 / (1.0 - p * p));
        p_sigma.push(vector_norm(&g(k), &(sg.apply(&q) + diff)));
        canonical.push(vector_norm(&g(k), &(sg.apply(&dlog_n2.at(k).as_covector()?) - 2.0 * p * ti.at(k))));
        norm_rel.push((n2.at(k) - (1.0 - p * p)).abs());
        theta_sum.push(form_norm(&gi(k), &(s.theta_i.at(k) + s.theta_j.at(k))));
    }
    out.push(("lee_sharp", scalar(lee_sharp)));
    out.push(("p_sigma", scalar(p_sigma)));
    out.push(("lee_canonical", scalar(canonical)));
    out.push(("sigma_norm", scalar(norm_rel)));
    out.push(("theta_sum", scalar(theta_sum)));

    let mut compat = Vec::with_capacity(n);
    let mut recover = Vec::with_capacity(n);
    let mut fsig = Vec::with_capacity(n);
    for k in 0..n {
        let (gg, ii, jj) = (s.g.at(k), s.i.at(k), s.j.at(k));
        let scale = gg.0.max_abs();
        compat.push(
            ii.complex_defect()
                .max(jj.complex_defect())
                .max(ii.compat_defect(&gg) / scale)
                .max(jj.compat_defect(&gg) / scale),
        );
        let fp = s.f_plus.at(k).to_matrix();
        let fm = s.f_minus.at(k).to_matrix();
        let r1 = gg.0 + sym_part(&(jj.0.transpose() * fp)).0;
        let r2 = gg.0 - sym_part(&(jj.0.transpose() * fm)).0;
        recover.push(two_tensor_norm(&gi(k), &r1).max(two_tensor_norm(&gi(k), &r2)));
        let v = match s.sigma_inverse(k) {
            Some(si) => {
                let a = jj.0.transpose() * si;
                let b = ii.0.transpose() * si;
                two_tensor_norm(&gi(k), &(fp - (a - b))).max(two_tensor_norm(&gi(k), &(fm - (a + b))))
            }
            None => f64::NAN,
        };
        fsig.push(v);
    }
    out.push(("compatibility", scalar(compat)));
    out.push(("metric_recovery", scalar(recover)));
    out.push(("f_sigma_identity", scalar(fsig)));

    // Torus invariance.
    let mut inv = vec![0.0f64; n];
    for x in s.params.killing_frame() {
        let xf = ReducedField::constant(&dom, x);
        let lg = lie_derivative(&xf, &s.g)?;
        let li = lie_derivative(&xf, &s.i)?;
        let lj = lie_derivative(&xf, &s.j)?;
        for (k, v) in inv.iter_mut().enumerate() {
            *v = (*v)
                .max(two_tensor_norm(&gi(k), &lg.at(k).0))
                .max(endo_norm(&g(k), &gi(k), &li.at(k).0))
                .max(endo_norm(&g(k), &gi(k), &lj.at(k).0));
        }
    }
    out.push(("torus_invariance", scalar(inv)));

    if let Some(pr) = &s.profile {
        out.push(("angle_profile", s.angle.zip(&pr.p, |a, p| (a - p).abs())?));
    }
    Ok(out)
}

/// Interior sup-norms of every GK identity. Failures to evaluate are
/// reported as NaN entries rather than errors.
pub fn verify_gk(state: &GkState) -> Report {
    verify_gk_with(state, DerivativeMode::ChainRule)
}

pub fn verify_gk_with(state: &GkState, mode: DerivativeMode) -> Report {
    verify_gk_window(state, mode, None)
}

/// As [`verify_gk_with`], with sup-norms restricted to `|t| <= window`.
pub fn verify_gk_window(state: &GkState, mode: DerivativeMode, window: Option<f64>) -> Report {
    let mut rep = Report::default();
    let t = state.t();
    let range: Vec<usize> = state
        .domain()
        .grid
        .interior()
        .filter(|&k| window.is_none_or(|w| t[k].abs() <= w))
        .collect();
    let sup = |f: &ReducedField<f64>| {
        range.iter().map(|&k| f.at(k)).fold(0.0, |m: f64, v| if v.is_nan() || m.is_nan() { f64::NAN } else { m.max(v) })
    };
    match pointwise_residuals(state, mode) {
        Ok(fields) => {
            for (name, f) in fields {
                rep.push(name, sup(&f));
            }
        }
        Err(_) => rep.push("evaluation", f64::NAN),
    }
    // sigma is the real part of an I-(2,0) bivector iff I sigma I^T = -sigma.
    let mut type_res = 0.0f64;
    for &k in &range {
        let (g, i, sg) = (state.g.at(k).0, state.i.at(k).0, state.sigma.at(k).0);
        let r = bivector_norm(&g, &(i * sg * i.transpose() + sg)) / bivector_norm(&g, &sg).max(f64::MIN_POSITIVE);
        type_res = type_res.max(r);
    }
    rep.push("sigma_type", type_res);
    // The holomorphic coefficient is only read off in the standard coordinates.
    let standard = Endo4::standard().0;
    if state.i.values().iter().all(|i| (i.0 - standard).amax() == 0.0) {
        let (coef, rest) = state.sigma_i_coefficient();
        let mid = coef[coef.len() / 2];
        let mut phase = 0.0f64;
        let mut drift = 0.0f64;
        for &k in &range {
            phase = phase.max(coef[k].im.abs() / coef[k].norm()).max(rest[k]);
            drift = drift.max((coef[k] - mid).norm() / mid.norm());
        }
        rep.push("sigma_phase", phase);
        rep.push("sigma_constancy", drift);
    }
    rep
}

/// Scalar columns of the state CSV: name and values.
pub fn state_columns(
    state: &GkState,
    f: Option<&ReducedField<f64>>,
    psi: Option<&Potentials>,
) -> Result<Vec<(String, Vec<f64>)>, HopfError> {
    let n = state.g.len();
    let p = state.profile.as_ref().map(|pr| pr.p.values().to_vec()).unwrap_or_else(|| state.angle.values().to_vec());
    let zeros = vec![0.0; n];
    let mut cols = vec![
        ("t".to_string(), state.t().to_vec()),
        ("p".to_string(), p),
        ("f".to_string(), f.map(|f| f.values().to_vec()).unwrap_or_else(|| zeros.clone())),
        ("det_i_plus_j".to_string(), state.det_plus.values().to_vec()),
        ("det_i_minus_j".to_string(), state.det_minus.values().to_vec()),
        ("psi_plus".to_string(), psi.map(|q| q.plus.values().to_vec()).unwrap_or_else(|| zeros.clone())),
        ("psi_minus".to_string(), psi.map(|q| q.minus.values().to_vec()).unwrap_or_else(|| zeros.clone())),
        ("angle".to_string(), state.angle.values().to_vec()),
    ];
    for (name, field) in pointwise_residuals(state, DerivativeMode::ChainRule)? {
        cols.push((format!("res_{name}"), field.into_values()));
    }
    Ok(cols)
}
