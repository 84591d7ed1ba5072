//! Steady gradient GK-Ricci solitons on the Hopf family as a 1-D
//! boundary-value problem.
//!
//! On this family `X_I = I(theta_I# - grad f)/2` and `X_J` only have `dy`
//! components. In terms of `u = log((1+p)/(1-p))`,
//!
//! ```text
//! X_I = (0, -u' - 2f'/(1+p), 0, r(-u' + 2f'/(1-p)))
//! X_J = (0,  u' + 2f'/(1+p), 0, r(-u' + 2f'/(1-p)))
//! ```
//!
//! so the soliton condition "X_I, X_J have constant coefficients in the
//! Killing frame" is two first-order ODEs for `(u, f)` plus two constants
//! `k = (k1, k2)` with `kappa_I = (k1, k2, 0)` and `kappa_J = (-k1, k2, 0)`.
//! Smooth closing of the circles at `p -> +-1` fixes the tail rates
//! `1 - p ~ e^{-t}` and `1 + p ~ e^{t/r}`, i.e. `k1 = -1`, `k2 = -1`.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

use crate::banded::Bordered;
use crate::error::{HopfError, SolitonError};
use crate::field::calculus::{
    bracket, codifferential, d_scalar, exterior_d, h_squared, hessian, interior_field, lie_derivative, ricci,
};
use crate::field::{Domain, GridSpec, ReducedField};
use crate::geom::{
    bivector_norm, endo_norm, form_norm, two_tensor_norm, vector_norm, act_on_form, AltForm, Endo4, Mat4, Vec4,
};
use crate::hopf::{derive_state, psi_pm, GkState, HopfParams, Potentials, Profile};
use crate::report::Report;

/// Exponential tail rates forced by smoothness: `1 - p ~ e^{-lambda_plus t}`
/// at `+inf` and `1 + p ~ e^{lambda_minus t}` at `-inf`.
pub fn smooth_tail_rates(params: &HopfParams) -> (f64, f64) {
    (1.0, 1.0 / params.ratio())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop once the sup-norm of the collocation rows is below this.
    pub tolerance: f64,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
    pub armijo: f64,
    pub min_damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { max_iterations: 60, tolerance: 1e-13, fd_step: 1e-7, armijo: 1e-4, min_damping: 1.0 / 1024.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub residual: f64,
    pub damping: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub lambda_plus: f64,
    pub amplitude_plus: f64,
    pub lambda_minus: f64,
    pub amplitude_minus: f64,
}

#[derive(Clone, Debug)]
pub struct SolitonSolution {
    pub params: HopfParams,
    pub profile: Profile,
    pub f: ReducedField<f64>,
    pub kappa_i: [f64; 3],
    pub kappa_j: [f64; 3],
    pub potentials: Potentials,
    pub tails: TailFit,
    pub trace: Vec<NewtonStep>,
    pub seconds: f64,
    pub report: Report,
}

impl SolitonSolution {
    pub fn state(&self) -> Result<GkState, HopfError> {
        derive_state(&self.params, &self.profile)
    }
}

/// Pointwise structural residuals `R_I = X_I - kappa_I . frame`,
/// `R_J = X_J - kappa_J . frame` and their larger g-norm.
#[derive(Clone, Debug)]
pub struct Structural {
    pub r_i: ReducedField<Vec4>,
    pub r_j: ReducedField<Vec4>,
    pub norm: ReducedField<f64>,
}

impl Structural {
    pub fn sup(&self) -> f64 {
        self.norm.sup_interior(|v| *v)
    }
}

fn frame_vector(params: &HopfParams, kappa: &[f64; 3]) -> Vec4 {
    let fr = params.killing_frame();
    fr[0] * kappa[0] + fr[1] * kappa[1] + fr[2] * kappa[2]
}

fn metric_diag(params: &HopfParams, op: f64, om: f64) -> (f64, f64) {
    let r = params.ratio();
    (r * op / 2.0, om / (2.0 * r))
}

/// Reduced soliton fields from `u'`, `f'` and the margins of `p`.
fn reduced_fields(r: f64, du: f64, df: f64, op: f64, om: f64) -> (Vec4, Vec4) {
    let q1 = -du - 2.0 * df / op;
    let q2 = r * (-du + 2.0 * df / om);
    (Vec4::new(0.0, q1, 0.0, q2), Vec4::new(0.0, -q1, 0.0, q2))
}

pub fn structural_residual(
    params: &HopfParams,
    profile: &Profile,
    f: &ReducedField<f64>,
    kappa_i: &[f64; 3],
    kappa_j: &[f64; 3],
) -> Result<Structural, SolitonError> {
    let dom = profile.domain().clone();
    if !profile.p.same_domain(f) {
        return Err(crate::error::FieldError::GridMismatch.into());
    }
    let du = profile.log_ratio().dt();
    let df = f.dt();
    let (ei, ej) = (frame_vector(params, kappa_i), frame_vector(params, kappa_j));
    let r = params.ratio();
    let n = dom.len();
    let (mut ri, mut rj, mut nn) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let (op, om) = (profile.one_plus.at(k), profile.one_minus.at(k));
        let (xi, xj) = reduced_fields(r, du.at(k), df.at(k), op, om);
        let (a, b) = metric_diag(params, op, om);
        let g = Mat4::from_diagonal(&Vec4::new(a, a, b, b));
        let (vi, vj) = (xi - ei, xj - ej);
        nn.push(vector_norm(&g, &vi).max(vector_norm(&g, &vj)));
        ri.push(vi);
        rj.push(vj);
    }
    Ok(Structural {
        r_i: ReducedField::new(dom.clone(), ri)?,
        r_j: ReducedField::new(dom.clone(), rj)?,
        norm: ReducedField::new(dom, nn)?,
    })
}

/// Same residual with `X_I`, `X_J` rebuilt through the full tensor route
/// (Lee forms from differentiated fundamental forms, `grad f` through `g`).
pub fn structural_residual_tensor(
    state: &GkState,
    f: &ReducedField<f64>,
    kappa_i: &[f64; 3],
    kappa_j: &[f64; 3],
) -> Result<ReducedField<f64>, SolitonError> {
    let (xi, xj) = state.soliton_vector_fields(f)?;
    let (ei, ej) = (frame_vector(&state.params, kappa_i), frame_vector(&state.params, kappa_j));
    let n = xi.len();
    let v: Vec<f64> = (0..n)
        .map(|k| {
            let g = state.g.at(k).0;
            vector_norm(&g, &(xi.at(k) - ei)).max(vector_norm(&g, &(xj.at(k) - ej)))
        })
        .collect();
    Ok(ReducedField::new(state.domain().clone(), v)?)
}

/// Collocation system in the unknowns `z = (u_0, f_0, u_1, f_1, ..., k1, k2)`.
///
/// Rows are ordered so that the Jacobian is banded: node rows in order, the
/// two gauge rows `u(0) = 0`, `f(0) = 0` inserted at the centre, and the node
/// rows of the last sample dropped (it lies outside the interior).
struct Collocation {
    params: HopfParams,
    domain: Arc<Domain>,
    centre: usize,
    gauge: ([usize; 4], [f64; 4]),
    rates: (f64, f64),
}

const KL: usize = 9;
const KU: usize = 10;
const BORDER: usize = 2;

impl Collocation {
    fn new(params: HopfParams, domain: Arc<Domain>) -> Collocation {
        let n = domain.len();
        let gauge = domain.grid.interpolation_weights(0.0);
        Collocation { params, centre: n / 2, gauge, rates: smooth_tail_rates(&params), domain }
    }

    fn n(&self) -> usize {
        self.domain.len()
    }

    fn size(&self) -> usize {
        2 * self.n()
    }

    fn node_row(&self, node: usize) -> usize {
        if node < self.centre {
            2 * node
        } else {
            2 * node + 2
        }
    }

    fn residual(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n();
        let grid = &self.domain.grid;
        let u: Vec<f64> = (0..n).map(|i| z[2 * i]).collect();
        let f: Vec<f64> = (0..n).map(|i| z[2 * i + 1]).collect();
        let du = grid.derivative(&u);
        let df = grid.derivative(&f);
        let (k1, k2) = (z[2 * n], z[2 * n + 1]);
        let r = self.params.ratio();
        let mut out = vec![0.0; 2 * n + BORDER];
        for i in 0..n - 1 {
            let op = 2.0 / (1.0 + (-u[i]).exp());
            let om = 2.0 / (1.0 + u[i].exp());
            let (xi, _) = reduced_fields(r, du[i], df[i], op, om);
            // g-orthonormal components, so the rows are the structural
            // residual itself and tail rounding is not amplified.
            let (a, b) = metric_diag(&self.params, op, om);
            let row = self.node_row(i);
            out[row] = a.sqrt() * (xi[1] - k1);
            out[row + 1] = b.sqrt() * (xi[3] - k2);
        }
        let (idx, w) = self.gauge;
        let row = 2 * self.centre;
        out[row] = (0..4).map(|j| w[j] * u[idx[j]]).sum();
        out[row + 1] = (0..4).map(|j| w[j] * f[idx[j]]).sum();
        let (lp, lm) = self.rates;
        out[2 * n] = -k1 - lp;
        out[2 * n + 1] = -k2 / r - lm;
        out
    }

    /// Forward-difference Jacobian with column colouring.
    fn jacobian(&self, z: &[f64], r0: &[f64], step: f64) -> Bordered {
        let size = self.size();
        let mut sys = Bordered::zeros(size, BORDER, KL, KU);
        let stride = KL + KU + 1;
        let h = |v: f64| step * (1.0 + v.abs());
        for colour in 0..stride {
            let mut zz = z.to_vec();
            let cols: Vec<usize> = (colour..size).step_by(stride).collect();
            for &j in &cols {
                zz[j] += h(z[j]);
            }
            let r1 = self.residual(&zz);
            for &j in &cols {
                let hj = zz[j] - z[j];
                let lo = j.saturating_sub(KU);
                let hi = (j + KL).min(size - 1);
                for i in lo..=hi {
                    let v = (r1[i] - r0[i]) / hj;
                    if v != 0.0 {
                        sys.a.set(i, j, v);
                    }
                }
            }
        }
        for k in 0..BORDER {
            let j = size + k;
            let mut zz = z.to_vec();
            zz[j] += h(z[j]);
            let hj = zz[j] - z[j];
            let r1 = self.residual(&zz);
            for i in 0..size {
                sys.b[(i, k)] = (r1[i] - r0[i]) / hj;
            }
            for i in 0..BORDER {
                sys.d[(i, k)] = (r1[size + i] - r0[size + i]) / hj;
            }
        }
        sys
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| if x.is_nan() || m.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

/// Least-squares fit of `log(margin) = log(A) + slope t` on the outermost
/// tenth of the grid at each end.
pub fn fit_tails(profile: &Profile) -> TailFit {
    let t = profile.p.t();
    let n = t.len();
    let m = (n / 10).max(4);
    let fit = |idx: std::ops::Range<usize>, y: &dyn Fn(usize) -> f64| -> (f64, f64) {
        let k = idx.len() as f64;
        let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
        for i in idx {
            let (x, v) = (t[i], y(i));
            st += x;
            sy += v;
            stt += x * x;
            sty += x * v;
        }
        let slope = (k * sty - st * sy) / (k * stt - st * st);
        ((sy - slope * st) / k, slope)
    };
    let (cp, sp) = fit(n - m..n, &|i| profile.one_minus.at(i).ln());
    let (cm, sm) = fit(0..m, &|i| profile.one_plus.at(i).ln());
    TailFit { lambda_plus: -sp, amplitude_plus: cp.exp(), lambda_minus: sm, amplitude_minus: cm.exp() }
}

/// Damped Newton on the bordered banded collocation system.
pub fn solve_soliton(params: &HopfParams, init: &Profile, opts: &SolverOptions) -> Result<SolitonSolution, SolitonError> {
    let start = Instant::now();
    let dom = init.domain().clone();
    let n = dom.len();
    let (p0, p1) = (init.p.at(0), init.p.at(n - 1));
    if !(p0 < -0.5 && p1 > 0.5) {
        return Err(SolitonError::BoundaryCondition(format!(
            "need p(-T) near -1 and p(T) near +1, got {p0} and {p1}"
        )));
    }
    let sys = Collocation::new(*params, dom.clone());
    let u0 = init.log_ratio();
    let f0 = init.f.clone().unwrap_or_else(|| ReducedField::constant(&dom, 0.0));
    let mut z = Vec::with_capacity(2 * n + BORDER);
    for i in 0..n {
        z.push(u0.at(i));
        z.push(f0.at(i));
    }
    let (lp, lm) = smooth_tail_rates(params);
    z.push(-lp);
    z.push(-params.ratio() * lm);

    let mut r = sys.residual(&z);
    let mut res = sup(&r);
    let mut trace = vec![NewtonStep { iteration: 0, residual: res, damping: 0.0 }];
    // Rounding floor of differencing u, which grows like |t|.
    let h = dom.grid.spacing().unwrap_or(2.0 * dom.grid.spec().t_max / n as f64);
    let floor = 16.0 * f64::EPSILON * (1.0 + sup(&z)) / h;
    let tol = opts.tolerance.max(floor);
    let mut it = 0;
    while !(res < tol) {
        if it >= opts.max_iterations {
            return Err(SolitonError::MaxIterations { iterations: it, residual: res });
        }
        it += 1;
        let jac = sys.jacobian(&z, &r, opts.fd_step);
        let delta = jac.solve(&r).ok_or(SolitonError::SingularJacobian)?;
        let merit = r.iter().map(|x| x * x).sum::<f64>();
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&delta).map(|(a, d)| a - lambda * d).collect();
            let rt = sys.residual(&trial);
            let mt = rt.iter().map(|x| x * x).sum::<f64>();
            if mt.is_finite() && mt <= (1.0 - 2.0 * opts.armijo * lambda) * merit {
                z = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
            if lambda < opts.min_damping {
                // Rounding floor: a full step no longer lowers the merit.
                if res < 1e3 * tol {
                    lambda = 0.0;
                    break;
                }
                return Err(SolitonError::Divergence { iteration: it, residual: res });
            }
        }
        res = sup(&r);
        trace.push(NewtonStep { iteration: it, residual: res, damping: lambda });
        if lambda == 0.0 {
            break;
        }
    }

    let u = ReducedField::new(dom.clone(), (0..n).map(|i| z[2 * i]).collect())?;
    let f = ReducedField::new(dom.clone(), (0..n).map(|i| z[2 * i + 1]).collect())?;
    let profile = Profile::from_log_ratio(&u).map_err(|_| SolitonError::ProfileExit)?.with_potential(f.clone());
    let (k1, k2) = (z[2 * n], z[2 * n + 1]);
    let kappa_i = [k1, k2, 0.0];
    let kappa_j = [-k1, k2, 0.0];
    let state = derive_state(params, &profile)?;
    let potentials = psi_pm(&state, &f, None)?;
    let mut sol = SolitonSolution {
        params: *params,
        tails: fit_tails(&profile),
        profile,
        f,
        kappa_i,
        kappa_j,
        potentials,
        trace,
        seconds: 0.0,
        report: Report::default(),
    };
    let st = structural_residual(params, &sol.profile, &sol.f, &kappa_i, &kappa_j)?;
    sol.report.push("structural", st.sup());
    sol.seconds = start.elapsed().as_secs_f64();
    Ok(sol)
}

/// Default initializer `p = tanh(t/2)`, `f = 0`.
pub fn default_initial_profile(params: &HopfParams, spec: GridSpec) -> Result<Profile, SolitonError> {
    let d = params.domain(spec)?;
    // log((1+p)/(1-p)) = t for p = tanh(t/2); avoids rounding p to 1.
    Ok(Profile::from_log_ratio(&ReducedField::from_fn(&d, |t| t))?)
}

fn sup_field<T: Copy>(f: &ReducedField<T>, norm: impl Fn(usize, &T) -> f64) -> f64 {
    let idx: Vec<usize> = (0..f.len()).collect();
    let vals = ReducedField::new(f.domain().clone(), idx.iter().map(|&k| norm(k, &f.at(k))).collect()).expect("length");
    vals.sup_interior(|v| *v)
}

/// Full tensorial check of a soliton candidate `(state, f)` with soliton
/// constants `kappa`.
pub fn verify_soliton_state(
    state: &GkState,
    f: &ReducedField<f64>,
    kappa_i: &[f64; 3],
    kappa_j: &[f64; 3],
) -> Result<Report, SolitonError> {
    let mut rep = Report::default();
    let g = &state.g;
    let gi = |k: usize| state.ginv.at(k);
    let gm = |k: usize| state.g.at(k).0;
    let dom = state.domain().clone();

    rep.push("structural_tensor", structural_residual_tensor(state, f, kappa_i, kappa_j)?.sup_interior(|v| *v));

    // Rc - H^2/4 + Hess f and d*H + i_{grad f} H.
    let rc = ricci(g)?;
    let h2 = h_squared(g, &state.h)?;
    let hs = hessian(g, f)?;
    let e1 = rc.zip(&h2, |a, b| a - b * 0.25)?.zip(&hs, |a, b| a + b)?;
    rep.push("soliton_metric", sup_field(&e1, |k, m| two_tensor_norm(&gi(k), m)));
    let grad = d_scalar(f).zip(&state.ginv, |d, gi| gi * d.as_covector().expect("1-form"))?;
    let e2 = codifferential(g, &state.h)?.zip(&interior_field(&grad, &state.h)?, |a, b| *a + *b)?;
    rep.push("soliton_torsion", sup_field(&e2, |k, a| form_norm(&gi(k), a)));

    // Bismut-Ricci form rho = -d(J dPhi)/2, Phi = log(Pf F+ / Pf F-).
    let (pp, pm) = state.symplectic_densities();
    let phi = pp.zip(&pm, |a, b| (a / b).ln())?;
    let jdphi = d_scalar(&phi).zip(&state.j, |a, j| act_on_form(j, a))?;
    let rho = exterior_d(&jdphi)?.map(|x| *x * -0.5);
    let ixi = ReducedField::constant(&dom, state.i.at(0).apply(&frame_vector(&state.params, kappa_i)));
    let lw = lie_derivative(&ixi, &state.omega_i)?;
    let bis = rho.zip(&state.i, |b, i| {
        let m = b.to_matrix();
        AltForm::from_matrix(&((m + i.0.transpose() * m * i.0) * 0.5))
    })?;
    let bis = bis.zip(&lw, |a, b| *a + *b)?;
    rep.push("bismut", sup_field(&bis, |k, a| form_norm(&gi(k), a)));

    // Properties of the soliton vector fields, reconstructed from (p, f).
    let (xi, xj) = state.soliton_vector_fields(f)?;
    let mut holo = 0.0f64;
    let mut killing = 0.0f64;
    let mut sigma_inv = 0.0f64;
    for x in [&xi, &xj] {
        let li = lie_derivative(x, &state.i)?;
        let lj = lie_derivative(x, &state.j)?;
        let lg = lie_derivative(x, &state.g)?;
        let ls = lie_derivative(x, &state.sigma)?;
        holo = holo.max(sup_field(&li, |k, e: &Endo4| endo_norm(&gm(k), &gi(k), &e.0)));
        holo = holo.max(sup_field(&lj, |k, e: &Endo4| endo_norm(&gm(k), &gi(k), &e.0)));
        killing = killing.max(sup_field(&lg, |k, e| two_tensor_norm(&gi(k), &e.0)));
        sigma_inv = sigma_inv.max(sup_field(&ls, |k, e| bivector_norm(&gm(k), &e.0)));
    }
    rep.push("x_holomorphic", holo);
    rep.push("x_killing", killing);
    let br = bracket(&xi, &xj)?;
    rep.push("x_commute", sup_field(&br, |k, v| vector_norm(&gm(k), v)));
    let pair = |form: &ReducedField<AltForm>, a: &ReducedField<Vec4>, b: &ReducedField<Vec4>| {
        sup_field(form, |k, w| {
            let m = w.to_matrix();
            let (va, vb) = (a.at(k), b.at(k));
            (va.transpose() * m * vb)[0].abs() / (vector_norm(&gm(k), &va) * vector_norm(&gm(k), &vb)).max(1.0)
        })
    };
    rep.push("f_plus_pairing", pair(&state.f_plus, &xi, &xj));
    rep.push("f_minus_pairing", pair(&state.f_minus, &xi, &xj));
    let ixi_f = xi.zip(&state.i, |x, i| i.apply(x))?;
    let mut sp = 0.0f64;
    for k in dom.grid.interior() {
        if let Some(si) = state.sigma_inverse(k) {
            let (a, b) = (ixi_f.at(k), xj.at(k));
            let v = (a.transpose() * si * b)[0].abs() / (vector_norm(&gm(k), &a) * vector_norm(&gm(k), &b)).max(1.0);
            sp = sp.max(v);
        } else {
            sp = f64::NAN;
        }
    }
    rep.push("sigma_inverse_pairing", sp);
    rep.push("x_poisson", sigma_inv);

    // e^{psi+} Pf(F+) = e^{psi-} Pf(F-).
    let pot = psi_pm(state, f, None)?;
    let (dp, dm) = pot.densities(state);
    let diff = dp.zip(&dm, |a, b| (a - b).abs())?;
    rep.push("scalar_identity", diff.sup_interior(|v| *v));
    Ok(rep)
}

/// Structural, tensorial, Bismut, vector-field and scalar checks of a solved
/// soliton.
pub fn verify_soliton_full(sol: &SolitonSolution) -> Result<Report, SolitonError> {
    let mut rep = Report::default();
    let st = structural_residual(&sol.params, &sol.profile, &sol.f, &sol.kappa_i, &sol.kappa_j)?;
    rep.push("structural", st.sup());
    let state = sol.state()?;
    let full = verify_soliton_state(&state, &sol.f, &sol.kappa_i, &sol.kappa_j)?;
    rep.extend("", &full);
    let plus = [sol.kappa_i[0] + sol.kappa_j[0], 0.0, sol.kappa_i[2] + sol.kappa_j[2]];
    let minus = [0.0, sol.kappa_i[1] - sol.kappa_j[1], sol.kappa_i[2] - sol.kappa_j[2]];
    let off = plus.iter().chain(minus.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    rep.push("kappa_frame", off);
    Ok(rep)
}
