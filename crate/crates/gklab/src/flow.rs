//! Hamiltonian deformations of a GK state inside its class, the 1-form `nu`,
//! its primitive `J` and the rigidity experiment.
//!
//! A potential `phi(t)` generates `X = -sigma(d phi)` and the evolution
//!
//! ```text
//! dg/ds = (dd^c_I phi J)^sym,   dI/ds = L_X I,   dJ/ds = 0.
//! ```
//!
//! `sigma` is constant along the flow, so `X` is generated by the Poisson
//! tensor of the starting state; the `sigma` of the evolved `(g, I, J)` is
//! then an independent check. On this family `sigma(dt)` is tangent to the
//! level sets of `t`, so `X' c^T` is nilpotent and every stage of the time
//! stepping is pointwise algebra plus one derivative in `t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

use crate::error::{FieldError, FlowError};
use crate::field::calculus::{act_field, d_scalar, exterior_d, integrate_m, lie_derivative};
use crate::field::grid::{cumulative_integral, Grid, GridSpec};
use crate::field::{Domain, ReducedField};
use crate::geom::{covector_norm, precompose, sym_part, AltForm, Bivector, Endo4, Mat4, Metric4, Vec4};
use crate::hopf::{verify_gk_window, DerivativeMode, GkState, HopfParams, Potentials};
use crate::report::Report;
use crate::soliton::{structural_residual_tensor, SolitonSolution};

/// An invariant potential.
#[derive(Clone, Debug)]
pub struct Variation {
    pub phi: ReducedField<f64>,
}

impl Variation {
    pub fn new(phi: ReducedField<f64>) -> Variation {
        Variation { phi }
    }

    /// Shifts `phi` so that `int phi e^{-f} dV = 0`.
    pub fn zero_mean(self, state: &GkState, f: &ReducedField<f64>) -> Result<Variation, FlowError> {
        let w = f.zip(&state.volume, |f, v| (-f).exp() * v)?;
        let num = integrate_m(&self.phi.zip(&w, |a, b| a * b)?)?;
        let den = integrate_m(&w)?;
        let c = num / den;
        Ok(Variation { phi: self.phi.map(|v| v - c) })
    }

    pub fn sup(&self) -> f64 {
        self.phi.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

/// `X = -sigma(d phi)`.
pub fn hamiltonian_vf(sigma: &ReducedField<Bivector>, phi: &ReducedField<f64>) -> Result<ReducedField<Vec4>, FieldError> {
    let c = phi.domain().c();
    sigma.zip(&phi.dt(), |s, d| -s.apply(&(c * *d)))
}

/// `{phi1, phi2} = sigma(d phi1, d phi2)`.
pub fn poisson_bracket(
    sigma: &ReducedField<Bivector>,
    phi1: &ReducedField<f64>,
    phi2: &ReducedField<f64>,
) -> Result<ReducedField<f64>, FieldError> {
    let c = phi1.domain().c();
    let (d1, d2) = (phi1.dt(), phi2.dt());
    let pairs = d1.zip(&d2, |a, b| (*a, *b))?;
    sigma.zip(&pairs, |s, (a, b)| s.pair(&(c * *a), &(c * *b)))
}

/// `phi_s = base + s * speed`; a constant-speed path has no `speed`.
#[derive(Clone, Debug)]
pub struct PotentialPath {
    pub base: ReducedField<f64>,
    pub speed: Option<ReducedField<f64>>,
}

impl PotentialPath {
    pub fn constant(phi: ReducedField<f64>) -> PotentialPath {
        PotentialPath { base: phi, speed: None }
    }

    pub fn at(&self, s: f64) -> ReducedField<f64> {
        match &self.speed {
            None => self.base.clone(),
            Some(v) => self.base.zip(v, |a, b| a + s * b).expect("same domain"),
        }
    }

    pub fn is_constant_speed(&self) -> bool {
        self.speed.is_none()
    }
}

/// Fixed fields `X+- = X_I +- X_J` whose `F+-`-Hamiltonians define `psi+-`
/// along a path, and the total mass the potentials are normalized to.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct NuContext {
    pub x_plus: [f64; 4],
    pub x_minus: [f64; 4],
    pub reference_volume: f64,
}

impl NuContext {
    pub fn from_kappa(params: &HopfParams, kappa_i: &[f64; 3], kappa_j: &[f64; 3], reference_volume: f64) -> NuContext {
        let fr = params.killing_frame();
        let v = |k: &[f64; 3]| fr[0] * k[0] + fr[1] * k[1] + fr[2] * k[2];
        let (xi, xj) = (v(kappa_i), v(kappa_j));
        NuContext { x_plus: (xi + xj).into(), x_minus: (xi - xj).into(), reference_volume }
    }

    pub fn from_solution(sol: &SolitonSolution) -> NuContext {
        NuContext::from_kappa(&sol.params, &sol.kappa_i, &sol.kappa_j, sol.potentials.reference_volume)
    }
}

/// `psi+-` with `i_{X+-} F+- = -d psi+-`, normalized to the context mass.
/// Also returns the part of `i_X F` not proportional to `dt` (relative).
pub fn hamiltonian_potentials(state: &GkState, ctx: &NuContext) -> Result<(Potentials, f64), FlowError> {
    let dom = state.domain().clone();
    let c = dom.c();
    let cc = c.dot(&c);
    let mut defect: f64 = 0.0;
    let mut raw = |x: Vec4, f: &ReducedField<AltForm>| -> ReducedField<f64> {
        let h: Vec<f64> = f
            .values()
            .iter()
            .map(|ff| {
                let a = ff.to_matrix().transpose() * x;
                let coef = a.dot(&c) / cc;
                let rest = (a - c * coef).amax() / a.amax().max(f64::MIN_POSITIVE);
                defect = defect.max(rest);
                coef
            })
            .collect();
        let psi: Vec<f64> = dom.grid.cumulative(&h).iter().map(|v| -v).collect();
        ReducedField::new(dom.clone(), psi).expect("same domain")
    };
    let rp = raw(Vec4::from(ctx.x_plus), &state.f_plus);
    let rm = raw(Vec4::from(ctx.x_minus), &state.f_minus);
    Ok((Potentials::normalized(state, rp, rm, ctx.reference_volume)?, defect))
}

/// `nu(phi) = int phi (e^{psi+} F+^2/2 - e^{psi-} F-^2/2)`.
pub fn nu_oneform(state: &GkState, phi: &ReducedField<f64>, ctx: &NuContext) -> Result<f64, FlowError> {
    let (pots, _) = hamiltonian_potentials(state, ctx)?;
    nu_with(state, &pots, phi)
}

fn nu_with(state: &GkState, pots: &Potentials, phi: &ReducedField<f64>) -> Result<f64, FlowError> {
    let (dp, dm) = pots.densities(state);
    let diff = dp.zip(&dm, |a, b| a - b)?;
    Ok(integrate_m(&phi.zip(&diff, |a, b| a * b)?)?)
}

/// The quadratic part of `d^2 J`:
/// `1/4 int |(I+J) d phi|^2 e^{psi+} F+^2/2 + 1/4 int |(I-J) d phi|^2 e^{psi-} F-^2/2`.
pub fn second_variation(state: &GkState, phi: &ReducedField<f64>, ctx: &NuContext) -> Result<f64, FlowError> {
    let (pots, _) = hamiltonian_potentials(state, ctx)?;
    second_variation_with(state, &pots, phi)
}

fn second_variation_with(state: &GkState, pots: &Potentials, phi: &ReducedField<f64>) -> Result<f64, FlowError> {
    let (dp, dm) = pots.densities(state);
    let c = state.domain().c();
    let dphi = phi.dt();
    let mut dens = Vec::with_capacity(phi.len());
    for k in 0..phi.len() {
        let a = c * dphi.at(k);
        let (i, j, gi) = (state.i.at(k).0, state.j.at(k).0, state.ginv.at(k));
        let np = covector_norm(&gi, &((i + j).transpose() * a));
        let nm = covector_norm(&gi, &((i - j).transpose() * a));
        dens.push(0.25 * (np * np * dp.at(k) + nm * nm * dm.at(k)));
    }
    Ok(integrate_m(&ReducedField::new(state.domain().clone(), dens)?)?)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FlowSettings {
    /// Signed final time; negative runs the path backwards.
    pub t_end: f64,
    pub dt: f64,
    /// Sup of the GK residuals that aborts the run.
    pub watchdog: f64,
    /// Largest relative change of `g` allowed in one step.
    pub max_step_change: f64,
    /// Steps between GK checks (the last step is always checked).
    pub check_every: usize,
    /// Steps between stored states.
    pub snapshot_every: usize,
    /// GK checks only look at `|t| <= window`; the outer tails of a wide
    /// domain are there for the mass normalization and carry metric
    /// entries of size `e^{-|t|}`, where third derivatives are rounding.
    pub check_window: Option<f64>,
}

impl Default for FlowSettings {
    fn default() -> Self {
        FlowSettings { t_end: 0.2, dt: 1e-3, watchdog: 1e-5, max_step_change: 0.05, check_every: 20, snapshot_every: 20, check_window: Some(6.0) }
    }
}

impl FlowSettings {
    pub fn steps(&self) -> Result<usize, FlowError> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_end.is_finite()) {
            return Err(FlowError::Settings(format!("dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        if self.check_every == 0 || self.snapshot_every == 0 {
            return Err(FlowError::Settings("check_every and snapshot_every must be positive".into()));
        }
        let n = (self.t_end.abs() / self.dt).round();
        if (n * self.dt - self.t_end.abs()).abs() > 1e-9 * self.dt.max(self.t_end.abs()) {
            return Err(FlowError::Settings(format!("t_end {} is not a multiple of dt {}", self.t_end, self.dt)));
        }
        Ok(n as usize)
    }
}

/// One row per step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub j: f64,
    pub nu: f64,
    pub second_variation: f64,
    /// Sup of the GK residuals when checked at this step, else NaN.
    pub gk_max: f64,
    pub sigma_drift: f64,
    pub f_plus_defect: f64,
    pub hamiltonian_defect: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FlowStats {
    pub steps: usize,
    pub dt: f64,
    pub max_sigma_drift: f64,
    pub max_f_plus_defect: f64,
    pub max_gk: f64,
    pub max_projection: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FlowPath {
    pub times: Vec<f64>,
    pub states: Vec<GkState>,
    pub potentials: Vec<ReducedField<f64>>,
    pub trace: Vec<TraceRow>,
    pub stats: FlowStats,
}

impl FlowPath {
    pub fn last_state(&self) -> &GkState {
        self.states.last().expect("a path holds its start")
    }
}

struct Rates {
    g: Vec<Mat4>,
    i: Vec<Mat4>,
    /// `dd^c_I phi` as an antisymmetric matrix.
    p: Vec<Mat4>,
}

fn rates(dom: &Arc<Domain>, sigma: &ReducedField<Bivector>, i: &[Mat4], j: &[Mat4], phi: &ReducedField<f64>) -> Result<Rates, FlowError> {
    let n = i.len();
    let dphi = d_scalar(phi);
    let x = hamiltonian_vf(sigma, phi)?;
    let ifield = ReducedField::new(dom.clone(), i.iter().map(|m| Endo4(*m)).collect())?;
    let di = lie_derivative(&x, &ifield)?;
    let p = exterior_d(&act_field(&ifield, &dphi)?)?;
    let mut out = Rates { g: Vec::with_capacity(n), i: Vec::with_capacity(n), p: Vec::with_capacity(n) };
    for k in 0..n {
        let pm = p.at(k).to_matrix();
        out.g.push(sym_part(&precompose(&pm, &Endo4(j[k]))).0);
        out.i.push(di.at(k).0);
        out.p.push(pm);
    }
    Ok(out)
}

fn axpy(y: &[Mat4], a: f64, x: &[Mat4]) -> Vec<Mat4> {
    y.iter().zip(x).map(|(y, x)| y + x * a).collect()
}

/// Nearest complex structure: one Newton step of `I -> (I - I^{-1})/2`.
fn project_complex(i: &Mat4) -> Mat4 {
    match i.try_inverse() {
        Some(inv) => 0.5 * (i - inv),
        None => *i,
    }
}

/// One RK4 step; returns the new `(g, I)`, the quadrature of `-dd^c phi` over
/// the step and the size of the projection applied to `I`.
fn rk4(
    dom: &Arc<Domain>,
    sigma: &ReducedField<Bivector>,
    g: &[Mat4],
    i: &[Mat4],
    j: &[Mat4],
    path: &PotentialPath,
    s: f64,
    h: f64,
) -> Result<(Vec<Mat4>, Vec<Mat4>, Vec<Mat4>, f64), FlowError> {
    let k1 = rates(dom, sigma, i, j, &path.at(s))?;
    let k2 = rates(dom, sigma, &axpy(i, h / 2.0, &k1.i), j, &path.at(s + h / 2.0))?;
    let k3 = rates(dom, sigma, &axpy(i, h / 2.0, &k2.i), j, &path.at(s + h / 2.0))?;
    let k4 = rates(dom, sigma, &axpy(i, h, &k3.i), j, &path.at(s + h))?;
    let comb = |y: &[Mat4], a: &[Mat4], b: &[Mat4], c: &[Mat4], d: &[Mat4]| -> Vec<Mat4> {
        (0..y.len()).map(|k| y[k] + (a[k] + 2.0 * b[k] + 2.0 * c[k] + d[k]) * (h / 6.0)).collect()
    };
    let mut gn = comb(g, &k1.g, &k2.g, &k3.g, &k4.g);
    let mut in_ = comb(i, &k1.i, &k2.i, &k3.i, &k4.i);
    let zero = vec![Mat4::zeros(); g.len()];
    let dp = comb(&zero, &k1.p, &k2.p, &k3.p, &k4.p);
    let mut proj: f64 = 0.0;
    for k in 0..gn.len() {
        gn[k] = sym_part(&gn[k]).0;
        let q = project_complex(&in_[k]);
        proj = proj.max((q - in_[k]).amax());
        in_[k] = q;
    }
    Ok((gn, in_, dp, proj))
}

fn to_state(params: HopfParams, dom: &Arc<Domain>, g: &[Mat4], i: &[Mat4], j: &ReducedField<Endo4>) -> Result<GkState, FlowError> {
    let gf = ReducedField::new(dom.clone(), g.iter().map(|m| Metric4(*m)).collect())?;
    let ifld = ReducedField::new(dom.clone(), i.iter().map(|m| Endo4(*m)).collect())?;
    Ok(GkState::from_structures(params, gf, ifld, j.clone())?)
}

/// A single RK4 step of the flow from `state` at path time `s`, with the
/// Hamiltonian field generated by `sigma` (the Poisson tensor of the class;
/// re-deriving it from each step's state feeds grid-scale noise back into
/// `X` and is unstable).
pub fn flow_step(
    state: &GkState,
    sigma: &ReducedField<Bivector>,
    path: &PotentialPath,
    s: f64,
    dt: f64,
) -> Result<GkState, FlowError> {
    let dom = state.domain().clone();
    let g: Vec<Mat4> = state.g.values().iter().map(|m| m.0).collect();
    let i: Vec<Mat4> = state.i.values().iter().map(|m| m.0).collect();
    let j: Vec<Mat4> = state.j.values().iter().map(|m| m.0).collect();
    let (gn, inn, _, _) = rk4(&dom, sigma, &g, &i, &j, path, s, dt)?;
    to_state(state.params, &dom, &gn, &inn, &state.j)
}

fn sup_interior_mats(dom: &Domain, a: &[Mat4], b: &[Mat4]) -> f64 {
    dom.grid.interior().map(|k| (a[k] - b[k]).amax()).fold(0.0, f64::max)
}

/// Integrates the flow generated by `path` from `start` with classical RK4,
/// monitoring positivity, the GK identities, the drift of `sigma` and the
/// evolution of `F+`. `nu` and the second variation are recorded at every
/// step so that `J` can be integrated to the same order.
pub fn integrate_flow(
    start: &GkState,
    path: &PotentialPath,
    ctx: &NuContext,
    settings: &FlowSettings,
) -> Result<FlowPath, FlowError> {
    let clock = Instant::now();
    let steps = settings.steps()?;
    let h = settings.dt * settings.t_end.signum();
    let dom = start.domain().clone();
    let mut g: Vec<Mat4> = start.g.values().iter().map(|m| m.0).collect();
    let mut i: Vec<Mat4> = start.i.values().iter().map(|m| m.0).collect();
    let j: Vec<Mat4> = start.j.values().iter().map(|m| m.0).collect();
    let sigma0: Vec<Mat4> = start.sigma.values().iter().map(|s| s.0).collect();
    let mut f_track: Vec<Mat4> = start.f_plus.values().iter().map(|f| f.to_matrix()).collect();

    let mut stats = FlowStats { steps, dt: settings.dt, ..Default::default() };
    let mut trace = Vec::with_capacity(steps + 1);
    let mut times = vec![0.0];
    let mut states = vec![start.clone()];
    let mut potentials = vec![path.at(0.0)];

    let row = |state: &GkState, s: f64, check: bool, f_track: &[Mat4], stats: &mut FlowStats| -> Result<TraceRow, FlowError> {
        let phi = path.at(s);
        let (pots, hdef) = hamiltonian_potentials(state, ctx)?;
        let nu = nu_with(state, &pots, &phi)?;
        let mut sv = second_variation_with(state, &pots, &phi)?;
        if let Some(v) = &path.speed {
            sv += nu_with(state, &pots, v)?;
        }
        let sig: Vec<Mat4> = state.sigma.values().iter().map(|x| x.0).collect();
        let fp: Vec<Mat4> = state.f_plus.values().iter().map(|x| x.to_matrix()).collect();
        let sigma_drift = sup_interior_mats(&dom, &sig, &sigma0);
        let f_plus_defect = sup_interior_mats(&dom, &fp, f_track);
        let gk_max = if check {
            let rep = verify_gk_window(state, DerivativeMode::ChainRule, settings.check_window);
            let m = rep.max();
            if !(m < settings.watchdog) {
                let worst = rep.failures(settings.watchdog).first().map(|e| e.name.clone()).unwrap_or_default();
                return Err(FlowError::Watchdog { name: worst, value: m, limit: settings.watchdog, time: s });
            }
            stats.max_gk = stats.max_gk.max(m);
            m
        } else {
            f64::NAN
        };
        stats.max_sigma_drift = stats.max_sigma_drift.max(sigma_drift);
        stats.max_f_plus_defect = stats.max_f_plus_defect.max(f_plus_defect);
        Ok(TraceRow { time: s, j: 0.0, nu, second_variation: sv, gk_max, sigma_drift, f_plus_defect, hamiltonian_defect: hdef })
    };

    trace.push(row(start, 0.0, true, &f_track, &mut stats)?);
    for step in 1..=steps {
        let s0 = (step - 1) as f64 * h;
        let s1 = step as f64 * h;
        let (gn, inn, dp, proj) = rk4(&dom, &start.sigma, &g, &i, &j, path, s0, h)?;
        if !gn.iter().all(|m| Metric4(*m).is_positive()) {
            return Err(FlowError::LostPositivity { time: s1 });
        }
        let change = sup_interior_mats(&dom, &gn, &g) / g.iter().map(|m| m.amax()).fold(0.0, f64::max);
        if !(change <= settings.max_step_change) {
            return Err(FlowError::Watchdog { name: "step_change".into(), value: change, limit: settings.max_step_change, time: s1 });
        }
        stats.max_projection = stats.max_projection.max(proj);
        for (f, d) in f_track.iter_mut().zip(&dp) {
            *f -= d;
        }
        g = gn;
        i = inn;
        let state = to_state(start.params, &dom, &g, &i, &start.j)?;
        let check = step % settings.check_every == 0 || step == steps;
        trace.push(row(&state, s1, check, &f_track, &mut stats)?);
        if step % settings.snapshot_every == 0 || step == steps {
            times.push(s1);
            potentials.push(path.at(s1));
            states.push(state);
        }
    }
    let ts: Vec<f64> = trace.iter().map(|r| r.time).collect();
    let nus: Vec<f64> = trace.iter().map(|r| r.nu).collect();
    for (r, jv) in trace.iter_mut().zip(cumulative_integral(&ts, &nus)) {
        r.j = jv;
    }
    stats.seconds = clock.elapsed().as_secs_f64();
    Ok(FlowPath { times, states, potentials, trace, stats })
}

/// `J` at the end of the path, with `J(start) = 0`.
pub fn j_functional(path: &FlowPath) -> f64 {
    path.trace.last().map(|r| r.j).unwrap_or(0.0)
}

/// `(time, J)` at every step.
pub fn j_samples(path: &FlowPath) -> Vec<(f64, f64)> {
    path.trace.iter().map(|r| (r.time, r.j)).collect()
}

/// Seeded invariant potentials `sum_{k=1..4} a_k T_k(p)` with Chebyshev
/// polynomials in the angle function, scaled to unit sup-norm. Functions
/// of `p` are smooth across the circles collapsing at `p = +-1`, unlike
/// generic functions of `t`.
pub fn random_invariant_potentials(p: &ReducedField<f64>, seed: u64, count: usize) -> Vec<ReducedField<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let phi = p.map(|&x| {
                let (mut t0, mut t1, mut acc) = (1.0, x, 0.0);
                for ak in &a {
                    acc += ak * t1;
                    let t2 = 2.0 * x * t1 - t0;
                    t0 = t1;
                    t1 = t2;
                }
                acc
            });
            let sup = phi.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            phi.scale(1.0 / sup)
        })
        .collect()
}

pub fn sech_potential(domain: &Arc<Domain>) -> ReducedField<f64> {
    ReducedField::from_fn(domain, |t| 1.0 / t.cosh())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RigiditySettings {
    pub t_end: f64,
    pub dt: f64,
    /// Steps between `J` samples.
    pub sample_every: usize,
    pub descent_iterations: usize,
    pub watchdog: f64,
}

impl Default for RigiditySettings {
    fn default() -> Self {
        RigiditySettings { t_end: 0.5, dt: 1e-2, sample_every: 5, descent_iterations: 12, watchdog: 1e-5 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityReport {
    /// Samples of the path in increasing time, covering `[-T, T]`.
    pub times: Vec<f64>,
    pub j: Vec<f64>,
    pub nu: Vec<f64>,
    pub second_variation: Vec<f64>,
    /// Structural soliton residual of the stored states, in time order.
    pub structural: Vec<f64>,
    /// Smallest structural residual over the stored states with `t != 0`.
    pub structural_away: f64,
    pub min_second_difference: f64,
    pub argmin_time: f64,
    /// `(path time, nu)` along the descent from `t = T`.
    pub descent: Vec<(f64, f64)>,
    pub recovery_error: f64,
    pub report: Report,
}

fn recovery_error(a: &GkState, b: &GkState) -> f64 {
    let dom = a.domain();
    dom.grid
        .interior()
        .map(|k| {
            let dg = (a.g.at(k).0 - b.g.at(k).0).amax() / b.g.at(k).0.amax();
            let di = (a.i.at(k).0 - b.i.at(k).0).amax();
            dg.max(di)
        })
        .fold(0.0, f64::max)
}

/// Runs the constant-speed path generated by `phi` over `[-T, T]` from the
/// soliton, samples `J`, checks convexity and the location of the minimum,
/// evaluates the soliton residual away from `t = 0`, and walks back from
/// `t = T` by Newton-preconditioned gradient descent on `J`.
pub fn rigidity_experiment(
    sol: &SolitonSolution,
    phi: &ReducedField<f64>,
    settings: &RigiditySettings,
) -> Result<RigidityReport, FlowError> {
    let start = sol.state()?;
    let ctx = NuContext::from_solution(sol);
    let path = PotentialPath::constant(phi.clone());
    let sup_phi = phi.values().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let mut report = Report::default();
    if sup_phi == 0.0 || phi.dt().max_abs_interior() == 0.0 {
        report.push("nu_at_soliton", 0.0);
        return Ok(RigidityReport {
            times: vec![0.0],
            j: vec![0.0],
            nu: vec![0.0],
            second_variation: vec![0.0],
            structural: vec![0.0],
            structural_away: 0.0,
            min_second_difference: 0.0,
            argmin_time: 0.0,
            descent: Vec::new(),
            recovery_error: 0.0,
            report,
        });
    }
    let fs = |t_end: f64| FlowSettings {
        t_end,
        dt: settings.dt,
        watchdog: settings.watchdog,
        check_every: settings.sample_every,
        snapshot_every: settings.sample_every,
        ..Default::default()
    };
    let fwd = integrate_flow(&start, &path, &ctx, &fs(settings.t_end))?;
    let bwd = integrate_flow(&start, &path, &ctx, &fs(-settings.t_end))?;

    let mut rows: Vec<&TraceRow> = bwd.trace.iter().skip(1).step_by(1).collect();
    rows.reverse();
    rows.extend(fwd.trace.iter());
    let sampled: Vec<&TraceRow> = {
        let zero = bwd.trace.len() - 1;
        rows.iter().enumerate().filter(|(k, _)| (*k as isize - zero as isize) % settings.sample_every as isize == 0).map(|(_, r)| *r).collect()
    };
    let times: Vec<f64> = sampled.iter().map(|r| r.time).collect();
    let j: Vec<f64> = sampled.iter().map(|r| r.j).collect();
    let nu: Vec<f64> = sampled.iter().map(|r| r.nu).collect();
    let second_variation: Vec<f64> = sampled.iter().map(|r| r.second_variation).collect();
    let min_second_difference = j.windows(3).map(|w| w[0] - 2.0 * w[1] + w[2]).fold(f64::INFINITY, f64::min);
    let argmin = j.iter().enumerate().fold((0, f64::INFINITY), |(bk, bv), (k, v)| if *v < bv { (k, *v) } else { (bk, bv) }).0;
    let argmin_time = times[argmin];

    let mut structural = Vec::new();
    let mut snaps: Vec<(f64, &GkState)> = bwd.times.iter().zip(&bwd.states).skip(1).map(|(t, s)| (*t, s)).collect();
    snaps.reverse();
    snaps.extend(fwd.times.iter().zip(&fwd.states).map(|(t, s)| (*t, s)));
    let mut away = f64::INFINITY;
    for (t, s) in &snaps {
        let r = structural_residual_tensor(s, &sol.f, &sol.kappa_i, &sol.kappa_j)?.sup_interior(|v| *v);
        if *t != 0.0 {
            away = away.min(r);
        }
        structural.push(r);
    }

    // Descent from t = T back towards the critical point.
    let mut state = fwd.last_state().clone();
    let mut s = settings.t_end;
    let mut descent = Vec::new();
    for _ in 0..settings.descent_iterations {
        let (pots, _) = hamiltonian_potentials(&state, &ctx)?;
        let nu_s = nu_with(&state, &pots, phi)?;
        let sv = second_variation_with(&state, &pots, phi)?;
        descent.push((s, nu_s));
        if nu_s.abs() <= 1e-14 * sup_phi * ctx.reference_volume || sv <= 0.0 {
            break;
        }
        let delta = -nu_s / sv;
        let n = (delta.abs() / settings.dt).ceil().max(1.0) as usize;
        let h = delta / n as f64;
        for k in 0..n {
            state = flow_step(&state, &start.sigma, &path, s + k as f64 * h, h)?;
        }
        s += delta;
    }
    let rec = recovery_error(&state, &start);

    report.push("nu_at_soliton", (fwd.trace[0].nu / (sup_phi * ctx.reference_volume)).abs());
    report.push("convexity_violation", (-min_second_difference).max(0.0));
    report.push("argmin_offset", argmin_time.abs());
    report.push("min_second_variation_violation", (-second_variation.iter().cloned().fold(f64::INFINITY, f64::min)).max(0.0));
    report.push("recovery_error", rec);
    report.push("descent_final_time", s.abs());
    Ok(RigidityReport {
        times,
        j,
        nu,
        second_variation,
        structural,
        min_second_difference,
        argmin_time,
        structural_away: away,
        descent,
        recovery_error: rec,
        report,
    })
}

/// A square patch `[-L, L]^2` with the Poisson bivector
/// `pi = rho(x, y) d/dx ^ d/dy`, used to witness that `phi -> X_phi`
/// reverses brackets for potentials depending on two variables.
pub struct PoissonPatch {
    grid: Grid,
    rho: Vec<f64>,
}

impl PoissonPatch {
    pub fn new(half_width: f64, n: usize, rho: impl Fn(f64, f64) -> f64) -> Result<PoissonPatch, FieldError> {
        let grid = Grid::new(GridSpec::uniform(half_width, n))?;
        let t = grid.t().to_vec();
        let rho = (0..n * n).map(|k| rho(t[k / n], t[k % n])).collect();
        Ok(PoissonPatch { grid, rho })
    }

    pub fn n(&self) -> usize {
        self.grid.len()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (n, t) = (self.n(), self.grid.t());
        (0..n * n).map(|k| f(t[k / n], t[k % n])).collect()
    }

    /// `(d/dx f, d/dy f)`; index `k = ix * n + iy`.
    fn grad(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut fx = vec![0.0; n * n];
        let mut fy = vec![0.0; n * n];
        for a in 0..n {
            let row: Vec<f64> = (0..n).map(|b| f[a * n + b]).collect();
            for (b, v) in self.grid.derivative(&row).into_iter().enumerate() {
                fy[a * n + b] = v;
            }
            let col: Vec<f64> = (0..n).map(|b| f[b * n + a]).collect();
            for (b, v) in self.grid.derivative(&col).into_iter().enumerate() {
                fx[b * n + a] = v;
            }
        }
        (fx, fy)
    }

    /// `sigma(alpha) = rho (-alpha_y, alpha_x)`, so `{f, g} = rho (f_x g_y - f_y g_x)`.
    pub fn hamiltonian(&self, f: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (fx, fy) = self.grad(f);
        let xs = fy.iter().zip(&self.rho).map(|(d, r)| r * d).collect();
        let ys = fx.iter().zip(&self.rho).map(|(d, r)| -r * d).collect();
        (xs, ys)
    }

    pub fn bracket(&self, f: &[f64], g: &[f64]) -> Vec<f64> {
        let (fx, fy) = self.grad(f);
        let (gx, gy) = self.grad(g);
        (0..f.len()).map(|k| self.rho[k] * (fx[k] * gy[k] - fy[k] * gx[k])).collect()
    }

    pub fn lie_bracket(&self, x: &(Vec<f64>, Vec<f64>), y: &(Vec<f64>, Vec<f64>)) -> (Vec<f64>, Vec<f64>) {
        let (yxx, yxy) = self.grad(&y.0);
        let (yyx, yyy) = self.grad(&y.1);
        let (xxx, xxy) = self.grad(&x.0);
        let (xyx, xyy) = self.grad(&x.1);
        let m = x.0.len();
        let a = (0..m).map(|k| x.0[k] * yxx[k] + x.1[k] * yxy[k] - y.0[k] * xxx[k] - y.1[k] * xxy[k]).collect();
        let b = (0..m).map(|k| x.0[k] * yyx[k] + x.1[k] * yyy[k] - y.0[k] * xyx[k] - y.1[k] * xyy[k]).collect();
        (a, b)
    }

    /// Interior sup of `[X_f, X_g] + X_{{f,g}}`.
    pub fn antihomomorphism_defect(&self, f: &[f64], g: &[f64]) -> f64 {
        let lb = self.lie_bracket(&self.hamiltonian(f), &self.hamiltonian(g));
        let xb = self.hamiltonian(&self.bracket(f, g));
        let n = self.n();
        let skip = n / 8;
        let mut m: f64 = 0.0;
        for a in skip..n - skip {
            for b in skip..n - skip {
                let k = a * n + b;
                m = m.max((lb.0[k] + xb.0[k]).abs()).max((lb.1[k] + xb.1[k]).abs());
            }
        }
        m
    }
}
