//! Python bindings: Hopf parameters, GK states, the soliton solver, the
//! Hamiltonian flow and the CLI entry point.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gklab::error::{FlowError, HopfError, SolitonError};
use gklab::field::{GridSpec, ReducedField};
use gklab::flow::{
    integrate_flow, random_invariant_potentials, rigidity_experiment, sech_potential, FlowSettings, NuContext,
    PotentialPath, RigiditySettings,
};
use gklab::hopf::{self, derive_state, psi_pm, state_columns, verify_gk};
use gklab::report::Report;
use gklab::soliton::{self, default_initial_profile, solve_soliton, verify_soliton_full, SolverOptions};

fn hopf_err(e: HopfError) -> PyErr {
    match e {
        HopfError::InvalidParams(_) | HopfError::ProfileRange { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn soliton_err(e: SolitonError) -> PyErr {
    match e {
        SolitonError::Hopf(h) => hopf_err(h),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn flow_err(e: FlowError) -> PyErr {
    match e {
        FlowError::Settings(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn report_dict(rep: &Report) -> BTreeMap<String, f64> {
    rep.entries.iter().map(|e| (e.name.clone(), e.value)).collect()
}

fn grid(t_max: f64, n: usize) -> PyResult<GridSpec> {
    let spec = GridSpec::uniform(t_max, n);
    spec.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(spec)
}

/// Moduli `0 < |alpha| <= |beta| < 1` of a diagonal Hopf surface.
#[pyclass(module = "gklab_py", frozen)]
struct HopfParams {
    inner: hopf::HopfParams,
}

#[pymethods]
impl HopfParams {
    #[new]
    fn new(alpha_abs: f64, beta_abs: f64) -> PyResult<Self> {
        Ok(HopfParams { inner: hopf::HopfParams::new(alpha_abs, beta_abs).map_err(hopf_err)? })
    }

    /// From `a = log|alpha|`, `b = log|beta|`.
    #[staticmethod]
    fn from_logs(a: f64, b: f64) -> PyResult<Self> {
        Ok(HopfParams { inner: hopf::HopfParams::from_logs(a, b).map_err(hopf_err)? })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn ratio(&self) -> f64 {
        self.inner.ratio()
    }

    fn __repr__(&self) -> String {
        format!("HopfParams(alpha_abs={}, beta_abs={})", self.inner.alpha_abs, self.inner.beta_abs)
    }
}

/// A GK structure `(g, I, J)` sampled on the `t` grid.
#[pyclass(module = "gklab_py", frozen)]
struct GkState {
    inner: hopf::GkState,
}

#[pymethods]
impl GkState {
    /// State of the profile `p = amplitude * tanh(t / scale)`.
    #[staticmethod]
    #[pyo3(signature = (params, amplitude=0.9, scale=2.0, t_max=20.0, n=2048))]
    fn tanh(params: &HopfParams, amplitude: f64, scale: f64, t_max: f64, n: usize) -> PyResult<Self> {
        let d = params.inner.domain(grid(t_max, n)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let prof = hopf::Profile::tanh(&d, amplitude, scale).map_err(hopf_err)?;
        Ok(GkState { inner: derive_state(&params.inner, &prof).map_err(hopf_err)? })
    }

    /// State of sampled `p` values on the uniform grid over `[-t_max, t_max]`.
    #[staticmethod]
    fn from_profile(params: &HopfParams, t_max: f64, p: Vec<f64>) -> PyResult<Self> {
        let d = params.inner.domain(grid(t_max, p.len())?).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let field = ReducedField::new(d, p).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let prof = hopf::Profile::new(field).map_err(hopf_err)?;
        Ok(GkState { inner: derive_state(&params.inner, &prof).map_err(hopf_err)? })
    }

    fn t(&self) -> Vec<f64> {
        self.inner.t().to_vec()
    }

    fn angle(&self) -> Vec<f64> {
        self.inner.angle.values().to_vec()
    }

    fn det_plus(&self) -> Vec<f64> {
        self.inner.det_plus.values().to_vec()
    }

    fn det_minus(&self) -> Vec<f64> {
        self.inner.det_minus.values().to_vec()
    }

    /// Row-major `g` at sample `k`.
    fn metric(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        if k >= self.inner.g.len() {
            return Err(PyValueError::new_err(format!("sample {k} out of range")));
        }
        let m = self.inner.g.at(k).0;
        Ok((0..4).map(|i| (0..4).map(|j| m[(i, j)]).collect()).collect())
    }

    /// Interior sup-norms of the GK identities.
    fn verify(&self) -> BTreeMap<String, f64> {
        report_dict(&verify_gk(&self.inner))
    }

    /// Scalar columns of the state CSV.
    fn columns(&self) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let f = ReducedField::constant(self.inner.domain(), 0.0);
        let psi = psi_pm(&self.inner, &f, None).map_err(hopf_err)?;
        Ok(state_columns(&self.inner, Some(&f), Some(&psi)).map_err(hopf_err)?.into_iter().collect())
    }

    fn __len__(&self) -> usize {
        self.inner.g.len()
    }
}

/// Converged steady soliton.
#[pyclass(module = "gklab_py", frozen)]
struct Soliton {
    inner: soliton::SolitonSolution,
}

#[pymethods]
impl Soliton {
    #[staticmethod]
    #[pyo3(signature = (params, t_max=6.0, n=2048))]
    fn solve(params: &HopfParams, t_max: f64, n: usize) -> PyResult<Self> {
        let init = default_initial_profile(&params.inner, grid(t_max, n)?).map_err(soliton_err)?;
        Ok(Soliton { inner: solve_soliton(&params.inner, &init, &SolverOptions::default()).map_err(soliton_err)? })
    }

    #[getter]
    fn kappa_i(&self) -> [f64; 3] {
        self.inner.kappa_i
    }

    #[getter]
    fn kappa_j(&self) -> [f64; 3] {
        self.inner.kappa_j
    }

    #[getter]
    fn newton_residuals(&self) -> Vec<f64> {
        self.inner.trace.iter().map(|s| s.residual).collect()
    }

    fn t(&self) -> Vec<f64> {
        self.inner.profile.p.t().to_vec()
    }

    fn p(&self) -> Vec<f64> {
        self.inner.profile.p.values().to_vec()
    }

    fn f(&self) -> Vec<f64> {
        self.inner.f.values().to_vec()
    }

    fn state(&self) -> PyResult<GkState> {
        Ok(GkState { inner: self.inner.state().map_err(hopf_err)? })
    }

    /// Structural, tensorial, Bismut, vector-field and scalar residuals.
    fn verify(&self) -> PyResult<BTreeMap<String, f64>> {
        Ok(report_dict(&verify_soliton_full(&self.inner).map_err(soliton_err)?))
    }

    /// Seeded random invariant potentials on the soliton grid.
    fn random_potentials(&self, seed: u64, count: usize) -> Vec<Vec<f64>> {
        random_invariant_potentials(&self.inner.profile.p, seed, count).into_iter().map(|f| f.into_values()).collect()
    }

    fn sech(&self) -> Vec<f64> {
        sech_potential(self.inner.profile.domain()).into_values()
    }

    /// Flow along the constant potential `phi` (sech when omitted); returns
    /// the trace columns.
    #[pyo3(signature = (phi=None, t_end=0.1, dt=1e-3))]
    fn flow(&self, py: Python<'_>, phi: Option<Vec<f64>>, t_end: f64, dt: f64) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let phi = self.potential(phi)?;
        let sol = &self.inner;
        let path = py
            .detach(|| {
                let start = sol.state()?;
                let settings = FlowSettings { t_end, dt, ..Default::default() };
                integrate_flow(&start, &PotentialPath::constant(phi), &NuContext::from_solution(sol), &settings)
            })
            .map_err(flow_err)?;
        let tr = &path.trace;
        let col = |f: fn(&gklab::flow::TraceRow) -> f64| tr.iter().map(f).collect::<Vec<f64>>();
        Ok(BTreeMap::from([
            ("time".to_string(), col(|r| r.time)),
            ("J".to_string(), col(|r| r.j)),
            ("nu".to_string(), col(|r| r.nu)),
            ("second_variation".to_string(), col(|r| r.second_variation)),
            ("gk_max".to_string(), col(|r| r.gk_max)),
            ("sigma_drift".to_string(), col(|r| r.sigma_drift)),
            ("f_plus_defect".to_string(), col(|r| r.f_plus_defect)),
        ]))
    }

    /// `J` along the path through the soliton over `[-t_end, t_end]`.
    #[pyo3(signature = (phi=None, t_end=0.1, dt=5e-3, sample_every=2))]
    fn rigidity(
        &self,
        py: Python<'_>,
        phi: Option<Vec<f64>>,
        t_end: f64,
        dt: f64,
        sample_every: usize,
    ) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let phi = self.potential(phi)?;
        let settings = RigiditySettings { t_end, dt, sample_every, ..Default::default() };
        let sol = &self.inner;
        let r = py.detach(|| rigidity_experiment(sol, &phi, &settings)).map_err(flow_err)?;
        let mut out = BTreeMap::from([
            ("time".to_string(), r.times),
            ("J".to_string(), r.j),
            ("nu".to_string(), r.nu),
            ("second_variation".to_string(), r.second_variation),
        ]);
        for e in r.report.entries {
            out.insert(e.name, vec![e.value]);
        }
        Ok(out)
    }
}

impl Soliton {
    fn potential(&self, phi: Option<Vec<f64>>) -> PyResult<ReducedField<f64>> {
        let d = self.inner.profile.domain();
        match phi {
            None => Ok(sech_potential(d)),
            Some(v) => ReducedField::new(d.clone(), v).map_err(|e| PyValueError::new_err(e.to_string())),
        }
    }
}

/// `J` from its eigen-covectors at angle `p` for `r = b/a`.
#[pyfunction]
fn j_matrix(p: f64, a: f64, b: f64) -> PyResult<Vec<Vec<f64>>> {
    let r = hopf::HopfParams::from_logs(a, b).map_err(hopf_err)?.ratio();
    let j = hopf::j_matrix(1.0 + p, 1.0 - p, r).ok_or_else(|| PyValueError::new_err("I + J or I - J is singular"))?;
    Ok((0..4).map(|i| (0..4).map(|k| j.0[(i, k)]).collect()).collect())
}

/// Runs the command line with `args` (without the program name) and
/// returns the exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("gklab".to_string()).chain(args).collect();
    py.detach(|| gklab::cli::run(argv))
}

#[pymodule]
fn gklab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<HopfParams>()?;
    m.add_class::<GkState>()?;
    m.add_class::<Soliton>()?;
    m.add_function(wrap_pyfunction!(j_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
