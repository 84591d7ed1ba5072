//! Command-line driver: config resolution, experiment orchestration and
//! result files.
//!
//! Every command writes into `--out` and finishes with `manifest.json`,
//! which embeds the resolved config and a SHA-256 of each output file.
//! Exit codes: 0 success, 1 numerical or tolerance failure, 2 bad config.

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{FlowError, HopfError, SolitonError};
use crate::field::io::fmt_num;
use crate::field::{Domain, GridSpec, ReducedField};
use crate::flow::{
    integrate_flow, random_invariant_potentials, rigidity_experiment, sech_potential, FlowSettings, NuContext,
    PotentialPath, RigiditySettings,
};
use crate::hopf::{derive_state, psi_pm, state_columns, verify_gk, HopfParams, Profile};
use crate::report::Report;
use crate::soliton::{
    default_initial_profile, smooth_tail_rates, solve_soliton, verify_soliton_full, SolitonSolution, SolverOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "gklab", version, about = "Generalized Kahler structures on diagonal Hopf surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// |alpha| in (0, 1).
    #[arg(long, global = true, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// |beta| in [|alpha|, 1).
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<f64>,
    /// Grid points, a power of two in [32, 65536].
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    t_max: Option<f64>,
    /// Residual tolerance for `verify` and the flow watchdog.
    #[arg(long, global = true, allow_hyphen_values = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Check the GK identities on a configured profile.
    Verify,
    /// Solve for the soliton and run the full verification.
    Solve,
    /// Deform the soliton along a potential and trace J.
    Flow,
    /// J along a constant-speed path through the soliton, plus descent.
    Rigidity,
    /// Convexity and criticality of J for seeded random potentials.
    Functional,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Solve => "solve",
            Command::Flow => "flow",
            Command::Rigidity => "rigidity",
            Command::Functional => "functional",
        }
    }

    fn default_grid(self) -> (f64, usize) {
        match self {
            Command::Verify => (20.0, 2048),
            Command::Solve => (6.0, 2048),
            // Wide domain: the normalization integrals of psi+- must not leak.
            Command::Flow | Command::Rigidity | Command::Functional => (12.0, 4096),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub t_max: Option<f64>,
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub gk: f64,
    pub structural: f64,
    pub tensor: f64,
    pub properties: f64,
    pub scalar: f64,
    pub bismut: f64,
    pub kappa: f64,
    /// Allowed negative discrete second difference of J.
    pub convexity: f64,
    /// |nu| at the soliton relative to sup |phi| and the volume.
    pub nu: f64,
    pub recovery: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gk: 1e-7,
            structural: 1e-10,
            tensor: 1e-6,
            properties: 1e-7,
            scalar: 1e-9,
            bismut: 1e-6,
            kappa: 1e-8,
            convexity: 1e-10,
            nu: 1e-8,
            recovery: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileSpec {
    /// `p = amplitude * tanh(t / scale)`.
    Tanh { amplitude: f64, scale: f64 },
    /// Two columns `t,p` with a header row, on a uniform symmetric grid.
    Csv { path: PathBuf },
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec::Tanh { amplitude: 0.9, scale: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Zero,
    Sech,
    /// Member `index` of the seeded random family.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub potential: PotentialKind,
    pub index: usize,
    pub t_end: f64,
    pub dt: f64,
    pub watchdog: f64,
    pub max_step_change: f64,
    pub check_every: usize,
    pub snapshot_every: usize,
    pub check_window: Option<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let s = FlowSettings::default();
        FlowConfig {
            potential: PotentialKind::Sech,
            index: 0,
            // sech leaves the positive cone near s = 0.12 on the standard surface.
            t_end: 0.1,
            dt: s.dt,
            watchdog: s.watchdog,
            max_step_change: s.max_step_change,
            check_every: s.check_every,
            snapshot_every: s.snapshot_every,
            check_window: s.check_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigidityConfig {
    pub potential: PotentialKind,
    pub index: usize,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub descent_iterations: usize,
    pub watchdog: f64,
}

impl Default for RigidityConfig {
    fn default() -> Self {
        RigidityConfig {
            potential: PotentialKind::Sech,
            index: 0,
            t_end: 0.1,
            dt: 5e-3,
            sample_every: 2,
            descent_iterations: 12,
            watchdog: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunctionalConfig {
    pub count: usize,
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
    pub descent_iterations: usize,
}

impl Default for FunctionalConfig {
    fn default() -> Self {
        FunctionalConfig { count: 20, t_end: 5e-3, dt: 5e-4, sample_every: 1, descent_iterations: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha_abs: f64,
    pub beta_abs: f64,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub profile: ProfileSpec,
    pub solver: SolverOptions,
    pub flow: FlowConfig,
    pub rigidity: RigidityConfig,
    pub functional: FunctionalConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e1 = (-1.0f64).exp();
        RunConfig {
            alpha_abs: e1,
            beta_abs: e1,
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            seed: 7,
            profile: ProfileSpec::default(),
            solver: SolverOptions::default(),
            flow: FlowConfig::default(),
            rigidity: RigidityConfig::default(),
            functional: FunctionalConfig::default(),
            out: PathBuf::from("gklab-out"),
        }
    }
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<HopfError> for Failure {
    fn from(e: HopfError) -> Self {
        match e {
            HopfError::InvalidParams(_) | HopfError::ProfileRange { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<SolitonError> for Failure {
    fn from(e: SolitonError) -> Self {
        match e {
            SolitonError::BoundaryCondition(_) => Failure::Config(e.to_string()),
            SolitonError::Hopf(h) => h.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<FlowError> for Failure {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::Settings(_) => Failure::Config(e.to_string()),
            FlowError::Hopf(h) => h.into(),
            FlowError::Soliton(s) => s.into(),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<crate::error::FieldError> for Failure {
    fn from(e: crate::error::FieldError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn params(&self) -> Result<HopfParams, String> {
        HopfParams::new(self.alpha_abs, self.beta_abs).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params()?;
        if let Some(n) = self.grid.n {
            if !n.is_power_of_two() || !(32..=65536).contains(&n) {
                return Err(format!("grid n = {n} must be a power of two in [32, 65536]"));
            }
        }
        if let Some(t) = self.grid.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(format!("t_max = {t} must be positive"));
            }
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("gk", tol.gk),
            ("structural", tol.structural),
            ("tensor", tol.tensor),
            ("properties", tol.properties),
            ("scalar", tol.scalar),
            ("bismut", tol.bismut),
            ("kappa", tol.kappa),
            ("convexity", tol.convexity),
            ("nu", tol.nu),
            ("recovery", tol.recovery),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("tolerance {name} = {v} must be finite and nonnegative"));
            }
        }
        if let ProfileSpec::Tanh { amplitude, scale } = self.profile {
            if !(amplitude.abs() < 1.0 && scale > 0.0 && scale.is_finite()) {
                return Err(format!("tanh profile needs |amplitude| < 1 and scale > 0, got {amplitude}, {scale}"));
            }
        }
        Ok(())
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = cli.alpha {
        cfg.alpha_abs = v;
    }
    if let Some(v) = cli.beta {
        cfg.beta_abs = v;
    }
    if let Some(v) = cli.grid_n {
        cfg.grid.n = Some(v);
    }
    if let Some(v) = cli.t_max {
        cfg.grid.t_max = Some(v);
    }
    if let Some(v) = cli.tol {
        cfg.tolerances.gk = v;
        cfg.flow.watchdog = v;
        cfg.rigidity.watchdog = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    let (t_max, n) = cli.command.default_grid();
    // A CSV profile brings its own grid.
    if !matches!(cfg.profile, ProfileSpec::Csv { .. }) || cli.command != Command::Verify {
        cfg.grid.t_max.get_or_insert(t_max);
        cfg.grid.n.get_or_insert(n);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn grid_spec(cfg: &RunConfig) -> GridSpec {
    GridSpec::uniform(cfg.grid.t_max.expect("resolved"), cfg.grid.n.expect("resolved"))
}

/// Output files collected in memory and written together.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    fn json(&mut self, name: &str, v: &Value) {
        let mut b = serde_json::to_vec_pretty(v).expect("json value");
        b.push(b'\n');
        self.add(name, b);
    }

    fn table(&mut self, name: &str, cols: &[(String, Vec<f64>)]) -> Result<(), Failure> {
        self.add(name, csv_table(cols)?);
        Ok(())
    }
}

/// RFC-4180 CSV of equally long numeric columns.
fn csv_table(cols: &[(String, Vec<f64>)]) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Numerical(e.to_string());
    w.write_record(cols.iter().map(|c| c.0.as_str())).map_err(io)?;
    let rows = cols.first().map_or(0, |c| c.1.len());
    for k in 0..rows {
        w.write_record(cols.iter().map(|c| fmt_num(c.1[k]))).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Numerical(e.to_string()))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_outputs(dir: &Path, command: Command, cfg: &RunConfig, outputs: &Outputs, status: &Result<(), Failure>) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut all = Sha256::new();
    let mut listed = Vec::new();
    for (name, bytes) in &outputs.files {
        fs::write(dir.join(name), bytes).map_err(|e| format!("{name}: {e}"))?;
        let h = sha256_hex(bytes);
        all.update(name.as_bytes());
        all.update([0]);
        all.update(bytes);
        listed.push(json!({ "file": name, "sha256": h, "bytes": bytes.len() }));
    }
    let (code, message) = match status {
        Ok(()) => (EXIT_OK, Value::Null),
        Err(f) => (f.code(), Value::String(match f {
            Failure::Config(m) | Failure::Numerical(m) => m.clone(),
        })),
    };
    let manifest = json!({
        "tool": "gklab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command.name(),
        "config": cfg,
        "seed": cfg.seed,
        "exit_code": code,
        "message": message,
        "outputs": listed,
        "content_hash": all.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>(),
    });
    let mut b = serde_json::to_vec_pretty(&manifest).map_err(|e| e.to_string())?;
    b.push(b'\n');
    fs::write(dir.join("manifest.json"), b).map_err(|e| format!("manifest.json: {e}"))
}

fn report_json(rep: &Report, tol: impl Fn(&str) -> f64) -> Value {
    Value::Array(
        rep.entries
            .iter()
            .map(|e| {
                let t = tol(&e.name);
                json!({ "name": e.name, "value": num(e.value), "tolerance": t, "pass": e.value < t })
            })
            .collect(),
    )
}

/// JSON has no NaN; non-finite values become strings.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(v.to_string())
    }
}

fn load_profile_csv(path: &Path, cfg: &RunConfig, params: &HopfParams) -> Result<Profile, Failure> {
    let bad = |m: String| Failure::Config(format!("{}: {m}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let head = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if head.len() != 2 || head[0].trim() != "t" || head[1].trim() != "p" {
        return Err(bad(format!("expected header t,p, found {:?}", head.iter().collect::<Vec<_>>())));
    }
    let (mut t, mut p) = (Vec::new(), Vec::new());
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {s:?}: {e}", i + 1)));
        t.push(parse(&rec[0])?);
        p.push(parse(&rec[1])?);
    }
    let n = t.len();
    if !n.is_power_of_two() || !(32..=65536).contains(&n) {
        return Err(bad(format!("{n} rows; need a power of two in [32, 65536]")));
    }
    let spec = GridSpec::uniform(t[n - 1], n);
    if cfg.grid.n.is_some_and(|m| m != n) || cfg.grid.t_max.is_some_and(|m| m != t[n - 1]) {
        return Err(bad("profile grid disagrees with the configured grid".into()));
    }
    let domain = params.domain(spec).map_err(|e| bad(e.to_string()))?;
    for (k, (a, b)) in t.iter().zip(domain.t()).enumerate() {
        if (a - b).abs() > 1e-9 * (1.0 + b.abs()) {
            return Err(bad(format!("row {}: t = {a} is off the uniform grid (expected {b})", k + 1)));
        }
    }
    let field = ReducedField::new(domain, p).map_err(|e| bad(e.to_string()))?;
    Profile::new(field).map_err(|e| bad(e.to_string()))
}

fn cmd_verify(cfg: &mut RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let params = cfg.params().map_err(Failure::Config)?;
    let profile = match &cfg.profile {
        ProfileSpec::Tanh { amplitude, scale } => {
            let d = params.domain(grid_spec(cfg)).map_err(|e| Failure::Config(e.to_string()))?;
            Profile::tanh(&d, *amplitude, *scale)?
        }
        ProfileSpec::Csv { path } => {
            let pr = load_profile_csv(path, cfg, &params)?;
            let spec = pr.domain().grid.spec();
            cfg.grid = GridConfig { t_max: Some(spec.t_max), n: Some(spec.n) };
            pr
        }
    };
    let state = derive_state(&params, &profile)?;
    let f = ReducedField::constant(profile.domain(), 0.0);
    let psi = psi_pm(&state, &f, None)?;
    let rep = verify_gk(&state);
    out.table("state.csv", &state_columns(&state, Some(&f), Some(&psi))?)?;
    let tol = cfg.tolerances.gk;
    out.json(
        "verify.json",
        &json!({ "params": params, "grid": grid_spec(cfg), "profile": cfg.profile, "residuals": report_json(&rep, |_| tol) }),
    );
    let failures = rep.failures(tol);
    if failures.is_empty() {
        Ok(())
    } else {
        let names: Vec<String> = failures.iter().map(|r| format!("{} = {:e}", r.name, r.value)).collect();
        Err(Failure::Numerical(format!("residuals above {tol:e}: {}", names.join(", "))))
    }
}

fn soliton_tolerance(tol: &Tolerances, name: &str) -> f64 {
    match name {
        "structural" => tol.structural,
        "structural_tensor" | "soliton_metric" | "soliton_torsion" => tol.tensor,
        "bismut" => tol.bismut,
        "scalar_identity" => tol.scalar,
        "kappa_frame" => tol.kappa,
        _ => tol.properties,
    }
}

fn solve(cfg: &RunConfig) -> Result<SolitonSolution, Failure> {
    let params = cfg.params().map_err(Failure::Config)?;
    let init = default_initial_profile(&params, grid_spec(cfg))?;
    Ok(solve_soliton(&params, &init, &cfg.solver)?)
}

fn cmd_solve(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let sol = solve(cfg)?;
    let rep = verify_soliton_full(&sol)?;
    let state = sol.state()?;
    let (lp, lm) = smooth_tail_rates(&sol.params);
    let trace: Vec<Value> =
        sol.trace.iter().map(|s| json!({ "iteration": s.iteration, "residual": num(s.residual), "damping": s.damping })).collect();
    out.json(
        "soliton.json",
        &json!({
            "params": sol.params,
            "grid": grid_spec(cfg),
            "kappa_i": sol.kappa_i,
            "kappa_j": sol.kappa_j,
            "tail_rates": { "expected": { "plus": lp, "minus": lm }, "fitted": sol.tails },
            "residuals": report_json(&rep, |n| soliton_tolerance(&cfg.tolerances, n)),
            "newton": trace,
        }),
    );
    out.table("soliton_state.csv", &state_columns(&state, Some(&sol.f), Some(&sol.potentials))?)?;
    let mut c = Vec::new();
    let mut h = Vec::new();
    sol.profile.p.write_csv(&mut c)?;
    sol.profile.p.write_header(&mut h)?;
    h.push(b'\n');
    out.add("profile.csv", c);
    out.add("profile.json", h);
    let failures: Vec<String> = rep
        .entries
        .iter()
        .filter(|e| !(e.value < soliton_tolerance(&cfg.tolerances, &e.name)))
        .map(|e| format!("{} = {:e}", e.name, e.value))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("soliton checks failed: {}", failures.join(", "))))
    }
}

fn potential(kind: PotentialKind, index: usize, sol: &SolitonSolution, seed: u64) -> ReducedField<f64> {
    let d: &Arc<Domain> = sol.profile.domain();
    match kind {
        PotentialKind::Zero => ReducedField::constant(d, 0.0),
        PotentialKind::Sech => sech_potential(d),
        PotentialKind::Random => random_invariant_potentials(&sol.profile.p, seed, index + 1).pop().expect("count > 0"),
    }
}

fn cmd_flow(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let fc = &cfg.flow;
    let settings = FlowSettings {
        t_end: fc.t_end,
        dt: fc.dt,
        watchdog: fc.watchdog,
        max_step_change: fc.max_step_change,
        check_every: fc.check_every,
        snapshot_every: fc.snapshot_every,
        check_window: fc.check_window,
    };
    settings.steps()?;
    let sol = solve(cfg)?;
    let phi = potential(fc.potential, fc.index, &sol, cfg.seed);
    let start = sol.state()?;
    let ctx = NuContext::from_solution(&sol);
    let path = integrate_flow(&start, &PotentialPath::constant(phi), &ctx, &settings)?;
    let tr = &path.trace;
    let col = |name: &str, f: &dyn Fn(&crate::flow::TraceRow) -> f64| (name.to_string(), tr.iter().map(f).collect::<Vec<f64>>());
    out.table(
        "flow_trace.csv",
        &[
            col("time", &|r| r.time),
            col("J", &|r| r.j),
            col("nu", &|r| r.nu),
            col("second_variation", &|r| r.second_variation),
            col("gk_max", &|r| r.gk_max),
            col("sigma_drift", &|r| r.sigma_drift),
            col("f_plus_defect", &|r| r.f_plus_defect),
            col("hamiltonian_defect", &|r| r.hamiltonian_defect),
        ],
    )?;
    let last = path.last_state();
    let f = &sol.f;
    out.table("flow_final_state.csv", &state_columns(last, Some(f), None)?)?;
    let s = &path.stats;
    out.json(
        "flow.json",
        &json!({
            "params": sol.params,
            "grid": grid_spec(cfg),
            "settings": settings,
            "steps": s.steps,
            "max_sigma_drift": num(s.max_sigma_drift),
            "max_f_plus_defect": num(s.max_f_plus_defect),
            "max_gk": num(s.max_gk),
            "max_projection": num(s.max_projection),
            "j_final": num(tr.last().map_or(0.0, |r| r.j)),
        }),
    );
    Ok(())
}

fn rigidity_settings(rc: &RigidityConfig) -> RigiditySettings {
    RigiditySettings {
        t_end: rc.t_end,
        dt: rc.dt,
        sample_every: rc.sample_every,
        descent_iterations: rc.descent_iterations,
        watchdog: rc.watchdog,
    }
}

fn rigidity_failures(rep: &Report, tol: &Tolerances) -> Vec<String> {
    let limit = |name: &str| match name {
        "nu_at_soliton" => tol.nu,
        "convexity_violation" => tol.convexity,
        "argmin_offset" | "min_second_variation_violation" => f64::MIN_POSITIVE,
        "recovery_error" => tol.recovery,
        _ => f64::INFINITY,
    };
    rep.entries.iter().filter(|e| !(e.value < limit(&e.name))).map(|e| format!("{} = {:e}", e.name, e.value)).collect()
}

fn cmd_rigidity(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let rc = &cfg.rigidity;
    let settings = rigidity_settings(rc);
    FlowSettings { t_end: settings.t_end, dt: settings.dt, ..Default::default() }.steps()?;
    let sol = solve(cfg)?;
    let phi = potential(rc.potential, rc.index, &sol, cfg.seed);
    let r = rigidity_experiment(&sol, &phi, &settings)?;
    out.table(
        "rigidity_trace.csv",
        &[
            ("time".into(), r.times.clone()),
            ("J".into(), r.j.clone()),
            ("nu".into(), r.nu.clone()),
            ("second_variation".into(), r.second_variation.clone()),
        ],
    )?;
    out.table(
        "rigidity_descent.csv",
        &[("time".into(), r.descent.iter().map(|d| d.0).collect()), ("nu".into(), r.descent.iter().map(|d| d.1).collect())],
    )?;
    out.json(
        "rigidity.json",
        &json!({
            "params": sol.params,
            "grid": grid_spec(cfg),
            "settings": settings,
            "structural": r.structural.iter().map(|v| num(*v)).collect::<Vec<_>>(),
            "structural_away": num(r.structural_away),
            "min_second_difference": num(r.min_second_difference),
            "argmin_time": r.argmin_time,
            "recovery_error": num(r.recovery_error),
            "report": report_json(&r.report, |_| f64::NAN),
        }),
    );
    let failures = rigidity_failures(&r.report, &cfg.tolerances);
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("rigidity checks failed: {}", failures.join(", "))))
    }
}

fn cmd_functional(cfg: &RunConfig, out: &mut Outputs) -> Result<(), Failure> {
    let fc = &cfg.functional;
    if fc.count == 0 {
        return Err(Failure::Config("functional.count must be positive".into()));
    }
    let settings = RigiditySettings {
        t_end: fc.t_end,
        dt: fc.dt,
        sample_every: fc.sample_every,
        descent_iterations: fc.descent_iterations,
        watchdog: cfg.rigidity.watchdog,
    };
    FlowSettings { t_end: settings.t_end, dt: settings.dt, ..Default::default() }.steps()?;
    let sol = solve(cfg)?;
    let phis = random_invariant_potentials(&sol.profile.p, cfg.seed, fc.count);
    let mut summary: Vec<(String, Vec<f64>)> = [
        "index",
        "sup_phi",
        "nu_at_soliton",
        "min_second_difference",
        "argmin_time",
        "min_second_variation",
        "recovery_error",
    ]
    .iter()
    .map(|s| (s.to_string(), Vec::new()))
    .collect();
    let mut samples: Vec<(String, Vec<f64>)> =
        ["index", "time", "J", "nu", "second_variation"].iter().map(|s| (s.to_string(), Vec::new())).collect();
    let mut failures = Vec::new();
    for (k, phi) in phis.iter().enumerate() {
        let r = rigidity_experiment(&sol, phi, &settings)?;
        let sup = phi.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let row = [
            k as f64,
            sup,
            r.report.get("nu_at_soliton").unwrap_or(f64::NAN),
            r.min_second_difference,
            r.argmin_time,
            r.second_variation.iter().cloned().fold(f64::INFINITY, f64::min),
            r.recovery_error,
        ];
        for (c, v) in summary.iter_mut().zip(row) {
            c.1.push(v);
        }
        for i in 0..r.times.len() {
            for (c, v) in samples.iter_mut().zip([k as f64, r.times[i], r.j[i], r.nu[i], r.second_variation[i]]) {
                c.1.push(v);
            }
        }
        failures.extend(rigidity_failures(&r.report, &cfg.tolerances).into_iter().map(|m| format!("potential {k}: {m}")));
    }
    out.table("functional.csv", &summary)?;
    out.table("functional_samples.csv", &samples)?;
    out.json(
        "functional.json",
        &json!({ "params": sol.params, "grid": grid_spec(cfg), "seed": cfg.seed, "count": fc.count, "settings": settings, "failures": failures }),
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(failures.join("; ")))
    }
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("GKLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| format!("GKLAB_THREADS = {v:?} is not a positive integer"))?;
    if n == 0 {
        return Err("GKLAB_THREADS must be positive".into());
    }
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    if let Err(m) = init_threads() {
        eprintln!("error: {m}");
        return EXIT_CONFIG;
    }
    let mut cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(m) => {
            eprintln!("error: config: {m}");
            return EXIT_CONFIG;
        }
    };
    let mut out = Outputs::default();
    let status = match cli.command {
        Command::Verify => cmd_verify(&mut cfg, &mut out),
        Command::Solve => cmd_solve(&cfg, &mut out),
        Command::Flow => cmd_flow(&cfg, &mut out),
        Command::Rigidity => cmd_rigidity(&cfg, &mut out),
        Command::Functional => cmd_functional(&cfg, &mut out),
    };
    if let Err(Failure::Config(m)) = &status {
        eprintln!("error: config: {m}");
        return EXIT_CONFIG;
    }
    if let Err(m) = write_outputs(&cfg.out.clone(), cli.command, &cfg, &out, &status) {
        eprintln!("error: {m}");
        return EXIT_NUMERICAL;
    }
    match status {
        Ok(()) => {
            println!("{}: ok ({})", cli.command.name(), cfg.out.display());
            EXIT_OK
        }
        Err(f) => {
            if let Failure::Numerical(m) = &f {
                eprintln!("error: {m}");
            }
            f.code()
        }
    }
}
