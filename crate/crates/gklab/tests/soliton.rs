use gklab::error::SolitonError;
use gklab::field::{GridSpec, ReducedField};
use gklab::hopf::*;
use gklab::soliton::*;

fn solve(b: f64) -> SolitonSolution {
    let params = HopfParams::from_logs(-1.0, b).unwrap();
    let init = default_initial_profile(&params, GridSpec::uniform(6.0, 2048)).unwrap();
    solve_soliton(&params, &init, &SolverOptions::default()).unwrap()
}

#[test]
fn standard_hopf_matches_closed_form() {
    let sol = solve(-1.0);
    // a = b: p = tanh(t/2) and f constant.
    for (t, p) in sol.profile.p.t().iter().zip(sol.profile.p.values()) {
        assert!((p - (t / 2.0).tanh()).abs() < 1e-12, "{t} {p}");
    }
    assert!(sol.f.values().iter().all(|v| v.abs() < 1e-12));
    assert_eq!(sol.kappa_i, [-1.0, -1.0, 0.0]);
    assert!(sol.report.get("structural").unwrap() < 1e-10);
}

#[test]
fn both_parameter_sets_verify() {
    for b in [-1.0, -0.7] {
        let sol = solve(b);
        assert!(sol.seconds < 60.0);
        let rep = verify_soliton_full(&sol).unwrap();
        assert!(rep.get("structural").unwrap() < 1e-10, "{rep}");
        assert!(rep.get("soliton_metric").unwrap() < 1e-6, "{rep}");
        assert!(rep.get("soliton_torsion").unwrap() < 1e-6, "{rep}");
        assert!(rep.get("bismut").unwrap() < 1e-6, "{rep}");
        assert!(rep.get("scalar_identity").unwrap() < 1e-9, "{rep}");
        assert!(rep.get("kappa_frame").unwrap() < 1e-8, "{rep}");
        for k in ["x_holomorphic", "x_killing", "x_commute", "f_plus_pairing", "f_minus_pairing", "sigma_inverse_pairing", "x_poisson"] {
            assert!(rep.get(k).unwrap() < 1e-7, "{k}\n{rep}");
        }
    }
}

#[test]
fn ode_form_of_the_solution() {
    // p' = (1 - p^2)(alpha + beta p), f' = beta (1 - p^2) with the smooth rates.
    let sol = solve(-0.7);
    let r = sol.params.ratio();
    let (al, be) = ((1.0 + 1.0 / r) / 4.0, (1.0 - 1.0 / r) / 4.0);
    let dp = sol.profile.p.dt();
    let df = sol.f.dt();
    for k in sol.f.domain().grid.interior() {
        let p = sol.profile.p.at(k);
        let q = 1.0 - p * p;
        assert!((dp.at(k) - q * (al + be * p)).abs() < 1e-8);
        assert!((df.at(k) - be * q).abs() < 1e-8);
    }
    assert!((sol.tails.lambda_plus - 1.0).abs() < 2e-2, "{:?}", sol.tails);
    assert!((sol.tails.lambda_minus - 1.0 / r).abs() < 2e-2, "{:?}", sol.tails);
}

#[test]
fn kappa_perturbation_is_linear() {
    let sol = solve(-0.7);
    let base = structural_residual(&sol.params, &sol.profile, &sol.f, &sol.kappa_i, &sol.kappa_j).unwrap();
    let mut last = 0.0;
    for eps in [1e-6, 2e-6, 4e-6] {
        let ki = [sol.kappa_i[0] + eps, sol.kappa_i[1], sol.kappa_i[2]];
        let st = structural_residual(&sol.params, &sol.profile, &sol.f, &ki, &sol.kappa_j).unwrap();
        let v = st.sup();
        assert!(v > 1e3 * base.sup());
        if last > 0.0 {
            assert!((v / last - 2.0).abs() < 1e-3);
        }
        last = v;
    }
}

#[test]
fn non_solitons_are_flagged() {
    let params = HopfParams::from_logs(-1.0, -0.7).unwrap();
    let d = params.domain(GridSpec::uniform(6.0, 1024)).unwrap();
    let prof = Profile::tanh(&d, 0.9, 2.0).unwrap();
    let f = ReducedField::constant(&d, 0.0);
    let k = [-1.0, -1.0, 0.0];
    let st = structural_residual(&params, &prof, &f, &k, &[1.0, -1.0, 0.0]).unwrap();
    assert!(st.sup() > 1e-2);
    let state = derive_state(&params, &prof).unwrap();
    let rep = verify_soliton_state(&state, &f, &k, &[1.0, -1.0, 0.0]).unwrap();
    assert!(rep.get("soliton_metric").unwrap() > 1e-2, "{rep}");
}

#[test]
fn rejects_flat_initial_profile() {
    let params = HopfParams::from_logs(-1.0, -1.0).unwrap();
    let d = params.domain(GridSpec::uniform(6.0, 256)).unwrap();
    let init = Profile::new(ReducedField::constant(&d, 0.0)).unwrap();
    let err = solve_soliton(&params, &init, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, SolitonError::BoundaryCondition(_)));
}

#[test]
fn scale_covariance() {
    let sol = solve(-0.7);
    let state = sol.state().unwrap();
    for c in [0.5, 3.0] {
        let big = state.scaled(c).unwrap();
        let ki = sol.kappa_i.map(|v| v / c);
        let kj = sol.kappa_j.map(|v| v / c);
        let r = structural_residual_tensor(&big, &sol.f, &ki, &kj).unwrap();
        assert!(r.sup_interior(|v| *v) < 1e-8);
    }
}

#[test]
fn psi_densities_agree() {
    let sol = solve(-0.7);
    let state = sol.state().unwrap();
    let (dp, dm) = sol.potentials.densities(&state);
    // Both equal 4 e^{-f} sqrt(det g) up to the common constant.
    let c = (sol.potentials.c_plus).exp();
    for k in 0..dp.len() {
        let want = 4.0 * c * (-sol.f.at(k)).exp() * state.volume.at(k);
        assert!((dp.at(k).abs() - want).abs() < 1e-12 * want.max(1.0));
        assert!((dp.at(k) - dm.at(k)).abs() < 1e-12);
    }
    assert!((sol.potentials.c_plus - sol.potentials.c_minus).abs() < 1e-12);
}
