//! Checks shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use gklab::field::{GridSpec, ReducedField};
use gklab::geom::Endo4;
use gklab::hopf::*;
use serde::Deserialize;

#[derive(Deserialize)]
pub struct OracleSample {
    pub p: f64,
    pub dp: f64,
    pub a: f64,
    pub b: f64,
    pub j: [[f64; 4]; 4],
    pub theta_i: [f64; 4],
    pub det_plus: f64,
    pub det_minus: f64,
}

#[derive(Deserialize)]
struct OracleFile {
    samples: Vec<OracleSample>,
}

pub fn oracle_samples() -> Vec<OracleSample> {
    let text = include_str!("../data/hopf_oracle.json");
    serde_json::from_str::<OracleFile>(text).expect("oracle file").samples
}

fn rel(x: f64, want: f64) -> f64 {
    (x - want).abs() / want.abs().max(1.0)
}

/// Largest relative disagreement of `(J, theta_I, det(I+J), det(I-J))`
/// between the numerical constructors and the symbolic oracle.
pub fn oracle_parity(samples: &[OracleSample]) -> [f64; 4] {
    let mut worst = [0.0f64; 4];
    for s in samples {
        let params = HopfParams::from_logs(s.a, s.b).unwrap();
        let r = params.ratio();
        let j = j_matrix(1.0 + s.p, 1.0 - s.p, r).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                worst[0] = worst[0].max(rel(j.0[(i, k)], s.j[i][k]));
            }
        }
        // Linear profile through p with slope dp, sampled at a grid node.
        let d = params.domain(GridSpec::uniform(0.03, 64)).unwrap();
        let k = 32;
        let tk = d.t()[k];
        let line = |c: f64, m: f64| ReducedField::from_fn(&d, move |t| c + m * (t - tk));
        let prof = Profile::with_margins(line(s.p, s.dp), line(1.0 + s.p, s.dp), line(1.0 - s.p, -s.dp)).unwrap();
        let st = derive_state(&params, &prof).unwrap();
        for (g, w) in st.theta_i.at(k).components().iter().zip(s.theta_i) {
            worst[1] = worst[1].max(rel(*g, w));
        }
        let i = Endo4::standard();
        worst[2] = worst[2].max(rel(st.det_plus.at(k), s.det_plus)).max(rel((i.0 + j.0).determinant(), s.det_plus));
        worst[3] = worst[3].max(rel(st.det_minus.at(k), s.det_minus)).max(rel((i.0 - j.0).determinant(), s.det_minus));
    }
    worst
}
