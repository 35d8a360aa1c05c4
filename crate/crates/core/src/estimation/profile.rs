use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::EchoDataset;
use super::echo_fit::{best_of, EchoCore, EchoFitParams, EchoModel, EchoProblem};
use super::lm::LmConfig;
use super::FitError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoParam {
    BPerp,
    Phi0,
    Contrast,
    Baseline,
}

impl EchoParam {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        EchoFitParams::NAMES[self.index()]
    }
}

impl FromStr for EchoParam {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, FitError> {
        match s {
            "b_perp" => Ok(Self::BPerp),
            "phi0" => Ok(Self::Phi0),
            "contrast" => Ok(Self::Contrast),
            "baseline" => Ok(Self::Baseline),
            _ => Err(FitError::UnknownParameter(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub value: f64,
    pub sse: f64,
    /// Best values of all four parameters with `value` held fixed.
    pub params: EchoFitParams,
}

/// SSE of the best fit with `param` pinned at each of `values`.
///
/// `anchor` is a known good fit (usually from `fit_echo`) used as a warm start
/// alongside the previous profile point.
pub fn profile_identifiability(
    data: &EchoDataset,
    model: &EchoModel,
    param: EchoParam,
    values: &[f64],
    anchor: Option<EchoFitParams>,
) -> Vec<ProfilePoint> {
    let core = EchoCore::new(data, model);
    let cfg = LmConfig::default();
    let k = param.index();
    let mut prev: Option<[f64; 4]> = None;
    values
        .iter()
        .map(|&v| {
            let v = if param == EchoParam::BPerp { v.abs() } else { v };
            let mut fixed = [None; 4];
            fixed[k] = Some(v);
            let problem = EchoProblem { core: &core, fixed };
            let mut starts: Vec<[f64; 4]> = Vec::new();
            for w in prev.iter().chain(anchor.map(|a| a.to_array()).iter()) {
                let mut s = *w;
                s[k] = v;
                starts.push(s);
            }
            for j in 0..8 {
                let phi0 = if k == 1 { v } else { j as f64 * PI / 4.0 };
                for b in profile_b_starts(&core, k, v) {
                    let (c, base, _) = core.solve_linear(b, phi0);
                    let mut s = [b, phi0, c, base];
                    s[k] = v;
                    starts.push(s);
                }
            }
            let point = match best_of(&problem, &starts, &cfg) {
                Some(r) => {
                    let p = problem.external(&r.params);
                    ProfilePoint {
                        value: v,
                        sse: r.sse,
                        params: EchoFitParams::from_array(p),
                    }
                }
                None => ProfilePoint {
                    value: v,
                    sse: f64::INFINITY,
                    params: EchoFitParams::from_array(starts[0]),
                },
            };
            prev = Some(point.params.to_array());
            point
        })
        .collect()
}

fn profile_b_starts(core: &EchoCore, k: usize, v: f64) -> Vec<f64> {
    if k == 0 {
        return vec![v];
    }
    // Coarse b candidates from the phase scale of the data.
    let g_max = (0..core.len()).map(|i| core.slope(i, 0.0).abs()).fold(0.0, f64::max).max(1e-12);
    [0.25, 1.0, 3.0].iter().map(|m| m * PI / g_max).collect()
}
