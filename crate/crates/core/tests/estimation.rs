use std::f64::consts::{PI, TAU};

use nvspin::estimation::{
    echo_prediction, fit_echo, fit_rabi, grid_oracle, profile_identifiability, EchoDataset, EchoFitParams, EchoModel,
    EchoParam, FitError, GridBounds, GridResolution, RabiDataset, Record,
};
use nvspin::spindyn::{c13_envelope, echo_phase, rabi_population, EchoParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn model() -> EchoModel {
    EchoModel {
        template: EchoParams {
            f_rot_hz: 3333.33,
            ..EchoParams::default()
        },
        ..EchoModel::default()
    }
}

/// Fringe value from the spin-dynamics closed form, independent of the fitter.
fn truth(m: &EchoModel, p: &EchoFitParams, tau: f64) -> f64 {
    let ep = EchoParams {
        b_perp_gauss: p.b_perp,
        phi0_rad: p.phi0,
        ..m.template
    };
    let env = c13_envelope(&ep, &m.constants, tau);
    p.baseline + 0.5 * p.contrast * env * echo_phase(&ep, &m.constants, tau).cos()
}

fn taus() -> Vec<f64> {
    (1..=59).map(f64::from).collect()
}

fn synth(m: &EchoModel, p: &EchoFitParams, sigma: f64, taus: &[f64], rng: &mut ChaCha8Rng) -> EchoDataset {
    let n = Normal::new(0.0, sigma).unwrap();
    let recs = taus
        .iter()
        .map(|&t| Record::new(t, truth(m, p, t) + n.sample(rng), sigma))
        .collect();
    EchoDataset::new(recs).unwrap()
}

fn operating_params() -> EchoFitParams {
    EchoFitParams {
        b_perp: 0.088,
        phi0: 1.0,
        contrast: 0.9,
        baseline: 0.5,
    }
}

/// Distance between two φ₀ values; φ₀ and φ₀ + π give the same fringe.
fn phase_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = synth(&m, &operating_params(), 0.01, &taus(), &mut rng);
    for _ in 0..200 {
        let p = EchoFitParams {
            b_perp: rng.random_range(0.01..0.3),
            phi0: rng.random_range(0.0..TAU),
            contrast: rng.random_range(0.3..1.0),
            baseline: rng.random_range(0.3..0.7),
        };
        let analytic = echo_prediction(&data, &m, &p);
        let base = p.to_array();
        for k in 0..4 {
            let h = 1e-5 * base[k].abs().max(0.1);
            let at = |s: f64| {
                let mut q = base;
                q[k] += s * h;
                let q = EchoFitParams::from_array(q);
                data.xs().map(|t| truth(&m, &q, t)).collect::<Vec<_>>()
            };
            let (f2m, f1m, f1p, f2p) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let scale = analytic.iter().map(|a| a.1[k].abs()).fold(0.0, f64::max);
            for i in 0..data.len() {
                let fd = (f2m[i] - 8.0 * f1m[i] + 8.0 * f1p[i] - f2p[i]) / (12.0 * h);
                let a = analytic[i].1[k];
                assert!((a - fd).abs() <= 1e-6 * scale, "param {k} point {i}: {a} vs {fd}");
                assert!((analytic[i].0 - truth(&m, &p, data.records()[i].x)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fit_agrees_with_grid_oracle() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    // φ₀ spacing below the width of a single fringe basin.
    let coarse_res = GridResolution {
        b_perp: 150,
        phi0: 1440,
    };
    let fine_res = GridResolution {
        b_perp: 160,
        phi0: 160,
    };
    for trial in 0..50 {
        let p = EchoFitParams {
            b_perp: rng.random_range(0.05..0.25),
            phi0: rng.random_range(0.0..TAU),
            contrast: rng.random_range(0.6..1.0),
            baseline: rng.random_range(0.4..0.6),
        };
        let data = synth(&m, &p, 0.02, &taus(), &mut rng);
        let fit = fit_echo(&data, &m, None).unwrap();
        assert!(fit.converged, "trial {trial}");

        // Exhaustive over the full turn, then again around the best node. The
        // second box is shaped like the error ellipse so that its cells
        // resolve the tilted (b, φ₀) valley.
        let coarse = grid_oracle(&data, &m, &GridBounds::full_turn(0.3), coarse_res);
        let (sb, sp) = (fit.sigmas.b_perp, fit.sigmas.phi0);
        let lam = (4.0 * coarse.cell.0 / sb).max(4.0 * coarse.cell.1 / sp);
        let bounds = GridBounds {
            b_perp: ((coarse.params.b_perp - lam * sb).max(0.0), coarse.params.b_perp + lam * sb),
            phi0: (coarse.params.phi0 - lam * sp, coarse.params.phi0 + lam * sp),
        };
        let fine = grid_oracle(&data, &m, &bounds, fine_res);
        assert!(fine.sse <= coarse.sse);
        assert!(fine.sse >= fit.chi2 * (1.0 - 1e-9), "trial {trial}: grid {} < fit {}", fine.sse, fit.chi2);
        assert!(
            (fit.params.b_perp - fine.params.b_perp).abs() <= fine.cell.0,
            "trial {trial}: b {} vs {}",
            fit.params.b_perp,
            fine.params.b_perp
        );
        assert!(
            phase_gap(fit.params.phi0, fine.params.phi0) <= fine.cell.1,
            "trial {trial}: phi0 {} vs {}",
            fit.params.phi0,
            fine.params.phi0
        );
    }
}

#[test]
fn covariance_predicts_monte_carlo_scatter() {
    let m = model();
    let truth_p = operating_params();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut b = Vec::new();
    let mut c = Vec::new();
    let mut sb = Vec::new();
    let mut sc = Vec::new();
    for _ in 0..200 {
        let data = synth(&m, &truth_p, 0.02, &taus(), &mut rng);
        let fit = fit_echo(&data, &m, None).unwrap();
        b.push(fit.params.b_perp);
        c.push(fit.params.contrast);
        sb.push(fit.sigmas.b_perp);
        sc.push(fit.sigmas.contrast);
    }
    let sd = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    for (name, scatter, reported) in [("b_perp", sd(&b), median(&mut sb)), ("contrast", sd(&c), median(&mut sc))] {
        let ratio = reported / scatter;
        assert!((0.5..=2.0).contains(&ratio), "{name}: reported {reported} vs scatter {scatter}");
    }
}

#[test]
fn results_ignore_record_order_and_repeat_exactly() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = synth(&m, &operating_params(), 0.02, &taus(), &mut rng);
    let mut recs = data.records().to_vec();
    recs.shuffle(&mut rng);
    let shuffled = EchoDataset::new(recs).unwrap();
    let a = fit_echo(&data, &m, None).unwrap();
    let b = fit_echo(&shuffled, &m, None).unwrap();
    let c = fit_echo(&data, &m, None).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn noiseless_null_field_is_consistent_with_zero() {
    let m = model();
    let p = EchoFitParams {
        b_perp: 0.0,
        ..operating_params()
    };
    let recs = taus().iter().map(|&t| Record::new(t, truth(&m, &p, t), 0.01)).collect();
    let fit = fit_echo(&EchoDataset::new(recs).unwrap(), &m, None).unwrap();
    assert!(
        fit.params.b_perp.abs() < 2.0 * fit.sigmas.b_perp,
        "b = {} ± {}",
        fit.params.b_perp,
        fit.sigmas.b_perp
    );
}

/// With b, φ₀ and contrast free, least squares finds a noise fringe in most
/// pure-noise datasets and its local σ does not cover zero. Kept as a record
/// of that behaviour; see README.
#[test]
#[ignore = "look-elsewhere effect: noisy null data gives |b| < 2σ in only a few percent of draws"]
fn noisy_null_field_is_consistent_with_zero() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let p = EchoFitParams {
        b_perp: 0.0,
        ..operating_params()
    };
    let mut ok = 0;
    for _ in 0..20 {
        let data = synth(&m, &p, 0.02, &taus(), &mut rng);
        let fit = fit_echo(&data, &m, None).unwrap();
        if fit.params.b_perp.abs() < 2.0 * fit.sigmas.b_perp {
            ok += 1;
        }
    }
    assert_eq!(ok, 20, "{ok}/20 null fits consistent with zero");
}

fn curvature(points: &[nvspin::estimation::ProfilePoint], centre: usize) -> f64 {
    let h = points[centre + 1].value - points[centre].value;
    (points[centre + 1].sse - 2.0 * points[centre].sse + points[centre - 1].sse) / (h * h)
}

#[test]
fn profile_minimum_sits_at_the_fit() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = synth(&m, &operating_params(), 0.02, &taus(), &mut rng);
    let fit = fit_echo(&data, &m, None).unwrap();
    let s = fit.sigmas.b_perp;
    let values: Vec<f64> = (-30..=30).map(|k| fit.params.b_perp + k as f64 * s / 10.0).collect();
    let prof = profile_identifiability(&data, &m, EchoParam::BPerp, &values, Some(fit.params));
    let (imin, best) = prof
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.sse.total_cmp(&b.1.sse))
        .unwrap();
    assert_eq!(imin, 30);
    assert!((best.sse - fit.chi2).abs() < 1e-8 * fit.chi2.max(1.0));
    // Δχ² = 1 at ±σ for a well-determined parameter, after χ²_red scaling.
    let rise = (prof[40].sse + prof[20].sse) / 2.0 - fit.chi2;
    assert!((rise / fit.reduced_chi2 - 1.0).abs() < 0.2, "rise {rise}");
}

#[test]
fn short_delays_leave_a_flat_valley() {
    let m = model();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let full = synth(&m, &operating_params(), 0.02, &taus(), &mut rng);
    let short = full.truncated(12.0);
    let fit = fit_echo(&full, &m, None).unwrap();
    let h = 0.002;
    let values: Vec<f64> = (-1..=1).map(|k| fit.params.b_perp + k as f64 * h).collect();
    let pf = profile_identifiability(&full, &m, EchoParam::BPerp, &values, Some(fit.params));
    let ps = profile_identifiability(&short, &m, EchoParam::BPerp, &values, Some(fit.params));
    let ratio = curvature(&ps, 1) / curvature(&pf, 1);
    assert!(ratio < 0.5, "curvature ratio {ratio}");
}

#[test]
fn unknown_profile_parameter_is_rejected() {
    assert!(matches!("bperp".parse::<EchoParam>(), Err(FitError::UnknownParameter(_))));
}

fn rabi_data(omega: f64, contrast: f64, sigma: f64, rng: &mut ChaCha8Rng) -> RabiDataset {
    let n = Normal::new(0.0, sigma).unwrap();
    let recs = (0..=50)
        .map(|k| {
            let t = k as f64 * 0.02;
            Record::new(t, 0.02 + contrast * rabi_population(t, omega, 0.0) + n.sample(rng), sigma)
        })
        .collect();
    RabiDataset::new(recs).unwrap()
}

#[test]
fn rabi_recovery_at_matched_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut within = 0;
    for _ in 0..20 {
        let d = rabi_data(3.6, 0.95, 0.15, &mut rng);
        let fit = fit_rabi(&d, None).unwrap();
        assert!(fit.rabi_sigma_mhz <= 0.2, "σ = {}", fit.rabi_sigma_mhz);
        if (fit.rabi_mhz - 3.6).abs() < 3.0 * fit.rabi_sigma_mhz {
            within += 1;
        }
    }
    assert!(within >= 19, "{within}/20 within 3σ");
}

#[test]
fn rabi_without_contrast_is_unidentifiable() {
    let recs = (0..=50).map(|k| Record::new(k as f64 * 0.02, 0.02, 0.01)).collect();
    let d = RabiDataset::new(recs).unwrap();
    let r = fit_rabi(&d, None);
    assert!(matches!(r, Err(FitError::Identifiability(_))), "{r:?}");
}
