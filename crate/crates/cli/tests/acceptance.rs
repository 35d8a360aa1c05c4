//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p nvspin-cli --test acceptance --release -- --nocapture`
//! or plain `cargo test`; output goes to stdout either way.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nvspin::estimation::{
    echo_prediction, fit_echo, grid_oracle, EchoDataset, EchoFitParams, EchoModel, GridBounds, GridResolution, Record,
};
use nvspin::geometry::{effective_amplitude, effective_field, FieldConfig, PhysicalConstants, RotorGeometry};
use nvspin::imaging::{angular_smear, fit_spot_width, Image, SpotFitOptions};
use nvspin::numeric::adaptive_simpson;
use nvspin::photophysics::{
    count_rate_bound, expected_count_rate, readout_expectation, simulate_readout, state_contrast, BeamProfile,
    LevelPopulations, RateModel, ReadoutWindow,
};
use nvspin::seqlang::{compile_timeline, parse_sequence, print_program, CalibrationTable};
use nvspin::spindyn::{c13_envelope, echo_phase, revival_time_us, simulate_sequence, EchoParams};
use nvspin_cli::commands::{self, FitModel};
use nvspin_cli::io::parse_table;
use nvspin_cli::{pipeline, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
    /// Reason a failure is expected and recorded, if it is.
    known: Option<&'static str>,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome, String> {
    Ok(Outcome {
        pass,
        detail,
        known: None,
    })
}

fn operating_rotor() -> RotorGeometry {
    RotorGeometry {
        f_rot_hz: 3333.33,
        ..RotorGeometry::default()
    }
}

fn c1() -> Result<Outcome, String> {
    let g = RotorGeometry {
        f_rot_hz: 1e6 / 300.0,
        ..RotorGeometry::default()
    };
    let b = BeamProfile {
        peak_counts_per_s: 1e5,
        ..BeamProfile::default()
    };
    let r = count_rate_bound(&b, &g, 2.0).map_err(|e| e.to_string())?;
    outcome((r / 666.7 - 1.0).abs() <= 1e-3, format!("{r:.2} counts/s (target 666.7 ± 0.1%)"))
}

fn c2() -> Result<Outcome, String> {
    let t = Instant::now();
    let r = expected_count_rate(&BeamProfile::default(), &operating_rotor(), 2.0).map_err(|e| e.to_string())?;
    let dt = t.elapsed().as_secs_f64();
    outcome(
        (250.0..=450.0).contains(&r) && dt < 1.0,
        format!("{r:.1} counts/s in {dt:.3} s (target [250, 450], < 1 s)"),
    )
}

fn c3() -> Result<Outcome, String> {
    let s = angular_smear(&operating_rotor(), 2.0);
    let shown = format!("{s:.3}");
    outcome(shown == "2.400", format!("{shown} deg (raw {s})"))
}

fn c4() -> Result<Outcome, String> {
    let c = PhysicalConstants::default();
    let tr = revival_time_us(6.2, &c);
    let t_rot = operating_rotor().period_us();
    let rel = (tr / t_rot - 1.0).abs();
    outcome(
        (tr - 300.1).abs() <= 0.1 && rel < 2e-3,
        format!("tau_R = {tr:.3} us, T_rot = {t_rot:.3} us, mismatch {:.3}%", 100.0 * rel),
    )
}

fn quadrature_phase(g: &RotorGeometry, f: &FieldConfig, c: &PhysicalConstants, tau_us: f64, eps: f64) -> f64 {
    let tau = tau_us * 1e-6;
    let field = |t: f64| effective_field(g, f, t);
    let first = adaptive_simpson(&field, 0.0, 0.5 * tau, eps);
    let second = adaptive_simpson(&field, 0.5 * tau, tau, eps);
    TAU * c.gamma_e_mhz_per_g * 1e6 * (first - second)
}

fn c5() -> Result<Outcome, String> {
    let t = Instant::now();
    let c = PhysicalConstants::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let g = RotorGeometry {
            f_rot_hz: rng.random_range(100.0..20_000.0),
            theta_nv_deg: rng.random_range(0.0..180.0),
            phi_nv0_deg: rng.random_range(0.0..360.0),
            ..RotorGeometry::default()
        };
        let f = FieldConfig {
            b0_gauss: rng.random_range(0.5..50.0),
            theta_b_deg: rng.random_range(0.0..10.0),
            phi_b_deg: rng.random_range(0.0..360.0),
            ..FieldConfig::default()
        };
        let tau = rng.random_range(0.1..g.period_us());
        let p = EchoParams {
            b_perp_gauss: effective_amplitude(&g, &f),
            phi0_rad: nvspin::geometry::fringe_phase(&g, &f),
            f_rot_hz: g.f_rot_hz,
            ..EchoParams::default()
        };
        let scale = TAU * c.gamma_e_mhz_per_g * 1e6 * p.b_perp_gauss * tau * 1e-6;
        let closed = echo_phase(&p, &c, tau);
        let oracle = quadrature_phase(&g, &f, &c, tau, 1e-15 * p.b_perp_gauss * tau * 1e-6);
        worst = worst.max((closed - oracle).abs() / closed.abs().max(scale));
    }
    let g = RotorGeometry::default();
    let aligned = FieldConfig {
        theta_b_deg: 0.0,
        ..FieldConfig::default()
    };
    let p = EchoParams {
        b_perp_gauss: effective_amplitude(&g, &aligned),
        ..EchoParams::default()
    };
    let flat = (0..300)
        .map(|k| echo_phase(&p, &c, k as f64).abs())
        .chain((1..300).map(|k| quadrature_phase(&g, &aligned, &c, k as f64, 1e-18).abs()))
        .fold(0.0, f64::max);
    let dt = t.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && flat < 1e-12 && dt < 10.0,
        format!("worst relative error {worst:.2e} over 1000 draws, theta_B = 0 max |phase| {flat:.1e}, {dt:.1} s"),
    )
}

fn c6() -> Result<Outcome, String> {
    let b = effective_amplitude(&RotorGeometry::default(), &FieldConfig::default());
    let direct = 6.2 * 54.7f64.to_radians().sin() * 1.0f64.to_radians().sin();
    outcome(
        (0.0880..=0.0888).contains(&b) && (b - direct).abs() < 1e-12,
        format!("{b:.5} G (direct product {direct:.5} G)"),
    )
}

/// One closed-loop run: simulate-echo output, then fit.
fn closed_loop(seed: u64, dir: &Path) -> Result<(f64, f64, f64), String> {
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    let data = commands::simulate_echo(&cfg, None, &[]).map_err(|e| e.to_string())?;
    let file = dir.join(format!("echo_{seed}.csv"));
    std::fs::write(&file, data).map_err(|e| e.to_string())?;
    let (report, converged) = commands::fit(&cfg, &file, FitModel::Echo, &[]).map_err(|e| e.to_string())?;
    if !converged {
        return Err(format!("seed {seed}: fit did not converge"));
    }
    let t: toml::Table = toml::from_str(&report).map_err(|e| e.to_string())?;
    let get = |sec: &str| t[sec]["b_perp"].as_float().ok_or("missing b_perp");
    Ok((get("params")?, get("sigmas")?, pipeline::echo_truth(&cfg).0))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn c7() -> Result<Outcome, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = (1..=100)
        .map(|s| closed_loop(s, dir.path()))
        .collect::<Result<Vec<_>, _>>()?;
    let covered = runs.iter().filter(|(b, s, t)| (b - t).abs() <= 3.0 * s).count();
    let sigma = median(runs.iter().map(|r| r.1).collect());
    let coverage_ok = covered >= 95;
    let band_ok = (0.029 / 2.0..=0.029 * 2.0).contains(&sigma);
    Ok(Outcome {
        pass: coverage_ok && band_ok,
        detail: format!(
            "coverage {covered}/100 within 3 sigma [{}]; median sigma {sigma:.2e} G vs 0.029 G within x2 [{}]",
            if coverage_ok { "ok" } else { "fail" },
            if band_ok { "ok" } else { "fail" },
        ),
        known: (coverage_ok && !band_ok)
            .then_some("3e6 shots per point give a far smaller sigma than the 29 mG target; see README"),
    })
}

fn c8() -> Result<Outcome, String> {
    let (g, b, m) = (operating_rotor(), BeamProfile::default(), RateModel::default());
    let w = ReadoutWindow::default();
    let shots = 10_000_000;
    let bright = simulate_readout(&LevelPopulations::bright(), &g, &b, &m, &w, shots, 81).map_err(|e| e.to_string())?;
    let dark = simulate_readout(&LevelPopulations::dark(), &g, &b, &m, &w, shots, 82).map_err(|e| e.to_string())?;
    let c = state_contrast(&dark, &bright, 1.0).map_err(|e| e.to_string())?;
    let eb = readout_expectation(&LevelPopulations::bright(), &g, &b, &m, &w).map_err(|e| e.to_string())?;
    let ed = readout_expectation(&LevelPopulations::dark(), &g, &b, &m, &w).map_err(|e| e.to_string())?;
    let repump = eb.final_populations.distance(&ed.final_populations);
    outcome(
        (0.70..=0.80).contains(&c.ratio) && repump < 0.02,
        format!("early-window ratio {:.4} ± {:.4}, repump distance {:.2}%", c.ratio, c.std_err, 100.0 * repump),
    )
}

fn block_mean(img: &Image, p: (f64, f64)) -> f64 {
    let g = img.grid;
    let ix = ((p.0 - g.x_range_um.0) / g.step_um).round() as i64;
    let iv = ((p.1 - g.v_range_um.0) / g.step_um).round() as i64;
    let mut s = 0.0;
    for dx in -1..=1 {
        for dv in -1..=1 {
            s += img.get((ix + dx) as usize, (iv + dv) as usize) as f64;
        }
    }
    s / 9.0
}

fn c9() -> Result<Outcome, String> {
    let mut cfg = ExperimentConfig::default();
    let fit_all = |cfg: &ExperimentConfig| -> Result<(Image, Vec<nvspin::imaging::SpotWidth>), String> {
        let img = commands::render(cfg).map_err(|e| e.to_string())?;
        let widths = cfg
            .image
            .emitters
            .iter()
            .map(|e| fit_spot_width(&img, (e.position_um[0], e.position_um[1]), &SpotFitOptions::default()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        Ok((img, widths))
    };
    let (_, still) = fit_all(&ExperimentConfig {
        image: nvspin_cli::config::ImageConfig {
            stationary: true,
            ..cfg.image.clone()
        },
        ..cfg.clone()
    })?;
    cfg.seed = 2;
    let (img, moving) = fit_all(&cfg)?;

    let still_ok = still.iter().all(|w| (w.characteristic() - 0.30).abs() <= 0.03);
    let moving_ok = moving.iter().all(|w| (w.characteristic() - 0.9).abs() <= 0.18);
    let (a, b) = (moving[0].center, moving[1].center);
    let sep = (a.0 - b.0).hypot(a.1 - b.1);
    let lower = block_mean(&img, a).min(block_mean(&img, b));
    let valley = (0..=20)
        .map(|k| {
            let t = 0.3 + 0.4 * k as f64 / 20.0;
            block_mean(&img, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)))
        })
        .fold(0.0, f64::max);
    let depth = 1.0 - valley / lower;
    let list = |v: &[nvspin::imaging::SpotWidth]| {
        v.iter().map(|w| format!("{:.3}", w.characteristic())).collect::<Vec<_>>().join(", ")
    };
    outcome(
        still_ok && moving_ok && depth > 0.5,
        format!(
            "stationary widths [{}] um, rotating widths [{}] um, peaks {sep:.2} um apart with valley depth {:.0}%",
            list(&still),
            list(&moving),
            100.0 * depth
        ),
    )
}

fn c10() -> Result<Outcome, String> {
    let cfg = ExperimentConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let file = dir.path().join("rabi.csv");
    std::fs::write(&file, commands::simulate_rabi(&cfg, None).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (report, converged) = commands::fit(&cfg, &file, FitModel::Rabi, &[]).map_err(|e| e.to_string())?;
    let t: toml::Table = toml::from_str(&report).map_err(|e| e.to_string())?;
    let f = t["rabi_mhz"].as_float().ok_or("missing rabi_mhz")?;
    let s = t["rabi_sigma_mhz"].as_float().ok_or("missing rabi_sigma_mhz")?;
    outcome(
        converged && (f - 3.6).abs() <= 3.0 * s && s <= 0.2,
        format!("{f:.4} ± {s:.4} MHz (target 3.6 within 3 sigma, sigma <= 0.2)"),
    )
}

// Property suites.

fn spin_norm() -> Result<String, String> {
    let g = operating_rotor();
    let (f, c) = (FieldConfig::default(), PhysicalConstants::default());
    let cal = CalibrationTable::constant(3.6);
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let tau: f64 = rng.random_range(1.0..250.0);
        let src = format!(
            "trigger\nparam tau = {tau}us\nmw pi/2 at 1us\nmw pi center 1us + tau/2 phase 90deg\nmw pi/2 center 1us + tau\nlaser for 2us at Trot\n"
        );
        let tl = compile_timeline(&parse_sequence(&src).map_err(|e| e.to_string())?, &g, &cal, 0.0)
            .map_err(|e| e.to_string())?;
        let tr = simulate_sequence(&tl, &g, &f, &c).map_err(|e| e.to_string())?;
        for p in &tr.points {
            worst = worst.max((p.state.bloch.norm() - 1.0).abs());
        }
    }
    if worst < 1e-12 {
        Ok(format!("spin norm {worst:.1e}"))
    } else {
        Err(format!("spin norm drift {worst:.1e}"))
    }
}

fn populations() -> Result<String, String> {
    let (g, b, m) = (operating_rotor(), BeamProfile::default(), RateModel::default());
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let w = ReadoutWindow {
            t_pulse_us: rng.random_range(0.2..6.0),
            turn_on_offset_us: rng.random_range(-4.0..2.0),
            bin_width_us: 0.02,
        };
        let e = readout_expectation(&LevelPopulations::from_spin(rng.random()), &g, &b, &m, &w)
            .map_err(|e| e.to_string())?;
        worst = worst.max(e.max_sum_error);
    }
    if worst < 1e-6 {
        Ok(format!("population sum {worst:.1e}"))
    } else {
        Err(format!("population sum drift {worst:.1e}"))
    }
}

fn echo_model() -> EchoModel {
    pipeline::echo_model(&ExperimentConfig::default())
}

fn oracle_signal(m: &EchoModel, p: &EchoFitParams, tau: f64) -> f64 {
    let ep = EchoParams {
        b_perp_gauss: p.b_perp,
        phi0_rad: p.phi0,
        ..m.template
    };
    p.baseline + 0.5 * p.contrast * c13_envelope(&ep, &m.constants, tau) * echo_phase(&ep, &m.constants, tau).cos()
}

fn synth(m: &EchoModel, p: &EchoFitParams, sigma: f64, rng: &mut ChaCha8Rng) -> EchoDataset {
    let n = Normal::new(0.0, sigma).expect("sigma > 0");
    let recs = (1..=59)
        .map(|t| {
            let t = t as f64;
            Record::new(t, oracle_signal(m, p, t) + n.sample(rng), sigma)
        })
        .collect();
    EchoDataset::new(recs).expect("valid records")
}

fn random_params(rng: &mut ChaCha8Rng) -> EchoFitParams {
    EchoFitParams {
        b_perp: rng.random_range(0.05..0.25),
        phi0: rng.random_range(0.0..TAU),
        contrast: rng.random_range(0.6..1.0),
        baseline: rng.random_range(0.4..0.6),
    }
}

fn jacobian() -> Result<String, String> {
    let m = echo_model();
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let data = synth(&m, &random_params(&mut rng), 0.01, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let p = random_params(&mut rng);
        let analytic = echo_prediction(&data, &m, &p);
        let base = p.to_array();
        for k in 0..4 {
            let h = 1e-5 * base[k].abs().max(0.1);
            let at = |s: f64| {
                let mut q = base;
                q[k] += s * h;
                let q = EchoFitParams::from_array(q);
                data.xs().map(|t| oracle_signal(&m, &q, t)).collect::<Vec<_>>()
            };
            let (f2m, f1m, f1p, f2p) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
            let scale = analytic.iter().map(|a| a.1[k].abs()).fold(0.0, f64::max);
            for i in 0..data.len() {
                let fd = (f2m[i] - 8.0 * f1m[i] + 8.0 * f1p[i] - f2p[i]) / (12.0 * h);
                worst = worst.max((analytic[i].1[k] - fd).abs() / scale);
            }
        }
    }
    if worst < 1e-6 {
        Ok(format!("Jacobian {worst:.1e}"))
    } else {
        Err(format!("Jacobian mismatch {worst:.1e}"))
    }
}

fn time_lit(rng: &mut ChaCha8Rng) -> String {
    let v: u32 = rng.random_range(1..5000);
    match rng.random_range(0..3) {
        0 => format!("{}ns", v * 10),
        1 => format!("{}.{}us", v / 100, v % 100),
        _ => format!("0.00{v}ms"),
    }
}

fn time_expr(rng: &mut ChaCha8Rng, params: &[String], depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.4) {
        return if !params.is_empty() && rng.random_bool(0.5) {
            params[rng.random_range(0..params.len())].clone()
        } else {
            time_lit(rng)
        };
    }
    let a = time_expr(rng, params, depth - 1);
    match rng.random_range(0..4) {
        0 => format!("{a} + {}", time_expr(rng, params, depth - 1)),
        1 => format!("({a}) / {}", rng.random_range(2..5)),
        2 => format!("{} * ({a})", rng.random_range(1..4)),
        _ => format!("Trot - ({a}) / 10"),
    }
}

fn random_program(rng: &mut ChaCha8Rng) -> String {
    let names: Vec<String> = (0..rng.random_range(0..4)).map(|i| format!("t{i}")).collect();
    let mut s = String::from("trigger\n");
    for n in &names {
        s += &format!("param {n} = {}\n", time_lit(rng));
    }
    for _ in 0..rng.random_range(1..8) {
        let place = if rng.random_bool(0.25) {
            String::new()
        } else {
            let k = ["at", "until", "center"][rng.random_range(0..3)];
            format!(" {k} {}", time_expr(rng, &names, 3))
        };
        s += &match rng.random_range(0..4) {
            0 => format!("laser for {}{place}", time_lit(rng)),
            1 => {
                let r = if rng.random_bool(0.5) { "pi" } else { "pi/2" };
                let mut l = format!("mw {r}{place}");
                if rng.random_bool(0.5) {
                    l += &format!(" phase {}deg", rng.random_range(-180..180));
                }
                if rng.random_bool(0.5) {
                    l += &format!(" detune {}.5MHz", rng.random_range(-50..50));
                }
                l
            }
            2 => format!("mw for {}{place}", time_lit(rng)),
            _ => format!("wait {}", time_lit(rng)),
        };
        s.push('\n');
    }
    s
}

fn round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(114);
    for i in 0..1000 {
        let src = random_program(&mut rng);
        let prog = parse_sequence(&src).map_err(|e| format!("program {i} rejected: {e}\n{src}"))?;
        let text = print_program(&prog);
        let back = parse_sequence(&text).map_err(|e| format!("program {i} reprint rejected: {e}"))?;
        if back != prog || print_program(&back) != text {
            return Err(format!("program {i} changed on round trip:\n{src}"));
        }
    }
    Ok("1000 programs round-trip".into())
}

fn grid_equivalence() -> Result<String, String> {
    let m = echo_model();
    let mut rng = ChaCha8Rng::seed_from_u64(115);
    let coarse_res = GridResolution {
        b_perp: 150,
        phi0: 1440,
    };
    let fine_res = GridResolution {
        b_perp: 160,
        phi0: 160,
    };
    for trial in 0..50 {
        let p = random_params(&mut rng);
        let data = synth(&m, &p, 0.02, &mut rng);
        let fit = fit_echo(&data, &m, None).map_err(|e| e.to_string())?;
        let coarse = grid_oracle(&data, &m, &GridBounds::full_turn(0.3), coarse_res);
        let (sb, sp) = (fit.sigmas.b_perp, fit.sigmas.phi0);
        let lam = (4.0 * coarse.cell.0 / sb).max(4.0 * coarse.cell.1 / sp);
        let bounds = GridBounds {
            b_perp: ((coarse.params.b_perp - lam * sb).max(0.0), coarse.params.b_perp + lam * sb),
            phi0: (coarse.params.phi0 - lam * sp, coarse.params.phi0 + lam * sp),
        };
        let fine = grid_oracle(&data, &m, &bounds, fine_res);
        let gap = {
            let d = (fit.params.phi0 - fine.params.phi0).rem_euclid(PI);
            d.min(PI - d)
        };
        let agree = fit.converged
            && fine.sse >= fit.chi2 * (1.0 - 1e-9)
            && (fit.params.b_perp - fine.params.b_perp).abs() <= fine.cell.0
            && gap <= fine.cell.1;
        if !agree {
            return Err(format!("grid trial {trial}: fit {:?} vs grid {:?}", fit.params, fine.params));
        }
    }
    Ok("50 grid-oracle fits agree".into())
}

fn reproducible() -> Result<String, String> {
    let cfg = ExperimentConfig::default();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = dir.path().join("p.seq");
    std::fs::write(&seq, "trigger\nmw pi at 0us\nlaser for 2us at Trot\n").map_err(|e| e.to_string())?;
    let e = |x: nvspin_cli::CliError| x.to_string();
    let outputs = |cfg: &ExperimentConfig| -> Result<Vec<Vec<u8>>, String> {
        let taus: Vec<f64> = (1..=12).map(|k| 4.0 * k as f64).collect();
        let echo = commands::simulate_echo(cfg, Some(100_000), &taus).map_err(e)?;
        let file = dir.path().join("e.csv");
        std::fs::write(&file, &echo).map_err(|x| x.to_string())?;
        let fit = commands::fit(cfg, &file, FitModel::Echo, &[]).map_err(e)?.0;
        let mut small = cfg.clone();
        small.image.grid.step_um = 0.5;
        Ok(vec![
            commands::simulate_rabi(cfg, Some(1000)).map_err(e)?,
            echo,
            fit.into_bytes(),
            commands::simulate_readout(cfg, 1000).map_err(e)?,
            commands::simulate_image(&small, commands::ImageFormat::Csv).map_err(e)?.0,
            commands::compile_seq(cfg, &seq, 0.0).map_err(e)?.into_bytes(),
            cfg.to_toml().into_bytes(),
        ])
    };
    let a = outputs(&cfg)?;
    let b = outputs(&cfg)?;
    if a != b {
        return Err("outputs differ between identical runs".into());
    }
    let rows = parse_table(&String::from_utf8_lossy(&a[1])).map_err(e)?.rows.len();
    Ok(format!("{} outputs byte-identical ({rows} echo rows)", a.len()))
}

fn c11() -> Result<Outcome, String> {
    let suites: [(&str, fn() -> Result<String, String>); 6] = [
        ("spin norm", spin_norm),
        ("populations", populations),
        ("jacobian", jacobian),
        ("parser", round_trip),
        ("grid oracle", grid_equivalence),
        ("reproducibility", reproducible),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, f) in suites {
        match f() {
            Ok(s) => notes.push(s),
            Err(s) => {
                pass = false;
                notes.push(format!("{name} FAILED: {s}"));
            }
        }
    }
    outcome(pass, notes.join("; "))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Result<Outcome, String>); 11] = [
        (1, "count-rate bound", c1),
        (2, "transit-reduced rate", c2),
        (3, "angular smear", c3),
        (4, "13C revival", c4),
        (5, "echo phase vs quadrature", c5),
        (6, "eAC amplitude", c6),
        (7, "closed-loop sensing", c7),
        (8, "readout contrast", c8),
        (9, "imaging widths", c9),
        (10, "Rabi recovery", c10),
        (11, "property suites", c11),
    ];
    let mut unexpected = 0;
    for (n, name, f) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        let o = result.unwrap_or_else(|e| Outcome {
            pass: false,
            detail: e,
            known: None,
        });
        let status = if o.pass { "PASS" } else { "FAIL" };
        let mut line = format!("{status} {n:>2} {name}: {} ({secs:.1} s)", o.detail);
        if !o.pass {
            match o.known {
                Some(why) => line += &format!(" [recorded: {why}]"),
                None => unexpected += 1,
            }
        }
        println!("{line}");
    }
    if unexpected > 0 {
        println!("{unexpected} unrecorded failure(s)");
        std::process::exit(1);
    }
}
