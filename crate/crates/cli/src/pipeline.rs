//! End-to-end measurement chain: sequence → spin → readout → contrast.

use nvspin::estimation::EchoModel;
use nvspin::geometry::{effective_amplitude, fringe_phase, mw_coupling};
use nvspin::photophysics::{readout_expectation, state_contrast, LevelPopulations, ReadoutExpectation};
use nvspin::seqlang::{build_calibration, compile_timeline, parse_sequence, CalibrationTable, Channel, PulseTimeline};
use nvspin::spindyn::{c13_envelope, simulate_sequence};
use nvspin::EchoParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ExperimentConfig, PulseAt};
use crate::error::CliError;

/// Bright and dark readout predictions; any spin mixture is a blend of the two.
pub struct ReadoutModel {
    pub bright: ReadoutExpectation,
    pub dark: ReadoutExpectation,
    pub window_us: f64,
    /// Deterministic dark/bright count ratio in the contrast window.
    pub dark_ratio: f64,
}

impl ReadoutModel {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, CliError> {
        let w = cfg.readout.window();
        let rt = |e: nvspin::photophysics::ReadoutError| CliError::Runtime(e.to_string());
        let bright = readout_expectation(&LevelPopulations::bright(), &cfg.geometry, &cfg.beam, &cfg.rates, &w).map_err(rt)?;
        let dark = readout_expectation(&LevelPopulations::dark(), &cfg.geometry, &cfg.beam, &cfg.rates, &w).map_err(rt)?;
        let window_us = cfg.readout.contrast_window_us;
        let b = bright.window_sum(window_us);
        if !(b > 0.0) {
            return Err(CliError::Runtime("bright state yields no counts in the contrast window".into()));
        }
        let dark_ratio = dark.window_sum(window_us) / b;
        if !(dark_ratio < 1.0) {
            return Err(CliError::Runtime(format!(
                "no spin contrast: dark/bright ratio is {dark_ratio:.4}"
            )));
        }
        Ok(Self {
            bright,
            dark,
            window_us,
            dark_ratio,
        })
    }

    /// Prediction for a spin with `p_ms0` in m_S = 0 (rate equations are linear).
    pub fn mixture(&self, p_ms0: f64) -> ReadoutExpectation {
        let a = p_ms0;
        let b = 1.0 - p_ms0;
        let fp = self.bright.final_populations.to_vector() * a + self.dark.final_populations.to_vector() * b;
        ReadoutExpectation {
            start_us: self.bright.start_us,
            bin_width_us: self.bright.bin_width_us,
            mean_counts: self
                .bright
                .mean_counts
                .iter()
                .zip(&self.dark.mean_counts)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            final_populations: LevelPopulations::from_vector(&fp),
            max_sum_error: self.bright.max_sum_error.max(self.dark.max_sum_error),
        }
    }

    /// Sample signal and bright-reference traces and estimate P(m_S = −1)
    /// with its standard error.
    pub fn measure(&self, p_ms0: f64, shots: u64, rng: &mut ChaCha8Rng) -> Result<(f64, f64), CliError> {
        let signal = self.mixture(p_ms0).sample(shots, rng);
        let reference = self.bright.sample(shots, rng);
        let c = state_contrast(&signal, &reference, self.window_us).map_err(|e| CliError::Runtime(e.to_string()))?;
        let scale = 1.0 - self.dark_ratio;
        Ok(((1.0 - c.ratio) / scale, c.std_err / scale))
    }
}

/// Calibration from the physical coupling: the table peak is `γ_e · max |n × B_mw|`.
pub fn calibration(cfg: &ExperimentConfig) -> Result<CalibrationTable, CliError> {
    let n = 360;
    let peak = (0..n)
        .map(|i| mw_coupling(&cfg.geometry, &cfg.field, i as f64 / n as f64 * cfg.geometry.period_s()))
        .fold(0.0, f64::max)
        * cfg.constants.gamma_e_mhz_per_g;
    if peak <= 0.0 {
        return Ok(CalibrationTable::constant(0.0));
    }
    build_calibration(&cfg.geometry, &cfg.field, peak, n).map_err(|e| CliError::Validation(e.to_string()))
}

fn us(v: f64) -> String {
    format!("{v:.9}us")
}

/// Laser placement for the readout one rotation after the trigger.
fn readout_line(cfg: &ExperimentConfig) -> String {
    let off = cfg.readout.turn_on_offset_us;
    let sign = if off < 0.0 { "-" } else { "+" };
    format!("laser for {} at Trot {sign} {}", us(cfg.readout.t_pulse_us), us(off.abs()))
}

pub fn echo_program(cfg: &ExperimentConfig, tau_us: f64) -> String {
    format!(
        "trigger\nparam T0 = {}\nparam tau = {}\nmw pi/2 center T0\nmw pi center T0 + tau/2\nmw pi/2 center T0 + tau\n{}\n",
        us(cfg.echo.t0_us),
        us(tau_us),
        readout_line(cfg)
    )
}

pub fn rabi_program(cfg: &ExperimentConfig, duration_us: f64) -> String {
    let drive = match cfg.rabi.pulse_at {
        PulseAt::Zero => format!("mw for {} at 0us", us(duration_us)),
        PulseAt::HalfPeriod => format!("mw pi at 0us\nmw for {} at Trot/2", us(duration_us)),
    };
    format!("trigger\n{drive}\n{}\n", readout_line(cfg))
}

fn compile(cfg: &ExperimentConfig, src: &str, cal: &CalibrationTable) -> Result<PulseTimeline, CliError> {
    let prog = parse_sequence(src).map_err(|e| CliError::Runtime(format!("internal program failed to parse: {e}")))?;
    compile_timeline(&prog, &cfg.geometry, cal, 0.0).map_err(|e| CliError::Validation(e.to_string()))
}

/// Spin state population P(m_S = 0) at the first readout of a timeline.
fn readout_population(cfg: &ExperimentConfig, tl: &PulseTimeline) -> Result<f64, CliError> {
    let mw_end = tl.on(Channel::Mw).map(|e| e.end()).max();
    let laser = tl.on(Channel::Laser).map(|e| e.start).min();
    if let (Some(end), Some(start)) = (mw_end, laser) {
        if end > start {
            return Err(CliError::Validation(format!(
                "readout would precede sequence end (last pulse ends at {end}, laser starts at {start})"
            )));
        }
    }
    let tr = simulate_sequence(tl, &cfg.geometry, &cfg.field, &cfg.constants)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let (_, state) = tr
        .readouts
        .first()
        .ok_or_else(|| CliError::Runtime("sequence produced no readout".into()))?;
    Ok(state.population_ms0())
}

pub fn echo_params(cfg: &ExperimentConfig) -> EchoParams {
    EchoParams {
        f_rot_hz: cfg.geometry.f_rot_hz,
        t2_us: cfg.echo.t2_us,
        envelope_exponent: cfg.echo.envelope_exponent,
        b0_gauss: cfg.field.b0_gauss,
        collapse_width_us: cfg.echo.collapse_width_us,
        ..EchoParams::default()
    }
}

pub fn echo_model(cfg: &ExperimentConfig) -> EchoModel {
    EchoModel {
        template: echo_params(cfg),
        constants: cfg.constants,
    }
}

/// Ground-truth (b_perp, φ₀) of the echo fringe for this configuration.
pub fn echo_truth(cfg: &ExperimentConfig) -> (f64, f64) {
    let g = &cfg.geometry;
    let phi0 = fringe_phase(g, &cfg.field) + g.omega() * cfg.echo.t0_us * 1e-6;
    (effective_amplitude(g, &cfg.field), phi0.rem_euclid(std::f64::consts::TAU))
}

pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| start + k as f64 * step).collect()
}

/// One measured point: abscissa, value, standard error.
pub type Point = (f64, f64, f64);

/// Echo scan rows `(τ, P(m_S = 0), σ)`.
pub fn simulate_echo(cfg: &ExperimentConfig, taus: &[f64], shots: u64) -> Result<Vec<Point>, CliError> {
    let period = cfg.geometry.period_us();
    if let Some(t) = taus.iter().find(|t| **t >= period) {
        return Err(CliError::Validation(format!(
            "readout would precede sequence end: tau = {t} us is not below T_rot = {period:.3} us"
        )));
    }
    if let Some(t) = taus.iter().find(|t| !(**t >= 0.0)) {
        return Err(CliError::Validation(format!("tau must be >= 0, got {t}")));
    }
    let cal = calibration(cfg)?;
    let readout = ReadoutModel::new(cfg)?;
    let env_params = echo_params(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    taus.iter()
        .map(|&tau| {
            let tl = compile(cfg, &echo_program(cfg, tau), &cal)?;
            let p0 = readout_population(cfg, &tl)?;
            let env = c13_envelope(&env_params, &cfg.constants, tau);
            let p0 = 0.5 + env * (p0 - 0.5);
            let (p1_hat, sigma) = readout.measure(p0, shots, &mut rng)?;
            Ok((tau, 1.0 - p1_hat, sigma))
        })
        .collect()
}

/// Rabi scan rows `(duration, P(m_S = −1), σ)`.
pub fn simulate_rabi(cfg: &ExperimentConfig, durations: &[f64], shots: u64) -> Result<Vec<Point>, CliError> {
    let cal = calibration(cfg)?;
    let readout = ReadoutModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    durations
        .iter()
        .map(|&d| {
            if !(d >= 0.0) {
                return Err(CliError::Validation(format!("pulse duration must be >= 0, got {d}")));
            }
            let tl = compile(cfg, &rabi_program(cfg, d), &cal)?;
            let p0 = readout_population(cfg, &tl)?;
            let (p1_hat, sigma) = readout.measure(p0, shots, &mut rng)?;
            Ok((d, p1_hat, sigma))
        })
        .collect()
}
