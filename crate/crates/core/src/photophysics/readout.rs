use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::beam::{transit_offset, BeamProfile};
use super::levels::{LevelPopulations, RateModel};
use super::ode::{OdeError, Stepper, Tolerance};
use crate::geometry::RotorGeometry;

/// Laser timing for one readout. Offsets are relative to the instant the NV
/// crosses the beam centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutWindow {
    pub t_pulse_us: f64,
    pub turn_on_offset_us: f64,
    pub bin_width_us: f64,
}

impl Default for ReadoutWindow {
    fn default() -> Self {
        Self {
            t_pulse_us: 2.0,
            turn_on_offset_us: -1.0,
            bin_width_us: 0.02,
        }
    }
}

impl ReadoutWindow {
    /// Pulse centred on the beam crossing.
    pub fn centred(t_pulse_us: f64) -> Self {
        Self {
            t_pulse_us,
            turn_on_offset_us: -t_pulse_us / 2.0,
            ..Self::default()
        }
    }

    pub fn n_bins(&self) -> usize {
        ((self.t_pulse_us / self.bin_width_us) - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReadoutError {
    #[error("readout.{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("rate integration failed: {0}")]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContrastError {
    #[error("contrast window of {window_us} us contains no bins")]
    EmptyWindow { window_us: f64 },
    #[error("reference trace has no counts in the contrast window")]
    ZeroReference,
    #[error("traces have different bin widths ({0} vs {1} us)")]
    BinMismatch(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonTrace {
    pub start_us: f64,
    pub bin_width_us: f64,
    pub counts: Vec<u64>,
    pub shots: u64,
}

impl PhotonTrace {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_starts(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.counts.len()).map(|i| self.start_us + i as f64 * self.bin_width_us)
    }

    fn window_bins(&self, window_us: f64) -> usize {
        let n = (window_us / self.bin_width_us - 1e-9).ceil();
        if n <= 0.0 {
            0
        } else {
            (n as usize).min(self.counts.len())
        }
    }

    pub fn window_sum(&self, window_us: f64) -> u64 {
        self.counts[..self.window_bins(window_us)].iter().sum()
    }
}

/// Deterministic per-shot readout prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutExpectation {
    pub start_us: f64,
    pub bin_width_us: f64,
    /// Mean detected counts per shot in each bin.
    pub mean_counts: Vec<f64>,
    pub final_populations: LevelPopulations,
    /// Largest |Σ populations − 1| seen at bin edges.
    pub max_sum_error: f64,
}

impl ReadoutExpectation {
    pub fn window_sum(&self, window_us: f64) -> f64 {
        let n = ((window_us / self.bin_width_us) - 1e-9).ceil().max(0.0) as usize;
        self.mean_counts[..n.min(self.mean_counts.len())].iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.mean_counts.iter().sum()
    }

    /// Poisson realisation of `shots` repetitions.
    pub fn sample(&self, shots: u64, rng: &mut ChaCha8Rng) -> PhotonTrace {
        let counts = self
            .mean_counts
            .iter()
            .map(|&mu| poisson(mu * shots as f64, rng))
            .collect();
        PhotonTrace {
            start_us: self.start_us,
            bin_width_us: self.bin_width_us,
            counts,
            shots,
        }
    }
}

pub(crate) fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    match Poisson::new(lambda) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => lambda.round() as u64,
    }
}

/// Detected counts/s per unit emission rate (1/µs), fixed by N_s.
pub fn fluorescence_scale(m: &RateModel, b: &BeamProfile) -> f64 {
    let e = m.emission(&m.steady_state(1.0));
    if e > 0.0 {
        b.peak_counts_per_s / e
    } else {
        0.0
    }
}

/// Count rate (counts/s) of a beam-centred NV with populations `p`.
pub fn fluorescence_rate(p: &LevelPopulations, m: &RateModel, b: &BeamProfile) -> f64 {
    fluorescence_rate_with_scale(p, m, fluorescence_scale(m, b))
}

/// As [`fluorescence_rate`] with a fixed detection scale.
pub fn fluorescence_rate_with_scale(p: &LevelPopulations, m: &RateModel, scale: f64) -> f64 {
    scale * m.emission(p)
}

pub fn readout_expectation(
    initial: &LevelPopulations,
    g: &RotorGeometry,
    b: &BeamProfile,
    m: &RateModel,
    w: &ReadoutWindow,
) -> Result<ReadoutExpectation, ReadoutError> {
    if !(w.t_pulse_us.is_finite() && w.t_pulse_us > 0.0) {
        return Err(ReadoutError::Invalid {
            field: "t_pulse_us",
            reason: "must be finite and > 0".into(),
        });
    }
    if !(w.bin_width_us.is_finite() && w.bin_width_us > 0.0) {
        return Err(ReadoutError::Invalid {
            field: "bin_width_us",
            reason: "must be finite and > 0".into(),
        });
    }
    if !w.turn_on_offset_us.is_finite() {
        return Err(ReadoutError::Invalid {
            field: "turn_on_offset_us",
            reason: "must be finite".into(),
        });
    }
    let scale = fluorescence_scale(m, b) * 1e-6;
    let bg = b.background_counts_per_s * 1e-6;
    let t0 = w.turn_on_offset_us;
    let t1 = t0 + w.t_pulse_us;
    let mut rhs = |t: f64, y: &[f64; 6]| {
        let d = transit_offset(g, t);
        let gen = m.generator(b.illumination(d));
        let mut dy = [0.0; 6];
        for (i, out) in dy.iter_mut().enumerate().take(5) {
            *out = (0..5).map(|j| gen[(i, j)] * y[j]).sum();
        }
        dy[5] = scale * m.radiative_rate_per_us * (y[2] + y[3]) * b.collection(d) + bg;
        dy
    };
    let p = initial;
    let y0 = [p.g0, p.g1, p.e0, p.e1, p.s, 0.0];
    let mut st = Stepper::new(t0, y0, 1e-4, Tolerance::default());
    let n = w.n_bins();
    let mut mean_counts = Vec::with_capacity(n);
    let mut prev = 0.0;
    let mut max_sum_error = 0.0f64;
    for i in 1..=n {
        let edge = (t0 + i as f64 * w.bin_width_us).min(t1);
        st.advance(&mut rhs, edge)?;
        mean_counts.push(st.y[5] - prev);
        prev = st.y[5];
        let sum: f64 = st.y[..5].iter().sum();
        max_sum_error = max_sum_error.max((sum - 1.0).abs());
    }
    let y = st.y;
    Ok(ReadoutExpectation {
        start_us: t0,
        bin_width_us: w.bin_width_us,
        mean_counts,
        final_populations: LevelPopulations {
            g0: y[0],
            g1: y[1],
            e0: y[2],
            e1: y[3],
            s: y[4],
        },
        max_sum_error,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_readout(
    initial: &LevelPopulations,
    g: &RotorGeometry,
    b: &BeamProfile,
    m: &RateModel,
    w: &ReadoutWindow,
    shots: u64,
    seed: u64,
) -> Result<PhotonTrace, ReadoutError> {
    if shots == 0 {
        return Err(ReadoutError::Invalid {
            field: "shots",
            reason: "must be >= 1".into(),
        });
    }
    let exp = readout_expectation(initial, g, b, m, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(exp.sample(shots, &mut rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastEstimate {
    pub ratio: f64,
    pub std_err: f64,
}

/// Per-shot count ratio of `signal` to `reference` in the first `window_us`.
pub fn state_contrast(
    signal: &PhotonTrace,
    reference: &PhotonTrace,
    window_us: f64,
) -> Result<ContrastEstimate, ContrastError> {
    if (signal.bin_width_us - reference.bin_width_us).abs() > 1e-12 * signal.bin_width_us.abs() {
        return Err(ContrastError::BinMismatch(signal.bin_width_us, reference.bin_width_us));
    }
    if signal.window_bins(window_us) == 0 || reference.window_bins(window_us) == 0 {
        return Err(ContrastError::EmptyWindow { window_us });
    }
    let s = signal.window_sum(window_us) as f64;
    let r = reference.window_sum(window_us) as f64;
    if r == 0.0 {
        return Err(ContrastError::ZeroReference);
    }
    let k = reference.shots as f64 / signal.shots as f64;
    let ratio = s / r * k;
    let std_err = k * (s / (r * r) + s * s / (r * r * r)).sqrt();
    Ok(ContrastEstimate { ratio, std_err })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnOnScan {
    pub offsets_us: Vec<f64>,
    pub snr: Vec<f64>,
    pub best_us: f64,
}

/// Turn-on offset maximising `contrast · √counts` over the contrast window.
pub fn optimal_turn_on(
    g: &RotorGeometry,
    b: &BeamProfile,
    m: &RateModel,
    t_pulse_us: f64,
    window_us: f64,
) -> Result<TurnOnScan, ReadoutError> {
    let v = g.nv_speed_um_per_us();
    if v == 0.0 {
        return Ok(TurnOnScan {
            offsets_us: vec![0.0],
            snr: vec![snr_at(g, b, m, t_pulse_us, window_us, 0.0)?],
            best_us: 0.0,
        });
    }
    let step = 0.05;
    let reach = 2.5 * b.waist_radius_um() / v;
    let lo = ((-t_pulse_us - reach) / step).floor() as i64;
    let hi = (reach / step).ceil() as i64;
    let offsets_us: Vec<f64> = (lo..=hi).map(|i| i as f64 * step).collect();
    let snr = offsets_us
        .iter()
        .map(|&o| snr_at(g, b, m, t_pulse_us, window_us, o))
        .collect::<Result<Vec<_>, _>>()?;
    let mut best = 0;
    for i in 1..snr.len() {
        let better = snr[i] > snr[best] * (1.0 + 1e-12);
        let tie = (snr[i] - snr[best]).abs() <= 1e-12 * snr[best];
        if better || (tie && offsets_us[i].abs() < offsets_us[best].abs()) {
            best = i;
        }
    }
    Ok(TurnOnScan {
        best_us: offsets_us[best],
        offsets_us,
        snr,
    })
}

fn snr_at(
    g: &RotorGeometry,
    b: &BeamProfile,
    m: &RateModel,
    t_pulse_us: f64,
    window_us: f64,
    offset: f64,
) -> Result<f64, ReadoutError> {
    let w = ReadoutWindow {
        t_pulse_us,
        turn_on_offset_us: offset,
        bin_width_us: window_us.min(t_pulse_us),
    };
    let bright = readout_expectation(&LevelPopulations::bright(), g, b, m, &w)?.window_sum(window_us);
    let dark = readout_expectation(&LevelPopulations::dark(), g, b, m, &w)?.window_sum(window_us);
    if bright <= 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - dark / bright) * bright.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn setup() -> (RotorGeometry, BeamProfile, RateModel) {
        (RotorGeometry::default(), BeamProfile::default(), RateModel::default())
    }

    #[test]
    fn fluorescence_rate_properties() {
        let (_, b, m) = setup();
        assert_eq!(fluorescence_rate(&LevelPopulations::bright(), &m, &b), 0.0);
        assert_abs_diff_eq!(fluorescence_rate(&m.steady_state(1.0), &m, &b), 1e5, epsilon = 1e-6);
        let p = LevelPopulations {
            g0: 0.5,
            e0: 0.3,
            e1: 0.1,
            s: 0.1,
            g1: 0.0,
        };
        let scale = fluorescence_scale(&m, &b);
        let m2 = RateModel {
            radiative_rate_per_us: 2.0 * m.radiative_rate_per_us,
            ..m
        };
        assert_abs_diff_eq!(
            fluorescence_rate_with_scale(&p, &m2, scale),
            2.0 * fluorescence_rate_with_scale(&p, &m, scale),
            epsilon = 1e-9
        );
    }

    #[test]
    fn early_rate_ratio_in_contrast_band() {
        let (_, b, m) = setup();
        let ss = m.steady_state(1.0);
        let prep = |p: LevelPopulations| super::super::levels::step_rates(&p, &m, 1.0, 0.03);
        let ratio = fluorescence_rate(&prep(LevelPopulations::dark()), &m, &b)
            / fluorescence_rate(&prep(LevelPopulations::bright()), &m, &b);
        assert!(ratio > 0.5 && ratio < 0.9, "{ratio}");
        assert!(ss.g0 > 0.5);
    }

    #[test]
    fn readout_contrast_and_repump() {
        let (g, b, m) = setup();
        let w = ReadoutWindow::default();
        let bright = readout_expectation(&LevelPopulations::bright(), &g, &b, &m, &w).unwrap();
        let dark = readout_expectation(&LevelPopulations::dark(), &g, &b, &m, &w).unwrap();
        let ratio = dark.window_sum(1.0) / bright.window_sum(1.0);
        assert!((0.70..=0.80).contains(&ratio), "{ratio}");
        let late = dark.mean_counts.last().unwrap() / bright.mean_counts.last().unwrap();
        assert!(late > 0.97, "{late}");
        assert!(bright.final_populations.distance(&dark.final_populations) < 0.02);
        assert!(bright.max_sum_error < 1e-6 && dark.max_sum_error < 1e-6);
    }

    #[test]
    fn contrast_statistics() {
        let t = PhotonTrace {
            start_us: 0.0,
            bin_width_us: 0.1,
            counts: vec![10, 20, 30, 40],
            shots: 5,
        };
        let c = state_contrast(&t, &t, 0.2).unwrap();
        assert_eq!(c.ratio, 1.0);
        assert_abs_diff_eq!(c.std_err, (2.0f64 / 30.0).sqrt(), epsilon = 1e-12);
        assert!(matches!(state_contrast(&t, &t, 0.0), Err(ContrastError::EmptyWindow { .. })));
        let zero = PhotonTrace {
            counts: vec![0; 4],
            ..t.clone()
        };
        assert_eq!(state_contrast(&t, &zero, 0.2), Err(ContrastError::ZeroReference));
    }

    #[test]
    fn stationary_turn_on_is_zero() {
        let (g, b, m) = setup();
        let still = RotorGeometry { r_nv_um: 0.0, ..g };
        assert_eq!(optimal_turn_on(&still, &b, &m, 2.0, 1.0).unwrap().best_us, 0.0);
    }

    #[test]
    fn seeded_traces_repeat() {
        let (g, b, m) = setup();
        let w = ReadoutWindow::default();
        let a = simulate_readout(&LevelPopulations::bright(), &g, &b, &m, &w, 1000, 7).unwrap();
        let c = simulate_readout(&LevelPopulations::bright(), &g, &b, &m, &w, 1000, 7).unwrap();
        assert_eq!(a, c);
        assert!(simulate_readout(&LevelPopulations::bright(), &g, &b, &m, &w, 0, 7).is_err());
    }
}
