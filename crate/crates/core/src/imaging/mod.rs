//! Strobed scanning-confocal images of emitters on a spinning diamond.
//!
//! Emitters rotate about the lab `z` axis. Each rotation cycle fires one laser
//! pulse `t_phi` after the trigger; per cycle the rotor phase is perturbed by
//! period jitter and the rotation centre by a radial wobble.

mod spot;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{RotorGeometry, Vec3};
use crate::photophysics::poisson;

pub use spot::{fit_spot_width, SpotFitError, SpotFitOptions, SpotWidth};

/// Axial (z) PSF width as a multiple of the lateral width.
pub const AXIAL_PSF_RATIO: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ImagingError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("scan has {pixels} pixels, above the limit of {limit}")]
    TooManyPixels { pixels: usize, limit: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ImagingError {
    ImagingError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanPlane {
    /// Lateral scan; the second axis is `y`.
    #[default]
    Xy,
    /// Depth scan; the second axis is `z`.
    Xz,
}

/// Raster over the scan plane. Both ranges are inclusive of their ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanGrid {
    pub plane: ScanPlane,
    pub x_range_um: (f64, f64),
    /// `y` for an `xy` scan, `z` for an `xz` scan.
    pub v_range_um: (f64, f64),
    /// Fixed out-of-plane coordinate.
    pub offset_um: f64,
    pub step_um: f64,
    pub dwell_ms: f64,
}

impl Default for ScanGrid {
    fn default() -> Self {
        Self {
            plane: ScanPlane::Xy,
            x_range_um: (6.0, 14.0),
            v_range_um: (-4.0, 4.0),
            offset_um: 0.0,
            step_um: 0.1,
            dwell_ms: 200.0,
        }
    }
}

impl ScanGrid {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.step_um.is_finite() && self.step_um > 0.0) {
            return Err(invalid("step_um", "must be > 0"));
        }
        if !(self.dwell_ms.is_finite() && self.dwell_ms > 0.0) {
            return Err(invalid("dwell_ms", "must be > 0"));
        }
        for (field, r) in [("x_range_um", self.x_range_um), ("v_range_um", self.v_range_um)] {
            if !(r.0.is_finite() && r.1.is_finite() && r.1 >= r.0) {
                return Err(invalid(field, "need finite lo <= hi"));
            }
        }
        if !self.offset_um.is_finite() {
            return Err(invalid("offset_um", "must be finite"));
        }
        Ok(())
    }

    fn count(range: (f64, f64), step: f64) -> usize {
        ((range.1 - range.0) / step + 1e-9).floor() as usize + 1
    }

    pub fn nx(&self) -> usize {
        Self::count(self.x_range_um, self.step_um)
    }

    pub fn nv(&self) -> usize {
        Self::count(self.v_range_um, self.step_um)
    }

    pub fn pixels(&self) -> usize {
        self.nx() * self.nv()
    }

    /// Lab position of pixel `(ix, iv)`.
    pub fn position(&self, ix: usize, iv: usize) -> Vec3 {
        let x = self.x_range_um.0 + ix as f64 * self.step_um;
        let v = self.v_range_um.0 + iv as f64 * self.step_um;
        match self.plane {
            ScanPlane::Xy => Vec3::new(x, v, self.offset_um),
            ScanPlane::Xz => Vec3::new(x, self.offset_um, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrobeConfig {
    /// Trigger-to-laser delay.
    pub t_phi_us: f64,
    pub t_pulse_us: f64,
    /// Relative standard deviation of the rotation period.
    pub jitter_frac: f64,
    /// Standard deviation of the per-cycle radial displacement.
    pub wobble_amp_um: f64,
}

impl Default for StrobeConfig {
    fn default() -> Self {
        Self {
            t_phi_us: 0.0,
            t_pulse_us: 2.0,
            jitter_frac: 0.004,
            wobble_amp_um: 0.53,
        }
    }
}

impl StrobeConfig {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.t_pulse_us.is_finite() && self.t_pulse_us >= 0.0) {
            return Err(invalid("t_pulse_us", "must be >= 0"));
        }
        if !(self.jitter_frac.is_finite() && self.jitter_frac >= 0.0) {
            return Err(invalid("jitter_frac", "must be >= 0"));
        }
        if !(self.wobble_amp_um.is_finite() && self.wobble_amp_um >= 0.0) {
            return Err(invalid("wobble_amp_um", "must be >= 0"));
        }
        if !self.t_phi_us.is_finite() {
            return Err(invalid("t_phi_us", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emitter {
    /// Position at the trigger edge (µm).
    pub position_um: [f64; 3],
    pub brightness_cps: f64,
}

impl Emitter {
    pub fn new(position: Vec3, brightness_cps: f64) -> Self {
        Self {
            position_um: position.into(),
            brightness_cps,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::from(self.position_um)
    }
}

pub type EmitterSet = Vec<Emitter>;

/// Arc swept by the rotor during one pulse, in degrees.
pub fn angular_smear(g: &RotorGeometry, t_pulse_us: f64) -> f64 {
    360.0 * t_pulse_us * 1e-6 * g.f_rot_hz
}

/// Counts per pixel, row-major with `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub grid: ScanGrid,
    pub counts: Vec<u64>,
}

impl Image {
    pub fn nx(&self) -> usize {
        self.grid.nx()
    }

    pub fn nv(&self) -> usize {
        self.grid.nv()
    }

    pub fn get(&self, ix: usize, iv: usize) -> u64 {
        self.counts[iv * self.nx() + ix]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// In-plane coordinates (x, v) of a pixel.
    pub fn coords(&self, ix: usize, iv: usize) -> (f64, f64) {
        (
            self.grid.x_range_um.0 + ix as f64 * self.grid.step_um,
            self.grid.v_range_um.0 + iv as f64 * self.grid.step_um,
        )
    }

    /// Brightest pixel as `(ix, iv)`; ties resolve to the first in row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let (k, _) = self
            .counts
            .iter()
            .enumerate()
            .fold((0, 0), |best, (k, &c)| if c > best.1 { (k, c) } else { best });
        (k % self.nx(), k / self.nx())
    }

    /// Counts along row `iv`.
    pub fn row(&self, iv: usize) -> &[u64] {
        let nx = self.nx();
        &self.counts[iv * nx..(iv + 1) * nx]
    }
}

/// Gaussian PSF with 1/e² radius `width` laterally, elongated along `z`.
fn psf(d: &Vec3, width: f64) -> f64 {
    let axial = width * AXIAL_PSF_RATIO;
    (-2.0 * ((d.x * d.x + d.y * d.y) / (width * width) + d.z * d.z / (axial * axial))).exp()
}

/// Position of an emitter `t_s` after the trigger, rotated by an extra
/// `dtheta` and pushed radially by `dr`.
fn strobed_position(e: &Emitter, omega: f64, t_s: f64, dtheta: f64, dr: f64) -> Vec3 {
    let [x, y, z] = e.position_um;
    let theta = y.atan2(x) + omega * t_s + dtheta;
    let rr = (x.hypot(y) + dr).max(0.0);
    Vec3::new(rr * theta.cos(), rr * theta.sin(), z)
}

/// Rotation cycles that fit in one dwell, at least one.
pub fn cycles_per_dwell(g: &RotorGeometry, dwell_ms: f64) -> usize {
    ((dwell_ms * 1e-3 * g.f_rot_hz).round() as usize).max(1)
}

/// Monte-Carlo strobed image.
///
/// With `g.f_rot_hz == 0` the sample is stationary and continuously lit for
/// the whole dwell; jitter and wobble then have nothing to act on.
pub fn render_image(
    grid: &ScanGrid,
    emitters: &[Emitter],
    g: &RotorGeometry,
    strobe: &StrobeConfig,
    psf_width_um: f64,
    seed: u64,
) -> Result<Image, ImagingError> {
    grid.validate()?;
    strobe.validate()?;
    if !(psf_width_um.is_finite() && psf_width_um > 0.0) {
        return Err(invalid("psf_width_um", "must be > 0"));
    }
    if !(g.f_rot_hz.is_finite() && g.f_rot_hz >= 0.0) {
        return Err(invalid("f_rot_hz", "must be finite and >= 0"));
    }
    if let Some(e) = emitters.iter().find(|e| !(e.brightness_cps >= 0.0)) {
        return Err(invalid("brightness_cps", format!("must be >= 0, got {}", e.brightness_cps)));
    }
    let stationary = g.f_rot_hz == 0.0;
    if !stationary && strobe.t_pulse_us > g.period_us() {
        return Err(invalid("t_pulse_us", "longer than the rotation period"));
    }

    let nx = grid.nx();
    let omega = g.omega();
    let n_cycles = if stationary { 0 } else { cycles_per_dwell(g, grid.dwell_ms) };
    let pulse_s = strobe.t_pulse_us * 1e-6;
    let jitter = Normal::new(0.0, 2.0 * PI * strobe.jitter_frac).expect("validated");
    let wobble = Normal::new(0.0, strobe.wobble_amp_um).expect("validated");

    let counts = (0..grid.pixels())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let scan = grid.position(k % nx, k / nx);
            let lambda = if stationary {
                let dwell_s = grid.dwell_ms * 1e-3;
                emitters
                    .iter()
                    .map(|e| e.brightness_cps * dwell_s * psf(&(scan - e.position()), psf_width_um))
                    .sum()
            } else {
                let mut acc = 0.0;
                for _ in 0..n_cycles {
                    let dtheta = jitter.sample(&mut rng);
                    let dr = wobble.sample(&mut rng);
                    let u: f64 = rng.random::<f64>() * pulse_s;
                    let t = strobe.t_phi_us * 1e-6 + u;
                    for e in emitters {
                        let p = strobed_position(e, omega, t, dtheta, dr);
                        acc += e.brightness_cps * pulse_s * psf(&(scan - p), psf_width_um);
                    }
                }
                acc
            };
            poisson(lambda, &mut rng)
        })
        .collect();
    Ok(Image { grid: *grid, counts })
}

/// `render_image` with a pixel-count guard for callers that must bound memory.
pub fn render_image_limited(
    grid: &ScanGrid,
    emitters: &[Emitter],
    g: &RotorGeometry,
    strobe: &StrobeConfig,
    psf_width_um: f64,
    seed: u64,
    max_pixels: usize,
) -> Result<Image, ImagingError> {
    grid.validate()?;
    if grid.pixels() > max_pixels {
        return Err(ImagingError::TooManyPixels {
            pixels: grid.pixels(),
            limit: max_pixels,
        });
    }
    render_image(grid, emitters, g, strobe, psf_width_um, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn operating_rotor() -> RotorGeometry {
        RotorGeometry {
            f_rot_hz: 3333.33,
            ..RotorGeometry::default()
        }
    }

    #[test]
    fn smear_examples() {
        let g = operating_rotor();
        assert!((angular_smear(&g, 2.0) - 2.4).abs() < 1e-4);
        assert_eq!(angular_smear(&g, 0.0), 0.0);
        assert!((angular_smear(&g, g.period_us()) - 360.0).abs() < 1e-9);
    }

    #[test]
    fn grid_counts_include_ends() {
        let g = ScanGrid {
            x_range_um: (0.0, 1.0),
            v_range_um: (0.0, 0.5),
            step_um: 0.1,
            ..ScanGrid::default()
        };
        assert_eq!((g.nx(), g.nv()), (11, 6));
        assert!((g.position(10, 5) - Vec3::new(1.0, 0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn deterministic_for_seed() {
        let grid = ScanGrid {
            x_range_um: (9.0, 11.0),
            v_range_um: (-1.0, 1.0),
            step_um: 0.25,
            dwell_ms: 20.0,
            ..ScanGrid::default()
        };
        let em = [Emitter::new(Vec3::new(10.0, 0.0, 0.0), 1e5)];
        let s = StrobeConfig::default();
        let a = render_image(&grid, &em, &operating_rotor(), &s, 0.3, 7).unwrap();
        let b = render_image(&grid, &em, &operating_rotor(), &s, 0.3, 7).unwrap();
        let c = render_image(&grid, &em, &operating_rotor(), &s, 0.3, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.total() > 0);
    }

    #[test]
    fn rejects_bad_config() {
        let em: [Emitter; 0] = [];
        let g = operating_rotor();
        assert!(render_image(&ScanGrid::default(), &em, &g, &StrobeConfig::default(), 0.0, 1).is_err());
        let long = StrobeConfig {
            t_pulse_us: 400.0,
            ..StrobeConfig::default()
        };
        assert!(render_image(&ScanGrid::default(), &em, &g, &long, 0.3, 1).is_err());
        let r = render_image_limited(&ScanGrid::default(), &em, &g, &StrobeConfig::default(), 0.3, 1, 10);
        assert!(matches!(r, Err(ImagingError::TooManyPixels { .. })));
    }
}
