use crate::geometry::{mw_coupling, FieldConfig, RotorGeometry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("n_angles must be at least 1")]
    NoAngles,
    #[error("base Rabi frequency must be finite and > 0, got {0}")]
    BadRabi(f64),
    #[error("microwave coupling vanishes at rotation angle {angle_deg:.3} deg; pulse cannot be tuned")]
    ZeroCoupling { angle_deg: f64 },
}

/// Effective Rabi frequency (MHz) sampled at uniform rotation angles.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    angles_deg: Vec<f64>,
    rabi_mhz: Vec<f64>,
}

/// Couplings below this (in G) count as zero.
const MIN_COUPLING: f64 = 1e-12;

pub fn build_calibration(
    g: &RotorGeometry,
    f: &FieldConfig,
    base_rabi_mhz: f64,
    n_angles: usize,
) -> Result<CalibrationTable, CalibrationError> {
    if n_angles == 0 {
        return Err(CalibrationError::NoAngles);
    }
    if !(base_rabi_mhz.is_finite() && base_rabi_mhz > 0.0) {
        return Err(CalibrationError::BadRabi(base_rabi_mhz));
    }
    let angles: Vec<f64> = (0..n_angles).map(|i| 360.0 * i as f64 / n_angles as f64).collect();
    let coupling: Vec<f64> = angles
        .iter()
        .map(|a| mw_coupling(g, f, a / 360.0 * g.period_s()))
        .collect();
    if let Some(i) = coupling.iter().position(|&c| c.abs() < MIN_COUPLING) {
        return Err(CalibrationError::ZeroCoupling { angle_deg: angles[i] });
    }
    let max = coupling.iter().cloned().fold(0.0, f64::max);
    Ok(CalibrationTable {
        rabi_mhz: coupling.iter().map(|c| base_rabi_mhz * c / max).collect(),
        angles_deg: angles,
    })
}

impl CalibrationTable {
    /// Table with the same Rabi frequency at every angle.
    pub fn constant(rabi_mhz: f64) -> Self {
        Self {
            angles_deg: vec![0.0],
            rabi_mhz: vec![rabi_mhz],
        }
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn rabi_mhz(&self) -> &[f64] {
        &self.rabi_mhz
    }

    /// Linear interpolation in Ω with wrap-around at 360°.
    pub fn lookup(&self, angle_deg: f64) -> f64 {
        let n = self.angles_deg.len();
        if n == 1 {
            return self.rabi_mhz[0];
        }
        let step = 360.0 / n as f64;
        let a = angle_deg.rem_euclid(360.0);
        let x = a / step;
        let i = (x.floor() as usize).min(n - 1);
        let frac = x - i as f64;
        let j = (i + 1) % n;
        self.rabi_mhz[i] * (1.0 - frac) + self.rabi_mhz[j] * frac
    }

    pub fn max_min_ratio(&self) -> f64 {
        let max = self.rabi_mhz.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.rabi_mhz.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_tables() {
        let g = RotorGeometry {
            theta_nv_deg: 0.0,
            ..RotorGeometry::default()
        };
        let t = build_calibration(&g, &FieldConfig::default(), 3.6, 36).unwrap();
        assert!(t.rabi_mhz().iter().all(|&r| (r - 3.6).abs() < 1e-12));

        let f = FieldConfig {
            mw_dir: [0.0, 0.0, 1.0],
            ..FieldConfig::default()
        };
        let t = build_calibration(&RotorGeometry::default(), &f, 3.6, 36).unwrap();
        assert!(t.rabi_mhz().iter().all(|&r| (r - 3.6).abs() < 1e-12));
    }

    #[test]
    fn varying_table_matches_dense_evaluation() {
        let g = RotorGeometry::default();
        let f = FieldConfig::default();
        let t = build_calibration(&g, &f, 3.6, 72).unwrap();
        let dense: Vec<f64> = (0..7200)
            .map(|i| mw_coupling(&g, &f, i as f64 / 7200.0 * g.period_s()))
            .collect();
        let max = dense.iter().cloned().fold(f64::MIN, f64::max);
        let min = dense.iter().cloned().fold(f64::MAX, f64::min);
        assert_abs_diff_eq!(t.max_min_ratio(), max / min, epsilon = 1e-9);
        assert!(t.max_min_ratio() > 1.5);
        assert!(t.angles_deg().iter().all(|a| (0.0..360.0).contains(a)));
    }

    #[test]
    fn zero_coupling_is_reported() {
        let g = RotorGeometry {
            theta_nv_deg: 0.0,
            ..RotorGeometry::default()
        };
        let f = FieldConfig {
            mw_dir: [0.0, 0.0, 1.0],
            ..FieldConfig::default()
        };
        let e = build_calibration(&g, &f, 3.6, 8).unwrap_err();
        assert_eq!(e, CalibrationError::ZeroCoupling { angle_deg: 0.0 });
    }

    #[test]
    fn lookup_wraps() {
        let t = CalibrationTable {
            angles_deg: vec![0.0, 90.0, 180.0, 270.0],
            rabi_mhz: vec![1.0, 2.0, 3.0, 4.0],
        };
        assert_abs_diff_eq!(t.lookup(45.0), 1.5);
        assert_abs_diff_eq!(t.lookup(315.0), 2.5);
        assert_abs_diff_eq!(t.lookup(-45.0), 2.5);
        assert_abs_diff_eq!(t.lookup(360.0), 1.0);
    }
}
