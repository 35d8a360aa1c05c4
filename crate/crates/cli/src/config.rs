//! Experiment configuration: one TOML document with unit-suffixed keys.

use std::path::Path;

use nvspin::imaging::{Emitter, ScanGrid, StrobeConfig};
use nvspin::photophysics::{BeamProfile, RateModel, ReadoutWindow};
use nvspin::{FieldConfig, PhysicalConstants, RotorGeometry, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutConfig {
    pub t_pulse_us: f64,
    /// Laser turn-on relative to the beam crossing.
    pub turn_on_offset_us: f64,
    pub bin_width_us: f64,
    /// Leading part of the trace used for state discrimination.
    pub contrast_window_us: f64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        let w = ReadoutWindow::default();
        Self {
            t_pulse_us: w.t_pulse_us,
            turn_on_offset_us: w.turn_on_offset_us,
            bin_width_us: w.bin_width_us,
            contrast_window_us: 1.0,
        }
    }
}

impl ReadoutConfig {
    pub fn window(&self) -> ReadoutWindow {
        ReadoutWindow {
            t_pulse_us: self.t_pulse_us,
            turn_on_offset_us: self.turn_on_offset_us,
            bin_width_us: self.bin_width_us,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoConfig {
    pub tau_start_us: f64,
    pub tau_stop_us: f64,
    pub tau_step_us: f64,
    pub shots: u64,
    /// Centre of the first π/2 pulse after the trigger.
    pub t0_us: f64,
    pub t2_us: f64,
    pub envelope_exponent: f64,
    pub collapse_width_us: f64,
}

impl Default for EchoConfig {
    fn default() -> Self {
        Self {
            tau_start_us: 1.0,
            tau_stop_us: 59.0,
            tau_step_us: 1.0,
            shots: 3_000_000,
            t0_us: 10.0,
            t2_us: 350.0,
            envelope_exponent: 4.0,
            collapse_width_us: 110.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseAt {
    /// Drive from the trigger edge, starting in m_S = 0.
    #[default]
    Zero,
    /// π pulse at the trigger, then drive from T_rot/2.
    HalfPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RabiConfig {
    pub duration_start_us: f64,
    pub duration_stop_us: f64,
    pub duration_step_us: f64,
    pub shots: u64,
    pub pulse_at: PulseAt,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            duration_start_us: 0.0,
            duration_stop_us: 1.0,
            duration_step_us: 0.02,
            shots: 100_000,
            pulse_at: PulseAt::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageConfig {
    pub grid: ScanGrid,
    pub psf_width_um: f64,
    pub emitters: Vec<Emitter>,
    /// Image with the rotor at rest and the laser on for the whole dwell.
    pub stationary: bool,
    pub max_pixels: usize,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            // Frames both default emitters.
            grid: ScanGrid {
                x_range_um: (6.0, 13.0),
                v_range_um: (-1.5, 5.5),
                ..ScanGrid::default()
            },
            psf_width_um: 0.3,
            emitters: vec![
                Emitter::new(Vec3::new(10.0, 0.0, 0.0), 1e5),
                Emitter::new(Vec3::new(9.352, 3.542, 0.0), 1e5),
            ],
            stationary: false,
            max_pixels: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub geometry: RotorGeometry,
    pub field: FieldConfig,
    pub constants: PhysicalConstants,
    pub beam: BeamProfile,
    pub rates: RateModel,
    pub strobe: StrobeConfig,
    pub readout: ReadoutConfig,
    pub echo: EchoConfig,
    pub rabi: RabiConfig,
    pub image: ImageConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let constants = PhysicalConstants::default();
        Self {
            seed: 1,
            geometry: RotorGeometry::default(),
            // 3.6 MHz peak Rabi frequency.
            field: FieldConfig {
                mw_amp_gauss: 3.6 / constants.gamma_e_mhz_per_g,
                ..FieldConfig::default()
            },
            constants,
            beam: BeamProfile::default(),
            rates: RateModel::default(),
            strobe: StrobeConfig::default(),
            readout: ReadoutConfig::default(),
            echo: EchoConfig::default(),
            rabi: RabiConfig::default(),
            image: ImageConfig::default(),
        }
    }
}

fn check(ok: bool, path: &str, reason: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{path}: {reason}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |section: &str, e: String| CliError::Validation(format!("{section}.{e}"));
        self.geometry.validate().map_err(|e| v("geometry", e.to_string()))?;
        self.field.validate().map_err(|e| v("field", e.to_string()))?;
        self.constants.validate().map_err(|e| v("constants", e.to_string()))?;
        self.beam.validate().map_err(|e| v("beam", e.to_string()))?;
        self.rates.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.strobe.validate().map_err(|e| v("strobe", e.to_string()))?;
        self.image.grid.validate().map_err(|e| v("image.grid", e.to_string()))?;

        let r = &self.readout;
        check(r.t_pulse_us > 0.0 && r.t_pulse_us.is_finite(), "readout.t_pulse_us", "must be > 0")?;
        check(r.bin_width_us > 0.0 && r.bin_width_us.is_finite(), "readout.bin_width_us", "must be > 0")?;
        check(r.turn_on_offset_us.is_finite(), "readout.turn_on_offset_us", "must be finite")?;
        check(
            r.contrast_window_us > 0.0 && r.contrast_window_us <= r.t_pulse_us,
            "readout.contrast_window_us",
            "must lie in (0, t_pulse_us]",
        )?;

        let e = &self.echo;
        check(e.tau_step_us > 0.0, "echo.tau_step_us", "must be > 0")?;
        check(
            e.tau_start_us >= 0.0 && e.tau_stop_us >= e.tau_start_us,
            "echo.tau_start_us",
            "need 0 <= tau_start_us <= tau_stop_us",
        )?;
        check(e.shots >= 1, "echo.shots", "must be >= 1")?;
        check(e.t0_us >= 0.0 && e.t0_us.is_finite(), "echo.t0_us", "must be >= 0")?;
        check(e.t2_us > 0.0, "echo.t2_us", "must be > 0")?;
        check(e.envelope_exponent > 0.0, "echo.envelope_exponent", "must be > 0")?;
        check(e.collapse_width_us > 0.0, "echo.collapse_width_us", "must be > 0")?;

        let b = &self.rabi;
        check(b.duration_step_us > 0.0, "rabi.duration_step_us", "must be > 0")?;
        check(
            b.duration_start_us >= 0.0 && b.duration_stop_us >= b.duration_start_us,
            "rabi.duration_start_us",
            "need 0 <= duration_start_us <= duration_stop_us",
        )?;
        check(b.shots >= 1, "rabi.shots", "must be >= 1")?;

        let i = &self.image;
        check(i.psf_width_um > 0.0 && i.psf_width_um.is_finite(), "image.psf_width_um", "must be > 0")?;
        for (k, em) in i.emitters.iter().enumerate() {
            check(
                em.brightness_cps >= 0.0 && em.position_um.iter().all(|x| x.is_finite()),
                &format!("image.emitters[{k}]"),
                "brightness must be >= 0 and position finite",
            )?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// Short SHA-256 digest of the canonical TOML dump.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Parse a `--set` value as a TOML scalar or array; fall back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<(), CliError> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad --set path '{path}'")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("--set {path}: '{p}' is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Load the config file (if any), apply `path=value` overrides, validate.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Runtime(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects path=value, got '{o}'")))?;
        set_path(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Validation(format!("config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_apply_and_validate() {
        let cfg = load(None, &["geometry.f_rot_hz=1000".into(), "seed=9".into()]).unwrap();
        assert_eq!(cfg.geometry.f_rot_hz, 1000.0);
        assert_eq!(cfg.seed, 9);
        let err = load(None, &["geometry.f_rot_hz=-1".into()]).unwrap_err();
        assert!(err.to_string().contains("geometry.f_rot_hz"), "{err}");
        let err = load(None, &["geometry.bogus=1".into()]).unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
    }
}
