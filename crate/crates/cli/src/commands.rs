use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use nvspin::estimation::{fit_echo, fit_rabi, EchoDataset, EchoFitParams, FitResult, RabiDataset, RabiFit, Record};
use nvspin::imaging::{angular_smear, fit_spot_width, render_image_limited, Image, SpotFitOptions};
use nvspin::photophysics::{expected_count_rate, optimal_turn_on, LevelPopulations};
use nvspin::seqlang::{compile_timeline, parse_sequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, ExperimentConfig, PulseAt};
use crate::error::CliError;
use crate::io::{emit, read_table, write_table, Header};
use crate::pipeline::{self, ReadoutModel};

#[derive(Debug, Parser)]
#[command(name = "nvspin", version, about = "NV spin qubit in a rotating diamond: simulate and fit")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, env = "NVSPIN_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Override a config field, e.g. `--set geometry.f_rot_hz=1000`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    pub set: Vec<String>,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PulseAtArg {
    Zero,
    HalfPeriod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormat {
    /// Header plus one line of counts per image row.
    Grid,
    /// One `x_um,v_um,counts` row per pixel.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitModel {
    /// Pick from the dataset's first column name.
    Auto,
    Echo,
    Rabi,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rabi scan through the full sequence/readout chain.
    SimulateRabi {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        pulse_at: Option<PulseAtArg>,
        #[arg(long)]
        shots: Option<u64>,
    },
    /// Spin-echo scan with Poisson error bars.
    SimulateEcho {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        shots: Option<u64>,
        /// Explicit τ list in µs (comma separated) instead of the config range.
        #[arg(long, value_delimiter = ',')]
        tau: Vec<f64>,
    },
    /// Strobed confocal image plus fitted spot widths.
    SimulateImage {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "grid")]
        format: ImageFormat,
        #[arg(long)]
        stationary: bool,
    },
    /// Photon traces for m_S = 0 and m_S = −1 readouts.
    SimulateReadout {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
    },
    /// Parse and compile a pulse program into a timeline.
    CompileSeq {
        file: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t_phi_us: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fit an echo or Rabi dataset.
    Fit {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        model: FitModel,
        /// Echo: b_perp,phi0,contrast,baseline. Rabi: rabi_mhz,contrast,baseline.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        initial: Vec<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the effective configuration.
    DumpConfig {
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.set)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::SimulateRabi {
            output,
            pulse_at,
            shots,
        } => {
            if let Some(p) = pulse_at {
                cfg.rabi.pulse_at = match p {
                    PulseAtArg::Zero => PulseAt::Zero,
                    PulseAtArg::HalfPeriod => PulseAt::HalfPeriod,
                };
            }
            emit(output.as_deref(), &simulate_rabi(&cfg, shots)?)
        }
        Command::SimulateEcho { output, shots, tau } => {
            emit(output.as_deref(), &simulate_echo(&cfg, shots, &tau)?)
        }
        Command::SimulateImage {
            output,
            format,
            stationary,
        } => {
            if stationary {
                cfg.image.stationary = true;
            }
            let (body, summary) = simulate_image(&cfg, format)?;
            emit(output.as_deref(), &body)?;
            if output.is_some() {
                print!("{summary}");
            } else {
                eprint!("{summary}");
            }
            Ok(())
        }
        Command::SimulateReadout { output, shots } => emit(output.as_deref(), &simulate_readout(&cfg, shots)?),
        Command::CompileSeq { file, t_phi_us, output } => {
            emit(output.as_deref(), compile_seq(&cfg, &file, t_phi_us)?.as_bytes())
        }
        Command::Fit {
            file,
            model,
            initial,
            output,
        } => {
            let (report, converged) = fit(&cfg, &file, model, &initial)?;
            emit(output.as_deref(), report.as_bytes())?;
            if converged {
                Ok(())
            } else {
                Err(CliError::NotConverged(format!("{}", file.display())))
            }
        }
        Command::DumpConfig { output } => emit(output.as_deref(), cfg.to_toml().as_bytes()),
    }
}

fn header(cfg: &ExperimentConfig, command: &'static str) -> Header {
    Header::new(command, cfg.hash(), cfg.seed)
}

pub fn simulate_rabi(cfg: &ExperimentConfig, shots: Option<u64>) -> Result<Vec<u8>, CliError> {
    let r = &cfg.rabi;
    let shots = shots.unwrap_or(r.shots);
    let durations = pipeline::grid(r.duration_start_us, r.duration_stop_us, r.duration_step_us);
    let rows = pipeline::simulate_rabi(cfg, &durations, shots)?;
    let pulse_at = match r.pulse_at {
        PulseAt::Zero => "zero",
        PulseAt::HalfPeriod => "half_period",
    };
    let h = header(cfg, "simulate-rabi").with("shots", shots).with("pulse_at", pulse_at);
    let mut out = Vec::new();
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|(a, b, c)| vec![a, b, c]).collect();
    write_table(&mut out, &h, &["duration_us", "population", "sigma"], &rows)?;
    Ok(out)
}

pub fn simulate_echo(cfg: &ExperimentConfig, shots: Option<u64>, taus: &[f64]) -> Result<Vec<u8>, CliError> {
    let e = &cfg.echo;
    let shots = shots.unwrap_or(e.shots);
    if shots == 0 {
        return Err(CliError::Validation("shots must be >= 1".into()));
    }
    let taus = if taus.is_empty() {
        pipeline::grid(e.tau_start_us, e.tau_stop_us, e.tau_step_us)
    } else {
        taus.to_vec()
    };
    let rows = pipeline::simulate_echo(cfg, &taus, shots)?;
    let (b, phi0) = pipeline::echo_truth(cfg);
    let h = header(cfg, "simulate-echo")
        .with("shots", shots)
        .with("b_perp_true_gauss", b)
        .with("phi0_true_rad", phi0);
    let mut out = Vec::new();
    let rows: Vec<Vec<f64>> = rows.into_iter().map(|(a, b, c)| vec![a, b, c]).collect();
    write_table(&mut out, &h, &["tau_us", "signal", "sigma"], &rows)?;
    Ok(out)
}

pub fn render(cfg: &ExperimentConfig) -> Result<Image, CliError> {
    let mut g = cfg.geometry;
    if cfg.image.stationary {
        g.f_rot_hz = 0.0;
    }
    let i = &cfg.image;
    render_image_limited(&i.grid, &i.emitters, &g, &cfg.strobe, i.psf_width_um, cfg.seed, i.max_pixels)
        .map_err(|e| CliError::Validation(format!("image: {e}")))
}

/// Image file and a human-readable width summary.
pub fn simulate_image(cfg: &ExperimentConfig, format: ImageFormat) -> Result<(Vec<u8>, String), CliError> {
    let img = render(cfg)?;
    let grid = &cfg.image.grid;
    let s = &cfg.strobe;
    let duty = if cfg.image.stationary {
        1.0
    } else {
        s.t_pulse_us / cfg.geometry.period_us()
    };
    let h = header(cfg, "simulate-image")
        .with("plane", format!("{:?}", grid.plane).to_lowercase())
        .with("x_range_um", format!("{} {}", grid.x_range_um.0, grid.x_range_um.1))
        .with("v_range_um", format!("{} {}", grid.v_range_um.0, grid.v_range_um.1))
        .with("step_um", grid.step_um)
        .with("dwell_ms", grid.dwell_ms)
        .with("nx", grid.nx())
        .with("nv", grid.nv())
        .with("t_phi_us", s.t_phi_us)
        .with("t_pulse_us", s.t_pulse_us)
        .with("jitter_frac", s.jitter_frac)
        .with("wobble_amp_um", s.wobble_amp_um)
        .with("duty_cycle", format!("{duty:.4}"))
        .with("angular_smear_deg", angular_smear(&cfg.geometry, s.t_pulse_us))
        .with("stationary", cfg.image.stationary);
    let mut out = Vec::new();
    match format {
        ImageFormat::Grid => {
            h.write(&mut out)?;
            for iv in 0..img.nv() {
                let line: Vec<String> = img.row(iv).iter().map(|c| c.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
        ImageFormat::Csv => {
            let mut rows = Vec::with_capacity(img.counts.len());
            for iv in 0..img.nv() {
                for ix in 0..img.nx() {
                    let (x, v) = img.coords(ix, iv);
                    rows.push(vec![x, v, img.get(ix, iv) as f64]);
                }
            }
            write_table(&mut out, &h, &["x_um", "v_um", "counts"], &rows)?;
        }
    }

    let mut summary = String::new();
    for (k, e) in cfg.image.emitters.iter().enumerate() {
        let p = e.position();
        let c = match grid.plane {
            nvspin::imaging::ScanPlane::Xy => (p.x, p.y),
            nvspin::imaging::ScanPlane::Xz => (p.x, p.z),
        };
        // Emitters imaged at t_phi sit at their rotated position.
        let c = if cfg.image.stationary || grid.plane == nvspin::imaging::ScanPlane::Xz {
            c
        } else {
            let a = cfg.geometry.omega() * (s.t_phi_us + 0.5 * s.t_pulse_us) * 1e-6;
            (c.0 * a.cos() - c.1 * a.sin(), c.0 * a.sin() + c.1 * a.cos())
        };
        match fit_spot_width(&img, c, &SpotFitOptions::default()) {
            Ok(w) => writeln!(
                summary,
                "emitter {k}: radial {:.3} um, azimuthal {:.3} um, width {:.3} um",
                w.radial_um,
                w.azimuthal_um,
                w.characteristic()
            ),
            Err(err) => writeln!(summary, "emitter {k}: {err}"),
        }
        .expect("write to string");
    }
    writeln!(summary, "duty cycle {duty:.4}").expect("write to string");
    Ok((out, summary))
}

pub fn simulate_readout(cfg: &ExperimentConfig, shots: u64) -> Result<Vec<u8>, CliError> {
    if shots == 0 {
        return Err(CliError::Validation("shots must be >= 1".into()));
    }
    let model = ReadoutModel::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bright = model.bright.sample(shots, &mut rng);
    let dark = model.dark.sample(shots, &mut rng);
    let repump = model.bright.final_populations.distance(&model.dark.final_populations);
    let rate = expected_count_rate(&cfg.beam, &cfg.geometry, cfg.readout.t_pulse_us)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let turn_on = optimal_turn_on(
        &cfg.geometry,
        &cfg.beam,
        &cfg.rates,
        cfg.readout.t_pulse_us,
        cfg.readout.contrast_window_us,
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;
    let h = header(cfg, "simulate-readout")
        .with("shots", shots)
        .with("dark_bright_ratio", model.dark_ratio)
        .with("repump_distance", repump)
        .with("expected_count_rate_cps", rate)
        .with("optimal_turn_on_us", turn_on.best_us)
        .with("bright_counts_per_shot", model.bright.total());
    let rows: Vec<Vec<f64>> = bright
        .bin_starts()
        .zip(bright.counts.iter().zip(&dark.counts))
        .map(|(t, (b, d))| vec![t, *b as f64, *d as f64])
        .collect();
    let mut out = Vec::new();
    write_table(&mut out, &h, &["t_us", "bright", "dark"], &rows)?;
    Ok(out)
}

pub fn compile_seq(cfg: &ExperimentConfig, file: &std::path::Path, t_phi_us: f64) -> Result<String, CliError> {
    let src = std::fs::read_to_string(file).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", file.display())))?;
    let prog = parse_sequence(&src).map_err(|e| CliError::Validation(format!("{}:\n{e}", file.display())))?;
    let cal = pipeline::calibration(cfg)?;
    let tl = compile_timeline(&prog, &cfg.geometry, &cal, t_phi_us).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut out = Vec::new();
    header(cfg, "compile-seq").with("t_phi_us", t_phi_us).write(&mut out)?;
    let mut s = String::from_utf8(out).expect("ascii header");
    s.push_str(&tl.to_records());
    Ok(s)
}

#[derive(Serialize)]
struct EchoReport<'a> {
    model: &'static str,
    #[serde(flatten)]
    fit: &'a FitResult,
}

#[derive(Serialize)]
struct RabiReport<'a> {
    model: &'static str,
    #[serde(flatten)]
    fit: &'a RabiFit,
}

fn records(rows: &[Vec<f64>]) -> Vec<Record> {
    rows.iter().map(|r| Record::new(r[0], r[1], r[2])).collect()
}

/// Fit report as TOML and the convergence flag.
pub fn fit(
    cfg: &ExperimentConfig,
    file: &std::path::Path,
    model: FitModel,
    initial: &[f64],
) -> Result<(String, bool), CliError> {
    let table = read_table(file)?;
    if table.columns.len() != 3 {
        return Err(CliError::Validation(format!(
            "expected 3 columns (x, value, sigma), found {}",
            table.columns.len()
        )));
    }
    let model = match model {
        FitModel::Auto => match table.columns[0].as_str() {
            "tau_us" => FitModel::Echo,
            "duration_us" => FitModel::Rabi,
            other => {
                return Err(CliError::Usage(format!(
                    "cannot infer model from column '{other}'; pass --model"
                )))
            }
        },
        m => m,
    };
    let bad = |e: nvspin::estimation::DatasetError| CliError::Validation(e.to_string());
    let fit_err = |e: nvspin::estimation::FitError| CliError::Runtime(e.to_string());
    match model {
        FitModel::Echo => {
            let data = EchoDataset::new(records(&table.rows)).map_err(bad)?;
            let init = match initial {
                [] => None,
                [b, p, c, base] => Some(EchoFitParams {
                    b_perp: *b,
                    phi0: *p,
                    contrast: *c,
                    baseline: *base,
                }),
                _ => return Err(CliError::Usage("--initial for echo takes 4 values".into())),
            };
            let r = fit_echo(&data, &pipeline::echo_model(cfg), init).map_err(fit_err)?;
            let text = toml::to_string(&EchoReport { model: "echo", fit: &r })
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok((text, r.converged))
        }
        FitModel::Rabi => {
            let data = RabiDataset::new(records(&table.rows)).map_err(bad)?;
            let init = match initial {
                [] => None,
                [f, c, base] => Some(nvspin::estimation::RabiGuess {
                    rabi_mhz: *f,
                    contrast: *c,
                    baseline: *base,
                }),
                _ => return Err(CliError::Usage("--initial for rabi takes 3 values".into())),
            };
            let r = fit_rabi(&data, init).map_err(fit_err)?;
            let text = toml::to_string(&RabiReport { model: "rabi", fit: &r })
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            Ok((text, r.converged))
        }
        FitModel::Auto => unreachable!("resolved above"),
    }
}

/// Populations left after one bright and one dark readout (repump check).
pub fn post_readout_populations(cfg: &ExperimentConfig) -> Result<(LevelPopulations, LevelPopulations), CliError> {
    let m = ReadoutModel::new(cfg)?;
    Ok((m.bright.final_populations, m.dark.final_populations))
}
