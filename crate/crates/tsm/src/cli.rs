//! Command-line interface: scenario configuration, curve/compare/fom
//! subcommands, and deterministic CSV/JSON rendering.
//!
//! Scenarios are described by a flat `key=value` vocabulary used uniformly by
//! presets, config files, and override flags. All spectral columns are
//! amplitude spectral densities (m/√Hz, or 1/√Hz with `--strain`), printed
//! with 17 significant digits so a parse → re-render cycle is bit-identical.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::budget::{
    figures_of_merit, offline_sensitivity, online_sensitivity, online_sensitivity_optimized,
    position_meter_sensitivity, sql_curve, CurveMode, FrequencyGrid, HomodyneAngle,
    SensitivityCurve,
};
use crate::error::{Error, Result};
use crate::plant::PlantParams;
use crate::teleport::{EprState, LossBudgetSpec};

/// Quantum-noise budget engine for a teleportation-based speed meter.
#[derive(Debug, Parser)]
#[command(
    name = "tsm",
    version,
    about = "Quantum-noise budget curves for a teleportation-based speed meter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one sensitivity curve (CSV or JSON).
    Curve(CurveArgs),
    /// Compare two scenario variants: per-frequency ASD ratio plus an
    /// interpolated 8 Hz summary row.
    Compare(CompareArgs),
    /// Broadband figures of merit (Γ, ρ², optimal angle) as JSON.
    Fom(FomArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioFlags {
    /// Scenario preset: reference-lossless | reference-lossy
    /// (aliases: lossless, lossy).
    #[arg(long)]
    pub preset: Option<String>,
    /// Flat key=value config file applied on top of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Readout variant: online | offline | pm | sql.
    #[arg(long)]
    pub mode: Option<String>,
    /// Homodyne angle in radians, or "optimal" (arccot √Γ).
    #[arg(long)]
    pub phi: Option<String>,
    /// Two-mode squeezing in dB, or "inf" for the ideal limit.
    #[arg(long)]
    pub squeeze_db: Option<String>,
    /// Injection loss ε_in ∈ [0, 1).
    #[arg(long)]
    pub eps_in: Option<f64>,
    /// Detection loss ε_out ∈ [0, 1).
    #[arg(long)]
    pub eps_out: Option<f64>,
    /// Round-trip arm loss, ppm.
    #[arg(long)]
    pub arm_loss_ppm: Option<f64>,
    /// Phase-sensitive readout amplifier gain, dB.
    #[arg(long)]
    pub amp_gain_db: Option<f64>,
    /// Grid start, Hz.
    #[arg(long)]
    pub fmin: Option<f64>,
    /// Grid end, Hz.
    #[arg(long)]
    pub fmax: Option<f64>,
    /// Grid size (logarithmic spacing).
    #[arg(long)]
    pub points: Option<usize>,
    /// Per-frequency optimal feedforward gains (online mode only).
    #[arg(long)]
    pub optimize_gains: bool,
    /// Emit strain-referred spectra (displacement divided by arm length).
    #[arg(long)]
    pub strain: bool,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub scenario: ScenarioFlags,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv (default) | json.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub scenario: ScenarioFlags,
    /// key=value overrides defining variant A (repeatable).
    #[arg(long = "a", value_name = "KEY=VALUE")]
    pub a_overrides: Vec<String>,
    /// key=value overrides defining variant B (repeatable).
    #[arg(long = "b", value_name = "KEY=VALUE")]
    pub b_overrides: Vec<String>,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format: csv (default) | json.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args)]
pub struct FomArgs {
    #[command(flatten)]
    pub scenario: ScenarioFlags,
    /// Output file (stdout if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flat scenario description. Every field can be set by preset, config file,
/// or CLI flag (later sources win); the `key=value` vocabulary is identical
/// across all three.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScenarioConfig {
    pub mass_kg: f64,
    pub arm_length_m: f64,
    pub circ_power_w: f64,
    pub wavelength_m: f64,
    /// Readout-mode bandwidth γ/2π, Hz.
    pub bandwidth_hz: f64,
    /// Mechanical resonance, Hz (0 = free mass).
    pub mech_freq_hz: f64,
    pub mode: CurveMode,
    /// Homodyne angle in radians; `None` = broadband optimum.
    pub phi_rad: Option<f64>,
    /// Two-mode squeezing in dB; `None` = infinite.
    pub squeeze_db: Option<f64>,
    pub eps_in: f64,
    pub eps_out: f64,
    pub arm_loss_ppm: f64,
    pub amp_gain_db: f64,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub points: usize,
    pub strain: bool,
    pub optimize_gains: bool,
}

impl Default for ScenarioConfig {
    /// The lossless reference: nominal 4 km / 200 kg / 3 MW / 2 μm plant at
    /// γ = 2π·115 Hz, infinite squeezing, no losses, online readout at the
    /// optimal angle over the default grid.
    fn default() -> Self {
        Self {
            mass_kg: 200.0,
            arm_length_m: 4000.0,
            circ_power_w: 3e6,
            wavelength_m: 2e-6,
            bandwidth_hz: 115.0,
            mech_freq_hz: 0.0,
            mode: CurveMode::Online,
            phi_rad: None,
            squeeze_db: None,
            eps_in: 0.0,
            eps_out: 0.0,
            arm_loss_ppm: 0.0,
            amp_gain_db: 0.0,
            fmin_hz: 1.0,
            fmax_hz: 5000.0,
            points: 400,
            strain: false,
            optimize_gains: false,
        }
    }
}

impl ScenarioConfig {
    /// Resolve a named preset.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "reference-lossless" | "lossless" => Ok(Self::default()),
            "reference-lossy" | "lossy" => Ok(Self {
                squeeze_db: Some(15.0),
                eps_in: 0.01,
                eps_out: 0.01,
                arm_loss_ppm: 30.0,
                ..Self::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected reference-lossless or reference-lossy)"
            ))),
        }
    }

    /// Apply one `key=value` setting.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, value: &str) -> Result<f64> {
            value.trim().parse::<f64>().map_err(|_| {
                Error::Config(format!("key `{key}` expects a number, got `{value}`"))
            })
        }
        let value = value.trim();
        match key.trim() {
            "mass_kg" => self.mass_kg = num(key, value)?,
            "arm_length_m" => self.arm_length_m = num(key, value)?,
            "circ_power_w" => self.circ_power_w = num(key, value)?,
            "wavelength_m" => self.wavelength_m = num(key, value)?,
            "bandwidth_hz" => self.bandwidth_hz = num(key, value)?,
            "mech_freq_hz" => self.mech_freq_hz = num(key, value)?,
            "mode" => self.mode = parse_mode(value)?,
            "phi" => {
                self.phi_rad = match value {
                    "optimal" => None,
                    v => Some(num(key, v)?),
                }
            }
            "squeeze_db" => {
                self.squeeze_db = match value {
                    "inf" | "infinite" => None,
                    v => Some(num(key, v)?),
                }
            }
            "eps_in" => self.eps_in = num(key, value)?,
            "eps_out" => self.eps_out = num(key, value)?,
            "arm_loss_ppm" => self.arm_loss_ppm = num(key, value)?,
            "amp_gain_db" => self.amp_gain_db = num(key, value)?,
            "fmin_hz" | "fmin" => self.fmin_hz = num(key, value)?,
            "fmax_hz" | "fmax" => self.fmax_hz = num(key, value)?,
            "points" => {
                self.points = value.parse::<usize>().map_err(|_| {
                    Error::Config(format!("key `points` expects an integer, got `{value}`"))
                })?
            }
            "strain" => self.strain = parse_bool(key, value)?,
            "optimize_gains" => self.optimize_gains = parse_bool(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Apply a flat config text: one `key = value` per line, `#` comments.
    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            self.apply_kv(key, value)?;
        }
        Ok(())
    }

    pub fn plant_params(&self) -> Result<PlantParams> {
        let mut p = PlantParams::from_power(
            self.mass_kg,
            self.arm_length_m,
            self.circ_power_w,
            self.wavelength_m,
            2.0 * std::f64::consts::PI * self.bandwidth_hz,
        )?;
        p.mech_freq_rad = 2.0 * std::f64::consts::PI * self.mech_freq_hz;
        p.validate()?;
        Ok(p)
    }

    pub fn loss_budget(&self) -> LossBudgetSpec {
        LossBudgetSpec {
            eps_in: self.eps_in,
            eps_out: self.eps_out,
            arm_loss_roundtrip_ppm: self.arm_loss_ppm,
            amplifier_gain_db: self.amp_gain_db,
        }
    }

    pub fn epr_state(&self) -> Result<EprState> {
        match self.squeeze_db {
            None => Ok(EprState::Infinite),
            Some(db) => EprState::from_db(db),
        }
    }

    pub fn homodyne(&self) -> HomodyneAngle {
        match self.phi_rad {
            None => HomodyneAngle::Optimal,
            Some(phi) => HomodyneAngle::Fixed(phi),
        }
    }

    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.fmin_hz, self.fmax_hz, self.points)
    }

    /// Compute the configured sensitivity curve. Reference modes (`pm`,
    /// `sql`) describe ideal meters: losses and squeezing keys are ignored.
    pub fn compute_curve(&self) -> Result<SensitivityCurve> {
        let params = self.plant_params()?;
        let grid = self.grid()?;
        match self.mode {
            CurveMode::Online => {
                let f = if self.optimize_gains {
                    online_sensitivity_optimized
                } else {
                    online_sensitivity
                };
                f(
                    &params,
                    self.loss_budget(),
                    self.epr_state()?,
                    self.homodyne(),
                    &grid,
                )
            }
            CurveMode::Offline => offline_sensitivity(
                &params,
                self.loss_budget(),
                self.epr_state()?,
                self.homodyne(),
                &grid,
            ),
            CurveMode::PositionMeter => position_meter_sensitivity(&params, &grid),
            CurveMode::Sql => sql_curve(&params, &grid),
        }
    }
}

fn parse_mode(value: &str) -> Result<CurveMode> {
    match value {
        "online" => Ok(CurveMode::Online),
        "offline" => Ok(CurveMode::Offline),
        "pm" | "position_meter" => Ok(CurveMode::PositionMeter),
        "sql" => Ok(CurveMode::Sql),
        other => Err(Error::Config(format!(
            "unknown mode `{other}` (expected online, offline, pm, or sql)"
        ))),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "key `{key}` expects a boolean, got `{other}`"
        ))),
    }
}

/// Build the effective scenario from preset → config file → flags.
pub fn resolve_scenario(flags: &ScenarioFlags) -> Result<ScenarioConfig> {
    let mut cfg = match &flags.preset {
        Some(name) => ScenarioConfig::preset(name)?,
        None => ScenarioConfig::default(),
    };
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_config_str(&text)?;
    }
    if let Some(v) = &flags.mode {
        cfg.apply_kv("mode", v)?;
    }
    if let Some(v) = &flags.phi {
        cfg.apply_kv("phi", v)?;
    }
    if let Some(v) = &flags.squeeze_db {
        cfg.apply_kv("squeeze_db", v)?;
    }
    if let Some(v) = flags.eps_in {
        cfg.eps_in = v;
    }
    if let Some(v) = flags.eps_out {
        cfg.eps_out = v;
    }
    if let Some(v) = flags.arm_loss_ppm {
        cfg.arm_loss_ppm = v;
    }
    if let Some(v) = flags.amp_gain_db {
        cfg.amp_gain_db = v;
    }
    if let Some(v) = flags.fmin {
        cfg.fmin_hz = v;
    }
    if let Some(v) = flags.fmax {
        cfg.fmax_hz = v;
    }
    if let Some(v) = flags.points {
        cfg.points = v;
    }
    if flags.optimize_gains {
        cfg.optimize_gains = true;
    }
    if flags.strain {
        cfg.strain = true;
    }
    Ok(cfg)
}

/// One spectral value, 17 significant digits (lossless f64 round-trip).
pub fn format_field(v: f64) -> String {
    format!("{v:.16e}")
}

fn column_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Render a curve as CSV: `freq_hz, asd_total, asd_<label>…, sql_asd`,
/// amplitude spectral densities (per √Hz), strain-referred when configured.
pub fn render_curve_csv(cfg: &ScenarioConfig) -> Result<String> {
    let curve = cfg.compute_curve()?;
    let sql = sql_curve(&cfg.plant_params()?, &cfg.grid()?)?;
    let scale = if cfg.strain { 1.0 / cfg.arm_length_m } else { 1.0 };
    let mut out = String::new();
    out.push_str("freq_hz,asd_total");
    for (label, _) in &curve.per_contribution {
        out.push_str(",asd_");
        out.push_str(&column_safe(label));
    }
    out.push_str(",sql_asd\n");
    for i in 0..curve.freqs_hz.len() {
        out.push_str(&format_field(curve.freqs_hz[i]));
        out.push(',');
        out.push_str(&format_field(curve.total_psd_m2_per_hz[i].sqrt() * scale));
        for (_, vals) in &curve.per_contribution {
            out.push(',');
            out.push_str(&format_field(vals[i].sqrt() * scale));
        }
        out.push(',');
        out.push_str(&format_field(sql.total_psd_m2_per_hz[i].sqrt() * scale));
        out.push('\n');
    }
    Ok(out)
}

#[derive(serde::Serialize)]
struct CurveJson {
    config: ScenarioConfig,
    mode: CurveMode,
    homodyne_phi_rad: f64,
    strain: bool,
    freqs_hz: Vec<f64>,
    asd_total: Vec<f64>,
    asd_contributions: Vec<(String, Vec<f64>)>,
    sql_asd: Vec<f64>,
}

/// Render a curve as JSON (same quantities as the CSV, plus the resolved
/// scenario for provenance).
pub fn render_curve_json(cfg: &ScenarioConfig) -> Result<String> {
    let curve = cfg.compute_curve()?;
    let sql = sql_curve(&cfg.plant_params()?, &cfg.grid()?)?;
    let scale = if cfg.strain { 1.0 / cfg.arm_length_m } else { 1.0 };
    let doc = CurveJson {
        config: cfg.clone(),
        mode: curve.mode,
        homodyne_phi_rad: curve.homodyne_phi,
        strain: cfg.strain,
        freqs_hz: curve.freqs_hz.clone(),
        asd_total: curve
            .total_psd_m2_per_hz
            .iter()
            .map(|s| s.sqrt() * scale)
            .collect(),
        asd_contributions: curve
            .per_contribution
            .iter()
            .map(|(l, v)| (l.clone(), v.iter().map(|s| s.sqrt() * scale).collect()))
            .collect(),
        sql_asd: sql
            .total_psd_m2_per_hz
            .iter()
            .map(|s| s.sqrt() * scale)
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&doc).map(|mut s| {
        s.push('\n');
        s
    })?)
}

/// Log-log linear interpolation (clamped to the grid ends).
fn log_interp(freqs: &[f64], vals: &[f64], f0: f64) -> f64 {
    if f0 <= freqs[0] {
        return vals[0];
    }
    if f0 >= freqs[freqs.len() - 1] {
        return vals[vals.len() - 1];
    }
    let mut hi = 1;
    while freqs[hi] < f0 {
        hi += 1;
    }
    let (fa, fb) = (freqs[hi - 1], freqs[hi]);
    let (va, vb) = (vals[hi - 1], vals[hi]);
    let t = (f0.ln() - fa.ln()) / (fb.ln() - fa.ln());
    (va.ln() + t * (vb.ln() - va.ln())).exp()
}

/// The two variants of a comparison, resolved from shared flags + overrides.
pub fn resolve_compare(
    flags: &ScenarioFlags,
    a_overrides: &[String],
    b_overrides: &[String],
) -> Result<(ScenarioConfig, ScenarioConfig)> {
    let base = resolve_scenario(flags)?;
    let apply = |overrides: &[String], which: &str| -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        for kv in overrides {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::Config(format!("--{which} expects key=value, got `{kv}`"))
            })?;
            cfg.apply_kv(key, value)?;
        }
        Ok(cfg)
    };
    let a = apply(a_overrides, "a")?;
    let b = apply(b_overrides, "b")?;
    if (a.fmin_hz, a.fmax_hz, a.points) != (b.fmin_hz, b.fmax_hz, b.points) {
        return Err(Error::Config(
            "compare variants must share the frequency grid".into(),
        ));
    }
    Ok((a, b))
}

/// Render a comparison as CSV: `freq_hz, asd_a, asd_b, ratio_a_over_b`, one
/// row per grid point, then a log-interpolated summary row at 8 Hz.
pub fn render_compare_csv(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<String> {
    let ca = a.compute_curve()?;
    let cb = b.compute_curve()?;
    let sa = if a.strain { 1.0 / a.arm_length_m } else { 1.0 };
    let sb = if b.strain { 1.0 / b.arm_length_m } else { 1.0 };
    let asd_a: Vec<f64> = ca.total_psd_m2_per_hz.iter().map(|s| s.sqrt() * sa).collect();
    let asd_b: Vec<f64> = cb.total_psd_m2_per_hz.iter().map(|s| s.sqrt() * sb).collect();
    let mut out = String::from("freq_hz,asd_a,asd_b,ratio_a_over_b\n");
    for i in 0..ca.freqs_hz.len() {
        out.push_str(&format_field(ca.freqs_hz[i]));
        out.push(',');
        out.push_str(&format_field(asd_a[i]));
        out.push(',');
        out.push_str(&format_field(asd_b[i]));
        out.push(',');
        out.push_str(&format_field(asd_a[i] / asd_b[i]));
        out.push('\n');
    }
    let a8 = log_interp(&ca.freqs_hz, &asd_a, 8.0);
    let b8 = log_interp(&cb.freqs_hz, &asd_b, 8.0);
    out.push_str(&format_field(8.0));
    out.push(',');
    out.push_str(&format_field(a8));
    out.push(',');
    out.push_str(&format_field(b8));
    out.push(',');
    out.push_str(&format_field(a8 / b8));
    out.push('\n');
    Ok(out)
}

#[derive(serde::Serialize)]
struct CompareJson {
    a: ScenarioConfig,
    b: ScenarioConfig,
    freqs_hz: Vec<f64>,
    asd_a: Vec<f64>,
    asd_b: Vec<f64>,
    ratio_a_over_b: Vec<f64>,
    summary_8hz: (f64, f64, f64),
}

pub fn render_compare_json(a: &ScenarioConfig, b: &ScenarioConfig) -> Result<String> {
    let ca = a.compute_curve()?;
    let cb = b.compute_curve()?;
    let sa = if a.strain { 1.0 / a.arm_length_m } else { 1.0 };
    let sb = if b.strain { 1.0 / b.arm_length_m } else { 1.0 };
    let asd_a: Vec<f64> = ca.total_psd_m2_per_hz.iter().map(|s| s.sqrt() * sa).collect();
    let asd_b: Vec<f64> = cb.total_psd_m2_per_hz.iter().map(|s| s.sqrt() * sb).collect();
    let ratio: Vec<f64> = asd_a.iter().zip(&asd_b).map(|(x, y)| x / y).collect();
    let a8 = log_interp(&ca.freqs_hz, &asd_a, 8.0);
    let b8 = log_interp(&cb.freqs_hz, &asd_b, 8.0);
    let doc = CompareJson {
        a: a.clone(),
        b: b.clone(),
        freqs_hz: ca.freqs_hz.clone(),
        asd_a,
        asd_b,
        ratio_a_over_b: ratio,
        summary_8hz: (a8, b8, a8 / b8),
    };
    Ok(serde_json::to_string_pretty(&doc).map(|mut s| {
        s.push('\n');
        s
    })?)
}

/// Render the figures of merit as JSON:
/// `{gamma, rho_squared, phi_opt_rad, beats_sql}`.
pub fn render_fom_json(cfg: &ScenarioConfig) -> Result<String> {
    let fom = figures_of_merit(&cfg.plant_params()?);
    Ok(serde_json::to_string_pretty(&fom).map(|mut s| {
        s.push('\n');
        s
    })?)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn pick_format(format: &Option<String>) -> Result<&'static str> {
    match format.as_deref() {
        None | Some("csv") => Ok("csv"),
        Some("json") => Ok("json"),
        Some(other) => Err(Error::Config(format!(
            "unknown format `{other}` (expected csv or json)"
        ))),
    }
}

pub fn run_curve(args: &CurveArgs) -> Result<()> {
    let cfg = resolve_scenario(&args.scenario)?;
    let text = match pick_format(&args.format)? {
        "json" => render_curve_json(&cfg)?,
        _ => render_curve_csv(&cfg)?,
    };
    emit(&args.out, &text)
}

pub fn run_compare(args: &CompareArgs) -> Result<()> {
    let (a, b) = resolve_compare(&args.scenario, &args.a_overrides, &args.b_overrides)?;
    let text = match pick_format(&args.format)? {
        "json" => render_compare_json(&a, &b)?,
        _ => render_compare_csv(&a, &b)?,
    };
    emit(&args.out, &text)
}

pub fn run_figures_of_merit(args: &FomArgs) -> Result<()> {
    let cfg = resolve_scenario(&args.scenario)?;
    let text = render_fom_json(&cfg)?;
    emit(&args.out, &text)
}

/// Entry point used by the binary.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Curve(args) => run_curve(args),
        Command::Compare(args) => run_compare(args),
        Command::Fom(args) => run_figures_of_merit(args),
    }
}
