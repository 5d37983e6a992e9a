//! Scenario-level sensitivity curves and figures of merit.
//!
//! Everything here is displacement-referred: a curve point is the
//! vacuum-noise power of the conditioned/filtered readout divided by the
//! squared signal response, in m²/Hz, decomposed per input family. The SQL
//! and the conventional position meter are provided as references, plus the
//! standalone broadband figures (Γ, ρ², optimal homodyne angle, and the
//! wideband enhancement ratio).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::plant::{
    coupling_factors, gamma_figure, solve_lossy_io, PlantParams,
};
use crate::qalgebra::{homodyne_signal_power, HomodyneVector, NoiseBudget, C64};
use crate::teleport::{
    apply_io_losses, apply_readout_amplifier, offline_conditioned, optimize_gains, EprState,
    LossBudgetSpec, LossPort, WiringSpec,
};
use crate::tol;

/// Logarithmic frequency grid, Hz.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrequencyGrid {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub points: usize,
}

impl Default for FrequencyGrid {
    /// 400 logarithmic points spanning 1 Hz – 5 kHz.
    fn default() -> Self {
        Self {
            fmin_hz: 1.0,
            fmax_hz: 5000.0,
            points: 400,
        }
    }
}

impl FrequencyGrid {
    pub fn new(fmin_hz: f64, fmax_hz: f64, points: usize) -> Result<Self> {
        let grid = Self {
            fmin_hz,
            fmax_hz,
            points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fmin_hz.is_finite() && self.fmin_hz > 0.0) {
            return Err(Error::InvalidFrequency(self.fmin_hz));
        }
        if !(self.fmax_hz.is_finite() && self.fmax_hz > self.fmin_hz) {
            return Err(Error::InvalidFrequency(self.fmax_hz));
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter(format!(
                "frequency grid needs at least 2 points, got {}",
                self.points
            )));
        }
        Ok(())
    }

    /// The grid frequencies (geometric progression, endpoints included).
    pub fn frequencies_hz(&self) -> Vec<f64> {
        let n = self.points;
        let lmin = self.fmin_hz.ln();
        let lmax = self.fmax_hz.ln();
        (0..n)
            .map(|i| (lmin + (lmax - lmin) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Which scenario a curve describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Online,
    Offline,
    PositionMeter,
    Sql,
}

impl CurveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveMode::Online => "online",
            CurveMode::Offline => "offline",
            CurveMode::PositionMeter => "position_meter",
            CurveMode::Sql => "sql",
        }
    }
}

/// Homodyne angle selection: a fixed angle in radians, or the broadband
/// optimum arccot √Γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HomodyneAngle {
    Optimal,
    Fixed(f64),
}

impl HomodyneAngle {
    /// Resolve to radians. Angles with no displacement signal (sin φ = 0)
    /// are rejected: the displacement-referred sensitivity diverges there.
    pub fn resolve(&self, params: &PlantParams) -> Result<f64> {
        let phi = match self {
            HomodyneAngle::Optimal => optimal_homodyne_angle(params),
            HomodyneAngle::Fixed(phi) => *phi,
        };
        if !phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "homodyne angle must be finite, got {phi}"
            )));
        }
        if phi.sin().abs() < 1e-12 {
            return Err(Error::InvalidParameter(
                "homodyne angle has no displacement signal (sin φ = 0)".into(),
            ));
        }
        Ok(phi)
    }
}

/// A displacement-referred sensitivity curve with its per-input-family
/// decomposition. `total_psd_m2_per_hz[i]` equals the sum of every
/// contribution at `freqs_hz[i]` (exactly, by construction).
#[derive(Debug, Clone, serde::Serialize)]
pub struct SensitivityCurve {
    pub freqs_hz: Vec<f64>,
    pub total_psd_m2_per_hz: Vec<f64>,
    pub per_contribution: Vec<(String, Vec<f64>)>,
    pub mode: CurveMode,
    pub homodyne_phi: f64,
}

impl SensitivityCurve {
    /// Amplitude spectral density √S_x, m/√Hz.
    pub fn asd(&self) -> Vec<f64> {
        self.total_psd_m2_per_hz.iter().map(|s| s.sqrt()).collect()
    }

    /// Value at the grid point nearest to `f_hz`.
    pub fn nearest(&self, f_hz: f64) -> (f64, f64) {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, f) in self.freqs_hz.iter().enumerate() {
            let d = (f.ln() - f_hz.ln()).abs();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        (self.freqs_hz[best], self.total_psd_m2_per_hz[best])
    }
}

/// Transpose per-frequency (total, labeled parts) rows into a curve,
/// enforcing a stable label set across the grid.
fn assemble_curve(
    freqs_hz: Vec<f64>,
    rows: Vec<(f64, Vec<(String, f64)>)>,
    mode: CurveMode,
    homodyne_phi: f64,
) -> Result<SensitivityCurve> {
    let labels: Vec<String> = rows
        .first()
        .map(|(_, parts)| parts.iter().map(|(l, _)| l.clone()).collect())
        .unwrap_or_default();
    let mut per: Vec<(String, Vec<f64>)> = labels
        .iter()
        .map(|l| (l.clone(), Vec::with_capacity(rows.len())))
        .collect();
    let mut totals = Vec::with_capacity(rows.len());
    for (i, (_, parts)) in rows.iter().enumerate() {
        if parts.len() != labels.len()
            || parts.iter().zip(&labels).any(|((l, _), want)| l != want)
        {
            return Err(Error::InvalidParameter(format!(
                "contribution labels changed across the grid at point {i}"
            )));
        }
        let mut total = 0.0;
        for (k, (_, v)) in parts.iter().enumerate() {
            per[k].1.push(*v);
            total += *v;
        }
        totals.push(total);
    }
    Ok(SensitivityCurve {
        freqs_hz,
        total_psd_m2_per_hz: totals,
        per_contribution: per,
        mode,
        homodyne_phi,
    })
}

/// Per-label measured-quadrature noise powers of a budget (same projection
/// as `homodyne_noise_power`, kept separate per contribution).
fn homodyne_powers_by_label(
    budget: &NoiseBudget,
    h: &HomodyneVector,
) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::with_capacity(budget.contributions.len());
    for cn in &budget.contributions {
        let row = h.project(&cn.transfer)?;
        let s = cn.input_psd.matrix();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..row.len() {
            for j in 0..row.len() {
                acc += row[i] * s[(i, j)] * row[j].conj();
            }
        }
        if acc.re < tol::PSD_MIN_EIG {
            return Err(Error::PsdViolation {
                context: "homodyne_powers_by_label",
                detail: format!("contribution `{}` projected to {:.3e}", cn.label, acc.re),
            });
        }
        out.push((cn.label.clone(), acc.re.max(0.0)));
    }
    Ok(out)
}

/// One online point: solve, amplify, lose, project, displacement-refer.
fn online_point(
    params: &PlantParams,
    losses: LossBudgetSpec,
    epr: EprState,
    phi: f64,
    omega_rad: f64,
    optimize: bool,
) -> Result<(f64, Vec<(String, f64)>)> {
    let h = HomodyneVector::new(phi);
    let mut wiring = WiringSpec::online(epr, losses);
    if optimize && !epr.is_infinite() {
        let (g1, g2) = optimize_gains(params, omega_rad, epr, losses, &h)?;
        wiring = wiring.with_gains(g1, g2);
    }
    let budget = solve_lossy_io(params, omega_rad, &wiring)?;
    let budget = apply_readout_amplifier(&budget, &h, losses.amplifier_gain_db)?;
    let budget = apply_io_losses(&budget, &losses, LossPort::Output)?;
    let signal = homodyne_signal_power(&budget, &h);
    if signal == 0.0 {
        return Err(Error::SingularSystem {
            context: "online sensitivity (no displacement signal)",
        });
    }
    let parts = homodyne_powers_by_label(&budget, &h)?
        .into_iter()
        .map(|(l, p)| (l, p / signal))
        .collect::<Vec<_>>();
    let total = parts.iter().map(|(_, v)| *v).sum();
    Ok((total, parts))
}

/// Real-time feedforward sensitivity over a grid, with fixed default gains
/// (√2, √2) at finite squeezing and the loss-compensated matched gains in
/// the infinite limit.
pub fn online_sensitivity(
    params: &PlantParams,
    losses: LossBudgetSpec,
    epr: EprState,
    phi: HomodyneAngle,
    grid: &FrequencyGrid,
) -> Result<SensitivityCurve> {
    online_curve(params, losses, epr, phi, grid, false)
}

/// Real-time feedforward sensitivity with per-frequency optimal gains
/// (matches the offline Wiener-conditioned curve).
pub fn online_sensitivity_optimized(
    params: &PlantParams,
    losses: LossBudgetSpec,
    epr: EprState,
    phi: HomodyneAngle,
    grid: &FrequencyGrid,
) -> Result<SensitivityCurve> {
    online_curve(params, losses, epr, phi, grid, true)
}

fn online_curve(
    params: &PlantParams,
    losses: LossBudgetSpec,
    epr: EprState,
    phi: HomodyneAngle,
    grid: &FrequencyGrid,
    optimize: bool,
) -> Result<SensitivityCurve> {
    grid.validate()?;
    losses.validate()?;
    let folded = losses.fold_into(params);
    let phi = phi.resolve(&folded)?;
    let freqs = grid.frequencies_hz();
    let rows: Vec<(f64, Vec<(String, f64)>)> = freqs
        .par_iter()
        .map(|f| {
            online_point(
                &folded,
                losses,
                epr,
                phi,
                2.0 * std::f64::consts::PI * f,
                optimize,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_curve(freqs, rows, CurveMode::Online, phi)
}

/// Offline (stored-record, Wiener-conditioned) sensitivity over a grid.
pub fn offline_sensitivity(
    params: &PlantParams,
    losses: LossBudgetSpec,
    epr: EprState,
    phi: HomodyneAngle,
    grid: &FrequencyGrid,
) -> Result<SensitivityCurve> {
    grid.validate()?;
    losses.validate()?;
    let folded = losses.fold_into(params);
    let phi = phi.resolve(&folded)?;
    let freqs = grid.frequencies_hz();
    let wiring = WiringSpec::offline(epr, losses);
    let h = HomodyneVector::new(phi);
    let rows: Vec<(f64, Vec<(String, f64)>)> = freqs
        .par_iter()
        .map(|f| {
            let out = offline_conditioned(
                &folded,
                2.0 * std::f64::consts::PI * f,
                &wiring,
                &h,
                None,
            )?;
            let denom = out.signal.norm_sqr();
            let parts: Vec<(String, f64)> = out
                .per_group
                .iter()
                .map(|(l, p)| (l.clone(), p / denom))
                .collect();
            let total = parts.iter().map(|(_, v)| *v).sum();
            Ok((total, parts))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_curve(freqs, rows, CurveMode::Offline, phi)
}

/// Ideal conventional position meter at phase readout:
/// S_x = (x²_SQL/2)·(1/K_pm + K_pm), split into shot noise and back-action.
pub fn position_meter_sensitivity(
    params: &PlantParams,
    grid: &FrequencyGrid,
) -> Result<SensitivityCurve> {
    grid.validate()?;
    params.validate()?;
    let freqs = grid.frequencies_hz();
    let rows: Vec<(f64, Vec<(String, f64)>)> = freqs
        .iter()
        .map(|f| {
            let cf = coupling_factors(params, 2.0 * std::f64::consts::PI * f)?;
            let half = cf.x_sql_sq() / 2.0;
            let shot = half / cf.k_pm;
            let back = half * cf.k_pm;
            Ok((
                shot + back,
                vec![
                    ("shot_noise".to_string(), shot),
                    ("back_action".to_string(), back),
                ],
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_curve(
        freqs,
        rows,
        CurveMode::PositionMeter,
        std::f64::consts::FRAC_PI_2,
    )
}

/// The standard quantum limit S_x = x²_SQL = 2ħ/(mΩ²) over a grid.
pub fn sql_curve(params: &PlantParams, grid: &FrequencyGrid) -> Result<SensitivityCurve> {
    grid.validate()?;
    params.validate()?;
    let freqs = grid.frequencies_hz();
    let rows: Vec<(f64, Vec<(String, f64)>)> = freqs
        .iter()
        .map(|f| {
            let cf = coupling_factors(params, 2.0 * std::f64::consts::PI * f)?;
            Ok((cf.x_sql_sq(), vec![("sql".to_string(), cf.x_sql_sq())]))
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_curve(freqs, rows, CurveMode::Sql, std::f64::consts::FRAC_PI_2)
}

/// Broadband-optimal homodyne angle arccot √Γ (π/2 when Γ = 0).
pub fn optimal_homodyne_angle(params: &PlantParams) -> f64 {
    let gf = gamma_figure(params).gamma_val;
    (1.0 / gf.sqrt()).atan()
}

/// Peak quantum advantage ρ² = 2√Γ over the SQL, and whether the SQL is
/// beaten at all (Γ > 1/4): min_Ω S_x/x²_SQL = 1/ρ² at the optimal angle.
pub fn rho_squared(params: &PlantParams) -> (f64, bool) {
    let gf = gamma_figure(params).gamma_val;
    (2.0 * gf.sqrt(), gf > 0.25)
}

/// Headline broadband figures of one plant configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FiguresOfMerit {
    pub gamma: f64,
    pub rho_squared: f64,
    pub phi_opt_rad: f64,
    pub beats_sql: bool,
}

pub fn figures_of_merit(params: &PlantParams) -> FiguresOfMerit {
    let (rho2, beats) = rho_squared(params);
    FiguresOfMerit {
        gamma: gamma_figure(params).gamma_val,
        rho_squared: rho2,
        phi_opt_rad: optimal_homodyne_angle(params),
        beats_sql: beats,
    }
}

/// Wideband sensitivity ratio of the conventional position meter to the
/// feedforward speed meter at matched parameters, as a standalone function
/// of ω = Ω/γ and Γ:
///
/// ratio(ω, Γ) = 2ω²·[1 + ω²(2+ω²)·(2 + (1+Γ)ω²(2+ω²))]
///               / ((1+ω²)·(Γ + 4ω⁴(1+ω²)²)).
///
/// Approaches (1+Γ)/2 as ω → ∞; at low frequency it falls off as 2ω²/Γ,
/// which is the speed meter's back-action advantage: the smaller the value,
/// the larger the factor by which the velocity readout outperforms the
/// position readout there, and raising Γ (more circulating power, lighter
/// mirrors) deepens it.
pub fn enhancement_ratio(omega_norm: f64, gamma_val: f64) -> f64 {
    let w2 = omega_norm * omega_norm;
    let num = 2.0 * w2 * (1.0 + w2 * (2.0 + w2) * (2.0 + (1.0 + gamma_val) * w2 * (2.0 + w2)));
    let den = (1.0 + w2) * (gamma_val + 4.0 * w2 * w2 * (1.0 + w2) * (1.0 + w2));
    num / den
}
