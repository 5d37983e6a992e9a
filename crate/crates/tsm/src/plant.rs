//! Physical plant: parameters, coupling factors, closed-form lossless
//! transfer blocks, and the generic per-frequency solver for the lossy
//! Langevin equations.
//!
//! The interferometer is modeled in the two-photon formalism at sideband
//! frequency Ω. Two optical modes matter: the readout mode A (driven by the
//! external vacuum v_in) and the meter mode B (driven by whatever the wiring
//! sends in — an EPR half with feedforward, a stored-record EPR half, or
//! plain vacuum for the position-meter reference). Both couple to one
//! mechanical degree of freedom (free mass by default).
//!
//! Closed-form lossless blocks act as independent oracles for the numeric
//! solver: `solve_lossy_io` assembles the full 6-unknown linear system
//! (A₁, A₂, B₁, B₂, x, p) per frequency, with loss vacua and feedforward
//! folded in, and must reproduce the closed forms when every loss is zero.

use nalgebra::{DVector, RowDVector, Vector2};

use crate::error::{Error, Result};
use crate::qalgebra::{c, check_finite, cr, ComplexMat, NoiseBudget, SpectralDensityMat, C64};
use crate::teleport::{epr_psd, EprState, WiringMode, WiringSpec};

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 2.99792458e8;

/// Physical parameters of the optomechanical plant.
///
/// `coupling_rad` (ω_a) may be set directly or derived from circulating power
/// via [`derive_coupling`]; `arm_damping_rad` (γ₂) is the optical damping
/// equivalent of round-trip arm loss, `γ₂ = 𝓛·c/(4L)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlantParams {
    /// Mirror (test mass) mass, kg.
    pub mass_kg: f64,
    /// Readout-mode bandwidth γ, rad/s.
    pub bandwidth_rad: f64,
    /// Optomechanical coupling ω_a, rad/s.
    pub coupling_rad: f64,
    /// Arm length L, m.
    pub arm_length_m: f64,
    /// Circulating power P_c, W.
    pub circ_power_w: f64,
    /// Pump wavelength λ_p, m.
    pub wavelength_m: f64,
    /// Mechanical resonance ω_m, rad/s (0 = free mass).
    pub mech_freq_rad: f64,
    /// Additional optical damping γ₂ from arm loss, rad/s.
    pub arm_damping_rad: f64,
    /// Reduced Planck constant, J·s (overridable for unit tests only).
    pub hbar: f64,
}

impl PlantParams {
    /// Build parameters with ω_a derived from circulating power.
    pub fn from_power(
        mass_kg: f64,
        arm_length_m: f64,
        circ_power_w: f64,
        wavelength_m: f64,
        bandwidth_rad: f64,
    ) -> Result<Self> {
        let mut p = Self {
            mass_kg,
            bandwidth_rad,
            coupling_rad: 0.0,
            arm_length_m,
            circ_power_w,
            wavelength_m,
            mech_freq_rad: 0.0,
            arm_damping_rad: 0.0,
            hbar: HBAR,
        };
        p.coupling_rad = derive_coupling(&p)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("mass_kg", self.mass_kg),
            ("bandwidth_rad", self.bandwidth_rad),
            ("arm_length_m", self.arm_length_m),
            ("wavelength_m", self.wavelength_m),
            ("hbar", self.hbar),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let nonneg = [
            ("coupling_rad", self.coupling_rad),
            ("circ_power_w", self.circ_power_w),
            ("mech_freq_rad", self.mech_freq_rad),
            ("arm_damping_rad", self.arm_damping_rad),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Carrier angular frequency ω₀ = 2πc/λ.
    pub fn carrier_rad(&self) -> f64 {
        2.0 * std::f64::consts::PI * C_LIGHT / self.wavelength_m
    }

    /// Normalized power rate J = 4·P_c·ω₀/(m·L·c), s⁻³.
    pub fn pump_rate_j(&self) -> f64 {
        4.0 * self.circ_power_w * self.carrier_rad() / (self.mass_kg * self.arm_length_m * C_LIGHT)
    }

    /// Copy with a different arm damping (used when folding a loss budget in).
    pub fn with_arm_damping(&self, arm_damping_rad: f64) -> Self {
        Self {
            arm_damping_rad,
            ..self.clone()
        }
    }
}

/// Derive the optomechanical coupling ω_a = √(m·J/2ħ) from circulating power.
///
/// P_c = 0 is allowed and yields ω_a = 0 (no light, no coupling).
pub fn derive_coupling(params: &PlantParams) -> Result<f64> {
    for (name, v) in [
        ("mass_kg", params.mass_kg),
        ("arm_length_m", params.arm_length_m),
        ("wavelength_m", params.wavelength_m),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "derive_coupling requires positive {name}, got {v}"
            )));
        }
    }
    if !(params.circ_power_w.is_finite() && params.circ_power_w >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "derive_coupling requires non-negative circ_power_w, got {}",
            params.circ_power_w
        )));
    }
    Ok((params.mass_kg * params.pump_rate_j() / (2.0 * params.hbar)).sqrt())
}

/// Frequency-dependent coupling factors and the SQL at one sideband frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingFactors {
    /// Sideband frequency Ω, rad/s.
    pub omega_rad: f64,
    /// Speed-meter coupling K_sm = 16ħω_a²γ / (m(γ²+Ω²)²).
    pub k_sm: f64,
    /// Position-meter coupling K_pm = 4γħω_a² / (mΩ²(γ²+Ω²)).
    pub k_pm: f64,
    /// Teleported-residual kernel K_z = ((γ+iΩ)/(2iΩ))·K_sm.
    pub k_z: C64,
    /// Common quadrature phase rotation β = arctan(Ω/γ).
    pub beta: f64,
    /// Standard quantum limit amplitude √(2ħ/(mΩ²)), m/√Hz.
    pub x_sql_m: f64,
}

impl CouplingFactors {
    /// x²_SQL in m²/Hz.
    pub fn x_sql_sq(&self) -> f64 {
        self.x_sql_m * self.x_sql_m
    }

    /// Unit-modulus phase factor e^{2iβ} = (γ+iΩ)/(γ−iΩ), computed exactly.
    pub fn e2ib(&self, params: &PlantParams) -> C64 {
        let dplus = c(params.bandwidth_rad, self.omega_rad);
        dplus / dplus.conj()
    }
}

/// Evaluate the coupling factors at Ω > 0.
///
/// Ω = 0 is rejected with a DC-singular error because k_pm, k_z, and x_sql
/// diverge there; the finite DC limit of the speed-meter coupling is exposed
/// separately as [`k_sm_dc`].
pub fn coupling_factors(params: &PlantParams, omega_rad: f64) -> Result<CouplingFactors> {
    if omega_rad == 0.0 {
        return Err(Error::DcSingular {
            quantity: "coupling_factors (k_pm, k_z, x_sql)",
        });
    }
    if !(omega_rad.is_finite() && omega_rad > 0.0) {
        return Err(Error::InvalidFrequency(omega_rad));
    }
    params.validate()?;
    let g = params.bandwidth_rad;
    let wa2 = params.coupling_rad * params.coupling_rad;
    let denom = g * g + omega_rad * omega_rad;
    let k_sm = 16.0 * params.hbar * wa2 * g / (params.mass_kg * denom * denom);
    let k_pm = 4.0 * g * params.hbar * wa2 / (params.mass_kg * omega_rad * omega_rad * denom);
    let k_z = c(g, omega_rad) / c(0.0, 2.0 * omega_rad) * cr(k_sm);
    let beta = omega_rad.atan2(g);
    let x_sql_m = (2.0 * params.hbar / (params.mass_kg * omega_rad * omega_rad)).sqrt();
    Ok(CouplingFactors {
        omega_rad,
        k_sm,
        k_pm,
        k_z,
        beta,
        x_sql_m,
    })
}

/// DC limit of the speed-meter coupling, K_sm(0) = 16ħω_a²/(mγ³) = √Γ.
pub fn k_sm_dc(params: &PlantParams) -> f64 {
    16.0 * params.hbar * params.coupling_rad * params.coupling_rad
        / (params.mass_kg * params.bandwidth_rad.powi(3))
}

/// The dimensionless sensitivity figure Γ and a normalized frequency ω = Ω/γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFigure {
    /// Γ = 256 ħ²ω_a⁴ / (m²γ⁶) = 64 J²/γ⁶.
    pub gamma_val: f64,
    /// ω = Ω/γ (0 when the figure is evaluated as a DC reference).
    pub omega_norm: f64,
}

/// Evaluate Γ as a DC figure of merit (omega_norm = 0).
pub fn gamma_figure(params: &PlantParams) -> GammaFigure {
    let wa4 = params.coupling_rad.powi(4);
    GammaFigure {
        gamma_val: 256.0 * params.hbar * params.hbar * wa4
            / (params.mass_kg * params.mass_kg * params.bandwidth_rad.powi(6)),
        omega_norm: 0.0,
    }
}

/// Evaluate Γ together with the normalized frequency at Ω.
pub fn gamma_figure_at(params: &PlantParams, omega_rad: f64) -> GammaFigure {
    GammaFigure {
        omega_norm: omega_rad / params.bandwidth_rad,
        ..gamma_figure(params)
    }
}

fn mat2(a: C64, b: C64, cc: C64, d: C64) -> ComplexMat {
    ComplexMat::from_row_slice(2, 2, &[a, b, cc, d])
}

/// Closed-form lossless blocks for the feedforward (online) readout:
/// output = T_v·v_in + √2·e^{−r}·T_z·z + t·(x/x_SQL).
///
/// T_v = e^{4iβ}[[1,0],[−K_sm,1]], T_z = e^{2iβ}[[1,0],[−K_z,1]],
/// t = e^{2iβ}·{0, √(2K_sm)}.
pub fn lossless_online_blocks(
    params: &PlantParams,
    omega_rad: f64,
) -> Result<(ComplexMat, ComplexMat, Vector2<C64>)> {
    let cf = coupling_factors(params, omega_rad)?;
    let e2b = cf.e2ib(params);
    let t_v = mat2(cr(1.0), cr(0.0), cr(-cf.k_sm), cr(1.0)).map(|v| v * e2b * e2b);
    let t_z = mat2(cr(1.0), cr(0.0), -cf.k_z, cr(1.0)).map(|v| v * e2b);
    let t = Vector2::new(cr(0.0), e2b * cr((2.0 * cf.k_sm).sqrt()));
    Ok((t_v, t_z, t))
}

/// Closed-form lossless blocks for the stored-record (offline, unconditioned)
/// readout: output = T_b·b_in + T_v′·v_in + t′·(x/x_SQL).
///
/// T_b = e^{2iβ}[[1,0],[−K_pm,1]], T_v′ = e^{2iβ}[[0,0],[K_pm,0]],
/// t′ = e^{iβ}·{0, √(2K_pm)}.
pub fn lossless_offline_blocks(
    params: &PlantParams,
    omega_rad: f64,
) -> Result<(ComplexMat, ComplexMat, Vector2<C64>)> {
    let cf = coupling_factors(params, omega_rad)?;
    let e2b = cf.e2ib(params);
    let eib = c(params.bandwidth_rad, omega_rad)
        / c(params.bandwidth_rad, omega_rad).norm();
    let t_b = mat2(cr(1.0), cr(0.0), cr(-cf.k_pm), cr(1.0)).map(|v| v * e2b);
    let t_vp = mat2(cr(0.0), cr(0.0), cr(cf.k_pm), cr(0.0)).map(|v| v * e2b);
    let t_p = Vector2::new(cr(0.0), eib * cr((2.0 * cf.k_pm).sqrt()));
    Ok((t_b, t_vp, t_p))
}

/// Input-channel families appearing in a solved IO system. Each group's
/// columns are contiguous in the solution rows; all are unit vacua except
/// `Epr` (carries the 4×4 EPR spectral density over a₁,a₂,b₁,b₂) and
/// `EprDivergent` (anti-squeezed combinations in e^r-scaled units, only
/// meaningful to conditioning, which must cancel them).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelGroup {
    /// Vacuum entering the readout mode (v_in): shot noise + back-action.
    CavityVacuum,
    /// Entangled meter input, finite squeezing: (a₁, a₂, b₁, b₂).
    Epr,
    /// Divergent anti-squeezed EPR combinations at infinite squeezing.
    EprDivergent,
    /// Plain vacuum at the meter port (position-meter reference).
    MeterVacuum,
    /// Intracavity loss vacua (a′₁, a′₂, b′₁, b′₂) injected by arm damping.
    ArmLoss,
    /// Vacuum mixed in where the entangled beam enters the meter cavity.
    InputLoss,
    /// Vacua entering through the lossy Bell detection ports.
    BellLoss,
    /// Classical unit probe injections at the meter input (gain mapping).
    Probe,
}

impl ChannelGroup {
    /// Stable label used in noise budgets and CSV columns.
    pub fn label(&self) -> &'static str {
        match self {
            ChannelGroup::CavityVacuum => "cavity_vacuum",
            ChannelGroup::Epr => "epr",
            ChannelGroup::EprDivergent => "epr_divergent",
            ChannelGroup::MeterVacuum => "meter_vacuum",
            ChannelGroup::ArmLoss => "arm_loss",
            ChannelGroup::InputLoss => "input_loss",
            ChannelGroup::BellLoss => "bell_loss",
            ChannelGroup::Probe => "probe",
        }
    }
}

/// Full per-frequency solution of the lossy IO system: transfer rows from
/// every input channel to the meter output `b_out`, the readout output
/// `v_out`, the (lossy) Bell outcome pair, and the mechanical displacement,
/// plus the corresponding responses to a unit external displacement.
#[derive(Debug, Clone)]
pub struct IoSolution {
    groups: Vec<(ChannelGroup, std::ops::Range<usize>)>,
    epr_block: Option<SpectralDensityMat>,
    /// 2×N transfer rows to the meter-mode output field.
    pub b_out: ComplexMat,
    /// 2×N transfer rows to the readout-mode output field.
    pub v_out: ComplexMat,
    /// 2×N transfer rows to the lossy Bell outcomes (x₋, p₊); `None` when the
    /// wiring has no Bell measurement (position meter) or when the outcomes
    /// are divergent and already folded in analytically (online, r = ∞).
    pub bell: Option<ComplexMat>,
    /// Response of b_out to a unit external displacement, 1/m.
    pub b_out_signal: Vector2<C64>,
    /// Response of v_out to a unit external displacement, 1/m.
    pub v_out_signal: Vector2<C64>,
    /// Response of the Bell outcomes to a unit external displacement, 1/m.
    pub bell_signal: Vector2<C64>,
    /// 1×N transfer row to the mechanical displacement x, m per unit input.
    pub x_row: ComplexMat,
    /// Response of x to a unit external displacement (dimensionless).
    pub x_signal: C64,
}

impl IoSolution {
    /// Number of input channels.
    pub fn n_channels(&self) -> usize {
        self.groups.last().map(|(_, r)| r.end).unwrap_or(0)
    }

    /// Groups in channel order.
    pub fn groups(&self) -> &[(ChannelGroup, std::ops::Range<usize>)] {
        &self.groups
    }

    /// Column range of a group, if present.
    pub fn group_range(&self, g: ChannelGroup) -> Option<std::ops::Range<usize>> {
        self.groups.iter().find(|(gg, _)| *gg == g).map(|(_, r)| r.clone())
    }

    /// Input spectral density of a group (unit vacuum except the EPR block).
    pub fn group_psd(&self, g: ChannelGroup) -> Result<SpectralDensityMat> {
        let range = self.group_range(g).ok_or(Error::InvalidParameter(format!(
            "channel group `{}` not present in this wiring",
            g.label()
        )))?;
        match g {
            ChannelGroup::Epr => Ok(self
                .epr_block
                .clone()
                .expect("Epr group always carries its spectral density")),
            _ => Ok(SpectralDensityMat::identity(range.len())),
        }
    }

    /// Weighted Gram matrix R·S_in·R† of arbitrary stacked rows over the
    /// channel basis (m×N → m×m), honoring the EPR block's correlations.
    /// Columns listed in `skip` are excluded (used to drop divergent columns
    /// after conditioning has cancelled them).
    pub fn weighted_gram(&self, rows: &ComplexMat, skip: &[usize]) -> Result<ComplexMat> {
        if rows.ncols() != self.n_channels() {
            return Err(Error::DimensionMismatch {
                context: "IoSolution::weighted_gram",
                expected: self.n_channels(),
                got: rows.ncols(),
            });
        }
        let m = rows.nrows();
        let mut out = ComplexMat::zeros(m, m);
        for (g, range) in &self.groups {
            if *g == ChannelGroup::Probe {
                continue; // classical injections carry no vacuum noise
            }
            let cols: Vec<usize> = range.clone().filter(|j| !skip.contains(j)).collect();
            if cols.is_empty() {
                continue;
            }
            match g {
                ChannelGroup::Epr => {
                    let s = self
                        .epr_block
                        .as_ref()
                        .expect("Epr group always carries its spectral density")
                        .matrix();
                    // Dense 4×4 block; indices relative to the group start.
                    for a in 0..m {
                        for b in 0..m {
                            let mut acc = c(0.0, 0.0);
                            for &i in &cols {
                                for &j in &cols {
                                    acc += rows[(a, i)]
                                        * s[(i - range.start, j - range.start)]
                                        * rows[(b, j)].conj();
                                }
                            }
                            out[(a, b)] += acc;
                        }
                    }
                }
                _ => {
                    for a in 0..m {
                        for b in 0..m {
                            let mut acc = c(0.0, 0.0);
                            for &i in &cols {
                                acc += rows[(a, i)] * rows[(b, i)].conj();
                            }
                            out[(a, b)] += acc;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Per-group noise power of a single row over the channel basis
    /// (row·S_g·row† for each group), honoring EPR correlations. Probe
    /// columns are classical and contribute nothing; divergent columns can be
    /// excluded via `skip` once conditioning has cancelled them.
    pub fn weighted_group_powers(
        &self,
        row: &RowDVector<C64>,
        skip: &[usize],
    ) -> Result<Vec<(ChannelGroup, f64)>> {
        if row.len() != self.n_channels() {
            return Err(Error::DimensionMismatch {
                context: "IoSolution::weighted_group_powers",
                expected: self.n_channels(),
                got: row.len(),
            });
        }
        let mut out = Vec::new();
        for (g, range) in &self.groups {
            if *g == ChannelGroup::Probe {
                continue;
            }
            let cols: Vec<usize> = range.clone().filter(|j| !skip.contains(j)).collect();
            if cols.is_empty() {
                continue;
            }
            let mut acc = c(0.0, 0.0);
            match g {
                ChannelGroup::Epr => {
                    let s = self
                        .epr_block
                        .as_ref()
                        .expect("Epr group always carries its spectral density")
                        .matrix();
                    for &i in &cols {
                        for &j in &cols {
                            acc += row[i] * s[(i - range.start, j - range.start)] * row[j].conj();
                        }
                    }
                }
                _ => {
                    for &i in &cols {
                        acc += row[i] * row[i].conj();
                    }
                }
            }
            out.push((*g, acc.re));
        }
        Ok(out)
    }

    /// Assemble a noise budget from arbitrary 2×N output rows over this
    /// solution's channel basis (per-group contributions, probe columns
    /// skipped as classical).
    pub fn budget_from_rows(&self, rows: &ComplexMat, signal: Vector2<C64>) -> Result<NoiseBudget> {
        if rows.nrows() != 2 || rows.ncols() != self.n_channels() {
            return Err(Error::DimensionMismatch {
                context: "IoSolution::budget_from_rows",
                expected: self.n_channels(),
                got: rows.ncols(),
            });
        }
        let mut budget = NoiseBudget::new(signal);
        for (g, range) in &self.groups {
            if *g == ChannelGroup::Probe {
                continue; // classical injections carry no vacuum noise
            }
            if *g == ChannelGroup::EprDivergent {
                return Err(Error::AnalyticLimitRequired);
            }
            let cols = rows.columns(range.start, range.len()).into_owned();
            budget.push(g.label(), cols, self.group_psd(*g)?)?;
        }
        Ok(budget)
    }

    /// Assemble the meter-output noise budget (per-group contributions).
    pub fn b_out_budget(&self) -> Result<NoiseBudget> {
        self.budget_from_rows(&self.b_out.clone(), self.b_out_signal)
    }
}

struct ChannelLayout {
    groups: Vec<(ChannelGroup, std::ops::Range<usize>)>,
    n: usize,
}

impl ChannelLayout {
    fn new() -> Self {
        Self {
            groups: Vec::new(),
            n: 0,
        }
    }

    fn add(&mut self, g: ChannelGroup, count: usize) -> std::ops::Range<usize> {
        let range = self.n..self.n + count;
        self.groups.push((g, range.clone()));
        self.n += count;
        range
    }

    fn range(&self, g: ChannelGroup) -> Option<std::ops::Range<usize>> {
        self.groups.iter().find(|(gg, _)| *gg == g).map(|(_, r)| r.clone())
    }
}

/// Solve the lossy IO system at one frequency and return the meter-output
/// noise budget (per-input-group 2-row transfers plus the signal vector).
///
/// Rejects `Offline` wiring at infinite squeezing: that configuration has no
/// finite unconditioned budget (the anti-squeezed record diverges) and must
/// go through Wiener conditioning on the full [`IoSolution`] instead.
pub fn solve_lossy_io(
    params: &PlantParams,
    omega_rad: f64,
    wiring: &WiringSpec,
) -> Result<NoiseBudget> {
    solve_io_channels(params, omega_rad, wiring)?.b_out_budget()
}

/// Full channel-level solve. See [`IoSolution`] for what is returned.
///
/// `wiring.optimize_gains` must be resolved (to explicit gains) before
/// calling: gain optimization depends on the readout chain, which the solver
/// does not see. Use `teleport::optimize_gains`.
pub fn solve_io_channels(
    params: &PlantParams,
    omega_rad: f64,
    wiring: &WiringSpec,
) -> Result<IoSolution> {
    params.validate()?;
    if !(omega_rad.is_finite() && omega_rad > 0.0) {
        return Err(if omega_rad == 0.0 {
            Error::DcSingular {
                quantity: "solve_io_channels",
            }
        } else {
            Error::InvalidFrequency(omega_rad)
        });
    }
    wiring.validate()?;
    if wiring.losses.arm_loss_roundtrip_ppm > 0.0 && params.arm_damping_rad == 0.0 {
        return Err(Error::InvalidParameter(
            "arm_loss_roundtrip_ppm is set but the plant has no arm damping; fold the loss \
             budget into the plant first (LossBudgetSpec::fold_into)"
                .into(),
        ));
    }
    if wiring.optimize_gains && wiring.mode == WiringMode::Online {
        return Err(Error::InvalidParameter(
            "optimize_gains must be resolved to explicit feedforward gains before the linear solve \
             (see teleport::optimize_gains)"
                .into(),
        ));
    }

    let eps_in = wiring.losses.eps_in;
    let eps_out = wiring.losses.eps_out;
    let infinite = wiring.epr == EprState::Infinite;
    let teleported = wiring.mode != WiringMode::PositionMeter;

    // --- channel layout ------------------------------------------------
    let mut layout = ChannelLayout::new();
    layout.add(ChannelGroup::CavityVacuum, 2); // v1, v2
    if teleported && !infinite {
        layout.add(ChannelGroup::Epr, 4); // a1, a2, b1, b2
    }
    if wiring.mode == WiringMode::Offline && infinite {
        layout.add(ChannelGroup::EprDivergent, 2);
    }
    if wiring.mode == WiringMode::PositionMeter {
        layout.add(ChannelGroup::MeterVacuum, 2);
    }
    if params.arm_damping_rad > 0.0 {
        layout.add(ChannelGroup::ArmLoss, 4); // a'1, a'2, b'1, b'2
    }
    if eps_in > 0.0 {
        layout.add(ChannelGroup::InputLoss, 2);
    }
    if teleported && eps_out > 0.0 {
        layout.add(ChannelGroup::BellLoss, 2);
    }
    if wiring.probes {
        layout.add(ChannelGroup::Probe, 2);
    }
    let n = layout.n;

    let idx_v = layout.range(ChannelGroup::CavityVacuum).expect("always present");
    let (iv1, iv2) = (idx_v.start, idx_v.start + 1);

    // Alice/Bob EPR halves as rows over the channel basis. For finite r the
    // correlations live in the attached 4×4 spectral density; at infinite r
    // (offline) only the divergent anti-squeezed combinations survive, in
    // e^r/√2-scaled units.
    let mut a1 = RowDVector::<C64>::zeros(n);
    let mut a2 = RowDVector::<C64>::zeros(n);
    let mut b1 = RowDVector::<C64>::zeros(n);
    let mut b2 = RowDVector::<C64>::zeros(n);
    if let Some(r) = layout.range(ChannelGroup::Epr) {
        a1[r.start] = cr(1.0);
        a2[r.start + 1] = cr(1.0);
        b1[r.start + 2] = cr(1.0);
        b2[r.start + 3] = cr(1.0);
    }
    if let Some(r) = layout.range(ChannelGroup::EprDivergent) {
        a1[r.start] = cr(1.0);
        b1[r.start] = cr(1.0);
        a2[r.start + 1] = cr(1.0);
        b2[r.start + 1] = cr(-1.0);
    }
    if let Some(r) = layout.range(ChannelGroup::MeterVacuum) {
        b1[r.start] = cr(1.0);
        b2[r.start + 1] = cr(1.0);
    }

    let si = (1.0 - eps_in).sqrt();
    let so = (1.0 - eps_out).sqrt();
    let (g1, g2) = match wiring.mode {
        WiringMode::Online => {
            if infinite {
                // Forced loss-compensated gains: any other choice leaves a
                // divergent EPR residual in the meter input.
                let gc = cr(std::f64::consts::SQRT_2 * si / so);
                (gc, gc)
            } else {
                wiring.feedforward_gains
            }
        }
        _ => (cr(0.0), cr(0.0)),
    };

    let gamma_t = params.bandwidth_rad + params.arm_damping_rad;
    let k2g = (2.0 * params.bandwidth_rad).sqrt();
    let k2g2 = if params.arm_damping_rad > 0.0 {
        (2.0 * params.arm_damping_rad).sqrt()
    } else {
        0.0
    };
    let sw = std::f64::consts::SQRT_2 * params.coupling_rad;
    let sqrt2 = std::f64::consts::SQRT_2;

    // Meter-mode input b̃ as rows over input channels (w) and unknowns (u).
    let mut bt1_w = RowDVector::<C64>::zeros(n);
    let mut bt2_w = RowDVector::<C64>::zeros(n);
    let mut bt1_u = RowDVector::<C64>::zeros(6);
    let mut bt2_u = RowDVector::<C64>::zeros(6);
    if wiring.mode == WiringMode::Online && infinite {
        // Analytic infinite-squeezing limit: EPR residual and feedforward
        // collapse to b̃ = √(1−ε_in)·v_out (+ loss vacua below).
        bt1_w[iv1] = cr(-si);
        bt2_w[iv2] = cr(-si);
        bt1_u[0] = cr(si * k2g);
        bt2_u[1] = cr(si * k2g);
    } else {
        bt1_w += b1.map(|v| v * cr(si));
        bt2_w += b2.map(|v| v * cr(si));
        if wiring.mode == WiringMode::Online {
            // Bell outcomes α = ((v1_out − a1)/√2, (v2_out + a2)/√2) with
            // v_out = −v_in + √(2γ)A, displaced onto Bob's input with gains g.
            bt1_w[iv1] += g1 * cr(-so / sqrt2);
            bt1_w += a1.map(|v| v * (-g1 * cr(so / sqrt2)));
            bt1_u[0] += g1 * cr(so * k2g / sqrt2);
            bt2_w[iv2] += g2 * cr(-so / sqrt2);
            bt2_w += a2.map(|v| v * (g2 * cr(so / sqrt2)));
            bt2_u[1] += g2 * cr(so * k2g / sqrt2);
        }
    }
    if let Some(r) = layout.range(ChannelGroup::InputLoss) {
        bt1_w[r.start] += cr(eps_in.sqrt());
        bt2_w[r.start + 1] += cr(eps_in.sqrt());
    }
    if wiring.mode == WiringMode::Online {
        if let Some(r) = layout.range(ChannelGroup::BellLoss) {
            bt1_w[r.start] += g1 * cr(eps_out.sqrt());
            bt2_w[r.start + 1] += g2 * cr(eps_out.sqrt());
        }
    }
    if let Some(r) = layout.range(ChannelGroup::Probe) {
        bt1_w[r.start] += cr(1.0);
        bt2_w[r.start + 1] += cr(1.0);
    }

    // --- assemble M·u = F·w + s·x_ext, unknowns u = (A1, A2, B1, B2, x, p) --
    let d = c(gamma_t, -omega_rad);
    let mut mm = ComplexMat::zeros(6, 6);
    let mut ff = ComplexMat::zeros(6, n);
    let mut sig = DVector::<C64>::zeros(6);
    let arm = layout.range(ChannelGroup::ArmLoss);

    // Readout mode A: amplitude quadrature driven by v1 (+ arm loss).
    mm[(0, 0)] = d;
    ff[(0, iv1)] = cr(k2g);
    if let Some(r) = arm.clone() {
        ff[(0, r.start)] = cr(k2g2);
    }
    // Readout mode A: phase quadrature carries back-action −√2ω_a(x̂ − x_ext).
    mm[(1, 1)] = d;
    mm[(1, 4)] = cr(sw);
    ff[(1, iv2)] = cr(k2g);
    if let Some(r) = arm.clone() {
        ff[(1, r.start + 1)] = cr(k2g2);
    }
    sig[1] = cr(sw);
    // Meter mode B: amplitude quadrature driven by b̃1 (+ arm loss).
    mm[(2, 2)] = d;
    for k in 0..6 {
        mm[(2, k)] -= cr(k2g) * bt1_u[k];
    }
    for j in 0..n {
        ff[(2, j)] = cr(k2g) * bt1_w[j];
    }
    if let Some(r) = arm.clone() {
        ff[(2, r.start + 2)] += cr(k2g2);
    }
    // Meter mode B: phase quadrature carries back-action +√2ω_a(x̂ − x_ext).
    mm[(3, 3)] = d;
    mm[(3, 4)] = cr(-sw);
    for k in 0..6 {
        mm[(3, k)] -= cr(k2g) * bt2_u[k];
    }
    for j in 0..n {
        ff[(3, j)] = cr(k2g) * bt2_w[j];
    }
    if let Some(r) = arm.clone() {
        ff[(3, r.start + 3)] += cr(k2g2);
    }
    sig[3] = cr(-sw);
    // Mechanics: −iΩ·x = p/m; −iΩ·p + mω_m²·x = −√2ħω_a(A1 − B1).
    mm[(4, 4)] = c(0.0, -omega_rad);
    mm[(4, 5)] = cr(-1.0 / params.mass_kg);
    mm[(5, 0)] = cr(sqrt2 * params.hbar * params.coupling_rad);
    mm[(5, 2)] = cr(-sqrt2 * params.hbar * params.coupling_rad);
    mm[(5, 4)] = cr(params.mass_kg * params.mech_freq_rad * params.mech_freq_rad);
    mm[(5, 5)] = c(0.0, -omega_rad);

    let lu = mm.lu();
    let uu = lu.solve(&ff).ok_or(Error::SingularSystem {
        context: "lossy io system (input drive)",
    })?;
    let usig = lu.solve(&sig).ok_or(Error::SingularSystem {
        context: "lossy io system (signal drive)",
    })?;

    // b̃ as full rows; outputs via input-output relations.
    let bt1_full = &bt1_w + &bt1_u * &uu;
    let bt2_full = &bt2_w + &bt2_u * &uu;
    let bt1_sig = (&bt1_u * &usig)[0];
    let bt2_sig = (&bt2_u * &usig)[0];

    let mut b_out = ComplexMat::zeros(2, n);
    let mut v_out = ComplexMat::zeros(2, n);
    for j in 0..n {
        b_out[(0, j)] = -bt1_full[j] + cr(k2g) * uu[(2, j)];
        b_out[(1, j)] = -bt2_full[j] + cr(k2g) * uu[(3, j)];
        v_out[(0, j)] = cr(k2g) * uu[(0, j)];
        v_out[(1, j)] = cr(k2g) * uu[(1, j)];
    }
    v_out[(0, iv1)] -= cr(1.0);
    v_out[(1, iv2)] -= cr(1.0);
    let b_out_signal = Vector2::new(
        -bt1_sig + cr(k2g) * usig[2],
        -bt2_sig + cr(k2g) * usig[3],
    );
    let v_out_signal = Vector2::new(cr(k2g) * usig[0], cr(k2g) * usig[1]);

    // Bell outcomes with detection loss: α^L = √(1−ε_out)·α + √ε_out·α′.
    let has_bell = teleported && !(wiring.mode == WiringMode::Online && infinite);
    let bell = if has_bell {
        let mut bell = ComplexMat::zeros(2, n);
        for j in 0..n {
            bell[(0, j)] = cr(so / sqrt2) * (v_out[(0, j)] - a1[j]);
            bell[(1, j)] = cr(so / sqrt2) * (v_out[(1, j)] + a2[j]);
        }
        if let Some(r) = layout.range(ChannelGroup::BellLoss) {
            bell[(0, r.start)] += cr(eps_out.sqrt());
            bell[(1, r.start + 1)] += cr(eps_out.sqrt());
        }
        Some(bell)
    } else {
        None
    };
    let bell_signal = Vector2::new(
        cr(so / sqrt2) * v_out_signal[0],
        cr(so / sqrt2) * v_out_signal[1],
    );

    let mut x_row = ComplexMat::zeros(1, n);
    for j in 0..n {
        x_row[(0, j)] = uu[(4, j)];
    }

    let epr_block = if layout.range(ChannelGroup::Epr).is_some() {
        Some(epr_psd(&wiring.epr)?)
    } else {
        None
    };

    check_finite(&b_out, "solve_io_channels b_out")?;
    check_finite(&v_out, "solve_io_channels v_out")?;
    if let Some(bell) = &bell {
        check_finite(bell, "solve_io_channels bell")?;
    }

    Ok(IoSolution {
        groups: layout.groups,
        epr_block,
        b_out,
        v_out,
        bell,
        b_out_signal,
        v_out_signal,
        bell_signal,
        x_row,
        x_signal: usig[4],
    })
}
