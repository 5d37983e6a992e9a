//! Entanglement distribution, Bell readout, losses, and record conditioning.
//!
//! The meter input is one half of a two-mode squeezed (EPR) pair. In the
//! online variant the Bell outcomes are fed forward onto the meter input in
//! real time with complex gains; in the offline variant the outcomes are
//! stored and the recorded readout is Wiener-conditioned on them afterwards.
//! Both collapse to the same sensitivity in the infinite-squeezing limit, a
//! core internal-consistency check of the whole engine.
//!
//! Losses modeled here: injection loss ε_in where the entangled beam enters
//! the meter cavity, detection loss ε_out at the Bell ports and at the final
//! homodyne, round-trip arm loss (as extra optical damping γ₂, folded into
//! the plant), and an ideal phase-sensitive readout amplifier placed before
//! the lossy output detection.

use nalgebra::{RowDVector, Vector2};
use std::f64::consts::{LN_10, SQRT_2};

use crate::error::{Error, Result};
use crate::plant::{solve_io_channels, ChannelGroup, IoSolution, PlantParams};
use crate::qalgebra::{
    cr, hermiticity_defect, hermitize, min_hermitian_eigenvalue, ComplexMat, HomodyneVector,
    NoiseBudget, SpectralDensityMat, C64,
};
use crate::tol;

/// Two-mode squeezing of the entangled meter resource.
///
/// Finite squeezing is accepted up to [`tol::SQUEEZE_DB_CAP`] dB; beyond that
/// the state is numerically indistinguishable from the ideal limit and the
/// explicit `Infinite` sentinel must be used, which routes every consumer to
/// its analytic limit instead of overflowing `cosh 2r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EprState {
    /// Finite two-mode squeezing parameter r ≥ 0.
    Finite { r: f64 },
    /// Ideal infinite squeezing (analytic limit).
    Infinite,
}

impl EprState {
    fn r_cap() -> f64 {
        LN_10 * tol::SQUEEZE_DB_CAP / 20.0
    }

    /// Construct from the squeezing parameter r.
    pub fn from_r(r: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidSqueezing(r));
        }
        if r > Self::r_cap() {
            return Err(Error::InvalidSqueezing(r));
        }
        Ok(Self::Finite { r })
    }

    /// Construct from squeezing in decibels (10·log₁₀ of the variance ratio).
    pub fn from_db(db: f64) -> Result<Self> {
        if !(db.is_finite() && db >= 0.0) || db > tol::SQUEEZE_DB_CAP {
            return Err(Error::InvalidSqueezing(db));
        }
        Ok(Self::Finite {
            r: LN_10 * db / 20.0,
        })
    }

    /// Squeezing parameter, `None` for the infinite limit.
    pub fn r(&self) -> Option<f64> {
        match self {
            Self::Finite { r } => Some(*r),
            Self::Infinite => None,
        }
    }

    /// Squeezing in dB, `None` for the infinite limit.
    pub fn db(&self) -> Option<f64> {
        self.r().map(|r| 20.0 * r / LN_10)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Self::Infinite)
    }
}

/// Single-sided spectral density of the EPR pair over (a₁, a₂, b₁, b₂),
/// vacuum-normalized: cosh 2r on the diagonal, ±sinh 2r cross-correlations
/// between the amplitude (+) and phase (−) quadratures of the two halves.
///
/// The infinite limit has no finite spectral matrix and is rejected; callers
/// must branch to their analytic limit instead.
pub fn epr_psd(epr: &EprState) -> Result<SpectralDensityMat> {
    let r = match epr {
        EprState::Finite { r } => *r,
        EprState::Infinite => return Err(Error::AnalyticLimitRequired),
    };
    let ch = (2.0 * r).cosh();
    let sh = (2.0 * r).sinh();
    let mut m = ComplexMat::zeros(4, 4);
    for i in 0..4 {
        m[(i, i)] = cr(ch);
    }
    m[(0, 2)] = cr(sh);
    m[(2, 0)] = cr(sh);
    m[(1, 3)] = cr(-sh);
    m[(3, 1)] = cr(-sh);
    SpectralDensityMat::new(m)
}

/// Optical loss budget for a scenario.
///
/// `eps_in` acts where the entangled beam enters the meter cavity, `eps_out`
/// at every detection port (the two Bell detectors and the final homodyne),
/// `arm_loss_roundtrip_ppm` is the round-trip arm power loss 𝓛 in ppm
/// (equivalent optical damping γ₂ = 𝓛·c/4L), and `amplifier_gain_db` drives
/// the ideal phase-sensitive amplifier ahead of the lossy output detection.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBudgetSpec {
    /// Injection loss ε_in ∈ [0, 1).
    pub eps_in: f64,
    /// Detection loss ε_out ∈ [0, 1).
    pub eps_out: f64,
    /// Round-trip arm power loss, ppm.
    pub arm_loss_roundtrip_ppm: f64,
    /// Phase-sensitive readout amplifier power gain, dB (0 = off).
    pub amplifier_gain_db: f64,
}

impl LossBudgetSpec {
    /// No losses, no amplifier.
    pub fn lossless() -> Self {
        Self {
            eps_in: 0.0,
            eps_out: 0.0,
            arm_loss_roundtrip_ppm: 0.0,
            amplifier_gain_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_in", self.eps_in), ("eps_out", self.eps_out)] {
            if !(v.is_finite() && (0.0..1.0).contains(&v)) {
                return Err(Error::InvalidLoss { name, value: v });
            }
        }
        if !(self.arm_loss_roundtrip_ppm.is_finite() && self.arm_loss_roundtrip_ppm >= 0.0) {
            return Err(Error::InvalidLoss {
                name: "arm_loss_roundtrip_ppm",
                value: self.arm_loss_roundtrip_ppm,
            });
        }
        if !(self.amplifier_gain_db.is_finite() && self.amplifier_gain_db >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplifier_gain_db must be non-negative and finite, got {}",
                self.amplifier_gain_db
            )));
        }
        Ok(())
    }

    /// Equivalent optical damping of the round-trip arm loss, γ₂ = 𝓛·c/(4L).
    pub fn arm_damping_rad(&self, params: &PlantParams) -> f64 {
        self.arm_loss_roundtrip_ppm * 1e-6 * crate::plant::C_LIGHT / (4.0 * params.arm_length_m)
    }

    /// Fold the arm loss into the plant parameters (replaces any
    /// `arm_damping_rad` already present). The per-frequency solver reads
    /// γ₂ from the plant, so scenario pipelines call this once up front.
    pub fn fold_into(&self, params: &PlantParams) -> PlantParams {
        params.with_arm_damping(self.arm_damping_rad(params))
    }
}

/// How the meter port is driven and read out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WiringMode {
    /// Bell outcomes fed forward onto the meter input in real time.
    Online,
    /// Bell outcomes recorded; readout Wiener-conditioned afterwards.
    Offline,
    /// Plain vacuum at the meter port (conventional reference).
    PositionMeter,
}

/// Complete wiring description handed to the per-frequency solver.
#[derive(Debug, Clone)]
pub struct WiringSpec {
    pub mode: WiringMode,
    /// Complex feedforward gains (g₁, g₂) applied to the Bell outcomes in
    /// online mode. Default (√2, √2), the lossless matched choice.
    pub feedforward_gains: (C64, C64),
    /// Request per-frequency optimal gains. Must be resolved to explicit
    /// gains (via [`optimize_gains`]) before the linear solve; the scenario
    /// pipelines do this automatically.
    pub optimize_gains: bool,
    pub epr: EprState,
    pub losses: LossBudgetSpec,
    /// Classical unit probe injections at the meter input (used internally
    /// to map Wiener filters onto physical feedforward gains).
    pub(crate) probes: bool,
}

impl WiringSpec {
    fn base(mode: WiringMode, epr: EprState, losses: LossBudgetSpec) -> Self {
        Self {
            mode,
            feedforward_gains: (cr(SQRT_2), cr(SQRT_2)),
            optimize_gains: false,
            epr,
            losses,
            probes: false,
        }
    }

    pub fn online(epr: EprState, losses: LossBudgetSpec) -> Self {
        Self::base(WiringMode::Online, epr, losses)
    }

    pub fn offline(epr: EprState, losses: LossBudgetSpec) -> Self {
        Self::base(WiringMode::Offline, epr, losses)
    }

    /// Conventional reference: vacuum at the meter port, no losses.
    pub fn position_meter() -> Self {
        Self::base(
            WiringMode::PositionMeter,
            EprState::Finite { r: 0.0 },
            LossBudgetSpec::lossless(),
        )
    }

    pub fn with_gains(mut self, g1: C64, g2: C64) -> Self {
        self.feedforward_gains = (g1, g2);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.losses.validate()?;
        let (g1, g2) = self.feedforward_gains;
        if !(g1.re.is_finite() && g1.im.is_finite() && g2.re.is_finite() && g2.im.is_finite()) {
            return Err(Error::InvalidParameter(
                "feedforward gains must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Which port of a budget an optical loss acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossPort {
    /// Loss at the described input (uses `eps_in`).
    Input,
    /// Loss at the described output/detection (uses `eps_out`).
    Output,
}

/// Apply a beamsplitter loss to every path of a noise budget: all transfers
/// and the signal scale by √(1−ε) and a fresh unit vacuum enters with √ε.
///
/// The appended contribution is labeled `input_loss`/`output_loss` (with a
/// numeric suffix if that label is already taken).
pub fn apply_io_losses(
    budget: &NoiseBudget,
    losses: &LossBudgetSpec,
    port: LossPort,
) -> Result<NoiseBudget> {
    losses.validate()?;
    let (eps, base_label) = match port {
        LossPort::Input => (losses.eps_in, "input_loss"),
        LossPort::Output => (losses.eps_out, "output_loss"),
    };
    if eps == 0.0 {
        return Ok(budget.clone());
    }
    let s = cr((1.0 - eps).sqrt());
    let mut out = NoiseBudget::new(budget.signal.map(|v| v * s));
    for cn in &budget.contributions {
        out.push(cn.label.clone(), cn.transfer.map(|v| v * s), cn.input_psd.clone())?;
    }
    let mut label = base_label.to_string();
    let mut k = 2;
    while out.contributions.iter().any(|c| c.label == label) {
        label = format!("{base_label}_{k}");
        k += 1;
    }
    out.push(
        label,
        ComplexMat::identity(2, 2).map(|v| v * cr(eps.sqrt())),
        SpectralDensityMat::identity(2),
    )?;
    Ok(out)
}

/// Apply an ideal phase-sensitive amplifier that multiplies the quadrature
/// along `h` by G = 10^{dB/20}, leaving the orthogonal quadrature untouched:
/// T → Rᵀ·diag(G,1)·R·T with R the rotation taking h onto the first axis.
///
/// Noiseless by construction (a single-quadrature scaling needs no added
/// vacuum); placed before the lossy output detection it suppresses the
/// relative weight of detection loss by G².
pub fn apply_readout_amplifier(
    budget: &NoiseBudget,
    h: &HomodyneVector,
    gain_db: f64,
) -> Result<NoiseBudget> {
    if !(gain_db.is_finite() && gain_db >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "amplifier gain must be non-negative and finite, got {gain_db} dB"
        )));
    }
    if gain_db == 0.0 {
        return Ok(budget.clone());
    }
    let g = 10f64.powf(gain_db / 20.0);
    let (cph, sph) = (h.components[0], h.components[1]);
    let amp = ComplexMat::from_row_slice(
        2,
        2,
        &[
            cr(g * cph * cph + sph * sph),
            cr((g - 1.0) * cph * sph),
            cr((g - 1.0) * cph * sph),
            cr(g * sph * sph + cph * cph),
        ],
    );
    let mut out = NoiseBudget::new(Vector2::new(
        amp[(0, 0)] * budget.signal[0] + amp[(0, 1)] * budget.signal[1],
        amp[(1, 0)] * budget.signal[0] + amp[(1, 1)] * budget.signal[1],
    ));
    for cn in &budget.contributions {
        out.push(cn.label.clone(), &amp * &cn.transfer, cn.input_psd.clone())?;
    }
    Ok(out)
}

/// Wiener-condition a scalar record y on a pair of auxiliary records α:
/// returns the conditioned power S_yy − S_yα·S_αα⁻¹·S_αy and the filters
/// g = −S_yα·S_αα⁻¹ (so the conditioned record is y + g·α).
///
/// A zero cross-spectrum returns the record untouched with (0, 0) filters.
/// Near-singular α spectra are Tikhonov-regularized
/// ([`tol::CONDITION_REG_THRESHOLD`], [`tol::CONDITION_REG_SCALE`]); blocks
/// that violate the joint positivity requirement (cross-correlation larger
/// than the record variances allow) are rejected.
pub fn condition_offline(
    y_psd: f64,
    y_alpha_cross: &ComplexMat,
    alpha_psd: &ComplexMat,
) -> Result<(f64, (C64, C64))> {
    if y_alpha_cross.nrows() != 1 || y_alpha_cross.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            context: "condition_offline (1×2 cross-spectrum required)",
            expected: 2,
            got: y_alpha_cross.nrows() * y_alpha_cross.ncols(),
        });
    }
    if alpha_psd.nrows() != 2 || alpha_psd.ncols() != 2 {
        return Err(Error::DimensionMismatch {
            context: "condition_offline (2×2 record spectrum required)",
            expected: 4,
            got: alpha_psd.nrows() * alpha_psd.ncols(),
        });
    }
    if !y_psd.is_finite() || y_psd < -tol::HERMITICITY_ABS {
        return Err(Error::Conditioning(format!(
            "record power must be non-negative and finite, got {y_psd:.3e}"
        )));
    }
    let y_psd = y_psd.max(0.0);
    let scale = alpha_psd.norm().max(1.0);
    if hermiticity_defect(alpha_psd) > tol::HERMITICITY_ABS * scale {
        return Err(Error::Conditioning(
            "auxiliary record spectrum is not Hermitian".into(),
        ));
    }
    let mut a = hermitize(alpha_psd);
    if min_hermitian_eigenvalue(&a) < tol::PSD_MIN_EIG * scale {
        return Err(Error::Conditioning(
            "auxiliary record spectrum has a negative eigenvalue".into(),
        ));
    }
    let cross_norm = y_alpha_cross.norm();
    if !cross_norm.is_finite() {
        return Err(Error::Conditioning("cross-spectrum is not finite".into()));
    }
    if cross_norm == 0.0 {
        return Ok((y_psd, (cr(0.0), cr(0.0))));
    }
    let trace = (a[(0, 0)] + a[(1, 1)]).re;
    if trace <= 0.0 {
        return Err(Error::Conditioning(
            "auxiliary record has zero variance but nonzero cross-correlation".into(),
        ));
    }
    // Regularize a (near-)singular record spectrum so the 2×2 inverse stays
    // meaningful; the added floor is negligible against the retained record.
    let eigs = crate::qalgebra::hermitian_eigenvalues(&a);
    let (emin, emax) = (eigs[0], eigs[eigs.len() - 1]);
    if emin <= emax / tol::CONDITION_REG_THRESHOLD {
        let reg = cr(tol::CONDITION_REG_SCALE * trace);
        a[(0, 0)] += reg;
        a[(1, 1)] += reg;
    }
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    if det.norm() == 0.0 {
        return Err(Error::SingularSystem {
            context: "condition_offline (record spectrum not invertible)",
        });
    }
    let inv00 = a[(1, 1)] / det;
    let inv01 = -a[(0, 1)] / det;
    let inv10 = -a[(1, 0)] / det;
    let inv11 = a[(0, 0)] / det;
    let s0 = y_alpha_cross[(0, 0)];
    let s1 = y_alpha_cross[(0, 1)];
    let g0 = -(s0 * inv00 + s1 * inv10);
    let g1 = -(s0 * inv01 + s1 * inv11);
    // Conditioned power: S_yy + Re(g·S_αy) with S_αy = cross†.
    let conditioned = y_psd + (g0 * s0.conj() + g1 * s1.conj()).re;
    if conditioned < -1e-9 * y_psd.max(1e-300) {
        return Err(Error::Conditioning(format!(
            "cross-correlation exceeds what the record variances allow \
             (conditioned power {conditioned:.3e} < 0); joint spectrum is not positive"
        )));
    }
    Ok((conditioned.clamp(0.0, y_psd), (g0, g1)))
}

/// Evaluate the conditioned power for externally supplied filters:
/// S = S_yy + 2·Re(g·S_αy) + g·S_αα·g†.
pub fn conditioned_power_with_filters(
    y_psd: f64,
    y_alpha_cross: &ComplexMat,
    alpha_psd: &ComplexMat,
    filters: (C64, C64),
) -> Result<f64> {
    let (g0, g1) = filters;
    let s0 = y_alpha_cross[(0, 0)];
    let s1 = y_alpha_cross[(0, 1)];
    let a = hermitize(alpha_psd);
    let quad = (g0 * a[(0, 0)] * g0.conj()
        + g0 * a[(0, 1)] * g1.conj()
        + g1 * a[(1, 0)] * g0.conj()
        + g1 * a[(1, 1)] * g1.conj())
    .re;
    let power = y_psd + 2.0 * (g0 * s0.conj() + g1 * s1.conj()).re + quad;
    if power < -1e-9 * y_psd.max(1e-300) {
        return Err(Error::Conditioning(format!(
            "filter evaluation produced negative power {power:.3e}; inconsistent spectra"
        )));
    }
    Ok(power.max(0.0))
}

/// Closed-form conditioning filters equivalent to real-time feedforward at
/// homodyne angle φ (this crate's quadrature convention):
/// g₁(φ) = √2·e^{2iβ}·(cos φ − K_z·sin φ), g₂(φ) = √2·e^{2iβ}·sin φ.
pub fn closed_form_filters(params: &PlantParams, omega_rad: f64, phi: f64) -> Result<(C64, C64)> {
    let cf = crate::plant::coupling_factors(params, omega_rad)?;
    let e2b = cf.e2ib(params);
    let g1 = cr(SQRT_2) * e2b * (cr(phi.cos()) - cf.k_z * cr(phi.sin()));
    let g2 = cr(SQRT_2) * e2b * cr(phi.sin());
    Ok((g1, g2))
}

/// Scalar readout chain applied to a solved IO system: amplifier (G on the
/// measured quadrature), lossy detection (√(1−ε_out) plus two fresh vacuum
/// columns), then the homodyne projection. Rows live over the extended basis
/// `[channels…, out₁, out₂]`.
pub(crate) struct ReadoutRows {
    pub y: RowDVector<C64>,
    pub y_signal: C64,
    /// Bell records over the same extended basis (zero at the out columns).
    pub alpha: Option<ComplexMat>,
    pub alpha_signal: Vector2<C64>,
    pub n_channels: usize,
}

pub(crate) fn readout_rows(
    sol: &IoSolution,
    h: &HomodyneVector,
    losses: &LossBudgetSpec,
) -> Result<ReadoutRows> {
    let n = sol.n_channels();
    let g = 10f64.powf(losses.amplifier_gain_db / 20.0);
    let so = (1.0 - losses.eps_out).sqrt();
    let seo = losses.eps_out.sqrt();
    let base = h.project(&sol.b_out)?;
    let mut y = RowDVector::<C64>::zeros(n + 2);
    for j in 0..n {
        y[j] = base[j] * cr(g * so);
    }
    y[n] = cr(seo * h.components[0]);
    y[n + 1] = cr(seo * h.components[1]);
    let y_signal = h.project_vec(&sol.b_out_signal) * cr(g * so);
    let alpha = sol.bell.as_ref().map(|bell| {
        let mut a = ComplexMat::zeros(2, n + 2);
        for i in 0..2 {
            for j in 0..n {
                a[(i, j)] = bell[(i, j)];
            }
        }
        a
    });
    Ok(ReadoutRows {
        y,
        y_signal,
        alpha,
        alpha_signal: sol.bell_signal,
        n_channels: n,
    })
}

/// Gram matrix of rows over the extended basis `[channels…, out₁, out₂]`:
/// channel part via the solution's weighted Gram (EPR correlations, probe
/// columns excluded as classical), out columns as unit vacua.
pub(crate) fn gram_extended(
    sol: &IoSolution,
    rows: &ComplexMat,
    skip: &[usize],
) -> Result<ComplexMat> {
    let n = sol.n_channels();
    if rows.ncols() != n + 2 {
        return Err(Error::DimensionMismatch {
            context: "gram_extended",
            expected: n + 2,
            got: rows.ncols(),
        });
    }
    let base = rows.columns(0, n).into_owned();
    let mut out = sol.weighted_gram(&base, skip)?;
    let m = rows.nrows();
    for a in 0..m {
        for b in 0..m {
            for j in n..n + 2 {
                out[(a, b)] += rows[(a, j)] * rows[(b, j)].conj();
            }
        }
    }
    Ok(out)
}

/// Result of conditioning the offline record at one frequency.
#[derive(Debug, Clone)]
pub struct OfflineConditioned {
    /// Displacement-referred conditioned sensitivity, m²/Hz.
    pub sx_m2_per_hz: f64,
    /// Conditioning filters (g₁, g₂) actually applied.
    pub filters: (C64, C64),
    /// Conditioned readout noise power (vacuum-normalized).
    pub noise_power: f64,
    /// Conditioned signal response, 1/m.
    pub signal: C64,
    /// Per-input-family noise powers of the conditioned record
    /// (labels as in [`ChannelGroup::label`], plus `output_loss`).
    pub per_group: Vec<(String, f64)>,
}

/// Condition the stored offline record on the Bell outcomes at one frequency.
///
/// With `forced_filters = None` the Wiener-optimal filters are computed: a
/// finite-squeezing record goes through [`condition_offline`] on the joint
/// spectra; the infinite-squeezing record instead solves the 2×2 system that
/// exactly cancels the divergent anti-squeezed columns (the regularized
/// Wiener limit). Supplied filters are applied as-is — except at infinite
/// squeezing, where they must cancel the divergence or the conditioned power
/// has no finite value and the call fails.
pub fn offline_conditioned(
    params: &PlantParams,
    omega_rad: f64,
    wiring: &WiringSpec,
    h: &HomodyneVector,
    forced_filters: Option<(C64, C64)>,
) -> Result<OfflineConditioned> {
    if wiring.mode != WiringMode::Offline {
        return Err(Error::InvalidParameter(
            "offline_conditioned requires Offline wiring".into(),
        ));
    }
    let sol = solve_io_channels(params, omega_rad, wiring)?;
    let rr = readout_rows(&sol, h, &wiring.losses)?;
    let alpha = rr
        .alpha
        .as_ref()
        .expect("offline wiring always produces Bell records");
    let n = rr.n_channels;

    let div = sol.group_range(ChannelGroup::EprDivergent);
    let (g0, g1, skip): (C64, C64, Vec<usize>) = if let Some(div) = div {
        let skip: Vec<usize> = div.clone().collect();
        let (d0, d1) = (div.start, div.start + 1);
        let (g0, g1) = match forced_filters {
            Some((f0, f1)) => {
                for j in [d0, d1] {
                    let resid = rr.y[j] + f0 * alpha[(0, j)] + f1 * alpha[(1, j)];
                    let scale =
                        rr.y[j].norm() + (f0 * alpha[(0, j)]).norm() + (f1 * alpha[(1, j)]).norm();
                    if resid.norm() > 1e-8 * scale.max(1e-300) {
                        return Err(Error::Conditioning(format!(
                            "supplied filters leave a divergent anti-squeezed residual \
                             ({:.3e} of scale {:.3e}) at infinite squeezing",
                            resid.norm(),
                            scale
                        )));
                    }
                }
                (f0, f1)
            }
            None => {
                // Solve g·α_div = −y_div exactly (2 filters, 2 columns).
                let b = ComplexMat::from_row_slice(
                    2,
                    2,
                    &[alpha[(0, d0)], alpha[(1, d0)], alpha[(0, d1)], alpha[(1, d1)]],
                );
                let rhs = nalgebra::DVector::from_vec(vec![-rr.y[d0], -rr.y[d1]]);
                let g = b.lu().solve(&rhs).ok_or(Error::SingularSystem {
                    context: "offline conditioning (divergence cancellation)",
                })?;
                (g[0], g[1])
            }
        };
        (g0, g1, skip)
    } else {
        match forced_filters {
            Some((f0, f1)) => (f0, f1, Vec::new()),
            None => {
                // Joint spectra of (y, α₁, α₂) → Wiener filters.
                let mut stacked = ComplexMat::zeros(3, n + 2);
                for j in 0..n + 2 {
                    stacked[(0, j)] = rr.y[j];
                    stacked[(1, j)] = alpha[(0, j)];
                    stacked[(2, j)] = alpha[(1, j)];
                }
                let jm = gram_extended(&sol, &stacked, &[])?;
                let cross = ComplexMat::from_row_slice(1, 2, &[jm[(0, 1)], jm[(0, 2)]]);
                let apsd = ComplexMat::from_row_slice(
                    2,
                    2,
                    &[jm[(1, 1)], jm[(1, 2)], jm[(2, 1)], jm[(2, 2)]],
                );
                let (_, g) = condition_offline(jm[(0, 0)].re, &cross, &apsd)?;
                (g.0, g.1, Vec::new())
            }
        }
    };

    // Conditioned record y + g·α over the extended basis.
    let mut row = RowDVector::<C64>::zeros(n + 2);
    for j in 0..n + 2 {
        row[j] = rr.y[j] + g0 * alpha[(0, j)] + g1 * alpha[(1, j)];
    }
    let base = RowDVector::from_fn(n, |_, j| row[j]);
    let mut per_group: Vec<(String, f64)> = sol
        .weighted_group_powers(&base, &skip)?
        .into_iter()
        .map(|(g, p)| (g.label().to_string(), p))
        .collect();
    let mut noise_power: f64 = per_group.iter().map(|(_, p)| *p).sum();
    if wiring.losses.eps_out > 0.0 {
        let p_out = row[n].norm_sqr() + row[n + 1].norm_sqr();
        per_group.push(("output_loss".to_string(), p_out));
        noise_power += p_out;
    }
    let signal = rr.y_signal + g0 * rr.alpha_signal[0] + g1 * rr.alpha_signal[1];
    if signal.norm_sqr() == 0.0 {
        return Err(Error::Conditioning(
            "conditioning filters cancelled the displacement signal".into(),
        ));
    }
    Ok(OfflineConditioned {
        sx_m2_per_hz: noise_power / signal.norm_sqr(),
        filters: (g0, g1),
        noise_power,
        signal,
        per_group,
    })
}

/// Per-frequency feedforward gains that make the online readout match the
/// offline Wiener-conditioned sensitivity exactly.
///
/// Construction: solve the offline system with two classical unit probe
/// injections at the meter input; get the Wiener filters f of the probe-free
/// record; a physical feedforward g·α re-enters through the same port as the
/// probes, so the gains follow from the probe responses W (readout) and L
/// (Bell records): g_j = f_j / (W_j + (f·L)_j).
///
/// At infinite squeezing the result is the loss-compensated matched gain
/// √2·√(1−ε_in)/√(1−ε_out) on both channels.
pub fn optimize_gains(
    params: &PlantParams,
    omega_rad: f64,
    epr: EprState,
    losses: LossBudgetSpec,
    h: &HomodyneVector,
) -> Result<(C64, C64)> {
    losses.validate()?;
    if epr.is_infinite() {
        let gc = cr(SQRT_2 * (1.0 - losses.eps_in).sqrt() / (1.0 - losses.eps_out).sqrt());
        return Ok((gc, gc));
    }
    let mut wiring = WiringSpec::offline(epr, losses);
    wiring.probes = true;
    let sol = solve_io_channels(params, omega_rad, &wiring)?;
    let rr = readout_rows(&sol, h, &losses)?;
    let alpha = rr
        .alpha
        .as_ref()
        .expect("offline wiring always produces Bell records");
    let pr = sol
        .group_range(ChannelGroup::Probe)
        .expect("probe channels were requested");
    let (p0, p1) = (pr.start, pr.start + 1);
    let w_resp = [rr.y[p0], rr.y[p1]];
    let l_resp = [
        [alpha[(0, p0)], alpha[(0, p1)]],
        [alpha[(1, p0)], alpha[(1, p1)]],
    ];
    let n = rr.n_channels;
    let mut stacked = ComplexMat::zeros(3, n + 2);
    for j in 0..n + 2 {
        stacked[(0, j)] = rr.y[j];
        stacked[(1, j)] = alpha[(0, j)];
        stacked[(2, j)] = alpha[(1, j)];
    }
    let jm = gram_extended(&sol, &stacked, &[])?;
    let cross = ComplexMat::from_row_slice(1, 2, &[jm[(0, 1)], jm[(0, 2)]]);
    let apsd = ComplexMat::from_row_slice(2, 2, &[jm[(1, 1)], jm[(1, 2)], jm[(2, 1)], jm[(2, 2)]]);
    let (_, f) = condition_offline(jm[(0, 0)].re, &cross, &apsd)?;
    let denom0 = w_resp[0] + f.0 * l_resp[0][0] + f.1 * l_resp[1][0];
    let denom1 = w_resp[1] + f.0 * l_resp[0][1] + f.1 * l_resp[1][1];
    if denom0.norm() == 0.0 || denom1.norm() == 0.0 {
        return Err(Error::SingularSystem {
            context: "optimize_gains (probe response vanished)",
        });
    }
    Ok((f.0 / denom0, f.1 / denom1))
}

/// Transfer description of the two Bell outcomes (x₋, p₊) as a noise budget
/// over every input family, including detection loss.
#[derive(Debug, Clone)]
pub struct BellChannels {
    pub budget: NoiseBudget,
}

impl BellChannels {
    /// 2×2 spectral density of the outcome pair.
    pub fn outcome_psd(&self) -> Result<SpectralDensityMat> {
        let mut acc = ComplexMat::zeros(2, 2);
        for cn in &self.budget.contributions {
            acc += crate::qalgebra::propagate_psd(&cn.transfer, &cn.input_psd)?
                .matrix()
                .clone();
        }
        SpectralDensityMat::new(hermitize(&acc))
    }
}

/// Solve for the Bell outcome transfers at one frequency. Requires finite
/// squeezing: at the infinite limit the outcomes have no finite spectrum
/// (the anti-squeezed quadratures diverge) and the analytic limits of the
/// downstream quantities must be used instead.
pub fn bell_channels(
    params: &PlantParams,
    omega_rad: f64,
    epr: EprState,
    losses: LossBudgetSpec,
) -> Result<BellChannels> {
    if epr.is_infinite() {
        return Err(Error::AnalyticLimitRequired);
    }
    let wiring = WiringSpec::offline(epr, losses);
    let sol = solve_io_channels(params, omega_rad, &wiring)?;
    let bell = sol.bell.clone().expect("offline wiring always produces Bell records");
    let budget = sol.budget_from_rows(&bell, sol.bell_signal)?;
    Ok(BellChannels { budget })
}
