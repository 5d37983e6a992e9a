//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS] criterion N` line (visible with `--nocapture`) or failing with a
//! `[FAIL] criterion N` message carrying the measured numbers.
//!
//! Tolerances are pinned in the asserts themselves; shared engine tolerances
//! come from `tsm::tol`. Criteria 10 and 12 state targets the model itself
//! contradicts — those tests measure honestly and fail with the analysis in
//! the message rather than loosening the bound.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsm::budget::{
    enhancement_ratio, figures_of_merit, offline_sensitivity, online_sensitivity,
    online_sensitivity_optimized, position_meter_sensitivity, sql_curve, FrequencyGrid,
    HomodyneAngle,
};
use tsm::cli::{format_field, render_curve_csv, ScenarioConfig};
use tsm::plant::{
    coupling_factors, gamma_figure, lossless_offline_blocks, lossless_online_blocks,
    solve_lossy_io, PlantParams,
};
use tsm::qalgebra::{homodyne_noise_power, C64, ComplexMat, HomodyneVector};
use tsm::teleport::{
    closed_form_filters, condition_offline, epr_psd, offline_conditioned, EprState,
    LossBudgetSpec, WiringSpec,
};
use tsm::tol;

/// Reference plant: 4 km arms, 200 kg mirrors, 3 MW circulating power at
/// 2 μm, readout-mode bandwidth γ = 2π·115 Hz.
fn reference_plant() -> PlantParams {
    PlantParams::from_power(200.0, 4000.0, 3e6, 2e-6, 2.0 * PI * 115.0).expect("valid plant")
}

/// The lossy reference budget: 1% injection and detection losses, 30 ppm
/// round-trip arm loss, no readout amplification.
fn reference_losses() -> LossBudgetSpec {
    LossBudgetSpec {
        eps_in: 0.01,
        eps_out: 0.01,
        arm_loss_roundtrip_ppm: 30.0,
        amplifier_gain_db: 0.0,
    }
}

fn default_grid() -> FrequencyGrid {
    FrequencyGrid::new(1.0, 5000.0, 400).expect("valid grid")
}

/// Grid whose first point is exactly `f_hz` (geometric grids include their
/// endpoints).
fn grid_starting_at(f_hz: f64) -> FrequencyGrid {
    FrequencyGrid::new(f_hz, 10.0 * f_hz, 2).expect("valid grid")
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

#[test]
fn criterion_01_lossless_closed_form_match() {
    // Lossless, infinite squeezing, φ = π/2: the online sensitivity must be
    // (x²_SQL/2)(1/K_sm + K_sm) pointwise over the default 400-point grid.
    let p = reference_plant();
    let curve = online_sensitivity(
        &p,
        LossBudgetSpec::lossless(),
        EprState::Infinite,
        HomodyneAngle::Fixed(FRAC_PI_2),
        &default_grid(),
    )
    .expect("online curve");
    let mut worst = (0.0_f64, 0.0_f64);
    for (f, s) in curve.freqs_hz.iter().zip(&curve.total_psd_m2_per_hz) {
        let cf = coupling_factors(&p, 2.0 * PI * f).expect("couplings");
        let want = cf.x_sql_sq() / 2.0 * (1.0 / cf.k_sm + cf.k_sm);
        let rel = (s - want).abs() / want;
        if rel > worst.1 {
            worst = (*f, rel);
        }
    }
    assert!(
        worst.1 <= 1e-10,
        "[FAIL] criterion 1: velocity-coupling closed form missed by {:.2e} at {:.2} Hz (bar 1e-10)",
        worst.1,
        worst.0
    );
    println!(
        "[PASS] criterion 1: lossless φ=π/2 online curve matches (x²/2)(1/K+K), worst rel {:.2e}",
        worst.1
    );
}

#[test]
fn criterion_02_offline_with_closed_form_filters_matches_online() {
    // Conditioning the stored record with the analytic filters must
    // reproduce the real-time feedforward sensitivity at every grid point.
    let p = reference_plant();
    let phi = FRAC_PI_2;
    let online = online_sensitivity(
        &p,
        LossBudgetSpec::lossless(),
        EprState::Infinite,
        HomodyneAngle::Fixed(phi),
        &default_grid(),
    )
    .expect("online curve");
    let h = HomodyneVector::new(phi);
    let wiring = WiringSpec::offline(EprState::Infinite, LossBudgetSpec::lossless());
    let mut worst = (0.0_f64, 0.0_f64);
    for (f, s_on) in online.freqs_hz.iter().zip(&online.total_psd_m2_per_hz) {
        let w = 2.0 * PI * f;
        let filters = closed_form_filters(&p, w, phi).expect("filters");
        let off = offline_conditioned(&p, w, &wiring, &h, Some(filters)).expect("conditioned");
        let rel = (off.sx_m2_per_hz - s_on).abs() / s_on;
        if rel > worst.1 {
            worst = (*f, rel);
        }
    }
    assert!(
        worst.1 <= 1e-10,
        "[FAIL] criterion 2: offline with closed-form filters deviates from online by {:.2e} at {:.2} Hz (bar 1e-10)",
        worst.1,
        worst.0
    );
    println!(
        "[PASS] criterion 2: closed-form conditioning equals feedforward, worst rel {:.2e}",
        worst.1
    );
}

#[test]
fn criterion_03_wiener_filters_recover_closed_forms() {
    // The numerically conditioned filters at infinite squeezing must land on
    // the analytic forms at 50 seeded random frequencies.
    let p = reference_plant();
    let phi = FRAC_PI_2;
    let h = HomodyneVector::new(phi);
    let wiring = WiringSpec::offline(EprState::Infinite, LossBudgetSpec::lossless());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f11e);
    let mut worst = (0.0_f64, 0.0_f64);
    for _ in 0..50 {
        let f = 10f64.powf(rng.random_range(0.0..5000f64.log10()));
        let w = 2.0 * PI * f;
        let got = offline_conditioned(&p, w, &wiring, &h, None)
            .expect("conditioned")
            .filters;
        let want = closed_form_filters(&p, w, phi).expect("filters");
        let rel = ((got.0 - want.0).norm() / want.0.norm())
            .max((got.1 - want.1).norm() / want.1.norm());
        if rel > worst.1 {
            worst = (f, rel);
        }
    }
    assert!(
        worst.1 <= tol::WIENER_FILTER_REL,
        "[FAIL] criterion 3: optimized filters miss the closed forms by {:.2e} at {:.2} Hz (bar {:.0e})",
        worst.1,
        worst.0,
        tol::WIENER_FILTER_REL
    );
    println!(
        "[PASS] criterion 3: Wiener filters reproduce closed forms at 50 random frequencies, worst rel {:.2e}",
        worst.1
    );
}

#[test]
fn criterion_04_coupling_identity_across_grid() {
    // |K_z|² = K_sm · K_pm at every grid frequency.
    let p = reference_plant();
    let mut worst = 0.0_f64;
    for f in default_grid().frequencies_hz() {
        let cf = coupling_factors(&p, 2.0 * PI * f).expect("couplings");
        let want = cf.k_sm * cf.k_pm;
        worst = worst.max((cf.k_z.norm_sqr() - want).abs() / want);
    }
    assert!(
        worst <= tol::IDENTITY_REL,
        "[FAIL] criterion 4: |K_z|² = K_sm·K_pm violated by {worst:.2e} (bar {:.0e})",
        tol::IDENTITY_REL
    );
    println!("[PASS] criterion 4: |K_z|² = K_sm·K_pm, worst rel {worst:.2e}");
}

#[test]
fn criterion_05_solver_reproduces_both_closed_form_block_sets() {
    // With ε = γ₂ = 0 the numeric IO solver must reproduce the closed-form
    // transfer blocks of both readouts. Stored-record wiring: meter columns
    // T_b, source columns T_v′, signal t′. Feedforward wiring at finite
    // squeezing and ideal gains: source columns T_v, signal t, and the EPR
    // columns recombine into √2·T_z on the squeezed pair while the
    // anti-squeezed pair cancels.
    let p = reference_plant();
    let r = EprState::from_r(1.0).expect("valid r");
    let mut worst_off = 0.0_f64;
    let mut worst_on = 0.0_f64;
    for f in [2.0, 8.0, 33.0, 115.0, 440.0, 2100.0] {
        let w = 2.0 * PI * f;
        let cf = coupling_factors(&p, w).expect("couplings");

        // Stored-record (offline) wiring.
        let sol = solve_lossy_io(&p, w, &WiringSpec::offline(r, LossBudgetSpec::lossless()))
            .expect("offline solve");
        let (t_b, t_vp, t_p) = lossless_offline_blocks(&p, w).expect("blocks");
        let epr = sol
            .contributions
            .iter()
            .find(|ct| ct.label == "epr")
            .expect("epr block");
        let v = sol
            .contributions
            .iter()
            .find(|ct| ct.label == "cavity_vacuum")
            .expect("source block");
        for i in 0..2 {
            for j in 0..2 {
                // EPR columns are (a₁, a₂, b₁, b₂); the record only sees b.
                worst_off = worst_off
                    .max((epr.transfer[(i, 2 + j)] - t_b[(i, j)]).norm())
                    .max(epr.transfer[(i, j)].norm())
                    .max((v.transfer[(i, j)] - t_vp[(i, j)]).norm());
            }
        }
        let sig = nalgebra::Vector2::new(
            sol.signal[0] * C64::from(cf.x_sql_m),
            sol.signal[1] * C64::from(cf.x_sql_m),
        );
        let phase = sig[1] / sig[1].norm() / (t_p[1] / t_p[1].norm());
        worst_off = worst_off.max((sig.map(|z| z / phase) - t_p).norm());

        // Feedforward (online) wiring.
        let sol = solve_lossy_io(&p, w, &WiringSpec::online(r, LossBudgetSpec::lossless()))
            .expect("online solve");
        let (t_v, t_z, t) = lossless_online_blocks(&p, w).expect("blocks");
        let epr = sol
            .contributions
            .iter()
            .find(|ct| ct.label == "epr")
            .expect("epr block");
        let v = sol
            .contributions
            .iter()
            .find(|ct| ct.label == "cavity_vacuum")
            .expect("source block");
        for i in 0..2 {
            // The teleported squeezed pair z₁ = (b₁−a₁)/√2, z₂ = (a₂+b₂)/√2
            // carries √2·T_z; the anti-squeezed pair w₁ = (a₁+b₁)/√2,
            // w₂ = (a₂−b₂)/√2 must cancel at the ideal feedforward gains.
            let u1 = (epr.transfer[(i, 2)] - epr.transfer[(i, 0)]) / SQRT_2;
            let u2 = (epr.transfer[(i, 1)] + epr.transfer[(i, 3)]) / SQRT_2;
            let w1 = (epr.transfer[(i, 0)] + epr.transfer[(i, 2)]) / SQRT_2;
            let w2 = (epr.transfer[(i, 1)] - epr.transfer[(i, 3)]) / SQRT_2;
            worst_on = worst_on
                .max((u1 - t_z[(i, 0)] * C64::from(SQRT_2)).norm())
                .max((u2 - t_z[(i, 1)] * C64::from(SQRT_2)).norm())
                .max(w1.norm())
                .max(w2.norm());
            for j in 0..2 {
                worst_on = worst_on.max((v.transfer[(i, j)] - t_v[(i, j)]).norm());
            }
        }
        let sig = nalgebra::Vector2::new(
            sol.signal[0] * C64::from(cf.x_sql_m),
            sol.signal[1] * C64::from(cf.x_sql_m),
        );
        let phase = sig[1] / sig[1].norm() / (t[1] / t[1].norm());
        worst_on = worst_on.max((sig.map(|z| z / phase) - t).norm());
    }
    assert!(
        worst_off <= 1e-10,
        "[FAIL] criterion 5: stored-record blocks missed by {worst_off:.2e} (bar 1e-10)"
    );
    assert!(
        worst_on <= 1e-10,
        "[FAIL] criterion 5: feedforward blocks missed by {worst_on:.2e} (bar 1e-10)"
    );
    println!(
        "[PASS] criterion 5: solver reproduces both block sets, worst abs {:.2e}",
        worst_off.max(worst_on)
    );
}

#[test]
fn criterion_06_reference_figures_of_merit() {
    // Γ for the reference plant ≈ 1, and the broadband minimum of
    // S_x/x²_SQL at the fixed optimal angle equals 1/(2√Γ) within 2%.
    let p = reference_plant();
    let fom = figures_of_merit(&p);
    assert!(
        (fom.gamma - 1.0).abs() <= 0.05,
        "[FAIL] criterion 6: Γ = {:.6}, outside 1.00 ± 0.05",
        fom.gamma
    );
    let curve = online_sensitivity(
        &p,
        LossBudgetSpec::lossless(),
        EprState::Infinite,
        HomodyneAngle::Optimal,
        &default_grid(),
    )
    .expect("online curve");
    let min_ratio = curve
        .freqs_hz
        .iter()
        .zip(&curve.total_psd_m2_per_hz)
        .map(|(f, s)| {
            s / coupling_factors(&p, 2.0 * PI * f)
                .expect("couplings")
                .x_sql_sq()
        })
        .fold(f64::INFINITY, f64::min);
    let want = 1.0 / (2.0 * fom.gamma.sqrt());
    let rel = (min_ratio - want).abs() / want;
    assert!(
        rel <= 0.02,
        "[FAIL] criterion 6: min S_x/x²_SQL = {min_ratio:.6} vs 1/(2√Γ) = {want:.6} (rel {rel:.2e}, bar 2%)"
    );
    println!(
        "[PASS] criterion 6: Γ = {:.6}, min S_x/x²_SQL = 1/(2√Γ) within {:.2e}",
        fom.gamma, rel
    );
}

#[test]
fn criterion_07_sql_threshold() {
    // Γ = 0.26 must dip below the SQL; Γ = 0.24 must not. Circulating power
    // sets Γ ∝ P², so scale P by √(target/Γ₀).
    let p0 = reference_plant();
    let g0 = gamma_figure(&p0).gamma_val;
    let min_ratio = |target: f64| -> (f64, f64) {
        let p = PlantParams::from_power(
            200.0,
            4000.0,
            3e6 * (target / g0).sqrt(),
            2e-6,
            p0.bandwidth_rad,
        )
        .expect("valid plant");
        let g = gamma_figure(&p).gamma_val;
        assert!(
            (g - target).abs() < 1e-10,
            "[FAIL] criterion 7: power scaling produced Γ = {g}, wanted {target}"
        );
        let curve = online_sensitivity(
            &p,
            LossBudgetSpec::lossless(),
            EprState::Infinite,
            HomodyneAngle::Optimal,
            &default_grid(),
        )
        .expect("online curve");
        let mn = curve
            .freqs_hz
            .iter()
            .zip(&curve.total_psd_m2_per_hz)
            .map(|(f, s)| {
                s / coupling_factors(&p, 2.0 * PI * f)
                    .expect("couplings")
                    .x_sql_sq()
            })
            .fold(f64::INFINITY, f64::min);
        (g, mn)
    };
    let (_, dip) = min_ratio(0.26);
    assert!(
        dip < 1.0,
        "[FAIL] criterion 7: Γ = 0.26 curve never dips below the SQL (min ratio {dip:.4})"
    );
    let (_, no_dip) = min_ratio(0.24);
    assert!(
        no_dip >= 1.0,
        "[FAIL] criterion 7: Γ = 0.24 curve dips below the SQL (min ratio {no_dip:.4})"
    );
    println!(
        "[PASS] criterion 7: SQL threshold at Γ = 1/4 (min ratios {dip:.4} / {no_dip:.4})"
    );
}

#[test]
fn criterion_08_enhancement_ratio_wideband_limit() {
    // enhancement_ratio(10³, Γ) = (1+Γ)/2 within 0.1% for Γ ∈ {1/4, 1, 4}.
    for g in [0.25, 1.0, 4.0] {
        let got = enhancement_ratio(1e3, g);
        let want = (1.0 + g) / 2.0;
        let rel = (got / want - 1.0).abs();
        assert!(
            rel <= 1e-3,
            "[FAIL] criterion 8: ratio(10³, {g}) = {got:.6} vs (1+Γ)/2 = {want:.6} (rel {rel:.2e}, bar 0.1%)"
        );
    }
    println!("[PASS] criterion 8: enhancement ratio reaches (1+Γ)/2 at ω = 10³ for Γ ∈ {{¼, 1, 4}}");
}

#[test]
fn criterion_09_lossy_online_optimized_equals_offline_wiener() {
    // Lossy reference preset: per-frequency optimized feedforward gains must
    // reproduce the Wiener-conditioned offline curve to 1e-6 everywhere.
    let p = reference_plant();
    let losses = reference_losses();
    let epr = EprState::from_db(15.0).expect("valid squeezing");
    let grid = default_grid();
    let online = online_sensitivity_optimized(&p, losses, epr, HomodyneAngle::Optimal, &grid)
        .expect("online optimized");
    let offline = offline_sensitivity(&p, losses, epr, HomodyneAngle::Optimal, &grid)
        .expect("offline wiener");
    let worst = max_rel(&online.total_psd_m2_per_hz, &offline.total_psd_m2_per_hz);
    assert!(
        worst <= tol::LOSSY_EQUIVALENCE_REL,
        "[FAIL] criterion 9: optimized feedforward vs Wiener conditioning differ by {worst:.2e} (bar {:.0e})",
        tol::LOSSY_EQUIVALENCE_REL
    );
    println!(
        "[PASS] criterion 9: lossy online-optimized equals offline-Wiener, worst rel {worst:.2e}"
    );
}

#[test]
fn criterion_10_lossy_low_frequency_slope() {
    // Target: amplitude slope −1 ± 0.3 over [1, 3] Hz for the lossy
    // reference. The engine's faithful model contradicts this; see the
    // failure message for the measured values and the reason.
    let p = reference_plant();
    let losses = reference_losses();
    let epr = EprState::from_db(15.0).expect("valid squeezing");
    let grid = FrequencyGrid::new(1.0, 3.0, 9).expect("valid grid");
    let slope = |curve: &tsm::budget::SensitivityCurve| {
        let asd = curve.asd();
        (asd[8].ln() - asd[0].ln()) / (curve.freqs_hz[8].ln() - curve.freqs_hz[0].ln())
    };
    let offline = offline_sensitivity(&p, losses, epr, HomodyneAngle::Optimal, &grid)
        .expect("offline wiener");
    let online = online_sensitivity(&p, losses, epr, HomodyneAngle::Optimal, &grid)
        .expect("online fixed gains");
    let s_off = slope(&offline);
    let s_on = slope(&online);
    assert!(
        (s_off + 1.0).abs() <= 0.3,
        "[FAIL] criterion 10: measured amplitude log-log slope over [1, 3] Hz is {s_off:.3} for the \
         conditioned lossy curve ({s_on:.3} for fixed-gain feedforward), outside −1 ± 0.3. \
         The Ω⁻¹ law is not a property of this noise model at 15 dB squeezing: below ~10 Hz the \
         dominant term is the residual anti-squeezed EPR sideband entering through the \
         |K_z|² ∝ Ω⁻² kernel, which forces the amplitude curve to slope −2 (the conditioned curve \
         briefly overshoots to −2.1 while the Wiener filters rotate). A local slope of −1 exists \
         only in the crossover band near 30 Hz. Removing the squeezing ceiling (r → ∞) restores \
         Ω⁻¹ at these frequencies, so the stated law describes the squeeze-unlimited regime, not \
         the 15 dB preset it is attached to."
    );
    println!("[PASS] criterion 10: lossy low-frequency amplitude slope {s_off:.3} within −1 ± 0.3");
}

#[test]
fn criterion_11_position_to_speed_ratio_at_8hz() {
    // Lossless amplitude ratio √(S_pm / S_sm,φ_opt) at 8 Hz must be ≥ 5.
    let p = reference_plant();
    let grid = grid_starting_at(8.0);
    let s_pm = position_meter_sensitivity(&p, &grid).expect("position meter")
        .total_psd_m2_per_hz[0];
    let s_sm = online_sensitivity(
        &p,
        LossBudgetSpec::lossless(),
        EprState::Infinite,
        HomodyneAngle::Optimal,
        &grid,
    )
    .expect("online curve")
    .total_psd_m2_per_hz[0];
    let ratio = (s_pm / s_sm).sqrt();
    assert!(
        ratio >= 5.0,
        "[FAIL] criterion 11: amplitude ratio at 8 Hz is {ratio:.3}, below 5"
    );
    println!("[PASS] criterion 11: 8 Hz amplitude improvement {ratio:.3} ≥ 5");
}

#[test]
fn criterion_12_squeezing_saturation_15_to_25_db() {
    // Target: raising generated squeezing from 15 dB to 25 dB changes the
    // lossy sensitivity by < 5% at every grid point. The model contradicts
    // this at low frequency; see the failure message.
    let p = reference_plant();
    let losses = reference_losses();
    let grid = default_grid();
    let s15 = offline_sensitivity(
        &p,
        losses,
        EprState::from_db(15.0).expect("valid"),
        HomodyneAngle::Optimal,
        &grid,
    )
    .expect("15 dB curve");
    let s25 = offline_sensitivity(
        &p,
        losses,
        EprState::from_db(25.0).expect("valid"),
        HomodyneAngle::Optimal,
        &grid,
    )
    .expect("25 dB curve");
    let mut worst = (0.0_f64, 0.0_f64);
    for i in 0..s15.freqs_hz.len() {
        let rel = (s15.total_psd_m2_per_hz[i] - s25.total_psd_m2_per_hz[i]).abs()
            / s15.total_psd_m2_per_hz[i];
        if rel > worst.1 {
            worst = (s15.freqs_hz[i], rel);
        }
    }
    assert!(
        worst.1 < 0.05,
        "[FAIL] criterion 12: raising squeezing 15 dB → 25 dB changes the conditioned lossy \
         sensitivity by up to {:.1}% at {:.2} Hz, far beyond the 5% saturation bound. \
         Saturation genuinely holds above ~20 Hz, where loss-injected vacuum (ε_in, ε_out, arm \
         loss) dominates and more squeezing cannot help; but at 15 dB the low-frequency noise is \
         still the finite-squeezing EPR residual (∝ e⁻²ʳ·Ω⁻²), so another 10 dB keeps paying off \
         below ~20 Hz. A '15 dB is saturated' statement would require the loss floor to dominate \
         down to 1 Hz, which 1% port losses and 30 ppm arm loss do not produce.",
        100.0 * worst.1,
        worst.0
    );
    println!(
        "[PASS] criterion 12: 15 → 25 dB changes sensitivity by at most {:.2}% (bar 5%)",
        100.0 * worst.1
    );
}

#[test]
fn criterion_13_amplifier_benefit_at_10hz() {
    // 20 dB of phase-sensitive readout amplification must strictly improve
    // the lossy sensitivity at 10 Hz (it dilutes the detection-loss vacuum).
    let p = reference_plant();
    let epr = EprState::from_db(15.0).expect("valid");
    let grid = grid_starting_at(10.0);
    let mut amped = reference_losses();
    amped.amplifier_gain_db = 20.0;
    let at = |losses: LossBudgetSpec| -> (f64, f64) {
        let on = online_sensitivity(&p, losses, epr, HomodyneAngle::Optimal, &grid)
            .expect("online curve")
            .total_psd_m2_per_hz[0];
        let off = offline_sensitivity(&p, losses, epr, HomodyneAngle::Optimal, &grid)
            .expect("offline curve")
            .total_psd_m2_per_hz[0];
        (on, off)
    };
    let (on_plain, off_plain) = at(reference_losses());
    let (on_amped, off_amped) = at(amped);
    assert!(
        on_amped < on_plain,
        "[FAIL] criterion 13: amplified online sensitivity {on_amped:.6e} is not strictly below {on_plain:.6e} at 10 Hz"
    );
    assert!(
        off_amped < off_plain,
        "[FAIL] criterion 13: amplified offline sensitivity {off_amped:.6e} is not strictly below {off_plain:.6e} at 10 Hz"
    );
    let ratio_on = on_amped / on_plain;
    let ratio_off = off_amped / off_plain;
    assert!(
        (ratio_on - 0.9951).abs() < 2e-3 && (ratio_off - 0.9901).abs() < 2e-3,
        "[FAIL] criterion 13: improvement ratios {ratio_on:.4}/{ratio_off:.4} moved off the pinned 0.9951/0.9901"
    );
    println!(
        "[PASS] criterion 13: 20 dB amplifier improves 10 Hz sensitivity (online ×{ratio_on:.4}, offline ×{ratio_off:.4})"
    );
}

#[test]
fn criterion_14_property_suite() {
    // Deterministic property run (the randomized proptest suite lives in
    // tests/properties.rs and runs alongside this target).
    let p = reference_plant();
    let losses = reference_losses();
    let folded = losses.fold_into(&p);
    let phi_opt = HomodyneAngle::Optimal.resolve(&p).expect("angle");
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_97ed);

    // (a) PSD Hermiticity/positivity fuzz, 1000 random cases: EPR spectra
    // stay Hermitian-PSD and solved budgets yield finite, non-negative
    // measured noise powers at random angles/frequencies/losses.
    for k in 0..1000 {
        let r = rng.random_range(0.0..3.0);
        let epr = EprState::from_r(r).expect("valid r");
        let psd = epr_psd(&epr).expect("epr psd");
        let min_eig = psd.min_eigenvalue();
        assert!(
            min_eig >= tol::PSD_MIN_EIG * (2.0 * r).cosh(),
            "[FAIL] criterion 14a: EPR spectrum lost positivity (min eig {min_eig:.2e}, case {k})"
        );
        let f = 10f64.powf(rng.random_range(0.0..5000f64.log10()));
        let case_losses = LossBudgetSpec {
            eps_in: rng.random_range(0.0..0.3),
            eps_out: rng.random_range(0.0..0.3),
            arm_loss_roundtrip_ppm: rng.random_range(0.0..100.0),
            amplifier_gain_db: 0.0,
        };
        let case_p = case_losses.fold_into(&p);
        let wiring = if k % 2 == 0 {
            WiringSpec::online(epr, case_losses)
        } else {
            WiringSpec::offline(epr, case_losses)
        };
        let budget = solve_lossy_io(&case_p, 2.0 * PI * f, &wiring).expect("solve");
        let h = HomodyneVector::new(rng.random_range(0.3..PI - 0.3));
        let power = homodyne_noise_power(&budget, &h).expect("power");
        assert!(
            power.is_finite() && power >= 0.0,
            "[FAIL] criterion 14a: non-physical noise power {power:.3e} (case {k}, f = {f:.2} Hz)"
        );
    }

    // (b) Conditioning never hurts: for 200 random genuinely-joint spectra
    // the conditioned power is within [0, unconditioned].
    for k in 0..200 {
        let a = ComplexMat::from_fn(3, 3, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let m = &a * a.adjoint();
        let y = m[(0, 0)].re;
        let cross = ComplexMat::from_row_slice(1, 2, &[m[(0, 1)], m[(0, 2)]]);
        let alpha = ComplexMat::from_row_slice(2, 2, &[m[(1, 1)], m[(1, 2)], m[(2, 1)], m[(2, 2)]]);
        let (cond, _) = condition_offline(y, &cross, &alpha).expect("conditioning");
        assert!(
            cond <= y * (1.0 + 1e-9) && cond >= 0.0,
            "[FAIL] criterion 14b: conditioning raised the noise ({cond:.6e} vs {y:.6e}, case {k})"
        );
    }

    // (c) Feedforward sensitivity is monotone non-increasing in squeezing at
    // 10 fixed frequencies (lossy reference, fixed gains).
    let freqs: Vec<f64> = (0..10)
        .map(|i| 2.0 * (1000.0f64).powf(i as f64 / 9.0))
        .collect();
    for f in &freqs {
        let grid = grid_starting_at(*f);
        let ladder = [0.0, 3.0, 6.0, 10.0, 15.0, 20.0, 25.0, 40.0];
        let mut prev = f64::INFINITY;
        for db in ladder {
            let epr = EprState::from_db(db).expect("valid");
            let s = online_sensitivity(&folded, losses, epr, HomodyneAngle::Fixed(phi_opt), &grid)
                .expect("online curve")
                .total_psd_m2_per_hz[0];
            assert!(
                s <= prev * (1.0 + 1e-9),
                "[FAIL] criterion 14c: sensitivity rose with squeezing at {f:.2} Hz ({db} dB: {s:.6e} > {prev:.6e})"
            );
            prev = s;
        }
    }

    // (d) CSV round-trip determinism: same scenario renders byte-identical
    // twice, and parse → re-render is the identity.
    let mut cfg = ScenarioConfig::preset("reference-lossy").expect("preset");
    cfg.points = 60;
    let once = render_curve_csv(&cfg).expect("csv");
    let twice = render_curve_csv(&cfg).expect("csv");
    assert!(
        once == twice,
        "[FAIL] criterion 14d: repeated renders differ"
    );
    let mut rebuilt = String::new();
    for (i, line) in once.lines().enumerate() {
        if i == 0 {
            rebuilt.push_str(line);
        } else {
            let fields: Vec<String> = line
                .split(',')
                .map(|x| format_field(x.parse::<f64>().expect("numeric field")))
                .collect();
            rebuilt.push_str(&fields.join(","));
        }
        rebuilt.push('\n');
    }
    assert!(
        once == rebuilt,
        "[FAIL] criterion 14d: parse → re-render is not the identity"
    );

    println!("[PASS] criterion 14: property suite (PSD fuzz ×1000, conditioning, squeezing monotonicity ×10, CSV round-trip)");
}

/// Companion sanity check used while reading criterion 11: the published
/// comparison baseline is also reachable through the CLI compare pipeline.
#[test]
fn compare_pipeline_agrees_with_direct_ratio() {
    let p = reference_plant();
    let grid = grid_starting_at(8.0);
    let s_pm = position_meter_sensitivity(&p, &grid).expect("pm").total_psd_m2_per_hz[0];
    let sql = sql_curve(&p, &grid).expect("sql").total_psd_m2_per_hz[0];
    assert!(
        s_pm >= sql,
        "position meter cannot beat the free-mass quantum limit at 8 Hz"
    );
}
