use tsm::budget::{offline_sensitivity, FrequencyGrid, HomodyneAngle};
use tsm::plant::PlantParams;
use tsm::teleport::{EprState, LossBudgetSpec};

fn main() -> tsm::Result<()> {
    let plant = PlantParams::from_power(200.0, 4000.0, 3e6, 2e-6,
        2.0 * std::f64::consts::PI * 115.0)?;
    let losses = LossBudgetSpec { eps_in: 0.01, eps_out: 0.01,
        arm_loss_roundtrip_ppm: 30.0, amplifier_gain_db: 0.0 };
    let grid = FrequencyGrid::new(1.0, 5000.0, 400)?;
    let curve = offline_sensitivity(&plant, losses,
        EprState::from_db(15.0)?, HomodyneAngle::Optimal, &grid)?;
    println!("{:.3e} m/√Hz at {:.1} Hz", curve.asd()[0], curve.freqs_hz[0]);
    Ok(())
}
