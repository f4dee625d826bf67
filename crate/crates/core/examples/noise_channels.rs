//! Amplitude damping and dephasing on one half, or both halves, of a Bell pair.

use dejmps_sim::bell::{bell_coefficients, bell_state, BellState};
use dejmps_sim::channels::{amplitude_damping, apply_pair_noise, dephasing, NoiseConfig, NoiseParams, NoiseTarget};
use dejmps_sim::qmat::pure_fidelity;

fn main() -> dejmps_sim::Result<()> {
    for (name, ch) in [("amplitude damping 0.3", amplitude_damping(0.3)?), ("dephasing 0.3", dephasing(0.3)?)] {
        let report = ch.cptp_check();
        println!("{name}: completeness residual {:.2e}, passed {}", report.residual, report.passed);
    }

    let phi = bell_state(BellState::PhiPlus);
    let pair = phi.projector();
    println!("\n{:>6} {:>6} {:>10} {:>12}", "gamma", "p", "F (both)", "F (second)");
    for (gamma, p) in [(0.0, 0.1), (0.1, 0.0), (0.1, 0.1), (0.2, 0.2)] {
        let params = NoiseParams::new(gamma, p)?;
        let both = apply_pair_noise(&pair, params, NoiseConfig::default())?;
        let second = apply_pair_noise(
            &pair,
            params,
            NoiseConfig {
                target: NoiseTarget::SecondOnly,
                ..NoiseConfig::default()
            },
        )?;
        println!(
            "{gamma:>6} {p:>6} {:>10.6} {:>12.6}",
            pure_fidelity(&both, &phi)?,
            pure_fidelity(&second, &phi)?
        );
    }

    let noisy = apply_pair_noise(&pair, NoiseParams::new(0.2, 0.2)?, NoiseConfig::default())?;
    println!("\nBell coefficients at (0.2, 0.2): {}", bell_coefficients(&noisy)?);
    Ok(())
}
