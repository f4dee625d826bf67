//! One circuit-level round on the four-qubit register, checked against the recurrence.

use dejmps_sim::bell::{bell_coefficients, bell_diagonal, BellCoefficients};
use dejmps_sim::channels::{apply_pair_noise, NoiseConfig, NoiseParams};
use dejmps_sim::dejmps::{
    circuit_frame, circuit_round, permute_coefficients, recurrence_frame, recurrence_step, PermutationObjective,
    ProtocolConfig, SuccessCriterion,
};
use dejmps_sim::bell::{bell_state, BellState};

fn main() -> dejmps_sim::Result<()> {
    let lam = BellCoefficients::new([0.75, 0.05, 0.15, 0.05])?;
    let rho = bell_diagonal(&lam);
    let cfg = ProtocolConfig::default();
    let out = circuit_round(&rho, &rho, &cfg)?;
    println!("outcome distribution (m2 m3 = 00, 01, 10, 11): {:?}", out.outcome_distribution);
    println!("success {:.10}, fidelity {:.10}", out.success_probability, out.fidelity().unwrap_or(f64::NAN));

    let (placed, _) = permute_coefficients(&recurrence_frame(&lam), cfg.objective);
    let analytic = recurrence_step(&placed);
    println!("recurrence  {:.10}, fidelity {:.10}", analytic.round_yield, analytic.fidelity_out);
    if let Some(post) = &out.post_state {
        println!(
            "survivor {} vs recurrence {}",
            bell_coefficients(post)?,
            circuit_frame(&analytic.coefficients_out)
        );
    }

    let both_zero = ProtocolConfig::new(PermutationObjective::Fidelity, SuccessCriterion::BothZero, 1)?;
    println!("both-zero success {:.6}", circuit_round(&rho, &rho, &both_zero)?.success_probability);

    // amplitude damping leaves coherences outside the Bell diagonal
    let noisy = apply_pair_noise(&bell_state(BellState::PhiPlus).projector(), NoiseParams::new(0.2, 0.05)?, NoiseConfig::default())?;
    let out = circuit_round(&noisy, &noisy, &cfg)?;
    println!(
        "\nnoisy pair at (0.2, 0.05): success {:.6}, fidelity {:.6}",
        out.success_probability,
        out.fidelity().unwrap_or(f64::NAN)
    );
    Ok(())
}
