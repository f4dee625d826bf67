//! The analytic Bell-coefficient recurrence, one round and several.

use dejmps_sim::bell::{werner, BellCoefficients};
use dejmps_sim::dejmps::{iterate_rounds, permute_coefficients, recurrence_step, PermutationObjective};

fn main() -> dejmps_sim::Result<()> {
    let lam = BellCoefficients::new([0.7, 0.1, 0.1, 0.1])?;
    let step = recurrence_step(&lam);
    println!("in  {lam}\nout {}  yield {:.6}", step.coefficients_out, step.round_yield);

    let skewed = BellCoefficients::new([0.82, 0.18, 0.0, 0.0])?;
    for obj in [PermutationObjective::Fidelity, PermutationObjective::Yield, PermutationObjective::PaperLiteral] {
        let (placed, perm) = permute_coefficients(&skewed, obj);
        let out = recurrence_step(&placed);
        println!(
            "{obj:<14} placement {perm:?} -> F {:.6}, yield {:.6}",
            out.fidelity_out, out.round_yield
        );
    }

    println!("\nWerner 0.6, five rounds under the fidelity objective:");
    let t = iterate_rounds(&werner(0.6)?, 5, PermutationObjective::Fidelity)?;
    for (k, r) in t.rounds.iter().enumerate() {
        println!("  round {}: F = {:.6}, yield {:.6}", k + 1, r.fidelity_out, r.round_yield);
    }
    println!(
        "  cumulative yield {:.6}, pairs consumed {}",
        t.cumulative_yield, t.pair_cost
    );
    Ok(())
}
