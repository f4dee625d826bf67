//! Bell basis, Werner states and twirling.

use dejmps_sim::bell::{bell_coefficients, bell_diagonal, bell_state, twirl_projection, werner, BellState};
use dejmps_sim::qmat::{pure_fidelity, DensityMatrix};

fn main() -> dejmps_sim::Result<()> {
    for which in BellState::ALL {
        let rho = bell_state(which).projector();
        println!("{which}: coefficients {}", bell_coefficients(&rho)?);
    }

    let w = werner(0.8)?;
    let rho = bell_diagonal(&w);
    let phi = bell_state(BellState::PhiPlus);
    println!("werner(0.8) = {w}, fidelity {:.6}, purity {:.6}", pure_fidelity(&rho, &phi)?, rho.purity());

    // |00><00| is not Bell-diagonal; twirling keeps only the diagonal part
    let product = DensityMatrix::new(dejmps_sim::qmat::ComplexMatrix::diag(&[1.0, 0.0, 0.0, 0.0]))?;
    let twirled = twirl_projection(&product)?;
    println!(
        "|00><00|: fidelity {:.3} -> {:.3}, purity {:.3} -> {:.3}",
        pure_fidelity(&product, &phi)?,
        pure_fidelity(&twirled, &phi)?,
        product.purity(),
        twirled.purity()
    );
    Ok(())
}
