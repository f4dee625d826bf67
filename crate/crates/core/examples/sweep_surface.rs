//! Exact sweep of the default grid and its summary.
//!
//! Pass `mc-full` or `mc-fast` as the first argument to sample instead.

use dejmps_sim::channels::NoiseConfig;
use dejmps_sim::dejmps::ProtocolConfig;
use dejmps_sim::mcengine::{summarize, sweep, Field, GridSpec, SimulationMode};

fn main() -> dejmps_sim::Result<()> {
    let mode: SimulationMode = std::env::args().nth(1).as_deref().unwrap_or("exact").parse()?;
    let grid = GridSpec::default();
    let start = std::time::Instant::now();
    let surface = sweep(&grid, NoiseConfig::default(), &ProtocolConfig::default(), mode)?;
    println!("{} cells in {:.2?} ({mode})\n", surface.cells.len(), start.elapsed());
    print!("{}", summarize(&surface, &[(Field::DeltaF, 0.03), (Field::YPurify, 0.7)]));

    println!("\ndelta_f along the diagonal:");
    for k in (0..grid.steps_gamma).step_by(4) {
        let c = surface.cell(k, k);
        println!("  ({:.2}, {:.2})  {:+.5}", c.gamma, c.p, c.delta_f.unwrap_or(f64::NAN));
    }
    Ok(())
}
