//! A single grid cell in each simulation mode.

use dejmps_sim::channels::{NoiseConfig, NoiseParams};
use dejmps_sim::dejmps::ProtocolConfig;
use dejmps_sim::mcengine::{derive_cell_seed, run_cell, SimulationMode};

fn main() -> dejmps_sim::Result<()> {
    let params = NoiseParams::new(0.0, 0.1)?;
    let cfg = ProtocolConfig::default();
    let seed = derive_cell_seed(0, 0, 10);
    for mode in [SimulationMode::Exact, SimulationMode::McFast, SimulationMode::McFull] {
        let c = run_cell(params, NoiseConfig::default(), &cfg, mode, 10_000, seed)?;
        println!(
            "{mode:<8} F_noisy {:.4}  F_purify {:.6}  Y {:.4} ± {:.4}  ({} / {})",
            c.f_noisy,
            c.f_purify.unwrap_or(f64::NAN),
            c.y_purify,
            c.stderr_y,
            c.successes,
            c.trials
        );
    }
    Ok(())
}
