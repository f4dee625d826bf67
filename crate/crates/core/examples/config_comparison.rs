//! Noise-target and placement-objective combinations against the headline values.

use dejmps_sim::mcengine::GridSpec;
use dejmps_sim::report::compare_configurations;

fn main() -> dejmps_sim::Result<()> {
    let table = compare_configurations(&GridSpec::default())?;
    print!("{table}");
    Ok(())
}
