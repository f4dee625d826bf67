//! Writes CSV, plot-data and SVG contour files for an exact sweep into a temporary directory
//! (or the directory given as the first argument).

use dejmps_sim::channels::NoiseConfig;
use dejmps_sim::dejmps::ProtocolConfig;
use dejmps_sim::mcengine::{sweep, Field, GridSpec, SimulationMode};
use dejmps_sim::report::{emit_plots, extract_contours, write_surface, OutputFormat, Slice};

fn main() -> dejmps_sim::Result<()> {
    let dir = std::env::args().nth(1).map(std::path::PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let prefix = dir.join("dejmps_exact");
    let surface = sweep(&GridSpec::default(), NoiseConfig::default(), &ProtocolConfig::default(), SimulationMode::Exact)?;

    let mut contours = extract_contours(&surface, Field::DeltaF, &[0.03, 0.06, 0.1]);
    contours.extend(extract_contours(&surface, Field::YPurify, &[0.6, 0.7, 0.8, 0.9]));
    for set in &contours {
        println!("{} = {}: {} polyline(s)", set.field, set.level, set.polylines.len());
    }

    let csv = prefix.with_extension("csv");
    write_surface(&surface, OutputFormat::Csv, &csv, None)?;
    println!("wrote {}", csv.display());
    for path in emit_plots(&surface, &contours, &[Slice::Gamma(0.0), Slice::P(0.1)], &prefix)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
