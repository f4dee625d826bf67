//! Command-line configuration, surface export, contours and plot files.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;

use crate::channels::{ChannelOrder, NoiseConfig, NoiseTarget};
use crate::dejmps::{PermutationObjective, ProtocolConfig, SuccessCriterion};
use crate::error::{Error, Result};
use crate::mcengine::{summarize, sweep, CellStats, Field, GridSpec, SimulationMode, Summary, SweepSurface};

pub const CSV_HEADER: &str = "gamma,p,f_noisy,f_purify,y_purify,delta_f,delta_y,stderr_f,stderr_y,successes,trials";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.extension())
    }
}

/// A cross-section through the surface at fixed γ or fixed p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    Gamma(f64),
    P(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourRequest {
    pub field: Field,
    pub levels: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub protocol: ProtocolConfig,
    pub noise: NoiseConfig,
    pub mode: SimulationMode,
    /// Output path prefix; `None` writes the surface to stdout.
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub contours: Vec<ContourRequest>,
    pub slices: Vec<Slice>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            protocol: ProtocolConfig::default(),
            noise: NoiseConfig::default(),
            mode: SimulationMode::McFull,
            out: None,
            format: OutputFormat::Csv,
            contours: Vec::new(),
            slices: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Axis {
    min: f64,
    max: f64,
    steps: usize,
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, steps] = parts[..] else {
        return Err(format!("expected MIN:MAX:STEPS, got `{s}`"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number"));
    let (min, max) = (num(min)?, num(max)?);
    let steps: usize = steps.trim().parse().map_err(|_| format!("`{steps}` is not a step count"))?;
    if !(0.0..=1.0).contains(&min) || !(0.0..=1.0).contains(&max) {
        return Err("bounds must lie in [0, 1]".into());
    }
    if min > max {
        return Err(format!("min {min} exceeds max {max}"));
    }
    if steps < 2 {
        return Err("at least 2 steps are required".into());
    }
    Ok(Axis { min, max, steps })
}

fn parse_choice<T: Copy + fmt::Display>(s: &str, choices: &[T]) -> std::result::Result<T, String> {
    choices.iter().copied().find(|c| c.to_string() == s).ok_or_else(|| {
        let names: Vec<String> = choices.iter().map(|c| c.to_string()).collect();
        format!("`{s}` is not one of {}", names.join(", "))
    })
}

fn parse_mode(s: &str) -> std::result::Result<SimulationMode, String> {
    parse_choice(s, &[SimulationMode::Exact, SimulationMode::McFast, SimulationMode::McFull])
}

fn parse_objective(s: &str) -> std::result::Result<PermutationObjective, String> {
    use PermutationObjective::*;
    parse_choice(s, &[Fidelity, Yield, PaperLiteral, None])
}

fn parse_criterion(s: &str) -> std::result::Result<SuccessCriterion, String> {
    parse_choice(s, &[SuccessCriterion::Coincident, SuccessCriterion::BothZero])
}

fn parse_order(s: &str) -> std::result::Result<ChannelOrder, String> {
    parse_choice(s, &[ChannelOrder::AdFirst, ChannelOrder::DephFirst])
}

fn parse_target(s: &str) -> std::result::Result<NoiseTarget, String> {
    parse_choice(s, &[NoiseTarget::Both, NoiseTarget::SecondOnly])
}

fn parse_format(s: &str) -> std::result::Result<OutputFormat, String> {
    parse_choice(s, &[OutputFormat::Csv, OutputFormat::Json])
}

fn parse_contour(s: &str) -> std::result::Result<ContourRequest, String> {
    let (field, levels) = s.split_once('=').ok_or_else(|| format!("expected FIELD=LEVEL[,LEVEL...], got `{s}`"))?;
    let field: Field = field.parse().map_err(|e: Error| e.to_string())?;
    if field == Field::FNoisy {
        return Err("contours are available for f_purify, y_purify, delta_f and delta_y".into());
    }
    let levels = levels
        .split(',')
        .map(|l| l.trim().parse::<f64>().map_err(|_| format!("`{l}` is not a level")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if levels.iter().any(|l| !l.is_finite()) {
        return Err("levels must be finite".into());
    }
    Ok(ContourRequest { field, levels })
}

fn parse_slice(s: &str) -> std::result::Result<Slice, String> {
    let (axis, value) = s.split_once('=').ok_or_else(|| format!("expected gamma=V or p=V, got `{s}`"))?;
    let v: f64 = value.trim().parse().map_err(|_| format!("`{value}` is not a number"))?;
    match axis.trim() {
        "gamma" => Ok(Slice::Gamma(v)),
        "p" => Ok(Slice::P(v)),
        other => Err(format!("unknown slice axis `{other}`")),
    }
}

/// Sweep the (γ, p) noise plane and export DEJMPS purification surfaces.
#[derive(Parser, Debug)]
#[command(name = "dejmps", version)]
struct Cli {
    /// Amplitude-damping axis as MIN:MAX:STEPS
    #[arg(long, value_name = "MIN:MAX:STEPS", default_value = "0:0.2:21", value_parser = parse_axis)]
    gamma: Axis,

    /// Dephasing axis as MIN:MAX:STEPS
    #[arg(long, value_name = "MIN:MAX:STEPS", default_value = "0:0.2:21", value_parser = parse_axis)]
    p: Axis,

    /// Trials per grid cell
    #[arg(long, value_name = "N", default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    /// Base seed for the per-cell random streams
    #[arg(long, value_name = "S", default_value_t = 0)]
    seed: u64,

    /// Purification rounds per trial
    #[arg(long, value_name = "K", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    rounds: u32,

    /// exact | mc-fast | mc-full
    #[arg(long, default_value = "mc-full", value_parser = parse_mode)]
    mode: SimulationMode,

    /// Coefficient placement before each round: fidelity | yield | paper-literal | none
    #[arg(long, default_value = "fidelity", value_parser = parse_objective)]
    objective: PermutationObjective,

    /// Accepted measurement outcomes: coincident | both-zero
    #[arg(long, default_value = "coincident", value_parser = parse_criterion)]
    criterion: SuccessCriterion,

    /// Channel order on each noisy qubit: ad-first | deph-first
    #[arg(long, default_value = "ad-first", value_parser = parse_order)]
    noise_order: ChannelOrder,

    /// Which qubits of each pair are noisy: both | second-only
    #[arg(long, default_value = "both", value_parser = parse_target)]
    noise_target: NoiseTarget,

    /// Output path prefix; without it the surface is written to stdout
    #[arg(long, value_name = "PREFIX")]
    out: Option<PathBuf>,

    /// Surface format: csv | json
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,

    /// Contour levels for a field, e.g. delta_f=0.03 or y_purify=0.7,0.8 (repeatable)
    #[arg(long, value_name = "FIELD=LEVEL[,LEVEL...]", value_parser = parse_contour)]
    contour: Vec<ContourRequest>,

    /// Cross-section at fixed gamma or p, e.g. gamma=0 (repeatable)
    #[arg(long, value_name = "gamma=V|p=V", value_parser = parse_slice)]
    slice: Vec<Slice>,
}

/// Parses command-line arguments, the first being the program name.
pub fn parse_cli<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Error::Help(e.render().to_string()),
        _ => Error::Usage(e.render().to_string().trim_end().to_string()),
    })?;
    let grid = GridSpec::new(
        cli.gamma.min,
        cli.gamma.max,
        cli.gamma.steps,
        cli.p.min,
        cli.p.max,
        cli.p.steps,
        cli.trials,
        cli.seed,
    )
    .map_err(|e| Error::Usage(e.to_string()))?;
    let protocol = ProtocolConfig::new(cli.objective, cli.criterion, cli.rounds).map_err(|e| Error::Usage(e.to_string()))?;
    if cli.out.is_none() && (!cli.contour.is_empty() || !cli.slice.is_empty()) {
        return Err(Error::Usage("--contour and --slice write files and need --out".into()));
    }
    for s in &cli.slice {
        slice_index(&grid, *s).map_err(|e| Error::Usage(format!("--slice: {e}")))?;
    }
    Ok(RunConfig {
        grid,
        protocol,
        noise: NoiseConfig {
            order: cli.noise_order,
            target: cli.noise_target,
        },
        mode: cli.mode,
        out: cli.out,
        format: cli.format,
        contours: cli.contour,
        slices: cli.slice,
    })
}

/// `%g`-style formatting with 12 significant digits; trailing zeros trimmed, `-0` printed as `0`.
pub fn format_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (11 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_real(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

fn csv_row(c: &CellStats) -> String {
    [
        format_real(c.gamma),
        format_real(c.p),
        format_real(c.f_noisy),
        opt_real(c.f_purify),
        format_real(c.y_purify),
        opt_real(c.delta_f),
        format_real(c.delta_y),
        opt_real(c.stderr_f),
        format_real(c.stderr_y),
        c.successes.to_string(),
        c.trials.to_string(),
    ]
    .join(",")
}

pub fn surface_csv(cells: &[CellStats]) -> String {
    let mut out = String::with_capacity(64 * (cells.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for c in cells {
        out.push_str(&csv_row(c));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonSurface<'a> {
    config: Option<&'a RunConfig>,
    grid: &'a GridSpec,
    cells: &'a [CellStats],
}

pub fn surface_json(surface: &SweepSurface, run: Option<&RunConfig>) -> String {
    let doc = JsonSurface {
        config: run,
        grid: &surface.grid,
        cells: &surface.cells,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("surface serializes");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the surface; `run` is embedded in JSON output for provenance.
pub fn write_surface(surface: &SweepSurface, format: OutputFormat, path: &Path, run: Option<&RunConfig>) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => surface_csv(&surface.cells),
        OutputFormat::Json => surface_json(surface, run),
    };
    write_file(path, &text)
}

pub fn parse_surface_csv(text: &str) -> Result<Vec<CellStats>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(CSV_HEADER) {
        return Err(Error::Parse("missing or unexpected CSV header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let row = n + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(Error::Parse(format!("line {row}: expected 11 fields, found {}", fields.len())));
            }
            let real = |k: usize| -> Result<f64> {
                fields[k]
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {row}: bad value `{}`", fields[k])))
            };
            let opt = |k: usize| -> Result<Option<f64>> {
                if fields[k].is_empty() {
                    Ok(None)
                } else {
                    real(k).map(Some)
                }
            };
            let count = |k: usize| -> Result<u64> {
                fields[k]
                    .parse::<u64>()
                    .map_err(|_| Error::Parse(format!("line {row}: bad count `{}`", fields[k])))
            };
            Ok(CellStats {
                gamma: real(0)?,
                p: real(1)?,
                f_noisy: real(2)?,
                f_purify: opt(3)?,
                y_purify: real(4)?,
                delta_f: opt(5)?,
                delta_y: real(6)?,
                stderr_f: opt(7)?,
                stderr_y: real(8)?,
                successes: count(9)?,
                trials: count(10)?,
            })
        })
        .collect()
}

pub fn read_surface_csv(path: &Path) -> Result<Vec<CellStats>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_surface_csv(&text)
}

pub type Polyline = Vec<(f64, f64)>;

/// Level set of one field; vertices are `(γ, p)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourSet {
    pub field: Field,
    pub level: f64,
    pub polylines: Vec<Polyline>,
}

/// Grid-edge identifier: `G(i, j)` joins nodes `(i, j)` and `(i + 1, j)`,
/// `P(i, j)` joins `(i, j)` and `(i, j + 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum EdgeKey {
    G(usize, usize),
    P(usize, usize),
}

/// Marching squares over an arbitrary rectilinear grid. `values[i][j]` sits at
/// `(xs[i], ys[j])`; cells touching an undefined node are skipped.
pub fn contour_lines(xs: &[f64], ys: &[f64], values: &[Vec<Option<f64>>], level: f64) -> Vec<Polyline> {
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 2 || ny < 2 || !level.is_finite() {
        return Vec::new();
    }
    let node = |i: usize, j: usize| values[i][j];
    let mut points: HashMap<EdgeKey, (f64, f64)> = HashMap::new();
    let mut crossing = |key: EdgeKey, a: (usize, usize), b: (usize, usize), va: f64, vb: f64| -> Option<EdgeKey> {
        if (va > level) == (vb > level) {
            return None;
        }
        points.entry(key).or_insert_with(|| {
            let t = (level - va) / (vb - va);
            let (x0, y0) = (xs[a.0], ys[a.1]);
            let (x1, y1) = (xs[b.0], ys[b.1]);
            (x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        });
        Some(key)
    };

    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..nx - 1 {
        for j in 0..ny - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let Some(v) = corners
                .iter()
                .map(|&(a, b)| node(a, b))
                .collect::<Option<Vec<f64>>>()
            else {
                continue;
            };
            // edge k runs from corner k to corner k+1, counter-clockwise
            let keys = [EdgeKey::G(i, j), EdgeKey::P(i + 1, j), EdgeKey::G(i, j + 1), EdgeKey::P(i, j)];
            let hits: Vec<Option<EdgeKey>> = (0..4)
                .map(|k| {
                    let (a, b) = (corners[k], corners[(k + 1) % 4]);
                    crossing(keys[k], a, b, v[k], v[(k + 1) % 4])
                })
                .collect();
            let found: Vec<EdgeKey> = hits.iter().flatten().copied().collect();
            match found.len() {
                2 => segments.push((found[0], found[1])),
                4 => {
                    let center_above = v.iter().sum::<f64>() / 4.0 > level;
                    // cut off each corner on the side the center is not on:
                    // corner k lies between edges k-1 and k
                    for k in 0..4 {
                        if (v[k] > level) != center_above {
                            let prev = hits[(k + 3) % 4].expect("saddle crosses every edge");
                            let next = hits[k].expect("saddle crosses every edge");
                            segments.push((prev, next));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    let mut adjacency: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adjacency.entry(a).or_default().push(s);
        adjacency.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let walk = |start_seg: usize, start_key: EdgeKey, used: &mut Vec<bool>| -> Vec<EdgeKey> {
        let mut keys = vec![start_key];
        let (mut seg, mut key) = (start_seg, start_key);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            key = if a == key { b } else { a };
            keys.push(key);
            match adjacency[&key].iter().copied().find(|&s| !used[s]) {
                Some(next) => seg = next,
                None => break,
            }
        }
        keys
    };

    let mut chains = Vec::new();
    // open chains start at edges touched by a single segment
    for s in 0..segments.len() {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        if adjacency[&a].len() == 1 {
            chains.push(walk(s, a, &mut used));
        } else if adjacency[&b].len() == 1 {
            chains.push(walk(s, b, &mut used));
        }
    }
    for s in 0..segments.len() {
        if !used[s] {
            let start = segments[s].0;
            chains.push(walk(s, start, &mut used));
        }
    }

    chains
        .into_iter()
        .map(|keys| {
            let mut line: Polyline = Vec::with_capacity(keys.len());
            for k in keys {
                let pt = points[&k];
                if line.last() != Some(&pt) {
                    line.push(pt);
                }
            }
            line
        })
        .filter(|line| line.len() >= 2)
        .collect()
}

fn axes(grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    (
        (0..grid.steps_gamma).map(|i| grid.gamma_at(i)).collect(),
        (0..grid.steps_p).map(|j| grid.p_at(j)).collect(),
    )
}

pub fn extract_contours(surface: &SweepSurface, field: Field, levels: &[f64]) -> Vec<ContourSet> {
    let (xs, ys) = axes(&surface.grid);
    let values = surface.field_grid(field);
    levels
        .iter()
        .map(|&level| ContourSet {
            field,
            level,
            polylines: contour_lines(&xs, &ys, &values, level),
        })
        .collect()
}

/// Whitespace-delimited `gamma p value` lines, one blank line between γ-rows.
/// Undefined values are written as `nan`.
pub fn surface_dat(surface: &SweepSurface, field: Field) -> String {
    let mut out = format!("# gamma p {}\n", field.name());
    for i in 0..surface.grid.steps_gamma {
        if i > 0 {
            out.push('\n');
        }
        for j in 0..surface.grid.steps_p {
            let c = surface.cell(i, j);
            let v = field.value(c).map(format_real).unwrap_or_else(|| "nan".into());
            let _ = writeln!(out, "{} {} {}", format_real(c.gamma), format_real(c.p), v);
        }
    }
    out
}

const SVG_W: f64 = 560.0;
const SVG_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn span(min: f64, max: f64) -> f64 {
    if max > min {
        max - min
    } else {
        1.0
    }
}

/// Self-contained SVG contour map for the sets of one field.
pub fn contour_svg(grid: &GridSpec, field: Field, sets: &[ContourSet]) -> String {
    let pw = SVG_W - MARGIN_L - MARGIN_R;
    let ph = SVG_H - MARGIN_T - MARGIN_B;
    let (gx, gy) = (span(grid.gamma_min, grid.gamma_max), span(grid.p_min, grid.p_max));
    let sx = |g: f64| MARGIN_L + (g - grid.gamma_min) / gx * pw;
    let sy = |p: f64| MARGIN_T + ph - (p - grid.p_min) / gy * ph;
    let px = |v: f64| format!("{v:.2}");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{} contours</text>"#,
        px(MARGIN_L + pw / 2.0),
        field.name()
    );

    let (x0, x1, y0, y1) = (MARGIN_L, MARGIN_L + pw, MARGIN_T + ph, MARGIN_T);
    let _ = writeln!(s, r#"<g class="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, px(x0), px(y0), px(x1), px(y0));
    let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, px(x0), px(y0), px(x0), px(y1));
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (tx, ty) = (x0 + t * pw, y0 - t * ph);
        let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, px(tx), px(y0), px(tx), px(y0 + 5.0));
        let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, px(x0 - 5.0), px(ty), px(x0), px(ty));
    }
    s.push_str("</g>\n<g class=\"ticks\">\n");
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let g = grid.gamma_min + t * (grid.gamma_max - grid.gamma_min);
        let p = grid.p_min + t * (grid.p_max - grid.p_min);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            px(x0 + t * pw),
            px(y0 + 18.0),
            format_real((g * 1e6).round() / 1e6)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            px(x0 - 8.0),
            px(y0 - t * ph + 4.0),
            format_real((p * 1e6).round() / 1e6)
        );
    }
    s.push_str("</g>\n");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">amplitude damping γ</text>"#,
        px(x0 + pw / 2.0),
        px(SVG_H - 18.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">dephasing p</text>"#,
        px(y1 + ph / 2.0),
        px(y1 + ph / 2.0)
    );

    for (k, set) in sets.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let level = format_real(set.level);
        let _ = writeln!(s, r#"<g class="level" data-level="{level}" stroke="{color}" fill="none" stroke-width="1.5">"#);
        for line in &set.polylines {
            let mut d = String::new();
            for (n, &(g, p)) in line.iter().enumerate() {
                let _ = write!(d, "{}{} {}", if n == 0 { "M" } else { " L" }, px(sx(g)), px(sy(p)));
            }
            let _ = writeln!(s, r#"<path d="{d}"/>"#);
        }
        s.push_str("</g>\n");
        if let Some(line) = set.polylines.iter().max_by_key(|l| l.len()) {
            let (g, p) = line[line.len() / 2];
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}" font-size="11">{level}</text>"#,
                px(sx(g) + 4.0),
                px(sy(p) - 4.0)
            );
        }
        let ly = MARGIN_T + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#,
            px(x1 + 12.0),
            px(ly),
            px(x1 + 32.0),
            px(ly)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{} = {level}</text>"#,
            px(x1 + 36.0),
            px(ly + 4.0),
            field.name()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn slice_index(grid: &GridSpec, slice: Slice) -> std::result::Result<usize, String> {
    let (min, max, steps, at): (f64, f64, usize, Box<dyn Fn(usize) -> f64>) = match slice {
        Slice::Gamma(_) => (grid.gamma_min, grid.gamma_max, grid.steps_gamma, Box::new(|i| grid.gamma_at(i))),
        Slice::P(_) => (grid.p_min, grid.p_max, grid.steps_p, Box::new(|j| grid.p_at(j))),
    };
    let v = match slice {
        Slice::Gamma(v) | Slice::P(v) => v,
    };
    if !(min..=max).contains(&v) {
        return Err(format!("{v} is outside the grid range [{min}, {max}]"));
    }
    Ok((0..steps)
        .min_by(|&a, &b| (at(a) - v).abs().total_cmp(&(at(b) - v).abs()))
        .expect("grid has at least two steps"))
}

/// Cells along the grid line nearest to the requested slice.
pub fn slice_cells(surface: &SweepSurface, slice: Slice) -> Result<Vec<CellStats>> {
    let g = &surface.grid;
    let k = slice_index(g, slice).map_err(Error::Config)?;
    Ok(match slice {
        Slice::Gamma(_) => (0..g.steps_p).map(|j| *surface.cell(k, j)).collect(),
        Slice::P(_) => (0..g.steps_gamma).map(|i| *surface.cell(i, k)).collect(),
    })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `.dat` grids for every field, one SVG per contoured field and one
/// CSV per slice. Returns the paths written.
pub fn emit_plots(surface: &SweepSurface, contours: &[ContourSet], slices: &[Slice], prefix: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for field in Field::ALL {
        let path = with_suffix(prefix, &format!("_{}.dat", field.name()));
        write_file(&path, &surface_dat(surface, field))?;
        written.push(path);
    }
    for field in Field::ALL {
        let sets: Vec<ContourSet> = contours.iter().filter(|c| c.field == field).cloned().collect();
        if sets.is_empty() {
            continue;
        }
        let path = with_suffix(prefix, &format!("_{}_contours.svg", field.name()));
        write_file(&path, &contour_svg(&surface.grid, field, &sets))?;
        written.push(path);
    }
    for &slice in slices {
        let cells = slice_cells(surface, slice)?;
        let name = match slice {
            Slice::Gamma(_) => format!("_slice_gamma_{}.csv", format_real(cells[0].gamma)),
            Slice::P(_) => format!("_slice_p_{}.csv", format_real(cells[0].p)),
        };
        let path = with_suffix(prefix, &name);
        write_file(&path, &surface_csv(&cells))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug)]
pub struct RunReport {
    pub surface: SweepSurface,
    pub summary: Summary,
    pub written: Vec<PathBuf>,
}

/// Runs the sweep and writes every requested output. Without `--out` the
/// surface goes to `stdout`.
pub fn run(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<RunReport> {
    let surface = sweep(&cfg.grid, cfg.noise, &cfg.protocol, cfg.mode)?;
    let levels: Vec<(Field, f64)> = cfg
        .contours
        .iter()
        .flat_map(|r| r.levels.iter().map(move |&l| (r.field, l)))
        .collect();
    let summary = summarize(&surface, &levels);
    let mut written = Vec::new();
    match &cfg.out {
        None => {
            let text = match cfg.format {
                OutputFormat::Csv => surface_csv(&surface.cells),
                OutputFormat::Json => surface_json(&surface, Some(cfg)),
            };
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
        }
        Some(prefix) => {
            let path = with_suffix(prefix, &format!(".{}", cfg.format.extension()));
            write_surface(&surface, cfg.format, &path, Some(cfg))?;
            written.push(path);
            let sets: Vec<ContourSet> = cfg
                .contours
                .iter()
                .flat_map(|r| extract_contours(&surface, r.field, &r.levels))
                .collect();
            written.extend(emit_plots(&surface, &sets, &cfg.slices, prefix)?);
        }
    }
    Ok(RunReport {
        surface,
        summary,
        written,
    })
}

/// Headline values the configuration table is scored against: ΔF and ΔY at
/// the maximum-noise corner and the lower bound on F_purify across the grid.
pub const REFERENCE_DELTA_F: f64 = 0.07;
pub const REFERENCE_DELTA_Y: f64 = -0.55;
pub const REFERENCE_F_PURIFY_MIN: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigurationRow {
    pub target: NoiseTarget,
    pub objective: PermutationObjective,
    pub corner_delta_f: Option<f64>,
    pub corner_delta_y: f64,
    pub corner_f_purify: Option<f64>,
    pub min_f_purify: Option<f64>,
    pub max_delta_f: Option<f64>,
    /// ΔF > 0 and ΔY < 0 at every cell with f_noisy > 0.5 apart from the noiseless corner.
    pub signs_hold: bool,
    /// Mean |ΔF| and |ΔY| over each anti-diagonal γ+p = const never decrease.
    pub magnitudes_grow: bool,
}

impl ConfigurationRow {
    pub fn passes(&self) -> bool {
        self.signs_hold && self.magnitudes_grow
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub grid: GridSpec,
    pub rows: Vec<ConfigurationRow>,
}

/// Tolerance for treating a difference as numerically zero.
pub const ZERO_TOL: f64 = 1e-12;

fn anti_diagonal_means(surface: &SweepSurface, field: Field) -> Vec<f64> {
    let g = &surface.grid;
    let mut sums = vec![(0.0, 0usize); g.steps_gamma + g.steps_p - 1];
    for i in 0..g.steps_gamma {
        for j in 0..g.steps_p {
            let c = surface.cell(i, j);
            if c.f_noisy > 0.5 {
                if let Some(v) = field.value(c) {
                    sums[i + j].0 += v.abs();
                    sums[i + j].1 += 1;
                }
            }
        }
    }
    sums.into_iter().filter(|s| s.1 > 0).map(|(s, n)| s / n as f64).collect()
}

pub fn configuration_row(surface: &SweepSurface, target: NoiseTarget, objective: PermutationObjective) -> ConfigurationRow {
    let g = &surface.grid;
    let corner = surface.cell(g.steps_gamma - 1, g.steps_p - 1);
    let mut signs_hold = true;
    for c in &surface.cells {
        if c.f_noisy <= 0.5 || (c.gamma == 0.0 && c.p == 0.0) {
            continue;
        }
        let df_ok = c.delta_f.is_some_and(|d| d > 0.0);
        signs_hold &= df_ok && c.delta_y < 0.0;
    }
    let nondecreasing = |v: Vec<f64>| v.windows(2).all(|w| w[1] >= w[0] - ZERO_TOL);
    let magnitudes_grow =
        nondecreasing(anti_diagonal_means(surface, Field::DeltaF)) && nondecreasing(anti_diagonal_means(surface, Field::DeltaY));
    let fold = |field: Field, pick: fn(f64, f64) -> f64| {
        surface
            .cells
            .iter()
            .filter_map(|c| field.value(c))
            .reduce(pick)
    };
    ConfigurationRow {
        target,
        objective,
        corner_delta_f: corner.delta_f,
        corner_delta_y: corner.delta_y,
        corner_f_purify: corner.f_purify,
        min_f_purify: fold(Field::FPurify, f64::min),
        max_delta_f: fold(Field::DeltaF, f64::max),
        signs_hold,
        magnitudes_grow,
    }
}

/// Exact sweeps of {both, second-only} × {fidelity, paper-literal}.
pub fn compare_configurations(grid: &GridSpec) -> Result<ComparisonTable> {
    let mut rows = Vec::new();
    for target in [NoiseTarget::Both, NoiseTarget::SecondOnly] {
        for objective in [PermutationObjective::Fidelity, PermutationObjective::PaperLiteral] {
            let noise = NoiseConfig {
                target,
                ..NoiseConfig::default()
            };
            let protocol = ProtocolConfig::new(objective, SuccessCriterion::Coincident, 1)?;
            let surface = sweep(grid, noise, &protocol, SimulationMode::Exact)?;
            rows.push(configuration_row(&surface, target, objective));
        }
    }
    Ok(ComparisonTable { grid: *grid, rows })
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = |x: Option<f64>| x.map(|v| format!("{v:+.4}")).unwrap_or_else(|| "n/a".into());
        let u = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        writeln!(
            f,
            "{:<12} {:<14} {:>9} {:>9} {:>11} {:>11} {:>9} {:>6} {:>6}",
            "target", "objective", "dF@max", "dY@max", "Fpur@max", "min Fpur", "max dF", "signs", "growth"
        )?;
        writeln!(
            f,
            "{:<12} {:<14} {:>9} {:>9} {:>11} {:>11} {:>9}",
            "reference",
            "",
            format!("{REFERENCE_DELTA_F:+.4}"),
            format!("{REFERENCE_DELTA_Y:+.4}"),
            "",
            format!(">={REFERENCE_F_PURIFY_MIN}"),
            ""
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<12} {:<14} {:>9} {:>9} {:>11} {:>11} {:>9} {:>6} {:>6}",
                r.target.to_string(),
                r.objective.to_string(),
                o(r.corner_delta_f),
                format!("{:+.4}", r.corner_delta_y),
                u(r.corner_f_purify),
                u(r.min_f_purify),
                o(r.max_delta_f),
                if r.signs_hold { "yes" } else { "no" },
                if r.magnitudes_grow { "yes" } else { "no" },
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("dejmps".to_string())
            .chain(s.split_whitespace().map(String::from))
            .collect()
    }

    #[test]
    fn defaults() {
        let cfg = parse_cli(args("")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid.trials, 10_000);
        assert_eq!(cfg.protocol.rounds, 1);
        assert_eq!(cfg.mode, SimulationMode::McFull);
    }

    #[test]
    fn explicit_grid_is_echoed() {
        let cfg = parse_cli(args("--gamma 0:0.2:21 --p 0:0.2:21 --trials 10000 --seed 7")).unwrap();
        assert_eq!(
            cfg.grid,
            GridSpec {
                base_seed: 7,
                ..GridSpec::default()
            }
        );
    }

    #[test]
    fn every_flag_parses() {
        let cfg = parse_cli(args(
            "--gamma 0.1:0.3:5 --p 0:0.1:3 --trials 50 --seed 3 --rounds 2 --mode exact --objective paper-literal \
             --criterion both-zero --noise-order deph-first --noise-target second-only --out /tmp/x --format json \
             --contour delta_f=0.03,0.05 --contour y_purify=0.7 --slice gamma=0.1 --slice p=0.05",
        ))
        .unwrap();
        assert_eq!(cfg.grid.steps_gamma, 5);
        assert_eq!(cfg.protocol.rounds, 2);
        assert_eq!(cfg.protocol.objective, PermutationObjective::PaperLiteral);
        assert_eq!(cfg.protocol.criterion, SuccessCriterion::BothZero);
        assert_eq!(cfg.noise.order, ChannelOrder::DephFirst);
        assert_eq!(cfg.noise.target, NoiseTarget::SecondOnly);
        assert_eq!(cfg.mode, SimulationMode::Exact);
        assert_eq!(cfg.format, OutputFormat::Json);
        assert_eq!(cfg.contours.len(), 2);
        assert_eq!(cfg.contours[0].levels, vec![0.03, 0.05]);
        assert_eq!(cfg.slices, vec![Slice::Gamma(0.1), Slice::P(0.05)]);
    }

    fn usage_message(s: &str) -> String {
        match parse_cli(args(s)) {
            Err(Error::Usage(m)) => m,
            other => panic!("expected usage error for `{s}`, got {other:?}"),
        }
    }

    #[test]
    fn usage_errors_name_the_flag() {
        assert!(usage_message("--trials 0").contains("--trials"));
        assert!(usage_message("--gamma 0.3:0.1:5").contains("--gamma"));
        assert!(usage_message("--p 0:2:5").contains("--p"));
        assert!(usage_message("--mode fast").contains("--mode"));
        assert!(usage_message("--bogus").contains("--bogus"));
        assert!(usage_message("--contour f_noisy=0.5 --out x").contains("--contour"));
        assert!(usage_message("--rounds 0").contains("--rounds"));
        assert!(usage_message("--slice gamma=0.5 --out x").contains("--slice"));
        assert!(usage_message("--contour delta_f=0.03").contains("--out"));
    }

    #[test]
    fn help_is_not_a_failure() {
        match parse_cli(args("--help")) {
            Err(e @ Error::Help(_)) => {
                assert_eq!(e.exit_code(), 0);
                let text = e.to_string();
                for flag in [
                    "--gamma",
                    "--p",
                    "--trials",
                    "--seed",
                    "--rounds",
                    "--mode",
                    "--objective",
                    "--criterion",
                    "--noise-order",
                    "--noise-target",
                    "--out",
                    "--format",
                    "--contour",
                    "--slice",
                ] {
                    assert!(text.contains(flag), "help lacks {flag}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(1.0), "1");
        assert_eq!(format_real(0.1), "0.1");
        assert_eq!(format_real(0.2), "0.2");
        assert_eq!(format_real(0.82), "0.82");
        assert_eq!(format_real(-0.2952), "-0.2952");
        assert_eq!(format_real(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_real(2.0 / 3.0), "0.666666666667");
        assert_eq!(format_real(123456.789), "123456.789");
        assert_eq!(format_real(1.5e-7), "1.5e-7");
        assert_eq!(format_real(0.0001), "0.0001");
        assert_eq!(format_real(1e15), "1e15");
        assert_eq!(format_real(f64::NAN), "nan");
        // 0.1 + 0.2 differs from 0.3 beyond the printed precision
        assert_eq!(format_real(0.1 + 0.2), "0.3");
    }

    fn synthetic(steps: usize, f: impl Fn(f64, f64) -> f64) -> SweepSurface {
        let grid = GridSpec::new(0.0, 0.2, steps, 0.0, 0.2, steps, 1, 0).unwrap();
        let mut cells = Vec::new();
        for i in 0..steps {
            for j in 0..steps {
                let (g, p) = (grid.gamma_at(i), grid.p_at(j));
                let v = f(g, p);
                cells.push(CellStats {
                    gamma: g,
                    p,
                    f_noisy: 1.0,
                    f_purify: Some(v),
                    y_purify: v,
                    delta_f: Some(v),
                    delta_y: v,
                    stderr_f: Some(0.0),
                    stderr_y: 0.0,
                    successes: 1,
                    trials: 1,
                });
            }
        }
        SweepSurface { grid, cells }
    }

    #[test]
    fn constant_field_has_no_contours() {
        let s = synthetic(6, |_, _| 0.5);
        for level in [0.4, 0.6, 0.0] {
            assert!(extract_contours(&s, Field::DeltaF, &[level])[0].polylines.is_empty());
        }
    }

    #[test]
    fn diagonal_level_set() {
        let s = synthetic(21, |g, p| g + p);
        let sets = extract_contours(&s, Field::DeltaF, &[0.2, 0.13]);
        let cell = s.grid.gamma_step();
        for set in &sets {
            assert_eq!(set.polylines.len(), 1);
            for &(g, p) in &set.polylines[0] {
                assert!(((g + p) - set.level).abs() / 2f64.sqrt() < cell);
                assert!((0.0..=0.2).contains(&g) && (0.0..=0.2).contains(&p));
            }
        }
    }

    #[test]
    fn node_on_level_becomes_vertex() {
        let s = synthetic(5, |g, p| g + 2.0 * p);
        let level = s.cell(2, 1).delta_f.unwrap();
        let sets = extract_contours(&s, Field::DeltaF, &[level]);
        let node = (s.cell(2, 1).gamma, s.cell(2, 1).p);
        let hit = sets[0]
            .polylines
            .iter()
            .flatten()
            .any(|&(g, p)| (g - node.0).abs() < 1e-12 && (p - node.1).abs() < 1e-12);
        assert!(hit);
    }

    #[test]
    fn saddle_follows_center_value() {
        let xs = [0.0, 1.0];
        let ys = [0.0, 1.0];
        // corners (0,0) and (1,1) above, the other two below
        let vals_hi = vec![vec![Some(1.0), Some(0.0)], vec![Some(0.0), Some(1.0)]];
        let lines = contour_lines(&xs, &ys, &vals_hi, 0.4);
        assert_eq!(lines.len(), 2);
        // center 0.5 > 0.4: the above corners connect, so each segment isolates a below corner
        for l in &lines {
            let mid = ((l[0].0 + l[1].0) / 2.0, (l[0].1 + l[1].1) / 2.0);
            let near_below = (mid.0 > 0.5 && mid.1 < 0.5) || (mid.0 < 0.5 && mid.1 > 0.5);
            assert!(near_below, "{l:?}");
        }
        let lines = contour_lines(&xs, &ys, &vals_hi, 0.6);
        for l in &lines {
            let mid = ((l[0].0 + l[1].0) / 2.0, (l[0].1 + l[1].1) / 2.0);
            let near_above = (mid.0 < 0.5 && mid.1 < 0.5) || (mid.0 > 0.5 && mid.1 > 0.5);
            assert!(near_above, "{l:?}");
        }
    }

    #[test]
    fn closed_loop_is_chained() {
        let s = synthetic(11, |g, p| (g - 0.1).powi(2) + (p - 0.1).powi(2));
        let sets = extract_contours(&s, Field::DeltaF, &[0.0025]);
        assert_eq!(sets[0].polylines.len(), 1);
        let line = &sets[0].polylines[0];
        assert_eq!(line.first(), line.last());
        assert!(line.len() > 8);
    }

    #[test]
    fn vertices_lie_on_cell_edges() {
        let s = synthetic(9, |g, p| (30.0 * g).sin() + (20.0 * p).cos());
        let step = s.grid.gamma_step();
        for set in extract_contours(&s, Field::DeltaF, &[0.3, 1.0, 1.5]) {
            for &(g, p) in set.polylines.iter().flatten() {
                let on_g = ((g / step).round() * step - g).abs() < 1e-12;
                let on_p = ((p / step).round() * step - p).abs() < 1e-12;
                assert!(on_g || on_p);
            }
        }
    }

    #[test]
    fn undefined_values_serialize_as_empty_and_null() {
        let mut s = synthetic(2, |_, _| 0.5);
        s.cells[1].f_purify = None;
        s.cells[1].delta_f = None;
        s.cells[1].stderr_f = None;
        let csv = surface_csv(&s.cells);
        let row = csv.lines().nth(2).unwrap();
        assert_eq!(row.split(',').nth(3), Some(""));
        let back = parse_surface_csv(&csv).unwrap();
        assert_eq!(back[1].f_purify, None);
        let json: serde_json::Value = serde_json::from_str(&surface_json(&s, None)).unwrap();
        assert!(json["cells"][1]["f_purify"].is_null());
        assert!(json["config"].is_null());
    }

    #[test]
    fn dat_layout() {
        let s = synthetic(21, |g, p| g * p);
        let text = surface_dat(&s, Field::DeltaY);
        let data = text.lines().filter(|l| !l.is_empty() && !l.starts_with('#')).count();
        let blank = text.lines().filter(|l| l.is_empty()).count();
        assert_eq!((data, blank), (441, 20));
    }

    #[test]
    fn comparison_row_flags() {
        let good = synthetic(5, |g, p| g + p);
        let mut s = good.clone();
        for c in &mut s.cells {
            c.delta_y = -(c.gamma + c.p);
        }
        let row = configuration_row(&s, NoiseTarget::Both, PermutationObjective::Fidelity);
        assert!(row.signs_hold && row.magnitudes_grow);
        let mut bad = s.clone();
        bad.cells[3].delta_f = Some(-0.01);
        let row = configuration_row(&bad, NoiseTarget::Both, PermutationObjective::Fidelity);
        assert!(!row.signs_hold);
    }
}
