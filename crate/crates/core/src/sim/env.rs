//! Elevation grids: synthetic generators, bilinear lookup and the text file
//! format.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{Matrix, RngStream};

const GRID_MAGIC: &str = "POAMGRID 1";

/// Axis-aligned workspace bounds in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let e = Extent { x_min, x_max, y_min, y_max };
        if ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) || x_max <= x_min || y_max <= y_min {
            return Err(Error::Config(format!("degenerate extent {e:?}")));
        }
        Ok(e)
    }

    pub fn square(side: f64) -> Self {
        Extent {
            x_min: 0.0,
            x_max: side,
            y_min: 0.0,
            y_max: side,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max)]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    /// Uniform point inside the extent.
    pub fn sample(&self, rng: &mut impl Rng) -> [f64; 2] {
        [
            self.x_min + self.width() * rng.random::<f64>(),
            self.y_min + self.height() * rng.random::<f64>(),
        ]
    }
}

/// Row-major elevation grid. Row 0 is the northern edge (`y_max`), column 0
/// the western edge (`x_min`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvGrid {
    rows: usize,
    cols: usize,
    extent: Extent,
    values: Vec<f64>,
}

impl EnvGrid {
    pub fn new(rows: usize, cols: usize, extent: Extent, values: Vec<f64>) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(Error::Config(format!("grid must be at least 2x2, got {rows}x{cols}")));
        }
        let extent = Extent::new(extent.x_min, extent.x_max, extent.y_min, extent.y_max)?;
        if values.len() != rows * cols {
            return Err(Error::GridFormat(format!(
                "expected {} values, found {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::GridFormat("non-finite elevation".into()));
        }
        Ok(EnvGrid { rows, cols, extent, values })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(rows: usize, cols: usize, extent: Extent, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let [x, y] = node_position(rows, cols, &extent, r, c);
                values.push(f(x, y));
            }
        }
        EnvGrid::new(rows, cols, extent, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn extent(&self) -> &Extent {
        &self.extent
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn node(&self, r: usize, c: usize) -> [f64; 2] {
        node_position(self.rows, self.cols, &self.extent, r, c)
    }

    /// Node coordinates and elevations taking every `stride`-th row and
    /// column, starting at the north-west corner.
    pub fn subsample(&self, stride: usize) -> (Matrix, Vec<f64>) {
        let stride = stride.max(1);
        let mut x = Matrix::zeros(0, 2);
        let mut y = Vec::new();
        for r in (0..self.rows).step_by(stride) {
            for c in (0..self.cols).step_by(stride) {
                x.push_row(&self.node(r, c));
                y.push(self.value(r, c));
            }
        }
        (x, y)
    }

    pub fn to_text(&self) -> String {
        let e = &self.extent;
        let mut s = format!(
            "{GRID_MAGIC}\n{} {} {} {} {} {}\n",
            self.rows, self.cols, e.x_min, e.x_max, e.y_min, e.y_max
        );
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            for (c, v) in row.iter().enumerate() {
                if c > 0 {
                    s.push(' ');
                }
                write!(s, "{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(GRID_MAGIC) {
            return Err(Error::GridFormat(format!("missing `{GRID_MAGIC}` header")));
        }
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::GridFormat("missing dimension line".into()))?
            .split_whitespace()
            .collect();
        if header.len() != 6 {
            return Err(Error::GridFormat("dimension line needs 6 fields".into()));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| Error::GridFormat(format!("bad count `{s}`")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| Error::GridFormat(format!("bad number `{s}`")));
        let rows = count(header[0])?;
        let cols = count(header[1])?;
        let extent = Extent::new(real(header[2])?, real(header[3])?, real(header[4])?, real(header[5])?)
            .map_err(|e| Error::GridFormat(e.to_string()))?;
        let values = lines
            .flat_map(str::split_whitespace)
            .map(real)
            .collect::<Result<Vec<f64>>>()?;
        EnvGrid::new(rows, cols, extent, values).map_err(|e| match e {
            Error::Config(m) => Error::GridFormat(m),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        EnvGrid::parse(&text)
    }
}

fn node_position(rows: usize, cols: usize, e: &Extent, r: usize, c: usize) -> [f64; 2] {
    let x = e.x_min + e.width() * c as f64 / (cols - 1) as f64;
    let y = e.y_max - e.height() * r as f64 / (rows - 1) as f64;
    [x, y]
}

/// Bilinear interpolation of the four nodes around `(x, y)`.
pub fn elevation_at(env: &EnvGrid, x: f64, y: f64) -> Result<f64> {
    let e = &env.extent;
    if !e.contains(x, y) {
        return Err(Error::OutOfBounds { x, y });
    }
    let fc = (x - e.x_min) / e.width() * (env.cols - 1) as f64;
    let fr = (e.y_max - y) / e.height() * (env.rows - 1) as f64;
    let c0 = (fc.floor() as usize).min(env.cols - 2);
    let r0 = (fr.floor() as usize).min(env.rows - 2);
    let tc = fc - c0 as f64;
    let tr = fr - r0 as f64;
    let v00 = env.value(r0, c0);
    let v01 = env.value(r0, c0 + 1);
    let v10 = env.value(r0 + 1, c0);
    let v11 = env.value(r0 + 1, c0 + 1);
    Ok((1.0 - tr) * ((1.0 - tc) * v00 + tc * v01) + tr * ((1.0 - tc) * v10 + tc * v11))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    /// Gentle slope on the western two thirds, rough terrain on the rest.
    Piecewise,
    /// Parallel ridges whose spacing shrinks towards the east.
    Ridges,
    /// Rough bands along the northern and southern edges around a smooth
    /// middle.
    TwoPatches,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Piecewise, EnvKind::Ridges, EnvKind::TwoPatches];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Piecewise => "piecewise",
            EnvKind::Ridges => "ridges",
            EnvKind::TwoPatches => "two_patches",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown environment kind `{s}`")))
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of a synthetic environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub kind: EnvKind,
    /// Scales every non-constant term; zero yields a flat grid.
    pub roughness: f64,
    /// Side length of the square workspace in meters.
    pub side: f64,
    /// Nodes per side.
    pub nodes: usize,
    pub base: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: EnvKind::Piecewise,
            roughness: 1.0,
            side: 21.0,
            nodes: 43,
            base: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn of_kind(kind: EnvKind) -> Self {
        SynthSpec { kind, ..SynthSpec::default() }
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

impl Wave {
    fn at(&self, u: f64, v: f64) -> f64 {
        self.amp * (std::f64::consts::TAU * (self.kx * u + self.ky * v) + self.phase).sin()
    }
}

/// Random plane waves with `cycles` oscillations per unit length in
/// magnitude.
fn waves(rng: &mut RngStream, count: usize, cycles: (f64, f64), amp: f64) -> Vec<Wave> {
    (0..count)
        .map(|_| {
            let k = cycles.0 + (cycles.1 - cycles.0) * rng.random::<f64>();
            let dir = std::f64::consts::TAU * rng.random::<f64>();
            Wave {
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                phase: std::f64::consts::TAU * rng.random::<f64>(),
                amp,
            }
        })
        .collect()
}

fn smoothstep(edge: f64, width: f64, t: f64) -> f64 {
    let s = ((t - edge) / width + 0.5).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// Deterministic synthetic terrain for `seed`.
pub fn synth_env(spec: &SynthSpec, seed: u64) -> Result<EnvGrid> {
    if !(spec.side > 0.0) || spec.nodes < 2 || !spec.roughness.is_finite() {
        return Err(Error::Config(format!("invalid synthetic environment {spec:?}")));
    }
    let mut rng = RngStream::new(seed, &format!("env/{}", spec.kind));
    let a = spec.roughness;
    let extent = Extent::square(spec.side);
    // a small blend band keeps the field continuous across region borders
    let band = 0.03;
    let gentle_dir = std::f64::consts::TAU * rng.random::<f64>();
    let gentle = move |u: f64, v: f64| 1.5 * ((u - 0.5) * gentle_dir.cos() + (v - 0.5) * gentle_dir.sin());
    let field: Box<dyn Fn(f64, f64) -> f64> = match spec.kind {
        EnvKind::Piecewise => {
            let rough = waves(&mut rng, 6, (3.0, 6.0), 2.5);
            Box::new(move |u, v| {
                let mask = smoothstep(2.0 / 3.0, band, u);
                gentle(u, v) + mask * rough.iter().map(|w| w.at(u, v)).sum::<f64>()
            })
        }
        EnvKind::Ridges => {
            let phase = std::f64::consts::TAU * rng.random::<f64>();
            let wobble = waves(&mut rng, 2, (0.5, 1.0), 0.03);
            Box::new(move |u, v| {
                // instantaneous frequency rises from 1 to 7 cycles across the map
                let s = u + wobble.iter().map(|w| w.at(u, v)).sum::<f64>();
                let arg = std::f64::consts::TAU * (s + 3.0 * s * s) + phase;
                gentle(u, v) + 4.0 * (0.25 + 0.75 * s.clamp(0.0, 1.0)) * arg.sin()
            })
        }
        EnvKind::TwoPatches => {
            let north = waves(&mut rng, 5, (3.0, 6.0), 2.5);
            let south = waves(&mut rng, 5, (3.0, 6.0), 2.5);
            Box::new(move |u, v| {
                let m_south = 1.0 - smoothstep(0.25, band, v);
                let m_north = smoothstep(0.75, band, v);
                gentle(u, v)
                    + m_north * north.iter().map(|w| w.at(u, v)).sum::<f64>()
                    + m_south * south.iter().map(|w| w.at(u, v)).sum::<f64>()
            })
        }
    };
    EnvGrid::from_fn(spec.nodes, spec.nodes, extent, |x, y| {
        let u = (x - extent.x_min) / extent.width();
        let v = (y - extent.y_min) / extent.height();
        spec.base + a * field(u, v)
    })
}

/// True where the generator places rough terrain, by normalized position.
pub fn is_rough(kind: EnvKind, u: f64, v: f64) -> bool {
    match kind {
        EnvKind::Piecewise => u > 2.0 / 3.0,
        EnvKind::Ridges => u > 0.5,
        EnvKind::TwoPatches => !(0.25..=0.75).contains(&v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_midpoint_is_the_corner_mean() {
        let env = EnvGrid::new(2, 2, Extent::square(1.0), vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        assert_eq!(elevation_at(&env, 0.5, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn nodes_return_node_values() {
        let env = synth_env(&SynthSpec::default(), 1).unwrap();
        for (r, c) in [(0, 0), (5, 17), (42, 42), (42, 0)] {
            let [x, y] = env.node(r, c);
            assert!((elevation_at(&env, x, y).unwrap() - env.value(r, c)).abs() < 1e-12);
        }
    }

    #[test]
    fn outside_is_an_error() {
        let env = synth_env(&SynthSpec::default(), 1).unwrap();
        assert!(matches!(elevation_at(&env, -0.1, 3.0), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn zero_roughness_is_flat() {
        for kind in EnvKind::ALL {
            let spec = SynthSpec { kind, roughness: 0.0, base: 2.5, ..SynthSpec::default() };
            let env = synth_env(&spec, 4).unwrap();
            assert!(env.values().iter().all(|&v| v == 2.5));
        }
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(EnvKind::parse("two-patches").unwrap(), EnvKind::TwoPatches);
        assert!(EnvKind::parse("dunes").is_err());
    }

    #[test]
    fn rejects_short_value_list() {
        let text = "POAMGRID 1\n2 2 0 1 0 1\n1 2 3\n";
        assert!(matches!(EnvGrid::parse(text), Err(Error::GridFormat(_))));
    }
}
