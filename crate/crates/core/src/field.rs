//! Sampled fields on the periodic box `[−L, L)^N`.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniform periodic grid with `n` points per axis and spacing `2L/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be > 0")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("n = {n} must be a power of two >= 8")));
        }
        Ok(Self { dim, half_width, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Coordinates of a flat (row-major, first axis slowest) index. Unused
    /// trailing components are zero.
    pub fn point(&self, index: usize) -> [f64; 3] {
        let mut x = [0.0; 3];
        let mut rest = index;
        for axis in (0..self.dim).rev() {
            x[axis] = self.axis_coord(rest % self.n);
            rest /= self.n;
        }
        x
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Real samples on a [`Grid`]. Always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        assert!(c.is_finite());
        Self {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..grid.dim])).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| c * v).collect())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `L^r` norm by the rectangle rule; `r = ∞` gives `max |f|`.
    pub fn lr_norm(&self, r: f64) -> Result<f64> {
        lr_norm_slice(&self.grid, &self.values, r)
    }

    /// Signed integral `h^N Σ f`.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Share of the `L^1` mass within the outer eighth of the box along any
    /// axis. Zero for the zero field.
    pub fn boundary_shell_fraction(&self) -> f64 {
        let shell = 0.875 * self.grid.half_width;
        let (mut outer, mut total) = (0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let a = v.abs();
            total += a;
            let x = self.grid.point(i);
            if x[..self.grid.dim].iter().any(|c| c.abs() >= shell) {
                outer += a;
            }
        }
        if total > 0.0 {
            outer / total
        } else {
            0.0
        }
    }

    /// Writes the `CRITEX-FIELD v1` snapshot: one header line, then
    /// little-endian `f64` samples in row-major order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "CRITEX-FIELD v1 N={} L={} n={}",
            self.grid.dim, self.grid.half_width, self.grid.n
        )?;
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(mut input: R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let grid = parse_header(header.trim_end_matches('\n'))?;
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * grid.len() {
            return Err(Error::Snapshot(format!(
                "expected {} bytes of samples, found {}",
                8 * grid.len(),
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(grid, values)
    }
}

fn parse_header(line: &str) -> Result<Grid> {
    let mut parts = line.split(' ');
    if parts.next() != Some("CRITEX-FIELD") || parts.next() != Some("v1") {
        return Err(Error::Snapshot(format!("bad magic in header {line:?}")));
    }
    let mut field = |key: &str| -> Result<&str> {
        let tok = parts
            .next()
            .ok_or_else(|| Error::Snapshot(format!("header missing {key}")))?;
        tok.strip_prefix(key)
            .and_then(|t| t.strip_prefix('='))
            .ok_or_else(|| Error::Snapshot(format!("expected {key}=..., found {tok:?}")))
    };
    let bad = |e: &dyn std::fmt::Display| Error::Snapshot(e.to_string());
    let dim: usize = field("N")?.parse().map_err(|e| bad(&e))?;
    let l: f64 = field("L")?.parse().map_err(|e| bad(&e))?;
    let n: usize = field("n")?.parse().map_err(|e| bad(&e))?;
    Grid::new(dim, l, n)
}

pub(crate) fn lr_norm_slice(grid: &Grid, values: &[f64], r: f64) -> Result<f64> {
    if r.is_nan() || r < 1.0 {
        return Err(Error::BadExponent(r));
    }
    if r == f64::INFINITY {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    // Scale by the maximum so large r cannot overflow.
    let m = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = if r == 1.0 {
        values.iter().map(|v| v.abs() / m).sum()
    } else if r == 2.0 {
        values.iter().map(|v| (v / m) * (v / m)).sum()
    } else {
        values.iter().map(|v| (v.abs() / m).powf(r)).sum()
    };
    Ok(m * (grid.cell_volume() * sum).powf(1.0 / r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BumpKind {
    /// `A exp(−|x−c|²/(2s²))`.
    Gaussian,
    /// `A exp(1 − 1/(1 − |x−c|²/s²))` inside the ball of radius `s`, zero outside.
    CompactBump,
}

/// Samples a bump profile. Logs a warning when the bump is closer than
/// `4·scale` to the box boundary.
pub fn make_bump(grid: &Grid, kind: BumpKind, center: &[f64], scale: f64, amplitude: f64) -> Result<Field> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("bump scale {scale} must be > 0")));
    }
    if center.len() != grid.dim() {
        return Err(Error::InvalidArgument(format!(
            "center has {} components for a {}-dimensional grid",
            center.len(),
            grid.dim()
        )));
    }
    if !bump_fits(grid, center, scale) {
        log::warn!(
            "bump at {center:?} with scale {scale} lies within 4·scale of the box boundary (L = {})",
            grid.half_width()
        );
    }
    let r2 = |x: &[f64]| -> f64 { x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum() };
    match kind {
        BumpKind::Gaussian => {
            let inv = 1.0 / (2.0 * scale * scale);
            Field::from_fn(*grid, |x| amplitude * (-r2(x) * inv).exp())
        }
        BumpKind::CompactBump => {
            let s2 = scale * scale;
            Field::from_fn(*grid, |x| {
                let rho = r2(x) / s2;
                if rho < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - rho)).exp()
                } else {
                    0.0
                }
            })
        }
    }
}

pub fn bump_fits(grid: &Grid, center: &[f64], scale: f64) -> bool {
    center.iter().all(|c| grid.half_width() - c.abs() >= 4.0 * scale)
}

/// The mass-one heat kernel `(4πa)^{−N/2} exp(−|x|²/(4a))` centered at the origin.
pub fn heat_kernel(grid: &Grid, a: f64) -> Result<Field> {
    let amp = (4.0 * std::f64::consts::PI * a).powf(-(grid.dim() as f64) / 2.0);
    make_bump(
        grid,
        BumpKind::Gaussian,
        &vec![0.0; grid.dim()],
        (2.0 * a).sqrt(),
        amp,
    )
}

/// Spatial factor `w` of the forcing with its cached mass `∫ w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSpec {
    profile: Field,
    mass: f64,
}

impl ForcingSpec {
    pub fn new(profile: Field) -> Self {
        let mass = profile.integral();
        Self { profile, mass }
    }

    pub fn zero(grid: Grid) -> Self {
        Self::new(Field::zeros(grid))
    }

    pub fn profile(&self) -> &Field {
        &self.profile
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_zero(&self) -> bool {
        self.profile.values().iter().all(|v| *v == 0.0)
    }
}
