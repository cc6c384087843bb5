//! Rescaled test-function certificates.
//!
//! With `φ_T(t, x) = η(t/T)^{p'} ξ(|x|²/T)^{2p'}`, `p' = p/(p−1)`, a global
//! solution would satisfy
//!
//! ```text
//! ∫_0^T∫ t^σ w φ_T ≤ C_Y (I1(T) + I2(T)),   C_Y = (p/2)^{−1/(p−1)} (p−1)/p.
//! ```
//!
//! Everything factors into 1-D time integrals and N-D space integrals. The
//! quotient `μ^{−1/(p−1)}|Δμ|^{p'}` is evaluated from the radial formula,
//! in which the powers of `ξ` cancel, so no division by tiny values occurs.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exponents::Params;
use crate::field::{Field, ForcingSpec, Grid};
use crate::quad::integrate_adaptive;

const TIME_TOL: f64 = 1e-13;

fn logistic_pair(h: f64) -> (f64, f64) {
    // (1/(1+e^h), e^h/(1+e^h)) without overflow.
    if h > 0.0 {
        let e = (-h).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = h.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    }
}

/// Spatial and temporal cutoff profiles built from `exp(−1/·)` transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoffs {
    /// `ξ(ρ) = 1/(1 + e^{c(1/(2−ρ) − 1/(ρ−1))})` on `(1, 2)`.
    pub xi_steepness: f64,
    /// `η(s) = exp(−w²/((s−a)(b−s)))` on `(a, b)`, `w = b − a`.
    pub eta_support: (f64, f64),
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self::standard()
    }
}

impl Cutoffs {
    pub fn standard() -> Self {
        Self {
            xi_steepness: 1.0,
            eta_support: (0.0, 1.0),
        }
    }

    /// A second valid pair with a sharper spatial transition and a shifted,
    /// narrower time bump.
    pub fn steep() -> Self {
        Self {
            xi_steepness: 3.0,
            eta_support: (0.25, 0.9),
        }
    }

    pub fn new(xi_steepness: f64, a: f64, b: f64) -> Result<Self> {
        if !(xi_steepness > 0.0) || !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoffs need steepness > 0 and 0 <= a < b <= 1 (got {xi_steepness}, {a}, {b})"
            )));
        }
        Ok(Self {
            xi_steepness,
            eta_support: (a, b),
        })
    }

    pub fn xi(&self, rho: f64) -> f64 {
        self.xi_derivatives(rho).0
    }

    /// `(ξ, ξ', ξ'')` at `ρ`.
    pub fn xi_derivatives(&self, rho: f64) -> (f64, f64, f64) {
        if rho <= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        if rho >= 2.0 {
            return (0.0, 0.0, 0.0);
        }
        let c = self.xi_steepness;
        let (a, b) = (2.0 - rho, rho - 1.0);
        let h = c * (1.0 / a - 1.0 / b);
        let h1 = c * (1.0 / (a * a) + 1.0 / (b * b));
        let h2 = c * (2.0 / (a * a * a) - 2.0 / (b * b * b));
        let (x, y) = logistic_pair(h);
        let d1 = -x * y * h1;
        let d2 = -(d1 * (y - x) * h1 + x * y * h2);
        (x, d1, d2)
    }

    pub fn eta(&self, s: f64) -> f64 {
        let (a, b) = self.eta_support;
        if s <= a || s >= b {
            return 0.0;
        }
        let w = b - a;
        (-w * w / ((s - a) * (b - s))).exp()
    }

    pub fn eta_prime(&self, s: f64) -> f64 {
        let (a, b) = self.eta_support;
        if s <= a || s >= b {
            return 0.0;
        }
        let w = b - a;
        let d = (s - a) * (b - s);
        self.eta(s) * w * w * (a + b - 2.0 * s) / (d * d)
    }
}

fn conj(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `C_Y` of Young's inequality `ab ≤ ½ a^p + C_Y b^{p'}`.
pub fn young_constant(p: f64) -> f64 {
    (0.5 * p).powf(-1.0 / (p - 1.0)) * (p - 1.0) / p
}

/// Time integrals of the profile `η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFactors {
    /// `∫_0^1 s^σ η^{p'} ds`.
    pub forcing: f64,
    /// `∫_0^1 η^{p'} ds`.
    pub mass: f64,
    /// `∫_0^1 |η'|^{p'} ds`.
    pub derivative: f64,
}

pub fn time_factors(params: &Params, cutoffs: &Cutoffs) -> Result<TimeFactors> {
    let pc = conj(params.p());
    let e = params.sigma() + 1.0;
    let (a, b) = cutoffs.eta_support;
    // τ = s^{σ+1}: ∫ s^σ f(s) ds = (1/(σ+1)) ∫ f(τ^{1/(σ+1)}) dτ
    let forcing = integrate_adaptive(
        |tau| cutoffs.eta(tau.powf(1.0 / e)).powf(pc),
        a.powf(e),
        b.powf(e),
        TIME_TOL,
    ) / e;
    let mass = integrate_adaptive(|s| cutoffs.eta(s).powf(pc), a, b, TIME_TOL);
    let derivative = integrate_adaptive(|s| cutoffs.eta_prime(s).abs().powf(pc), a, b, TIME_TOL);
    if !(mass > 0.0) {
        return Err(Error::InvalidArgument("degenerate time cutoff: η ≡ 0".into()));
    }
    Ok(TimeFactors {
        forcing,
        mass,
        derivative,
    })
}

fn check_box(grid: &Grid, s2: f64) -> Result<()> {
    let have = grid.half_width();
    let needed = (2.0 * s2).sqrt();
    if !(s2 > 0.0) || needed > have {
        return Err(Error::BoxTooSmall { t: s2, needed, have });
    }
    Ok(())
}

fn radius2(grid: &Grid, idx: usize) -> f64 {
    grid.point(idx)[..grid.dim()].iter().map(|c| c * c).sum()
}

/// `μ(x) = ξ(|x|²/s2)^{2p'}` sampled on the grid.
pub fn spatial_cutoff(grid: &Grid, s2: f64, params: &Params, cutoffs: &Cutoffs) -> Result<Field> {
    check_box(grid, s2)?;
    let m = 2.0 * conj(params.p());
    Field::new(
        *grid,
        (0..grid.len())
            .map(|i| cutoffs.xi(radius2(grid, i) / s2).powf(m))
            .collect(),
    )
}

/// `Δμ` from the radial formula.
pub fn spatial_laplacian(grid: &Grid, s2: f64, params: &Params, cutoffs: &Cutoffs) -> Result<Field> {
    check_box(grid, s2)?;
    let m = 2.0 * conj(params.p());
    let n = grid.dim() as f64;
    Field::new(
        *grid,
        (0..grid.len())
            .map(|i| {
                let rho = radius2(grid, i) / s2;
                let (x, d1, d2) = cutoffs.xi_derivatives(rho);
                if x == 0.0 {
                    return 0.0;
                }
                let g = 4.0 * rho * (m * (m - 1.0) * d1 * d1 + m * x * d2) + 2.0 * n * m * x * d1;
                x.powf(m - 2.0) * g / s2
            })
            .collect(),
    )
}

/// `∫ μ^{−1/(p−1)} |Δμ|^{p'} dx`, with the cancelled form `|G|^{p'} s2^{−p'}`.
pub fn dissipation_space_integral(grid: &Grid, s2: f64, params: &Params, cutoffs: &Cutoffs) -> Result<f64> {
    check_box(grid, s2)?;
    let pc = conj(params.p());
    let m = 2.0 * pc;
    let n = grid.dim() as f64;
    let mut sum = 0.0;
    for i in 0..grid.len() {
        let rho = radius2(grid, i) / s2;
        if rho <= 1.0 || rho >= 2.0 {
            continue;
        }
        let (x, d1, d2) = cutoffs.xi_derivatives(rho);
        let g = 4.0 * rho * (m * (m - 1.0) * d1 * d1 + m * x * d2) + 2.0 * n * m * x * d1;
        sum += g.abs().powf(pc);
    }
    let v = sum * grid.cell_volume() * s2.powf(-pc);
    if !v.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(v)
}

/// The factored test function `φ_T(t, x) = η_T(t) μ_T(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub t_scale: f64,
    pub times: Vec<f64>,
    pub eta: Vec<f64>,
    pub mu: Field,
}

impl TestFunction {
    pub fn eval(&self, j: usize, idx: usize) -> f64 {
        self.eta[j] * self.mu.values()[idx]
    }
}

/// Samples `η_T` at 257 uniform times on `[0, T]` and `μ_T` on the grid.
pub fn build_phi(t: f64, params: &Params, cutoffs: &Cutoffs, grid: &Grid) -> Result<TestFunction> {
    let mu = spatial_cutoff(grid, t, params, cutoffs)?;
    let pc = conj(params.p());
    let times: Vec<f64> = (0..=256).map(|j| t * j as f64 / 256.0).collect();
    let eta = times.iter().map(|s| cutoffs.eta(s / t).powf(pc)).collect();
    Ok(TestFunction {
        t_scale: t,
        times,
        eta,
        mu,
    })
}

/// `∫_0^T∫ t^σ w φ_T` and its space factor `∫ w μ_T`.
pub fn forcing_functional(w: &ForcingSpec, t: f64, params: &Params, cutoffs: &Cutoffs) -> Result<f64> {
    let tf = time_factors(params, cutoffs)?;
    let space = forcing_space_factor(w, t, params, cutoffs)?;
    Ok(t.powf(params.sigma() + 1.0) * tf.forcing * space)
}

pub fn forcing_space_factor(w: &ForcingSpec, s2: f64, params: &Params, cutoffs: &Cutoffs) -> Result<f64> {
    let grid = w.profile().grid();
    let mu = spatial_cutoff(grid, s2, params, cutoffs)?;
    Ok(w.profile()
        .values()
        .iter()
        .zip(mu.values())
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * grid.cell_volume())
}

/// `(I1(T), I2(T))` for the single-scale test function.
pub fn dissipation_functionals(
    t: f64,
    params: &Params,
    cutoffs: &Cutoffs,
    grid: &Grid,
) -> Result<(f64, f64)> {
    let tf = time_factors(params, cutoffs)?;
    dissipation_with(t, t, params, &tf, cutoffs, grid)
}

fn dissipation_with(
    t: f64,
    s2: f64,
    params: &Params,
    tf: &TimeFactors,
    cutoffs: &Cutoffs,
    grid: &Grid,
) -> Result<(f64, f64)> {
    let pc = conj(params.p());
    let i1 = t * tf.mass * dissipation_space_integral(grid, s2, params, cutoffs)?;
    let mu_int = spatial_cutoff(grid, s2, params, cutoffs)?.integral();
    let i2 = pc.powf(pc) * t.powf(1.0 - pc) * tf.derivative * mu_int;
    Ok((i1, i2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateRow {
    pub t: f64,
    pub forcing: f64,
    pub i1: f64,
    pub i2: f64,
    /// Upper bound on `∫w` implied by a global solution.
    pub bound: f64,
    pub contradiction: bool,
    /// Whether `∫ w μ ≥ ½ ∫ w`.
    pub threshold_met: bool,
}

impl CertificateRow {
    pub fn contradiction_ratio(&self) -> f64 {
        (self.i1 + self.i2) / self.forcing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AsymptoticVerdict {
    /// The bound decays along the ladder: no global solution.
    Contradiction,
    NoContradiction,
    Inconclusive,
}

impl std::fmt::Display for AsymptoticVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Contradiction => "CONTRADICTION",
            Self::NoContradiction => "NO_CONTRADICTION",
            Self::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slopes {
    pub forcing: f64,
    pub i1: f64,
    pub i2: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub rows: Vec<CertificateRow>,
    pub slopes: Slopes,
    /// `N/2 − σ − p'` for one scale, `−σ` with the spatial scale fixed.
    pub expected_exponent: f64,
    pub mass: f64,
    pub radius: Option<f64>,
    pub young_constant: f64,
    pub verdict: AsymptoticVerdict,
}

/// Slopes within this band of zero leave the verdict open.
pub const SLOPE_DEAD_BAND: f64 = 1e-6;

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Evaluates the certificate along `t_ladder`. For `σ > 0` the spatial
/// scale is held at `radius` (default: the largest fitting the box), which
/// is the two-scale test function `η_T(t) ξ(|x|²/R²)^{2p'}`.
pub fn blowup_certificate(
    w: &ForcingSpec,
    params: &Params,
    cutoffs: &Cutoffs,
    t_ladder: &[f64],
    radius: Option<f64>,
) -> Result<CertificateReport> {
    if t_ladder.len() < 2 {
        return Err(Error::InvalidArgument(
            "certificate needs at least two T values".into(),
        ));
    }
    let grid = *w.profile().grid();
    let tf = time_factors(params, cutoffs)?;
    let sigma = params.sigma();
    let pc = conj(params.p());
    let two_scale = sigma > 0.0;
    let radius = if two_scale {
        Some(radius.unwrap_or(grid.half_width() / 2f64.sqrt()))
    } else {
        None
    };
    let mass = w.mass();
    let cy = young_constant(params.p());

    let rows = t_ladder
        .par_iter()
        .map(|&t| -> Result<CertificateRow> {
            let s2 = radius.map_or(t, |r| r * r);
            let space = forcing_space_factor(w, s2, params, cutoffs)?;
            let forcing = t.powf(sigma + 1.0) * tf.forcing * space;
            let (i1, i2) = dissipation_with(t, s2, params, &tf, cutoffs, &grid)?;
            let bound = if forcing > 0.0 {
                cy * (i1 + i2) * mass / forcing
            } else {
                f64::INFINITY
            };
            Ok(CertificateRow {
                t,
                forcing,
                i1,
                i2,
                bound,
                contradiction: mass > 0.0 && bound < mass,
                threshold_met: space >= 0.5 * mass,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let fit = |f: &dyn Fn(&CertificateRow) -> f64| {
        loglog_slope(&rows.iter().map(|r| (r.t, f(r))).collect::<Vec<_>>())
    };
    let slopes = Slopes {
        forcing: fit(&|r| r.forcing),
        i1: fit(&|r| r.i1),
        i2: fit(&|r| r.i2),
        bound: fit(&|r| r.bound),
    };
    let verdict = if !(mass > 0.0) || slopes.bound.is_nan() {
        AsymptoticVerdict::Inconclusive
    } else if slopes.bound < -SLOPE_DEAD_BAND {
        AsymptoticVerdict::Contradiction
    } else if slopes.bound > SLOPE_DEAD_BAND {
        AsymptoticVerdict::NoContradiction
    } else {
        AsymptoticVerdict::Inconclusive
    };
    let expected_exponent = if two_scale {
        -sigma
    } else {
        0.5 * params.dim() as f64 - sigma - pc
    };
    Ok(CertificateReport {
        rows,
        slopes,
        expected_exponent,
        mass,
        radius,
        young_constant: cy,
        verdict,
    })
}
