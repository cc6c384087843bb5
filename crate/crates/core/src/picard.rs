//! The weighted fixed-point map on a discrete time ladder.
//!
//! ```text
//! (S u)(t) = e^{tΔ} u0 + ∫_0^t e^{(t−s)Δ} |u(s)|^p ds + ∫_0^t s^σ e^{(t−s)Δ} w ds
//! ```
//!
//! The nonlinear integral treats `|u|^p` as piecewise linear in `s` between
//! rungs and integrates the heat factor exactly per Fourier mode, so the
//! whole history is folded into one spectral accumulator. The forcing
//! integral is exact per mode up to the quadrature of
//! `K(σ, z) = ∫_0^1 u^σ e^{−z(1−u)} du`.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exponents::{self, Params};
use crate::field::{lr_norm_slice, Field, ForcingSpec, Grid};
use crate::quad::{gauss_jacobi, integrate_adaptive, integrate_left_power, Rule};
use crate::semigroup::{estimate_smoothing_constant, Propagator};
pub use crate::special::beta_function;

pub const DEFAULT_T_CAP: f64 = 10.0;
pub const DEFAULT_RUNGS: usize = 64;
pub const DEFAULT_TOL: f64 = 1e-9;

/// Geometric ladder of `rungs` times on `[1e−6·t_cap, t_cap]`.
pub fn ladder_times(t_cap: f64, rungs: usize) -> Result<Vec<f64>> {
    if !(t_cap > 0.0 && t_cap.is_finite()) || rungs < 2 {
        return Err(Error::InvalidArgument(format!(
            "ladder needs t_cap > 0 and at least 2 rungs (got {t_cap}, {rungs})"
        )));
    }
    let t_min = 1e-6 * t_cap;
    let ratio = (t_cap / t_min).ln() / (rungs - 1) as f64;
    let mut times: Vec<f64> = (0..rungs).map(|j| t_min * (ratio * j as f64).exp()).collect();
    times[rungs - 1] = t_cap;
    Ok(times)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderSolution {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub q: f64,
    pub beta: f64,
    pub delta: f64,
    pub in_ball: bool,
}

impl LadderSolution {
    pub fn new(times: Vec<f64>, fields: Vec<Field>, q: f64, beta: f64, delta: f64) -> Result<Self> {
        if times.len() != fields.len() || times.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "ladder has {} times but {} fields",
                times.len(),
                fields.len()
            )));
        }
        let mut s = Self {
            times,
            fields,
            q,
            beta,
            delta,
            in_ball: false,
        };
        s.in_ball = s.xi_norm()? <= delta;
        Ok(s)
    }

    pub fn zeros(grid: Grid, times: Vec<f64>, q: f64, beta: f64, delta: f64) -> Result<Self> {
        let fields = vec![Field::zeros(grid); times.len()];
        Self::new(times, fields, q, beta, delta)
    }

    /// `t_j^β ‖u(t_j)‖_q` per rung.
    pub fn weighted_norms(&self) -> Result<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.fields)
            .map(|(t, f)| Ok(t.powf(self.beta) * f.lr_norm(self.q)?))
            .collect()
    }

    pub fn xi_norm(&self) -> Result<f64> {
        Ok(self.weighted_norms()?.into_iter().fold(0.0, f64::max))
    }

    /// Distance in the ball metric `max_j t_j^β ‖u_j − v_j‖_q`.
    pub fn xi_distance(&self, other: &LadderSolution) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::InvalidArgument("ladder mismatch".into()));
        }
        let mut d = 0.0_f64;
        for ((t, a), b) in self.times.iter().zip(&self.fields).zip(&other.fields) {
            a.grid().check_same(b.grid())?;
            let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
            d = d.max(t.powf(self.beta) * lr_norm_slice(a.grid(), &diff, self.q)?);
        }
        Ok(d)
    }
}

/// `K(σ, z) = ∫_0^1 u^σ e^{−z(1−u)} du` for `σ > −1`, `z ≥ 0`.
pub fn forcing_kernel(sigma: f64, z: f64, rule: &Rule) -> f64 {
    if z == 0.0 {
        return 1.0 / (sigma + 1.0);
    }
    // Gauss–Jacobi on [0, u1] where the exponential varies by at most e,
    // adaptive Gauss–Kronrod on the smooth remainder.
    let u1 = (1.0 / z).min(1.0);
    let head = integrate_left_power(rule, sigma, u1, |u| (-z * (1.0 - u)).exp());
    if u1 >= 1.0 {
        return head;
    }
    let tail = integrate_adaptive(|u| u.powf(sigma) * (-z * (1.0 - u)).exp(), u1, 1.0, 1e-14);
    head + tail
}

/// `(1 − e^{−z}(1+z))/z²`.
fn phi2(z: f64) -> f64 {
    if z < 0.1 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 2..14 {
            // term = z^{k−2}/k!
            term /= k as f64;
            sum += if k % 2 == 0 { 1.0 } else { -1.0 } * (k - 1) as f64 * term;
            term *= z;
        }
        sum
    } else {
        (1.0 - (-z).exp() * (1.0 + z)) / (z * z)
    }
}

/// `(1 − e^{−z})/z`.
fn phi1(z: f64) -> f64 {
    if z < 1e-8 {
        1.0 - 0.5 * z
    } else {
        -(-z).exp_m1() / z
    }
}

/// The three Duhamel terms at one rung.
#[derive(Debug, Clone, PartialEq)]
pub struct RungTerms {
    pub free: Vec<f64>,
    pub nonlinear: Vec<f64>,
    pub forcing: Vec<f64>,
}

/// Precomputed pieces of `S` for fixed data, parameters and ladder.
pub struct PicardOperator {
    prop: Propagator,
    params: Params,
    q: f64,
    beta: f64,
    times: Vec<f64>,
    u0: Field,
    w: ForcingSpec,
    mode_class: Vec<u32>,
    /// Per interval `[t_{j−1}, t_j]` (with `t_0 = 0`) and per distinct
    /// eigenvalue: decay `e^{−λh}` and the weights of the left and right
    /// endpoint values.
    decay: Vec<Vec<f64>>,
    w_left: Vec<Vec<f64>>,
    w_right: Vec<Vec<f64>>,
    free: Vec<Vec<f64>>,
    forcing: Vec<Vec<f64>>,
}

impl std::fmt::Debug for PicardOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PicardOperator")
            .field("params", &self.params)
            .field("q", &self.q)
            .field("rungs", &self.times.len())
            .finish()
    }
}

impl PicardOperator {
    pub fn new(u0: &Field, w: &ForcingSpec, params: &Params, q: f64, times: Vec<f64>) -> Result<Self> {
        let grid = *u0.grid();
        grid.check_same(w.profile().grid())?;
        if params.dim() as usize != grid.dim() {
            return Err(Error::InvalidConfig(format!(
                "params N = {} but grid dimension is {}",
                params.dim(),
                grid.dim()
            )));
        }
        exponents::verify_scaling_identities(params, q)?;
        if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "ladder times must be positive and strictly increasing".into(),
            ));
        }
        let prop = Propagator::new(grid);
        let eig = prop.eigenvalues();
        let mut distinct: Vec<f64> = eig.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mode_class = eig
            .iter()
            .map(|l| distinct.binary_search_by(|x| x.total_cmp(l)).expect("present") as u32)
            .collect();

        let mut decay = Vec::with_capacity(times.len());
        let mut w_left = Vec::with_capacity(times.len());
        let mut w_right = Vec::with_capacity(times.len());
        let mut prev = 0.0;
        for &t in &times {
            let h = t - prev;
            let mut e = Vec::with_capacity(distinct.len());
            let mut a = Vec::with_capacity(distinct.len());
            let mut b = Vec::with_capacity(distinct.len());
            for &l in &distinct {
                let z = l * h;
                let g = phi2(z);
                e.push((-z).exp());
                a.push(h * g);
                b.push(h * (phi1(z) - g));
            }
            decay.push(e);
            w_left.push(a);
            w_right.push(b);
            prev = t;
        }

        let free = times.iter().map(|&t| prop.apply_values(u0.values(), t)).collect();

        let sigma = params.sigma();
        let rule = gauss_jacobi(24, 0.0, sigma)?;
        let w_hat = prop.forward(w.profile().values());
        let forcing = if w.is_zero() {
            vec![vec![0.0; grid.len()]; times.len()]
        } else {
            times
                .iter()
                .map(|&t| {
                    let scale = t.powf(sigma + 1.0);
                    let j: Vec<f64> = distinct
                        .iter()
                        .map(|&l| scale * forcing_kernel(sigma, l * t, &rule))
                        .collect();
                    let spec = w_hat
                        .iter()
                        .zip(&mode_class)
                        .map(|(c, &m)| c * j[m as usize])
                        .collect();
                    prop.inverse(spec)
                })
                .collect()
        };

        Ok(Self {
            beta: exponents::beta(params, q),
            prop,
            params: *params,
            q,
            times,
            u0: u0.clone(),
            w: w.clone(),
            mode_class,
            decay,
            w_left,
            w_right,
            free,
            forcing,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn free_term(&self, j: usize) -> &[f64] {
        &self.free[j]
    }

    pub fn forcing_term(&self, j: usize) -> &[f64] {
        &self.forcing[j]
    }

    fn check_ladder(&self, u: &LadderSolution) -> Result<()> {
        if u.times != self.times {
            return Err(Error::InvalidArgument(format!(
                "ladder mismatch: solution has {} rungs, operator {}",
                u.times.len(),
                self.times.len()
            )));
        }
        for f in &u.fields {
            self.prop.grid().check_same(f.grid())?;
        }
        Ok(())
    }

    /// `∫_0^{t_j} e^{(t_j−s)Δ}|u(s)|^p ds` at every rung, with `u(0) = u0`.
    pub fn nonlinear_terms(&self, u: &LadderSolution) -> Result<Vec<Vec<f64>>> {
        self.check_ladder(u)?;
        let p = self.params.p();
        let pow = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x.abs().powf(p)).collect() };
        let mut prev_hat = self.prop.forward(&pow(self.u0.values()));
        let mut acc = vec![Complex64::new(0.0, 0.0); prev_hat.len()];
        let mut out = Vec::with_capacity(self.times.len());
        for (j, f) in u.fields.iter().enumerate() {
            let cur_hat = self.prop.forward(&pow(f.values()));
            let (e, a, b) = (&self.decay[j], &self.w_left[j], &self.w_right[j]);
            for (m, slot) in acc.iter_mut().enumerate() {
                let c = self.mode_class[m] as usize;
                *slot = *slot * e[c] + prev_hat[m] * a[c] + cur_hat[m] * b[c];
            }
            out.push(self.prop.inverse(acc.clone()));
            prev_hat = cur_hat;
        }
        Ok(out)
    }

    pub fn terms(&self, u: &LadderSolution) -> Result<Vec<RungTerms>> {
        let nl = self.nonlinear_terms(u)?;
        Ok(nl
            .into_iter()
            .enumerate()
            .map(|(j, nonlinear)| RungTerms {
                free: self.free[j].clone(),
                nonlinear,
                forcing: self.forcing[j].clone(),
            })
            .collect())
    }

    /// The Duhamel map without the nonlinearity, `u⁰` of the iteration.
    pub fn linear_part(&self, delta: f64) -> Result<LadderSolution> {
        let grid = *self.prop.grid();
        let fields = self
            .free
            .iter()
            .zip(&self.forcing)
            .map(|(a, b)| Field::new(grid, a.iter().zip(b).map(|(x, y)| x + y).collect()))
            .collect::<Result<_>>()?;
        LadderSolution::new(self.times.clone(), fields, self.q, self.beta, delta)
    }

    pub fn apply(&self, u: &LadderSolution) -> Result<LadderSolution> {
        let grid = *self.prop.grid();
        let nl = self.nonlinear_terms(u)?;
        let fields = nl
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                let vals = v
                    .iter()
                    .zip(&self.free[j])
                    .zip(&self.forcing[j])
                    .map(|((a, b), c)| a + b + c)
                    .collect();
                Field::new(grid, vals)
            })
            .collect::<Result<_>>()?;
        LadderSolution::new(self.times.clone(), fields, self.q, self.beta, u.delta)
    }

    /// Largest smoothing ratio over the three index pairs of the audit:
    /// `d → q` on `u0`, `k → q` on `w`, and `q/p → q` on `|u_j|^p` (or on
    /// the linear part when no solution is given), at ladder times.
    pub fn measure_c1hat(&self, u: Option<&LadderSolution>) -> Result<f64> {
        let derived = exponents::derive(&self.params);
        let (q, p) = (self.q, self.params.p());
        let times: Vec<f64> = self.times.iter().copied().step_by(2).collect();
        let mut c1 = 0.0_f64;
        if self.u0.sup_norm() > 0.0 {
            let rep = estimate_smoothing_constant(
                &self.prop,
                derived.d,
                q,
                std::slice::from_ref(&self.u0),
                &self.times,
            )?;
            c1 = c1.max(rep.c1hat);
        }
        if !self.w.is_zero() {
            let rep = estimate_smoothing_constant(
                &self.prop,
                derived.k,
                q,
                &[self.w.profile().clone()],
                &self.times,
            )?;
            c1 = c1.max(rep.c1hat);
        }
        let base = match u {
            Some(u) => u.clone(),
            None => self.linear_part(f64::INFINITY)?,
        };
        let probes: Vec<Field> = base
            .fields
            .iter()
            .step_by(2)
            .filter(|f| f.sup_norm() > 0.0)
            .map(|f| f.map(|v| v.abs().powf(p)))
            .collect::<Result<_>>()?;
        if !probes.is_empty() {
            let rep = estimate_smoothing_constant(&self.prop, q / p, q, &probes, &times)?;
            c1 = c1.max(rep.c1hat);
        }
        if c1 == 0.0 {
            // No nonzero probe: fall back to the contraction constant.
            return Ok(1.0);
        }
        // Guard against the last-ulp disagreement between t^β and the
        // smoothing weight, which are equal only in exact arithmetic.
        Ok(c1 * (1.0 + 1e-12))
    }

    /// The two Beta factors of the nonlinear and forcing bounds.
    pub fn beta_factors(&self) -> Result<(f64, f64)> {
        let derived = exponents::derive(&self.params);
        let (n, p, q, s) = (
            self.params.dim() as f64,
            self.params.p(),
            self.q,
            self.params.sigma(),
        );
        let b_nl = beta_function(1.0 - self.beta * p, 1.0 - n * (p - 1.0) / (2.0 * q))?;
        let b_f = beta_function(s + 1.0, 1.0 - 0.5 * n * (1.0 / derived.k - 1.0 / q))?;
        Ok((b_nl, b_f))
    }

    /// `C* = ĉ1 · max(1, B_nl, B_f)`.
    pub fn c_star(&self, c1hat: f64) -> Result<f64> {
        let (b1, b2) = self.beta_factors()?;
        Ok(c1hat * b1.max(b2).max(1.0))
    }

    pub fn iterate(
        &self,
        delta: f64,
        max_iter: usize,
        tol: f64,
    ) -> Result<(LadderSolution, ContractionDiagnostics)> {
        let mut u = self.linear_part(delta)?;
        let mut distances = Vec::new();
        let mut all_in_ball = u.in_ball;
        let mut growth = 0;
        let mut status = IterationStatus::MaxIterations;
        for _ in 0..max_iter {
            let next = self.apply(&u)?;
            let d = next.xi_distance(&u)?;
            if let Some(&last) = distances.last() {
                growth = if d > last { growth + 1 } else { 0 };
            }
            distances.push(d);
            all_in_ball &= next.in_ball;
            u = next;
            if d < tol {
                status = IterationStatus::Converged;
                break;
            }
            if growth >= 3 || !d.is_finite() {
                status = IterationStatus::NonContractive;
                break;
            }
        }
        let residual = self.apply(&u)?.xi_distance(&u)?;
        let diag = ContractionDiagnostics {
            iterates: distances.len(),
            ratio_estimate: fit_ratio(&distances),
            distances,
            residual,
            status,
            all_in_ball,
        };
        Ok((u, diag))
    }

    pub fn audit(&self, u: &LadderSolution) -> Result<EstimateAudit> {
        let derived = exponents::derive(&self.params);
        let c1hat = self.measure_c1hat(Some(u))?;
        let (b_nl, b_f) = self.beta_factors()?;
        let u0_d = self.u0.lr_norm(derived.d)?;
        let w_k = if self.w.is_zero() {
            0.0
        } else {
            self.w.profile().lr_norm(derived.k)?
        };
        let grid = self.prop.grid();
        let nl = self.nonlinear_terms(u)?;
        let (bf, bn, bw) = (
            c1hat * u0_d,
            c1hat * b_nl * u.delta.powf(self.params.p()),
            c1hat * b_f * w_k,
        );
        let mut rows = Vec::with_capacity(self.times.len());
        for (j, &t) in self.times.iter().enumerate() {
            let wt = t.powf(self.beta);
            let free = wt * lr_norm_slice(grid, &self.free[j], self.q)?;
            let nonlinear = wt * lr_norm_slice(grid, &nl[j], self.q)?;
            let forcing = wt * lr_norm_slice(grid, &self.forcing[j], self.q)?;
            rows.push(AuditRow {
                t,
                free,
                nonlinear,
                forcing,
                bound_free: bf,
                bound_nonlinear: bn,
                bound_forcing: bw,
            });
        }
        Ok(EstimateAudit {
            c1hat,
            beta_nonlinear: b_nl,
            beta_forcing: b_f,
            c_star: c1hat * b_nl.max(b_f).max(1.0),
            rows,
        })
    }
}

/// Least-squares geometric ratio `exp(slope)` of `ln d_m` against `m`.
pub fn fit_ratio(distances: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > 0.0 && d.is_finite())
        .map(|(m, d)| (m as f64, d.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxy / sxx).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IterationStatus {
    Converged,
    NonContractive,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionDiagnostics {
    pub iterates: usize,
    pub distances: Vec<f64>,
    pub ratio_estimate: f64,
    /// `d(S u*, u*)` after the last iterate.
    pub residual: f64,
    pub status: IterationStatus,
    pub all_in_ball: bool,
}

impl ContractionDiagnostics {
    pub fn converged(&self) -> bool {
        self.status == IterationStatus::Converged && self.ratio_estimate < 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRow {
    pub t: f64,
    pub free: f64,
    pub nonlinear: f64,
    pub forcing: f64,
    pub bound_free: f64,
    pub bound_nonlinear: f64,
    pub bound_forcing: f64,
}

impl AuditRow {
    pub fn margins(&self) -> [f64; 3] {
        [
            self.bound_free - self.free,
            self.bound_nonlinear - self.nonlinear,
            self.bound_forcing - self.forcing,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateAudit {
    pub c1hat: f64,
    pub beta_nonlinear: f64,
    pub beta_forcing: f64,
    pub c_star: f64,
    pub rows: Vec<AuditRow>,
}

impl EstimateAudit {
    pub fn min_margin(&self) -> f64 {
        self.rows
            .iter()
            .flat_map(|r| r.margins())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Outcome of a full fixed-point solve with the measured constants.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub solution: LadderSolution,
    pub diagnostics: ContractionDiagnostics,
    pub c1hat: f64,
    pub c_star: f64,
    pub delta_max: f64,
    pub data_budget: f64,
    /// `‖u0‖_d + ‖w‖_k`.
    pub data_size: f64,
    pub outside_guarantee: bool,
}

pub fn apply_s(
    u: &LadderSolution,
    u0: &Field,
    w: &ForcingSpec,
    params: &Params,
    q: f64,
) -> Result<LadderSolution> {
    PicardOperator::new(u0, w, params, q, u.times.clone())?.apply(u)
}

/// Iterates `S` from the free term on the default ladder. With `delta`
/// unset the ball radius is half of the smallness threshold computed from
/// the measured `C*`.
pub fn iterate_to_fixed_point(
    u0: &Field,
    w: &ForcingSpec,
    params: &Params,
    q: f64,
    delta: Option<f64>,
    max_iter: usize,
) -> Result<PicardOutcome> {
    let times = ladder_times(DEFAULT_T_CAP, DEFAULT_RUNGS)?;
    solve_on_ladder(u0, w, params, q, delta, max_iter, times)
}

pub fn solve_on_ladder(
    u0: &Field,
    w: &ForcingSpec,
    params: &Params,
    q: f64,
    delta: Option<f64>,
    max_iter: usize,
    times: Vec<f64>,
) -> Result<PicardOutcome> {
    let op = PicardOperator::new(u0, w, params, q, times)?;
    let c1hat = op.measure_c1hat(None)?;
    let c_star = op.c_star(c1hat)?;
    let budget = exponents::picard_smallness(params, c_star)?;
    let delta = delta.unwrap_or(0.5 * budget.delta_max);
    let derived = exponents::derive(params);
    let data_size = u0.lr_norm(derived.d)?
        + if w.is_zero() {
            0.0
        } else {
            w.profile().lr_norm(derived.k)?
        };
    let outside_guarantee = delta > budget.delta_max || data_size > delta / (2.0 * c_star);
    if outside_guarantee {
        log::warn!(
            "data size {data_size:.3e} exceeds the budget {:.3e} for delta = {delta:.3e}",
            delta / (2.0 * c_star)
        );
    }
    let (solution, diagnostics) = op.iterate(delta, max_iter, DEFAULT_TOL)?;
    Ok(PicardOutcome {
        solution,
        diagnostics,
        c1hat,
        c_star,
        delta_max: budget.delta_max,
        data_budget: budget.data_budget,
        data_size,
        outside_guarantee,
    })
}

pub fn audit_estimates(
    u: &LadderSolution,
    u0: &Field,
    w: &ForcingSpec,
    params: &Params,
    q: f64,
) -> Result<EstimateAudit> {
    PicardOperator::new(u0, w, params, q, u.times.clone())?.audit(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_bump, BumpKind};

    fn setup() -> (Grid, Params, f64) {
        let g = Grid::new(2, 16.0, 32).unwrap();
        let p = Params::new(2, 4.0, -0.5).unwrap();
        (g, p, 6.0)
    }

    #[test]
    fn ladder_shape() {
        let t = ladder_times(10.0, 64).unwrap();
        assert_eq!(t.len(), 64);
        assert!((t[0] - 1e-5).abs() < 1e-20);
        assert_eq!(t[63], 10.0);
        let r = t[1] / t[0];
        for w in t.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-9);
        }
        assert!(ladder_times(10.0, 1).is_err());
    }

    #[test]
    fn exponential_weights_series_matches_direct() {
        for z in [1e-6_f64, 1e-3, 0.05, 0.0999] {
            let direct = (1.0 - (-z).exp() * (1.0 + z)) / (z * z);
            let tol = if z < 1e-2 { 1e-4 } else { 1e-10 };
            assert!((phi2(z) - direct).abs() < tol, "{z}");
        }
        assert!((phi2(0.1) - phi2(0.1 - 1e-12)).abs() < 1e-10);
        assert_eq!(phi2(0.0), 0.5);
    }

    #[test]
    fn kernel_against_adaptive_oracle() {
        let sigma = -0.5;
        let rule = gauss_jacobi(24, 0.0, sigma).unwrap();
        for z in [0.0, 0.3, 2.0, 17.0, 150.0, 4000.0] {
            // substitute u = v² to remove the singularity
            let f = |v: f64| 2.0 * (-z * (1.0 - v * v)).exp();
            let split = (1.0 - 60.0 / z).max(0.0).sqrt();
            let want = integrate_adaptive(f, 0.0, split, 1e-15) + integrate_adaptive(f, split, 1.0, 1e-15);
            let got = forcing_kernel(sigma, z, &rule);
            assert!(
                (got - want).abs() < 1e-12 * want.max(1e-300) + 1e-300,
                "{z}: {got} {want}"
            );
        }
        let rule = gauss_jacobi(24, 0.0, 1.0).unwrap();
        // σ = 1: ∫ u e^{−z(1−u)} du = (z − 1 + e^{−z})/z²
        for z in [0.5f64, 5.0, 80.0] {
            let want = (z - 1.0 + (-z).exp()) / (z * z);
            assert!((forcing_kernel(1.0, z, &rule) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let (g, p, q) = setup();
        let times = ladder_times(10.0, 16).unwrap();
        let zero = LadderSolution::zeros(g, times, q, exponents::beta(&p, q), 1.0).unwrap();
        let s = apply_s(&zero, &Field::zeros(g), &ForcingSpec::zero(g), &p, q).unwrap();
        assert!(s.fields.iter().all(|f| f.sup_norm() == 0.0));
        let out =
            iterate_to_fixed_point(&Field::zeros(g), &ForcingSpec::zero(g), &p, q, Some(1.0), 20).unwrap();
        assert_eq!(out.diagnostics.iterates, 1);
        assert_eq!(out.diagnostics.status, IterationStatus::Converged);
    }

    #[test]
    fn constant_data_nonlinear_term() {
        // u ≡ c on every rung: ∫_0^t e^{(t−s)Δ} c^p ds = c^p t exactly.
        let (g, p, q) = setup();
        let times = ladder_times(1.0, 12).unwrap();
        let c = 0.3;
        let u0 = Field::constant(g, c);
        let op = PicardOperator::new(&u0, &ForcingSpec::zero(g), &p, q, times.clone()).unwrap();
        let u = LadderSolution::new(times.clone(), vec![u0.clone(); 12], q, op.beta(), 1.0).unwrap();
        let nl = op.nonlinear_terms(&u).unwrap();
        for (t, v) in times.iter().zip(&nl) {
            for x in v {
                assert!((x - c.powi(4) * t).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, p, _) = setup();
        let u0 = Field::zeros(g);
        let w = ForcingSpec::zero(g);
        assert!(matches!(
            PicardOperator::new(&u0, &w, &p, 2.0, vec![1.0]),
            Err(Error::QOutsideWindow { .. })
        ));
        assert!(PicardOperator::new(&u0, &w, &p, 6.0, vec![1.0, 0.5]).is_err());
        let op = PicardOperator::new(&u0, &w, &p, 6.0, vec![0.5, 1.0]).unwrap();
        let other = LadderSolution::zeros(g, vec![0.5], 6.0, op.beta(), 1.0).unwrap();
        assert!(op.apply(&other).is_err());
    }

    #[test]
    fn small_data_contracts_and_audits() {
        let (g, p, q) = setup();
        let u0 = make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 1.0, 0.02).unwrap();
        let w = ForcingSpec::new(make_bump(&g, BumpKind::Gaussian, &[0.0, 0.0], 1.0, 0.02).unwrap());
        let out = iterate_to_fixed_point(&u0, &w, &p, q, None, 50).unwrap();
        let d = &out.diagnostics;
        assert!(d.converged(), "{d:?}");
        assert!(d.residual <= 1e-8);
        assert!(d.ratio_estimate < 1.0);
        let audit = audit_estimates(&out.solution, &u0, &w, &p, q).unwrap();
        assert!(audit.min_margin() >= 0.0, "{audit:?}");
    }
}
