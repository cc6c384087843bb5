//! Time integration of the mild formulation with Strang splitting.
//!
//! Diffusion is applied exactly by the spectral propagator. The reaction
//! `v' = |v|^p + s^σ w` is solved pointwise with classical RK4 after
//! splitting off the forcing through its exact antiderivative
//! `(s^{σ+1} − s0^{σ+1})/(σ+1)`. For `σ < 0` the reaction is integrated in
//! `τ = s^{σ+1}`, where the integrand stays bounded at `s = 0`.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::exponents::{self, Params};
use crate::field::{lr_norm_slice, Field, ForcingSpec, Grid};
use crate::semigroup::Propagator;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub params: Params,
    pub dt0: f64,
    pub dt_min: f64,
    pub t_end: f64,
    /// Blow-up threshold on `‖u‖_∞`.
    pub u_max: f64,
    pub tol_step: f64,
    /// Keep a snapshot every this many accepted steps; 0 disables.
    pub snapshot_every: usize,
    /// Times the stepper must land on exactly; a snapshot is kept at each.
    pub output_times: Vec<f64>,
    /// Lebesgue index for the `L^q` and weighted records. Defaults to the
    /// window midpoint, or 2 when the window is empty.
    pub norm_q: Option<f64>,
    /// Diagnostic switch: `false` drops `|u|^p`.
    pub nonlinearity: bool,
    pub max_steps: usize,
}

impl SolveConfig {
    pub fn new(params: Params, t_end: f64) -> Self {
        Self {
            params,
            dt0: 1e-3,
            dt_min: 1e-12,
            t_end,
            u_max: 1e8,
            tol_step: 1e-7,
            snapshot_every: 0,
            output_times: Vec::new(),
            norm_q: None,
            nonlinearity: true,
            max_steps: 2_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt0) {
            return bad(format!(
                "need 0 < dtMin <= dt0 (dtMin = {}, dt0 = {})",
                self.dt_min, self.dt0
            ));
        }
        if !(self.u_max > 0.0) {
            return bad(format!("Umax = {} must be > 0", self.u_max));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("Tend = {} must be > 0", self.t_end));
        }
        if !(self.tol_step > 0.0) {
            return bad(format!("tolStep = {} must be > 0", self.tol_step));
        }
        if let Some(q) = self.norm_q {
            if !(q >= 1.0) {
                return bad(format!("norm q = {q} must be >= 1"));
            }
        }
        if self.output_times.iter().any(|t| !(*t > 0.0)) {
            return bad("output times must be positive".into());
        }
        Ok(())
    }

    /// `(q, d, β)` used for the norm records.
    pub fn norm_indices(&self) -> (f64, f64, f64) {
        let derived = exponents::derive(&self.params);
        let q = self.norm_q.or(derived.q_default).unwrap_or(2.0);
        let d = derived.d.max(1.0);
        (q, d, exponents::beta(&self.params, q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRecord {
    pub linf: f64,
    pub lq: f64,
    pub ld: f64,
    /// `t^β ‖u(t)‖_q`.
    pub weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    BlewUpAt(f64),
    ReachedHorizon,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub norms: Vec<NormRecord>,
    pub snapshots: Vec<(f64, Field)>,
    pub verdict: Verdict,
    pub q: f64,
    pub d: f64,
    pub beta: f64,
    pub final_field: Field,
    /// Largest boundary-shell `L^1` fraction seen.
    pub max_shell_fraction: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    /// Set when the solution's mass reached the box boundary shell.
    pub fn boundary_flagged(&self) -> bool {
        self.max_shell_fraction > 1e-6
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least t = 0")
    }

    /// Norm record at the recorded time closest to `t`.
    pub fn record_near(&self, t: f64) -> Option<(f64, NormRecord)> {
        self.times
            .iter()
            .zip(&self.norms)
            .min_by(|a, b| (a.0 - t).abs().total_cmp(&(b.0 - t).abs()))
            .map(|(t, n)| (*t, *n))
    }
}

fn weighted_value(t: f64, beta: f64, lq: f64) -> f64 {
    if t == 0.0 {
        if beta > 0.0 {
            0.0
        } else if beta == 0.0 {
            lq
        } else {
            f64::INFINITY
        }
    } else {
        t.powf(beta) * lq
    }
}

/// `|v|^p`, with a multiplication chain for small integer powers.
#[inline]
fn abs_pow(v: f64, p: f64, int_p: Option<i32>) -> f64 {
    match int_p {
        Some(k) => v.abs().powi(k),
        None => v.abs().powf(p),
    }
}

fn integer_power(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p <= 16.0).then_some(p as i32)
}

/// Pointwise reaction substep data for one interval `[s0, s0 + dt]`.
struct ReactionNodes {
    h: f64,
    /// Forcing weight `(s^{σ+1} − s0^{σ+1})/(σ+1)` at the start, middle and end node.
    phi: [f64; 3],
    /// `ds/dθ` at the three nodes.
    jac: [f64; 3],
}

fn power_increment(s0: f64, ds: f64, e: f64) -> f64 {
    // (s0 + ds)^e − s0^e without cancellation.
    if s0 == 0.0 {
        ds.powf(e)
    } else {
        s0.powf(e) * (e * (ds / s0).ln_1p()).exp_m1()
    }
}

fn reaction_nodes(s0: f64, dt: f64, sigma: f64) -> ReactionNodes {
    let e = sigma + 1.0;
    if sigma < 0.0 {
        // θ = τ = s^{σ+1}
        let tau0 = s0.powf(e);
        let h = power_increment(s0, dt, e);
        let taus = [tau0, tau0 + 0.5 * h, tau0 + h];
        let gamma = -sigma / e;
        let phi = [0.0, 0.5 * h / e, h / e];
        let jac = taus.map(|t| t.powf(gamma) / e);
        ReactionNodes { h, phi, jac }
    } else {
        let phi = [
            0.0,
            power_increment(s0, 0.5 * dt, e) / e,
            power_increment(s0, dt, e) / e,
        ];
        ReactionNodes {
            h: dt,
            phi,
            jac: [1.0; 3],
        }
    }
}

/// Advances `values` through the reaction `v' = |v|^p + s^σ w` on `[s0, s0+dt]`.
fn react(values: &mut [f64], w: &[f64], s0: f64, dt: f64, params: &Params, nonlinear: bool) {
    let nodes = reaction_nodes(s0, dt, params.sigma());
    let [p0, pm, p1] = nodes.phi;
    if !nonlinear {
        for (v, wi) in values.iter_mut().zip(w) {
            *v += wi * p1;
        }
        return;
    }
    let p = params.p();
    let ip = integer_power(p);
    let h = nodes.h;
    let [j0, jm, j1] = nodes.jac;
    for (v, &wi) in values.iter_mut().zip(w) {
        let z = *v;
        let k1 = j0 * abs_pow(z + wi * p0, p, ip);
        let k2 = jm * abs_pow(z + 0.5 * h * k1 + wi * pm, p, ip);
        let k3 = jm * abs_pow(z + 0.5 * h * k2 + wi * pm, p, ip);
        let k4 = j1 * abs_pow(z + h * k3 + wi * p1, p, ip);
        *v = z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + wi * p1;
    }
}

fn strang(
    prop: &Propagator,
    u: &[f64],
    t: f64,
    dt: f64,
    params: &Params,
    w: &[f64],
    nonlinear: bool,
) -> Vec<f64> {
    let mut v = prop.apply_values(u, 0.5 * dt);
    react(&mut v, w, t, dt, params, nonlinear);
    prop.apply_values(&v, 0.5 * dt)
}

/// One Strang step `e^{dtΔ/2} ∘ R(t, dt) ∘ e^{dtΔ/2}`. Overflow surfaces as
/// [`Error::NonFinite`].
pub fn step(
    prop: &Propagator,
    u: &Field,
    t: f64,
    dt: f64,
    params: &Params,
    w: &ForcingSpec,
) -> Result<Field> {
    prop.grid().check_same(u.grid())?;
    prop.grid().check_same(w.profile().grid())?;
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("step size {dt} must be > 0")));
    }
    let out = strang(prop, u.values(), t, dt, params, w.profile().values(), true);
    Field::new(*u.grid(), out)
}

fn shell_mask(grid: &Grid) -> Vec<bool> {
    let shell = 0.875 * grid.half_width();
    (0..grid.len())
        .map(|i| grid.point(i)[..grid.dim()].iter().any(|c| c.abs() >= shell))
        .collect()
}

fn shell_fraction(values: &[f64], mask: &[bool]) -> f64 {
    let (mut outer, mut total) = (0.0, 0.0);
    for (v, m) in values.iter().zip(mask) {
        total += v.abs();
        if *m {
            outer += v.abs();
        }
    }
    if total > 0.0 {
        outer / total
    } else {
        0.0
    }
}

pub fn run(u0: &Field, w: &ForcingSpec, cfg: &SolveConfig) -> Result<Trajectory> {
    let prop = Propagator::new(*u0.grid());
    run_with(&prop, u0, w, cfg)
}

/// Adaptive Strang integration with step-doubling error control.
///
/// Terminates with [`Verdict::BlewUpAt`] once `‖u‖_∞ ≥ Umax`, or when the
/// step collapses below `dtMin` while `‖u‖_∞` increased monotonically over
/// the last 10 accepted steps.
pub fn run_with(prop: &Propagator, u0: &Field, w: &ForcingSpec, cfg: &SolveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grid = *prop.grid();
    grid.check_same(u0.grid())?;
    grid.check_same(w.profile().grid())?;
    if cfg.params.dim() as usize != grid.dim() {
        return Err(Error::InvalidConfig(format!(
            "params N = {} but grid dimension is {}",
            cfg.params.dim(),
            grid.dim()
        )));
    }
    let (q, d, beta) = cfg.norm_indices();
    let params = cfg.params;
    let wv = w.profile().values();
    let mask = shell_mask(&grid);

    let mut outputs: Vec<f64> = cfg
        .output_times
        .iter()
        .copied()
        .filter(|t| *t <= cfg.t_end)
        .collect();
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    let mut next_output = 0;

    let record = |t: f64, vals: &[f64]| -> Result<NormRecord> {
        let lq = lr_norm_slice(&grid, vals, q)?;
        Ok(NormRecord {
            linf: lr_norm_slice(&grid, vals, f64::INFINITY)?,
            lq,
            ld: lr_norm_slice(&grid, vals, d)?,
            weighted: weighted_value(t, beta, lq),
        })
    };

    let mut u = u0.values().to_vec();
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut norms = vec![record(0.0, &u)?];
    let mut snapshots = Vec::new();
    let mut max_shell = shell_fraction(&u, &mask);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(11);
    recent.push_back(norms[0].linf);
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut dt = cfg.dt0;

    let verdict = loop {
        if t >= cfg.t_end {
            break Verdict::ReachedHorizon;
        }
        if accepted + rejected >= cfg.max_steps {
            break Verdict::Stalled;
        }
        while next_output < outputs.len() && outputs[next_output] <= t {
            next_output += 1;
        }
        let mut target = cfg.t_end;
        if next_output < outputs.len() {
            target = target.min(outputs[next_output]);
        }
        let clipped = t + dt >= target;
        let h = if clipped { target - t } else { dt };

        let full = strang(prop, &u, t, h, &params, wv, cfg.nonlinearity);
        let half = strang(prop, &u, t, 0.5 * h, &params, wv, cfg.nonlinearity);
        let half = strang(prop, &half, t + 0.5 * h, 0.5 * h, &params, wv, cfg.nonlinearity);

        let finite = full.iter().chain(&half).all(|v| v.is_finite());
        let err = if finite {
            let sup = half.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let diff = full
                .iter()
                .zip(&half)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            diff / (cfg.tol_step * sup.max(1.0))
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            t = if clipped { target } else { t + h };
            u = half;
            accepted += 1;
            let rec = record(t, &u)?;
            times.push(t);
            norms.push(rec);
            if recent.len() == 11 {
                recent.pop_front();
            }
            recent.push_back(rec.linf);
            if accepted % 16 == 0 {
                max_shell = max_shell.max(shell_fraction(&u, &mask));
            }
            let at_output = next_output < outputs.len() && t == outputs[next_output];
            if at_output || (cfg.snapshot_every > 0 && accepted % cfg.snapshot_every == 0) {
                snapshots.push((t, Field::new(grid, u.clone())?));
            }
            if rec.linf >= cfg.u_max {
                break Verdict::BlewUpAt(t);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-1.0 / 3.0)).min(5.0)
            };
            dt = if clipped { dt.max(h * factor) } else { h * factor };
        } else {
            rejected += 1;
            let factor = if err.is_finite() {
                (0.9 * err.powf(-1.0 / 3.0)).max(0.1)
            } else {
                0.25
            };
            dt = h * factor;
            if dt < cfg.dt_min {
                let growing = recent.len() >= 2
                    && recent.iter().zip(recent.iter().skip(1)).all(|(a, b)| b >= a)
                    && recent.back() > recent.front();
                break if growing {
                    Verdict::BlewUpAt(t)
                } else {
                    Verdict::Stalled
                };
            }
        }
    };

    max_shell = max_shell.max(shell_fraction(&u, &mask));
    Ok(Trajectory {
        times,
        norms,
        snapshots,
        verdict,
        q,
        d,
        beta,
        final_field: Field::new(grid, u)?,
        max_shell_fraction: max_shell,
        accepted_steps: accepted,
        rejected_steps: rejected,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeries {
    /// `(t, t^β ‖u(t)‖_q)`.
    pub points: Vec<(f64, f64)>,
    pub running_sup: Vec<f64>,
}

impl WeightedSeries {
    pub fn sup(&self) -> f64 {
        self.running_sup.last().copied().unwrap_or(0.0)
    }
}

/// `t^β ‖u(t)‖_q` along a trajectory. Uses the recorded norms when `q`
/// matches, otherwise recomputes from snapshots.
pub fn weighted_norm_series(traj: &Trajectory, beta: f64, q: f64) -> Result<WeightedSeries> {
    let points: Vec<(f64, f64)> = if q == traj.q {
        traj.times
            .iter()
            .zip(&traj.norms)
            .map(|(t, n)| (*t, weighted_value(*t, beta, n.lq)))
            .collect()
    } else if !traj.snapshots.is_empty() {
        traj.snapshots
            .iter()
            .map(|(t, f)| Ok((*t, weighted_value(*t, beta, f.lr_norm(q)?))))
            .collect::<Result<_>>()?
    } else {
        return Err(Error::MissingData(format!(
            "trajectory recorded q = {} and holds no snapshots for q = {q}",
            traj.q
        )));
    };
    let mut sup = f64::NEG_INFINITY;
    let running_sup = points
        .iter()
        .map(|(_, v)| {
            sup = sup.max(*v);
            sup
        })
        .collect();
    Ok(WeightedSeries { points, running_sup })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::heat_kernel;

    fn params(n: u32, p: f64, s: f64) -> Params {
        Params::new(n, p, s).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = SolveConfig::new(params(1, 2.0, 0.0), 1.0);
        assert!(c.validate().is_ok());
        c.dt_min = 1.0;
        assert!(c.validate().is_err());
        let mut c = SolveConfig::new(params(1, 2.0, 0.0), -1.0);
        assert!(c.validate().is_err());
        c.t_end = 1.0;
        c.u_max = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_stays_zero() {
        let g = Grid::new(1, 4.0, 16).unwrap();
        let prop = Propagator::new(g);
        let u = Field::zeros(g);
        let out = step(&prop, &u, 0.0, 0.1, &params(1, 3.0, -0.5), &ForcingSpec::zero(g)).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_step_matches_ode_order() {
        // u' = u², u(0) = c: exact u(dt) = c/(1 − c dt)
        let g = Grid::new(1, 4.0, 16).unwrap();
        let prop = Propagator::new(g);
        let c = 0.8;
        let u = Field::constant(g, c);
        let w = ForcingSpec::zero(g);
        let err = |dt: f64| {
            let out = step(&prop, &u, 0.0, dt, &params(1, 2.0, 0.0), &w).unwrap();
            (out.values()[3] - c / (1.0 - c * dt)).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        // Local error is O(dt^5): halving dt cuts it by ~32.
        assert!(e1 / e2 > 25.0, "{e1} {e2}");
    }

    #[test]
    fn singular_forcing_is_exact_without_nonlinearity() {
        // Uniform w = 1, σ = −1/2, no |u|^p: u(t) = 2√t exactly, even from t = 0.
        let g = Grid::new(1, 4.0, 16).unwrap();
        let mut cfg = SolveConfig::new(params(1, 2.0, -0.5), 2.0);
        cfg.nonlinearity = false;
        let traj = run(&Field::zeros(g), &ForcingSpec::new(Field::constant(g, 1.0)), &cfg).unwrap();
        assert_eq!(traj.verdict, Verdict::ReachedHorizon);
        let last = traj.final_field.values()[0];
        assert!((last - 2.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_data_blows_up_at_one() {
        let g = Grid::new(2, 4.0, 8).unwrap();
        let cfg = SolveConfig::new(params(2, 2.0, -0.5), 5.0);
        let traj = run(&Field::constant(g, 1.0), &ForcingSpec::zero(g), &cfg).unwrap();
        match traj.verdict {
            Verdict::BlewUpAt(t) => assert!((t - 1.0).abs() < 0.02, "{t}"),
            v => panic!("{v:?}"),
        }
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn lands_on_output_times() {
        let g = Grid::new(1, 8.0, 32).unwrap();
        let mut cfg = SolveConfig::new(params(1, 3.0, -0.5), 1.0);
        cfg.output_times = vec![0.25, 0.5, 0.125];
        let u0 = heat_kernel(&g, 0.5).unwrap().scaled(0.1).unwrap();
        let traj = run(&u0, &ForcingSpec::zero(g), &cfg).unwrap();
        let snap_times: Vec<f64> = traj.snapshots.iter().map(|s| s.0).collect();
        assert_eq!(snap_times, vec![0.125, 0.25, 0.5]);
        assert!(traj.times.contains(&0.25));
        assert_eq!(traj.final_time(), 1.0);
    }

    #[test]
    fn weighted_series_requires_data() {
        let g = Grid::new(1, 8.0, 16).unwrap();
        let cfg = SolveConfig::new(params(1, 3.0, -0.5), 0.1);
        let traj = run(&Field::zeros(g), &ForcingSpec::zero(g), &cfg).unwrap();
        let s = weighted_norm_series(&traj, 0.5, traj.q).unwrap();
        assert!(s.points.iter().all(|p| p.1 == 0.0));
        assert!(matches!(
            weighted_norm_series(&traj, 0.5, traj.q + 1.0),
            Err(Error::MissingData(_))
        ));
    }

    #[test]
    fn grid_mismatch_rejected() {
        let g = Grid::new(1, 8.0, 16).unwrap();
        let g2 = Grid::new(1, 8.0, 32).unwrap();
        let cfg = SolveConfig::new(params(1, 3.0, -0.5), 0.1);
        assert!(run(&Field::zeros(g), &ForcingSpec::zero(g2), &cfg).is_err());
        let cfg2 = SolveConfig::new(params(2, 3.0, -0.5), 0.1);
        assert!(run(&Field::zeros(g), &ForcingSpec::zero(g), &cfg2).is_err());
    }
}
