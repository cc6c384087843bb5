//! Batteries of `evolve` runs over a `(p, σ, scale)` lattice.

use rayon::prelude::*;

use crate::certificate::loglog_slope;
use crate::error::{Error, Result};
use crate::evolve::{run, SolveConfig, Trajectory, Verdict};
use crate::exponents::{self, classify_regime, CriticalExponent, Params, Regime};
use crate::field::{Field, ForcingSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub dim: u32,
    pub p_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    /// Multipliers applied to both data profiles.
    pub data_scales: Vec<f64>,
    /// Unit-amplitude initial profile; its grid is the sweep grid.
    pub u0_profile: Field,
    pub w_profile: Field,
    /// Step-control template; `params`, `t_end` and `output_times` are set per job.
    pub template: SolveConfig,
    /// Lebesgue index of the weighted tail `t^β‖u‖_q` used for classification.
    pub tail_q: f64,
    pub t_end: f64,
    pub t_end_max: f64,
    pub workers: usize,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.p_values.is_empty() || self.sigma_values.is_empty() || self.data_scales.is_empty() {
            return bad("sweep lattice is empty");
        }
        if self.sigma_values.iter().any(|s| !(*s > -1.0)) {
            return bad("every sigma must exceed -1");
        }
        if self.p_values.iter().any(|p| !(*p > 1.0)) {
            return bad("every p must exceed 1");
        }
        if self.data_scales.iter().any(|s| !(*s >= 0.0)) {
            return bad("data scales must be nonnegative");
        }
        if !(self.tail_q >= 1.0) {
            return bad("tail q must be >= 1");
        }
        if !(self.t_end > 0.0 && self.t_end_max >= self.t_end) {
            return bad("need 0 < Tend <= TendMax");
        }
        self.u0_profile.grid().check_same(self.w_profile.grid())?;
        if self.u0_profile.grid().dim() != self.dim as usize {
            return bad("profile grid dimension differs from N");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseVerdict {
    BlowUp(f64),
    GlobalCandidate,
    Undetermined,
}

impl PhaseVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            Self::BlowUp(_) => "BlowUp",
            Self::GlobalCandidate => "GlobalCandidate",
            Self::Undetermined => "Undetermined",
        }
    }

    pub fn blow_up_time(&self) -> Option<f64> {
        match self {
            Self::BlowUp(t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub p: f64,
    pub sigma: f64,
    pub scale: f64,
    pub verdict: PhaseVerdict,
    pub theory: Option<Regime>,
    /// Horizon of the run that produced the verdict.
    pub t_end: f64,
    /// Log-log slope of `t^β‖u‖_q` over the last decade, when the horizon was reached.
    pub tail_slope: Option<f64>,
    pub boundary_flagged: bool,
    pub note: String,
}

/// Least-squares log-log slope of the weighted norm on `[t_end/10, t_end]`.
/// A series that vanishes identically counts as non-increasing.
pub fn tail_slope(traj: &Trajectory, t_end: f64) -> f64 {
    let pts: Vec<(f64, f64)> = traj
        .times
        .iter()
        .zip(&traj.norms)
        .filter(|(t, _)| **t >= 0.1 * t_end * (1.0 - 1e-12))
        .map(|(t, n)| (*t, n.weighted))
        .collect();
    if pts.iter().all(|(_, v)| *v == 0.0) {
        return 0.0;
    }
    loglog_slope(&pts)
}

fn decade_outputs(t_end: f64) -> Vec<f64> {
    (0..=10).map(|k| t_end * 10f64.powf(-(k as f64) / 10.0)).collect()
}

/// One lattice point, escalating the horizon ×10 while the tail still grows.
pub fn run_point(plan: &SweepPlan, p: f64, sigma: f64, scale: f64, t_start: f64) -> PhasePoint {
    let mut point = PhasePoint {
        p,
        sigma,
        scale,
        verdict: PhaseVerdict::Undetermined,
        theory: None,
        t_end: t_start,
        tail_slope: None,
        boundary_flagged: false,
        note: String::new(),
    };
    let params = match Params::new(plan.dim, p, sigma) {
        Ok(params) => params,
        Err(e) => {
            point.note = e.to_string();
            return point;
        }
    };
    point.theory = classify_regime(&params).ok();
    let data = plan
        .u0_profile
        .scaled(scale)
        .and_then(|u0| Ok((u0, ForcingSpec::new(plan.w_profile.scaled(scale)?))));
    let (u0, w) = match data {
        Ok(d) => d,
        Err(e) => {
            point.note = e.to_string();
            return point;
        }
    };
    let mut t_end = t_start;
    loop {
        let mut cfg = plan.template.clone();
        cfg.params = params;
        cfg.t_end = t_end;
        cfg.output_times = decade_outputs(t_end);
        cfg.snapshot_every = 0;
        cfg.norm_q = Some(plan.tail_q);
        point.t_end = t_end;
        let traj = match run(&u0, &w, &cfg) {
            Ok(t) => t,
            Err(e) => {
                point.note = e.to_string();
                return point;
            }
        };
        point.boundary_flagged = traj.boundary_flagged();
        match traj.verdict {
            Verdict::BlewUpAt(t) => {
                point.verdict = PhaseVerdict::BlowUp(t);
                point.tail_slope = None;
                point.note.clear();
                return point;
            }
            Verdict::Stalled => {
                point.note = "step size collapsed without monotone growth".into();
                return point;
            }
            Verdict::ReachedHorizon => {
                let slope = tail_slope(&traj, t_end);
                point.tail_slope = Some(slope);
                if slope <= 0.0 {
                    point.verdict = PhaseVerdict::GlobalCandidate;
                    point.note.clear();
                    return point;
                }
                if t_end * 10.0 > plan.t_end_max * (1.0 + 1e-12) {
                    point.note = format!("weighted norm still increasing at Tend = {t_end}");
                    return point;
                }
                t_end *= 10.0;
            }
        }
    }
}

/// Runs every lattice point on a pool of `plan.workers` threads. Results
/// are ordered by `(σ, scale, p)` lattice index regardless of scheduling.
pub fn execute(plan: &SweepPlan) -> Result<Vec<PhasePoint>> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for &sigma in &plan.sigma_values {
        for &scale in &plan.data_scales {
            for &p in &plan.p_values {
                jobs.push((p, sigma, scale));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut points: Vec<PhasePoint> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, sigma, scale)| run_point(plan, p, sigma, scale, plan.t_end))
            .collect()
    });
    enforce_monotonicity(plan, &mut points);
    Ok(points)
}

fn smallest_scale(points: &[PhasePoint], sigma: f64) -> Option<f64> {
    points
        .iter()
        .filter(|pt| pt.sigma == sigma)
        .map(|pt| pt.scale)
        .min_by(f64::total_cmp)
}

fn column(points: &[PhasePoint], sigma: f64, scale: f64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].sigma == sigma && points[i].scale == scale)
        .collect();
    idx.sort_by(|a, b| points[*a].p.total_cmp(&points[*b].p));
    idx
}

/// A `GlobalCandidate` below a `BlowUp` in the same `σ < 0` column at the
/// smallest scale is re-run with twice its horizon; if the conflict
/// persists it is reported as `Undetermined`.
fn enforce_monotonicity(plan: &SweepPlan, points: &mut [PhasePoint]) {
    let mut sigmas = plan.sigma_values.clone();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    for sigma in sigmas.into_iter().filter(|s| *s < 0.0) {
        let Some(scale) = smallest_scale(points, sigma) else {
            continue;
        };
        let col = column(points, sigma, scale);
        let top_blowup = col
            .iter()
            .rev()
            .find(|&&i| matches!(points[i].verdict, PhaseVerdict::BlowUp(_)))
            .map(|&i| points[i].p);
        let Some(top) = top_blowup else { continue };
        for &i in &col {
            if points[i].p < top && points[i].verdict == PhaseVerdict::GlobalCandidate {
                let rerun = run_point(plan, points[i].p, sigma, scale, 2.0 * points[i].t_end);
                points[i] = match rerun.verdict {
                    PhaseVerdict::GlobalCandidate => PhasePoint {
                        verdict: PhaseVerdict::Undetermined,
                        note: format!("monotonicity violation: BlowUp at p = {top}"),
                        ..rerun
                    },
                    _ => rerun,
                };
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryStatus {
    Bracketed { below: f64 },
    Unbracketed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEstimate {
    pub sigma: f64,
    pub p_hat: Option<f64>,
    pub p_star_theory: CriticalExponent,
    pub status: BoundaryStatus,
}

/// Smallest `GlobalCandidate` p at the smallest data scale for this σ,
/// required to sit above some `BlowUp` p.
pub fn estimate_boundary(points: &[PhasePoint], dim: u32, sigma: f64) -> BoundaryEstimate {
    let p_star_theory = exponents::p_star(dim, sigma);
    let mut est = BoundaryEstimate {
        sigma,
        p_hat: None,
        p_star_theory,
        status: BoundaryStatus::Unbracketed("no points for this sigma".into()),
    };
    let Some(scale) = smallest_scale(points, sigma) else {
        return est;
    };
    let col = column(points, sigma, scale);
    let first_global = col
        .iter()
        .find(|&&i| points[i].verdict == PhaseVerdict::GlobalCandidate)
        .map(|&i| points[i].p);
    let Some(p_hat) = first_global else {
        let all_blow = col
            .iter()
            .all(|&i| matches!(points[i].verdict, PhaseVerdict::BlowUp(_)));
        est.status = BoundaryStatus::Unbracketed(if all_blow && p_star_theory.is_infinite() {
            "every p blew up; pStar = inf".into()
        } else {
            "no GlobalCandidate on the lattice".into()
        });
        return est;
    };
    est.p_hat = Some(p_hat);
    let below = col
        .iter()
        .rev()
        .filter(|&&i| points[i].p < p_hat)
        .find(|&&i| matches!(points[i].verdict, PhaseVerdict::BlowUp(_)))
        .map(|&i| points[i].p);
    est.status = match below {
        Some(b) => BoundaryStatus::Bracketed { below: b },
        None => BoundaryStatus::Unbracketed("no BlowUp below pHat".into()),
    };
    est
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscontinuityRow {
    pub sigma: f64,
    pub p_star_theory: CriticalExponent,
    pub p_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscontinuityReport {
    pub dim: u32,
    pub rows: Vec<DiscontinuityRow>,
    /// `lim_{σ→0⁻} p*(σ)`: `N/(N−2)` for `N ≥ 3`, infinite otherwise.
    pub left_limit: CriticalExponent,
    pub right_limit: CriticalExponent,
}

/// Tabulates the formula `p*(σ)` on both sides of 0 next to the empirical
/// `pHat(σ)` from `points` (if any). Only the formula side is exact.
pub fn discontinuity_probe(
    dim: u32,
    sigma_ladder: &[f64],
    points: &[PhasePoint],
) -> Result<DiscontinuityReport> {
    if sigma_ladder.contains(&0.0) {
        return Err(Error::InvalidArgument("sigma ladder must exclude 0".into()));
    }
    let rows = sigma_ladder
        .iter()
        .map(|&sigma| DiscontinuityRow {
            sigma,
            p_star_theory: exponents::p_star(dim, sigma),
            p_hat: estimate_boundary(points, dim, sigma).p_hat,
        })
        .collect();
    let left_limit = if dim >= 3 {
        CriticalExponent::Finite(dim as f64 / (dim as f64 - 2.0))
    } else {
        CriticalExponent::Infinite
    };
    Ok(DiscontinuityReport {
        dim,
        rows,
        left_limit,
        right_limit: CriticalExponent::Infinite,
    })
}
