use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use critex::certificate::{blowup_certificate, AsymptoticVerdict};
use critex::evolve::{run, Verdict};
use critex::exponents::{gap_polynomial, verify_scaling_identities};
use critex::io::{
    fmt_f64, render_phase_svg, write_audit_csv, write_boundary_csv, write_certificate_csv,
    write_diagnostics_csv, write_phase_csv, write_trajectory_csv,
};
use critex::picard::{audit_estimates, ladder_times, solve_on_ladder};
use critex::sweep::{estimate_boundary, execute, PhaseVerdict, SweepPlan};
use critex::{classify_regime, derive, Field, ForcingSpec, Params, Regime};

use crate::config::{ProfileSpec, RunConfig};
use crate::manifest::{verify_fingerprints, RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BLEW_UP: i32 = 3;
pub const EXIT_STALLED: i32 = 4;
pub const EXIT_RUNTIME: i32 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    pub fn runtime(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: m.to_string(),
        }
    }

    fn check(m: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CHECK_FAILED,
            message: m.to_string(),
        }
    }
}

pub type Outcome = Result<i32, Failure>;

#[derive(Debug, Clone)]
pub struct Globals {
    pub out: PathBuf,
    pub seed_profile: Option<PathBuf>,
    pub check: bool,
}

struct Prepared {
    cfg: RunConfig,
    params: Params,
    u0: Field,
    w: Field,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::runtime(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_with(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> critex::Result<()>,
) -> Result<(), Failure> {
    let mut out = create(path)?;
    f(&mut out).map_err(Failure::runtime)?;
    out.flush().map_err(io_err(path))
}

/// Loads the config, applies `--seed-profile`, samples the data and, with
/// `--check`, compares against fingerprints recorded in a manifest.
fn prepare(config: &Path, globals: &Globals) -> Result<Prepared, Failure> {
    let (mut cfg, recorded) = RunConfig::load(config).map_err(Failure::usage)?;
    let base = config.parent().map(Path::to_path_buf).unwrap_or_default();
    if let Some(seed) = &globals.seed_profile {
        let abs = fs::canonicalize(seed).map_err(io_err(seed))?;
        cfg.u0 = ProfileSpec::File {
            path: abs.clone(),
            amplitude: cfg.u0.amplitude(),
        };
        cfg.w = ProfileSpec::File {
            path: abs,
            amplitude: cfg.w.amplitude(),
        };
    }
    let params = cfg.params().map_err(Failure::usage)?;
    let grid = cfg.grid().map_err(Failure::usage)?;
    let u0 = cfg.u0.build(&grid, &base).map_err(Failure::usage)?;
    let w = cfg.w.build(&grid, &base).map_err(Failure::usage)?;
    if globals.check {
        let bad = verify_fingerprints(&recorded, &u0, &w);
        if !bad.is_empty() {
            return Err(Failure::check(bad.join("; ")));
        }
    }
    // Profiles read from files travel with the manifest.
    for (spec, name) in [(&mut cfg.u0, "u0_profile.field"), (&mut cfg.w, "w_profile.field")] {
        if let ProfileSpec::File { path, amplitude } = spec {
            let src = base.join(&*path);
            let bytes = fs::read(&src).map_err(io_err(&src))?;
            fs::create_dir_all(&globals.out).map_err(io_err(&globals.out))?;
            let dst = globals.out.join(name);
            fs::write(&dst, bytes).map_err(io_err(&dst))?;
            *spec = ProfileSpec::File {
                path: PathBuf::from(name),
                amplitude: *amplitude,
            };
        }
    }
    Ok(Prepared { cfg, params, u0, w })
}

fn write_manifest(command: &str, prep: &Prepared, globals: &Globals) -> Result<(), Failure> {
    fs::create_dir_all(&globals.out).map_err(io_err(&globals.out))?;
    let m = RunManifest::new(command, prep.cfg.clone(), &prep.u0, &prep.w);
    let path = globals.out.join(MANIFEST_FILE);
    fs::write(&path, m.render()).map_err(io_err(&path))
}

fn write_field(path: &Path, f: &Field) -> Result<(), Failure> {
    write_with(path, |out| f.write_snapshot(out))
}

pub fn cmd_exponents(dim: u32, p: f64, sigma: f64, q: Option<f64>, check: bool) -> Outcome {
    let params = Params::new(dim, p, sigma).map_err(Failure::usage)?;
    let d = derive(&params);
    let regime = classify_regime(&params);
    let q = q.or(d.q_default);
    let mut rows: Vec<(&str, String)> = vec![
        ("N", dim.to_string()),
        ("p", p.to_string()),
        ("sigma", sigma.to_string()),
        ("pF", d.p_fujita.to_string()),
        ("pStar", d.p_star.to_string()),
        ("d", d.d.to_string()),
        ("k", d.k.to_string()),
    ];
    rows.push((
        "qWindow",
        d.q_window
            .map(|w| {
                let (lo, hi) = w.q_range();
                format!("({lo}, {hi})")
            })
            .unwrap_or_else(|| "empty".into()),
    ));
    rows.push(("q", q.map_or("none".into(), |v| v.to_string())));
    rows.push((
        "beta",
        q.map_or("none".into(), |v| critex::exponents::beta(&params, v).to_string()),
    ));
    rows.push((
        "regime",
        match &regime {
            Ok(r) => r.to_string(),
            Err(_) => "none (sigma = 0)".into(),
        },
    ));
    rows.push(("gapPolynomial", gap_polynomial(&params).to_string()));
    rows.push(("inTheoremScope", params.in_theorem_scope().to_string()));
    let mut problems = Vec::new();
    if let Some(qv) = q {
        match verify_scaling_identities(&params, qv) {
            Ok(rep) => {
                rows.push((
                    "identities",
                    rep.identities
                        .iter()
                        .map(|v| format!("{v:e}"))
                        .collect::<Vec<_>>()
                        .join(" "),
                ));
                if !rep.all_hold(1e-12) {
                    problems.push("scaling identities or beta bounds fail".to_string());
                }
                if regime == Ok(Regime::SupercriticalGlobal) && !rep.ordering {
                    problems.push("q > d > k >= 1 fails".to_string());
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
    }
    if regime == Ok(Regime::SupercriticalGlobal)
        && sigma > -1.0
        && sigma < 0.0
        && gap_polynomial(&params) >= 0.0
    {
        problems.push("gap polynomial is not negative".to_string());
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &rows {
        println!("{k:<width$}  {v}");
    }
    if check && !problems.is_empty() {
        for p in &problems {
            eprintln!("check failed: {p}");
        }
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(config: &Path, globals: &Globals) -> Outcome {
    let prep = prepare(config, globals)?;
    let cfg = prep.cfg.solve_config().map_err(Failure::usage)?;
    cfg.validate().map_err(Failure::usage)?;
    write_manifest("simulate", &prep, globals)?;
    let traj = run(&prep.u0, &ForcingSpec::new(prep.w.clone()), &cfg).map_err(Failure::runtime)?;
    let out = &globals.out;
    write_with(&out.join("norms.csv"), |f| write_trajectory_csv(f, &traj))?;
    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(io_err(&snap_dir))?;
    let mut index = create(&out.join("snapshots.csv"))?;
    writeln!(index, "index,t,file").map_err(io_err(out))?;
    for (i, (t, f)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:04}.field");
        write_field(&snap_dir.join(&name), f)?;
        writeln!(index, "{i},{},snapshots/{name}", fmt_f64(*t)).map_err(io_err(out))?;
    }
    index.flush().map_err(io_err(out))?;
    write_field(&out.join("final.field"), &traj.final_field)?;
    println!(
        "verdict {:?}  final_t {}  steps {} accepted / {} rejected  q {}",
        traj.verdict,
        fmt_f64(traj.final_time()),
        traj.accepted_steps,
        traj.rejected_steps,
        traj.q
    );
    if traj.boundary_flagged() {
        eprintln!(
            "warning: mass reached the box boundary (shell fraction {:.3e})",
            traj.max_shell_fraction
        );
    }
    Ok(match traj.verdict {
        Verdict::ReachedHorizon => EXIT_OK,
        Verdict::BlewUpAt(_) => EXIT_BLEW_UP,
        Verdict::Stalled => EXIT_STALLED,
    })
}

pub fn cmd_picard(config: &Path, globals: &Globals) -> Outcome {
    let prep = prepare(config, globals)?;
    let pc = &prep.cfg.picard;
    let q = match pc.q.or(derive(&prep.params).q_default) {
        Some(q) => q,
        None => {
            return Err(Failure::usage(
                "the admissible q-window is empty for these parameters",
            ))
        }
    };
    let times = ladder_times(pc.t_cap, pc.rungs).map_err(Failure::usage)?;
    write_manifest("picard", &prep, globals)?;
    let w = ForcingSpec::new(prep.w.clone());
    let outcome = solve_on_ladder(&prep.u0, &w, &prep.params, q, pc.delta, pc.max_iter, times)
        .map_err(Failure::usage)?;
    let audit =
        audit_estimates(&outcome.solution, &prep.u0, &w, &prep.params, q).map_err(Failure::runtime)?;
    let out = &globals.out;
    let sol = &outcome.solution;
    let weighted = sol.weighted_norms().map_err(Failure::runtime)?;
    let mut ladder = create(&out.join("ladder.csv"))?;
    writeln!(ladder, "index,t,Lq,weighted,file").map_err(io_err(out))?;
    let dir = out.join("ladder");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    for (j, ((t, f), wn)) in sol.times.iter().zip(&sol.fields).zip(&weighted).enumerate() {
        let name = format!("rung_{j:04}.field");
        write_field(&dir.join(&name), f)?;
        let lq = f.lr_norm(q).map_err(Failure::runtime)?;
        writeln!(
            ladder,
            "{j},{},{},{},ladder/{name}",
            fmt_f64(*t),
            fmt_f64(lq),
            fmt_f64(*wn)
        )
        .map_err(io_err(out))?;
    }
    ladder.flush().map_err(io_err(out))?;
    write_with(&out.join("audit.csv"), |f| write_audit_csv(f, &audit))?;
    write_with(&out.join("diagnostics.csv"), |f| {
        write_diagnostics_csv(&mut *f, &outcome.diagnostics)?;
        writeln!(f, "# q,{}", fmt_f64(q))?;
        writeln!(f, "# delta,{}", fmt_f64(sol.delta))?;
        writeln!(f, "# delta_max,{}", fmt_f64(outcome.delta_max))?;
        writeln!(f, "# data_size,{}", fmt_f64(outcome.data_size))?;
        writeln!(f, "# data_budget,{}", fmt_f64(outcome.data_budget))?;
        writeln!(f, "# outside_guarantee,{}", outcome.outside_guarantee)?;
        Ok(())
    })?;
    let d = &outcome.diagnostics;
    println!(
        "status {:?}  iterates {}  ratio {:.4}  residual {:.3e}  c1hat {:.6}  C* {:.6}  delta {:.4e}  min margin {:.3e}",
        d.status,
        d.iterates,
        d.ratio_estimate,
        d.residual,
        outcome.c1hat,
        outcome.c_star,
        sol.delta,
        audit.min_margin()
    );
    if outcome.outside_guarantee {
        eprintln!("warning: data lie outside the smallness budget");
    }
    if !d.converged() {
        return Ok(EXIT_CHECK_FAILED);
    }
    if globals.check && (audit.min_margin() < 0.0 || outcome.outside_guarantee || !d.all_in_ball) {
        eprintln!("check failed: audit margin negative, data outside budget, or iterate left the ball");
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}

pub fn cmd_certificate(config: &Path, globals: &Globals) -> Outcome {
    let prep = prepare(config, globals)?;
    let c = &prep.cfg.certificate;
    write_manifest("certificate", &prep, globals)?;
    let w = ForcingSpec::new(prep.w.clone());
    let report = blowup_certificate(&w, &prep.params, &c.cutoffs.cutoffs(), &c.t_ladder, c.radius)
        .map_err(Failure::usage)?;
    write_with(&globals.out.join("certificate.csv"), |f| {
        write_certificate_csv(f, &report)
    })?;
    println!(
        "verdict {}  slope {:.6}  expected {:.6}",
        report.verdict, report.slopes.bound, report.expected_exponent
    );
    if globals.check {
        let want = match classify_regime(&prep.params) {
            Ok(Regime::SupercriticalGlobal) => AsymptoticVerdict::NoContradiction,
            Ok(_) => AsymptoticVerdict::Contradiction,
            Err(_) => report.verdict,
        };
        if report.verdict != want && w.mass() > 0.0 {
            eprintln!(
                "check failed: verdict {} but theory expects {want}",
                report.verdict
            );
            return Ok(EXIT_CHECK_FAILED);
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_sweep(config: &Path, workers: Option<usize>, globals: &Globals) -> Outcome {
    let mut prep = prepare(config, globals)?;
    if let Some(k) = workers {
        prep.cfg.sweep.workers = k;
    }
    let s = &prep.cfg.sweep;
    let plan = SweepPlan {
        dim: prep.cfg.dim,
        p_values: s.p_values.clone(),
        sigma_values: s.sigma_values.clone(),
        data_scales: s.data_scales.clone(),
        u0_profile: prep.u0.clone(),
        w_profile: prep.w.clone(),
        template: prep.cfg.solve_config().map_err(Failure::usage)?,
        tail_q: s.tail_q,
        t_end: s.t_end,
        t_end_max: s.t_end_max,
        workers: s.workers,
    };
    plan.validate().map_err(Failure::usage)?;
    write_manifest("sweep", &prep, globals)?;
    let points = execute(&plan).map_err(Failure::runtime)?;
    let mut sigmas = plan.sigma_values.clone();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let estimates: Vec<_> = sigmas
        .iter()
        .map(|&sg| estimate_boundary(&points, plan.dim, sg))
        .collect();
    let out = &globals.out;
    write_with(&out.join("phase.csv"), |f| write_phase_csv(f, &points))?;
    write_with(&out.join("boundary.csv"), |f| write_boundary_csv(f, &estimates))?;
    let svg_path = out.join("phase.svg");
    fs::write(&svg_path, render_phase_svg(&points, plan.dim)).map_err(io_err(&svg_path))?;
    for e in &estimates {
        println!(
            "sigma {}  pHat {}  pStar {}  {:?}",
            e.sigma,
            e.p_hat.map_or("none".into(), |v| v.to_string()),
            e.p_star_theory,
            e.status
        );
    }
    let forced = prep.w.integral() > 0.0;
    let inconsistent: Vec<_> = points
        .iter()
        .filter(|pt| {
            forced
                && pt.theory == Some(Regime::SubcriticalBlowUp)
                && pt.verdict == PhaseVerdict::GlobalCandidate
        })
        .collect();
    if globals.check && !inconsistent.is_empty() {
        for pt in inconsistent {
            eprintln!(
                "check failed: p = {} sigma = {} scale = {} is GlobalCandidate in the blow-up regime",
                pt.p, pt.sigma, pt.scale
            );
        }
        return Ok(EXIT_CHECK_FAILED);
    }
    Ok(EXIT_OK)
}
