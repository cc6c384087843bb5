//! CSV and SVG artifacts. Every float is written with 17 significant digits.

use std::fmt::Write as _;
use std::io::Write;

use crate::certificate::CertificateReport;
use crate::error::Result;
use crate::evolve::Trajectory;
use crate::exponents;
use crate::picard::{ContractionDiagnostics, EstimateAudit};
use crate::sweep::{BoundaryEstimate, BoundaryStatus, PhasePoint, PhaseVerdict};

/// `{:.16e}` formatting.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &Trajectory) -> Result<()> {
    writeln!(out, "t,Linf,Lq,Ld,weighted")?;
    for (t, n) in traj.times.iter().zip(&traj.norms) {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(n.linf),
            fmt_f64(n.lq),
            fmt_f64(n.ld),
            fmt_f64(n.weighted)
        )?;
    }
    Ok(())
}

/// Rows carry the asymptotic verdict; the summary block records the fitted
/// slopes and the first `T` at which the bound already undercuts `∫w`.
pub fn write_certificate_csv<W: Write>(mut out: W, report: &CertificateReport) -> Result<()> {
    writeln!(out, "T,forcing,I1,I2,bound,verdict")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.t),
            fmt_f64(r.forcing),
            fmt_f64(r.i1),
            fmt_f64(r.i2),
            fmt_f64(r.bound),
            report.verdict
        )?;
    }
    let first = report.rows.iter().find(|r| r.contradiction).map(|r| fmt_f64(r.t));
    let s = &report.slopes;
    writeln!(out, "# slope_forcing,{}", fmt_f64(s.forcing))?;
    writeln!(out, "# slope_I1,{}", fmt_f64(s.i1))?;
    writeln!(out, "# slope_I2,{}", fmt_f64(s.i2))?;
    writeln!(out, "# slope_bound,{}", fmt_f64(s.bound))?;
    writeln!(out, "# expected_exponent,{}", fmt_f64(report.expected_exponent))?;
    writeln!(out, "# mass,{}", fmt_f64(report.mass))?;
    writeln!(
        out,
        "# first_T_with_bound_below_mass,{}",
        first.unwrap_or_default()
    )?;
    writeln!(out, "# verdict,{}", report.verdict)?;
    Ok(())
}

pub fn write_audit_csv<W: Write>(mut out: W, audit: &EstimateAudit) -> Result<()> {
    writeln!(
        out,
        "t,free,nonlinear,forcing,bound_free,bound_nonlinear,bound_forcing,margin_free,margin_nonlinear,margin_forcing"
    )?;
    for r in &audit.rows {
        let m = r.margins();
        let cols = [
            r.t,
            r.free,
            r.nonlinear,
            r.forcing,
            r.bound_free,
            r.bound_nonlinear,
            r.bound_forcing,
            m[0],
            m[1],
            m[2],
        ];
        let line: Vec<String> = cols.iter().map(|x| fmt_f64(*x)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    writeln!(out, "# c1hat,{}", fmt_f64(audit.c1hat))?;
    writeln!(out, "# beta_nonlinear,{}", fmt_f64(audit.beta_nonlinear))?;
    writeln!(out, "# beta_forcing,{}", fmt_f64(audit.beta_forcing))?;
    writeln!(out, "# c_star,{}", fmt_f64(audit.c_star))?;
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(mut out: W, diag: &ContractionDiagnostics) -> Result<()> {
    writeln!(out, "iterate,distance")?;
    for (i, d) in diag.distances.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, fmt_f64(*d))?;
    }
    writeln!(out, "# ratio_estimate,{}", fmt_f64(diag.ratio_estimate))?;
    writeln!(out, "# residual,{}", fmt_f64(diag.residual))?;
    writeln!(out, "# status,{:?}", diag.status)?;
    writeln!(out, "# all_in_ball,{}", diag.all_in_ball)?;
    Ok(())
}

pub fn write_phase_csv<W: Write>(mut out: W, points: &[PhasePoint]) -> Result<()> {
    writeln!(out, "p,sigma,scale,verdict,tstar,theory")?;
    for pt in points {
        let tstar = pt.verdict.blow_up_time().map(fmt_f64).unwrap_or_default();
        let theory = pt.theory.map(|r| r.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{tstar},{theory}",
            fmt_f64(pt.p),
            fmt_f64(pt.sigma),
            fmt_f64(pt.scale),
            pt.verdict.label()
        )?;
    }
    Ok(())
}

pub fn write_boundary_csv<W: Write>(mut out: W, estimates: &[BoundaryEstimate]) -> Result<()> {
    writeln!(out, "sigma,pHat,pStarTheory,status")?;
    for e in estimates {
        let p_hat = e.p_hat.map(fmt_f64).unwrap_or_default();
        let status = match &e.status {
            BoundaryStatus::Bracketed { below } => format!("bracketed above {}", fmt_f64(*below)),
            BoundaryStatus::Unbracketed(note) => format!("unbracketed: {note}"),
        };
        writeln!(
            out,
            "{},{p_hat},{},{status}",
            fmt_f64(e.sigma),
            fmt_f64(e.p_star_theory.value())
        )?;
    }
    Ok(())
}

fn distinct_sorted(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = xs.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Phase diagram at the smallest data scale of each σ column, cells coloured
/// by verdict, with the curve `p*(σ)` drawn over the σ < 0 range.
pub fn render_phase_svg(points: &[PhasePoint], dim: u32) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const PAD: f64 = 60.0;
    let sigmas = distinct_sorted(points.iter().map(|p| p.sigma));
    let ps = distinct_sorted(points.iter().map(|p| p.p));
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if sigmas.is_empty() || ps.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let cw = (W - 2.0 * PAD) / sigmas.len() as f64;
    let ch = (H - 2.0 * PAD) / ps.len() as f64;
    let (p_lo, p_hi) = (ps[0], ps[ps.len() - 1]);
    let (s_lo, s_hi) = (sigmas[0], sigmas[sigmas.len() - 1]);
    let x_of = |s: f64| {
        if s_hi > s_lo {
            PAD + cw / 2.0 + (s - s_lo) / (s_hi - s_lo) * (W - 2.0 * PAD - cw)
        } else {
            W / 2.0
        }
    };
    let y_of = |p: f64| {
        if p_hi > p_lo {
            H - PAD - ch / 2.0 - (p - p_lo) / (p_hi - p_lo) * (H - 2.0 * PAD - ch)
        } else {
            H / 2.0
        }
    };
    for &s in &sigmas {
        let scale = points
            .iter()
            .filter(|pt| pt.sigma == s)
            .map(|pt| pt.scale)
            .fold(f64::INFINITY, f64::min);
        for &p in &ps {
            let Some(pt) = points
                .iter()
                .find(|pt| pt.sigma == s && pt.p == p && pt.scale == scale)
            else {
                continue;
            };
            let color = match pt.verdict {
                PhaseVerdict::BlowUp(_) => "#d7301f",
                PhaseVerdict::GlobalCandidate => "#2b8cbe",
                PhaseVerdict::Undetermined => "#bdbdbd",
            };
            let x = x_of(s) - cw / 2.0;
            let y = y_of(p) - ch / 2.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cw:.2}" height="{ch:.2}" fill="{color}" stroke="white"><title>p={p} sigma={s} {}</title></rect>"#,
                pt.verdict.label()
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{s}</text>"#,
            x_of(s),
            H - PAD + 16.0
        );
    }
    for &p in &ps {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{p}</text>"#,
            PAD - 6.0,
            y_of(p) + 4.0
        );
    }
    let neg: Vec<f64> = sigmas.iter().copied().filter(|s| *s < 0.0).collect();
    if neg.len() >= 2 {
        let (a, b) = (neg[0], neg[neg.len() - 1]);
        let mut path = Vec::new();
        for k in 0..=64 {
            let s = a + (b - a) * k as f64 / 64.0;
            let ps_val = exponents::p_star(dim, s).value();
            if ps_val.is_finite() && ps_val <= p_hi + 0.5 * (p_hi - p_lo).max(1.0) {
                path.push(format!("{:.2},{:.2}", x_of(s), y_of(ps_val)));
            }
        }
        if path.len() >= 2 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">sigma</text>"#,
        W / 2.0,
        H - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" font-size="13" transform="rotate(-90 16 {:.2})" text-anchor="middle">p</text>"#,
        H / 2.0,
        H / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}
