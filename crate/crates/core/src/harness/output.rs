//! CSV and JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::solvers::IterTrace;
use crate::stochastic::{StochTrace, RNG_ID};

/// 17 significant digits, round-trip exact for `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header(out: &mut String, meta: &[(&str, String)]) {
    for (k, v) in meta {
        let _ = writeln!(out, "# {k}={v}");
    }
}

/// Columns `iter, theta_0..theta_{m-1}, residual_inf, dist_to_fixed_point`.
pub fn iter_trace_csv(trace: &IterTrace, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    header(&mut out, meta);
    let m = trace.thetas.first().map_or(0, |t| t.len());
    out.push_str("iter");
    for j in 0..m {
        let _ = write!(out, ",theta_{j}");
    }
    out.push_str(",residual_inf,dist_to_fixed_point\n");
    for (k, theta) in trace.thetas.iter().enumerate() {
        let _ = write!(out, "{k}");
        for v in theta.iter() {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            fmt_f64(trace.residual_inf[k]),
            fmt_f64(trace.dist_to_fixed_point[k])
        );
    }
    out
}

/// Columns `iter, theta_*, [lambda_*], dist_to_theta_star_n`, preceded by
/// metadata lines including the schedule, seed and RNG identifier.
pub fn stoch_trace_csv(trace: &StochTrace, meta: &[(&str, String)]) -> String {
    let mut out = String::new();
    header(&mut out, meta);
    header(
        &mut out,
        &[
            ("algorithm", trace.algorithm.name().to_string()),
            ("n", trace.n.to_string()),
            (
                "schedule",
                format!(
                    "{},{},{}",
                    trace.schedule.a, trace.schedule.b, trace.schedule.c
                ),
            ),
            ("seed", trace.seed.to_string()),
            ("stream", trace.stream.to_string()),
            ("rng", RNG_ID.to_string()),
            ("diverged", trace.diverged.to_string()),
        ],
    );
    let first = trace.final_record();
    let m = first.theta.len();
    let dual = first.lambda.is_some();
    out.push_str("iter");
    for j in 0..m {
        let _ = write!(out, ",theta_{j}");
    }
    if dual {
        for j in 0..m {
            let _ = write!(out, ",lambda_{j}");
        }
    }
    out.push_str(",dist_to_theta_star_n\n");
    for rec in &trace.records {
        let _ = write!(out, "{}", rec.iter);
        for v in rec.theta.iter() {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        if let Some(l) = &rec.lambda {
            for v in l.iter() {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
        }
        let _ = writeln!(out, ",{}", fmt_f64(rec.dist_to_theta_star_n));
    }
    out
}
