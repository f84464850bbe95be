//! Plain-text rendering of reports.

use std::fmt::Write;

use num_complex::Complex64;
use ulam_escape::escape::{AsymptoticRatioExperiment, EscapeEstimate, Periodicity};
use ulam_escape::kl::{KlConstants, LyConstants};
use ulam_escape::spectral::{ResolventBound, SpectralData};

/// `x` with 12 significant digits.
pub fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // Exponent after rounding to 12 digits, so 0.09999999999999998 counts as 0.1.
    let sci = format!("{x:.11e}");
    let exponent: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-4..12).contains(&exponent) {
        format!("{:.*}", (11 - exponent).max(0) as usize, x)
    } else {
        sci
    }
}

pub fn complex(z: &Complex64) -> String {
    if z.im.abs() < 1e-14 {
        format!("{:.12}", z.re)
    } else {
        format!("{:.12}{:+.12}i", z.re, z.im)
    }
}

fn row(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key:<28} {value}").unwrap();
}

pub fn kl_table(ly: &LyConstants, kl: &KlConstants) -> String {
    let mut out = String::new();
    row(&mut out, "mode", format!("{:?}", ly.mode));
    row(&mut out, "alpha0", ly.alpha0);
    row(&mut out, "B0", ly.b0);
    row(&mut out, "alpha", format!("{}  ({})", ly.alpha, sig12(ly.alpha.to_f64())));
    row(&mut out, "A", ly.a);
    row(&mut out, "B", format!("{}  ({})", ly.b, sig12(ly.b.to_f64())));
    row(&mut out, "B_hat", format!("{}  ({})", ly.b_hat, sig12(ly.b_hat.to_f64())));
    row(&mut out, "D", format!("{}  ({})", ly.d, sig12(ly.d.to_f64())));
    row(
        &mut out,
        "Gamma",
        format!("{}  ({})", ly.discretization_factor, sig12(ly.discretization_factor.to_f64())),
    );
    row(&mut out, "r", sig12(kl.r));
    row(&mut out, "delta", sig12(kl.delta));
    row(&mut out, "H", sig12(kl.h));
    row(&mut out, "n1", kl.n1);
    row(&mut out, "C", sig12(kl.c));
    row(&mut out, "n2", kl.n2);
    row(&mut out, "gamma", sig12(kl.gamma));
    row(&mut out, "epsilon1", sig12(kl.epsilon1));
    row(&mut out, "epsilon0 power term", sig12(kl.epsilon0_power_term));
    row(&mut out, "epsilon0", sig12(kl.epsilon0));
    row(&mut out, "a", sig12(kl.a));
    row(&mut out, "b", sig12(kl.b));
    row(&mut out, "transferred resolvent bound", sig12(kl.resolvent_transfer_bound));
    row(&mut out, "(2 Gamma)^-1 epsilon0", sig12(kl.mesh_bound));
    out
}

pub fn spectral_table(data: &SpectralData, bound: Option<&ResolventBound>) -> String {
    let mut out = String::new();
    row(&mut out, "r", sig12(data.r));
    row(&mut out, "norm convention", data.convention.as_str());
    writeln!(out, "eigenvalues above r:").unwrap();
    for (z, res) in data.eigenvalues_above_r.iter().zip(&data.residuals) {
        writeln!(out, "  {:<40} |z| = {:.12}  residual {res:.2e}", complex(z), z.norm()).unwrap();
    }
    row(&mut out, "unit eigenvalue", complex(&data.unit_eigenvalue));
    row(&mut out, "subdominant modulus", sig12(data.subdominant_modulus));
    row(&mut out, "projection norm", sig12(data.projection_norm));
    for (n, q) in data.q_power_norms.iter().enumerate() {
        row(&mut out, &format!("‖Q^{n}‖"), sig12(*q));
    }
    row(&mut out, "N", data.truncation_n);
    if let Ok(neumann) = data.neumann_bound() {
        row(&mut out, "neumann bound", sig12(neumann));
    }
    if let Some(b) = bound {
        row(&mut out, "delta", sig12(b.delta));
        row(&mut out, "L1 resolvent bound", sig12(b.resolvent_l1_bound));
        row(&mut out, "H*", sig12(b.h_star));
    }
    out
}

pub fn escape_table(e: &EscapeEstimate) -> String {
    let measure = e.hole.measure().to_f64();
    let mut out = String::new();
    row(&mut out, "hole", e.hole);
    row(&mut out, "bins", e.n_bins);
    row(&mut out, "lambda(H)", sig12(measure));
    row(&mut out, "e_H", sig12(e.e_h));
    row(&mut out, "escape rate", sig12(e.escape_rate));
    row(&mut out, "1 - e_H", sig12(1.0 - e.e_h));
    row(&mut out, "(1 - e_H)/lambda(H)", sig12((1.0 - e.e_h) / measure));
    row(&mut out, "iterations", e.iterations);
    row(&mut out, "residual", format!("{:.2e}", e.solver_residual));
    if e.total_escape {
        row(&mut out, "note", "every orbit escapes");
    }
    out
}

pub fn asymptotics_table(x: &AsymptoticRatioExperiment) -> String {
    let mut out = String::new();
    row(&mut out, "point", x.y);
    let class = match &x.classification {
        Periodicity::Periodic { period, derivative, .. } => format!("periodic, p = {period}, (T^p)' = {}", sig12(*derivative)),
        Periodicity::NonPeriodic { ambiguous } => {
            format!("non-periodic{}", if *ambiguous { " (near return)" } else { "" })
        }
    };
    row(&mut out, "orbit", class);
    writeln!(out, "{:>14} {:>10} {:>20} {:>20} {:>16}", "width", "bins", "e_H", "escape rate", "ratio").unwrap();
    for h in &x.holes {
        writeln!(
            out,
            "{:>14} {:>10} {:>20} {:>20} {:>16}",
            h.width.to_string(),
            h.n_bins,
            sig12(h.e_h),
            sig12(h.escape_rate),
            format!("{:.10}", h.ratio)
        )
        .unwrap();
    }
    row(&mut out, "extrapolated limit", sig12(x.extrapolated_limit));
    if let Some(p) = x.predicted_limit {
        row(&mut out, "predicted limit", sig12(p));
    }
    if let (Some(f), Some(src)) = (x.density_at_y, x.density_source) {
        row(&mut out, "density at point", format!("{} ({src:?})", sig12(f)));
    }
    if x.low_confidence {
        row(&mut out, "confidence", "low");
    }
    for a in &x.assumptions {
        writeln!(out, "assumption: {a}").unwrap();
    }
    for w in &x.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    out
}
