//! Escape from concrete holes.
//!
//! [`estimate_escape`] finds the dominant eigenpair of the open Ulam matrix
//! by power iteration: `e_H` is the survival factor per step and the
//! normalized eigenvector approximates the density of the conditionally
//! invariant measure. [`asymptotic_ratio`] shrinks holes around a point and
//! tracks `(1 - e_H)/λ(H)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{BranchKind, PiecewiseMap};
use crate::rational::Rational;
use crate::spectral::invariant_mass;
use crate::ulam::{build_closed, build_open, Hole, UlamMatrix, UlamPartition};

pub const RATIO_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeEstimate {
    pub hole: Hole,
    pub n_bins: usize,
    pub e_h: f64,
    /// `-ln e_H`; infinite when everything escapes.
    pub escape_rate: f64,
    /// Density heights, unit mass.
    pub accim_density: Vec<f64>,
    pub solver_residual: f64,
    pub iterations: usize,
    /// Set when the open matrix annihilates the start vector.
    pub total_escape: bool,
}

pub fn estimate_escape(map: &PiecewiseMap, partition: &UlamPartition, hole: &Hole) -> Result<EscapeEstimate> {
    let open = build_open(map, partition, hole)?;
    escape_from_open_matrix(&open, hole)
}

/// Power iteration on an already assembled open matrix.
pub fn escape_from_open_matrix(open: &UlamMatrix, hole: &Hole) -> Result<EscapeEstimate> {
    let p = open.entries();
    let n = p.n_rows();
    let mesh = open.partition().mesh_f64();
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut last_ratio = f64::NAN;
    let mut spread = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        p.left_mul_into(&x, &mut y);
        let ratio: f64 = y.iter().sum();
        if ratio <= 0.0 {
            return Ok(EscapeEstimate {
                hole: *hole,
                n_bins: n,
                e_h: 0.0,
                escape_rate: f64::INFINITY,
                accim_density: vec![0.0; n],
                solver_residual: 0.0,
                iterations: iteration,
                total_escape: true,
            });
        }
        y.iter_mut().for_each(|v| *v /= ratio);
        spread = (ratio - last_ratio).abs();
        last_ratio = ratio;
        std::mem::swap(&mut x, &mut y);
        if spread <= RATIO_TOL {
            // ‖x P - e x‖₁ in mass units.
            p.left_mul_into(&x, &mut y);
            let e: f64 = y.iter().sum();
            let residual: f64 = y.iter().zip(&x).map(|(a, b)| (a - e * b).abs()).sum();
            if residual <= RESIDUAL_TOL {
                for v in x.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                let total: f64 = x.iter().sum();
                return Ok(EscapeEstimate {
                    hole: *hole,
                    n_bins: n,
                    e_h: e,
                    escape_rate: -e.ln(),
                    accim_density: x.iter().map(|v| v / total / mesh).collect(),
                    solver_residual: residual,
                    iterations: iteration,
                    total_escape: false,
                });
            }
        }
    }
    Err(Error::EscapeConvergence {
        iterations: MAX_ITERATIONS,
        spread,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Periodicity {
    Periodic {
        period: usize,
        /// `(Tᵖ)'(y)`.
        derivative: f64,
        exact: bool,
    },
    NonPeriodic {
        /// The orbit came within `1e-9` of `y` without an exact return.
        ambiguous: bool,
    },
}

/// Orbit inspection of `y` up to `max_period`, in exact arithmetic while the
/// branches allow it.
pub fn classify_orbit(map: &PiecewiseMap, y: Rational, max_period: usize) -> Periodicity {
    let mut exact_point = Some(y);
    let mut exact_derivative = Some(Rational::ONE);
    let mut x = y.to_f64();
    let mut derivative = 1.0;
    let mut near_miss = false;
    for period in 1..=max_period {
        // Exact step, abandoned on overflow or a non-rational branch.
        if let (Some(p), Some(d)) = (exact_point, exact_derivative) {
            let next = map.evaluate_exact(p).ok().flatten();
            let slope = map.exact_derivative(p).ok().flatten();
            match (next, slope.and_then(|s| s.checked_mul(&d))) {
                (Some(q), Some(dd)) => {
                    let q = if q == Rational::ONE { Rational::ZERO } else { q };
                    exact_point = Some(q);
                    exact_derivative = Some(dd);
                    if q == y {
                        return Periodicity::Periodic {
                            period,
                            derivative: dd.to_f64(),
                            exact: true,
                        };
                    }
                }
                _ => {
                    exact_point = None;
                    exact_derivative = None;
                }
            }
        }
        let (Ok(next), Ok(slope)) = (map.evaluate(x), map.derivative(x)) else {
            break;
        };
        derivative *= slope;
        x = if next >= 1.0 { next - 1.0 } else { next };
        if (x - y.to_f64()).abs() < 1e-9 {
            if exact_point.is_none() {
                return Periodicity::Periodic {
                    period,
                    derivative,
                    exact: false,
                };
            }
            near_miss = true;
        }
    }
    Periodicity::NonPeriodic { ambiguous: near_miss }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensitySource {
    /// Analytic when the map is linear with full branches, otherwise Ulam.
    Auto,
    Analytic,
    Ulam,
}

/// `f* ≡ 1` for piecewise-linear maps whose branches are all onto `[0, 1]`.
pub fn analytic_density(map: &PiecewiseMap, _y: f64) -> Option<f64> {
    let full = map.branches().iter().all(|b| {
        matches!(b.kind(), BranchKind::Linear { .. }) && {
            let range = b.range();
            range.lo.abs() < 1e-12 && (range.hi - 1.0).abs() < 1e-12
        }
    });
    full.then_some(1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConfig {
    /// Strictly decreasing hole widths.
    pub widths: Vec<Rational>,
    pub bins_per_hole: usize,
    pub max_period: usize,
    pub density: DensitySource,
}

impl AsymptoticConfig {
    pub fn new(widths: Vec<Rational>, bins_per_hole: usize) -> Self {
        AsymptoticConfig {
            widths,
            bins_per_hole,
            max_period: 32,
            density: DensitySource::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleRatio {
    pub width: Rational,
    pub hole: Hole,
    pub n_bins: usize,
    pub e_h: f64,
    pub escape_rate: f64,
    /// `(1 - e_H)/λ(H)`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRatioExperiment {
    pub y: Rational,
    pub holes: Vec<HoleRatio>,
    /// Intercept of the least-squares line `ratio ≈ c₀ + c₁ λ(H)`.
    pub extrapolated_limit: f64,
    pub low_confidence: bool,
    pub classification: Periodicity,
    pub density_at_y: Option<f64>,
    pub density_source: Option<DensitySource>,
    /// `f*(y)` times `1 - 1/|(Tᵖ)'(y)|` in the periodic case.
    pub predicted_limit: Option<f64>,
    pub assumptions: Vec<String>,
    pub warnings: Vec<String>,
}

/// Hole of width `w` spanning `bins_per_hole` bins and containing `y`.
pub fn hole_around(y: Rational, width: Rational, bins_per_hole: usize) -> Result<(UlamPartition, Hole)> {
    if !(width > Rational::ZERO && width <= Rational::ONE) {
        return Err(Error::InvalidHole(format!("width {width} must lie in (0, 1]")));
    }
    let k = Rational::from_integer(bins_per_hole as i128);
    let n = k / width;
    if !n.is_integer() {
        return Err(Error::InvalidHole(format!(
            "width {width} is not a multiple of 1/n for {bins_per_hole} bins per hole"
        )));
    }
    let n_bins = n.numer() as usize;
    let partition = UlamPartition::new(n_bins)?;
    let mesh = partition.mesh();
    let half = width / Rational::from_integer(2);
    let start = ((y - half) / mesh).floor();
    let start = start.clamp(0, (n_bins - bins_per_hole) as i128);
    let a = mesh * Rational::from_integer(start);
    let hole = Hole::new(a, a + width)?;
    Ok((partition, hole))
}

pub fn asymptotic_ratio(map: &PiecewiseMap, y: Rational, config: &AsymptoticConfig) -> Result<AsymptoticRatioExperiment> {
    if !(y >= Rational::ZERO && y < Rational::ONE) {
        return Err(Error::Domain(format!("point {y} must lie in [0, 1)")));
    }
    if config.widths.is_empty() {
        return Err(Error::Domain("empty width schedule".into()));
    }
    if config.widths.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("hole widths must be strictly decreasing".into()));
    }
    if config.bins_per_hole < 2 {
        return Err(Error::Domain("need at least 2 bins per hole".into()));
    }
    let layouts: Vec<(UlamPartition, Hole)> = config
        .widths
        .iter()
        .map(|w| hole_around(y, *w, config.bins_per_hole))
        .collect::<Result<_>>()?;
    for pair in layouts.windows(2) {
        let (a0, b0) = pair[0].1.endpoints();
        let (a1, b1) = pair[1].1.endpoints();
        if !(a0 <= a1 && b1 <= b0) {
            return Err(Error::InvalidHole(format!("holes {} and {} are not nested", pair[0].1, pair[1].1)));
        }
    }
    let estimates: Vec<EscapeEstimate> = layouts
        .par_iter()
        .map(|(partition, hole)| estimate_escape(map, partition, hole))
        .collect::<Result<_>>()?;
    let holes: Vec<HoleRatio> = estimates
        .iter()
        .zip(&config.widths)
        .map(|(est, w)| HoleRatio {
            width: *w,
            hole: est.hole,
            n_bins: est.n_bins,
            e_h: est.e_h,
            escape_rate: est.escape_rate,
            ratio: (1.0 - est.e_h) / w.to_f64(),
        })
        .collect();
    let (extrapolated_limit, low_confidence) = extrapolate(&holes);

    let classification = classify_orbit(map, y, config.max_period);
    let mut warnings = Vec::new();
    if let Periodicity::NonPeriodic { ambiguous: true } = classification {
        warnings.push(format!("orbit of {y} returns within 1e-9 without an exact return"));
    }
    if low_confidence {
        warnings.push("single hole width: no extrapolation".into());
    }
    let analytic = analytic_density(map, y.to_f64());
    let (density_at_y, density_source) = match (config.density, analytic) {
        (DensitySource::Analytic, None) => {
            return Err(Error::Domain("no analytic invariant density for this map".into()))
        }
        (DensitySource::Analytic | DensitySource::Auto, Some(f)) => (Some(f), Some(DensitySource::Analytic)),
        (DensitySource::Ulam | DensitySource::Auto, _) => {
            let n_bins = layouts.last().expect("nonempty").0.n_bins();
            let f = ulam_density_at(map, n_bins, y.to_f64())?;
            warnings.push("density from the closed Ulam matrix: L¹ estimate, advisory only".into());
            (Some(f), Some(DensitySource::Ulam))
        }
    };
    let predicted_limit = density_at_y.map(|f| match &classification {
        Periodicity::Periodic { derivative, .. } => f * (1.0 - 1.0 / derivative.abs()),
        Periodicity::NonPeriodic { .. } => f,
    });
    Ok(AsymptoticRatioExperiment {
        y,
        holes,
        extrapolated_limit,
        low_confidence,
        classification,
        density_at_y,
        density_source,
        predicted_limit,
        assumptions: vec![
            "T is continuous at y".into(),
            "the invariant density is continuous at y".into(),
        ],
        warnings,
    })
}

fn ulam_density_at(map: &PiecewiseMap, n_bins: usize, y: f64) -> Result<f64> {
    let partition = UlamPartition::new(n_bins)?;
    let closed = build_closed(map, &partition)?;
    let mass = invariant_mass(closed.entries())?;
    Ok(mass[partition.bin_of(y)] / partition.mesh_f64())
}

fn extrapolate(holes: &[HoleRatio]) -> (f64, bool) {
    if holes.len() == 1 {
        return (holes[0].ratio, true);
    }
    let xs: Vec<f64> = holes.iter().map(|h| h.width.to_f64()).collect();
    let ys: Vec<f64> = holes.iter().map(|h| h.ratio).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, false)
}
