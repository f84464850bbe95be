//! The certification driver.
//!
//! For `r = 1 - ell` and `δ = 1/k` the inner loop looks for a mesh `ε` with
//! `ε ≤ (2Γ)⁻¹ε₀*`, the outer loop halves `δ` when the eigenvalues of the
//! Ulam matrix above `r` do not separate from 1. When the direct comparison
//! fails at a coarse mesh, the closed-only inequality can transfer the coarse
//! resolvent bound to every finer mesh and predict a sufficient mesh without
//! further eigen-analysis.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kl::{self, KlConstants, LyConstants, LyMode};
use crate::maps::PiecewiseMap;
use crate::rational::Rational;
use crate::spectral::{self, QNormConvention, SnapshotOptions, SpectralData, SpectralSnapshot};
use crate::ulam::{build_closed, UlamMatrix, UlamPartition};

/// Meshes the driver is allowed to use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshSchedule {
    /// `n_bins ∈ {1, 2, 5} × 10^k`.
    OneTwoFive,
    PowersOfTen,
    Explicit(Vec<usize>),
}

impl MeshSchedule {
    /// Largest allowed mesh not exceeding `bound`, i.e. the smallest allowed
    /// bin count `n` with `1/n ≤ bound`, capped by `max_bins`.
    pub fn coarsest_within(&self, bound: f64, max_bins: usize) -> Option<usize> {
        if !(bound > 0.0) {
            return None;
        }
        let need = (1.0 / bound).ceil().max(1.0) as u128;
        // Guard against 1/bound landing a hair above an integer.
        let need = if need > 1 && 1.0 / ((need - 1) as f64) <= bound { need - 1 } else { need };
        let candidate = match self {
            MeshSchedule::Explicit(list) => list.iter().copied().filter(|&n| n as u128 >= need).min(),
            MeshSchedule::OneTwoFive | MeshSchedule::PowersOfTen => {
                let factors: &[u128] = if matches!(self, MeshSchedule::OneTwoFive) { &[1, 2, 5] } else { &[1] };
                let mut best = None;
                let mut scale: u128 = 1;
                while best.is_none() && scale <= 10u128.pow(12) {
                    for f in factors {
                        let n = f * scale;
                        if n >= need {
                            best = Some(n as usize);
                            break;
                        }
                    }
                    scale *= 10;
                }
                best
            }
        }?;
        (candidate <= max_bins).then_some(candidate)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationConfig {
    pub ell: Rational,
    /// Defaults to `1/k` with `k = ⌈1/ell⌉ + 1`.
    pub delta_init: Option<Rational>,
    pub bins_init: usize,
    pub schedule: MeshSchedule,
    pub max_bins: usize,
    pub max_inner: usize,
    pub max_outer: usize,
    pub truncation: usize,
    pub convention: QNormConvention,
    pub bootstrap: bool,
    /// Bin counts above this use subspace iteration instead of a dense solve.
    pub dense_limit: usize,
}

impl CertificationConfig {
    pub fn new(ell: Rational) -> Self {
        CertificationConfig {
            ell,
            delta_init: None,
            bins_init: 1000,
            schedule: MeshSchedule::OneTwoFive,
            max_bins: 200_000,
            max_inner: 12,
            max_outer: 8,
            truncation: spectral::DEFAULT_TRUNCATION,
            convention: QNormConvention::RowSums,
            bootstrap: true,
            dense_limit: spectral::DENSE_LIMIT,
        }
    }

    pub fn default_delta(ell: Rational) -> Result<Rational> {
        let k = ell.recip().ceil() + 1;
        Ok(Rational::new(1, k))
    }

    pub fn resolved_delta(&self) -> Result<Rational> {
        let delta = match self.delta_init {
            Some(d) => d,
            None => Self::default_delta(self.ell)?,
        };
        if !(delta > Rational::ZERO && delta < self.ell) {
            return Err(Error::Domain(format!("delta_init = {delta} must lie in (0, ell = {})", self.ell)));
        }
        if !delta.recip().is_integer() {
            return Err(Error::Domain(format!("delta_init = {delta} must be of the form 1/k")));
        }
        Ok(delta)
    }
}

/// Step 8-10 outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case")]
pub enum Separation {
    Pass,
    Fail { witness: Complex64 },
}

/// `CL` is the set of listed eigenvalues within `δ` of 1; passes iff every
/// other one is more than `2δ` from 1.
pub fn separation_check(eigenvalues: &[Complex64], delta: f64) -> Separation {
    let one = Complex64::new(1.0, 0.0);
    for z in eigenvalues {
        let d = (z - one).norm();
        if d > delta && d <= 2.0 * delta {
            return Separation::Fail { witness: *z };
        }
    }
    Separation::Pass
}

/// Where the resolvent bound of an iteration came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HSource {
    Computed { neumann: f64, truncation_n: usize },
    Transferred { from_bins: usize, closed_mesh_bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub n_bins: usize,
    pub mesh: Rational,
    pub delta: Rational,
    pub h: f64,
    pub h_source: HSource,
    pub kl: Option<KlConstants>,
    /// `(2Γ)⁻¹ε₀`.
    pub mesh_bound: Option<f64>,
    pub step7_pass: bool,
    pub eigenvalues: Vec<Complex64>,
    pub eigenvalues_inherited: bool,
    pub separation: Option<Separation>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CertificationStatus {
    Certified,
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub status: CertificationStatus,
    pub map_label: String,
    pub map_fingerprint: String,
    pub ell: Rational,
    pub r: Rational,
    pub ly: LyConstants,
    pub convention: QNormConvention,
    pub delta_com: Option<Rational>,
    pub epsilon_com: Option<Rational>,
    /// `Γ ε_com`.
    pub hole_bound: Option<Rational>,
    pub escape_guarantee: f64,
    /// `1 + (2α₀ + B₀)/(1 - ell - α)`.
    pub theorem2_coefficient: f64,
    pub iterations: Vec<IterationRecord>,
}

impl CertificationReport {
    pub fn is_certified(&self) -> bool {
        self.status == CertificationStatus::Certified
    }

    /// Human-readable log in the layout of the published tables.
    pub fn table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "map {}  ell = {}  r = {}  Γ = {}  α = {}  B = {}  D = {}\n",
            self.map_label,
            self.ell,
            self.r,
            self.ly.discretization_factor,
            self.ly.alpha,
            self.ly.b,
            self.ly.d
        ));
        for it in &self.iterations {
            out.push_str(&format!(
                "[{}.{}] mesh {} ({} bins)  δ = {}  H = {:.10}",
                it.outer,
                it.inner,
                it.mesh,
                it.n_bins,
                it.delta,
                it.h
            ));
            match &it.h_source {
                HSource::Computed { neumann, truncation_n } => {
                    out.push_str(&format!("  (neumann {neumann:.9}, N = {truncation_n})"))
                }
                HSource::Transferred { from_bins, .. } => out.push_str(&format!("  (transferred from {from_bins} bins)")),
            }
            out.push('\n');
            if let Some(kl) = &it.kl {
                out.push_str(&format!(
                    "      n1 = {}  C = {:.10}  n2 = {}  (2Γ)⁻¹ε₀ = {:.13}  step 7: {}\n",
                    kl.n1,
                    kl.c,
                    kl.n2,
                    kl.mesh_bound,
                    if it.step7_pass { "pass" } else { "fail" }
                ));
            }
            if let Some(sep) = &it.separation {
                let listed: Vec<String> = it.eigenvalues.iter().map(format_complex).collect();
                out.push_str(&format!(
                    "      eigenvalues above r: [{}]{}  steps 8-10: {}\n",
                    listed.join(", "),
                    if it.eigenvalues_inherited { " (inherited)" } else { "" },
                    match sep {
                        Separation::Pass => "pass".to_string(),
                        Separation::Fail { witness } => format!("fail at {}", format_complex(witness)),
                    }
                ));
            }
            if let Some(note) = &it.note {
                out.push_str(&format!("      {note}\n"));
            }
        }
        match &self.status {
            CertificationStatus::Certified => out.push_str(&format!(
                "certified: ε_com = {}  δ_com = {}  λ(H) ≤ {}  escape rate < {:.10}\n",
                self.epsilon_com.expect("certified"),
                self.delta_com.expect("certified"),
                self.hole_bound.expect("certified"),
                self.escape_guarantee
            )),
            CertificationStatus::Failed { reason } => out.push_str(&format!("failed: {reason}\n")),
        }
        out
    }
}

fn format_complex(z: &Complex64) -> String {
    if z.im.abs() < 1e-14 {
        format!("{:.10}", z.re)
    } else {
        format!("{:.10}{:+.10}i", z.re, z.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateBounds {
    pub accim_exists: bool,
    pub one_minus_eh_upper: f64,
    pub escape_upper: f64,
}

pub fn certificate_bounds(report: &CertificationReport, hole_measure: f64) -> Result<CertificateBounds> {
    let (Some(delta), Some(bound)) = (report.delta_com, report.hole_bound) else {
        return Err(Error::Certification("report is not certified".into()));
    };
    if !(hole_measure >= 0.0) {
        return Err(Error::Domain(format!("hole measure {hole_measure} must be nonnegative")));
    }
    let one_minus = delta.to_f64().min(report.theorem2_coefficient * hole_measure);
    Ok(CertificateBounds {
        accim_exists: hole_measure <= bound.to_f64(),
        one_minus_eh_upper: one_minus,
        escape_upper: -(1.0 - one_minus).ln(),
    })
}

/// Supplies closed-matrix spectral data per bin count.
pub trait SpectralProvider {
    fn spectral_data(
        &mut self,
        map: &PiecewiseMap,
        n_bins: usize,
        r: f64,
        truncation: usize,
        options: &SnapshotOptions,
    ) -> Result<SpectralData>;
}

/// Computes on demand and keeps snapshots in memory.
#[derive(Default)]
pub struct MemoryProvider {
    snapshots: HashMap<(String, usize, QNormConvention), SpectralSnapshot>,
    pub computed: usize,
    pub reused: usize,
}

impl MemoryProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, snapshot: SpectralSnapshot) {
        let key = (snapshot.map_fingerprint.clone(), snapshot.n_bins, snapshot.convention);
        self.snapshots.insert(key, snapshot);
    }

    pub fn get(&self, fingerprint: &str, n_bins: usize, convention: QNormConvention) -> Option<&SpectralSnapshot> {
        self.snapshots.get(&(fingerprint.to_string(), n_bins, convention))
    }
}

impl SpectralProvider for MemoryProvider {
    fn spectral_data(
        &mut self,
        map: &PiecewiseMap,
        n_bins: usize,
        r: f64,
        truncation: usize,
        options: &SnapshotOptions,
    ) -> Result<SpectralData> {
        let key = (map.fingerprint().to_string(), n_bins, options.convention);
        let mut matrix: Option<UlamMatrix> = None;
        if !self.snapshots.contains_key(&key) {
            let m = build_closed(map, &UlamPartition::new(n_bins)?)?;
            self.snapshots.insert(key.clone(), spectral::spectral_snapshot(&m, options)?);
            matrix = Some(m);
            self.computed += 1;
        } else {
            self.reused += 1;
        }
        let snap = &self.snapshots[&key];
        match snap.level(r, truncation) {
            Err(Error::NeumannDivergence { .. }) if snap.q_power_norms.len() < spectral::MAX_TRUNCATION + 2 => {
                let m = match matrix {
                    Some(m) => m,
                    None => build_closed(map, &UlamPartition::new(n_bins)?)?,
                };
                let (data, extended) = spectral::level_with_extension(snap, &m, r, truncation)?;
                if let Some(ext) = extended {
                    self.snapshots.insert(key, ext);
                }
                Ok(data)
            }
            other => other,
        }
    }
}

/// Next step after a failed step-7 comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "kebab-case")]
pub enum Plan {
    /// Use the transferred bound at a finer mesh without new spectral data.
    Bootstrap {
        n_bins: usize,
        transferred_h: f64,
        closed_mesh_bound: f64,
        predicted: KlConstants,
    },
    /// The coarse mesh already satisfies the bootstrapped comparison.
    Reuse {
        transferred_h: f64,
        closed_mesh_bound: f64,
        predicted: KlConstants,
    },
    /// Plain refinement with fresh spectral data.
    Refine { n_bins: usize, reason: String },
}

/// Closed-only comparison at the coarse mesh, transfer of the resolvent
/// bound, and re-entry into the hole-uniform chain.
#[allow(clippy::too_many_arguments)]
pub fn refine_with_bootstrap(
    ly: &LyConstants,
    r: f64,
    delta: f64,
    coarse_bins: usize,
    h_coarse: f64,
    schedule: &MeshSchedule,
    max_bins: usize,
    fallback_bins: usize,
) -> Result<Plan> {
    let mesh = 1.0 / coarse_bins as f64;
    let transferred = match kl::bootstrap_resolvent_bound(ly, r, delta, h_coarse, mesh) {
        Ok(t) => t,
        Err(Error::BootstrapPrecondition { lhs, rhs }) => {
            return Ok(Plan::Refine {
                n_bins: fallback_bins,
                reason: format!("closed-only comparison failed: 2Γ·mesh = {lhs:.6e} > ε₀ = {rhs:.6e}"),
            })
        }
        Err(e) => return Err(e),
    };
    let predicted = kl::kl_constants(ly, r, delta, transferred.bound)?;
    if mesh <= predicted.mesh_bound {
        return Ok(Plan::Reuse {
            transferred_h: transferred.bound,
            closed_mesh_bound: transferred.closed_mesh_bound,
            predicted,
        });
    }
    match schedule.coarsest_within(predicted.mesh_bound, max_bins) {
        Some(n_bins) => Ok(Plan::Bootstrap {
            n_bins,
            transferred_h: transferred.bound,
            closed_mesh_bound: transferred.closed_mesh_bound,
            predicted,
        }),
        None => Ok(Plan::Refine {
            n_bins: fallback_bins,
            reason: format!(
                "bootstrapped mesh bound {:.6e} needs more than {max_bins} bins",
                predicted.mesh_bound
            ),
        }),
    }
}

pub fn run_certification(
    map: &PiecewiseMap,
    config: &CertificationConfig,
    provider: &mut dyn SpectralProvider,
) -> Result<CertificationReport> {
    let ly = kl::ly_constants(map.alpha0(), map.b0(), LyMode::HoleUniform)?;
    let ell = config.ell;
    if !(ell > Rational::ZERO && ell < Rational::ONE - ly.alpha) {
        return Err(Error::Domain(format!("ell = {ell} must lie in (0, 1 - α = {})", Rational::ONE - ly.alpha)));
    }
    let r_exact = Rational::ONE - ell;
    let r = r_exact.to_f64();
    let alpha = ly.alpha_f64();
    let mut delta = config.resolved_delta()?;
    let options = SnapshotOptions {
        convention: config.convention,
        max_power: config.truncation + 1,
        dense_limit: config.dense_limit,
        ..Default::default()
    };

    let mut report = CertificationReport {
        status: CertificationStatus::Failed {
            reason: "not started".into(),
        },
        map_label: map.label().to_string(),
        map_fingerprint: map.fingerprint().to_string(),
        ell,
        r: r_exact,
        ly,
        convention: config.convention,
        delta_com: None,
        epsilon_com: None,
        hole_bound: None,
        escape_guarantee: -(1.0 - ell.to_f64()).ln(),
        theorem2_coefficient: 1.0
            + (2.0 * ly.alpha0.to_f64() + ly.b0.to_f64()) / (1.0 - ell.to_f64() - alpha),
        iterations: Vec::new(),
    };

    let mut n_bins = config.bins_init;
    for outer in 1..=config.max_outer {
        let delta_f = delta.to_f64();
        let mut separation_failed = None;
        // Coarse data that later bootstrapped iterations inherit.
        let mut inherited: Option<(usize, Vec<Complex64>, f64)> = None;
        let mut transferred: Option<(f64, usize, f64)> = None;

        for inner in 1..=config.max_inner {
            if n_bins > config.max_bins {
                report.status = CertificationStatus::Failed {
                    reason: format!("mesh refinement exceeded {} bins", config.max_bins),
                };
                return Ok(report);
            }
            let mesh = Rational::new(1, n_bins as i128);
            let mut record = IterationRecord {
                outer,
                inner,
                n_bins,
                mesh,
                delta,
                h: f64::NAN,
                h_source: HSource::Computed {
                    neumann: f64::NAN,
                    truncation_n: config.truncation,
                },
                kl: None,
                mesh_bound: None,
                step7_pass: false,
                eigenvalues: Vec::new(),
                eigenvalues_inherited: false,
                separation: None,
                note: None,
            };

            let (h, eigenvalues, subdominant) = match (&transferred, &inherited) {
                (Some((h, from_bins, closed_bound)), Some((_, ev, sub))) => {
                    record.h_source = HSource::Transferred {
                        from_bins: *from_bins,
                        closed_mesh_bound: *closed_bound,
                    };
                    record.eigenvalues_inherited = true;
                    (*h, ev.clone(), *sub)
                }
                _ => {
                    let data = provider.spectral_data(map, n_bins, r, config.truncation, &options)?;
                    if data.eigenvalues_above_r.len() > 1 {
                        let sep = separation_check(&data.eigenvalues_above_r, delta_f);
                        if let Separation::Fail { witness } = sep {
                            record.eigenvalues = data.eigenvalues_above_r.clone();
                            record.separation = Some(Separation::Fail { witness });
                            record.note = Some("eigenvalue too close to the unit cluster".into());
                            report.iterations.push(record);
                            separation_failed = Some(witness);
                            break;
                        }
                        return Err(Error::SpectralStructure(format!(
                            "{} eigenvalues of modulus above r = {r} at {n_bins} bins",
                            data.eigenvalues_above_r.len()
                        )));
                    }
                    if data.subdominant_modulus > r - delta_f {
                        record.eigenvalues = data.eigenvalues_above_r.clone();
                        record.note = Some(format!(
                            "subdominant modulus {:.6} within δ of r",
                            data.subdominant_modulus
                        ));
                        report.iterations.push(record);
                        separation_failed = Some(Complex64::new(data.subdominant_modulus, 0.0));
                        break;
                    }
                    let bound = spectral::h_star(&data, delta_f, ly.alpha0.to_f64(), ly.b0.to_f64())?;
                    record.h_source = HSource::Computed {
                        neumann: bound.neumann_bound,
                        truncation_n: bound.truncation_n,
                    };
                    inherited = Some((n_bins, data.eigenvalues_above_r.clone(), data.subdominant_modulus));
                    (bound.h_star, data.eigenvalues_above_r, data.subdominant_modulus)
                }
            };
            let _ = subdominant;
            record.h = h;
            let constants = kl::kl_constants(&ly, r, delta_f, h)?;
            record.kl = Some(constants);
            record.mesh_bound = Some(constants.mesh_bound);
            record.step7_pass = mesh.to_f64() <= constants.mesh_bound;

            if record.step7_pass {
                let sep = separation_check(&eigenvalues, delta_f);
                record.eigenvalues = eigenvalues;
                record.separation = Some(sep.clone());
                report.iterations.push(record);
                if let Separation::Fail { witness } = sep {
                    separation_failed = Some(witness);
                    break;
                }
                report.status = CertificationStatus::Certified;
                report.delta_com = Some(delta);
                report.epsilon_com = Some(mesh);
                report.hole_bound = Some(ly.discretization_factor * mesh);
                return Ok(report);
            }

            // Step 7 failed: pick the next mesh.
            let halved = config
                .schedule
                .coarsest_within(mesh.to_f64() / 2.0, usize::MAX)
                .unwrap_or(n_bins * 2);
            let predicted = config
                .schedule
                .coarsest_within(constants.mesh_bound.min(mesh.to_f64() / 2.0), usize::MAX)
                .unwrap_or(halved);
            let next = predicted.max(halved);
            let mut note = None;
            if config.bootstrap && transferred.is_none() {
                match refine_with_bootstrap(&ly, r, delta_f, n_bins, h, &config.schedule, config.max_bins, next)? {
                    Plan::Bootstrap {
                        n_bins: fine,
                        transferred_h,
                        closed_mesh_bound,
                        predicted,
                    } => {
                        note = Some(format!(
                            "bootstrap: closed-only (2Γ)⁻¹ε₀* = {closed_mesh_bound:.13} ≥ mesh, transferred H = {transferred_h:.10}, predicted (2Γ)⁻¹ε₀ = {:.13} (n2 = {}) → {fine} bins",
                            predicted.mesh_bound, predicted.n2
                        ));
                        transferred = Some((transferred_h, n_bins, closed_mesh_bound));
                        n_bins = fine;
                    }
                    Plan::Reuse { .. } => {
                        // The transferred bound is weaker than H*, so this cannot
                        // happen after a failed comparison; refine plainly.
                        n_bins = next;
                    }
                    Plan::Refine { n_bins: fine, reason } => {
                        note = Some(format!("no bootstrap ({reason}); refining to {fine} bins"));
                        n_bins = fine;
                    }
                }
            } else {
                n_bins = next;
            }
            record.note = note;
            report.iterations.push(record);
        }

        if let Some(witness) = separation_failed {
            let k = delta.recip();
            delta = Rational::ONE / (k * Rational::from_integer(2));
            log::info!("separation failed at {witness}; δ → {delta}");
            continue;
        }
        report.status = CertificationStatus::Failed {
            reason: format!("inner loop exceeded {} iterations", config.max_inner),
        };
        return Ok(report);
    }
    report.status = CertificationStatus::Failed {
        reason: format!("outer loop exceeded {} iterations", config.max_outer),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn separation_examples() {
        assert_eq!(separation_check(&[c(1.0, 0.0)], 1.0 / 26.0), Separation::Pass);
        // 0.97 lies within δ of 1, hence in the cluster.
        assert_eq!(separation_check(&[c(1.0, 0.0), c(0.97, 0.0)], 1.0 / 26.0), Separation::Pass);
        assert_eq!(
            separation_check(&[c(1.0, 0.0), c(0.95, 0.0)], 1.0 / 26.0),
            Separation::Fail { witness: c(0.95, 0.0) }
        );
        assert_eq!(separation_check(&[c(1.0, 0.0), c(0.98, 0.1)], 0.01), Separation::Pass);
    }

    #[test]
    fn schedule_picks_coarsest_admissible_mesh() {
        let s = MeshSchedule::OneTwoFive;
        assert_eq!(s.coarsest_within(1.2607e-5, usize::MAX), Some(100_000));
        assert_eq!(s.coarsest_within(2.3e-4, usize::MAX), Some(5000));
        assert_eq!(s.coarsest_within(2e-4, usize::MAX), Some(5000));
        assert_eq!(s.coarsest_within(1e-3, usize::MAX), Some(1000));
        assert_eq!(MeshSchedule::PowersOfTen.coarsest_within(2.3e-4, usize::MAX), Some(10_000));
        assert_eq!(s.coarsest_within(1e-7, 1000), None);
    }

    #[test]
    fn default_delta() {
        assert_eq!(CertificationConfig::default_delta(Rational::new(1, 25)).unwrap(), Rational::new(1, 26));
        assert_eq!(CertificationConfig::default_delta(Rational::new(1, 40)).unwrap(), Rational::new(1, 41));
    }

    fn table_one_like_report() -> CertificationReport {
        let ly = kl::ly_constants(Rational::new(1, 9), Rational::new(2, 9), LyMode::HoleUniform).unwrap();
        CertificationReport {
            status: CertificationStatus::Certified,
            map_label: "m".into(),
            map_fingerprint: "f".into(),
            ell: Rational::new(1, 25),
            r: Rational::new(24, 25),
            ly,
            convention: QNormConvention::RowSums,
            delta_com: Some(Rational::new(1, 26)),
            epsilon_com: Some(Rational::new(1, 5000)),
            hole_bound: Some(Rational::new(10, 9) * Rational::new(1, 5000)),
            escape_guarantee: -(24.0f64 / 25.0).ln(),
            theorem2_coefficient: 1.0 + (4.0 / 9.0) / (1.0 - 1.0 / 25.0 - 1.0 / 3.0),
            iterations: Vec::new(),
        }
    }

    #[test]
    fn certificate_bound_examples() {
        let report = table_one_like_report();
        assert_relative_eq!(report.theorem2_coefficient, 1.0 + (4.0 / 9.0) / (47.0 / 75.0), max_relative = 1e-14);
        let b = certificate_bounds(&report, 20.0 / 9.0 * 1e-4).unwrap();
        assert!(b.accim_exists);
        assert_relative_eq!(b.one_minus_eh_upper, report.theorem2_coefficient * 20.0 / 9.0 * 1e-4, max_relative = 1e-12);
        assert!((b.one_minus_eh_upper - 3.799e-4).abs() < 1e-7);
        assert!(!certificate_bounds(&report, 0.5).unwrap().accim_exists);
        let zero = certificate_bounds(&report, 0.0).unwrap();
        assert!(zero.accim_exists);
        assert_eq!(zero.one_minus_eh_upper, 0.0);
        assert_eq!(zero.escape_upper, 0.0);
    }

    #[test]
    fn bootstrap_plan_examples() {
        let ly = kl::ly_constants(Rational::new(1, 9), Rational::new(2, 9), LyMode::HoleUniform).unwrap();
        let plan = refine_with_bootstrap(
            &ly,
            39.0 / 40.0,
            1.0 / 41.0,
            5000,
            63.73181657,
            &MeshSchedule::OneTwoFive,
            1_000_000,
            10_000,
        )
        .unwrap();
        match plan {
            Plan::Bootstrap { n_bins, transferred_h, predicted, .. } => {
                assert_eq!(n_bins, 100_000);
                assert!((transferred_h / 1036.693385 - 1.0).abs() < 0.10);
                assert_eq!(predicted.n2, 11);
            }
            other => panic!("unexpected plan {other:?}"),
        }
        // 2Γ·mesh above the closed-only ε₀*.
        let plan = refine_with_bootstrap(&ly, 0.975, 1.0 / 41.0, 1000, 63.73181657, &MeshSchedule::OneTwoFive, 1_000_000, 2000)
            .unwrap();
        assert!(matches!(plan, Plan::Refine { n_bins: 2000, .. }));
        // Small H: the transferred chain already admits the coarse mesh.
        let plan = refine_with_bootstrap(&ly, 0.975, 1.0 / 41.0, 200_000, 1e-6, &MeshSchedule::OneTwoFive, 1_000_000, 2000)
            .unwrap();
        assert!(matches!(plan, Plan::Reuse { .. }));
    }

    #[test]
    fn decimal_shift_certifies_consistently() {
        let map = builtin::decimal_shift();
        let mut config = CertificationConfig::new(Rational::new(1, 5));
        config.bins_init = 100;
        config.dense_limit = 500;
        let mut provider = MemoryProvider::new();
        let report = run_certification(&map, &config, &mut provider).map_err(|e| e.to_string()).unwrap();
        assert!(report.is_certified(), "{}", report.table());
        let last = report.iterations.last().unwrap();
        let recomputed = kl::kl_constants(&report.ly, 0.8, report.delta_com.unwrap().to_f64(), last.h).unwrap();
        assert!(recomputed.mesh_bound >= report.epsilon_com.unwrap().to_f64() - 1e-12);
        for pair in report.iterations.windows(2) {
            assert!(pair[1].mesh <= pair[0].mesh);
            assert!(pair[1].delta <= pair[0].delta);
        }
    }
}
