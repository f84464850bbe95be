//! Reruns of the two published certification logs for the ten-branch map,
//! with a cell-by-cell diff against the published values, and the run
//! manifest embedded in every report.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::certify::{
    self, CertificationConfig, CertificationReport, HSource, IterationRecord, SpectralProvider,
};
use crate::error::Result;
use crate::maps::PiecewiseMap;
use crate::spectral::QNormConvention;
use crate::Rational;

pub fn table1_ell() -> Rational {
    Rational::new(1, 25)
}

pub fn table2_ell() -> Rational {
    Rational::new(1, 40)
}

/// Mesh of the first pass in both tables, `2×10⁻⁴`.
pub const COARSE_BINS: usize = 5000;
/// Mesh reached by the bootstrap in the second table, `10⁻⁵`.
pub const FINE_BINS: usize = 100_000;

pub mod published {
    pub const TABLE1_NEUMANN: f64 = 7.444310493;
    pub const TABLE1_H: f64 = 45.46070939;
    pub const TABLE1_MESH_BOUND: f64 = 0.0002319492040;
    pub const TABLE2_H: f64 = 63.73181657;
    pub const TABLE2_MESH_BOUND: f64 = 0.0001763820641;
    pub const TABLE2_CLOSED_ONLY: f64 = 0.0002425063815;
    pub const TABLE2_TRANSFERRED_H: f64 = 1036.693385;
    pub const TABLE2_FINE_MESH_BOUND: f64 = 0.00001216687545;
}

/// Tolerance on values derived from computed eigen-data.
pub const CHAIN_TOL: f64 = 1e-3;
/// Tolerance on the closed-only comparison value.
pub const CLOSED_ONLY_TOL: f64 = 1e-6;
/// Tolerance on the transferred resolvent bound and everything downstream of it.
pub const TRANSFER_TOL: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Tolerance {
    Exact,
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub column: usize,
    pub cell: String,
    pub published: String,
    pub computed: String,
    pub tolerance: Tolerance,
    pub relative_error: Option<f64>,
    pub pass: bool,
}

fn relative(column: usize, cell: &str, computed: Option<f64>, published: f64, tol: f64) -> CellDiff {
    let err = computed.map(|c| (c - published) / published);
    CellDiff {
        column,
        cell: cell.into(),
        published: format!("{published}"),
        computed: computed.map_or_else(|| "missing".into(), |c| format!("{c:.12e}")),
        tolerance: Tolerance::Relative(tol),
        relative_error: err,
        pass: err.is_some_and(|e| e.abs() <= tol),
    }
}

fn exact<T: PartialEq + std::fmt::Display>(column: usize, cell: &str, computed: Option<T>, published: T) -> CellDiff {
    CellDiff {
        column,
        cell: cell.into(),
        published: published.to_string(),
        computed: computed.as_ref().map_or_else(|| "missing".into(), |c| c.to_string()),
        tolerance: Tolerance::Exact,
        relative_error: None,
        pass: computed.is_some_and(|c| c == published),
    }
}

fn loop_outcome(pass: Option<bool>) -> Option<&'static str> {
    pass.map(|p| if p { "pass" } else { "fail" })
}

/// Cells shared by every column: `r`, `δ`, mesh, `n₁`, `C`, `n₂`, Loop I.
fn column_cells(column: usize, it: Option<&IterationRecord>, r: Rational, delta: Rational, bins: usize, n2: u32) -> Vec<CellDiff> {
    let kl = it.and_then(|i| i.kl);
    let c_exact = Rational::ONE / r;
    vec![
        exact(column, "δ", it.map(|i| i.delta), delta),
        exact(column, "ε", it.map(|i| i.mesh), Rational::new(1, bins as i128)),
        exact(column, "n1", kl.map(|k| k.n1), 1),
        relative(column, "C", kl.map(|k| k.c), c_exact.to_f64(), 1e-12),
        exact(column, "n2", kl.map(|k| k.n2), n2),
    ]
}

fn output_cells(column: usize, report: &CertificationReport, delta: Rational, bins: usize) -> Vec<CellDiff> {
    let eps = Rational::new(1, bins as i128);
    vec![
        exact(column, "ε_com", report.epsilon_com, eps),
        exact(column, "δ_com", report.delta_com, delta),
        exact(column, "Γ ε_com", report.hole_bound, report.ly.discretization_factor * eps),
    ]
}

fn neumann(it: Option<&IterationRecord>) -> Option<f64> {
    match it?.h_source {
        HSource::Computed { neumann, .. } => Some(neumann),
        HSource::Transferred { .. } => None,
    }
}

fn separation_pass(it: Option<&IterationRecord>) -> Option<bool> {
    it?.separation.as_ref().map(|s| *s == certify::Separation::Pass)
}

/// Diff of an `ell = 1/25` report against the first table.
pub fn diff_table1(report: &CertificationReport) -> Vec<CellDiff> {
    use published::*;
    let delta = Rational::new(1, 26);
    let first = report.iterations.first();
    let mut cells = vec![exact(1, "r", Some(report.r), Rational::new(24, 25))];
    cells.extend(column_cells(1, first, report.r, delta, COARSE_BINS, 8));
    cells.push(relative(1, "neumann", neumann(first), TABLE1_NEUMANN, CHAIN_TOL));
    cells.push(relative(1, "H*", first.map(|i| i.h), TABLE1_H, CHAIN_TOL));
    cells.push(relative(1, "(2Γ)⁻¹ε₀*", first.and_then(|i| i.mesh_bound), TABLE1_MESH_BOUND, CHAIN_TOL));
    cells.push(exact(1, "Loop I", loop_outcome(first.map(|i| i.step7_pass)), "pass"));
    cells.push(exact(1, "Loop II", loop_outcome(separation_pass(first)), "pass"));
    cells.extend(output_cells(1, report, delta, COARSE_BINS));
    cells
}

/// Diff of an `ell = 1/40` report against the second table and the
/// bootstrap values quoted alongside it.
pub fn diff_table2(report: &CertificationReport) -> Vec<CellDiff> {
    use published::*;
    let delta = Rational::new(1, 41);
    let first = report.iterations.first();
    let fine = report
        .iterations
        .iter()
        .find(|i| matches!(i.h_source, HSource::Transferred { .. }));
    let closed_only = fine.and_then(|i| match i.h_source {
        HSource::Transferred { closed_mesh_bound, .. } => Some(closed_mesh_bound),
        HSource::Computed { .. } => None,
    });

    let mut cells = vec![exact(1, "r", Some(report.r), Rational::new(39, 40))];
    cells.extend(column_cells(1, first, report.r, delta, COARSE_BINS, 8));
    cells.push(relative(1, "H*", first.map(|i| i.h), TABLE2_H, CHAIN_TOL));
    cells.push(relative(1, "(2Γ)⁻¹ε₀", first.and_then(|i| i.mesh_bound), TABLE2_MESH_BOUND, CHAIN_TOL));
    cells.push(exact(1, "Loop I", loop_outcome(first.map(|i| i.step7_pass)), "fail"));
    cells.push(relative(1, "closed-only (2Γ)⁻¹ε₀*", closed_only, TABLE2_CLOSED_ONLY, CLOSED_ONLY_TOL));

    cells.extend(column_cells(2, fine, report.r, delta, FINE_BINS, 11));
    cells.push(relative(2, "H (transferred)", fine.map(|i| i.h), TABLE2_TRANSFERRED_H, TRANSFER_TOL));
    cells.push(relative(2, "(2Γ)⁻¹ε₀", fine.and_then(|i| i.mesh_bound), TABLE2_FINE_MESH_BOUND, TRANSFER_TOL));
    cells.push(exact(2, "Loop I", loop_outcome(fine.map(|i| i.step7_pass)), "pass"));
    cells.push(exact(2, "Loop II", loop_outcome(separation_pass(fine)), "pass"));
    cells.extend(output_cells(2, report, delta, FINE_BINS));
    cells
}

/// Configuration of the published runs: column-sum norms, first mesh `2×10⁻⁴`.
pub fn table_config(ell: Rational) -> CertificationConfig {
    CertificationConfig {
        bins_init: COARSE_BINS,
        convention: QNormConvention::ColumnSums,
        ..CertificationConfig::new(ell)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReproduction {
    pub title: String,
    pub report: CertificationReport,
    pub cells: Vec<CellDiff>,
    pub passed: bool,
}

impl TableReproduction {
    fn new(title: &str, report: CertificationReport, cells: Vec<CellDiff>) -> Self {
        let passed = cells.iter().all(|c| c.pass);
        TableReproduction {
            title: title.into(),
            report,
            cells,
            passed,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellDiff> {
        self.cells.iter().filter(|c| !c.pass)
    }

    /// Side-by-side listing of published and computed cells.
    pub fn diff_table(&self) -> String {
        let mut out = format!("{}\n", self.title);
        out.push_str(&format!(
            "{:>3}  {:<24} {:>22} {:>22} {:>12}  {}\n",
            "col", "cell", "published", "computed", "rel. error", "status"
        ));
        for c in &self.cells {
            let err = c.relative_error.map_or_else(String::new, |e| format!("{e:+.3e}"));
            out.push_str(&format!(
                "{:>3}  {:<24} {:>22} {:>22} {:>12}  {}\n",
                c.column,
                c.cell,
                c.published,
                c.computed,
                err,
                if c.pass { "ok" } else { "FAILED" }
            ));
        }
        out.push_str(if self.passed { "reproduced\n" } else { "FAILED\n" });
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRuns {
    pub table1: TableReproduction,
    pub table2: TableReproduction,
    pub timings: BTreeMap<String, f64>,
}

impl TableRuns {
    pub fn passed(&self) -> bool {
        self.table1.passed && self.table2.passed
    }
}

/// Runs both published certifications through one provider, so the second
/// run reuses the first run's spectral data at the shared mesh.
pub fn reproduce_tables(map: &PiecewiseMap, provider: &mut dyn SpectralProvider) -> Result<TableRuns> {
    let mut timings = BTreeMap::new();
    let t = Instant::now();
    let r1 = certify::run_certification(map, &table_config(table1_ell()), provider)?;
    timings.insert("table1".to_string(), t.elapsed().as_secs_f64());
    let t = Instant::now();
    let r2 = certify::run_certification(map, &table_config(table2_ell()), provider)?;
    timings.insert("table2".to_string(), t.elapsed().as_secs_f64());
    let c1 = diff_table1(&r1);
    let c2 = diff_table2(&r2);
    Ok(TableRuns {
        table1: TableReproduction::new("ell = 1/25", r1, c1),
        table2: TableReproduction::new("ell = 1/40", r2, c2),
        timings,
    })
}

/// What produced a report: enough to rerun it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub map_path: Option<String>,
    /// SHA-256 of the map file as read, or of the canonical config for built-in maps.
    pub map_hash: Option<String>,
    pub map_fingerprint: Option<String>,
    /// Parameters as given, rationals in `p/q` form.
    pub parameters: BTreeMap<String, String>,
    pub version: String,
    /// Seconds per phase. Not part of the reproducible content.
    pub timings: BTreeMap<String, f64>,
    pub cache: CacheStats,
}

impl RunManifest {
    pub fn new(subcommand: impl Into<String>) -> Self {
        RunManifest {
            subcommand: subcommand.into(),
            map_path: None,
            map_hash: None,
            map_fingerprint: None,
            parameters: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: BTreeMap::new(),
            cache: CacheStats::default(),
        }
    }

    pub fn parameter(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(phase.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }
}

/// A result with its manifest, as written to report files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub manifest: RunManifest,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| crate::Error::Parse(e.to_string()))
    }

    /// JSON with every `timings` object removed, for reproducibility checks.
    pub fn reproducible_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self).map_err(|e| crate::Error::Parse(e.to_string()))?;
        strip_timings(&mut value);
        serde_json::to_string_pretty(&value).map_err(|e| crate::Error::Parse(e.to_string()))
    }
}

pub fn strip_timings(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("timings");
            map.values_mut().for_each(strip_timings);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::{CertificationStatus, Separation};
    use crate::kl::{self, LyMode};

    fn record(n_bins: usize, delta: Rational, r: f64, h: f64, source: HSource) -> IterationRecord {
        let ly = kl::ly_constants(Rational::new(1, 9), Rational::new(2, 9), LyMode::HoleUniform).unwrap();
        let k = kl::kl_constants(&ly, r, delta.to_f64(), h).unwrap();
        let mesh = Rational::new(1, n_bins as i128);
        IterationRecord {
            outer: 1,
            inner: 1,
            n_bins,
            mesh,
            delta,
            h,
            h_source: source,
            kl: Some(k),
            mesh_bound: Some(k.mesh_bound),
            step7_pass: mesh.to_f64() <= k.mesh_bound,
            eigenvalues: vec![num_complex::Complex64::new(1.0, 0.0)],
            eigenvalues_inherited: false,
            separation: Some(Separation::Pass),
            note: None,
        }
    }

    fn report(ell: Rational, iterations: Vec<IterationRecord>, eps: Rational, delta: Rational) -> CertificationReport {
        let ly = kl::ly_constants(Rational::new(1, 9), Rational::new(2, 9), LyMode::HoleUniform).unwrap();
        CertificationReport {
            status: CertificationStatus::Certified,
            map_label: "m".into(),
            map_fingerprint: "f".into(),
            ell,
            r: Rational::ONE - ell,
            ly,
            convention: QNormConvention::ColumnSums,
            delta_com: Some(delta),
            epsilon_com: Some(eps),
            hole_bound: Some(ly.discretization_factor * eps),
            escape_guarantee: 0.0,
            theorem2_coefficient: 0.0,
            iterations,
        }
    }

    #[test]
    fn published_inputs_reproduce_table1() {
        let delta = Rational::new(1, 26);
        let it = record(
            5000,
            delta,
            0.96,
            published::TABLE1_H,
            HSource::Computed {
                neumann: published::TABLE1_NEUMANN,
                truncation_n: 5,
            },
        );
        let cells = diff_table1(&report(table1_ell(), vec![it], Rational::new(1, 5000), delta));
        let failed: Vec<_> = cells.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }

    #[test]
    fn missing_columns_fail() {
        let delta = Rational::new(1, 41);
        let cells = diff_table2(&report(table2_ell(), vec![], Rational::new(1, 5000), delta));
        assert!(cells.iter().any(|c| c.computed == "missing" && !c.pass));
        assert!(cells.iter().any(|c| c.cell == "ε_com" && !c.pass));
    }

    #[test]
    fn timings_are_stripped() {
        let mut m = RunManifest::new("x");
        m.timings.insert("a".into(), 1.5);
        m.parameter("ell", Rational::new(1, 25));
        let r = Report { manifest: m, result: 3 };
        let json = r.reproducible_json().unwrap();
        assert!(!json.contains("timings"));
        assert!(json.contains("\"1/25\""));
    }
}
