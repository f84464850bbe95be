//! Spectral data of closed Ulam matrices.
//!
//! Coefficient vectors are densities (bin heights) and the matrix acts on the
//! right, `x -> x P`. The `L¹` norm of such a vector is `mesh · Σ|x_i|`, so the
//! induced operator norm is the maximum absolute row sum. The projection onto
//! the eigenvalue 1 is `Π₁ = 𝟙 mᵀ` with `m = mesh · f` the invariant mass
//! vector, and `Qⁿ = (P(1 - Π₁))ⁿ = Pⁿ - 𝟙 mᵀ` for `n ≥ 1`.
//!
//! Everything that does not depend on `r` lives in a [`SpectralSnapshot`],
//! which is what gets cached; [`SpectralSnapshot::level`] specializes it to a
//! radius `r`.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;
use crate::ulam::UlamMatrix;

pub const DEFAULT_TRUNCATION: usize = 5;
pub const MAX_TRUNCATION: usize = 64;
pub const DENSE_LIMIT: usize = 6000;
pub const UNIT_EIGENVALUE_TOL: f64 = 1e-8;
pub const RESIDUAL_TOL: f64 = 1e-8;

/// How `‖Qⁿ‖` is evaluated.
///
/// `RowSums` is the induced `L¹` norm for the right action and uses
/// `Q⁰ = 1 - Π₁`. `ColumnSums` takes maximum absolute column sums of
/// `Pⁿ - 𝟙mᵀ` and uses `Q⁰ = I` (norm 1); it is the transposed convention of
/// MATLAB's `norm(·, 1)` applied to the row-stochastic matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QNormConvention {
    #[default]
    RowSums,
    ColumnSums,
}

impl QNormConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            QNormConvention::RowSums => "row-sums",
            QNormConvention::ColumnSums => "column-sums",
        }
    }
}

impl std::str::FromStr for QNormConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row-sums" | "rows" => Ok(QNormConvention::RowSums),
            "column-sums" | "columns" => Ok(QNormConvention::ColumnSums),
            other => Err(Error::Parse(format!("unknown norm convention `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    Dense,
    Subspace { block: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotOptions {
    pub convention: QNormConvention,
    /// Highest power of `Q` whose norm is computed up front.
    pub max_power: usize,
    pub dense_limit: usize,
    /// Initial block size for subspace iteration.
    pub block: usize,
    /// Ritz values above this modulus must converge in subspace iteration.
    pub iterative_floor: f64,
}

impl Default for SnapshotOptions {
    fn default() -> Self {
        SnapshotOptions {
            convention: QNormConvention::RowSums,
            max_power: DEFAULT_TRUNCATION + 1,
            dense_limit: DENSE_LIMIT,
            block: 16,
            iterative_floor: 0.05,
        }
    }
}

/// `r`-independent spectral data of one closed Ulam matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSnapshot {
    pub n_bins: usize,
    pub map_fingerprint: String,
    pub method: EigenMethod,
    pub convention: QNormConvention,
    /// Sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Relative residual `‖Pu - λu‖₂ / ‖u‖₂` for each eigenvalue.
    pub residuals: Vec<f64>,
    /// Every eigenvalue of modulus above this value is listed.
    pub complete_above: f64,
    /// Density heights with `mesh · Σf = 1`.
    pub invariant_density: Vec<f64>,
    pub density_residual: f64,
    pub projection_norm: f64,
    /// `‖Qⁿ‖` for `n = 0..=max_power`.
    pub q_power_norms: Vec<f64>,
}

impl SpectralSnapshot {
    pub fn mesh(&self) -> f64 {
        1.0 / self.n_bins as f64
    }

    pub fn invariant_mass(&self) -> Vec<f64> {
        let mesh = self.mesh();
        self.invariant_density.iter().map(|f| f * mesh).collect()
    }

    /// Index of the eigenvalue closest to 1.
    pub fn unit_index(&self) -> Option<usize> {
        let (idx, dist) = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(i, z)| (i, (z - 1.0).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        (dist <= UNIT_EIGENVALUE_TOL).then_some(idx)
    }

    /// Largest modulus among eigenvalues other than the unit one.
    pub fn subdominant_modulus(&self) -> f64 {
        let unit = self.unit_index();
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != unit)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max)
    }

    /// Specializes to radius `r` with truncation index at least `truncation`.
    /// The truncation grows until the tail ratio is below 1, limited by the
    /// norms already computed.
    pub fn level(&self, r: f64, truncation: usize) -> Result<SpectralData> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Domain(format!("r = {r} must lie in (0, 1)")));
        }
        if self.complete_above > r {
            return Err(Error::EigenConvergence(format!(
                "eigenvalues are only resolved above modulus {:.3e}, need {r}",
                self.complete_above
            )));
        }
        let closest = self
            .eigenvalues
            .iter()
            .copied()
            .min_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()))
            .unwrap_or(Complex64::new(0.0, 0.0));
        let unit = self.unit_index().ok_or(Error::NoUnitEigenvalue { closest })?;
        let mut eigenvalues_above_r = Vec::new();
        let mut residuals = Vec::new();
        for (z, res) in self.eigenvalues.iter().zip(&self.residuals) {
            if z.norm() > r {
                if *res > RESIDUAL_TOL {
                    return Err(Error::Residual {
                        eigenvalue: *z,
                        residual: *res,
                    });
                }
                eigenvalues_above_r.push(*z);
                residuals.push(*res);
            }
        }
        let n = choose_truncation(&self.q_power_norms, r, truncation)?;
        Ok(SpectralData {
            r,
            eigenvalues_above_r,
            residuals,
            unit_eigenvalue: self.eigenvalues[unit],
            subdominant_modulus: self.subdominant_modulus(),
            invariant_density: self.invariant_density.clone(),
            projection_norm: self.projection_norm,
            q_power_norms: self.q_power_norms[..=n + 1].to_vec(),
            truncation_n: n,
            convention: self.convention,
        })
    }

    /// Copy with `‖Qⁿ‖` recomputed up to `max_power`.
    pub fn with_powers(&self, matrix: &UlamMatrix, max_power: usize) -> Result<SpectralSnapshot> {
        let mass = self.invariant_mass();
        let mut out = self.clone();
        out.q_power_norms = q_power_norms(matrix.entries(), &mass, max_power, self.convention);
        Ok(out)
    }
}

/// Spectral data at a fixed radius `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    pub r: f64,
    pub eigenvalues_above_r: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub unit_eigenvalue: Complex64,
    pub subdominant_modulus: f64,
    pub invariant_density: Vec<f64>,
    pub projection_norm: f64,
    /// `‖Qⁿ‖` for `n = 0..=truncation_n + 1`.
    pub q_power_norms: Vec<f64>,
    pub truncation_n: usize,
    pub convention: QNormConvention,
}

impl SpectralData {
    pub fn neumann_bound(&self) -> Result<f64> {
        neumann_bound(&self.q_power_norms, self.r, self.truncation_n)
    }
}

/// `(1/r) Σ_{n=0}^{N} ‖Qⁿ‖/rⁿ / (1 - ‖Q^{N+1}‖/r^{N+1})`.
pub fn neumann_bound(norms: &[f64], r: f64, truncation: usize) -> Result<f64> {
    if norms.len() < truncation + 2 {
        return Err(Error::Domain(format!(
            "need {} power norms for truncation {truncation}, have {}",
            truncation + 2,
            norms.len()
        )));
    }
    let ratio = norms[truncation + 1] / r.powi(truncation as i32 + 1);
    if ratio >= 1.0 {
        return Err(Error::NeumannDivergence { ratio, truncation });
    }
    let head: f64 = (0..=truncation).map(|n| norms[n] / r.powi(n as i32)).sum();
    Ok(head / r / (1.0 - ratio))
}

fn choose_truncation(norms: &[f64], r: f64, start: usize) -> Result<usize> {
    let mut last = None;
    for n in start..=MAX_TRUNCATION {
        if n + 1 >= norms.len() {
            break;
        }
        let ratio = norms[n + 1] / r.powi(n as i32 + 1);
        if ratio < 1.0 {
            return Ok(n);
        }
        last = Some((ratio, n));
    }
    let (ratio, truncation) = last.unwrap_or((f64::INFINITY, start));
    Err(Error::NeumannDivergence { ratio, truncation })
}

/// Resolvent bounds derived from [`SpectralData`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolventBound {
    pub r: f64,
    pub delta: f64,
    pub alpha0: f64,
    pub b0: f64,
    pub projection_norm: f64,
    pub neumann_bound: f64,
    pub truncation_n: usize,
    pub resolvent_l1_bound: f64,
    pub h_star: f64,
}

/// `δ⁻¹‖Π₁‖ + neumann`, then
/// `H* = (B₀/(r-α₀) + 1)·that + 1/(r-α₀) + 2/r`.
///
/// Only valid when 1 is the single (simple) eigenvalue above `r` and all
/// others have modulus at most `r - δ`.
pub fn h_star(data: &SpectralData, delta: f64, alpha0: f64, b0: f64) -> Result<ResolventBound> {
    let r = data.r;
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta = {delta} must be positive")));
    }
    if !(alpha0 < r) {
        return Err(Error::Domain(format!("need alpha0 < r, got alpha0 = {alpha0}, r = {r}")));
    }
    if data.eigenvalues_above_r.len() != 1 {
        return Err(Error::SpectralStructure(format!(
            "{} eigenvalues of modulus above r = {r}; the bound needs exactly one",
            data.eigenvalues_above_r.len()
        )));
    }
    if data.subdominant_modulus > r - delta {
        return Err(Error::SpectralStructure(format!(
            "subdominant modulus {:.6} exceeds r - delta = {:.6}",
            data.subdominant_modulus,
            r - delta
        )));
    }
    let neumann = data.neumann_bound()?;
    let resolvent_l1_bound = data.projection_norm / delta + neumann;
    let h = (b0 / (r - alpha0) + 1.0) * resolvent_l1_bound + 1.0 / (r - alpha0) + 2.0 / r;
    Ok(ResolventBound {
        r,
        delta,
        alpha0,
        b0,
        projection_norm: data.projection_norm,
        neumann_bound: neumann,
        truncation_n: data.truncation_n,
        resolvent_l1_bound,
        h_star: h,
    })
}

/// Maximum absolute row sum.
pub fn operator_l1_norm(m: &CsrMatrix) -> f64 {
    (0..m.n_rows()).map(|i| m.row_abs_sum(i)).fold(0.0, f64::max)
}

pub fn dense_operator_l1_norm(rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Snapshot followed by [`SpectralSnapshot::level`], computing further
/// powers of `Q` if the default truncation does not converge.
pub fn eigen_analysis(matrix: &UlamMatrix, r: f64, options: &SnapshotOptions) -> Result<SpectralData> {
    let snapshot = spectral_snapshot(matrix, options)?;
    level_with_extension(&snapshot, matrix, r, DEFAULT_TRUNCATION).map(|(data, _)| data)
}

/// Like [`SpectralSnapshot::level`], extending the power norms to
/// `MAX_TRUNCATION + 1` when needed. Returns the extended snapshot if one was
/// computed.
pub fn level_with_extension(
    snapshot: &SpectralSnapshot,
    matrix: &UlamMatrix,
    r: f64,
    truncation: usize,
) -> Result<(SpectralData, Option<SpectralSnapshot>)> {
    match snapshot.level(r, truncation) {
        Err(Error::NeumannDivergence { .. }) if snapshot.q_power_norms.len() < MAX_TRUNCATION + 2 => {
            log::info!("extending power norms to {} for r = {r}", MAX_TRUNCATION + 1);
            let extended = snapshot.with_powers(matrix, MAX_TRUNCATION + 1)?;
            let data = extended.level(r, truncation)?;
            Ok((data, Some(extended)))
        }
        other => other.map(|d| (d, None)),
    }
}

pub fn spectral_snapshot(matrix: &UlamMatrix, options: &SnapshotOptions) -> Result<SpectralSnapshot> {
    if !matrix.is_closed() {
        return Err(Error::NotClosed);
    }
    let p = matrix.entries();
    let n = p.n_rows();
    let (method, eigenvalues, residuals, complete_above) = if n <= options.dense_limit {
        let (ev, res) = dense_eigenpairs(p)?;
        (EigenMethod::Dense, ev, res, 0.0)
    } else {
        subspace_eigenpairs(p, options.block, options.iterative_floor)?
    };
    let mass = invariant_mass(p)?;
    let mesh = matrix.partition().mesh_f64();
    let density_residual = {
        let image = p.left_mul(&mass);
        image.iter().zip(&mass).map(|(a, b)| (a - b).abs()).sum::<f64>()
    };
    // ‖Π₁‖ = max_i Σ_j |m_j| = Σ|m|.
    let projection_norm: f64 = mass.iter().map(|m| m.abs()).sum();
    let q_power_norms = q_power_norms(p, &mass, options.max_power, options.convention);
    Ok(SpectralSnapshot {
        n_bins: n,
        map_fingerprint: matrix.map_fingerprint().to_string(),
        method,
        convention: options.convention,
        eigenvalues,
        residuals,
        complete_above,
        invariant_density: mass.iter().map(|m| m / mesh).collect(),
        density_residual,
        projection_norm,
        q_power_norms,
    })
}

/// Invariant mass vector (`Σ = 1`) by power iteration on `(P + I)/2`.
pub fn invariant_mass(p: &CsrMatrix) -> Result<Vec<f64>> {
    let n = p.n_rows();
    let tol = (4.0 * n as f64 * f64::EPSILON).max(1e-14);
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut diff = f64::INFINITY;
    for _ in 0..200_000 {
        p.left_mul_into(&x, &mut y);
        let mut total = 0.0;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi = 0.5 * (*yi + xi);
            total += *yi;
        }
        diff = 0.0;
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi /= total;
            diff += (*yi - xi).abs();
        }
        std::mem::swap(&mut x, &mut y);
        if diff <= tol {
            for v in x.iter_mut() {
                if *v < 0.0 {
                    if *v < -1e-12 {
                        return Err(Error::DensityConvergence(format!("negative mass {v:.3e}")));
                    }
                    *v = 0.0;
                }
            }
            let total: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= total);
            return Ok(x);
        }
    }
    Err(Error::DensityConvergence(format!(
        "power iteration stalled with step {diff:.3e} (tolerance {tol:.3e})"
    )))
}

/// `‖Qⁿ‖` for `n = 0..=max_power` by propagating unit vectors.
pub fn q_power_norms(p: &CsrMatrix, mass: &[f64], max_power: usize, convention: QNormConvention) -> Vec<f64> {
    let n = p.n_rows();
    let propagator = match convention {
        QNormConvention::RowSums => p.clone(),
        QNormConvention::ColumnSums => p.transpose(),
    };
    let per_start = |i: usize, x: &mut Vec<f64>, y: &mut Vec<f64>| -> Vec<f64> {
        let mut out = Vec::with_capacity(max_power + 1);
        x.iter_mut().for_each(|v| *v = 0.0);
        x[i] = 1.0;
        let deviation = |x: &[f64]| -> f64 {
            match convention {
                QNormConvention::RowSums => x.iter().zip(mass).map(|(a, m)| (a - m).abs()).sum(),
                QNormConvention::ColumnSums => x.iter().map(|a| (a - mass[i]).abs()).sum(),
            }
        };
        out.push(match convention {
            QNormConvention::RowSums => deviation(x),
            QNormConvention::ColumnSums => 1.0,
        });
        for _ in 1..=max_power {
            propagator.left_mul_into(x, y);
            std::mem::swap(x, y);
            out.push(deviation(x));
        }
        out
    };
    (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n]),
            |(x, y), i| per_start(i, x, y),
        )
        .reduce(
            || vec![0.0; max_power + 1],
            |a, b| a.iter().zip(&b).map(|(u, v)| u.max(*v)).collect(),
        )
}

fn sort_by_modulus(pairs: &mut [(Complex64, f64)]) {
    pairs.sort_by(|a, b| {
        b.0.norm()
            .total_cmp(&a.0.norm())
            .then(b.0.re.total_cmp(&a.0.re))
            .then(b.0.im.total_cmp(&a.0.im))
    });
}

fn complex_mul_vec(p: &CsrMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..p.n_rows())
        .map(|i| p.row(i).map(|(j, a)| v[j] * a).sum())
        .collect()
}

fn relative_residual(p: &CsrMatrix, lambda: Complex64, u: &[Complex64]) -> f64 {
    let pu = complex_mul_vec(p, u);
    let num: f64 = pu.iter().zip(u).map(|(a, b)| (a - lambda * b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = u.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

fn dense_eigenpairs(p: &CsrMatrix) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let n = p.n_rows();
    let mut dense = Mat::<f64>::zeros(n, n);
    for (i, j, v) in p.triplets() {
        dense[(i, j)] = v;
    }
    let evd = dense.eigen().map_err(|e| Error::Dense(format!("{e:?}")))?;
    drop(dense);
    let s = evd.S();
    let u = evd.U();
    let values: Vec<Complex64> = (0..n).map(|k| s[k]).collect();
    let mut pairs: Vec<(Complex64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let col: Vec<Complex64> = (0..n).map(|i| u[(i, k)]).collect();
            (values[k], relative_residual(p, values[k], &col))
        })
        .collect();
    sort_by_modulus(&mut pairs);
    Ok(pairs.into_iter().unzip())
}

/// Modified Gram-Schmidt (two passes). Directions that collapse below
/// `1e-10` of their incoming norm are dropped; returns whether any were.
fn orthonormalize(basis: &mut Vec<Vec<f64>>) -> bool {
    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(basis.len());
    let mut dropped = false;
    for mut v in basis.drain(..) {
        let before: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &kept {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(b, a)| *b -= dot * a);
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 * before && norm > 1e-300 {
            v.iter_mut().for_each(|x| *x /= norm);
            kept.push(v);
        } else {
            dropped = true;
        }
    }
    *basis = kept;
    dropped
}

struct SubspaceRound {
    pairs: Vec<(Complex64, f64)>,
    /// The block spans an invariant subspace containing every eigenvector
    /// of a nonzero eigenvalue.
    exhaustive: bool,
}

/// Subspace iteration with Rayleigh-Ritz extraction. Doubles the block when
/// fewer than half of the Ritz values fall below the floor.
fn subspace_eigenpairs(
    p: &CsrMatrix,
    block: usize,
    floor: f64,
) -> Result<(EigenMethod, Vec<Complex64>, Vec<f64>, f64)> {
    let n = p.n_rows();
    let mut k = block.clamp(2, n);
    loop {
        let round = subspace_round(p, k, floor)?;
        if round.exhaustive {
            let (ev, res) = round.pairs.into_iter().unzip();
            // Directions dropped as collapsed may still carry eigenvalues far
            // below the floor, so completeness is only claimed down to it.
            return Ok((EigenMethod::Subspace { block: k }, ev, res, floor));
        }
        let half = k / 2;
        let captured_modulus = round.pairs.get(half).map(|p| p.0.norm()).unwrap_or(0.0);
        if captured_modulus <= floor || k >= n || k >= 256 {
            let complete_above = captured_modulus.max(floor);
            let kept: Vec<(Complex64, f64)> =
                round.pairs.into_iter().take(half.max(1)).filter(|p| p.0.norm() > floor).collect();
            let (ev, res) = kept.into_iter().unzip();
            return Ok((EigenMethod::Subspace { block: k }, ev, res, complete_above));
        }
        k = (2 * k).min(n);
    }
}

fn ritz_pairs(p: &CsrMatrix, basis: &[Vec<f64>], images: &[Vec<f64>]) -> Result<Vec<(Complex64, f64)>> {
    let n = p.n_rows();
    let k = basis.len();
    // Rayleigh quotient H = Vᵀ P V.
    let h = Mat::<f64>::from_fn(k, k, |a, b| basis[a].iter().zip(&images[b]).map(|(x, y)| x * y).sum());
    let evd = h.eigen().map_err(|e| Error::Dense(format!("{e:?}")))?;
    let mut pairs = Vec::with_capacity(k);
    for c in 0..k {
        let theta = evd.S()[c];
        let u: Vec<Complex64> = (0..n)
            .map(|i| (0..k).map(|a| evd.U()[(a, c)] * basis[a][i]).sum())
            .collect();
        pairs.push((theta, relative_residual(p, theta, &u)));
    }
    sort_by_modulus(&mut pairs);
    Ok(pairs)
}

fn subspace_round(p: &CsrMatrix, k: usize, floor: f64) -> Result<SubspaceRound> {
    let n = p.n_rows();
    let mut basis: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            (0..n)
                .map(|i| if c == 0 { 1.0 } else { (((i * (2 * c + 1) * 2654435761) % 9973) as f64) / 9973.0 - 0.5 })
                .collect()
        })
        .collect();
    orthonormalize(&mut basis);
    let half = (k / 2).max(1);
    let mut collapsed = false;
    for iteration in 1..=3000 {
        let images: Vec<Vec<f64>> = basis.par_iter().map(|v| p.mul_vec(v)).collect();
        if collapsed || iteration % 10 == 0 {
            let pairs = ritz_pairs(p, &basis, &images)?;
            if collapsed && pairs.iter().all(|(_, res)| *res <= 1e-10) {
                return Ok(SubspaceRound { pairs, exhaustive: true });
            }
            let done = pairs.iter().take(half).all(|(z, res)| z.norm() <= floor || *res <= 1e-10);
            if done && pairs.len() == k {
                return Ok(SubspaceRound { pairs, exhaustive: false });
            }
        }
        basis = images;
        collapsed |= orthonormalize(&mut basis);
    }
    Err(Error::EigenConvergence(format!("subspace iteration with block {k} did not converge")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin;
    use crate::ulam::{build_closed, MatrixMode, UlamPartition};
    use approx::assert_relative_eq;

    fn closed(map: &crate::PiecewiseMap, n: usize) -> UlamMatrix {
        build_closed(map, &UlamPartition::new(n).unwrap()).unwrap()
    }

    #[test]
    fn operator_norm_examples() {
        assert_eq!(operator_l1_norm(&CsrMatrix::identity(7)), 1.0);
        let half = CsrMatrix::from_triplets(2, 2, [(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]);
        assert_eq!(operator_l1_norm(&half), 1.0);
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..10).map(|j| if i == j { 0.9 } else { -0.1 }).collect())
            .collect();
        assert_relative_eq!(dense_operator_l1_norm(&rows), 1.8, max_relative = 1e-14);
    }

    #[test]
    fn doubling_two_bins_is_rank_one() {
        let m = closed(&builtin::doubling(), 2);
        let snap = spectral_snapshot(&m, &SnapshotOptions::default()).unwrap();
        let data = snap.level(0.5, DEFAULT_TRUNCATION).unwrap();
        assert_eq!(data.eigenvalues_above_r.len(), 1);
        assert!(data.q_power_norms[1..].iter().all(|q| q.abs() < 1e-15));
    }

    #[test]
    fn decimal_shift_ten_bins() {
        let m = closed(&builtin::decimal_shift(), 10);
        let snap = spectral_snapshot(&m, &SnapshotOptions::default()).unwrap();
        assert_relative_eq!(snap.eigenvalues[0].re, 1.0, epsilon = 1e-12);
        assert!(snap.eigenvalues[1..].iter().all(|z| z.norm() < 1e-8));
        assert_relative_eq!(snap.projection_norm, 1.0, epsilon = 1e-14);
        let data = snap.level(0.9, DEFAULT_TRUNCATION).unwrap();
        assert_relative_eq!(data.q_power_norms[0], 1.8, epsilon = 1e-12);
        assert_relative_eq!(data.neumann_bound().unwrap(), 1.8 / 0.9, epsilon = 1e-12);

        let cols = SnapshotOptions {
            convention: QNormConvention::ColumnSums,
            ..Default::default()
        };
        let data = spectral_snapshot(&m, &cols).unwrap().level(0.9, DEFAULT_TRUNCATION).unwrap();
        assert_relative_eq!(data.neumann_bound().unwrap(), 1.0 / 0.9, epsilon = 1e-12);
    }

    #[test]
    fn neumann_formula() {
        assert_relative_eq!(neumann_bound(&[1.0, 0.0, 0.0], 0.96, 1).unwrap(), 25.0 / 24.0, epsilon = 1e-15);
        let norms = [2.0, 1.0, 0.5, 0.25];
        let r: f64 = 0.8;
        let expect = (2.0 + 1.0 / r + 0.5 / (r * r)) / r / (1.0 - 0.25 / r.powi(3));
        assert_relative_eq!(neumann_bound(&norms, r, 2).unwrap(), expect, epsilon = 1e-14);
        assert!(matches!(neumann_bound(&[1.0, 1.0], 0.5, 0), Err(Error::NeumannDivergence { .. })));
    }

    #[test]
    fn h_star_on_rank_one_matrix() {
        let m = closed(&builtin::doubling(), 2);
        let snap = spectral_snapshot(&m, &SnapshotOptions::default()).unwrap();
        let data = snap.level(0.96, DEFAULT_TRUNCATION).unwrap();
        let bound = h_star(&data, 1.0 / 26.0, 0.1, 0.0).unwrap();
        // ‖1 - Π₁‖ = 1 for the 2-bin uniform projection.
        let neumann = 1.0 / 0.96;
        let expect = (26.0 + neumann) + 1.0 / 0.86 + 2.0 / 0.96;
        assert_relative_eq!(bound.neumann_bound, neumann, epsilon = 1e-14);
        assert_relative_eq!(bound.h_star, expect, max_relative = 1e-12);
    }

    #[test]
    fn h_star_decreases_in_delta() {
        let m = closed(&builtin::moebius_ten_branch(), 200);
        let data = eigen_analysis(&m, 0.96, &SnapshotOptions::default()).unwrap();
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let delta = 0.01 * k as f64;
            let h = h_star(&data, delta, 1.0 / 9.0, 2.0 / 9.0).unwrap().h_star;
            assert!(h < last);
            last = h;
        }
    }

    #[test]
    fn structure_violations_are_rejected() {
        // Identity on 4 bins: eigenvalue 1 with multiplicity 4.
        let m = UlamMatrix::from_csr(CsrMatrix::identity(4), MatrixMode::Closed, "id").unwrap();
        let snap = spectral_snapshot(&m, &SnapshotOptions::default());
        // Power iteration converges immediately; Qⁿ = I - 𝟙mᵀ never decays.
        let snap = snap.unwrap();
        assert!(matches!(snap.level(0.9, DEFAULT_TRUNCATION), Err(Error::NeumannDivergence { .. })));
    }

    #[test]
    fn no_unit_eigenvalue_is_an_error() {
        let mut snap = spectral_snapshot(&closed(&builtin::doubling(), 4), &SnapshotOptions::default()).unwrap();
        for z in snap.eigenvalues.iter_mut() {
            *z *= 0.5;
        }
        assert!(matches!(snap.level(0.3, 5), Err(Error::NoUnitEigenvalue { .. })));
    }

    #[test]
    fn subspace_matches_dense() {
        let m = closed(&builtin::moebius_ten_branch(), 300);
        let dense = spectral_snapshot(&m, &SnapshotOptions::default()).unwrap();
        let sub = spectral_snapshot(
            &m,
            &SnapshotOptions {
                dense_limit: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(sub.method, EigenMethod::Subspace { .. }));
        for z in &sub.eigenvalues {
            let nearest = dense.eigenvalues.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-8, "{z} has no dense counterpart");
        }
        let above: Vec<_> = dense.eigenvalues.iter().filter(|z| z.norm() > sub.complete_above + 1e-6).collect();
        assert!(above.len() <= sub.eigenvalues.len());
    }
}
