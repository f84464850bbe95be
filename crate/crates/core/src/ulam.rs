//! Ulam discretization on uniform partitions.
//!
//! Entry `(i, j)` of the closed matrix is `λ(bin_i ∩ T⁻¹ bin_j) / λ(bin_i)`,
//! assembled branch by branch from exact preimages. Linear branches with
//! rational coefficients are integrated in exact rational arithmetic and
//! rounded once per entry. Rows act on density coefficients by right
//! multiplication, `x -> x P`.
//!
//! The open matrix for a hole `H` zeroes every row whose bin lies inside `H`,
//! which is the discretization of `f -> P(f χ_{[0,1] \ H})`.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{BranchKind, Interval, PiecewiseMap};
use crate::rational::Rational;
use crate::sparse::CsrMatrix;

const ROW_SUM_TOL: f64 = 1e-9;
const FILE_MAGIC: &str = "ulam-matrix 1";

/// Uniform partition of `[0, 1)` into `n_bins` half-open bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UlamPartition {
    n_bins: usize,
}

impl UlamPartition {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::InvalidPartition("need at least one bin".into()));
        }
        Ok(UlamPartition { n_bins })
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn mesh(&self) -> Rational {
        Rational::new(1, self.n_bins as i128)
    }

    pub fn mesh_f64(&self) -> f64 {
        1.0 / self.n_bins as f64
    }

    /// The point `k / n_bins`.
    pub fn point(&self, k: usize) -> Rational {
        Rational::new(k as i128, self.n_bins as i128)
    }

    /// `[i/n, (i+1)/n)` as exact endpoints.
    pub fn bin(&self, i: usize) -> (Rational, Rational) {
        (self.point(i), self.point(i + 1))
    }

    pub fn bin_interval(&self, i: usize) -> Interval {
        let n = self.n_bins as f64;
        Interval::new(i as f64 / n, (i + 1) as f64 / n)
    }

    /// `Some(k)` when `x = k / n_bins` exactly.
    pub fn index_of_point(&self, x: Rational) -> Option<usize> {
        let scaled = x.checked_mul(&Rational::from_integer(self.n_bins as i128))?;
        (scaled.is_integer() && scaled >= Rational::ZERO).then(|| scaled.numer() as usize)
    }

    /// Bin containing `x` (the last bin for `x = 1`).
    pub fn bin_of(&self, x: f64) -> usize {
        ((x * self.n_bins as f64).floor().max(0.0) as usize).min(self.n_bins - 1)
    }
}

/// An open interval `(a, b)` removed from the phase space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hole {
    a: Rational,
    b: Rational,
}

impl Hole {
    pub fn new(a: Rational, b: Rational) -> Result<Self> {
        if !(Rational::ZERO <= a && a < b && b <= Rational::ONE) {
            return Err(Error::InvalidHole(format!("need 0 <= a < b <= 1, got ({a}, {b})")));
        }
        Ok(Hole { a, b })
    }

    pub fn endpoints(&self) -> (Rational, Rational) {
        (self.a, self.b)
    }

    /// Lebesgue measure `b - a`.
    pub fn measure(&self) -> Rational {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a.to_f64() < x && x < self.b.to_f64()
    }

    /// Indices of the bins covered by the hole; both endpoints must be
    /// partition points.
    pub fn bins(&self, partition: &UlamPartition) -> Result<Range<usize>> {
        let n = partition.n_bins();
        let lo = partition.index_of_point(self.a).ok_or_else(|| Error::HoleAlignment {
            endpoint: self.a.to_string(),
            n_bins: n,
        })?;
        let hi = partition.index_of_point(self.b).ok_or_else(|| Error::HoleAlignment {
            endpoint: self.b.to_string(),
            n_bins: n,
        })?;
        Ok(lo..hi)
    }

    /// `(a, b)` parsed from `"a,b"`.
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("hole must be given as a,b: {text:?}")))?;
        Hole::new(a.parse()?, b.parse()?)
    }
}

impl fmt::Display for Hole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MatrixMode {
    Closed,
    Open { hole: Hole },
}

/// A discretized transfer operator with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct UlamMatrix {
    partition: UlamPartition,
    mode: MatrixMode,
    map_fingerprint: String,
    entries: CsrMatrix,
}

impl UlamMatrix {
    /// Wraps an arbitrary nonnegative matrix, checking the row-sum invariant
    /// of the declared mode.
    pub fn from_csr(entries: CsrMatrix, mode: MatrixMode, map_fingerprint: impl Into<String>) -> Result<Self> {
        if entries.n_rows() != entries.n_cols() {
            return Err(Error::InvalidPartition("matrix must be square".into()));
        }
        let partition = UlamPartition::new(entries.n_rows())?;
        let matrix = UlamMatrix {
            partition,
            mode,
            map_fingerprint: map_fingerprint.into(),
            entries,
        };
        matrix.check_invariants(1e-12)?;
        Ok(matrix)
    }

    pub fn partition(&self) -> &UlamPartition {
        &self.partition
    }

    pub fn n_bins(&self) -> usize {
        self.partition.n_bins()
    }

    pub fn mode(&self) -> &MatrixMode {
        &self.mode
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.mode, MatrixMode::Closed)
    }

    pub fn map_fingerprint(&self) -> &str {
        &self.map_fingerprint
    }

    pub fn entries(&self) -> &CsrMatrix {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries.get(i, j)
    }

    /// Entries in `[0, 1]`; closed rows sum to one; open rows are either zero
    /// (bins inside the hole) or sum to one.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let hole_bins = match &self.mode {
            MatrixMode::Closed => 0..0,
            MatrixMode::Open { hole } => hole.bins(&self.partition)?,
        };
        for i in 0..self.n_bins() {
            if self.entries.row(i).any(|(_, v)| !(0.0..=1.0 + tol).contains(&v)) {
                return Err(Error::NumericConsistency {
                    row: i,
                    sum: self.entries.row_sum(i),
                });
            }
            let sum = self.entries.row_sum(i);
            let expected = if hole_bins.contains(&i) { 0.0 } else { 1.0 };
            if (sum - expected).abs() > tol {
                return Err(Error::NumericConsistency { row: i, sum });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || format!("writing {}", path.display());
        let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(ctx(), e))?;
        w.flush().map_err(|e| Error::io(ctx(), e))
    }

    pub fn write_to(&self, w: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
        writeln!(w, "{FILE_MAGIC}")?;
        writeln!(w, "n_bins {}", self.n_bins())?;
        match &self.mode {
            MatrixMode::Closed => writeln!(w, "mode closed")?,
            MatrixMode::Open { hole } => {
                let (a, b) = hole.endpoints();
                writeln!(w, "mode open {a} {b}")?
            }
        }
        writeln!(w, "fingerprint {}", self.map_fingerprint)?;
        writeln!(w, "nnz {}", self.entries.nnz())?;
        for (i, j, v) in self.entries.triplets() {
            writeln!(w, "{i} {j} {v:.16e}")?;
        }
        Ok(())
    }

    /// Reads a matrix file. A fingerprint differing from `expected` is
    /// reported as a warning; the matrix is still returned.
    pub fn load(path: impl AsRef<Path>, expected_fingerprint: Option<&str>) -> Result<LoadedMatrix> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::read_from(BufReader::new(file), expected_fingerprint)
    }

    pub fn read_from(reader: impl BufRead, expected_fingerprint: Option<&str>) -> Result<LoadedMatrix> {
        let mut lines = reader.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(line)) => Ok(line),
                Some(Err(e)) => Err(Error::io("reading matrix file", e)),
                None => Err(Error::Parse(format!("truncated matrix file: missing {what}"))),
            }
        };
        if next("header")?.trim() != FILE_MAGIC {
            return Err(Error::Parse("not an ulam-matrix file".into()));
        }
        let field = |line: String, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .and_then(|rest| rest.strip_prefix(' '))
                .map(|s| s.trim().to_string())
                .ok_or_else(|| Error::Parse(format!("expected `{key} ...`, found {line:?}")))
        };
        let n_bins: usize = field(next("n_bins")?, "n_bins")?
            .parse()
            .map_err(|_| Error::Parse("bad n_bins".into()))?;
        let partition = UlamPartition::new(n_bins)?;
        let mode_text = field(next("mode")?, "mode")?;
        let mode = match mode_text.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["closed"] => MatrixMode::Closed,
            ["open", a, b] => MatrixMode::Open {
                hole: Hole::new(a.parse()?, b.parse()?)?,
            },
            _ => return Err(Error::Parse(format!("bad mode line: {mode_text:?}"))),
        };
        let fingerprint = field(next("fingerprint")?, "fingerprint")?;
        let nnz: usize = field(next("nnz")?, "nnz")?
            .parse()
            .map_err(|_| Error::Parse("bad nnz".into()))?;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_bins];
        let mut last = (0usize, 0usize);
        for k in 0..nnz {
            let line = next("matrix entries")?;
            let mut parts = line.split_whitespace();
            let parse_err = || Error::Parse(format!("bad triplet on entry {k}: {line:?}"));
            let i: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let j: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            let v: f64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
            if parts.next().is_some() || i >= n_bins || j >= n_bins {
                return Err(parse_err());
            }
            if k > 0 && (i, j) <= last {
                return Err(Error::Parse(format!("triplets not in row-major order at entry {k}")));
            }
            last = (i, j);
            rows[i].push((j, v));
        }
        if let Some(Ok(extra)) = lines.next() {
            if !extra.trim().is_empty() {
                return Err(Error::Parse("trailing data after declared entries".into()));
            }
        }
        let mut warnings = Vec::new();
        if let Some(expected) = expected_fingerprint {
            if expected != fingerprint {
                let msg = format!("matrix fingerprint {fingerprint} does not match map fingerprint {expected}");
                log::warn!("{msg}");
                warnings.push(msg);
            }
        }
        let matrix = UlamMatrix {
            partition,
            mode,
            map_fingerprint: fingerprint,
            entries: CsrMatrix::from_rows(n_bins, rows),
        };
        Ok(LoadedMatrix { matrix, warnings })
    }
}

#[derive(Debug)]
pub struct LoadedMatrix {
    pub matrix: UlamMatrix,
    pub warnings: Vec<String>,
}

/// Closed (row-stochastic) Ulam matrix of `map` on `partition`.
pub fn build_closed(map: &PiecewiseMap, partition: &UlamPartition) -> Result<UlamMatrix> {
    let n = partition.n_bins();
    if n < map.branches().len() {
        return Err(Error::InvalidPartition(format!(
            "{n} bins is fewer than the {} branches",
            map.branches().len()
        )));
    }
    let rows = (0..n)
        .into_par_iter()
        .map(|i| assemble_row(map, partition, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(UlamMatrix {
        partition: *partition,
        mode: MatrixMode::Closed,
        map_fingerprint: map.fingerprint().to_string(),
        entries: CsrMatrix::from_rows(n, rows),
    })
}

/// Sub-stochastic matrix of the map with `hole` removed.
pub fn build_open(map: &PiecewiseMap, partition: &UlamPartition, hole: &Hole) -> Result<UlamMatrix> {
    let hole_bins = hole.bins(partition)?;
    let closed = build_closed(map, partition)?;
    Ok(open_from_closed(&closed, hole_bins, *hole))
}

/// Zeroes the hole rows of an already assembled closed matrix.
pub fn open_from_closed_matrix(closed: &UlamMatrix, hole: &Hole) -> Result<UlamMatrix> {
    if !closed.is_closed() {
        return Err(Error::NotClosed);
    }
    let hole_bins = hole.bins(&closed.partition)?;
    Ok(open_from_closed(closed, hole_bins, *hole))
}

fn open_from_closed(closed: &UlamMatrix, hole_bins: Range<usize>, hole: Hole) -> UlamMatrix {
    UlamMatrix {
        partition: closed.partition,
        mode: MatrixMode::Open { hole },
        map_fingerprint: closed.map_fingerprint.clone(),
        entries: closed.entries.with_zero_rows(|i| hole_bins.contains(&i)),
    }
}

/// Row `i` of the closed matrix.
fn assemble_row(map: &PiecewiseMap, partition: &UlamPartition, i: usize) -> Result<Vec<(usize, f64)>> {
    let n = partition.n_bins();
    let n_q = Rational::from_integer(n as i128);
    let (a, b) = partition.bin(i);
    let mut exact: Vec<(usize, Rational)> = Vec::new();
    let mut approx: Vec<(usize, f64)> = Vec::new();

    let first = map.branch_index(a.to_f64()).unwrap_or(0);
    for branch in map.branches()[first..].iter() {
        let (lo, hi) = branch.domain();
        if lo >= b {
            break;
        }
        let (u, v) = (a.max(lo), b.min(hi));
        if u >= v {
            continue;
        }
        if matches!(branch.kind(), BranchKind::Linear { .. }) && exact_linear_entries(branch, u, v, n, n_q, &mut exact).is_some()
        {
            continue;
        }
        float_entries(branch, u.to_f64(), v.to_f64(), n, &mut approx);
    }

    let mut row: Vec<(usize, f64)> = Vec::with_capacity(exact.len() + approx.len());
    if approx.is_empty() {
        let mut total = Rational::ZERO;
        for (j, w) in &exact {
            total = total + *w;
            row.push((*j, w.to_f64()));
        }
        if total != Rational::ONE {
            return Err(Error::NumericConsistency {
                row: i,
                sum: total.to_f64(),
            });
        }
        return Ok(row);
    }
    row.extend(exact.iter().map(|(j, w)| (*j, w.to_f64())));
    row.extend(approx);
    let sum: f64 = row.iter().map(|(_, v)| v).sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::NumericConsistency { row: i, sum });
    }
    row.iter_mut().for_each(|(_, v)| *v /= sum);
    Ok(row)
}

/// Exact contributions of a linear branch restricted to `[u, v)`. Returns
/// `None` (and pushes nothing) if any intermediate overflows.
fn exact_linear_entries(
    branch: &crate::maps::Branch,
    u: Rational,
    v: Rational,
    n: usize,
    n_q: Rational,
    out: &mut Vec<(usize, Rational)>,
) -> Option<()> {
    let BranchKind::Linear { slope, intercept } = branch.kind() else {
        return None;
    };
    let image = |x: Rational| slope.checked_mul(&x)?.checked_add(intercept);
    let (ya, yb) = (image(u)?, image(v)?);
    let (ylo, yhi) = (ya.min(yb), ya.max(yb));
    let j_lo = ylo.checked_mul(&n_q)?.floor().max(0) as usize;
    let j_hi = (yhi.checked_mul(&n_q)?.ceil().max(0) as usize).min(n);
    let mut local = Vec::with_capacity(j_hi.saturating_sub(j_lo));
    for j in j_lo..j_hi {
        let (c, d) = (Rational::new(j as i128, n as i128), Rational::new(j as i128 + 1, n as i128));
        if let Some((p, q)) = branch.exact_linear_preimage(c, d, u, v)? {
            let weight = q.checked_sub(&p)?.checked_mul(&n_q)?;
            local.push((j, weight));
        }
    }
    out.extend(local);
    Some(())
}

fn float_entries(branch: &crate::maps::Branch, u: f64, v: f64, n: usize, out: &mut Vec<(usize, f64)>) {
    let nf = n as f64;
    let clip = Interval::new(u, v);
    let image = Interval::spanning(branch.forward(u), branch.forward(v));
    let j_lo = ((image.lo * nf).floor() as isize - 1).max(0) as usize;
    let j_hi = (((image.hi * nf).ceil() as isize + 1).max(0) as usize).min(n);
    for j in j_lo..j_hi {
        let target = Interval::new(j as f64 / nf, (j + 1) as f64 / nf);
        let pre = branch.preimage(target).intersect(&clip);
        let w = pre.length() * nf;
        if w > 0.0 {
            out.push((j, w));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::builtin::*;
    use approx::assert_relative_eq;

    fn dense(m: &UlamMatrix) -> Vec<Vec<f64>> {
        m.entries().to_dense()
    }

    #[test]
    fn doubling_four_bins() {
        let m = build_closed(&doubling(), &UlamPartition::new(4).unwrap()).unwrap();
        let expected = vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
        ];
        assert_eq!(dense(&m), expected);
    }

    #[test]
    fn identity_gives_identity_matrix() {
        for n in [1, 3, 17] {
            let m = build_closed(&identity(), &UlamPartition::new(n).unwrap()).unwrap();
            assert_eq!(m.entries(), &CsrMatrix::identity(n));
        }
    }

    #[test]
    fn ten_branch_first_entry() {
        let m = build_closed(&moebius_ten_branch(), &UlamPartition::new(10).unwrap()).unwrap();
        assert_relative_eq!(m.get(0, 0), 10.0 / 91.0, epsilon = 1e-14);
        m.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn open_matrix_zeroes_hole_rows() {
        let map = decimal_shift();
        let p = UlamPartition::new(10).unwrap();
        let hole = Hole::new(Rational::ZERO, Rational::new(1, 10)).unwrap();
        let m = build_open(&map, &p, &hole).unwrap();
        assert_eq!(m.entries().row_nnz(0), 0);
        for i in 1..10 {
            for j in 0..10 {
                assert_eq!(m.get(i, j), 0.1);
            }
        }
        m.check_invariants(1e-12).unwrap();
    }

    #[test]
    fn hole_must_be_nonempty_and_aligned() {
        assert!(Hole::new(Rational::new(1, 2), Rational::new(1, 2)).is_err());
        let p = UlamPartition::new(5000).unwrap();
        let hole = Hole::new(Rational::new(1, 2), Rational::new(1, 2) + Rational::new(2, 9000)).unwrap();
        assert!(matches!(
            build_open(&moebius_ten_branch(), &p, &hole),
            Err(Error::HoleAlignment { .. })
        ));
    }

    #[test]
    fn too_few_bins_is_rejected() {
        assert!(build_closed(&decimal_shift(), &UlamPartition::new(5).unwrap()).is_err());
    }

    #[test]
    fn file_round_trip_and_warnings() {
        let m = build_closed(&doubling(), &UlamPartition::new(4).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doubling.ulam");
        m.save(&path).unwrap();
        let loaded = UlamMatrix::load(&path, Some(doubling().fingerprint())).unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.matrix, m);

        let other = UlamMatrix::load(&path, Some(decimal_shift().fingerprint())).unwrap();
        assert_eq!(other.warnings.len(), 1);
        assert_eq!(other.matrix, m);

        let text = std::fs::read_to_string(&path).unwrap();
        let truncated: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(UlamMatrix::load(&path, None), Err(Error::Parse(_))));
    }

    #[test]
    fn open_file_round_trip_keeps_hole() {
        let hole = Hole::new(Rational::new(1, 4), Rational::new(1, 2)).unwrap();
        let m = build_open(&doubling(), &UlamPartition::new(8).unwrap(), &hole).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = UlamMatrix::read_from(buf.as_slice(), None).unwrap().matrix;
        assert_eq!(back, m);
        assert_eq!(back.mode(), &MatrixMode::Open { hole });
    }
}
