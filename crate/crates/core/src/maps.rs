//! Piecewise expanding interval maps on `[0, 1]`.
//!
//! A map is an ordered list of monotone branches whose half-open domains tile
//! `[0, 1)`, together with the Lasota-Yorke pair `(alpha0, b0)` for the
//! inequality `V(Pf) <= alpha0 V(f) + b0 ||f||_1`. Those two constants are
//! trusted inputs; [`linear_markov_constants`] supplies them only for
//! piecewise-linear maps whose branches are all onto.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::Rational;

const RANGE_TOL: f64 = 1e-12;
const ROUND_TRIP_TOL: f64 = 1e-12;
const ROUND_TRIP_SAMPLES: usize = 32;
const EXPANSION_SAMPLES: usize = 1000;

/// A closed interval `[lo, hi]`; empty when `lo > hi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const EMPTY: Interval = Interval {
        lo: f64::INFINITY,
        hi: f64::NEG_INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    /// The interval spanned by two points in either order.
    pub fn spanning(a: f64, b: f64) -> Self {
        Interval::new(a.min(b), a.max(b))
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let out = Interval::new(self.lo.max(other.lo), self.hi.min(other.hi));
        if out.is_empty() {
            Interval::EMPTY
        } else {
            out
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    Increasing,
    Decreasing,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A monotone branch given only by its forward map and derivative. The
/// inverse is found by bisection on a bracket that always straddles the
/// target value.
#[derive(Clone)]
pub struct Tabulated {
    forward: ScalarFn,
    derivative: ScalarFn,
    knots: Option<Vec<(f64, f64)>>,
}

impl Tabulated {
    pub fn from_fn(
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Tabulated {
            forward: Arc::new(forward),
            derivative: Arc::new(derivative),
            knots: None,
        }
    }

    /// Piecewise-linear interpolation through strictly monotone knots.
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidMap("a tabulated branch needs at least two knots".into()));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidMap("tabulated knots must have increasing x".into()));
        }
        let increasing = knots[1].1 > knots[0].1;
        if knots
            .windows(2)
            .any(|w| (w[1].1 > w[0].1) != increasing || w[1].1 == w[0].1)
        {
            return Err(Error::InvalidMap("tabulated knots must be strictly monotone".into()));
        }
        let table = Arc::new(knots.clone());
        let segment = {
            let table = Arc::clone(&table);
            move |x: f64| -> usize {
                let k = table.partition_point(|&(kx, _)| kx <= x);
                k.clamp(1, table.len() - 1) - 1
            }
        };
        let segment = Arc::new(segment);
        let forward = {
            let (table, segment) = (Arc::clone(&table), Arc::clone(&segment));
            move |x: f64| {
                let k = segment(x);
                let ((x0, y0), (x1, y1)) = (table[k], table[k + 1]);
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        };
        let derivative = {
            let (table, segment) = (Arc::clone(&table), Arc::clone(&segment));
            move |x: f64| {
                let k = segment(x);
                let ((x0, y0), (x1, y1)) = (table[k], table[k + 1]);
                (y1 - y0) / (x1 - x0)
            }
        };
        Ok(Tabulated {
            forward: Arc::new(forward),
            derivative: Arc::new(derivative),
            knots: Some(knots),
        })
    }

    pub fn knots(&self) -> Option<&[(f64, f64)]> {
        self.knots.as_deref()
    }
}

impl fmt::Debug for Tabulated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tabulated").field("knots", &self.knots).finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub enum BranchKind {
    /// `x -> slope * x + intercept`
    Linear { slope: Rational, intercept: Rational },
    /// `x -> (p x + q) / (r x + s)`
    Moebius {
        p: Rational,
        q: Rational,
        r: Rational,
        s: Rational,
    },
    Tabulated(Tabulated),
}

/// One monotone, expanding piece of a map on the half-open domain `[lo, hi)`.
#[derive(Clone, Debug)]
pub struct Branch {
    lo: Rational,
    hi: Rational,
    kind: BranchKind,
    orientation: Orientation,
    range: Interval,
    min_expansion: f64,
}

impl Branch {
    /// Builds a branch, checking monotonicity and (for the closed-form kinds)
    /// that the inverse really inverts the forward map.
    pub fn new(lo: Rational, hi: Rational, kind: BranchKind) -> Result<Self> {
        if !(Rational::ZERO <= lo && lo < hi && hi <= Rational::ONE) {
            return Err(Error::InvalidMap(format!("branch domain [{lo}, {hi}) is not inside [0, 1]")));
        }
        if let BranchKind::Moebius { p, q, r, s } = &kind {
            if *p * *s - *q * *r == Rational::ZERO {
                return Err(Error::InvalidMap("degenerate Moebius branch (ps - qr = 0)".into()));
            }
            // The pole -s/r must stay off the closed domain.
            let at_lo = *r * lo + *s;
            let at_hi = *r * hi + *s;
            if at_lo == Rational::ZERO
                || at_hi == Rational::ZERO
                || (at_lo < Rational::ZERO) != (at_hi < Rational::ZERO)
            {
                return Err(Error::InvalidMap(format!(
                    "Moebius branch on [{lo}, {hi}) has a pole in its domain"
                )));
            }
        }
        if let BranchKind::Linear { slope, .. } = &kind {
            if *slope == Rational::ZERO {
                return Err(Error::InvalidMap("linear branch with zero slope".into()));
            }
        }
        let mut branch = Branch {
            lo,
            hi,
            kind,
            orientation: Orientation::Increasing,
            range: Interval::EMPTY,
            min_expansion: 0.0,
        };
        let (a, b) = (lo.to_f64(), hi.to_f64());
        let (ya, yb) = (branch.forward(a), branch.forward(b));
        if !(ya.is_finite() && yb.is_finite()) || ya == yb {
            return Err(Error::InvalidMap(format!("branch on [{lo}, {hi}) is not strictly monotone")));
        }
        branch.orientation = if yb > ya {
            Orientation::Increasing
        } else {
            Orientation::Decreasing
        };
        branch.range = Interval::spanning(ya, yb);

        // Sampled monotonicity and expansion.
        let mut prev = ya;
        let mut min_exp = f64::INFINITY;
        for k in 0..=EXPANSION_SAMPLES {
            let x = a + (b - a) * (k as f64) / (EXPANSION_SAMPLES as f64);
            let d = branch.derivative(x).abs();
            min_exp = min_exp.min(d);
            if k > 0 {
                let y = branch.forward(x);
                let increasing = y > prev;
                if (branch.orientation == Orientation::Increasing) != increasing {
                    return Err(Error::InvalidMap(format!(
                        "branch on [{lo}, {hi}) is not monotone near x = {x}"
                    )));
                }
                prev = y;
            }
        }
        branch.min_expansion = min_exp;

        if !matches!(branch.kind, BranchKind::Tabulated(_)) {
            for k in 0..ROUND_TRIP_SAMPLES {
                let x = a + (b - a) * (k as f64 + 0.5) / ROUND_TRIP_SAMPLES as f64;
                let back = branch.inverse(branch.forward(x));
                if (back - x).abs() > ROUND_TRIP_TOL {
                    return Err(Error::InvalidMap(format!(
                        "inverse round trip failed at x = {x} (got {back})"
                    )));
                }
            }
        }
        Ok(branch)
    }

    /// Like [`Branch::new`], additionally checking a declared image interval
    /// against the computed one at both endpoints.
    pub fn with_declared_range(lo: Rational, hi: Rational, kind: BranchKind, range: (f64, f64)) -> Result<Self> {
        let branch = Branch::new(lo, hi, kind)?;
        let declared = Interval::spanning(range.0, range.1);
        if (declared.lo - branch.range.lo).abs() > RANGE_TOL || (declared.hi - branch.range.hi).abs() > RANGE_TOL {
            return Err(Error::InvalidMap(format!(
                "declared range [{}, {}] differs from computed image [{}, {}]",
                declared.lo, declared.hi, branch.range.lo, branch.range.hi
            )));
        }
        Ok(branch)
    }

    pub fn domain(&self) -> (Rational, Rational) {
        (self.lo, self.hi)
    }

    pub fn domain_interval(&self) -> Interval {
        Interval::new(self.lo.to_f64(), self.hi.to_f64())
    }

    pub fn kind(&self) -> &BranchKind {
        &self.kind
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Closure of the image of the domain.
    pub fn range(&self) -> Interval {
        self.range
    }

    /// Smallest sampled `|T'|` on the domain.
    pub fn min_expansion(&self) -> f64 {
        self.min_expansion
    }

    pub fn is_expanding(&self) -> bool {
        self.min_expansion > 1.0
    }

    pub fn forward(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Linear { slope, intercept } => slope.to_f64() * x + intercept.to_f64(),
            BranchKind::Moebius { p, q, r, s } => {
                (p.to_f64() * x + q.to_f64()) / (r.to_f64() * x + s.to_f64())
            }
            BranchKind::Tabulated(t) => (t.forward)(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.kind {
            BranchKind::Linear { slope, .. } => slope.to_f64(),
            BranchKind::Moebius { p, q, r, s } => {
                let den = r.to_f64() * x + s.to_f64();
                (p.to_f64() * s.to_f64() - q.to_f64() * r.to_f64()) / (den * den)
            }
            BranchKind::Tabulated(t) => (t.derivative)(x),
        }
    }

    /// Inverse of the branch, for `y` in its range (values outside are
    /// clamped to the range first).
    pub fn inverse(&self, y: f64) -> f64 {
        let y = y.clamp(self.range.lo, self.range.hi);
        match &self.kind {
            BranchKind::Linear { slope, intercept } => (y - intercept.to_f64()) / slope.to_f64(),
            BranchKind::Moebius { p, q, r, s } => {
                (q.to_f64() - s.to_f64() * y) / (r.to_f64() * y - p.to_f64())
            }
            BranchKind::Tabulated(_) => self.bisect_inverse(y),
        }
    }

    fn bisect_inverse(&self, y: f64) -> f64 {
        let (mut a, mut b) = (self.lo.to_f64(), self.hi.to_f64());
        let increasing = self.orientation == Orientation::Increasing;
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let below = self.forward(m) < y;
            if below == increasing {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// `{x in domain : T(x) in target}` as a closed interval.
    pub fn preimage(&self, target: Interval) -> Interval {
        let hit = target.intersect(&self.range);
        if hit.is_empty() {
            return Interval::EMPTY;
        }
        let pre = Interval::spanning(self.inverse(hit.lo), self.inverse(hit.hi));
        pre.intersect(&self.domain_interval())
    }

    /// Exact preimage of `[lo, hi]` restricted to `[clip_lo, clip_hi]` for
    /// linear branches; `None` for other kinds or on integer overflow.
    pub(crate) fn exact_linear_preimage(
        &self,
        lo: Rational,
        hi: Rational,
        clip_lo: Rational,
        clip_hi: Rational,
    ) -> Option<Option<(Rational, Rational)>> {
        let BranchKind::Linear { slope, intercept } = &self.kind else {
            return None;
        };
        let inv = |y: Rational| y.checked_sub(intercept)?.checked_div(slope);
        let (u, v) = (inv(lo)?, inv(hi)?);
        let (u, v) = if u <= v { (u, v) } else { (v, u) };
        let (u, v) = (u.max(clip_lo), v.min(clip_hi));
        Some(if u < v { Some((u, v)) } else { None })
    }
}

/// A piecewise expanding map of `[0, 1]` with its Lasota-Yorke constants.
#[derive(Clone, Debug)]
pub struct PiecewiseMap {
    label: String,
    branches: Vec<Branch>,
    breakpoints: Vec<f64>,
    alpha0: Rational,
    b0: Rational,
    fingerprint: String,
}

impl PiecewiseMap {
    /// Validates that the branch domains tile `[0, 1)`, that every branch is
    /// expanding, and that `0 < alpha0 < 1`, `b0 >= 0`.
    pub fn new(label: impl Into<String>, branches: Vec<Branch>, alpha0: Rational, b0: Rational) -> Result<Self> {
        let map = Self::new_relaxed(label, branches, alpha0, b0)?;
        if let Some((k, b)) = map.branches.iter().enumerate().find(|(_, b)| !b.is_expanding()) {
            return Err(Error::InvalidMap(format!(
                "branch {k} is not expanding (min |T'| = {})",
                b.min_expansion
            )));
        }
        Ok(map)
    }

    /// As [`PiecewiseMap::new`] but without the expansion requirement. Such
    /// maps (the identity, say) can be discretized and inspected but are
    /// refused by certification.
    pub fn new_relaxed(label: impl Into<String>, branches: Vec<Branch>, alpha0: Rational, b0: Rational) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidMap("a map needs at least one branch".into()));
        }
        if branches[0].lo != Rational::ZERO {
            return Err(Error::InvalidMap("first branch must start at 0".into()));
        }
        if branches[branches.len() - 1].hi != Rational::ONE {
            return Err(Error::InvalidMap("last branch must end at 1".into()));
        }
        for (k, w) in branches.windows(2).enumerate() {
            if w[0].hi != w[1].lo {
                return Err(Error::InvalidMap(format!(
                    "branches {k} and {} leave a gap or overlap: {} vs {}",
                    k + 1,
                    w[0].hi,
                    w[1].lo
                )));
            }
        }
        for (k, b) in branches.iter().enumerate() {
            if b.range.lo < -RANGE_TOL || b.range.hi > 1.0 + RANGE_TOL {
                return Err(Error::InvalidMap(format!("branch {k} maps outside [0, 1]")));
            }
        }
        if !(Rational::ZERO < alpha0 && alpha0 < Rational::ONE) {
            return Err(Error::InvalidMap(format!("alpha0 = {alpha0} must lie in (0, 1)")));
        }
        if b0 < Rational::ZERO {
            return Err(Error::InvalidMap(format!("B0 = {b0} must be nonnegative")));
        }
        let label = label.into();
        let breakpoints = branches.iter().map(|b| b.lo.to_f64()).collect();
        let fingerprint = fingerprint_of(&label, &branches, alpha0, b0);
        Ok(PiecewiseMap {
            label,
            branches,
            breakpoints,
            alpha0,
            b0,
            fingerprint,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn alpha0(&self) -> Rational {
        self.alpha0
    }

    pub fn b0(&self) -> Rational {
        self.b0
    }

    /// SHA-256 of the canonical map description, hex encoded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn is_expanding(&self) -> bool {
        self.branches.iter().all(Branch::is_expanding)
    }

    /// Lemma-style hole-uniform constants require `alpha0 < 1/3`.
    pub fn supports_hole_certification(&self) -> bool {
        self.alpha0 < Rational::new(1, 3)
    }

    /// Largest sampled `|T'|` over all branches.
    pub fn max_expansion(&self) -> f64 {
        self.branches
            .iter()
            .flat_map(|b| {
                let d = b.domain_interval();
                (0..=64).map(move |k| b.derivative(d.lo + d.length() * k as f64 / 64.0).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Index of the branch whose domain contains `x`.
    pub fn branch_index(&self, x: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::DomainGap(x));
        }
        let k = self.breakpoints.partition_point(|&p| p <= x);
        if k == 0 {
            return Err(Error::DomainGap(x));
        }
        Ok(k - 1)
    }

    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let k = self.branch_index(x)?;
        Ok(self.branches[k].forward(x))
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let k = self.branch_index(x)?;
        Ok(self.branches[k].derivative(x))
    }

    /// Exact image of a rational point when the containing branch is linear
    /// or Moebius with rational coefficients.
    pub fn evaluate_exact(&self, x: Rational) -> Result<Option<Rational>> {
        let k = self.branch_index(x.to_f64())?;
        // Guard the float lookup against points sitting on a breakpoint.
        let k = if x < self.branches[k].lo {
            k - 1
        } else if x >= self.branches[k].hi && k + 1 < self.branches.len() {
            k + 1
        } else {
            k
        };
        Ok(match &self.branches[k].kind {
            BranchKind::Linear { slope, intercept } => {
                slope.checked_mul(&x).and_then(|v| v.checked_add(intercept))
            }
            BranchKind::Moebius { p, q, r, s } => {
                let num = p.checked_mul(&x).and_then(|v| v.checked_add(q));
                let den = r.checked_mul(&x).and_then(|v| v.checked_add(s));
                num.zip(den).and_then(|(n, d)| n.checked_div(&d))
            }
            BranchKind::Tabulated(_) => None,
        })
    }

    pub fn exact_derivative(&self, x: Rational) -> Result<Option<Rational>> {
        let k = self.branch_index(x.to_f64())?;
        Ok(match &self.branches[k].kind {
            BranchKind::Linear { slope, .. } => Some(*slope),
            BranchKind::Moebius { p, q, r, s } => {
                let den = r.checked_mul(&x).and_then(|v| v.checked_add(s));
                let det = p.checked_mul(s).zip(q.checked_mul(r)).and_then(|(a, b)| a.checked_sub(&b));
                den.and_then(|d| d.checked_mul(&d)).zip(det).and_then(|(d2, det)| det.checked_div(&d2))
            }
            BranchKind::Tabulated(_) => None,
        })
    }

    /// `{x in branch domain : T(x) in target}`.
    pub fn branch_preimage(&self, branch_index: usize, target: Interval) -> Result<Interval> {
        let branch = self.branches.get(branch_index).ok_or(Error::BranchIndex {
            index: branch_index,
            count: self.branches.len(),
        })?;
        Ok(branch.preimage(target))
    }

    pub fn to_config(&self) -> MapConfig {
        MapConfig {
            label: self.label.clone(),
            alpha0: Some(self.alpha0),
            b0: Some(self.b0),
            branches: self.branches.iter().map(BranchConfig::from_branch).collect(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: MapConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }
}

fn fingerprint_of(label: &str, branches: &[Branch], alpha0: Rational, b0: Rational) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("label={label}\nalpha0={alpha0}\nb0={b0}\n"));
    for b in branches {
        hasher.update(format!("domain={},{}\n", b.lo, b.hi));
        match &b.kind {
            BranchKind::Linear { slope, intercept } => hasher.update(format!("linear {slope} {intercept}\n")),
            BranchKind::Moebius { p, q, r, s } => hasher.update(format!("moebius {p} {q} {r} {s}\n")),
            BranchKind::Tabulated(t) => match &t.knots {
                Some(knots) => {
                    for (x, y) in knots {
                        hasher.update(format!("knot {x:?} {y:?}\n"));
                    }
                }
                None => {
                    let d = b.domain_interval();
                    for k in 0..=64 {
                        let x = d.lo + d.length() * k as f64 / 64.0;
                        hasher.update(format!("sample {:?}\n", (t.forward)(x)));
                    }
                }
            },
        }
    }
    hasher
        .finalize()
        .iter()
        .map(|byte| format!("{byte:02x}"))
        .collect()
}

/// Default `(alpha0, b0) = (1/beta, 0)` for piecewise-linear maps whose
/// branches are all onto `[0, 1]`, with `beta` the smallest `|slope|`.
/// Returns `None` for any other map.
pub fn linear_markov_constants(branches: &[Branch]) -> Option<(Rational, Rational)> {
    let mut beta: Option<Rational> = None;
    for b in branches {
        let BranchKind::Linear { slope, .. } = &b.kind else {
            return None;
        };
        let onto = (b.range.lo.abs() <= RANGE_TOL) && ((b.range.hi - 1.0).abs() <= RANGE_TOL);
        if !onto {
            return None;
        }
        let s = slope.abs();
        beta = Some(match beta {
            Some(cur) => cur.min(s),
            None => s,
        });
    }
    let beta = beta?;
    (beta > Rational::ONE).then(|| (beta.recip(), Rational::ZERO))
}

/// Serializable map description (TOML).
///
/// ```toml
/// label = "doubling"
/// alpha0 = "1/2"
/// b0 = "0"
///
/// [[branch]]
/// domain = ["0", "1/2"]
/// kind = "linear"
/// slope = "2"
/// intercept = "0"
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapConfig {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<Rational>,
    #[serde(rename = "branch")]
    pub branches: Vec<BranchConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchConfig {
    pub domain: [Rational; 2],
    #[serde(flatten)]
    pub kind: BranchSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[Rational; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BranchSpec {
    Linear {
        slope: Rational,
        intercept: Rational,
    },
    Moebius {
        p: Rational,
        q: Rational,
        r: Rational,
        s: Rational,
    },
    Tabulated {
        knots: Vec<[f64; 2]>,
    },
}

impl BranchConfig {
    fn from_branch(b: &Branch) -> Self {
        let kind = match &b.kind {
            BranchKind::Linear { slope, intercept } => BranchSpec::Linear {
                slope: *slope,
                intercept: *intercept,
            },
            BranchKind::Moebius { p, q, r, s } => BranchSpec::Moebius {
                p: *p,
                q: *q,
                r: *r,
                s: *s,
            },
            BranchKind::Tabulated(t) => BranchSpec::Tabulated {
                knots: t
                    .knots
                    .as_ref()
                    .map(|k| k.iter().map(|&(x, y)| [x, y]).collect())
                    .unwrap_or_default(),
            },
        };
        BranchConfig {
            domain: [b.lo, b.hi],
            kind,
            range: None,
        }
    }
}

impl MapConfig {
    pub fn build(&self) -> Result<PiecewiseMap> {
        let branches = self
            .branches
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let kind = match &c.kind {
                    BranchSpec::Linear { slope, intercept } => BranchKind::Linear {
                        slope: *slope,
                        intercept: *intercept,
                    },
                    BranchSpec::Moebius { p, q, r, s } => BranchKind::Moebius {
                        p: *p,
                        q: *q,
                        r: *r,
                        s: *s,
                    },
                    BranchSpec::Tabulated { knots } => {
                        BranchKind::Tabulated(Tabulated::from_knots(knots.iter().map(|k| (k[0], k[1])).collect())?)
                    }
                };
                let [lo, hi] = c.domain;
                let built = match c.range {
                    Some([a, b]) => Branch::with_declared_range(lo, hi, kind, (a.to_f64(), b.to_f64())),
                    None => Branch::new(lo, hi, kind),
                };
                built.map_err(|e| Error::InvalidMap(format!("branch {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (alpha0, b0) = match (self.alpha0, self.b0) {
            (Some(a), Some(b)) => (a, b),
            (None, None) => linear_markov_constants(&branches).ok_or_else(|| {
                Error::InvalidMap(
                    "alpha0 and b0 must be declared unless every branch is linear and onto".into(),
                )
            })?,
            _ => return Err(Error::InvalidMap("declare both alpha0 and b0, or neither".into())),
        };
        PiecewiseMap::new(self.label.clone(), branches, alpha0, b0)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Ready-made maps used in examples and tests.
pub mod builtin {
    use super::*;

    /// `x -> k x mod 1` with `k` linear onto branches and `(1/k, 0)` constants.
    pub fn linear_full_shift(k: i128) -> PiecewiseMap {
        let branches = (0..k)
            .map(|i| {
                Branch::new(
                    Rational::new(i, k),
                    Rational::new(i + 1, k),
                    BranchKind::Linear {
                        slope: Rational::from_integer(k),
                        intercept: Rational::from_integer(-i),
                    },
                )
                .expect("full-shift branch")
            })
            .collect();
        PiecewiseMap::new(format!("{k}x-mod-1"), branches, Rational::new(1, k), Rational::ZERO)
            .expect("full-shift map")
    }

    /// `x -> 2x mod 1`.
    pub fn doubling() -> PiecewiseMap {
        linear_full_shift(2)
    }

    /// `x -> 10x mod 1`.
    pub fn decimal_shift() -> PiecewiseMap {
        linear_full_shift(10)
    }

    /// The identity on `[0, 1)`. Not expanding; useful only as a
    /// discretization sanity check.
    pub fn identity() -> PiecewiseMap {
        let branch = Branch::new(
            Rational::ZERO,
            Rational::ONE,
            BranchKind::Linear {
                slope: Rational::ONE,
                intercept: Rational::ZERO,
            },
        )
        .expect("identity branch");
        PiecewiseMap::new_relaxed("identity", vec![branch], Rational::new(1, 2), Rational::ZERO)
            .expect("identity map")
    }

    /// Ten onto branches: `9x/(1-x)` on `[0, 1/10)` and `10x - i` on
    /// `[i/10, (i+1)/10)`, with `V(Pf) <= (1/9) V(f) + (2/9) ||f||_1`.
    pub fn moebius_ten_branch() -> PiecewiseMap {
        let mut branches = vec![Branch::new(
            Rational::ZERO,
            Rational::new(1, 10),
            BranchKind::Moebius {
                p: Rational::from_integer(9),
                q: Rational::ZERO,
                r: Rational::from_integer(-1),
                s: Rational::ONE,
            },
        )
        .expect("Moebius branch")];
        for i in 1..10 {
            branches.push(
                Branch::new(
                    Rational::new(i, 10),
                    Rational::new(i + 1, 10),
                    BranchKind::Linear {
                        slope: Rational::from_integer(10),
                        intercept: Rational::from_integer(-i),
                    },
                )
                .expect("linear branch"),
            );
        }
        PiecewiseMap::new("moebius-ten-branch", branches, Rational::new(1, 9), Rational::new(2, 9))
            .expect("ten-branch map")
    }
}

/// Map configuration files shipped with the crate, by label.
pub mod bundled {
    use super::*;

    pub const CONFIGS: &[(&str, &str)] = &[
        ("moebius-ten-branch", include_str!("../maps/moebius_ten_branch.toml")),
        ("doubling", include_str!("../maps/doubling.toml")),
        ("decimal-shift", include_str!("../maps/decimal_shift.toml")),
    ];

    pub fn names() -> impl Iterator<Item = &'static str> {
        CONFIGS.iter().map(|(name, _)| *name)
    }

    pub fn source(name: &str) -> Option<&'static str> {
        CONFIGS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
    }

    pub fn load(name: &str) -> Result<PiecewiseMap> {
        let text = source(name).ok_or_else(|| {
            Error::InvalidMap(format!(
                "no bundled map {name:?}; known: {}",
                names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        PiecewiseMap::from_toml_str(text)
    }
}

/// Hex SHA-256 of arbitrary bytes, used for config file hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
