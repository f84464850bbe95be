//! Lasota-Yorke and Keller-Liverani constants.
//!
//! Two Lasota-Yorke regimes are supported:
//!
//! * [`LyMode::HoleUniform`]: one inequality `‖Pⁿf‖_BV ≤ αⁿ‖f‖_BV + B‖f‖₁`
//!   shared by `P`, every Ulam discretization `P_η` and every open operator
//!   `P_H`, with `α = 3α₀` and `B = (1 - α₀ + B₀)/(1 - α)`. Requires
//!   `α₀ < 1/3`.
//! * [`LyMode::ClosedOnly`]: the sharper inequality for `P` and `P_η` alone,
//!   with `α = α₀` and `B̂ = 1 + B₀/(1 - α₀)`.
//!
//! The leading coefficient `A` is 1 in both regimes; it is still threaded
//! through the formulas so they read like the perturbation theorem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyMode {
    HoleUniform,
    ClosedOnly,
}

/// Lasota-Yorke data. `alpha`, `b` and `d` are the values in force for the
/// selected mode; `b_hat` and `b_hole` are both kept for reference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyConstants {
    pub mode: LyMode,
    pub alpha0: Rational,
    pub b0: Rational,
    pub alpha: Rational,
    pub b: Rational,
    pub b_hat: Rational,
    pub b_hole: Rational,
    pub a: Rational,
    /// `D = A (A + B + 2)`.
    pub d: Rational,
    /// `Γ = max(1 + α₀, B₀)`, the factor in `|||P_η - P||| ≤ Γ mesh(η)`.
    pub discretization_factor: Rational,
}

impl LyConstants {
    pub fn alpha_f64(&self) -> f64 {
        self.alpha.to_f64()
    }

    pub fn b_f64(&self) -> f64 {
        self.b.to_f64()
    }

    pub fn d_f64(&self) -> f64 {
        self.d.to_f64()
    }

    pub fn discretization_factor_f64(&self) -> f64 {
        self.discretization_factor.to_f64()
    }

    /// The same `(α₀, B₀)` in the other mode.
    pub fn with_mode(&self, mode: LyMode) -> Result<LyConstants> {
        ly_constants(self.alpha0, self.b0, mode)
    }
}

pub fn ly_constants(alpha0: Rational, b0: Rational, mode: LyMode) -> Result<LyConstants> {
    if !(Rational::ZERO < alpha0 && alpha0 < Rational::ONE) {
        return Err(Error::Domain(format!("alpha0 = {alpha0} must lie in (0, 1)")));
    }
    if b0 < Rational::ZERO {
        return Err(Error::Domain(format!("B0 = {b0} must be nonnegative")));
    }
    if mode == LyMode::HoleUniform && alpha0 >= Rational::new(1, 3) {
        return Err(Error::LyMode(format!(
            "hole-uniform constants need alpha0 < 1/3, got {alpha0}"
        )));
    }
    let one = Rational::ONE;
    let two = Rational::from_integer(2);
    let three = Rational::from_integer(3);
    let a = one;
    let b_hat = one + b0 / (one - alpha0);
    let alpha_hole = three * alpha0;
    let b_hole = if mode == LyMode::HoleUniform {
        let primary = (one - alpha0 + b0) / (one - alpha_hole);
        let variation_form = one + (two * alpha0 + b0) / (one - alpha_hole);
        debug_assert_eq!(primary, variation_form);
        primary
    } else if alpha_hole < one {
        (one - alpha0 + b0) / (one - alpha_hole)
    } else {
        // Undefined when 3α₀ ≥ 1; only the closed-only value is meaningful.
        b_hat
    };
    let (alpha, b) = match mode {
        LyMode::HoleUniform => (alpha_hole, b_hole),
        LyMode::ClosedOnly => (alpha0, b_hat),
    };
    Ok(LyConstants {
        mode,
        alpha0,
        b0,
        alpha,
        b,
        b_hat,
        b_hole,
        a,
        d: a * (a + b + two),
        discretization_factor: (one + alpha0).max(b0),
    })
}

/// The constant chain of the perturbation theorem for given `(r, δ, H)`,
/// where `H` bounds the resolvent of the unperturbed operator off
/// `V_{δ,r}`. With `H = H*` this is the computable `ε₀*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlConstants {
    pub r: f64,
    pub delta: f64,
    pub h: f64,
    pub n1: u32,
    /// `C = r^{-n₁}`.
    pub c: f64,
    pub n2: u32,
    /// Exponent `γ = ln(r/α) / ln(1/α)`.
    pub gamma: f64,
    pub epsilon1: f64,
    /// Second argument of the minimum defining `ε₀`.
    pub epsilon0_power_term: f64,
    pub epsilon0: f64,
    pub a: f64,
    pub b: f64,
    /// `‖(z - P₂)⁻¹‖_BV` bound valid once `|||P₁ - P₂||| ≤ ε₁`:
    /// `4(A+B)/(1-r) r^{-n₁} + 1/(2ε₁)`.
    pub resolvent_transfer_bound: f64,
    /// `ε₀ / (2Γ)`, the largest admissible mesh.
    pub mesh_bound: f64,
}

pub fn kl_constants(ly: &LyConstants, r: f64, delta: f64, h: f64) -> Result<KlConstants> {
    let alpha = ly.alpha_f64();
    if !(alpha < r && r < 1.0) {
        return Err(Error::Domain(format!("need alpha < r < 1, got alpha = {alpha}, r = {r}")));
    }
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("delta = {delta} must be positive")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("resolvent bound H = {h} must be positive and finite")));
    }
    let a = ly.a.to_f64();
    let b = ly.b_f64();
    let d = ly.d_f64();
    let log_ratio = (r / alpha).ln();
    let inv_gap = 1.0 / (1.0 - r);

    let n1 = ((2.0 * a).ln() / log_ratio).ceil().max(0.0) as u32;
    let c = r.powi(-(n1 as i32));
    // A non-positive logarithm means no extra iterates are needed.
    let n2 = ((8.0 * b * d * c * h).ln() / log_ratio).ceil().max(0.0) as u32;
    let gamma = log_ratio / (1.0 / alpha).ln();

    let epsilon1 = r.powi((n1 + n2) as i32) / (8.0 * b * (h * b + inv_gap));
    let base = r.powi(n1 as i32) / (4.0 * b * (h * (d + b) + 2.0 * (1.0 + b) + inv_gap));
    let epsilon0_power_term = base.powf(gamma);
    let epsilon0 = epsilon1.min(epsilon0_power_term);

    let apb = a + b;
    let c_n1 = r.powi(-(n1 as i32));
    let coef_a = (8.0 * (2.0 * a * apb + inv_gap) * apb * apb * c_n1 + 1.0) * inv_gap;
    let coef_b = 2.0 * ((4.0 * apb * apb * (d + b) + b) * inv_gap * c_n1 + b);
    let resolvent_transfer_bound = 4.0 * apb * inv_gap * c_n1 + 1.0 / (2.0 * epsilon1);

    Ok(KlConstants {
        r,
        delta,
        h,
        n1,
        c,
        n2,
        gamma,
        epsilon1,
        epsilon0_power_term,
        epsilon0,
        a: coef_a,
        b: coef_b,
        resolvent_transfer_bound,
        mesh_bound: epsilon0 / (2.0 * ly.discretization_factor_f64()),
    })
}

/// Outcome of transferring a coarse-mesh resolvent bound to every finer
/// Ulam discretization through the closed-only inequality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferredBound {
    pub closed: KlConstants,
    /// `(2Γ)⁻¹ ε₀*` in closed-only constants; must be at least the coarse mesh.
    pub closed_mesh_bound: f64,
    pub coarse_mesh: f64,
    /// Uniform `‖(z - P_η')⁻¹‖_BV` bound for all `mesh(η') ≤ coarse_mesh`.
    pub bound: f64,
}

/// Closed-only constants for `H_coarse` and the transferred BV resolvent
/// bound, without checking the mesh precondition.
pub fn closed_only_transfer(ly: &LyConstants, r: f64, delta: f64, h_coarse: f64) -> Result<(KlConstants, f64)> {
    let closed_ly = ly.with_mode(LyMode::ClosedOnly)?;
    let closed = kl_constants(&closed_ly, r, delta, h_coarse)?;
    Ok((closed, closed.resolvent_transfer_bound))
}

/// Transferred bound, provided `2Γ mesh_coarse ≤ ε₀*` in closed-only
/// constants.
pub fn bootstrap_resolvent_bound(
    ly: &LyConstants,
    r: f64,
    delta: f64,
    h_coarse: f64,
    mesh_coarse: f64,
) -> Result<TransferredBound> {
    let (closed, bound) = closed_only_transfer(ly, r, delta, h_coarse)?;
    let gamma_factor = ly.discretization_factor_f64();
    if 2.0 * gamma_factor * mesh_coarse > closed.epsilon0 {
        return Err(Error::BootstrapPrecondition {
            lhs: 2.0 * gamma_factor * mesh_coarse,
            rhs: closed.epsilon0,
        });
    }
    Ok(TransferredBound {
        closed,
        closed_mesh_bound: closed.mesh_bound,
        coarse_mesh: mesh_coarse,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    fn ten_branch() -> LyConstants {
        ly_constants(q(1, 9), q(2, 9), LyMode::HoleUniform).unwrap()
    }

    #[test]
    fn ly_constants_of_ten_branch_map() {
        let ly = ten_branch();
        assert_eq!(ly.discretization_factor, q(10, 9));
        assert_eq!(ly.alpha, q(1, 3));
        assert_eq!(ly.b, q(5, 3));
        assert_eq!(ly.d, q(14, 3));
        assert_eq!(ly.b_hat, q(5, 4));
    }

    #[test]
    fn ly_constants_without_additive_term() {
        let ly = ly_constants(q(1, 10), Rational::ZERO, LyMode::HoleUniform).unwrap();
        assert_eq!(ly.alpha, q(3, 10));
        assert_eq!(ly.b, q(9, 7));
        assert_eq!(ly.discretization_factor, q(11, 10));
    }

    #[test]
    fn closed_only_constants() {
        let ly = ly_constants(q(1, 9), q(2, 9), LyMode::ClosedOnly).unwrap();
        assert_eq!(ly.alpha, q(1, 9));
        assert_eq!(ly.b, q(5, 4));
        assert_eq!(ly.d, q(17, 4));
    }

    #[test]
    fn hole_uniform_needs_small_alpha0() {
        assert!(matches!(
            ly_constants(q(1, 3), Rational::ZERO, LyMode::HoleUniform),
            Err(Error::LyMode(_))
        ));
        assert!(ly_constants(q(1, 2), Rational::ZERO, LyMode::ClosedOnly).is_ok());
        assert!(ly_constants(Rational::ONE, Rational::ZERO, LyMode::ClosedOnly).is_err());
    }

    #[test]
    fn kl_chain_first_table() {
        let kl = kl_constants(&ten_branch(), 24.0 / 25.0, 1.0 / 26.0, 45.46070939).unwrap();
        assert_eq!(kl.n1, 1);
        assert_relative_eq!(kl.c, 25.0 / 24.0, max_relative = 1e-15);
        assert_eq!(kl.n2, 8);
        assert_relative_eq!(kl.mesh_bound, 0.0002319492040, max_relative = 1e-6);
        assert!(kl.epsilon0 <= kl.epsilon1);
    }

    #[test]
    fn kl_chain_second_table_first_column() {
        let kl = kl_constants(&ten_branch(), 39.0 / 40.0, 1.0 / 41.0, 63.73181657).unwrap();
        assert_eq!(kl.n2, 8);
        assert_relative_eq!(kl.c, 40.0 / 39.0, max_relative = 1e-15);
        assert_relative_eq!(kl.mesh_bound, 0.0001763820641, max_relative = 1e-6);
    }

    #[test]
    fn kl_chain_from_transferred_bound() {
        // Independent float evaluation of the same formulas gives
        // 1.2744333974547857e-05 here (see the acceptance suite for the
        // comparison with the published figure).
        let kl = kl_constants(&ten_branch(), 39.0 / 40.0, 1.0 / 41.0, 1036.693385).unwrap();
        assert_eq!(kl.n2, 11);
        assert_relative_eq!(kl.mesh_bound, 1.2744333974547857e-05, max_relative = 1e-12);
    }

    #[test]
    fn closed_only_check_value() {
        let (closed, _) = closed_only_transfer(&ten_branch(), 39.0 / 40.0, 1.0 / 41.0, 63.73181657).unwrap();
        let closed_mesh = closed.epsilon0 / (2.0 * 10.0 / 9.0);
        assert_relative_eq!(closed_mesh, 0.0002425063815, max_relative = 1e-6);
    }

    #[test]
    fn bootstrap_bound_and_precondition() {
        let ly = ten_branch();
        let t = bootstrap_resolvent_bound(&ly, 39.0 / 40.0, 1.0 / 41.0, 63.73181657, 2e-4).unwrap();
        // Frozen from an independent evaluation of 4(1+B̂)/(1-r) r^{-n1} + 1/(2ε₁).
        assert_relative_eq!(t.bound, 1048.2987275376086, max_relative = 1e-12);
        assert!((t.bound / 1036.693385 - 1.0).abs() < 0.10);
        assert!(matches!(
            bootstrap_resolvent_bound(&ly, 39.0 / 40.0, 1.0 / 41.0, 63.73181657, 3e-4),
            Err(Error::BootstrapPrecondition { .. })
        ));
    }

    #[test]
    fn bootstrap_bound_stays_finite_for_tiny_h() {
        let (_, bound) = closed_only_transfer(&ten_branch(), 39.0 / 40.0, 1.0 / 41.0, 1e-300).unwrap();
        assert!(bound.is_finite() && bound > 0.0);
    }

    #[test]
    fn r_must_exceed_alpha() {
        assert!(kl_constants(&ten_branch(), 0.3, 0.01, 10.0).is_err());
        assert!(kl_constants(&ten_branch(), 0.9, 0.0, 10.0).is_err());
        assert!(kl_constants(&ten_branch(), 0.9, 0.01, 0.0).is_err());
    }
}
