//! Guaranteed-stability regions in normalized perturbation coordinates.
//!
//! A perturbation with radius coordinate `tau` and alignment coordinate
//! `theta` leaves a residual of norm `rho sin(pi tau/2) sin(pi theta/2)`
//! after the optimal gain correction. Holding that strictly below a
//! destabilization level `beta` carves out the region
//!
//! ```text
//! S = { (tau, theta) : sin(pi tau/2) sin(pi theta/2) < beta / rho }
//! ```
//!
//! fully described by the corner coordinate `kappa = (2/pi) asin(beta/rho)`:
//! radii `tau < kappa` are covered for every alignment, and past the corner
//! the boundary curve drops as `zeta(tau, kappa)`. The module provides the
//! corner and boundary maps, strict membership, the covered area
//! `xi = kappa + int_kappa^1 zeta dtau`, and the sensitivities of the area
//! to `rho` and `beta`.
//!
//! The integrals are evaluated after the substitution `tau = kappa + s^2`,
//! which removes the inverse-square-root behavior the sensitivity
//! integrands have at the corner (and the matching cusp of `zeta`).

use crate::error::{Error, Result};
use crate::quad;

const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;
const PI: f64 = std::f64::consts::PI;

/// Contract absolute tolerance for the area integral.
const AREA_TOL: f64 = 1e-8;
/// Tolerance for the sensitivity integrals.
const SENSITIVITY_TOL: f64 = 1e-10;
/// Panel budget for the adaptive integrator.
const QUAD_BUDGET: usize = 800;

/// Corner coordinate `kappa = (2/pi) asin(beta/rho)` of the region for
/// certificate level `beta` and perturbation budget `rho`.
///
/// # Errors
///
/// [`Error::Domain`] unless `0 < beta <= rho` (with both finite); budgets
/// below the certificate level have no corner — model them with a
/// full-square [`StabilityRegion`] instead.
pub fn kappa(beta: f64, rho: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite() && rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!(
            "kappa needs positive finite arguments, got beta = {beta}, rho = {rho}"
        )));
    }
    if beta > rho {
        return Err(Error::Domain(format!(
            "kappa needs beta <= rho (got beta = {beta} > rho = {rho}); the region is the whole square there"
        )));
    }
    Ok((beta / rho).asin() / HALF_PI)
}

/// Boundary alignment `zeta(tau, kappa) = (2/pi) asin(sin(pi kappa/2) / sin(pi tau/2))`,
/// defined on `kappa <= tau <= 1`; equals 1 at the corner and `kappa` at
/// `tau = 1`.
///
/// # Errors
///
/// [`Error::Domain`] unless `0 < kappa <= tau <= 1`.
pub fn zeta(tau: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("zeta needs kappa in (0, 1], got {kappa}")));
    }
    if !(tau >= kappa && tau <= 1.0) || !tau.is_finite() {
        return Err(Error::Domain(format!(
            "zeta is defined for kappa <= tau <= 1, got tau = {tau} with kappa = {kappa}"
        )));
    }
    // The ratio can top 1 by an ulp when tau == kappa; clamp before asin.
    let ratio = ((HALF_PI * kappa).sin() / (HALF_PI * tau).sin()).min(1.0);
    Ok(ratio.asin() / HALF_PI)
}

/// A guaranteed-stability region for one `(beta, rho)` pair.
#[derive(Debug, Clone)]
pub struct StabilityRegion {
    beta: f64,
    rho: f64,
    kappa: f64,
    full_square: bool,
}

impl StabilityRegion {
    /// Build the region for certificate level `beta` and perturbation
    /// budget `rho`. With `rho < beta` no admissible perturbation can reach
    /// the level and the region is the entire square (`kappa` reports 1).
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] unless both arguments are positive and finite.
    pub fn new(beta: f64, rho: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
        }
        if rho < beta {
            return Ok(StabilityRegion { beta, rho, kappa: 1.0, full_square: true });
        }
        let kappa = kappa(beta, rho)?;
        Ok(StabilityRegion { beta, rho, kappa, full_square: false })
    }

    /// Certificate level this region was built for.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Perturbation budget this region was built for.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Corner coordinate: coverage is total for `tau <= kappa` (1 for a
    /// full-square region).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// True when `rho < beta`, i.e. the whole square is guaranteed.
    pub fn is_full_square(&self) -> bool {
        self.full_square
    }

    /// Strict membership test at `(tau, theta)` with `tau in (0, 1]` and
    /// `theta in [0, 1]`. Evaluated through the product inequality
    /// `sin(pi tau/2) sin(pi theta/2) < beta/rho`, which coincides with the
    /// corner/boundary branch description point for point.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] when a coordinate leaves its range.
    pub fn contains(&self, tau: f64, theta: f64) -> Result<bool> {
        if !(tau > 0.0 && tau <= 1.0) || !tau.is_finite() {
            return Err(Error::Domain(format!("tau must lie in (0, 1], got {tau}")));
        }
        if !(0.0..=1.0).contains(&theta) || !theta.is_finite() {
            return Err(Error::Domain(format!("theta must lie in [0, 1], got {theta}")));
        }
        if self.full_square {
            return Ok(true);
        }
        Ok((HALF_PI * tau).sin() * (HALF_PI * theta).sin() < self.beta / self.rho)
    }

    /// Supremum of covered alignments at radius coordinate `tau in [0, 1]`:
    /// 1 up to the corner, `zeta(tau, kappa)` beyond it.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] when `tau` leaves `[0, 1]`.
    pub fn boundary_theta(&self, tau: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&tau) || !tau.is_finite() {
            return Err(Error::Domain(format!("tau must lie in [0, 1], got {tau}")));
        }
        if self.full_square || tau <= self.kappa {
            return Ok(1.0);
        }
        zeta(tau, self.kappa)
    }

    /// Uniformly sampled boundary polyline: `points >= 2` pairs
    /// `(tau_i, boundary_theta(tau_i))` with `tau_i = i / (points - 1)`.
    ///
    /// # Errors
    ///
    /// [`Error::Domain`] when `points < 2`.
    pub fn boundary(&self, points: usize) -> Result<Vec<(f64, f64)>> {
        if points < 2 {
            return Err(Error::Domain(format!(
                "boundary sampling needs at least 2 points, got {points}"
            )));
        }
        let last = (points - 1) as f64;
        (0..points)
            .map(|i| {
                let tau = i as f64 / last;
                Ok((tau, self.boundary_theta(tau)?))
            })
            .collect()
    }

    /// Covered fraction of the unit square (1 for a full-square region).
    ///
    /// # Errors
    ///
    /// See [`xi`].
    pub fn xi(&self) -> Result<f64> {
        if self.full_square {
            return Ok(1.0);
        }
        xi(self.kappa)
    }
}

/// Covered area `xi = kappa + int_kappa^1 zeta(tau, kappa) dtau` for a
/// corner at `kappa in (0, 1]`, by adaptive quadrature to absolute
/// tolerance `1e-8`. Reported as a fraction of the unit square.
///
/// # Errors
///
/// [`Error::Domain`] for `kappa` outside `(0, 1]`;
/// [`Error::QuadratureFailure`] if the integral does not converge.
pub fn xi(kappa: f64) -> Result<f64> {
    xi_with_tolerance(kappa, AREA_TOL)
}

/// [`xi`] with an explicit quadrature tolerance, for callers (such as
/// finite-difference oracles) that need the area far below the default
/// `1e-8`.
///
/// # Errors
///
/// As [`xi`], plus [`Error::Domain`] for a non-positive tolerance.
pub fn xi_with_tolerance(kappa: f64, abs_tol: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("xi needs kappa in (0, 1], got {kappa}")));
    }
    if kappa == 1.0 {
        return Ok(1.0);
    }
    let level = (HALF_PI * kappa).sin();
    let upper = (1.0 - kappa).sqrt();
    // tau = kappa + s^2 regularizes the square-root cusp of zeta at the
    // corner; the factor 2s is the Jacobian.
    let tail = quad::integrate(
        |s| {
            let tau = kappa + s * s;
            let ratio = (level / (HALF_PI * tau).sin()).min(1.0);
            2.0 * s * (ratio.asin() / HALF_PI)
        },
        0.0,
        upper,
        abs_tol,
        QUAD_BUDGET,
    )?;
    Ok(kappa + tail.value)
}

/// Sensitivity of the covered area to the perturbation budget:
/// `d xi / d rho = -(2 beta / (pi rho^2)) I(beta, rho) <= 0`, where `I` is
/// the shared boundary integral (see [`dxi_dbeta`]). Tends to `-2/(pi beta)`
/// as `rho -> beta+` and to 0 as `rho -> inf`.
///
/// # Errors
///
/// [`Error::Domain`] unless `0 < beta < rho` (strict: the one-sided
/// derivatives differ at `beta == rho`); quadrature failures propagate.
pub fn dxi_drho(beta: f64, rho: f64) -> Result<f64> {
    let i = boundary_integral(beta, rho)?;
    Ok(-(2.0 * beta / (PI * rho * rho)) * i)
}

/// Sensitivity of the covered area to the certificate level:
/// `d xi / d beta = (2 / (pi rho)) I(beta, rho) >= 0`. Tends to `2/(pi rho)`
/// as `beta -> rho-` and diverges (logarithmically in `rho/beta`) as
/// `beta -> 0+`.
///
/// # Errors
///
/// As [`dxi_drho`].
pub fn dxi_dbeta(beta: f64, rho: f64) -> Result<f64> {
    let i = boundary_integral(beta, rho)?;
    Ok((2.0 / (PI * rho)) * i)
}

/// The integral both sensitivities share:
/// `I = int_kappa^1 dtau / sqrt(sin^2(pi tau/2) - (beta/rho)^2)`.
///
/// Computed after `tau = kappa + s^2` with the factorization
/// `sin^2 x - sin^2 y = sin(x+y) sin(x-y)`, which turns the integrand into
/// `2s / sqrt(sin(pi kappa + pi s^2/2) sin(pi s^2/2))` — cancellation-free
/// and regular at `s = 0` with limit `2 / sqrt((pi/2) sin(pi kappa))`.
fn boundary_integral(beta: f64, rho: f64) -> Result<f64> {
    if !(beta > 0.0 && beta.is_finite() && rho.is_finite() && beta < rho) {
        return Err(Error::Domain(format!(
            "area sensitivities need 0 < beta < rho, got beta = {beta}, rho = {rho}"
        )));
    }
    let kappa = kappa(beta, rho)?;
    let upper = (1.0 - kappa).sqrt();
    let corner_limit = 2.0 / (HALF_PI * (PI * kappa).sin()).sqrt();
    let result = quad::integrate(
        |s| {
            let s2 = s * s;
            let b = (HALF_PI * s2).sin();
            if b <= 0.0 {
                // s slid to (or rounded below) the corner itself: use the
                // finite limit value.
                return corner_limit;
            }
            let a = (PI * kappa + HALF_PI * s2).sin();
            2.0 * s / (a * b).sqrt()
        },
        0.0,
        upper,
        SENSITIVITY_TOL,
        QUAD_BUDGET,
    )?;
    Ok(result.value)
}
