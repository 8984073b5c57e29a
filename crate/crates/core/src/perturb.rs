//! Spherical-style coordinates for perturbations, aligned with the
//! cancellable subspace.
//!
//! A perturbation `delta` admitted under the norm bound `rho` is described by
//! four coordinates relative to a pinned [`CancellationBasis`]:
//!
//! * `tau` in `(0, 1]` — normalized magnitude: `||delta||_F = rho sin(pi tau / 2)`;
//! * `theta` in `[0, 1]` — normalized angle between `delta` and the
//!   cancellable subspace: `theta = 0` means fully cancellable, `theta = 1`
//!   means orthogonal to everything an update can reach;
//! * `phi_c` — unit direction of the cancellable component (`m*p` entries);
//! * `phi_s` — unit direction of the residual component (`n^2 - m*p`
//!   entries, empty when `m*p = n^2`).
//!
//! In these coordinates the uncancellable share has the closed form
//! `J* = (rho sin(pi tau/2) sin(pi theta/2))^2` — no matrix computation
//! needed — which is what makes region characterization tractable.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::statespace::Perturbation;
use crate::update::CancellationBasis;

/// Half pi, used by all the angle maps.
const HALF_PI: f64 = std::f64::consts::FRAC_PI_2;

/// Coordinates of a perturbation relative to a cancellation basis.
#[derive(Debug, Clone)]
pub struct PerturbationCoords {
    rho: f64,
    tau: f64,
    theta: f64,
    phi_c: Array1<f64>,
    phi_s: Array1<f64>,
}

impl PerturbationCoords {
    /// Validates and wraps a coordinate tuple.
    ///
    /// # Errors
    ///
    /// * [`Error::Domain`] unless `rho > 0`, `tau` is in `(0, 1]`, `theta`
    ///   is in `[0, 1]`, and the direction vectors have unit norm (within
    ///   `1e-10`).
    /// * [`Error::DegenerateCoverage`] if `phi_s` is empty (no residual
    ///   subspace) but `theta > 0` asks for residual energy.
    pub fn new(
        rho: f64,
        tau: f64,
        theta: f64,
        phi_c: Array1<f64>,
        phi_s: Array1<f64>,
    ) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Domain(format!("tau must lie in (0, 1], got {tau}")));
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!("theta must lie in [0, 1], got {theta}")));
        }
        if phi_c.is_empty() {
            return Err(Error::Domain("phi_c must be non-empty".into()));
        }
        let norm_c = phi_c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm_c - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("phi_c must have unit norm, got {norm_c}")));
        }
        if phi_s.is_empty() {
            if theta > 0.0 {
                return Err(Error::DegenerateCoverage);
            }
        } else {
            let norm_s = phi_s.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm_s - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!("phi_s must have unit norm, got {norm_s}")));
            }
        }
        Ok(PerturbationCoords { rho, tau, theta, phi_c, phi_s })
    }

    /// Norm bound the coordinates are relative to.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Normalized magnitude in `(0, 1]`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Normalized subspace angle in `[0, 1]`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Unit direction inside the cancellable subspace.
    pub fn phi_c(&self) -> &Array1<f64> {
        &self.phi_c
    }

    /// Unit direction inside the residual subspace (may be empty).
    pub fn phi_s(&self) -> &Array1<f64> {
        &self.phi_s
    }
}

/// Builds the perturbation with the given coordinates:
/// `delta` has norm `rho sin(pi tau/2)`, cancellable component along
/// `phi_c` weighted `cos(pi theta/2)`, and residual component along `phi_s`
/// weighted `sin(pi theta/2)`.
///
/// # Errors
///
/// * [`Error::DimensionMismatch`] if the direction vectors do not match the
///   basis dimensions.
/// * [`Error::DegenerateCoverage`] via [`PerturbationCoords::new`] rules
///   (checked again here against the basis).
pub fn synthesize(basis: &CancellationBasis, coords: &PerturbationCoords) -> Result<Perturbation> {
    let mp = basis.cancellable_dim();
    let rest = basis.residual_dim();
    if coords.phi_c.len() != mp || coords.phi_s.len() != rest {
        return Err(Error::DimensionMismatch(format!(
            "direction vectors have lengths {} / {}, basis needs {mp} / {rest}",
            coords.phi_c.len(),
            coords.phi_s.len()
        )));
    }
    if rest == 0 && coords.theta > 0.0 {
        return Err(Error::DegenerateCoverage);
    }
    let r = coords.rho * (HALF_PI * coords.tau).sin();
    let wc = (HALF_PI * coords.theta).cos();
    let ws = (HALF_PI * coords.theta).sin();
    let n2 = basis.n() * basis.n();
    let mut psi = Array1::zeros(n2);
    for (k, &v) in coords.phi_c.iter().enumerate() {
        psi[k] = wc * v;
    }
    for (k, &v) in coords.phi_s.iter().enumerate() {
        psi[mp + k] = ws * v;
    }
    let delta = basis.matrix_from_coordinates(&psi.view())? * r;
    Perturbation::new(delta, coords.rho)
}

/// Recovers the coordinates of a perturbation: the inverse of
/// [`synthesize`] for the same pinned basis.
///
/// When a component vanishes, its direction is undefined; the canonical
/// first basis vector is reported for that block (and `theta` is exactly 0
/// or 1 accordingly).
///
/// # Errors
///
/// * [`Error::ZeroPerturbation`] if `||delta||_F = 0`.
/// * [`Error::DimensionMismatch`] if the perturbation does not match the
///   basis.
pub fn analyze(pert: &Perturbation, basis: &CancellationBasis) -> Result<PerturbationCoords> {
    let r = pert.fro_norm();
    if r == 0.0 {
        return Err(Error::ZeroPerturbation);
    }
    let chi = basis.coordinates(&pert.delta().view())?;
    let mp = basis.cancellable_dim();
    let rest = basis.residual_dim();

    let ratio = (r / pert.rho()).min(1.0);
    let tau = ratio.asin() / HALF_PI;

    let mu_norm = chi.iter().take(mp).map(|x| x * x).sum::<f64>().sqrt() / r;
    let nu_norm = chi.iter().skip(mp).map(|x| x * x).sum::<f64>().sqrt() / r;
    let theta = nu_norm.atan2(mu_norm) / HALF_PI;

    let phi_c = if mu_norm > 1e-12 {
        Array1::from_iter(chi.iter().take(mp).map(|x| x / (r * mu_norm)))
    } else {
        canonical_first(mp)
    };
    let phi_s = if rest == 0 {
        Array1::zeros(0)
    } else if nu_norm > 1e-12 {
        Array1::from_iter(chi.iter().skip(mp).map(|x| x / (r * nu_norm)))
    } else {
        canonical_first(rest)
    };

    PerturbationCoords::new(pert.rho(), tau, theta, phi_c, phi_s)
}

/// Uncancellable share of a perturbation at the given coordinates, without
/// touching any matrix: `J* = (rho sin(pi tau/2) sin(pi theta/2))^2`.
///
/// # Errors
///
/// [`Error::Domain`] unless `rho > 0`, `tau` in `(0, 1]`, `theta` in
/// `[0, 1]`.
pub fn closed_form_cost(rho: f64, tau: f64, theta: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1], got {tau}")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("theta must lie in [0, 1], got {theta}")));
    }
    let s = rho * (HALF_PI * tau).sin() * (HALF_PI * theta).sin();
    Ok(s * s)
}

fn canonical_first(len: usize) -> Array1<f64> {
    let mut v = Array1::zeros(len);
    v[0] = 1.0;
    v
}
