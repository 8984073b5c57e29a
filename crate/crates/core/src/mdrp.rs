//! Distance to instability under real Frobenius-bounded perturbations.
//!
//! For a Hurwitz matrix `M`, the quantity of interest is the norm of the
//! smallest real matrix `X` that drags an eigenvalue onto the imaginary
//! axis: `min { ||X||_F : alpha(M + X) = 0 }`. Everything downstream uses it
//! as the certificate level `beta`: perturbation residuals strictly below it
//! cannot destabilize the loop.
//!
//! Exact values are available in special cases only (symmetric `M`); in
//! general the module brackets the distance between
//!
//! * an easy upper bound `min(sigma_min(M), -sqrt(n) * alpha(M))`, each term
//!   witnessed by an explicit destabilizer, and
//! * a bisection estimate driven by a multi-start derivative-free search for
//!   destabilizing directions at each trial radius. The returned value is
//!   the conservative lower bracket end — an estimate, not a certificate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{self, SvdTriplet};
use crate::statespace::spectral_abscissa;
use crate::streams;

/// Feasibility threshold for the inner search: a trial radius counts as
/// destabilizing when the maximized abscissa reaches `-FEASIBILITY_SLACK`.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// How the estimate in an [`MdrpEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MdrpMethod {
    /// Exact formula `beta = -alpha(M)`, valid for symmetric `M`.
    SymmetricExact,
    /// Bisection with the randomized inner search.
    Bisection,
    /// No search performed; `beta` is the closed-form upper bound.
    UpperBoundOnly,
}

impl std::fmt::Display for MdrpMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MdrpMethod::SymmetricExact => "symmetric_exact",
            MdrpMethod::Bisection => "bisection",
            MdrpMethod::UpperBoundOnly => "upper_bound_only",
        };
        write!(f, "{s}")
    }
}

/// Result of a distance-to-instability estimation.
#[derive(Debug, Clone)]
pub struct MdrpEstimate {
    /// The estimated distance (conservative end of the final bracket).
    pub beta: f64,
    /// Closed-form upper bound `min(sigma_min, -sqrt(n) alpha)`.
    pub upper: f64,
    /// How `beta` was obtained.
    pub method: MdrpMethod,
    /// Bisection steps performed (0 for the non-iterative methods).
    pub iterations: usize,
    /// Inner restarts configured per bisection step.
    pub inner_starts: usize,
    /// Bracket-width stopping tolerance that was applied.
    pub tol: f64,
    /// Seed the randomized search drew from.
    pub seed: u64,
}

/// Options for [`estimate`].
#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Bracket-width stopping tolerance. Default: `1e-3 * upper_bound(M)`.
    pub tol: Option<f64>,
    /// Seed for the randomized inner search. Default 0.
    pub seed: u64,
    /// Random restarts per bisection step (two deterministic warm starts are
    /// always added). With 0, no search runs and the upper bound is
    /// returned as the estimate. Default 20.
    pub inner_starts: usize,
    /// Bisection step cap. Default 60.
    pub max_steps: usize,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions { tol: None, seed: 0, inner_starts: 20, max_steps: 60 }
    }
}

/// Closed-form upper bound on the distance to instability:
/// `min(sigma_min(M), -sqrt(n) * alpha(M))`. Both terms are witnessed: see
/// [`singular_destabilizer`] and [`identity_destabilizer`].
///
/// # Errors
///
/// * [`Error::NotStable`] if `alpha(M) >= 0` (the distance is 0).
/// * Eigensolver/SVD failures.
pub fn upper_bound(m: &ArrayView2<'_, f64>) -> Result<f64> {
    let alpha = spectral_abscissa(m)?;
    if alpha >= 0.0 {
        return Err(Error::NotStable { alpha });
    }
    let s = linalg::singular_values(m)?;
    let sigma_min = s[s.len() - 1];
    let n = m.nrows() as f64;
    Ok(sigma_min.min(-n.sqrt() * alpha))
}

/// The shift `X = -alpha(M) I`: the cheapest destabilizer along the
/// identity direction, with `alpha(M + X) = 0` exactly and
/// `||X||_F = sqrt(n) |alpha(M)|`.
///
/// # Errors
///
/// Eigensolver failures; square-matrix dimension checks.
pub fn identity_destabilizer(m: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let alpha = spectral_abscissa(m)?;
    Ok(Array2::eye(m.nrows()) * (-alpha))
}

/// The rank-one perturbation `X = -sigma_min u_min v_min^T` cancelling the
/// smallest singular value: `M + X` is singular (has a zero eigenvalue), and
/// `||X||_F = sigma_min(M)`.
///
/// # Errors
///
/// SVD failures; square-matrix dimension checks.
pub fn singular_destabilizer(m: &ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::DimensionMismatch(format!(
            "destabilizers need a square non-empty matrix, got {r} x {c}"
        )));
    }
    let svd = SvdTriplet::full(m)?;
    let k = svd.s.len() - 1;
    let sigma_min = svd.s[k];
    let u = svd.u.column(k);
    let v = svd.v.column(k);
    let mut x = Array2::zeros((r, r));
    for i in 0..r {
        for j in 0..r {
            x[(i, j)] = -sigma_min * u[i] * v[j];
        }
    }
    Ok(x)
}

/// Exact distance to instability for symmetric Hurwitz `M`:
/// `beta = -alpha(M)` (which equals `sigma_min(M)` there).
///
/// # Errors
///
/// * [`Error::NotSymmetric`] if `max |M - M^T|` exceeds `sym_tol`
///   (default `1e-10`).
/// * [`Error::NotStable`] if `M` is not Hurwitz.
pub fn symmetric_exact(m: &ArrayView2<'_, f64>, sym_tol: Option<f64>) -> Result<f64> {
    let tol = sym_tol.unwrap_or(1e-10);
    let asym = asymmetry(m);
    if asym > tol {
        return Err(Error::NotSymmetric { asymmetry: asym, tol });
    }
    let alpha = spectral_abscissa(m)?;
    if alpha >= 0.0 {
        return Err(Error::NotStable { alpha });
    }
    Ok(-alpha)
}

/// Max-entry asymmetry `max |M - M^T|` (0 for rectangular input is never
/// reported: callers pass square matrices).
fn asymmetry(m: &ArrayView2<'_, f64>) -> f64 {
    let n = m.nrows().min(m.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Bisection estimate of the distance to instability.
///
/// Brackets the distance inside `(0, upper_bound(M)]`. At each trial radius
/// `beta` the inner search maximizes `alpha(M + beta * unvec(v))` over unit
/// vectors `v` (two deterministic warm starts — the identity and
/// min-singular-pair directions — plus `inner_starts` random restarts, each
/// owning a stream keyed `(seed, step, restart)`); finding
/// `alpha >= -1e-9` certifies the trial as destabilizing and shrinks the
/// upper end, otherwise the lower end grows. Returns the **lower** bracket
/// end: a radius at which no destabilizer was found — conservative for
/// certification, but an estimate, not a proof.
///
/// Deterministic for fixed `(M, options)` regardless of thread count: every
/// restart owns its stream and the per-step verdict is a schedule-invariant
/// disjunction.
///
/// # Errors
///
/// * [`Error::NotStable`] if `M` is not Hurwitz.
/// * [`Error::Domain`] for a non-positive tolerance.
/// * [`Error::BudgetExceeded`] if the bracket fails to close within
///   `max_steps`.
pub fn estimate(m: &ArrayView2<'_, f64>, options: &EstimateOptions) -> Result<MdrpEstimate> {
    let upper = upper_bound(m)?;
    if options.inner_starts == 0 {
        return Ok(MdrpEstimate {
            beta: upper,
            upper,
            method: MdrpMethod::UpperBoundOnly,
            iterations: 0,
            inner_starts: 0,
            tol: options.tol.unwrap_or(1e-3 * upper),
            seed: options.seed,
        });
    }
    let tol = options.tol.unwrap_or(1e-3 * upper);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Domain(format!("tolerance must be positive and finite, got {tol}")));
    }

    let n = m.nrows();
    // Deterministic warm-start directions, shared by every bisection step.
    // Unit Frobenius norm by construction.
    let warm_identity = {
        let scale = 1.0 / (n as f64).sqrt();
        linalg::vec_mat(&(Array2::eye(n) * scale).view())
    };
    let warm_singular = {
        let x = singular_destabilizer(m)?;
        let norm = linalg::fro_norm(&x.view());
        // The rank-one destabilizer has norm sigma_min; for an exactly
        // singular M it degenerates to zero — fall back to the identity.
        if norm > 1e-300 {
            linalg::vec_mat(&x.view()) / norm
        } else {
            warm_identity.clone()
        }
    };

    let mut lo = 0.0f64;
    let mut hi = upper;
    let mut steps = 0usize;
    while hi - lo > tol {
        if steps >= options.max_steps {
            return Err(Error::BudgetExceeded {
                context: format!("distance bisection bracket [{lo:.6e}, {hi:.6e}] still wider than {tol:.1e}"),
                iterations: steps,
            });
        }
        let mid = 0.5 * (lo + hi);
        if trial_is_destabilizing(
            m,
            mid,
            &warm_identity.view(),
            &warm_singular.view(),
            options.seed,
            steps as u64,
            options.inner_starts,
        ) {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }

    // lo = 0 can only survive when every probe found a destabilizer, i.e.
    // the system sits within tol of instability; report the smallest
    // positive normal so the "beta > 0" contract still holds.
    let beta = if lo > 0.0 { lo } else { f64::MIN_POSITIVE };
    Ok(MdrpEstimate {
        beta,
        upper,
        method: MdrpMethod::Bisection,
        iterations: steps,
        inner_starts: options.inner_starts,
        tol,
        seed: options.seed,
    })
}

/// Symmetric dispatch: exact formula when `M` is symmetric (within `1e-10`),
/// bisection otherwise.
///
/// # Errors
///
/// As for [`estimate`] / [`symmetric_exact`].
pub fn estimate_auto(m: &ArrayView2<'_, f64>, options: &EstimateOptions) -> Result<MdrpEstimate> {
    if m.nrows() == m.ncols() && asymmetry(m) <= 1e-10 {
        let beta = symmetric_exact(m, None)?;
        let upper = upper_bound(m)?;
        return Ok(MdrpEstimate {
            beta,
            upper,
            method: MdrpMethod::SymmetricExact,
            iterations: 0,
            inner_starts: 0,
            tol: options.tol.unwrap_or(0.0),
            seed: options.seed,
        });
    }
    estimate(m, options)
}

/// One bisection trial: is there a unit direction `v` with
/// `alpha(M + radius * unvec(v)) >= -1e-9`?
fn trial_is_destabilizing(
    m: &ArrayView2<'_, f64>,
    radius: f64,
    warm_identity: &ArrayView1<'_, f64>,
    warm_singular: &ArrayView1<'_, f64>,
    seed: u64,
    step: u64,
    inner_starts: usize,
) -> bool {
    // Cheap deterministic pre-checks: the warm directions alone certify most
    // trials above the true distance (exactly, for symmetric M).
    if probe(m, radius, warm_singular) >= -FEASIBILITY_SLACK
        || probe(m, radius, warm_identity) >= -FEASIBILITY_SLACK
    {
        return true;
    }
    use rayon::prelude::*;
    // Restart 0 and 1 refine the warm starts; the rest are random. The
    // disjunction over restarts is schedule-invariant, so `any` may run in
    // parallel and short-circuit freely.
    (0..inner_starts + 2).into_par_iter().any(|restart| {
        let v0 = match restart {
            0 => warm_singular.to_owned(),
            1 => warm_identity.to_owned(),
            r => {
                let mut rng = streams::substream(seed, &[step, r as u64 - 2]);
                streams::unit_vector(&mut rng, m.nrows() * m.nrows())
            }
        };
        local_search_reaches_threshold(m, radius, v0)
    })
}

/// Abscissa of `M + radius * unvec(v)` for a unit direction `v`.
fn probe(m: &ArrayView2<'_, f64>, radius: f64, v: &ArrayView1<'_, f64>) -> f64 {
    let n = m.nrows();
    let x = linalg::unvec(v, n, n).expect("direction length is n^2 by construction");
    let perturbed = m + &(x * radius);
    // A failed eigensolve cannot certify anything: treat as -inf.
    spectral_abscissa(&perturbed.view()).unwrap_or(f64::NEG_INFINITY)
}

/// Coordinate-descent style hill climbing on the unit sphere; true as soon
/// as the objective reaches the feasibility threshold.
fn local_search_reaches_threshold(m: &ArrayView2<'_, f64>, radius: f64, v0: Array1<f64>) -> bool {
    let dims = v0.len();
    let mut v = v0;
    let mut best = probe(m, radius, &v.view());
    if best >= -FEASIBILITY_SLACK {
        return true;
    }
    let mut h = 0.5f64;
    let mut evals = 0usize;
    const MAX_EVALS: usize = 1500;
    while h > 1e-4 && evals < MAX_EVALS {
        let mut improved = false;
        'sweep: for i in 0..dims {
            for sgn in [1.0f64, -1.0] {
                let mut w = v.clone();
                w[i] += sgn * h;
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    continue;
                }
                w.mapv_inplace(|x| x / norm);
                let fw = probe(m, radius, &w.view());
                evals += 1;
                if fw > best {
                    best = fw;
                    v = w;
                    improved = true;
                    if best >= -FEASIBILITY_SLACK {
                        return true;
                    }
                }
                if evals >= MAX_EVALS {
                    break 'sweep;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    false
}
