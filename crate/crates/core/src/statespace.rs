//! State-space models, feedback gains, perturbations, and the spectral tests
//! the rest of the crate is built on.
//!
//! A model is the triple `(A, B, C)` of `x' = A x + B u`, `y = C x` with
//! `A` of size `n x n`, `B` of size `n x m` and `C` of size `p x n`. Static
//! output feedback `u = F y` closes the loop to `A + B F C`; an additive
//! state-matrix perturbation `delta` shifts it to `A + delta + B F C`.
//!
//! Every algorithm downstream assumes `B` has full column rank and `C` full
//! row rank. [`validate`] checks exactly that and nothing else.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, MatrixId, Result};
use crate::linalg::{self, SvdTriplet};

pub use crate::linalg::spectral_abscissa;

/// A linear time-invariant model `(A, B, C)`.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    a: Array2<f64>,
    b: Array2<f64>,
    c: Array2<f64>,
}

impl StateSpaceModel {
    /// Builds a model, checking dimensional consistency only (rank conditions
    /// are the job of [`validate`]).
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] unless `A` is square `n x n` with
    /// `n >= 1`, `B` is `n x m` with `m >= 1`, and `C` is `p x n` with
    /// `p >= 1`.
    pub fn new(a: Array2<f64>, b: Array2<f64>, c: Array2<f64>) -> Result<Self> {
        let (ar, ac) = a.dim();
        if ar != ac || ar == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and non-empty, got {ar} x {ac}"
            )));
        }
        let n = ar;
        if b.nrows() != n || b.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "B must be {n} x m with m >= 1, got {} x {}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != n || c.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "C must be p x {n} with p >= 1, got {} x {}",
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(StateSpaceModel { a, b, c })
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `m`.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Output dimension `p`.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// State matrix `A`.
    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    /// Input matrix `B`.
    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    /// Output matrix `C`.
    pub fn c(&self) -> &Array2<f64> {
        &self.c
    }
}

/// Where a feedback gain came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// A stabilizing gain supplied for the unperturbed system.
    Nominal,
    /// Nominal gain plus a computed corrective update.
    Updated,
    /// Projected from a state-feedback gain.
    Projected,
    /// Loaded from external input without further qualification.
    External,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Provenance::Nominal => "nominal",
            Provenance::Updated => "updated",
            Provenance::Projected => "projected",
            Provenance::External => "external",
        };
        write!(f, "{s}")
    }
}

/// An `m x p` static output feedback gain together with its provenance.
#[derive(Debug, Clone)]
pub struct GainMatrix {
    matrix: Array2<f64>,
    provenance: Provenance,
}

impl GainMatrix {
    /// Wraps a gain matrix.
    ///
    /// # Errors
    ///
    /// [`Error::DimensionMismatch`] if the matrix is empty.
    pub fn new(matrix: Array2<f64>, provenance: Provenance) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::DimensionMismatch("gain matrix must be non-empty".into()));
        }
        Ok(GainMatrix { matrix, provenance })
    }

    /// The gain entries.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Where this gain came from.
    pub fn provenance(&self) -> Provenance {
        self.provenance
    }
}

/// An additive state-matrix perturbation with a norm bound.
///
/// Invariant: `0 <= fro_norm <= rho` (`fro_norm` is the actual Frobenius norm
/// of `delta`; `rho` is the bound it was admitted under).
#[derive(Debug, Clone)]
pub struct Perturbation {
    delta: Array2<f64>,
    fro_norm: f64,
    rho: f64,
}

impl Perturbation {
    /// Admits `delta` under the bound `rho`.
    ///
    /// A relative slack of `1e-12` absorbs rounding in norms that are exactly
    /// on the bound (a synthesized perturbation with `tau = 1` lands there);
    /// such norms are clamped to `rho` so the invariant holds exactly.
    ///
    /// # Errors
    ///
    /// * [`Error::DimensionMismatch`] if `delta` is not square or `rho` is
    ///   not a positive finite number.
    /// * [`Error::NormExceedsBound`] if `||delta||_F > rho` beyond slack.
    pub fn new(delta: Array2<f64>, rho: f64) -> Result<Self> {
        if delta.nrows() != delta.ncols() || delta.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "perturbation must be square and non-empty, got {} x {}",
                delta.nrows(),
                delta.ncols()
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
        }
        let norm = linalg::fro_norm(&delta.view());
        if norm > rho * (1.0 + 1e-12) {
            return Err(Error::NormExceedsBound { norm, rho });
        }
        Ok(Perturbation { delta, fro_norm: norm.min(rho), rho })
    }

    /// The perturbation matrix.
    pub fn delta(&self) -> &Array2<f64> {
        &self.delta
    }

    /// Frobenius norm of the perturbation.
    pub fn fro_norm(&self) -> f64 {
        self.fro_norm
    }

    /// The norm bound the perturbation was admitted under.
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Outcome of the rank checks on `(B, C)`.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Numerical rank of `B`.
    pub rank_b: usize,
    /// Numerical rank of `C`.
    pub rank_c: usize,
    /// Smallest singular value of `B` retained at the tolerance (0 if none).
    pub sigma_min_b: f64,
    /// Smallest singular value of `C` retained at the tolerance (0 if none).
    pub sigma_min_c: f64,
    /// Rank tolerance applied to `B`.
    pub tol_b: f64,
    /// Rank tolerance applied to `C`.
    pub tol_c: f64,
    /// Whether `B` has full column rank.
    pub b_full_column_rank: bool,
    /// Whether `C` has full row rank.
    pub c_full_row_rank: bool,
}

impl ValidationReport {
    /// Runs the rank checks. `rank_tol` overrides the default tolerance
    /// `eps * max(rows, cols) * sigma_max` for both matrices.
    ///
    /// # Errors
    ///
    /// [`Error::EigenFailure`] if an SVD fails to converge.
    pub fn compute(model: &StateSpaceModel, rank_tol: Option<f64>) -> Result<Self> {
        let (n, m, p) = (model.n(), model.m(), model.p());
        let sb = linalg::singular_values(&model.b.view())?;
        let sc = linalg::singular_values(&model.c.view())?;
        let tol_b =
            rank_tol.unwrap_or_else(|| linalg::default_rank_tol(n, m, sb.first().copied().unwrap_or(0.0)));
        let tol_c =
            rank_tol.unwrap_or_else(|| linalg::default_rank_tol(p, n, sc.first().copied().unwrap_or(0.0)));
        let rank_b = linalg::rank_from_singular_values(&sb.view(), tol_b);
        let rank_c = linalg::rank_from_singular_values(&sc.view(), tol_c);
        let sigma_min_b = if rank_b > 0 { sb[rank_b - 1] } else { 0.0 };
        let sigma_min_c = if rank_c > 0 { sc[rank_c - 1] } else { 0.0 };
        Ok(ValidationReport {
            rank_b,
            rank_c,
            sigma_min_b,
            sigma_min_c,
            tol_b,
            tol_c,
            b_full_column_rank: rank_b == m,
            c_full_row_rank: rank_c == p,
        })
    }

    /// True when both rank assumptions hold.
    pub fn passes(&self) -> bool {
        self.b_full_column_rank && self.c_full_row_rank
    }
}

/// Checks the standing rank assumptions: `B` full column rank, `C` full row
/// rank. Returns the detailed report on success.
///
/// # Errors
///
/// * [`Error::RankDeficient`] naming the offending matrix if either check
///   fails (`B` is reported first if both fail).
/// * [`Error::EigenFailure`] if an SVD fails to converge.
pub fn validate(model: &StateSpaceModel, rank_tol: Option<f64>) -> Result<ValidationReport> {
    let report = ValidationReport::compute(model, rank_tol)?;
    if !report.b_full_column_rank {
        return Err(Error::RankDeficient {
            matrix: MatrixId::B,
            rank: report.rank_b,
            required: model.m(),
            tol: report.tol_b,
        });
    }
    if !report.c_full_row_rank {
        return Err(Error::RankDeficient {
            matrix: MatrixId::C,
            rank: report.rank_c,
            required: model.p(),
            tol: report.tol_c,
        });
    }
    Ok(report)
}

/// Closed-loop state matrix `A + delta + B F C` (`delta` omitted if `None`).
///
/// # Errors
///
/// [`Error::DimensionMismatch`] if the gain is not `m x p` or the
/// perturbation is not `n x n`.
pub fn closed_loop(
    model: &StateSpaceModel,
    gain: &GainMatrix,
    delta: Option<&Perturbation>,
) -> Result<Array2<f64>> {
    let (n, m, p) = (model.n(), model.m(), model.p());
    let f = gain.matrix();
    if f.dim() != (m, p) {
        return Err(Error::DimensionMismatch(format!(
            "gain must be {m} x {p}, got {} x {}",
            f.nrows(),
            f.ncols()
        )));
    }
    let mut closed = model.a.clone() + model.b.dot(f).dot(&model.c);
    if let Some(pert) = delta {
        if pert.delta().dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "perturbation must be {n} x {n}, got {} x {}",
                pert.delta().nrows(),
                pert.delta().ncols()
            )));
        }
        closed += pert.delta();
    }
    Ok(closed)
}

/// Strict Hurwitz test with a stability margin: true iff the spectral
/// abscissa satisfies `alpha(M) < -margin`.
///
/// A marginal matrix (`alpha = 0`, e.g. an undamped oscillator) is reported
/// as NOT Hurwitz: the guarantees downstream are all strict.
///
/// # Errors
///
/// * [`Error::Domain`] if `margin` is negative or not finite.
/// * Whatever [`spectral_abscissa`] reports.
pub fn is_hurwitz(m: &ArrayView2<'_, f64>, margin: f64) -> Result<bool> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::Domain(format!(
            "stability margin must be finite and >= 0, got {margin}"
        )));
    }
    Ok(spectral_abscissa(m)? < -margin)
}

/// Projects a state-feedback gain `K` (`m x n`) onto output feedback:
/// `F = K C^+ = K C^T (C C^T)^{-1}`, the least-squares solution of
/// `F C ~= K`. Exact (`F C = K`) whenever the rows of `K` lie in the row
/// space of `C` — in particular when `C` is square invertible.
///
/// # Errors
///
/// * [`Error::DimensionMismatch`] if `K` and `C` disagree on `n`.
/// * [`Error::RankDeficient`] if `C` lacks full row rank.
/// * [`Error::EigenFailure`] if the SVD fails to converge.
pub fn project_state_feedback(
    k: &ArrayView2<'_, f64>,
    c: &ArrayView2<'_, f64>,
) -> Result<GainMatrix> {
    let (m, n) = k.dim();
    let (p, nc) = c.dim();
    if n != nc || m == 0 || p == 0 {
        return Err(Error::DimensionMismatch(format!(
            "K is {m} x {n} but C is {p} x {nc}; need matching state dimension and non-empty matrices"
        )));
    }
    let svd = SvdTriplet::full(c)?;
    let tol = linalg::default_rank_tol(p, n, svd.s.first().copied().unwrap_or(0.0));
    let rank = svd.rank(tol);
    if rank < p {
        return Err(Error::RankDeficient { matrix: MatrixId::C, rank, required: p, tol });
    }
    let f = k.dot(&svd.pinv(tol));
    GainMatrix::new(f, Provenance::Projected)
}
