//! Randomized stability maps over the normalized perturbation square.
//!
//! A scan tiles `(tau, theta) in (0, 1] x [0, 1]` with cell centers, draws
//! one random perturbation per cell at exactly those coordinates, applies
//! the optimal gain correction, and records the guarantee (region
//! membership, equivalently closed-form residual strictly below the
//! certificate level) next to the ground truth (the corrected closed loop's
//! eigenvalues). With an exact certificate level the guarantee is sound:
//! no cell may be guaranteed yet unstable.
//!
//! Scans are deterministic for a fixed seed regardless of worker threads:
//! every cell draws from its own counter-keyed stream and results are
//! collected in grid order.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::perturb::{self, PerturbationCoords};
use crate::region::StabilityRegion;
use crate::statespace::{closed_loop, is_hurwitz, spectral_abscissa, GainMatrix, StateSpaceModel};
use crate::streams;
use crate::update::{self, CancellationBasis};

/// Grid shape: cell centers `(i + 0.5) / n_tau` by `(j + 0.5) / n_theta`,
/// which keeps `tau` strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub n_tau: usize,
    pub n_theta: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_tau: 41, n_theta: 41 }
    }
}

/// One scanned cell.
#[derive(Debug, Clone)]
pub struct ScanCell {
    /// Radius-coordinate cell center.
    pub tau: f64,
    /// Alignment-coordinate cell center.
    pub theta: f64,
    /// Closed-form residual cost `(rho sin(pi tau/2) sin(pi theta/2))^2`.
    pub j_closed: f64,
    /// Residual cost actually left by the optimal correction of the drawn
    /// matrix.
    pub j_residual: f64,
    /// Spectral abscissa of the corrected closed loop.
    pub alpha_closed: f64,
    /// Region membership at the cell center: the stability guarantee.
    pub guaranteed: bool,
    /// Ground truth: the corrected loop is Hurwitz.
    pub exact_stable: bool,
}

/// A completed scan.
#[derive(Debug, Clone)]
pub struct ScanGrid {
    /// Radius-coordinate cell centers, strictly increasing in `(0, 1]`.
    pub taus: Vec<f64>,
    /// Alignment-coordinate cell centers, strictly increasing in `[0, 1]`.
    pub thetas: Vec<f64>,
    /// Stream seed the perturbations were drawn from.
    pub seed: u64,
    /// Perturbation budget.
    pub rho: f64,
    /// Certificate level the guarantees were issued against.
    pub beta: f64,
    /// Row-major cells: index `i * thetas.len() + j`.
    pub cells: Vec<ScanCell>,
}

/// Aggregate cell fractions of a scan.
#[derive(Debug, Clone, Copy)]
pub struct RegionFraction {
    /// Fraction of cells covered by the guarantee — a Riemann estimate of
    /// the region area.
    pub guaranteed_frac: f64,
    /// Fraction of cells whose corrected loop was actually Hurwitz.
    pub exact_frac: f64,
}

impl ScanGrid {
    /// Guaranteed-but-unstable cells. Soundness of the certificate means 0
    /// whenever `beta` really lower-bounds the distance to instability; an
    /// inflated `beta` can make this positive.
    pub fn violation_count(&self) -> usize {
        self.cells.iter().filter(|c| c.guaranteed && !c.exact_stable).count()
    }
}

/// Cell fractions flagged guaranteed / exactly stable.
///
/// # Errors
///
/// [`Error::EmptyGrid`] when the grid has no cells.
pub fn region_fraction(grid: &ScanGrid) -> Result<RegionFraction> {
    if grid.cells.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let total = grid.cells.len() as f64;
    let guaranteed = grid.cells.iter().filter(|c| c.guaranteed).count() as f64;
    let exact = grid.cells.iter().filter(|c| c.exact_stable).count() as f64;
    Ok(RegionFraction { guaranteed_frac: guaranteed / total, exact_frac: exact / total })
}

/// Run a full scan: one random perturbation per cell (streams keyed by
/// `(seed, i, j)`), corrected, certified against `beta`, and ground-truthed
/// through the corrected closed loop's eigenvalues.
///
/// # Errors
///
/// * [`Error::EmptyGrid`] for a zero-sized grid.
/// * [`Error::Domain`] for non-positive `rho` or `beta`.
/// * [`Error::NotStable`] if the nominal closed loop is not Hurwitz —
///   guarantees are relative to a stable starting point.
/// * [`Error::DegenerateCoverage`] when `m p = n^2` (no residual directions
///   exist, so off-axis alignments are unreachable).
/// * Dimension/rank errors from the underlying factorizations.
pub fn scan(
    model: &StateSpaceModel,
    f_nominal: &GainMatrix,
    rho: f64,
    beta: f64,
    grid: GridSpec,
    seed: u64,
) -> Result<ScanGrid> {
    if grid.n_tau == 0 || grid.n_theta == 0 {
        return Err(Error::EmptyGrid);
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive and finite, got {beta}")));
    }
    let nominal_loop = closed_loop(model, f_nominal, None)?;
    if !is_hurwitz(&nominal_loop.view(), 0.0)? {
        return Err(Error::NotStable { alpha: spectral_abscissa(&nominal_loop.view())? });
    }
    let basis = CancellationBasis::new(&model.b().view(), &model.c().view())?;
    if basis.residual_dim() == 0 {
        return Err(Error::DegenerateCoverage);
    }
    let region = StabilityRegion::new(beta, rho)?;

    let taus: Vec<f64> = (0..grid.n_tau).map(|i| (i as f64 + 0.5) / grid.n_tau as f64).collect();
    let thetas: Vec<f64> =
        (0..grid.n_theta).map(|j| (j as f64 + 0.5) / grid.n_theta as f64).collect();

    let n_theta = grid.n_theta;
    let cells: Vec<ScanCell> = (0..grid.n_tau * n_theta)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / n_theta, idx % n_theta);
            scan_cell(model, f_nominal, &basis, &region, rho, beta, taus[i], thetas[j], seed, i, j)
        })
        .collect::<Result<_>>()?;

    Ok(ScanGrid { taus, thetas, seed, rho, beta, cells })
}

#[allow(clippy::too_many_arguments)]
fn scan_cell(
    model: &StateSpaceModel,
    f_nominal: &GainMatrix,
    basis: &CancellationBasis,
    region: &StabilityRegion,
    rho: f64,
    beta: f64,
    tau: f64,
    theta: f64,
    seed: u64,
    i: usize,
    j: usize,
) -> Result<ScanCell> {
    let mut rng = streams::substream(seed, &[i as u64, j as u64]);
    let phi_c = streams::unit_vector(&mut rng, basis.cancellable_dim());
    let phi_s = streams::unit_vector(&mut rng, basis.residual_dim());
    let coords = PerturbationCoords::new(rho, tau, theta, phi_c, phi_s)?;
    let pert = perturb::synthesize(basis, &coords)?;
    let outcome = update::apply_update(model, f_nominal, &pert, Some(beta))?;
    Ok(ScanCell {
        tau,
        theta,
        j_closed: perturb::closed_form_cost(rho, tau, theta)?,
        j_residual: outcome.j_star,
        alpha_closed: outcome.alpha_closed,
        guaranteed: region.contains(tau, theta)?,
        exact_stable: outcome.alpha_closed < 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdrp;
    use crate::statespace::Provenance;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn fixture() -> (StateSpaceModel, GainMatrix, f64) {
        // Open loop symmetric and stable; with F = 0 the closed loop is the
        // open loop, so the certificate level is exact.
        let a = array![[-1.0, 0.2, 0.0], [0.2, -2.0, 0.1], [0.0, 0.1, -1.5]];
        let b = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let c = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let model = StateSpaceModel::new(a.clone(), b, c).unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let beta = mdrp::symmetric_exact(&a.view(), None).unwrap();
        (model, f, beta)
    }

    #[test]
    fn cell_centers_tile_the_open_square() {
        let (model, f, beta) = fixture();
        let grid = GridSpec { n_tau: 4, n_theta: 5 };
        let result = scan(&model, &f, 2.0 * beta, beta, grid, 7).unwrap();
        assert_eq!(result.cells.len(), 20);
        assert_eq!(result.taus, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(result.thetas, vec![0.1, 0.3, 0.5, 0.7, 0.9]);
        assert_abs_diff_eq!(result.cells[0].tau, 0.125, epsilon = 0.0);
        assert_abs_diff_eq!(result.cells[0].theta, 0.1, epsilon = 0.0);
        let last = result.cells.last().unwrap();
        assert_abs_diff_eq!(last.tau, 0.875, epsilon = 0.0);
        assert_abs_diff_eq!(last.theta, 0.9, epsilon = 0.0);
    }

    #[test]
    fn scan_is_deterministic_for_a_fixed_seed() {
        let (model, f, beta) = fixture();
        let grid = GridSpec { n_tau: 6, n_theta: 6 };
        let a = scan(&model, &f, 1.5 * beta, beta, grid, 123).unwrap();
        let b = scan(&model, &f, 1.5 * beta, beta, grid, 123).unwrap();
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.j_residual.to_bits(), y.j_residual.to_bits());
            assert_eq!(x.alpha_closed.to_bits(), y.alpha_closed.to_bits());
            assert_eq!(x.guaranteed, y.guaranteed);
        }
        let c = scan(&model, &f, 1.5 * beta, beta, grid, 124).unwrap();
        assert!(
            a.cells.iter().zip(&c.cells).any(|(x, y)| x.j_residual != y.j_residual),
            "a different seed must draw different perturbations"
        );
    }

    #[test]
    fn per_cell_costs_match_the_closed_form() {
        let (model, f, beta) = fixture();
        let result = scan(&model, &f, 2.0 * beta, beta, GridSpec { n_tau: 5, n_theta: 5 }, 3)
            .unwrap();
        for cell in &result.cells {
            assert!(
                (cell.j_residual - cell.j_closed).abs() <= 1e-8 * cell.j_closed.max(1.0),
                "cell ({}, {}): J_residual {} vs J_closed {}",
                cell.tau,
                cell.theta,
                cell.j_residual,
                cell.j_closed
            );
        }
    }

    #[test]
    fn guarantee_is_sound_at_an_exact_level_and_below_corner_cells_are_guaranteed() {
        let (model, f, beta) = fixture();
        let rho = 1.8 * beta;
        let result = scan(&model, &f, rho, beta, GridSpec { n_tau: 11, n_theta: 11 }, 42).unwrap();
        assert_eq!(result.violation_count(), 0);
        let region = StabilityRegion::new(beta, rho).unwrap();
        for cell in &result.cells {
            if cell.tau < region.kappa() {
                assert!(cell.guaranteed, "cells below the corner are always guaranteed");
            }
        }
        let frac = region_fraction(&result).unwrap();
        assert!(frac.guaranteed_frac > 0.0 && frac.guaranteed_frac < 1.0);
        assert!(frac.exact_frac >= frac.guaranteed_frac);
    }

    #[test]
    fn fractions_track_region_area_as_the_grid_refines() {
        let (model, f, beta) = fixture();
        let rho = 2.0 * beta;
        let region = StabilityRegion::new(beta, rho).unwrap();
        let area = region.xi().unwrap();
        let fine = scan(&model, &f, rho, beta, GridSpec { n_tau: 101, n_theta: 101 }, 5).unwrap();
        let frac = region_fraction(&fine).unwrap();
        assert!(
            (frac.guaranteed_frac - area).abs() < 2.0 / 101.0,
            "fraction {} vs area {area}",
            frac.guaranteed_frac
        );
    }

    #[test]
    fn unstable_nominal_loop_is_refused() {
        let a = array![[0.5, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
        let b = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let c = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let model = StateSpaceModel::new(a, b, c).unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let r = scan(&model, &f, 1.0, 0.5, GridSpec::default(), 0);
        assert!(matches!(r, Err(Error::NotStable { .. })));
    }

    #[test]
    fn empty_grid_and_bad_scalars_are_rejected() {
        let (model, f, beta) = fixture();
        assert!(matches!(
            scan(&model, &f, 1.0, beta, GridSpec { n_tau: 0, n_theta: 5 }, 0),
            Err(Error::EmptyGrid)
        ));
        assert!(matches!(
            scan(&model, &f, -1.0, beta, GridSpec::default(), 0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            scan(&model, &f, 1.0, 0.0, GridSpec::default(), 0),
            Err(Error::Domain(_))
        ));
        let empty = ScanGrid {
            taus: vec![],
            thetas: vec![],
            seed: 0,
            rho: 1.0,
            beta: 1.0,
            cells: vec![],
        };
        assert!(matches!(region_fraction(&empty), Err(Error::EmptyGrid)));
    }

    #[test]
    fn square_invertible_sensing_has_no_residual_directions() {
        let a = array![[-1.0, 0.0], [0.0, -2.0]];
        let model = StateSpaceModel::new(a, Array2::eye(2), Array2::eye(2)).unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let r = scan(&model, &f, 1.0, 0.5, GridSpec::default(), 0);
        assert!(matches!(r, Err(Error::DegenerateCoverage)));
    }

    #[test]
    fn inflated_certificate_reports_rather_than_hides_violations() {
        // Strongly non-normal closed loop: the easy upper bound overshoots
        // the true distance, so guarantees issued against it may fail; the
        // scan's job is to count those cells, not to prevent them.
        let a = array![[-0.05, 4.0, 0.0], [0.0, -0.05, 0.0], [0.0, 0.0, -1.0]];
        let b = array![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]];
        let c = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let model = StateSpaceModel::new(a.clone(), b, c).unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let inflated = mdrp::upper_bound(&a.view()).unwrap();
        let result =
            scan(&model, &f, 2.0 * inflated, inflated, GridSpec { n_tau: 15, n_theta: 15 }, 9)
                .unwrap();
        // Bookkeeping is consistent regardless of how many violations the
        // seed produced.
        let guaranteed = result.cells.iter().filter(|c| c.guaranteed).count();
        assert!(result.violation_count() <= guaranteed);
        let frac = region_fraction(&result).unwrap();
        assert!(frac.guaranteed_frac > 0.0);
    }
}
