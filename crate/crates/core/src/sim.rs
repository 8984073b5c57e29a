//! Closed-loop time simulation with a fixed-step fourth-order Runge–Kutta
//! integrator, plus the relative control-input error metric for comparing
//! two runs.
//!
//! The loop `x' = (A + Delta + B F C) x` is linear and autonomous, so the
//! integrator is the classic RK4 update with a constant matrix; the module
//! refuses steps too coarse for the system's fastest scale rather than
//! silently producing garbage.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg;
use crate::statespace::{closed_loop, GainMatrix, Perturbation, StateSpaceModel};

/// A completed simulation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Sample times `0, dt, 2 dt, …` (`steps + 1` entries).
    pub times: Vec<f64>,
    /// State samples `x`, one row per time.
    pub states: Array2<f64>,
    /// Feedback inputs `u = F y = F C x`, one row per time.
    pub inputs: Array2<f64>,
    /// Measured outputs `y = C x`, one row per time.
    pub outputs: Array2<f64>,
    /// Step size used.
    pub dt: f64,
}

impl Trajectory {
    /// Euclidean norm of the final state.
    pub fn final_norm(&self) -> f64 {
        self.states.row(self.states.nrows() - 1).iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Number of integration steps taken.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }
}

/// Integrate the closed loop from `x0` with step `dt` up to the last full
/// step not exceeding `t_end` (so `floor(t_end / dt)` steps, with a small
/// relative slack so a `t_end` that is an exact multiple of `dt` lands on
/// the final time instead of losing a step to roundoff).
///
/// # Errors
///
/// * [`Error::Domain`] for non-positive/non-finite `dt`, `t_end < dt`, or
///   an `x0` of the wrong length.
/// * [`Error::StepTooLarge`] when `dt * sigma_max(M) > 1` for the closed
///   loop `M`: RK4 would run far outside its accuracy (and close to its
///   stability) range. The error carries the offending product and the
///   largest admissible step.
/// * Dimension errors from the closed-loop assembly.
pub fn simulate(
    model: &StateSpaceModel,
    gain: &GainMatrix,
    perturbation: Option<&Perturbation>,
    x0: &ArrayView1<'_, f64>,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive and finite, got {dt}")));
    }
    if !(t_end >= dt && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end must be finite and at least one step (dt = {dt}), got {t_end}"
        )));
    }
    if x0.len() != model.n() {
        return Err(Error::DimensionMismatch(format!(
            "initial state has length {}, the model needs {}",
            x0.len(),
            model.n()
        )));
    }

    let m = closed_loop(model, gain, perturbation)?;
    let sigma_max = linalg::spectral_norm(&m.view())?;
    let product = dt * sigma_max;
    if product > 1.0 {
        return Err(Error::StepTooLarge { product, max_dt: 1.0 / sigma_max });
    }

    let fc = gain.matrix().dot(model.c());

    let steps = (t_end / dt + 1e-9).floor() as usize;
    let n = model.n();
    let mut states = Array2::zeros((steps + 1, n));
    let mut inputs = Array2::zeros((steps + 1, fc.nrows()));
    let mut outputs = Array2::zeros((steps + 1, model.p()));
    let mut times = Vec::with_capacity(steps + 1);

    let mut x: Array1<f64> = x0.to_owned();
    for step in 0..=steps {
        times.push(step as f64 * dt);
        states.row_mut(step).assign(&x);
        outputs.row_mut(step).assign(&model.c().dot(&x));
        inputs.row_mut(step).assign(&fc.dot(&x));
        if step == steps {
            break;
        }
        let k1 = m.dot(&x);
        let k2 = m.dot(&(&x + &(&k1 * (dt / 2.0))));
        let k3 = m.dot(&(&x + &(&k2 * (dt / 2.0))));
        let k4 = m.dot(&(&x + &(&k3 * dt)));
        x = &x + &((&k1 + &(&k2 * 2.0) + &(&k3 * 2.0) + &k4) * (dt / 6.0));
    }

    Ok(Trajectory { times, states, inputs, outputs, dt })
}

/// Per-sample relative error (in percent) between the control inputs of two
/// runs: `100 ||u_a(t) - u_b(t)|| / ||u_b(t)||`, with NaN wherever the
/// reference input norm is at or below `1e-12`.
///
/// # Errors
///
/// [`Error::GridMismatch`] unless the two trajectories share the same time
/// grid and input width.
pub fn input_relative_error(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>> {
    if a.times.len() != b.times.len()
        || a.times.iter().zip(&b.times).any(|(x, y)| x != y)
    {
        return Err(Error::GridMismatch(format!(
            "time grids differ ({} vs {} samples)",
            a.times.len(),
            b.times.len()
        )));
    }
    if a.inputs.ncols() != b.inputs.ncols() {
        return Err(Error::GridMismatch(format!(
            "input widths differ ({} vs {})",
            a.inputs.ncols(),
            b.inputs.ncols()
        )));
    }
    Ok((0..a.times.len())
        .map(|k| {
            let norm = |row: ndarray::ArrayView1<'_, f64>| {
                row.iter().map(|x| x * x).sum::<f64>().sqrt()
            };
            let denom = norm(b.inputs.row(k));
            if denom <= 1e-12 {
                f64::NAN
            } else {
                let diff: Array1<f64> = &a.inputs.row(k) - &b.inputs.row(k);
                100.0 * norm(diff.view()) / denom
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Provenance;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};

    fn scalar_model(a: f64) -> (StateSpaceModel, GainMatrix) {
        let model = StateSpaceModel::new(array![[a]], array![[1.0]], array![[1.0]]).unwrap();
        let f = GainMatrix::new(Array2::zeros((1, 1)), Provenance::Nominal).unwrap();
        (model, f)
    }

    #[test]
    fn scalar_decay_matches_the_exponential() {
        let (model, f) = scalar_model(-1.0);
        let traj = simulate(&model, &f, None, &array![1.0].view(), 1.0, 1e-3).unwrap();
        assert_eq!(traj.steps(), 1000);
        assert_abs_diff_eq!(traj.times[1000], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(traj.states[(1000, 0)], (-1.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn planar_spiral_matches_the_matrix_exponential() {
        // M = [[a, -w], [w, a]] has exp(tM) = e^{at} rotation(wt): an
        // analytic oracle with genuinely coupled coordinates.
        let (a, w) = (-0.5, 2.0);
        let model = StateSpaceModel::new(
            array![[a, -w], [w, a]],
            Array2::eye(2),
            Array2::eye(2),
        )
        .unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let t = 1.5;
        let traj = simulate(&model, &f, None, &array![1.0, 0.0].view(), t, 1e-3).unwrap();
        let scale = (a * t).exp();
        let k = traj.steps();
        assert_abs_diff_eq!(traj.states[(k, 0)], scale * (w * t).cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(traj.states[(k, 1)], scale * (w * t).sin(), epsilon = 1e-9);
    }

    #[test]
    fn convergence_is_fourth_order() {
        let (a, w) = (-0.5, 2.0);
        let model = StateSpaceModel::new(
            array![[a, -w], [w, a]],
            Array2::eye(2),
            Array2::eye(2),
        )
        .unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let t = 1.0;
        let exact = array![(a * t).exp() * (w * t).cos(), (a * t).exp() * (w * t).sin()];
        let err = |dt: f64| {
            let traj = simulate(&model, &f, None, &array![1.0, 0.0].view(), t, dt).unwrap();
            let k = traj.steps();
            ((traj.states[(k, 0)] - exact[0]).powi(2) + (traj.states[(k, 1)] - exact[1]).powi(2))
                .sqrt()
        };
        let e1 = err(0.02);
        let e2 = err(0.01);
        let order = (e1 / e2).log2();
        assert!((3.7..4.3).contains(&order), "observed order {order} (errors {e1:.3e}/{e2:.3e})");
    }

    #[test]
    fn inputs_and_outputs_follow_the_feedback_law_along_the_path() {
        let a = array![[-1.0, 0.5], [0.0, -2.0]];
        let b = array![[1.0], [1.0]];
        let c = array![[1.0, 1.0]];
        let model = StateSpaceModel::new(a, b, c.clone()).unwrap();
        let f = GainMatrix::new(array![[-0.3]], Provenance::Nominal).unwrap();
        let traj = simulate(&model, &f, None, &array![1.0, -1.0].view(), 0.5, 0.05).unwrap();
        let fc = f.matrix().dot(&c);
        for step in 0..=traj.steps() {
            let x = traj.states.row(step);
            assert_abs_diff_eq!(traj.inputs[(step, 0)], fc.dot(&x)[0], epsilon = 1e-14);
            assert_abs_diff_eq!(traj.outputs[(step, 0)], c.dot(&x)[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn stable_loop_decays_monotonically_for_a_symmetric_matrix() {
        let a = array![[-1.0, 0.2], [0.2, -2.0]];
        let model = StateSpaceModel::new(a, Array2::eye(2), Array2::eye(2)).unwrap();
        let f = GainMatrix::new(Array2::zeros((2, 2)), Provenance::Nominal).unwrap();
        let traj = simulate(&model, &f, None, &array![1.0, 1.0].view(), 5.0, 0.01).unwrap();
        let mut prev = f64::INFINITY;
        for step in 0..=traj.steps() {
            let norm = traj.states.row(step).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm < prev, "norm must strictly decay for a symmetric Hurwitz loop");
            prev = norm;
        }
        assert!(traj.final_norm() < 1e-2);
    }

    #[test]
    fn perturbation_enters_the_dynamics() {
        let (model, f) = scalar_model(-1.0);
        // Delta = -1 doubles the decay rate.
        let pert = Perturbation::new(array![[-1.0]], 1.5).unwrap();
        let traj = simulate(&model, &f, Some(&pert), &array![1.0].view(), 1.0, 1e-3).unwrap();
        assert_abs_diff_eq!(traj.states[(traj.steps(), 0)], (-2.0f64).exp(), epsilon = 1e-6);
    }

    #[test]
    fn coarse_steps_are_refused_with_a_usable_bound() {
        let (model, f) = scalar_model(-50.0);
        let err = simulate(&model, &f, None, &array![1.0].view(), 1.0, 0.1).unwrap_err();
        match err {
            Error::StepTooLarge { product, max_dt } => {
                assert_abs_diff_eq!(product, 5.0, epsilon = 1e-12);
                assert_abs_diff_eq!(max_dt, 0.02, epsilon = 1e-12);
            }
            other => panic!("expected StepTooLarge, got {other:?}"),
        }
        assert!(simulate(&model, &f, None, &array![1.0].view(), 0.1, 0.019).is_ok());
    }

    #[test]
    fn partial_trailing_step_is_dropped() {
        let (model, f) = scalar_model(-1.0);
        let traj = simulate(&model, &f, None, &array![1.0].view(), 0.95, 0.1).unwrap();
        assert_eq!(traj.steps(), 9);
        assert_abs_diff_eq!(traj.times[9], 0.9, epsilon = 1e-12);
        // An exact multiple is not a step short.
        let traj = simulate(&model, &f, None, &array![1.0].view(), 0.9, 0.1).unwrap();
        assert_eq!(traj.steps(), 9);
    }

    #[test]
    fn relative_input_error_examples() {
        let a = array![[-1.0, 0.5], [0.0, -2.0]];
        let b = array![[1.0], [1.0]];
        let c = array![[1.0, 1.0]];
        let model = StateSpaceModel::new(a, b, c).unwrap();
        let f = GainMatrix::new(array![[-0.3]], Provenance::Nominal).unwrap();
        let x0 = array![1.0, -0.5];
        let traj = simulate(&model, &f, None, &x0.view(), 1.0, 0.01).unwrap();

        // Identical runs: all zeros.
        let zeros = input_relative_error(&traj, &traj).unwrap();
        assert!(zeros.iter().all(|&e| e == 0.0));

        // A pointwise 0.3% inflation: constant 0.3.
        let mut scaled = traj.clone();
        scaled.inputs.mapv_inplace(|u| 1.003 * u);
        let errs = input_relative_error(&scaled, &traj).unwrap();
        for e in errs {
            assert_abs_diff_eq!(e, 0.3, epsilon = 1e-10);
        }

        // Vanishing reference inputs are flagged, not divided by.
        let mut still = traj.clone();
        still.inputs.fill(0.0);
        let flagged = input_relative_error(&traj, &still).unwrap();
        assert!(flagged.iter().all(|e| e.is_nan()));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let (model, f) = scalar_model(-1.0);
        let a = simulate(&model, &f, None, &array![1.0].view(), 1.0, 0.1).unwrap();
        let b = simulate(&model, &f, None, &array![1.0].view(), 1.0, 0.05).unwrap();
        assert!(matches!(input_relative_error(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn domain_validation() {
        let (model, f) = scalar_model(-1.0);
        let x0 = array![1.0];
        assert!(matches!(
            simulate(&model, &f, None, &x0.view(), 1.0, 0.0),
            Err(Error::Domain(_))
        ));
        // Horizons shorter than one step are refused.
        assert!(matches!(
            simulate(&model, &f, None, &x0.view(), 0.05, 0.1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            simulate(&model, &f, None, &array![1.0, 2.0].view(), 1.0, 0.1),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
