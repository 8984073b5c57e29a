//! Adaptive Gauss–Kronrod (7, 15) quadrature on a finite interval.
//!
//! Worst-interval-first bisection with the classic 15-point Kronrod rule per
//! panel; node and weight tables are the standard double-precision values,
//! and the per-panel error estimate uses the usual `(200 |gk - g|)^(3/2)`
//! damping so smooth integrands converge at the Kronrod rate.

// The node/weight tables are quoted at their full published precision; the
// compiler rounds them to the nearest double.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

/// Kronrod nodes (positive half; the rule is symmetric about 0).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];

/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

/// Gauss weights for the embedded 7-point rule (nodes are the odd-indexed
/// entries of `XGK`).
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One successful integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    /// Integral estimate.
    pub value: f64,
    /// Accumulated error estimate (absolute).
    pub abs_error: f64,
    /// Panels in the final subdivision.
    pub intervals: usize,
}

/// Single (7, 15) panel on `[a, b]`: returns (kronrod, error_estimate).
fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center);
    let mut result_gauss = 0.0;
    let mut result_kronrod = fc * WGK[7];
    // Odd 15-point index = 7-point Gauss node; center carries WG[3].
    result_gauss += fc * WG[3];
    // Mean-magnitude accumulator for the roundoff floor.
    let mut resabs = result_kronrod.abs();

    let mut fv = [0.0f64; 7]; // |f(left)| + |f(right)| per positive node, for resasc
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        let sum = f1 + f2;
        result_kronrod += WGK[j] * sum;
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            result_gauss += WG[j / 2] * sum;
        }
        fv[j] = sum;
    }

    // Deviation of f from its panel mean, for scale-aware damping.
    let mean = result_kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * (fv[j] - 2.0 * mean).abs();
    }
    let value = result_kronrod * half;
    resasc *= half.abs();
    let resabs_scaled = resabs * half.abs();

    let raw = ((result_kronrod - result_gauss) * half).abs();
    let mut err = raw;
    if resasc != 0.0 && raw != 0.0 {
        err = resasc * 1.0f64.min((200.0 * raw / resasc).powf(1.5));
    }
    let floor = f64::EPSILON * 50.0 * resabs_scaled;
    if floor > f64::MIN_POSITIVE / (f64::EPSILON * 50.0) {
        err = err.max(floor);
    }
    (value, err)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `abs_tol`.
///
/// `a > b` integrates with the usual sign flip; `a == b` returns 0 with no
/// evaluations. Subdivision always splits the interval with the largest
/// error estimate.
///
/// # Errors
///
/// * [`Error::Domain`] for non-finite endpoints or a non-positive `abs_tol`.
/// * [`Error::QuadratureFailure`] when `max_intervals` panels cannot reach
///   the tolerance, or the integrand produced a non-finite panel value.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("integration endpoints must be finite, got [{a}, {b}]")));
    }
    if !(abs_tol > 0.0 && abs_tol.is_finite()) {
        return Err(Error::Domain(format!("quadrature tolerance must be positive, got {abs_tol}")));
    }
    if a == b {
        return Ok(QuadResult { value: 0.0, abs_error: 0.0, intervals: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    // (neg_error, a, b, value, error); BinaryHeap is a max-heap, so ordering
    // by error directly pops the worst panel first. f64 comparisons go
    // through to_bits on non-negative values to stay total.
    struct Panel {
        a: f64,
        b: f64,
        value: f64,
        error: f64,
    }
    impl PartialEq for Panel {
        fn eq(&self, other: &Self) -> bool {
            self.error == other.error
        }
    }
    impl Eq for Panel {}
    impl PartialOrd for Panel {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Panel {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.error.total_cmp(&other.error)
        }
    }

    let mut heap = std::collections::BinaryHeap::new();
    let (v, e) = panel(&f, lo, hi);
    if !v.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "integrand produced a non-finite panel value on [{lo}, {hi}]"
        )));
    }
    heap.push(Panel { a: lo, b: hi, value: v, error: e });
    let mut total_value = v;
    let mut total_error = e;

    while total_error > abs_tol {
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "error {total_error:.3e} still above tolerance {abs_tol:.3e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty while error is positive");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at machine resolution: cannot split further.
            return Err(Error::QuadratureFailure(format!(
                "interval [{:.17e}, {:.17e}] cannot be subdivided further (error {:.3e})",
                worst.a, worst.b, total_error
            )));
        }
        let (v1, e1) = panel(&f, worst.a, mid);
        let (v2, e2) = panel(&f, mid, worst.b);
        if !v1.is_finite() || !v2.is_finite() {
            return Err(Error::QuadratureFailure(format!(
                "integrand produced a non-finite panel value near {mid}"
            )));
        }
        total_value += v1 + v2 - worst.value;
        total_error += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }

    Ok(QuadResult {
        value: sign * total_value,
        abs_error: total_error,
        intervals: heap.len(),
    })
}
