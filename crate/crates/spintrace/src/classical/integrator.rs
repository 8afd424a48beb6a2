//! Adaptive Dormand-Prince 5(4) integrator over complex state vectors.
//!
//! The augmented flow state (coordinates, action, tangent matrix columns) is
//! integrated as one flat `Vec<C64>`. After each accepted step a hook may
//! mutate the state in place (chart switches); dense output is not needed
//! because callers only consume accepted-step endpoints and exact final times.

use crate::C64;
use crate::error::{Result, SpinError};

/// Controls for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h_initial: f64,
    pub h_max: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-10, atol: 1e-12, h_initial: 1e-3, h_max: f64::INFINITY }
    }
}

const MIN_STEP: f64 = 1e-14;

// Dormand-Prince RK5(4)7M coefficients.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
// 5th-order weights coincide with the last A row (FSAL); 4th-order weights:
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrate `dy/dt = f(t, y)` from `t0` to `t1` (either direction).
///
/// `on_accept(t, y)` runs after every accepted step and may mutate `y`;
/// returning `true` invalidates the FSAL derivative cache.
pub fn integrate<F, G>(
    f: F,
    t0: f64,
    t1: f64,
    y: &mut Vec<C64>,
    ctrl: &StepControl,
    mut on_accept: G,
) -> Result<()>
where
    F: Fn(f64, &[C64]) -> Result<Vec<C64>>,
    G: FnMut(f64, &mut Vec<C64>) -> Result<bool>,
{
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut h = ctrl.h_initial.min(span.abs()).min(ctrl.h_max) * dir;
    let mut k0 = f(t, y)?;
    let n = y.len();
    let mut ks: Vec<Vec<C64>> = Vec::with_capacity(7);

    // A remaining span below MIN_STEP is endpoint roundoff, not work left.
    while (t1 - t) * dir > MIN_STEP {
        if h.abs() > (t1 - t).abs() {
            h = t1 - t;
        }
        if h.abs() < MIN_STEP {
            return Err(SpinError::StepUnderflow { t });
        }

        ks.clear();
        ks.push(k0.clone());
        let mut failed_stage = false;
        for s in 0..6 {
            let mut ys = y.clone();
            for (j, kj) in ks.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..n {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            match f(t + C[s] * h, &ys) {
                Ok(k) => ks.push(k),
                Err(_) => {
                    // A stage left the chart's validity region; retry shorter.
                    failed_stage = true;
                    break;
                }
            }
        }
        if failed_stage {
            h *= 0.25;
            continue;
        }

        // 5th-order solution is stage 6's argument plus nothing: y5 = y + h*sum A[5][j] k_j,
        // and k6 = f(t+h, y5) doubles as the FSAL derivative.
        let mut y5 = y.clone();
        for (j, kj) in ks.iter().enumerate().take(6) {
            let a = A[5][j];
            if a != 0.0 {
                for i in 0..n {
                    y5[i] += h * a * kj[i];
                }
            }
        }
        let k6 = ks[6].clone();

        // Error estimate against the embedded 4th-order weights.
        let mut err2 = 0.0f64;
        for i in 0..n {
            let mut y4i = y[i];
            for (j, kj) in ks.iter().enumerate() {
                if B4[j] != 0.0 {
                    y4i += h * B4[j] * kj[i];
                }
            }
            let e = (y5[i] - y4i).norm();
            let scale = ctrl.atol + ctrl.rtol * y[i].norm().max(y5[i].norm());
            err2 += (e / scale) * (e / scale);
        }
        let err = (err2 / n as f64).sqrt();

        if err <= 1.0 {
            t += h;
            *y = y5;
            k0 = k6;
            let mutated = on_accept(t, y)?;
            if mutated {
                k0 = f(t, y)?;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * factor).clamp(-ctrl.h_max, ctrl.h_max);
            if h == 0.0 {
                h = MIN_STEP * dir;
            }
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.1);
        }
    }
    Ok(())
}
