//! Adaptive Dormand–Prince 5(4) integrator for small dense systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn new(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol * 1e-3, h0: 1e-3, h_min: 1e-14, max_steps: 2_000_000 }
    }
}

/// Accepted step: time, state, and derivative at that state.
#[derive(Debug, Clone)]
pub struct Node {
    pub t: f64,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights equal the last row of A; these are the differences to the embedded fourth-order ones
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates y' = f(t, y) from t0 to t1 (t1 > t0). `f` may fail; failures
/// inside a trial step shrink the step. `accept` can veto a state (e.g. loss of
/// positive definiteness), which also shrinks the step.
pub fn integrate<F, V>(mut f: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions, accept: V) -> Result<Vec<Node>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    V: Fn(&[f64]) -> bool,
{
    let n = y0.len();
    let dy0 = f(t0, y0)?;
    let mut nodes = vec![Node { t: t0, y: y0.to_vec(), dy: dy0 }];
    if t1 <= t0 {
        return Ok(nodes);
    }
    let mut h = opts.h0.min(t1 - t0);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    k[0] = nodes[0].dy.clone();
    let mut steps = 0;
    let mut ytmp = vec![0.0; n];
    while t < t1 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepFailure { t, reason: "step budget exhausted".into() });
        }
        if h < opts.h_min * t.abs().max(1.0) {
            return Err(Error::StepFailure { t, reason: format!("step size underflow (h = {h:e})") });
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        let mut ok = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += h * A[s][j] * kj[i];
                }
                ytmp[i] = acc;
            }
            match f(t + C[s] * h, &ytmp) {
                Ok(v) => k[s] = v,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        // ytmp holds the fifth-order solution after stage 7
        let mut err = 0.0f64;
        if ok {
            for i in 0..n {
                let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * h;
                let sc = opts.atol + opts.rtol * y[i].abs().max(ytmp[i].abs());
                err = err.max((e / sc).abs());
            }
            ok = err.is_finite() && accept(&ytmp);
        }
        if !ok {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&ytmp);
            k[0] = k[6].clone();
            nodes.push(Node { t, y: y.clone(), dy: k[0].clone() });
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    Ok(nodes)
}

/// Cubic Hermite interpolation between consecutive nodes.
pub fn hermite(nodes: &[Node], t: f64, out: &mut [f64]) -> (usize, f64) {
    let idx = match nodes.binary_search_by(|nd| nd.t.partial_cmp(&t).unwrap()) {
        Ok(i) => {
            out.copy_from_slice(&nodes[i].y);
            return (i, 0.0);
        }
        Err(i) => i.clamp(1, nodes.len() - 1) - 1,
    };
    let (a, b) = (&nodes[idx], &nodes[idx + 1]);
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    for i in 0..out.len() {
        out[i] = h00 * a.y[i] + h10 * h * a.dy[i] + h01 * b.y[i] + h11 * h * b.dy[i];
    }
    (idx, s)
}
