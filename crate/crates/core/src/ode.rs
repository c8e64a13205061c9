//! Scalar Dormand–Prince 5(4) integrator.
//!
//! Steps are accepted when the embedded error estimate is at most
//! `tol * |h| * max(1, |y|)`, i.e. the tolerance is a local error per unit
//! of the independent variable. Trial points rejected by the caller's
//! admissibility test shrink the step instead of failing the run.

/// One accepted node: independent variable, state, and exact slope there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub t: f64,
    pub y: f64,
    pub dy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Halt {
    /// Reached the requested end point.
    End,
    /// The caller's stop predicate fired after the last accepted step.
    Event,
    /// The step size fell below the floor, usually at a singularity.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy)]
pub struct Dp45 {
    pub tol: f64,
    pub h_max: f64,
    pub h_min: f64,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
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
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Trial {
    pub y: f64,
    /// Slope at the new point (first stage of the next step).
    pub dy: f64,
    pub err: f64,
}

/// Takes one Dormand–Prince step of signed size `h` from `(t, y)` with
/// known slope `dy`. Returns `None` if any stage is inadmissible.
pub fn step<F, G>(f: &F, admissible: &G, t: f64, y: f64, dy: f64, h: f64) -> Option<Trial>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> bool,
{
    let mut k = [0.0; 7];
    k[0] = dy;
    for s in 1..7 {
        let ys = y + h * (0..s).map(|j| A[s][j] * k[j]).sum::<f64>();
        let ts = t + C[s] * h;
        if !ys.is_finite() || !admissible(ts, ys) {
            return None;
        }
        k[s] = f(ts, ys);
        if !k[s].is_finite() {
            return None;
        }
    }
    // The seventh stage is evaluated at the fifth-order solution.
    let y_new = y + h * (0..6).map(|j| A[6][j] * k[j]).sum::<f64>();
    let err = (h * (0..7).map(|j| E[j] * k[j]).sum::<f64>()).abs();
    Some(Trial {
        y: y_new,
        dy: k[6],
        err,
    })
}

impl Dp45 {
    /// Integrates from `t0` towards `t_end` (either direction). `stop` is
    /// checked after every accepted step.
    pub fn run<F, G, S>(
        &self,
        f: F,
        t0: f64,
        y0: f64,
        t_end: f64,
        admissible: G,
        mut stop: S,
    ) -> (Vec<Node>, Halt)
    where
        F: Fn(f64, f64) -> f64,
        G: Fn(f64, f64) -> bool,
        S: FnMut(&Node) -> bool,
    {
        let dir = (t_end - t0).signum();
        let span = (t_end - t0).abs();
        let mut node = Node {
            t: t0,
            y: y0,
            dy: f(t0, y0),
        };
        let mut nodes = vec![node];
        if span == 0.0 {
            return (nodes, Halt::End);
        }
        let mut h = (0.01 * span).min(self.h_max);
        loop {
            let remaining = (t_end - node.t).abs();
            let last = h >= remaining;
            let h_try = if last { remaining } else { h };
            if h_try < self.h_min && !last {
                return (nodes, Halt::StepUnderflow);
            }
            match step(&f, &admissible, node.t, node.y, node.dy, dir * h_try) {
                Some(trial) => {
                    let bound = self.tol * h_try * node.y.abs().max(trial.y.abs()).max(1.0);
                    if trial.err <= bound {
                        node = Node {
                            t: if last { t_end } else { node.t + dir * h_try },
                            y: trial.y,
                            dy: trial.dy,
                        };
                        nodes.push(node);
                        if stop(&node) {
                            return (nodes, Halt::Event);
                        }
                        if last {
                            return (nodes, Halt::End);
                        }
                    }
                    let factor = if trial.err == 0.0 {
                        5.0
                    } else {
                        (0.9 * (bound / trial.err).powf(0.25)).clamp(0.2, 5.0)
                    };
                    h = (h_try * factor).min(self.h_max);
                }
                None => {
                    h = 0.25 * h_try;
                    if h < self.h_min {
                        return (nodes, Halt::StepUnderflow);
                    }
                }
            }
        }
    }
}
