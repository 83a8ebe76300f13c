//! Continuous graph dynamics: the first-order linear graph ODE with its
//! closed-form solution, and the second-order oscillator scheme integrated
//! by an implicit-explicit symplectic Euler step.
//!
//! The second-order update is velocity-first:
//!
//! ```text
//! Y^n = Y^{n-1} + dt [ sigma(A X^{n-1} W) - gamma X^{n-1} - alpha Y^{n-1} ]
//! X^n = X^{n-1} + dt Y^n
//! ```
//!
//! Updating `X` with the *new* `Y` is what makes the map symplectic for the
//! undamped case; reversing the order gives plain explicit Euler and loses
//! that structure.

use crate::error::{Error, Result};
use crate::graphio::NormalizedAdjacency;
use crate::numerics::{mat_exp_phi1, Activation, DenseMatrix};

/// Paired hidden features `(X, Y)` evolved by the second-order scheme. The
/// first-order dynamics only use `x` and keep `y` at zero.
#[derive(Clone, Debug)]
pub struct OdeState {
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub step_index: usize,
    pub dt: f64,
}

impl OdeState {
    pub fn new(x: DenseMatrix, y: DenseMatrix, dt: f64) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::dimension("X and Y must share a shape"));
        }
        if dt <= 0.0 {
            return Err(Error::config("dt must be positive"));
        }
        Ok(OdeState {
            x,
            y,
            step_index: 0,
            dt,
        })
    }
}

/// GCN-style coupling `sigma(A x W)` with damping constants for the
/// oscillator update. The damping `alpha_damp` is deliberately not named
/// `alpha`: that symbol belongs to the synaptic decay of the spiking side.
#[derive(Clone, Debug)]
pub struct CouplingParams {
    pub weight: DenseMatrix,
    pub adjacency: NormalizedAdjacency,
    pub activation: Activation,
    pub gamma: f64,
    pub alpha_damp: f64,
}

impl CouplingParams {
    pub fn validate(&self) -> Result<()> {
        if self.gamma < 0.0 || self.alpha_damp < 0.0 {
            return Err(Error::config("damping constants must be non-negative"));
        }
        Ok(())
    }
}

/// `sigma(A x W)`.
pub fn coupling_gcn(x: &DenseMatrix, p: &CouplingParams) -> Result<DenseMatrix> {
    let propagated = p.adjacency.apply(x)?;
    let mixed = propagated.matmul(&p.weight)?;
    Ok(mixed.map(|v| p.activation.apply(v)))
}

/// Closed-form solution of `dH/dt = (A - I) H + E` with `H(0) = E`:
///
/// `H(t) = t phi1((A - I) t) E + exp((A - I) t) E`.
///
/// The phi-1 form replaces `(A - I)^{-1} (exp((A-I)t) - I)`; it is exact and
/// stays finite on the eigenvalue-1 subspace that every normalized adjacency
/// has, where the inverse does not exist.
pub fn cgnn1_analytic(e: &DenseMatrix, adj: &NormalizedAdjacency, t: f64) -> Result<DenseMatrix> {
    if t < 0.0 {
        return Err(Error::config("time must be non-negative"));
    }
    let n = adj.n();
    if e.rows() != n {
        return Err(Error::dimension("forcing rows must match node count"));
    }
    let m = adj.to_dense().sub(&DenseMatrix::identity(n))?;
    let (exp_m, phi_m) = mat_exp_phi1(&m, t)?;
    let drift = phi_m.matmul(e)?.scale(t);
    let flow = exp_m.matmul(e)?;
    drift.add(&flow)
}

/// One explicit Euler step of the first-order dynamics:
/// `h + dt ((A - I) h + e)`.
pub fn cgnn1_step(
    h: &DenseMatrix,
    e: &DenseMatrix,
    adj: &NormalizedAdjacency,
    dt: f64,
) -> Result<DenseMatrix> {
    if dt <= 0.0 {
        return Err(Error::config("dt must be positive"));
    }
    let ah = adj.apply(h)?;
    let mut out = h.clone();
    out.axpy(dt, &ah);
    out.axpy(-dt, h);
    out.axpy(dt, e);
    Ok(out)
}

/// One oscillator step with the coupling evaluated at `coupling_input`
/// (the coupled model feeds a spike representation here; the plain scheme
/// uses the state itself).
pub fn graphcon_step_with_input(
    state: &OdeState,
    coupling_input: &DenseMatrix,
    p: &CouplingParams,
) -> Result<OdeState> {
    p.validate()?;
    let force = coupling_gcn(coupling_input, p)?;
    if force.shape() != state.x.shape() {
        return Err(Error::dimension("coupling output shape mismatch"));
    }
    let dt = state.dt;
    // velocity first, then position with the fresh velocity
    let mut y_next = state.y.clone();
    y_next.axpy(dt, &force);
    y_next.axpy(-dt * p.gamma, &state.x);
    y_next.axpy(-dt * p.alpha_damp, &state.y);
    let mut x_next = state.x.clone();
    x_next.axpy(dt, &y_next);
    Ok(OdeState {
        x: x_next,
        y: y_next,
        step_index: state.step_index + 1,
        dt,
    })
}

/// One step of the plain scheme, coupling evaluated at the current state.
pub fn graphcon_step(state: &OdeState, p: &CouplingParams) -> Result<OdeState> {
    let input = state.x.clone();
    graphcon_step_with_input(state, &input, p)
}

/// Iterate [`graphcon_step`] `steps` times; returns the whole trajectory
/// (initial state first) so intermediate states stay retrievable.
pub fn graphcon_run(
    x0: DenseMatrix,
    y0: DenseMatrix,
    steps: usize,
    dt: f64,
    p: &CouplingParams,
) -> Result<Vec<OdeState>> {
    if steps == 0 {
        return Err(Error::config("step count must be >= 1"));
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(OdeState::new(x0, y0, dt)?);
    for _ in 0..steps {
        let next = graphcon_step(states.last().unwrap(), p)?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::{normalized_adjacency, Graph};
    use crate::numerics::Rng;

    fn identity_adjacency(n: usize) -> NormalizedAdjacency {
        // isolated nodes receive forced self-loops, giving exactly I
        let g = Graph::new(n, &[], DenseMatrix::identity(n), vec![0; n]).unwrap();
        normalized_adjacency(&g, false).unwrap()
    }

    fn path2_adjacency() -> NormalizedAdjacency {
        let g = Graph::new(2, &[(0, 1)], DenseMatrix::identity(2), vec![0, 0]).unwrap();
        normalized_adjacency(&g, false).unwrap()
    }

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::from_vec(1, 1, vec![v]).unwrap()
    }

    fn coupling(adj: NormalizedAdjacency, w: DenseMatrix, act: Activation) -> CouplingParams {
        CouplingParams {
            weight: w,
            adjacency: adj,
            activation: act,
            gamma: 0.0,
            alpha_damp: 0.0,
        }
    }

    #[test]
    fn coupling_zero_input() {
        let p = coupling(identity_adjacency(2), DenseMatrix::identity(2), Activation::Tanh);
        let out = coupling_gcn(&DenseMatrix::zeros(2, 2), &p).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn coupling_identity_passthrough() {
        let p = coupling(identity_adjacency(2), DenseMatrix::identity(2), Activation::Identity);
        let x = DenseMatrix::from_rows(&[vec![0.3, -0.7], vec![1.2, 0.4]]).unwrap();
        let out = coupling_gcn(&x, &p).unwrap();
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn coupling_two_node_message_average() {
        // 2x2 product oracle: A = [[0,1],[1,0]], x = (a, b)^T, weight w
        let p = coupling(path2_adjacency(), scalar(2.0), Activation::Identity);
        let x = DenseMatrix::from_vec(2, 1, vec![0.25, -0.5]).unwrap();
        let out = coupling_gcn(&x, &p).unwrap();
        assert!((out.get(0, 0) - (-0.5 * 2.0)).abs() < 1e-15);
        assert!((out.get(1, 0) - (0.25 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn analytic_at_zero_returns_forcing() {
        let adj = path2_adjacency();
        let e = DenseMatrix::from_vec(2, 2, vec![0.4, -0.2, 0.1, 0.9]).unwrap();
        let h0 = cgnn1_analytic(&e, &adj, 0.0).unwrap();
        for (a, b) in h0.data().iter().zip(e.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn analytic_identity_adjacency_is_linear_growth() {
        // A = I collapses the dynamics to dH/dt = E, so H(t) = (1 + t) E
        let adj = identity_adjacency(2);
        let e = DenseMatrix::from_vec(2, 1, vec![0.5, -1.0]).unwrap();
        let h = cgnn1_analytic(&e, &adj, 2.0).unwrap();
        for (a, b) in h.data().iter().zip(e.data()) {
            assert!((a - 3.0 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_agrees_with_fine_step_euler() {
        let g = Graph::new(2, &[(0, 1)], DenseMatrix::identity(2), vec![0, 0]).unwrap();
        let adj = normalized_adjacency(&g, true).unwrap();
        let mut rng = Rng::new(1);
        let e = DenseMatrix::from_vec(2, 3, (0..6).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
            .unwrap();
        let analytic = cgnn1_analytic(&e, &adj, 1.0).unwrap();
        let dt = 1e-3;
        let mut h = e.clone();
        for _ in 0..1000 {
            h = cgnn1_step(&h, &e, &adj, dt).unwrap();
        }
        let diff = analytic.sub(&h).unwrap().max_abs();
        assert!(diff <= 1e-3, "analytic vs euler diff {diff}");
    }

    #[test]
    fn euler_step_limits() {
        let adj = identity_adjacency(2);
        let h = DenseMatrix::from_vec(2, 1, vec![1.0, -2.0]).unwrap();
        let e = DenseMatrix::from_vec(2, 1, vec![0.5, 0.5]).unwrap();

        // dt -> 0 returns h
        let tiny = cgnn1_step(&h, &e, &adj, 1e-12).unwrap();
        assert!(tiny.sub(&h).unwrap().max_abs() < 1e-11);

        // A = I leaves pure forcing: h + dt e
        let stepped = cgnn1_step(&h, &e, &adj, 0.25).unwrap();
        assert!((stepped.get(0, 0) - (1.0 + 0.25 * 0.5)).abs() < 1e-14);
        assert!((stepped.get(1, 0) - (-2.0 + 0.25 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn euler_richardson_halving() {
        // one step vs two half steps differ at second order in dt
        let g = Graph::new(3, &[(0, 1), (1, 2)], DenseMatrix::identity(3), vec![0; 3]).unwrap();
        let adj = normalized_adjacency(&g, true).unwrap();
        let h = DenseMatrix::from_vec(3, 1, vec![1.0, 0.5, -0.5]).unwrap();
        let e = DenseMatrix::from_vec(3, 1, vec![0.2, 0.0, -0.2]).unwrap();
        let gap = |dt: f64| {
            let one = cgnn1_step(&h, &e, &adj, dt).unwrap();
            let half = cgnn1_step(&h, &e, &adj, dt / 2.0).unwrap();
            let two = cgnn1_step(&half, &e, &adj, dt / 2.0).unwrap();
            one.sub(&two).unwrap().max_abs()
        };
        let g1 = gap(0.2);
        let g2 = gap(0.1);
        let slope = (g1 / g2).log2();
        assert!(slope > 1.9, "Richardson slope {slope}");
    }

    #[test]
    fn oscillator_free_drift() {
        // zero coupling and damping: Y constant, X drifts linearly
        let p = coupling(identity_adjacency(1), scalar(0.0), Activation::Identity);
        let states = graphcon_run(scalar(1.0), scalar(0.5), 4, 0.25, &p).unwrap();
        let last = states.last().unwrap();
        assert!((last.y.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((last.x.get(0, 0) - (1.0 + 4.0 * 0.25 * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn oscillator_fixed_point_at_origin() {
        let p = coupling(identity_adjacency(1), scalar(1.0), Activation::Tanh);
        let state = OdeState::new(scalar(0.0), scalar(0.0), 0.5).unwrap();
        let next = graphcon_step(&state, &p).unwrap();
        assert_eq!(next.x.get(0, 0), 0.0);
        assert_eq!(next.y.get(0, 0), 0.0);
    }

    #[test]
    fn oscillator_hand_iteration() {
        // scalar node, F(x) = x, no damping, dt = 0.1, start (1, 0)
        let p = coupling(identity_adjacency(1), scalar(1.0), Activation::Identity);
        let state = OdeState::new(scalar(1.0), scalar(0.0), 0.1).unwrap();
        let next = graphcon_step(&state, &p).unwrap();
        assert!((next.y.get(0, 0) - 0.1).abs() < 1e-15);
        assert!((next.x.get(0, 0) - 1.01).abs() < 1e-15);
    }

    #[test]
    fn run_single_step_equals_step() {
        let p = coupling(identity_adjacency(1), scalar(1.0), Activation::Tanh);
        let state = OdeState::new(scalar(0.7), scalar(-0.1), 0.2).unwrap();
        let from_run = graphcon_run(scalar(0.7), scalar(-0.1), 1, 0.2, &p).unwrap();
        let from_step = graphcon_step(&state, &p).unwrap();
        assert_eq!(from_run.last().unwrap().x, from_step.x);
        assert_eq!(from_run.last().unwrap().y, from_step.y);
    }

    #[test]
    fn run_refines_under_step_halving() {
        // first-order global accuracy: halving dt roughly halves the error,
        // so the two resolutions stay O(dt) apart
        let p = CouplingParams {
            weight: scalar(1.0),
            adjacency: identity_adjacency(1),
            activation: Activation::Tanh,
            gamma: 1.0,
            alpha_damp: 0.5,
        };
        let coarse = graphcon_run(scalar(1.0), scalar(0.0), 10, 0.1, &p).unwrap();
        let fine = graphcon_run(scalar(1.0), scalar(0.0), 20, 0.05, &p).unwrap();
        let finer = graphcon_run(scalar(1.0), scalar(0.0), 40, 0.025, &p).unwrap();
        let d1 = (coarse.last().unwrap().x.get(0, 0) - fine.last().unwrap().x.get(0, 0)).abs();
        let d2 = (fine.last().unwrap().x.get(0, 0) - finer.last().unwrap().x.get(0, 0)).abs();
        assert!(d2 < d1, "no refinement: {d1} then {d2}");
    }

    /// Exact flow of the scalar damped oscillator x'' + c x' + k x = 0.
    fn damped_oscillator_exact(x0: f64, y0: f64, c: f64, k: f64, t: f64) -> (f64, f64) {
        let half_c = c / 2.0;
        let omega = (k - half_c * half_c).sqrt();
        let a = x0;
        let b = (y0 + half_c * x0) / omega;
        let decay = (-half_c * t).exp();
        let (sin, cos) = (omega * t).sin_cos();
        let x = decay * (a * cos + b * sin);
        let y = decay * ((-half_c * a + omega * b) * cos - (half_c * b + omega * a) * sin);
        (x, y)
    }

    #[test]
    fn local_truncation_error_is_second_order() {
        // one step vs the exact damped-oscillator flow, log-log slope >= 1.9
        let (gamma, alpha_damp) = (1.0, 0.2);
        let p = CouplingParams {
            weight: scalar(0.0),
            adjacency: identity_adjacency(1),
            activation: Activation::Identity,
            gamma,
            alpha_damp,
        };
        let (x0, y0) = (1.0, 0.3);
        let err = |dt: f64| {
            let state = OdeState::new(scalar(x0), scalar(y0), dt).unwrap();
            let next = graphcon_step(&state, &p).unwrap();
            let (xe, ye) = damped_oscillator_exact(x0, y0, alpha_damp, gamma, dt);
            (next.x.get(0, 0) - xe)
                .abs()
                .max((next.y.get(0, 0) - ye).abs())
        };
        let errors = [err(0.1), err(0.05), err(0.025)];
        for w in errors.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!(slope >= 1.9, "local error slope {slope}");
        }
    }

    #[test]
    fn undamped_linear_map_preserves_phase_volume() {
        // gamma = alpha = 0, identity activation, linear coupling: the
        // update is a shear composition with Jacobian determinant 1
        let p = coupling(identity_adjacency(1), scalar(0.8), Activation::Identity);
        let step = |x: f64, y: f64| {
            let s = OdeState::new(scalar(x), scalar(y), 0.3).unwrap();
            let n = graphcon_step(&s, &p).unwrap();
            (n.x.get(0, 0), n.y.get(0, 0))
        };
        let eps = 1e-6;
        let (x0, y0) = (0.4, -0.2);
        let (xp, _) = step(x0 + eps, y0);
        let (xm, _) = step(x0 - eps, y0);
        let (_, ypx) = step(x0 + eps, y0);
        let (_, ymx) = step(x0 - eps, y0);
        let (xpy, ypy) = step(x0, y0 + eps);
        let (xmy, ymy) = step(x0, y0 - eps);
        let dxdx = (xp - xm) / (2.0 * eps);
        let dydx = (ypx - ymx) / (2.0 * eps);
        let dxdy = (xpy - xmy) / (2.0 * eps);
        let dydy = (ypy - ymy) / (2.0 * eps);
        let det = dxdx * dydy - dxdy * dydx;
        assert!((det - 1.0).abs() <= 1e-9, "det {det}");
    }
}
