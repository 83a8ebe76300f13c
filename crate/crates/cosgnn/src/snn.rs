//! Spiking neuron dynamics (first and second order), spike trains, and the
//! spike-representation operators that turn binary trains into real values.
//!
//! The second-order neuron keeps a synaptic current `I` next to the membrane
//! `u`, with decays `alpha = exp(-dtau/tau_syn)` and `beta = exp(-dtau/tau_mem)`.
//! Spiking subtracts the threshold from the membrane (soft reset), and ties
//! at the threshold count as spikes.
//!
//! For a constant-current train the scaled weighted firing rate converges to
//! a clamped linear function of the weighted average input current. Summing
//! the recursion gives the exact relation
//!
//! ```text
//! rate(N) = gain * I_avg(N) - u(N) / (dtau * D(N)) + v_th * s(N) / (beta * dtau * D(N))
//! ```
//!
//! with `gain = (beta - alpha) / dtau` and `D(N)` the weight normalizer. The
//! membrane term stays bounded while `D(N)` grows to its limit, so the rate
//! approaches `clamp(gain * I_avg, 0, ceiling)`, where the ceiling is the
//! rate of an always-firing train. [`clamp_map`] evaluates exactly that
//! limit function; the convergence suite measures the residual.

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// First-order leaky integrate-and-fire constants.
#[derive(Clone, Copy, Debug)]
pub struct Lif1Params {
    /// Leak constant in `(0, 1]`; 1 means a perfect integrator.
    pub lambda: f64,
    pub v_th: f64,
    /// Constant input added at every step.
    pub bias: f64,
}

impl Lif1Params {
    pub fn new(lambda: f64, v_th: f64, bias: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::config(format!("lambda {lambda} outside (0, 1]")));
        }
        if v_th <= 0.0 {
            return Err(Error::config("threshold must be positive"));
        }
        Ok(Lif1Params { lambda, v_th, bias })
    }
}

impl Default for Lif1Params {
    fn default() -> Self {
        Lif1Params {
            lambda: 1.0,
            v_th: 1.0,
            bias: 0.0,
        }
    }
}

/// Synaptic-conductance LIF constants with derived decay factors.
#[derive(Clone, Copy, Debug)]
pub struct Lif2Params {
    tau_syn: f64,
    tau_mem: f64,
    delta_tau: f64,
    v_th: f64,
    alpha: f64,
    beta: f64,
}

impl Lif2Params {
    /// Build from time constants. Requires distinct positive constants and a
    /// latency step no larger than a tenth of the faster one.
    pub fn new(tau_syn: f64, tau_mem: f64, delta_tau: f64, v_th: f64) -> Result<Self> {
        if tau_syn <= 0.0 || tau_mem <= 0.0 || delta_tau <= 0.0 || v_th <= 0.0 {
            return Err(Error::config("time constants and threshold must be positive"));
        }
        if tau_syn == tau_mem {
            return Err(Error::Degenerate(
                "tau_syn must differ from tau_mem".into(),
            ));
        }
        if delta_tau > 0.1 * tau_syn.min(tau_mem) {
            return Err(Error::config(format!(
                "delta_tau {delta_tau} exceeds 0.1 * min(tau_syn, tau_mem)"
            )));
        }
        Ok(Lif2Params {
            tau_syn,
            tau_mem,
            delta_tau,
            v_th,
            alpha: (-delta_tau / tau_syn).exp(),
            beta: (-delta_tau / tau_mem).exp(),
        })
    }

    /// Build directly from decay factors; used by unit tests and by callers
    /// that want equal decays for the raw step dynamics. Representation
    /// operators still reject `alpha == beta`.
    pub fn from_decay(alpha: f64, beta: f64, delta_tau: f64, v_th: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0 && 0.0 < beta && beta < 1.0) {
            return Err(Error::config("decay factors must lie in (0, 1)"));
        }
        if delta_tau <= 0.0 || v_th <= 0.0 {
            return Err(Error::config("delta_tau and v_th must be positive"));
        }
        Ok(Lif2Params {
            tau_syn: -delta_tau / alpha.ln(),
            tau_mem: -delta_tau / beta.ln(),
            delta_tau,
            v_th,
            alpha,
            beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn v_th(&self) -> f64 {
        self.v_th
    }

    pub fn delta_tau(&self) -> f64 {
        self.delta_tau
    }

    pub fn tau_syn(&self) -> f64 {
        self.tau_syn
    }

    pub fn tau_mem(&self) -> f64 {
        self.tau_mem
    }

    fn check_nondegenerate(&self) -> Result<()> {
        if (self.beta - self.alpha).abs() < 1e-12 {
            return Err(Error::Degenerate(
                "alpha == beta makes the representation weights vanish".into(),
            ));
        }
        Ok(())
    }

    /// Slope of the asymptotic rate/input relation, `(beta - alpha) / dtau`.
    /// Tends to `(tau_mem - tau_syn) / (tau_syn * tau_mem)` as `dtau -> 0`.
    pub fn rep_gain(&self) -> Result<f64> {
        self.check_nondegenerate()?;
        Ok((self.beta - self.alpha) / self.delta_tau)
    }

    /// Scaled weighted firing rate of an always-firing train in the long
    /// latency limit: `v_th (1 - alpha) / (beta * dtau * (beta - alpha))`.
    /// This is the saturation value of the representation.
    pub fn rep_ceiling(&self) -> Result<f64> {
        self.check_nondegenerate()?;
        Ok(self.v_th * (1.0 - self.alpha) / (self.beta * self.delta_tau * (self.beta - self.alpha)))
    }
}

impl Default for Lif2Params {
    fn default() -> Self {
        Lif2Params::new(1.0, 2.0, 0.05, 1.0).expect("default constants are valid")
    }
}

// ---------------------------------------------------------------------------
// Spike trains and representations
// ---------------------------------------------------------------------------

/// Binary spike tensor over latency steps for all nodes and channels.
/// Step `n` holds the spikes emitted by the `(n+1)`-th membrane update.
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeTrain {
    latency: usize,
    rows: usize,
    cols: usize,
    values: Vec<u8>,
}

impl SpikeTrain {
    pub fn new(rows: usize, cols: usize) -> Self {
        SpikeTrain {
            latency: 0,
            rows,
            cols,
            values: Vec::new(),
        }
    }

    pub fn latency(&self) -> usize {
        self.latency
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    fn push_step(&mut self, spikes: &DenseMatrix) {
        debug_assert_eq!(spikes.shape(), (self.rows, self.cols));
        self.values
            .extend(spikes.data().iter().map(|&v| (v != 0.0) as u8));
        self.latency += 1;
    }

    pub fn step_bytes(&self, n: usize) -> &[u8] {
        let len = self.rows * self.cols;
        &self.values[n * len..(n + 1) * len]
    }

    pub fn step_matrix(&self, n: usize) -> DenseMatrix {
        let data = self.step_bytes(n).iter().map(|&b| b as f64).collect();
        DenseMatrix::from_vec(self.rows, self.cols, data).expect("binary data is finite")
    }

    /// Spike count at latency step `n`.
    pub fn count_at(&self, n: usize) -> usize {
        self.step_bytes(n).iter().map(|&b| b as usize).sum()
    }

    pub fn total_spikes(&self) -> usize {
        self.values.iter().map(|&b| b as usize).sum()
    }

    /// `s(n) * w` treating the step as a 0/1 matrix; cost scales with the
    /// number of spikes rather than the dense product size.
    pub fn step_matmul(&self, n: usize, w: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != w.rows() {
            return Err(Error::dimension(format!(
                "spike step has {} channels, weight has {} rows",
                self.cols,
                w.rows()
            )));
        }
        let bytes = self.step_bytes(n);
        let mut out = DenseMatrix::zeros(self.rows, w.cols());
        for i in 0..self.rows {
            let dst = &mut out.data_mut()[i * w.cols()..(i + 1) * w.cols()];
            for j in 0..self.cols {
                if bytes[i * self.cols + j] == 1 {
                    for (o, &wv) in dst.iter_mut().zip(w.row(j)) {
                        *o += wv;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&b| b == 0 || b == 1)
    }
}

/// Which representation produced a [`SpikeRep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RepOrder {
    First,
    Second,
}

/// Differentiable summary of a spike train: a decay-weighted spike average
/// (first order, values in `[0, 1]`) or the scaled weighted firing rate
/// (second order, values in `[0, rep_ceiling]`).
#[derive(Clone, Debug)]
pub struct SpikeRep {
    pub value: DenseMatrix,
    pub order: RepOrder,
}

#[inline]
fn heaviside(x: f64) -> f64 {
    // ties at the threshold spike
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// First-order dynamics
// ---------------------------------------------------------------------------

/// One first-order update: `u' = lambda (u - v_th s) + input + bias`,
/// `s' = H(u' - v_th)`.
pub fn lif1_step(
    u: &DenseMatrix,
    s_prev: &DenseMatrix,
    input: &DenseMatrix,
    p: &Lif1Params,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if u.shape() != s_prev.shape() || u.shape() != input.shape() {
        return Err(Error::dimension("lif1_step shapes disagree"));
    }
    let mut u_next = DenseMatrix::zeros(u.rows(), u.cols());
    let mut s_next = DenseMatrix::zeros(u.rows(), u.cols());
    for idx in 0..u.data().len() {
        let un = p.lambda * (u.data()[idx] - p.v_th * s_prev.data()[idx]) + input.data()[idx]
            + p.bias;
        u_next.data_mut()[idx] = un;
        s_next.data_mut()[idx] = heaviside(un - p.v_th);
    }
    Ok((u_next, s_next))
}

/// Iterate [`lif1_step`] for `n` steps from zero state with the input held
/// constant (constant-current coding).
pub fn lif1_run(input: &DenseMatrix, n: usize, p: &Lif1Params) -> Result<SpikeTrain> {
    let inputs = vec![input.clone(); n];
    lif1_run_seq(&inputs, p)
}

/// Iterate with a per-step input sequence.
pub fn lif1_run_seq(inputs: &[DenseMatrix], p: &Lif1Params) -> Result<SpikeTrain> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::config("latency must be >= 1"))?;
    let (rows, cols) = first.shape();
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut s = DenseMatrix::zeros(rows, cols);
    let mut train = SpikeTrain::new(rows, cols);
    for input in inputs {
        let (u2, s2) = lif1_step(&u, &s, input, p)?;
        u = u2;
        s = s2;
        train.push_step(&s);
    }
    Ok(train)
}

/// Decay-weighted spike average `sum lambda^{N-tau} s_tau / sum lambda^{N-tau}`,
/// the most recent step carrying weight 1.
pub fn spike_rep_first(train: &SpikeTrain, lambda: f64) -> Result<SpikeRep> {
    if train.latency() == 0 {
        return Err(Error::config("empty spike train"));
    }
    let n = train.latency();
    let mut value = DenseMatrix::zeros(train.rows(), train.cols());
    let mut norm = 0.0;
    let mut weight = lambda.powi(n as i32 - 1);
    for step in 0..n {
        norm += weight;
        for (acc, &b) in value.data_mut().iter_mut().zip(train.step_bytes(step)) {
            *acc += weight * b as f64;
        }
        weight /= lambda;
    }
    let value = value.scale(1.0 / norm);
    Ok(SpikeRep {
        value,
        order: RepOrder::First,
    })
}

// ---------------------------------------------------------------------------
// Second-order dynamics
// ---------------------------------------------------------------------------

/// One second-order update:
/// `i' = alpha i + input`, `u' = beta u + i' - v_th s_prev`, `s' = H(u' - v_th)`.
pub fn lif2_step(
    i_syn: &DenseMatrix,
    u: &DenseMatrix,
    s_prev: &DenseMatrix,
    input: &DenseMatrix,
    p: &Lif2Params,
) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    if i_syn.shape() != u.shape() || u.shape() != input.shape() || u.shape() != s_prev.shape() {
        return Err(Error::dimension("lif2_step shapes disagree"));
    }
    let mut i_next = DenseMatrix::zeros(u.rows(), u.cols());
    let mut u_next = DenseMatrix::zeros(u.rows(), u.cols());
    let mut s_next = DenseMatrix::zeros(u.rows(), u.cols());
    for idx in 0..u.data().len() {
        let inx = p.alpha * i_syn.data()[idx] + input.data()[idx];
        let unx = p.beta * u.data()[idx] + inx - p.v_th * s_prev.data()[idx];
        i_next.data_mut()[idx] = inx;
        u_next.data_mut()[idx] = unx;
        s_next.data_mut()[idx] = heaviside(unx - p.v_th);
    }
    Ok((i_next, u_next, s_next))
}

/// Iterate [`lif2_step`] from zero state with a constant input current.
pub fn lif2_run(input: &DenseMatrix, n: usize, p: &Lif2Params) -> Result<SpikeTrain> {
    Ok(lif2_run_with_state(&vec![input.clone(); n], p)?.0)
}

/// Iterate with per-step inputs.
pub fn lif2_run_seq(inputs: &[DenseMatrix], p: &Lif2Params) -> Result<SpikeTrain> {
    Ok(lif2_run_with_state(inputs, p)?.0)
}

/// As [`lif2_run_seq`] but also returns the final membrane, which the
/// convergence diagnostics use to measure the dropped remainder term.
pub fn lif2_run_with_state(
    inputs: &[DenseMatrix],
    p: &Lif2Params,
) -> Result<(SpikeTrain, DenseMatrix)> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::config("latency must be >= 1"))?;
    let (rows, cols) = first.shape();
    let mut i_syn = DenseMatrix::zeros(rows, cols);
    let mut u = DenseMatrix::zeros(rows, cols);
    let mut s = DenseMatrix::zeros(rows, cols);
    let mut train = SpikeTrain::new(rows, cols);
    for input in inputs {
        let (i2, u2, s2) = lif2_step(&i_syn, &u, &s, input, p)?;
        i_syn = i2;
        u = u2;
        s = s2;
        train.push_step(&s);
    }
    Ok((train, u))
}

/// Representation weights `beta^{N-n} - alpha^{N-n}` for `n = 0..N-1` and
/// their sum.
fn rep_weights(p: &Lif2Params, n: usize) -> (Vec<f64>, f64) {
    let mut weights = Vec::with_capacity(n);
    let mut pow_b = p.beta;
    let mut pow_a = p.alpha;
    // built from the most recent step backwards, then reversed
    for _ in 0..n {
        weights.push(pow_b - pow_a);
        pow_b *= p.beta;
        pow_a *= p.alpha;
    }
    weights.reverse();
    let sum = weights.iter().sum();
    (weights, sum)
}

/// Weighted average input current
/// `(1/(beta-alpha)^2) * sum w_n I(n) / sum w_n` with `w_n = beta^{N-n} - alpha^{N-n}`.
/// For a constant input `c` the weights cancel and this is `c / (beta-alpha)^2`.
pub fn weighted_avg_input(inputs: &[DenseMatrix], p: &Lif2Params) -> Result<DenseMatrix> {
    p.check_nondegenerate()?;
    let first = inputs
        .first()
        .ok_or_else(|| Error::config("latency must be >= 1"))?;
    let (weights, norm) = rep_weights(p, inputs.len());
    let mut acc = DenseMatrix::zeros(first.rows(), first.cols());
    for (input, &w) in inputs.iter().zip(&weights) {
        if input.shape() != first.shape() {
            return Err(Error::dimension("input steps differ in shape"));
        }
        acc.axpy(w, input);
    }
    let scale = 1.0 / ((p.beta - p.alpha).powi(2) * norm);
    Ok(acc.scale(scale))
}

/// Scaled weighted firing rate
/// `(v_th / beta^2) * sum beta^{N-n} s(n) / (dtau * sum (beta^{N-n} - alpha^{N-n}))`.
pub fn spike_rep_second(train: &SpikeTrain, p: &Lif2Params) -> Result<SpikeRep> {
    p.check_nondegenerate()?;
    if train.latency() == 0 {
        return Err(Error::config("empty spike train"));
    }
    let n = train.latency();
    let (_, norm) = rep_weights(p, n);
    let mut value = DenseMatrix::zeros(train.rows(), train.cols());
    let mut beta_pow = p.beta.powi(n as i32);
    for step in 0..n {
        for (acc, &b) in value.data_mut().iter_mut().zip(train.step_bytes(step)) {
            *acc += beta_pow * b as f64;
        }
        beta_pow /= p.beta;
    }
    let scale = p.v_th / (p.beta * p.beta * p.delta_tau * norm);
    Ok(SpikeRep {
        value: value.scale(scale),
        order: RepOrder::Second,
    })
}

/// Asymptotic representation map: `clamp(rep_gain * x, 0, rep_ceiling)`.
/// This is the function the scaled weighted firing rate converges to as the
/// latency grows, with the membrane remainder dropped.
pub fn clamp_map(i_hat: &DenseMatrix, p: &Lif2Params) -> Result<DenseMatrix> {
    let gain = p.rep_gain()?;
    let ceiling = p.rep_ceiling()?;
    Ok(i_hat.map(|x| (gain * x).clamp(0.0, ceiling)))
}

/// Input-current scale that makes the weighted average input of a constant
/// drive equal the nominal value: currents are `(beta - alpha)^2 * nominal`.
pub fn input_current_scale(p: &Lif2Params) -> f64 {
    (p.beta - p.alpha).powi(2)
}

/// Current per unit nominal input that accumulates `n * v_th` of synaptic
/// charge over an `n`-step run, so a unit input fires at full rate despite
/// the synaptic warm-up. Approaches the steady-state value
/// `(1 - alpha) v_th` as `n` grows.
pub fn encode_current_gain(p: &Lif2Params, n: usize) -> f64 {
    let a = p.alpha;
    // sum_{k=1}^{n} (1 - a^k) / (1 - a): synaptic charge of a unit current
    let warmup = (n as f64 - a * (1.0 - a.powi(n as i32)) / (1.0 - a)) / (1.0 - a);
    p.v_th * n as f64 / warmup
}

/// Drive a second-order population with the constant current encoding of
/// `z_prev * w` and return both the train and its representation. As the
/// latency grows the representation approaches `clamp_map(z_prev * w)`.
pub fn snn_layer_forward(
    z_prev: &DenseMatrix,
    w: &DenseMatrix,
    p: &Lif2Params,
    n: usize,
) -> Result<(SpikeTrain, SpikeRep)> {
    p.check_nondegenerate()?;
    let nominal = z_prev.matmul(w)?;
    let current = nominal.scale(input_current_scale(p));
    let train = lif2_run(&current, n, p)?;
    let rep = spike_rep_second(&train, p)?;
    Ok((train, rep))
}
