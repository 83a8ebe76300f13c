//! Self-contained verification batteries: spike-representation convergence,
//! gradient checking, gradient bounds, and integrator order. The CLI
//! `verify` command and the acceptance suite both run these.

use crate::cgnn::{cgnn1_analytic, cgnn1_step, graphcon_step, CouplingParams, OdeState};
use crate::error::Result;
use crate::graphio::{normalized_adjacency, synthetic_graph, Graph, SynthKind};
use crate::model::{ModelConfig, ModelParams, Order, OrderPair};
use crate::numerics::{Activation, DenseMatrix, Rng};
use crate::snn::{clamp_map, lif2_run, spike_rep_second, weighted_avg_input, Lif2Params};
use crate::training::{
    backward, bound_rhs_gnn, clamps_are_interior, finite_diff_check, grad_bound_report, LossKind,
};

/// Outcome of one battery: a pass flag plus human-readable measurements.
#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl SuiteReport {
    fn line(&mut self, s: String) {
        self.lines.push(s);
    }
}

// ---------------------------------------------------------------------------
// Spike-representation convergence
// ---------------------------------------------------------------------------

/// Constant inputs spanning sub-threshold to saturating: the scaled weighted
/// firing rate at large latency must sit within `0.05 v_th / dtau` of the
/// clamp map, and the gap must shrink against the short-latency run in at
/// least 95% of cases.
pub fn spikerep_suite(trials: usize, latency: usize, seed: u64) -> Result<SuiteReport> {
    let p = Lif2Params::new(1.0, 2.0, 0.02, 1.0)?;
    let tolerance = 0.05 * p.v_th() / p.delta_tau();
    let gain = p.rep_gain()?;
    let ceiling = p.rep_ceiling()?;
    // input level at which the clamp saturates, in current units
    let c_sat = ceiling / gain * (p.beta() - p.alpha()).powi(2);

    let mut rng = Rng::new(seed);
    let short_n = 50usize;
    let mut max_gap: f64 = 0.0;
    let mut improved = 0usize;
    for _ in 0..trials {
        let c = rng.uniform_in(-0.25 * c_sat, 1.5 * c_sat);
        let input = DenseMatrix::from_vec(1, 1, vec![c])?;
        let gap_at = |n: usize| -> Result<f64> {
            let train = lif2_run(&input, n, &p)?;
            let rep = spike_rep_second(&train, &p)?.value.get(0, 0);
            let i_hat = weighted_avg_input(&vec![input.clone(); n], &p)?;
            let predicted = clamp_map(&i_hat, &p)?.get(0, 0);
            Ok((rep - predicted).abs())
        };
        let gap_short = gap_at(short_n)?;
        let gap_long = gap_at(latency)?;
        max_gap = max_gap.max(gap_long);
        if gap_long <= gap_short + 1e-12 {
            improved += 1;
        }
    }
    let need = (0.95 * trials as f64).ceil() as usize;
    let passed = max_gap <= tolerance && improved >= need;
    let mut report = SuiteReport {
        name: "spikerep",
        passed,
        lines: Vec::new(),
    };
    report.line(format!(
        "max |rate - clamp| at N={latency}: {max_gap:.4} (tolerance {tolerance:.4})"
    ));
    report.line(format!(
        "gap shrank vs N={short_n} in {improved}/{trials} cases (need {need})"
    ));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

/// Random model whose clamp arguments all sit away from the kinks, so every
/// analytic derivative is two-sided. Scales are chosen per spiking order;
/// the seed is bumped deterministically until the interiority check passes.
pub fn interior_clamp_instance(order: OrderPair, seed: u64) -> Result<(Graph, ModelParams)> {
    for attempt in 0..32u64 {
        let (g, params) = candidate_instance(order, seed.wrapping_add(attempt * 7919))?;
        if clamps_are_interior(&g, &params, 0.05)? {
            return Ok((g, params));
        }
    }
    Err(crate::error::Error::Numeric(
        "could not construct an interior-clamp model".into(),
    ))
}

fn candidate_instance(order: OrderPair, seed: u64) -> Result<(Graph, ModelParams)> {
    let mut rng = Rng::new(seed);
    let base = synthetic_graph(
        &SynthKind::Sbm {
            classes: 2,
            per_class: 3,
            p_in: 0.8,
            p_out: 0.3,
        },
        &mut rng.split(10),
    )?;
    let n = base.num_nodes();
    let d = 5usize;
    let feats: Vec<f64> = (0..n * d).map(|_| rng.uniform_in(0.5, 1.0)).collect();
    let mut g = Graph::new(
        n,
        base.edges(),
        DenseMatrix::from_vec(n, d, feats)?,
        base.labels().to_vec(),
    )?;
    g.train_mask = vec![true; n];

    let cfg = ModelConfig {
        order,
        hidden: 4,
        latency: 6,
        horizon: 3,
        dt: 0.05,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::init(&g, &cfg, &mut rng.split(11))?;
    let fill = |rows: usize, cols: usize, lo: f64, hi: f64, r: &mut Rng| {
        DenseMatrix::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| r.uniform_in(lo, hi)).collect(),
        )
    };
    // both orders share the [0, 1] rate range; the second-order layer slope
    // is the rate gain (~0.48), compensated by a wider weight band
    params.encoder = fill(d, 4, 0.06, 0.15, &mut rng.split(12))?;
    match order.snn {
        Order::Second => params.snn_weight = fill(4, 4, 0.2, 0.6, &mut rng.split(13))?,
        Order::First => params.snn_weight = fill(4, 4, 0.1, 0.3, &mut rng.split(13))?,
    }
    Ok((g, params))
}

/// Finite differences against the reverse sweep on interior-clamp models,
/// all four order pairs.
pub fn gradcheck_suite(seeds_per_order: usize, seed: u64) -> Result<SuiteReport> {
    let mut report = SuiteReport {
        name: "gradcheck",
        passed: true,
        lines: Vec::new(),
    };
    for pair in OrderPair::ALL {
        let mut worst: f64 = 0.0;
        for k in 0..seeds_per_order {
            let (g, params) =
                interior_clamp_instance(pair, seed.wrapping_add(1000 * k as u64))?;
            let err = finite_diff_check(&g, &params, LossKind::Squared, 1e-5)?;
            worst = worst.max(err);
        }
        if worst > 1e-3 {
            report.passed = false;
        }
        report.line(format!(
            "order {}: worst relative error {worst:.2e} over {seeds_per_order} seeds (limit 1e-3)",
            pair.as_string()
        ));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Gradient bounds
// ---------------------------------------------------------------------------

/// Squared-loss gradient bounds on random small instances, plus the
/// depth-independence of the predicted bound under `dt = 1/T`.
pub fn bounds_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = Rng::new(seed);
    let mut satisfied = 0usize;
    for _ in 0..trials {
        let per_class = 2 + rng.below(4); // 4 to 10 nodes
        let graph = full_mask_sbm(per_class, &mut rng)?;
        let cfg = ModelConfig {
            order: OrderPair::new(2, 2)?,
            hidden: 4,
            latency: 2 + rng.below(5),
            horizon: 2 + rng.below(5),
            activation: Activation::Tanh,
            ..ModelConfig::default()
        };
        let stream = rng.next_u64();
        let params = ModelParams::init(&graph, &cfg, &mut rng.split(stream))?;
        let (_, grads) = backward(&graph, &params, LossKind::Squared)?;
        let bound = grad_bound_report(&graph, &params, &grads)?;
        if bound.satisfied() {
            satisfied += 1;
        }
    }

    // doubling T from 4 to 16 with dt = 1/T keeps the predicted bound flat
    let graph = full_mask_sbm(4, &mut rng)?;
    let rhs_at = |t: usize| -> Result<f64> {
        let cfg = ModelConfig {
            order: OrderPair::new(2, 2)?,
            hidden: 4,
            latency: 4,
            horizon: t,
            dt: 1.0 / t as f64,
            ..ModelConfig::default()
        };
        let params = ModelParams::init(&graph, &cfg, &mut Rng::new(77))?;
        bound_rhs_gnn(&graph, &params)
    };
    let rhs4 = rhs_at(4)?;
    let rhs16 = rhs_at(16)?;
    let ratio = rhs16 / rhs4;

    let passed = satisfied == trials && ratio <= 2.0;
    let mut report = SuiteReport {
        name: "bounds",
        passed,
        lines: Vec::new(),
    };
    report.line(format!("bounds satisfied on {satisfied}/{trials} random instances"));
    report.line(format!(
        "rhs at T=16 over T=4 with dt=1/T: {ratio:.3} (limit 2.0)"
    ));
    Ok(report)
}

fn full_mask_sbm(per_class: usize, rng: &mut Rng) -> Result<Graph> {
    let stream = rng.next_u64();
    let mut g = synthetic_graph(
        &SynthKind::Sbm {
            classes: 2,
            per_class,
            p_in: 0.7,
            p_out: 0.2,
        },
        &mut rng.split(stream),
    )?;
    g.train_mask = vec![true; g.num_nodes()];
    g.val_mask = vec![false; g.num_nodes()];
    g.test_mask = vec![false; g.num_nodes()];
    Ok(g)
}

// ---------------------------------------------------------------------------
// Integrator order
// ---------------------------------------------------------------------------

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

/// Local truncation slope of the oscillator step and agreement of the
/// closed-form first-order solution with fine-step Euler integration.
pub fn integrator_suite(seed: u64) -> Result<SuiteReport> {
    // scalar damped oscillator, one step vs exact flow
    let single = Graph::new(1, &[], DenseMatrix::identity(1), vec![0])?;
    let p = CouplingParams {
        weight: DenseMatrix::zeros(1, 1),
        adjacency: normalized_adjacency(&single, false)?,
        activation: Activation::Identity,
        gamma: 1.0,
        alpha_damp: 0.2,
    };
    let (x0, y0) = (1.0, 0.3);
    let err = |dt: f64| -> Result<f64> {
        let state = OdeState::new(
            DenseMatrix::from_vec(1, 1, vec![x0])?,
            DenseMatrix::from_vec(1, 1, vec![y0])?,
            dt,
        )?;
        let next = graphcon_step(&state, &p)?;
        let (xe, ye) = damped_oscillator_exact(x0, y0, 0.2, 1.0, dt);
        Ok((next.x.get(0, 0) - xe)
            .abs()
            .max((next.y.get(0, 0) - ye).abs()))
    };
    let errors = [err(0.1)?, err(0.05)?, err(0.025)?];
    let mut min_slope = f64::INFINITY;
    for w in errors.windows(2) {
        min_slope = min_slope.min((w[0] / w[1]).log2());
    }

    // closed form vs fine-step Euler on random 4-node graphs
    let mut rng = Rng::new(seed);
    let mut max_diff: f64 = 0.0;
    for trial in 0..5 {
        let mut edges = Vec::new();
        for i in 0..4u32 {
            for j in (i + 1)..4 {
                if rng.bernoulli(0.6) {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::new(4, &edges, DenseMatrix::identity(4), vec![0; 4])?;
        let adj = normalized_adjacency(&g, true)?;
        let e = DenseMatrix::from_vec(4, 3, (0..12).map(|_| rng.uniform_in(-1.0, 1.0)).collect())?;
        let analytic = cgnn1_analytic(&e, &adj, 1.0)?;
        let dt = 1e-3;
        let mut h = e.clone();
        for _ in 0..1000 {
            h = cgnn1_step(&h, &e, &adj, dt)?;
        }
        let diff = analytic.sub(&h)?.max_abs();
        max_diff = max_diff.max(diff);
        let _ = trial;
    }

    let passed = min_slope >= 1.9 && max_diff <= 1e-3;
    let mut report = SuiteReport {
        name: "integrator",
        passed,
        lines: Vec::new(),
    };
    report.line(format!(
        "local-error slope over dt sweep: {min_slope:.3} (need >= 1.9)"
    ));
    report.line(format!(
        "analytic vs fine-step Euler at t=1: max diff {max_diff:.2e} (limit 1e-3)"
    ));
    Ok(report)
}

/// Run every battery with its default sizes.
pub fn run_all(seed: u64) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        spikerep_suite(100, 1000, seed)?,
        gradcheck_suite(10, seed)?,
        bounds_suite(50, seed)?,
        integrator_suite(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_with_default_sizes() {
        // smaller trial counts here; the acceptance tests run full sizes
        let spike = spikerep_suite(20, 800, 1).unwrap();
        assert!(spike.passed, "{:?}", spike.lines);
        let grad = gradcheck_suite(2, 1).unwrap();
        assert!(grad.passed, "{:?}", grad.lines);
        let bounds = bounds_suite(10, 1).unwrap();
        assert!(bounds.passed, "{:?}", bounds.lines);
        let integ = integrator_suite(1).unwrap();
        assert!(integ.passed, "{:?}", integ.lines);
    }
}
