//! Boundary and bulk loss functions, and the constrained hidden-state
//! minimizer behind the bulk loss.
//!
//! Boundary loss: ½ Σ over boundary neurons of (x_i − x∂_i)²; with clamped
//! inputs only output mismatches contribute.
//!
//! Bulk loss: ½ Σ over non-input neurons of (x_i − f(Σ w_ij x_j + b_i))² −
//! m x_i². Input neurons are clamped by construction, so they carry neither
//! a residual nor a local-objective term here; the sampling module has a
//! full-sum variant for ensembles where inputs fluctuate.

use thiserror::Error;

use crate::dataio::Record;
use crate::septuple::{Septuple, SeptupleError, StateVector};

#[derive(Debug, Error)]
pub enum LossError {
    #[error(transparent)]
    Septuple(#[from] SeptupleError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossValueKind {
    Boundary,
    Bulk,
}

/// A loss with its per-neuron decomposition; `total` is the exact sum of
/// `per_neuron`.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub total: f64,
    pub per_neuron: Vec<f64>,
    pub kind: LossValueKind,
}

impl LossValue {
    fn from_contributions(per_neuron: Vec<f64>, kind: LossValueKind) -> LossValue {
        let total = per_neuron.iter().sum();
        LossValue {
            total,
            per_neuron,
            kind,
        }
    }
}

/// Squared error over the boundary: ½ Σ_{i ∈ in ∪ out} (x_i − x∂_i)².
pub fn boundary_loss(
    state: &StateVector,
    record: &Record,
    s: &Septuple,
) -> Result<LossValue, LossError> {
    let topo = s.topology();
    if record.input.len() != topo.input_ids().len()
        || record.target.len() != topo.output_ids().len()
    {
        return Err(LossError::DimensionMismatch(format!(
            "record is {}-in/{}-out, topology wants {}/{}",
            record.input.len(),
            record.target.len(),
            topo.input_ids().len(),
            topo.output_ids().len()
        )));
    }
    if state.len() != topo.n_total() {
        return Err(LossError::DimensionMismatch(format!(
            "state has {} components, network has {}",
            state.len(),
            topo.n_total()
        )));
    }
    let mut per_neuron = vec![0.0; topo.n_total()];
    for (k, &id) in topo.input_ids().iter().enumerate() {
        let d = state[id] - record.input[k];
        per_neuron[id] = 0.5 * d * d;
    }
    for (k, &id) in topo.output_ids().iter().enumerate() {
        let d = state[id] - record.target[k];
        per_neuron[id] = 0.5 * d * d;
    }
    Ok(LossValue::from_contributions(
        per_neuron,
        LossValueKind::Boundary,
    ))
}

/// Bulk loss at a given state: per non-input neuron
/// ½ [(x_i − f(Σ w_ij x_j + b_i))² − m x_i²].
pub fn bulk_loss(state: &StateVector, s: &Septuple) -> Result<LossValue, LossError> {
    if state.len() != s.n_total() {
        return Err(LossError::DimensionMismatch(format!(
            "state has {} components, network has {}",
            state.len(),
            s.n_total()
        )));
    }
    let y = s.preactivations(state);
    let m = s.objective_coeff;
    let mut per_neuron = vec![0.0; s.n_total()];
    for i in 0..s.n_total() {
        if s.topology().is_input(i) {
            continue;
        }
        let r = state[i] - s.activation.value(y[i]);
        per_neuron[i] = 0.5 * (r * r - m * state[i] * state[i]);
    }
    Ok(LossValue::from_contributions(
        per_neuron,
        LossValueKind::Bulk,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeMode {
    /// Hidden states by forward propagation: hidden residuals vanish and the
    /// loss concentrates on the output residuals and the potential.
    Forward,
    /// Gradient refinement of the hidden states, starting from the forward
    /// state. Never worse than forward mode for m = 0.
    Descent,
}

/// Result of a constrained bulk-loss minimization.
#[derive(Debug, Clone)]
pub struct MinimizedBulk {
    pub state: StateVector,
    pub loss: LossValue,
    /// False when descent was aborted after repeated uphill proposals.
    pub clean: bool,
    pub iterations: usize,
}

const DESCENT_STEP: f64 = 0.01;
const MAX_CONSECUTIVE_REJECTS: usize = 10;

/// Minimize the bulk loss over hidden states, with the boundary clamped to
/// the record. Proposals that fail to decrease the loss halve the step; ten
/// consecutive rejections abort and return the best iterate.
pub fn minimize_bulk(
    record: &Record,
    s: &Septuple,
    mode: MinimizeMode,
    budget: usize,
) -> Result<MinimizedBulk, LossError> {
    let mut state = s.clamped_state(&record.input, &record.target)?;
    let mut loss = bulk_loss(&state, s)?;
    if matches!(mode, MinimizeMode::Forward) || s.topology().hidden_ids().is_empty() {
        return Ok(MinimizedBulk {
            state,
            loss,
            clean: true,
            iterations: 0,
        });
    }

    let hidden = s.topology().hidden_ids();
    let range = s.activation.range();
    let mut step = DESCENT_STEP;
    let mut rejects = 0usize;
    let mut iterations = 0usize;
    for _ in 0..budget {
        iterations += 1;
        let grad = hidden_gradient(&state, s, hidden);
        let mut candidate = state.clone();
        for (k, &id) in hidden.iter().enumerate() {
            let mut v = candidate.0[id] - step * grad[k];
            if let Some((lo, hi)) = range {
                // keep iterates inside the open activation box
                let eps = 1e-9;
                v = v.clamp(lo + eps, hi - eps);
            }
            candidate.0[id] = v;
        }
        let candidate_loss = bulk_loss(&candidate, s)?;
        if candidate_loss.total <= loss.total {
            state = candidate;
            loss = candidate_loss;
            rejects = 0;
        } else {
            step *= 0.5;
            rejects += 1;
            if rejects >= MAX_CONSECUTIVE_REJECTS {
                return Ok(MinimizedBulk {
                    state,
                    loss,
                    clean: false,
                    iterations,
                });
            }
        }
    }
    Ok(MinimizedBulk {
        state,
        loss,
        clean: true,
        iterations,
    })
}

/// Gradient of the bulk loss with respect to the hidden components:
/// dH/dx_j = r_j − Σ_i r_i f'(y_i) w_ij − m x_j (i over non-input neurons).
fn hidden_gradient(state: &StateVector, s: &Septuple, hidden: &[usize]) -> Vec<f64> {
    let n = s.n_total();
    let y = s.preactivations(state);
    let mut residual = vec![0.0; n];
    let mut fprime = vec![0.0; n];
    for i in 0..n {
        if s.topology().is_input(i) {
            continue;
        }
        residual[i] = state[i] - s.activation.value(y[i]);
        fprime[i] = s.activation.derivative(y[i]);
    }
    let mut grad_full = vec![0.0; n];
    for i in 0..n {
        if !s.topology().is_input(i) {
            grad_full[i] = residual[i] - s.objective_coeff * state[i];
        }
    }
    for &(to, from) in s.edges() {
        grad_full[from] -= residual[to] * fprime[to] * s.weight(to, from);
    }
    hidden.iter().map(|&id| grad_full[id]).collect()
}

/// Dataset means of the boundary loss and of the minimized bulk loss,
/// accumulated in record order.
pub fn dataset_losses(
    s: &Septuple,
    records: &[Record],
    mode: MinimizeMode,
    budget: usize,
) -> Result<(f64, f64), LossError> {
    let mut sum_boundary = 0.0;
    let mut sum_bulk = 0.0;
    for r in records {
        let free = s.fixed_state(&r.input)?;
        sum_boundary += boundary_loss(&free, r, s)?.total;
        sum_bulk += minimize_bulk(r, s, mode, budget)?.loss.total;
    }
    let n = records.len().max(1) as f64;
    Ok((sum_boundary / n, sum_bulk / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::septuple::{Activation, Topology};

    fn chain_net() -> Septuple {
        let topo = Topology::layered(&[1, 1]).unwrap();
        let mut s = Septuple::zeroed(topo, Activation::Tanh);
        s.set_weight(1, 0, 1.0).unwrap();
        s
    }

    #[test]
    fn boundary_loss_zero_on_match() {
        let s = chain_net();
        let record = Record {
            input: vec![0.5],
            target: vec![0.5f64.tanh()],
        };
        let state = s.fixed_state(&record.input).unwrap();
        let l = boundary_loss(&state, &record, &s).unwrap();
        assert!(l.total.abs() < 1e-30);
    }

    #[test]
    fn boundary_loss_single_output() {
        // state 0.5 vs target 0.9 -> half of 0.4^2
        let s = chain_net();
        let record = Record {
            input: vec![0.0],
            target: vec![0.9],
        };
        let state = StateVector(vec![0.0, 0.5]);
        let l = boundary_loss(&state, &record, &s).unwrap();
        assert!((l.total - 0.08).abs() < 1e-15);
        assert_eq!(l.per_neuron[0], 0.0);
    }

    #[test]
    fn boundary_loss_two_outputs() {
        let topo = Topology::layered(&[1, 2]).unwrap();
        let s = Septuple::zeroed(topo, Activation::Tanh);
        let record = Record {
            input: vec![0.0],
            target: vec![0.1, 0.3],
        };
        // offsets (0.1, -0.2)
        let state = StateVector(vec![0.0, 0.2, 0.1]);
        let l = boundary_loss(&state, &record, &s).unwrap();
        assert!((l.total - 0.025).abs() < 1e-15);
    }

    #[test]
    fn boundary_total_matches_contributions() {
        let s = chain_net();
        let record = Record {
            input: vec![0.3],
            target: vec![-0.2],
        };
        let state = s.fixed_state(&record.input).unwrap();
        let l = boundary_loss(&state, &record, &s).unwrap();
        let sum: f64 = l.per_neuron.iter().sum();
        assert_eq!(l.total, sum);
        // hidden neurons contribute nothing to a boundary loss
        for &id in s.topology().hidden_ids() {
            assert_eq!(l.per_neuron[id], 0.0);
        }
    }

    #[test]
    fn bulk_loss_vanishes_at_fixed_point_with_zero_objective() {
        let topo = Topology::layered(&[2, 3, 1]).unwrap();
        let s = Septuple::random(topo, Activation::Tanh, 5);
        let state = s.fixed_state(&[0.2, -0.4]).unwrap();
        let l = bulk_loss(&state, &s).unwrap();
        assert!(l.total.abs() < 1e-28);
    }

    #[test]
    fn bulk_loss_with_objective_on_chain_fixed_point() {
        let mut s = chain_net();
        s.objective_coeff = 0.1;
        let state = s.fixed_state(&[0.5]).unwrap();
        let l = bulk_loss(&state, &s).unwrap();
        let expected = -0.05 * 0.5f64.tanh().powi(2);
        assert!((l.total - expected).abs() < 1e-15);
        // matches the quoted value to its rounding
        assert!((l.total - (-0.0106785)).abs() < 2e-6);
    }

    #[test]
    fn bulk_loss_clamped_output_residual() {
        let s = chain_net();
        let record = Record {
            input: vec![0.5],
            target: vec![0.9],
        };
        let state = s.clamped_state(&record.input, &record.target).unwrap();
        let l = bulk_loss(&state, &s).unwrap();
        let expected = 0.5 * (0.9 - 0.5f64.tanh()).powi(2);
        assert!((l.total - expected).abs() < 1e-15);
        assert!((l.total - 0.095866).abs() < 1e-5);
    }

    #[test]
    fn unsupervised_net_has_zero_bulk_loss() {
        // empty output layer: boundary is input-only, forward mode zeroes
        // every residual and m = 0 leaves nothing
        let topo = Topology::from_layers(vec![vec![0, 1], vec![2, 3], vec![]]).unwrap();
        let mut s = Septuple::zeroed(topo, Activation::Tanh);
        s.set_weight(2, 0, 0.7).unwrap();
        s.set_weight(3, 1, -0.4).unwrap();
        let record = Record {
            input: vec![0.5, -0.1],
            target: vec![],
        };
        let min = minimize_bulk(&record, &s, MinimizeMode::Forward, 0).unwrap();
        assert_eq!(min.loss.total, 0.0);
    }

    #[test]
    fn forward_mode_reproduces_output_residual() {
        let s = chain_net();
        let record = Record {
            input: vec![0.5],
            target: vec![0.9],
        };
        let min = minimize_bulk(&record, &s, MinimizeMode::Forward, 0).unwrap();
        let expected = 0.5 * (0.9 - 0.5f64.tanh()).powi(2);
        assert!((min.loss.total - expected).abs() < 1e-15);
        // boundary components stay exactly clamped
        assert_eq!(min.state[0], 0.5);
        assert_eq!(min.state[1], 0.9);
    }

    #[test]
    fn descent_budget_zero_equals_forward() {
        let topo = Topology::layered(&[2, 4, 2]).unwrap();
        let s = Septuple::random(topo, Activation::Tanh, 11);
        let record = Record {
            input: vec![0.4, -0.6],
            target: vec![0.9, -0.9],
        };
        let f = minimize_bulk(&record, &s, MinimizeMode::Forward, 0).unwrap();
        let d = minimize_bulk(&record, &s, MinimizeMode::Descent, 0).unwrap();
        assert_eq!(f.loss.total, d.loss.total);
        assert_eq!(f.state, d.state);
    }

    #[test]
    fn descent_never_exceeds_forward_value() {
        let topo = Topology::layered(&[3, 5, 4, 2]).unwrap();
        for seed in 0..20u64 {
            let s = Septuple::random(topo.clone(), Activation::Tanh, seed);
            let record = Record {
                input: vec![0.3, -0.2, 0.8],
                target: vec![0.9, -0.9],
            };
            let f = minimize_bulk(&record, &s, MinimizeMode::Forward, 0).unwrap();
            let d = minimize_bulk(&record, &s, MinimizeMode::Descent, 40).unwrap();
            assert!(d.loss.total <= f.loss.total);
            // boundary clamp survives descent
            assert_eq!(d.state[0], 0.3);
            assert_eq!(d.state[s.topology().output_ids()[0]], 0.9);
        }
    }

    #[test]
    fn descent_strictly_improves_on_mismatched_output() {
        let topo = Topology::layered(&[2, 4, 1]).unwrap();
        let s = Septuple::random(topo, Activation::Tanh, 3);
        let record = Record {
            input: vec![0.5, 0.5],
            target: vec![0.9],
        };
        let f = minimize_bulk(&record, &s, MinimizeMode::Forward, 0).unwrap();
        let d = minimize_bulk(&record, &s, MinimizeMode::Descent, 50).unwrap();
        assert!(f.loss.total > 0.0);
        assert!(d.loss.total < f.loss.total);
    }

    #[test]
    fn descent_iterates_are_monotone() {
        let topo = Topology::layered(&[2, 3, 1]).unwrap();
        let s = Septuple::random(topo, Activation::Tanh, 8);
        let record = Record {
            input: vec![0.1, -0.7],
            target: vec![0.9],
        };
        let mut last = minimize_bulk(&record, &s, MinimizeMode::Descent, 0)
            .unwrap()
            .loss
            .total;
        for budget in 1..30 {
            let v = minimize_bulk(&record, &s, MinimizeMode::Descent, budget)
                .unwrap()
                .loss
                .total;
            assert!(v <= last + 1e-18, "budget {budget}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn bulk_nonnegative_for_zero_objective() {
        let topo = Topology::layered(&[2, 3, 2]).unwrap();
        let s = Septuple::random(topo, Activation::Tanh, 21);
        for k in 0..50 {
            let t = k as f64 / 50.0;
            let state = StateVector(vec![
                0.5 * t,
                -0.3,
                0.2 * t - 0.1,
                0.7 - t,
                0.1,
                0.4 * t,
                -0.8 * t,
            ]);
            let l = bulk_loss(&state, &s).unwrap();
            assert!(l.total >= 0.0);
        }
    }
}
