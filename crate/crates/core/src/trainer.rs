//! Reverse-mode gradients of the boundary and bulk losses and the
//! stochastic-gradient training loop.
//!
//! Gradients are taken at the forward-propagated state (the bulk loss
//! differentiates through the unrolled propagation, with the quadratic
//! local objective contributing source terms at hidden neurons). The
//! training loop is strictly sequential and bit-reproducible for a fixed
//! seed.

use thiserror::Error;

use crate::dataio::{Dataset, Record};
use crate::linalg::DenseMatrix;
use crate::loss::{dataset_losses, LossError, MinimizeMode};
use crate::septuple::{LossKind, Septuple, SeptupleError};
use crate::spectral::{analyze, thermo_record, EpochLoss, GramMode, SpectralError, ThermoTrace};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Septuple(#[from] SeptupleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("training diverged at epoch {epoch}: loss {loss:e}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("gradient overflow at neuron {neuron}")]
    GradientOverflow { neuron: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("checkpoint callback failed: {0}")]
    Checkpoint(String),
}

/// Training protocol parameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub shuffle: bool,
    /// Every this many epochs a full thermodynamic record is appended and
    /// the checkpoint callback fires; 0 disables checkpoints.
    pub checkpoint_every: usize,
    /// N_> threshold for the checkpoint spectral analysis.
    pub theta: f64,
    /// Descent iterations for the checkpointed bulk-loss minimization.
    pub descent_budget: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            loss_kind: LossKind::Boundary,
            shuffle: true,
            checkpoint_every: 0,
            theta: crate::spectral::DEFAULT_THETA,
            descent_budget: 30,
        }
    }
}

/// Gradient of a loss with respect to the masked weights and biases.
/// Entries outside the weight mask are exactly zero.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_weights: DenseMatrix,
    pub d_bias: Vec<f64>,
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Exact reverse-mode gradient of the selected loss at the forward-mode
/// state for a single record.
pub fn gradient(
    s: &Septuple,
    record: &Record,
    loss_kind: LossKind,
) -> Result<GradientSet, TrainError> {
    let n = s.n_total();
    let mut dw_edges = vec![0.0; s.edges().len()];
    let mut db = vec![0.0; n];
    accumulate_gradient(s, record, loss_kind, &mut dw_edges, &mut db)?;
    let mut d_weights = DenseMatrix::zeros(n, n);
    for (k, &(to, from)) in s.edges().iter().enumerate() {
        d_weights.set(to, from, dw_edges[k]);
    }
    Ok(GradientSet {
        d_weights,
        d_bias: db,
    })
}

/// Hot-path gradient accumulation into edge-indexed buffers; adds into the
/// accumulators rather than overwriting so batches can sum in record order.
fn accumulate_gradient(
    s: &Septuple,
    record: &Record,
    loss_kind: LossKind,
    acc_weights: &mut [f64],
    acc_bias: &mut [f64],
) -> Result<(), TrainError> {
    let topo = s.topology();
    let n = s.n_total();
    let layer_count = topo.layer_count();

    // forward pass with clamped inputs, keeping pre-activations
    let mut x = vec![0.0; n];
    for (k, &id) in topo.input_ids().iter().enumerate() {
        x[id] = record.input[k];
    }
    let mut y = vec![0.0; n];
    for k in 1..layer_count {
        for &i in &topo.layers()[k] {
            let mut acc = s.bias[i];
            for &j in &topo.layers()[k - 1] {
                acc += s.weight(i, j) * x[j];
            }
            if !acc.is_finite() {
                return Err(TrainError::GradientOverflow { neuron: i });
            }
            y[i] = acc;
            x[i] = s.activation.value(acc);
        }
    }

    // dy[i] = dH/dy_i
    let mut dy = vec![0.0; n];
    for (k, &i) in topo.output_ids().iter().enumerate() {
        let r = x[i] - record.target[k];
        dy[i] = r * s.activation.derivative(y[i]);
    }
    let m = s.objective_coeff;
    for k in (1..layer_count - 1).rev() {
        for &j in &topo.layers()[k] {
            let mut acc = 0.0;
            for &i in &topo.layers()[k + 1] {
                acc += s.weight(i, j) * dy[i];
            }
            if loss_kind == LossKind::Bulk {
                // the local objective -m/2 x_j^2 depends on x_j directly
                acc -= m * x[j];
            }
            let v = acc * s.activation.derivative(y[j]);
            if !v.is_finite() {
                return Err(TrainError::GradientOverflow { neuron: j });
            }
            dy[j] = v;
        }
    }

    for (k, &(to, from)) in s.edges().iter().enumerate() {
        acc_weights[k] += dy[to] * x[from];
    }
    for i in 0..n {
        acc_bias[i] += dy[i];
    }
    Ok(())
}

/// Stochastic gradient descent over shuffled mini-batches. Appends the
/// per-epoch losses (and, at checkpoint epochs, a full thermodynamic
/// record) to the trace; `on_checkpoint` fires at checkpoint epochs and
/// after the final epoch. Losses above 1e6 abort with a final checkpoint.
pub fn sgd_train(
    s: &mut Septuple,
    data: &Dataset,
    cfg: &TrainConfig,
    trace: &mut ThermoTrace,
    mut on_checkpoint: impl FnMut(&Septuple, usize) -> Result<(), TrainError>,
) -> Result<(), TrainError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if data.records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::BadConfig(
            "batch_size must be at least 1".into(),
        ));
    }
    if cfg.learning_rate < 0.0 {
        return Err(TrainError::BadConfig(format!(
            "learning_rate must be non-negative, got {}",
            cfg.learning_rate
        )));
    }
    check_dims(s, data)?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..data.records.len()).collect();
    let edge_count = s.edges().len();
    let n = s.n_total();
    let mut acc_w = vec![0.0; edge_count];
    let mut acc_b = vec![0.0; n];

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            indices.shuffle(&mut rng);
        }
        for batch in indices.chunks(cfg.batch_size) {
            acc_w.iter_mut().for_each(|v| *v = 0.0);
            acc_b.iter_mut().for_each(|v| *v = 0.0);
            for &idx in batch {
                accumulate_gradient(s, &data.records[idx], cfg.loss_kind, &mut acc_w, &mut acc_b)?;
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            s.apply_masked_step(&acc_w, &acc_b, scale);
        }
        s.epoch = epoch;

        let (u_boundary, u_bulk_forward) =
            dataset_losses(s, &data.records, MinimizeMode::Forward, 0)?;
        trace.epochs.push(EpochLoss {
            epoch,
            u_boundary,
            u_bulk_forward,
        });
        if !u_boundary.is_finite() || u_boundary > DIVERGENCE_LIMIT {
            on_checkpoint(s, epoch)?;
            return Err(TrainError::Diverged {
                epoch,
                loss: u_boundary,
            });
        }

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            append_record(s, data, cfg, trace, epoch)?;
            on_checkpoint(s, epoch)?;
        }
    }
    // final checkpoint if the loop did not just emit one
    if cfg.checkpoint_every == 0 || !cfg.epochs.is_multiple_of(cfg.checkpoint_every) {
        if cfg.checkpoint_every > 0 {
            append_record(s, data, cfg, trace, cfg.epochs)?;
        }
        on_checkpoint(s, cfg.epochs)?;
    }
    Ok(())
}

fn append_record(
    s: &Septuple,
    data: &Dataset,
    cfg: &TrainConfig,
    trace: &mut ThermoTrace,
    epoch: usize,
) -> Result<(), TrainError> {
    let report = analyze(s, data, cfg.theta, GramMode::MeanState)?;
    let (u_boundary, u_bulk) =
        dataset_losses(s, &data.records, MinimizeMode::Descent, cfg.descent_budget)?;
    trace
        .records
        .push(thermo_record(epoch, &report, u_bulk, u_boundary));
    Ok(())
}

fn check_dims(s: &Septuple, data: &Dataset) -> Result<(), TrainError> {
    if data.input_dim != s.topology().input_ids().len()
        || data.output_dim != s.topology().output_ids().len()
    {
        return Err(TrainError::BadConfig(format!(
            "dataset is {}-in/{}-out but the network has {} inputs and {} outputs",
            data.input_dim,
            data.output_dim,
            s.topology().input_ids().len(),
            s.topology().output_ids().len()
        )));
    }
    Ok(())
}

/// Central-difference gradient of the selected loss, the independent oracle
/// used by the gradient tests (step 1e-5 by default).
pub fn finite_difference_gradient(
    s: &Septuple,
    record: &Record,
    loss_kind: LossKind,
    step: f64,
) -> Result<GradientSet, TrainError> {
    let n = s.n_total();
    let mut d_weights = DenseMatrix::zeros(n, n);
    let mut d_bias = vec![0.0; n];
    let eval = |net: &Septuple| -> Result<f64, TrainError> {
        Ok(match loss_kind {
            LossKind::Boundary => {
                let state = net.fixed_state(&record.input)?;
                crate::loss::boundary_loss(&state, record, net)?.total
            }
            LossKind::Bulk => {
                crate::loss::minimize_bulk(record, net, MinimizeMode::Forward, 0)?
                    .loss
                    .total
            }
        })
    };
    for &(to, from) in s.edges() {
        let w0 = s.weight(to, from);
        let mut plus = s.clone();
        plus.set_weight(to, from, w0 + step)?;
        let mut minus = s.clone();
        minus.set_weight(to, from, w0 - step)?;
        d_weights.set(to, from, (eval(&plus)? - eval(&minus)?) / (2.0 * step));
    }
    for (i, slot) in d_bias.iter_mut().enumerate() {
        let mut plus = s.clone();
        plus.bias[i] += step;
        let mut minus = s.clone();
        minus.bias[i] -= step;
        *slot = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
    }
    Ok(GradientSet { d_weights, d_bias })
}

/// Largest relative gradient disagreement over all coordinates, with
/// |x − y| / (max(|x|, |y|) + floor) as the per-coordinate measure. The
/// floor absorbs the central-difference oracle's own resolution: at step h
/// its absolute error is of order eps/h, so coordinates far below the floor
/// are still required to agree absolutely to floor times the tolerance.
pub fn max_relative_gradient_error(a: &GradientSet, b: &GradientSet, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut check = |x: f64, y: f64| {
        let scale = x.abs().max(y.abs()) + floor;
        worst = worst.max((x - y).abs() / scale);
    };
    for (x, y) in a.d_weights.data().iter().zip(b.d_weights.data().iter()) {
        check(*x, *y);
    }
    for (x, y) in a.d_bias.iter().zip(b.d_bias.iter()) {
        check(*x, *y);
    }
    worst
}

/// Mean-over-window series: consecutive disjoint windows of the given
/// length, each averaged. Used by the trend checks on training traces.
pub fn windowed_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}
