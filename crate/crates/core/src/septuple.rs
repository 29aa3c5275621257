//! The network data model: neuron partition, masked weight matrix, biases,
//! activation, local-objective coefficient and loss selector, together with
//! the state propagation dynamics and a text checkpoint format.
//!
//! A network is layered: the weight mask only permits connections from layer
//! `k` to layer `k+1`, which makes the weight matrix nilpotent by
//! construction. Input neurons are clamped to the presented data rather than
//! encoded through the bias vector; their bias entries are stored but unused.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Deref;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Error)]
pub enum SeptupleError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value produced at neuron {neuron}")]
    NonFinite { neuron: usize },
    #[error("edge ({to}, {from}) is outside the layer mask")]
    EdgeOutsideMask { to: usize, from: usize },
    #[error("checkpoint parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Neuron index partition and layer structure.
///
/// Layer 0 is the input set and the last layer is the output set; every
/// neuron belongs to exactly one layer. Intermediate layers are hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    layers: Vec<Vec<usize>>,
    layer_of: Vec<usize>,
    input_ids: Vec<usize>,
    hidden_ids: Vec<usize>,
    output_ids: Vec<usize>,
}

impl Topology {
    /// Standard layered topology with consecutively numbered neurons:
    /// layer sizes `[4, 3, 2]` give inputs 0..4, hidden 4..7, outputs 7..9.
    pub fn layered(sizes: &[usize]) -> Result<Topology, SeptupleError> {
        if sizes.len() < 2 {
            return Err(SeptupleError::InvalidTopology(
                "need at least an input and an output layer".into(),
            ));
        }
        let mut layers = Vec::with_capacity(sizes.len());
        let mut next = 0usize;
        for &s in sizes {
            layers.push((next..next + s).collect::<Vec<_>>());
            next += s;
        }
        Topology::from_layers(layers)
    }

    /// General layer structure over explicit neuron ids. The layers must
    /// partition `0..n`; empty layers are permitted (an empty input layer
    /// models a net with no clamped boundary, used by sampling tests).
    pub fn from_layers(layers: Vec<Vec<usize>>) -> Result<Topology, SeptupleError> {
        if layers.len() < 2 {
            return Err(SeptupleError::InvalidTopology(
                "need at least an input and an output layer".into(),
            ));
        }
        let n: usize = layers.iter().map(|l| l.len()).sum();
        let mut seen = vec![false; n];
        for l in &layers {
            for &id in l {
                if id >= n {
                    return Err(SeptupleError::InvalidTopology(format!(
                        "neuron id {id} out of range 0..{n}"
                    )));
                }
                if seen[id] {
                    return Err(SeptupleError::InvalidTopology(format!(
                        "neuron id {id} appears in more than one layer"
                    )));
                }
                seen[id] = true;
            }
        }
        let mut layer_of = vec![0usize; n];
        for (k, l) in layers.iter().enumerate() {
            for &id in l {
                layer_of[id] = k;
            }
        }
        let input_ids = layers[0].clone();
        let output_ids = layers[layers.len() - 1].clone();
        let mut hidden_ids = Vec::new();
        for l in &layers[1..layers.len() - 1] {
            hidden_ids.extend_from_slice(l);
        }
        Ok(Topology {
            layers,
            layer_of,
            input_ids,
            hidden_ids,
            output_ids,
        })
    }

    pub fn n_total(&self) -> usize {
        self.layer_of.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<usize>] {
        &self.layers
    }

    pub fn layer_of(&self, neuron: usize) -> usize {
        self.layer_of[neuron]
    }

    pub fn input_ids(&self) -> &[usize] {
        &self.input_ids
    }

    pub fn hidden_ids(&self) -> &[usize] {
        &self.hidden_ids
    }

    pub fn output_ids(&self) -> &[usize] {
        &self.output_ids
    }

    pub fn is_input(&self, neuron: usize) -> bool {
        self.layer_of[neuron] == 0
    }

    pub fn is_output(&self, neuron: usize) -> bool {
        self.layer_of[neuron] == self.layers.len() - 1
    }

    pub fn is_boundary(&self, neuron: usize) -> bool {
        self.is_input(neuron) || self.is_output(neuron)
    }

    /// Whether the mask permits a connection `from -> to`.
    pub fn mask_allows(&self, to: usize, from: usize) -> bool {
        self.layer_of[to] == self.layer_of[from] + 1
    }
}

/// Componentwise activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        match self {
            Activation::Tanh => y.tanh(),
            Activation::Identity => y,
        }
    }

    /// First derivative; for tanh computed as 1 - tanh².
    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = y.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// Open range of attainable values, if bounded.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            Activation::Tanh => Some((-1.0, 1.0)),
            Activation::Identity => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Activation> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Loss selector carried by the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Boundary,
    Bulk,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Boundary => "boundary",
            LossKind::Bulk => "bulk",
        }
    }

    pub fn from_name(name: &str) -> Option<LossKind> {
        match name {
            "boundary" => Some(LossKind::Boundary),
            "bulk" => Some(LossKind::Bulk),
            _ => None,
        }
    }
}

/// State of all neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> StateVector {
        StateVector(vec![0.0; n])
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Outcome of iterative propagation.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: StateVector,
    pub steps: usize,
    pub converged: bool,
}

/// The network septuple: topology, masked weights, biases, activation,
/// local-objective coefficient and loss selector, plus bookkeeping fields
/// (seed, epoch) carried through checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Septuple {
    topology: Topology,
    weights: DenseMatrix,
    /// Mask entries as (to, from), ordered by receiving layer then ids.
    edges: Vec<(usize, usize)>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Coefficient of the quadratic local objective.
    pub objective_coeff: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
    pub epoch: usize,
}

impl Septuple {
    /// Zero-weight, zero-bias network over the given topology.
    pub fn zeroed(topology: Topology, activation: Activation) -> Septuple {
        let n = topology.n_total();
        let edges = enumerate_edges(&topology);
        Septuple {
            topology,
            weights: DenseMatrix::zeros(n, n),
            edges,
            bias: vec![0.0; n],
            activation,
            objective_coeff: 0.0,
            loss_kind: LossKind::Boundary,
            seed: 0,
            epoch: 0,
        }
    }

    /// Seeded random initialization: each weight uniform on
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases zero.
    pub fn random(topology: Topology, activation: Activation, seed: u64) -> Septuple {
        let mut s = Septuple::zeroed(topology, activation);
        s.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 1..s.topology.layer_count() {
            let fan_in = s.topology.layers()[k - 1].len();
            if fan_in == 0 {
                continue;
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            // Same traversal order as the edge list, for reproducibility.
            for to_idx in 0..s.topology.layers()[k].len() {
                for from_idx in 0..s.topology.layers()[k - 1].len() {
                    let to = s.topology.layers()[k][to_idx];
                    let from = s.topology.layers()[k - 1][from_idx];
                    let w = rng.random_range(-bound..=bound);
                    s.weights.set(to, from, w);
                }
            }
        }
        s
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_total(&self) -> usize {
        self.topology.n_total()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weight(&self, to: usize, from: usize) -> f64 {
        self.weights.get(to, from)
    }

    pub fn set_weight(&mut self, to: usize, from: usize, w: f64) -> Result<(), SeptupleError> {
        if !self.topology.mask_allows(to, from) {
            return Err(SeptupleError::EdgeOutsideMask { to, from });
        }
        self.weights.set(to, from, w);
        Ok(())
    }

    /// In-place masked gradient step: `w_e -= scale * dw[e]` per edge and
    /// `b_i -= scale * db[i]` on non-input neurons. `dw` is indexed like
    /// `edges()`.
    pub fn apply_masked_step(&mut self, dw_edges: &[f64], db: &[f64], scale: f64) {
        assert_eq!(dw_edges.len(), self.edges.len());
        assert_eq!(db.len(), self.bias.len());
        for (k, &(to, from)) in self.edges.iter().enumerate() {
            let w = self.weights.get(to, from) - scale * dw_edges[k];
            self.weights.set(to, from, w);
        }
        for (i, (b, d)) in self.bias.iter_mut().zip(db.iter()).enumerate() {
            if self.topology.layer_of[i] != 0 {
                *b -= scale * d;
            }
        }
    }

    /// Pre-activations `w x + b` for every neuron.
    pub fn preactivations(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        for &(to, from) in &self.edges {
            y[to] += self.weights.get(to, from) * x[from];
        }
        y
    }

    /// One application of the update map `x -> f(w x + b)` on every
    /// component. No clamping; inputs move to `f(b)`.
    pub fn forward_step(&self, x: &StateVector) -> Result<StateVector, SeptupleError> {
        if x.len() != self.n_total() {
            return Err(SeptupleError::DimensionMismatch(format!(
                "state has {} components, network has {}",
                x.len(),
                self.n_total()
            )));
        }
        let y = self.preactivations(x);
        let mut out = Vec::with_capacity(y.len());
        for (i, yi) in y.iter().enumerate() {
            let v = self.activation.value(*yi);
            if !v.is_finite() {
                return Err(SeptupleError::NonFinite { neuron: i });
            }
            out.push(v);
        }
        Ok(StateVector(out))
    }

    fn clamp_inputs(&self, x: &mut StateVector, inputs: &[f64]) {
        for (k, &id) in self.topology.input_ids().iter().enumerate() {
            x.0[id] = inputs[k];
        }
    }

    /// Fixed state of a layered network: inputs clamped to `inputs`, then
    /// exactly `L-1` update steps, after which every downstream component is
    /// exactly stationary.
    pub fn fixed_state(&self, inputs: &[f64]) -> Result<StateVector, SeptupleError> {
        self.check_input_dim(inputs)?;
        let mut x = StateVector::zeros(self.n_total());
        self.clamp_inputs(&mut x, inputs);
        for _ in 0..self.topology.layer_count() - 1 {
            let mut next = self.forward_step(&x)?;
            self.clamp_inputs(&mut next, inputs);
            x = next;
        }
        Ok(x)
    }

    /// Fixed state with output components overwritten by `targets`
    /// (boundary conditions imposed exactly, hidden states by forward
    /// propagation).
    pub fn clamped_state(
        &self,
        inputs: &[f64],
        targets: &[f64],
    ) -> Result<StateVector, SeptupleError> {
        if targets.len() != self.topology.output_ids().len() {
            return Err(SeptupleError::DimensionMismatch(format!(
                "target has {} components, network has {} outputs",
                targets.len(),
                self.topology.output_ids().len()
            )));
        }
        let mut x = self.fixed_state(inputs)?;
        for (k, &id) in self.topology.output_ids().iter().enumerate() {
            x.0[id] = targets[k];
        }
        Ok(x)
    }

    /// Iterative propagation with clamped inputs. Runs until consecutive
    /// states differ by less than `tol` in the sup norm or `max_steps` is
    /// reached; non-convergence is reported via the flag, not an error.
    pub fn propagate(
        &self,
        inputs: &[f64],
        max_steps: usize,
        tol: f64,
    ) -> Result<Propagation, SeptupleError> {
        self.check_input_dim(inputs)?;
        let mut x = StateVector::zeros(self.n_total());
        self.clamp_inputs(&mut x, inputs);
        let mut steps = 0;
        while steps < max_steps {
            let mut next = self.forward_step(&x)?;
            self.clamp_inputs(&mut next, inputs);
            steps += 1;
            let diff = next.max_abs_diff(&x);
            x = next;
            if diff < tol {
                return Ok(Propagation {
                    state: x,
                    steps,
                    converged: true,
                });
            }
        }
        Ok(Propagation {
            state: x,
            steps,
            converged: false,
        })
    }

    fn check_input_dim(&self, inputs: &[f64]) -> Result<(), SeptupleError> {
        if inputs.len() != self.topology.input_ids().len() {
            return Err(SeptupleError::DimensionMismatch(format!(
                "input has {} components, network has {} input neurons",
                inputs.len(),
                self.topology.input_ids().len()
            )));
        }
        if let Some(i) = inputs.iter().position(|v| !v.is_finite()) {
            return Err(SeptupleError::NonFinite {
                neuron: self.topology.input_ids()[i],
            });
        }
        Ok(())
    }

    /// Structural constraint report; empty iff the septuple is well formed.
    /// Nilpotency is checked by explicit matrix powers up to the layer count.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let n = self.n_total();
        let edge_set: HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        for i in 0..n {
            for j in 0..n {
                let w = self.weights.get(i, j);
                if !w.is_finite() {
                    violations.push(format!("weight ({i},{j}) is not finite"));
                }
                if w != 0.0 && !edge_set.contains(&(i, j)) {
                    if self.topology.is_input(i) {
                        violations.push(format!("input neuron {i} has incoming edge from {j}"));
                    } else if self.topology.is_output(j) {
                        violations.push(format!("output neuron {j} has outgoing edge to {i}"));
                    } else {
                        violations.push(format!("weight ({i},{j}) outside layer mask is nonzero"));
                    }
                }
            }
        }
        for (i, b) in self.bias.iter().enumerate() {
            if !b.is_finite() {
                violations.push(format!("bias {i} is not finite"));
            }
        }
        // w^L = 0, exact zeros expected from the masked structure
        let l = self.topology.layer_count();
        let mut power = self.weights.clone();
        for _ in 1..l {
            power = power.matmul(&self.weights);
        }
        if power.max_abs() != 0.0 {
            violations.push(format!(
                "weight matrix is not nilpotent at power {l} (max |entry| = {:e})",
                power.max_abs()
            ));
        }
        violations
    }

    /// Serialize to the text checkpoint format. All reals use the shortest
    /// decimal form that round-trips to the identical 64-bit value.
    pub fn to_checkpoint_string(&self) -> String {
        let mut out = String::new();
        out.push_str("thermolearn-septuple v1\n");
        let _ = writeln!(out, "n_total {}", self.n_total());
        let _ = writeln!(out, "layer_count {}", self.topology.layer_count());
        for layer in self.topology.layers() {
            out.push_str("layer");
            for &id in layer {
                let _ = write!(out, " {id}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "activation {}", self.activation.name());
        let _ = writeln!(out, "objective_coeff {}", self.objective_coeff);
        let _ = writeln!(out, "loss_kind {}", self.loss_kind.name());
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "epoch {}", self.epoch);
        out.push_str("bias");
        for b in &self.bias {
            let _ = write!(out, " {b}");
        }
        out.push('\n');
        let _ = writeln!(out, "edges {}", self.edges.len());
        for &(to, from) in &self.edges {
            let _ = writeln!(out, "{to} {from} {}", self.weights.get(to, from));
        }
        out.push_str("end\n");
        out
    }

    pub fn from_checkpoint_string(text: &str) -> Result<Septuple, SeptupleError> {
        let mut lines = text.lines().enumerate();
        let mut next_line = |expect: &str| -> Result<(usize, String), SeptupleError> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.to_string()))
                .ok_or_else(|| SeptupleError::Parse {
                    line: 0,
                    message: format!("unexpected end of file, expected {expect}"),
                })
        };

        let (ln, header) = next_line("header")?;
        if header.trim() != "thermolearn-septuple v1" {
            return Err(SeptupleError::Parse {
                line: ln,
                message: format!("unrecognized header {header:?}"),
            });
        }
        let (_, n_total) = parse_kv_usize(next_line("n_total")?, "n_total")?;
        let (_, layer_count) = parse_kv_usize(next_line("layer_count")?, "layer_count")?;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let (ln, line) = next_line("layer")?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some("layer") {
                return Err(SeptupleError::Parse {
                    line: ln,
                    message: "expected a layer line".into(),
                });
            }
            let ids = toks
                .map(|t| {
                    t.parse::<usize>().map_err(|e| SeptupleError::Parse {
                        line: ln,
                        message: format!("bad neuron id {t:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            layers.push(ids);
        }
        let topology = Topology::from_layers(layers).map_err(|e| SeptupleError::Parse {
            line: 0,
            message: format!("bad topology: {e}"),
        })?;
        if topology.n_total() != n_total {
            return Err(SeptupleError::Parse {
                line: 0,
                message: format!(
                    "declared n_total {n_total} but layers cover {} neurons",
                    topology.n_total()
                ),
            });
        }

        let (ln, line) = next_line("activation")?;
        let activation = parse_kv_str(&line, "activation")
            .and_then(Activation::from_name)
            .ok_or_else(|| SeptupleError::Parse {
                line: ln,
                message: "bad activation line".into(),
            })?;
        let (_, objective_coeff) = parse_kv_f64(next_line("objective_coeff")?, "objective_coeff")?;
        let (ln, line) = next_line("loss_kind")?;
        let loss_kind = parse_kv_str(&line, "loss_kind")
            .and_then(LossKind::from_name)
            .ok_or_else(|| SeptupleError::Parse {
                line: ln,
                message: "bad loss_kind line".into(),
            })?;
        let (ln, line) = next_line("seed")?;
        let seed = parse_kv_str(&line, "seed")
            .and_then(|v| v.parse::<u64>().ok())
            .ok_or_else(|| SeptupleError::Parse {
                line: ln,
                message: "bad seed line".into(),
            })?;
        let (_, epoch) = parse_kv_usize(next_line("epoch")?, "epoch")?;

        let (ln, line) = next_line("bias")?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("bias") {
            return Err(SeptupleError::Parse {
                line: ln,
                message: "expected the bias line".into(),
            });
        }
        let bias = toks
            .map(|t| parse_finite_f64(t, ln))
            .collect::<Result<Vec<_>, _>>()?;
        if bias.len() != n_total {
            return Err(SeptupleError::Parse {
                line: ln,
                message: format!("bias has {} entries, expected {n_total}", bias.len()),
            });
        }

        let (_, edge_count) = parse_kv_usize(next_line("edges")?, "edges")?;
        let mut s = Septuple::zeroed(topology, activation);
        s.bias = bias;
        s.objective_coeff = objective_coeff;
        s.loss_kind = loss_kind;
        s.seed = seed;
        s.epoch = epoch;
        if edge_count != s.edges.len() {
            return Err(SeptupleError::Parse {
                line: 0,
                message: format!(
                    "checkpoint declares {edge_count} edges but the topology mask has {}",
                    s.edges.len()
                ),
            });
        }
        for _ in 0..edge_count {
            let (ln, line) = next_line("edge")?;
            let mut toks = line.split_whitespace();
            let to = toks
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| SeptupleError::Parse {
                    line: ln,
                    message: "bad edge destination".into(),
                })?;
            let from = toks
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| SeptupleError::Parse {
                    line: ln,
                    message: "bad edge source".into(),
                })?;
            let w = toks
                .next()
                .map(|t| parse_finite_f64(t, ln))
                .transpose()?
                .ok_or_else(|| SeptupleError::Parse {
                    line: ln,
                    message: "missing edge weight".into(),
                })?;
            s.set_weight(to, from, w)?;
        }
        let (ln, end) = next_line("end")?;
        if end.trim() != "end" {
            return Err(SeptupleError::Parse {
                line: ln,
                message: "missing end marker".into(),
            });
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<(), SeptupleError> {
        std::fs::write(path, self.to_checkpoint_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Septuple, SeptupleError> {
        let text = std::fs::read_to_string(path)?;
        Septuple::from_checkpoint_string(&text)
    }
}

fn enumerate_edges(topology: &Topology) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for k in 1..topology.layer_count() {
        for &to in &topology.layers()[k] {
            for &from in &topology.layers()[k - 1] {
                edges.push((to, from));
            }
        }
    }
    edges
}

fn parse_kv_str<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return None;
    }
    toks.next()
}

fn parse_kv_usize(entry: (usize, String), key: &str) -> Result<(usize, usize), SeptupleError> {
    let (ln, line) = entry;
    parse_kv_str(&line, key)
        .and_then(|v| v.parse::<usize>().ok())
        .map(|v| (ln, v))
        .ok_or_else(|| SeptupleError::Parse {
            line: ln,
            message: format!("expected `{key} <count>`"),
        })
}

fn parse_kv_f64(entry: (usize, String), key: &str) -> Result<(usize, f64), SeptupleError> {
    let (ln, line) = entry;
    let raw = parse_kv_str(&line, key).ok_or_else(|| SeptupleError::Parse {
        line: ln,
        message: format!("expected `{key} <value>`"),
    })?;
    Ok((ln, parse_finite_f64(raw, ln)?))
}

fn parse_finite_f64(token: &str, line: usize) -> Result<f64, SeptupleError> {
    let v = token.parse::<f64>().map_err(|e| SeptupleError::Parse {
        line,
        message: format!("bad real {token:?}: {e}"),
    })?;
    if !v.is_finite() {
        return Err(SeptupleError::Parse {
            line,
            message: format!("non-finite real {token:?}"),
        });
    }
    Ok(v)
}
