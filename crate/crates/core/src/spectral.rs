//! The residual Gram operator, its spectrum and the thermodynamic
//! diagnostics built on it: partition function, free energy, average loss,
//! entropies, complexity, Laplacian, log-moments, gap-based temperature
//! estimates and the two-peak toy model.
//!
//! The operator is G = (I − D W)ᵀ(I − D W) where D is the diagonal of
//! activation derivatives evaluated at the dataset mean state and W the
//! masked weight matrix. For layered networks D W is nilpotent, so
//! det G = 1 and the log-eigenvalues sum to zero; that conservation law is
//! the backbone of several invariants checked in the test suites.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dataio::Dataset;
use crate::linalg::{sym_eig, DenseMatrix, LinalgError};
use crate::septuple::{Septuple, SeptupleError};

/// Eigenvalues with |log λ| below this are treated as pinned (non-dynamical)
/// when locating spectral gaps and drawing histograms.
pub const PINNED_LOG_EPS: f64 = 1e-12;

/// Default threshold θ quantifying "much greater than 1/β".
pub const DEFAULT_THETA: f64 = 10.0;

const LAMBDA_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Septuple(#[from] SeptupleError),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("log argument 1 - βm + βλ = {argument:e} is not positive for eigenvalue {index} (λ = {eigenvalue:e})")]
    Domain {
        index: usize,
        eigenvalue: f64,
        argument: f64,
    },
    #[error("count {n} out of range 1..={n_total}")]
    OutOfRange { n: usize, n_total: usize },
    #[error("inverse temperature must be positive, got {0}")]
    NonPositiveBeta(f64),
}

/// Ensemble-averaged state vector: arithmetic mean of the boundary-clamped
/// fixed states over all records.
pub fn mean_state(s: &Septuple, data: &Dataset) -> Result<Vec<f64>, SpectralError> {
    if data.records.is_empty() {
        return Err(SpectralError::EmptyDataset);
    }
    let mut mean = vec![0.0; s.n_total()];
    for r in &data.records {
        let state = s.clamped_state(&r.input, &r.target)?;
        for (m, v) in mean.iter_mut().zip(state.iter()) {
            *m += v;
        }
    }
    let n = data.records.len() as f64;
    for m in mean.iter_mut() {
        *m /= n;
    }
    Ok(mean)
}

/// Diagonal of activation derivatives at the linearization point:
/// d_i = f'(Σ_j w_ij mean_j + b_i).
pub fn fprime_diag(s: &Septuple, mean: &[f64]) -> Vec<f64> {
    let y = s.preactivations(mean);
    y.iter().map(|&yi| s.activation.derivative(yi)).collect()
}

/// The symmetric operator G = (I − D W)ᵀ(I − D W).
pub fn residual_gram(s: &Septuple, fprime: &[f64]) -> DenseMatrix {
    let n = s.n_total();
    let mut m = DenseMatrix::identity(n);
    for &(to, from) in s.edges() {
        let v = m.get(to, from) - fprime[to] * s.weight(to, from);
        m.set(to, from, v);
    }
    m.transpose().matmul(&m)
}

/// Record-averaged variant: mean over records of G evaluated at each
/// record's clamped state. Uses the identity
/// avg G = I − D̄W − WᵀD̄ + Wᵀ diag(avg d²) W with D̄ the mean derivative
/// diagonal, so only two diagonals are accumulated.
pub fn record_averaged_gram(s: &Septuple, data: &Dataset) -> Result<DenseMatrix, SpectralError> {
    if data.records.is_empty() {
        return Err(SpectralError::EmptyDataset);
    }
    let n = s.n_total();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for r in &data.records {
        let state = s.clamped_state(&r.input, &r.target)?;
        let y = s.preactivations(&state);
        for i in 0..n {
            let d = s.activation.derivative(y[i]);
            d1[i] += d;
            d2[i] += d * d;
        }
    }
    let count = data.records.len() as f64;
    for i in 0..n {
        d1[i] /= count;
        d2[i] /= count;
    }
    let mut g = DenseMatrix::identity(n);
    for &(to, from) in s.edges() {
        let w = s.weight(to, from);
        g.set(to, from, g.get(to, from) - d1[to] * w);
        g.set(from, to, g.get(from, to) - d1[to] * w);
    }
    // Wᵀ diag(d2) W: group in-edges by receiving neuron.
    let mut by_receiver: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(to, from) in s.edges() {
        by_receiver[to].push((from, s.weight(to, from)));
    }
    for (to, ins) in by_receiver.iter().enumerate() {
        let d = d2[to];
        if d == 0.0 {
            continue;
        }
        for &(f1, w1) in ins {
            for &(f2, w2) in ins {
                g.set(f1, f2, g.get(f1, f2) + d * w1 * w2);
            }
        }
    }
    Ok(g)
}

/// Natural logs of the eigenvalues, clamping non-positive or denormal
/// values to 1e-300 first. The clamp is unreachable for well-formed layered
/// networks (det G = 1 forces a positive spectrum), so triggering it
/// indicates a structural bug and is reported loudly.
pub fn log_spectrum(lambdas: &[f64]) -> Vec<f64> {
    lambdas
        .iter()
        .map(|&l| {
            if l < LAMBDA_FLOOR {
                eprintln!(
                    "warning: eigenvalue {l:e} clamped to {LAMBDA_FLOOR:e} before log; \
                     the spectrum of a valid network is strictly positive"
                );
                LAMBDA_FLOOR.ln()
            } else {
                l.ln()
            }
        })
        .collect()
}

/// First three power sums of the log-spectrum: (Σ u, Σ u², Σ u³).
pub fn log_moments(log_lambdas: &[f64]) -> (f64, f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    for &u in log_lambdas {
        s1 += u;
        s2 += u * u;
        s3 += u * u * u;
    }
    (s1, s2, s3)
}

/// Number of eigenvalues with βλ > θ.
pub fn n_greater(lambdas: &[f64], beta: f64, theta: f64) -> usize {
    lambdas.iter().filter(|&&l| beta * l > theta).count()
}

/// Complexity from the n largest eigenvalues:
/// C_n = −½ Σ_{i<n} log λ_i + (N/2) log 2π. Requires 1 ≤ n ≤ N and a
/// descending spectrum.
pub fn complexity_n(lambdas: &[f64], n: usize, n_total: usize) -> Result<f64, SpectralError> {
    if n == 0 || n > lambdas.len() {
        return Err(SpectralError::OutOfRange {
            n,
            n_total: lambdas.len(),
        });
    }
    Ok(complexity_top(lambdas, n, n_total))
}

/// Same sum without the range guard; an empty sum leaves only the window
/// normalization term.
pub fn complexity_top(lambdas: &[f64], count: usize, n_total: usize) -> f64 {
    let k = count.min(lambdas.len());
    let sum: f64 = log_spectrum(&lambdas[..k]).iter().sum();
    -0.5 * sum + 0.5 * (n_total as f64) * (2.0 * std::f64::consts::PI).ln()
}

fn check_domain(beta: f64, lambdas: &[f64], m: f64) -> Result<(), SpectralError> {
    if beta < 0.0 {
        return Err(SpectralError::NonPositiveBeta(beta));
    }
    for (i, &l) in lambdas.iter().enumerate() {
        let arg = 1.0 - beta * m + beta * l;
        if arg <= 0.0 {
            return Err(SpectralError::Domain {
                index: i,
                eigenvalue: l,
                argument: arg,
            });
        }
    }
    Ok(())
}

/// Gaussian-model log partition function (truncated form, mean-state
/// corrections dropped):
/// log Z = −½ Σ log(1 − βm + βλ_i) + (N/2) log 2π.
pub fn log_partition(
    beta: f64,
    lambdas: &[f64],
    m: f64,
    n_total: usize,
) -> Result<f64, SpectralError> {
    check_domain(beta, lambdas, m)?;
    let sum: f64 = lambdas.iter().map(|&l| (beta * (l - m)).ln_1p()).sum();
    Ok(-0.5 * sum + 0.5 * (n_total as f64) * (2.0 * std::f64::consts::PI).ln())
}

/// Total free energy F = −log Z / β.
#[derive(Debug, Clone, Copy)]
pub struct FreeEnergy {
    pub value: f64,
    /// True when β is so small that the window normalization term dominates
    /// and the eigenvalue sum was Taylor-expanded.
    pub window_dominated: bool,
}

const BETA_TAYLOR_GUARD: f64 = 1e-8;

/// F = (1/2β) Σ log(1 − βm + βλ_i) − (N/2β) log 2π. For β below 1e-8 the
/// first term is replaced by its leading Taylor term Σ(λ_i − m)/2 and the
/// result is flagged as window-dominated.
pub fn free_energy(
    beta: f64,
    lambdas: &[f64],
    m: f64,
    n_total: usize,
) -> Result<FreeEnergy, SpectralError> {
    check_domain(beta, lambdas, m)?;
    let window = 0.5 * (n_total as f64) * (2.0 * std::f64::consts::PI).ln() / beta;
    if beta < BETA_TAYLOR_GUARD {
        let linear: f64 = lambdas.iter().map(|&l| 0.5 * (l - m)).sum();
        return Ok(FreeEnergy {
            value: linear - window,
            window_dominated: true,
        });
    }
    let sum: f64 = lambdas.iter().map(|&l| (beta * (l - m)).ln_1p()).sum();
    Ok(FreeEnergy {
        value: 0.5 * sum / beta - window,
        window_dominated: false,
    })
}

/// Gaussian-model average loss.
#[derive(Debug, Clone, Copy)]
pub struct AvgLoss {
    /// U = ½ Σ (λ_i − m) / (1 − βm + βλ_i), exactly −∂ log Z / ∂β.
    pub exact: f64,
    /// The large-eigenvalue approximation N_> / (2β).
    pub approx: f64,
    pub n_greater: usize,
}

pub fn avg_loss(beta: f64, lambdas: &[f64], m: f64, theta: f64) -> Result<AvgLoss, SpectralError> {
    check_domain(beta, lambdas, m)?;
    let exact: f64 = lambdas
        .iter()
        .map(|&l| 0.5 * (l - m) / (1.0 - beta * m + beta * l))
        .sum();
    let count = n_greater(lambdas, beta, theta);
    Ok(AvgLoss {
        exact,
        approx: count as f64 / (2.0 * beta),
        n_greater: count,
    })
}

/// Entropy decomposition at a given β.
#[derive(Debug, Clone, Copy)]
pub struct Entropies {
    /// Exact Gaussian-model total entropy, log Z + βU.
    pub s_total: f64,
    /// Thermodynamic part −(N_>/2) log β + N_>/2.
    pub s_thermo: f64,
    /// Complexity over the N_> largest eigenvalues.
    pub complexity: f64,
    /// s_total − (s_thermo + complexity); expected small only near
    /// equilibrium.
    pub residual: f64,
}

pub fn entropies(
    beta: f64,
    lambdas: &[f64],
    m: f64,
    n_total: usize,
    n_greater_count: usize,
) -> Result<Entropies, SpectralError> {
    if beta <= 0.0 {
        return Err(SpectralError::NonPositiveBeta(beta));
    }
    let log_z = log_partition(beta, lambdas, m, n_total)?;
    let u = avg_loss(beta, lambdas, m, DEFAULT_THETA)?.exact;
    let s_total = log_z + beta * u;
    let half = n_greater_count as f64 / 2.0;
    let s_thermo = -half * beta.ln() + half;
    let complexity = complexity_top(lambdas, n_greater_count, n_total);
    Ok(Entropies {
        s_total,
        s_thermo,
        complexity,
        residual: s_total - (s_thermo + complexity),
    })
}

/// Laplacian of the free energy over the eigenvalue coordinates:
/// ΔF = −(β/2) Σ (1 + βλ_i)⁻². Strictly negative for β > 0.
pub fn laplacian_free_energy(beta: f64, lambdas: &[f64]) -> f64 {
    let sum: f64 = lambdas
        .iter()
        .map(|&l| {
            let d = 1.0 + beta * l;
            1.0 / (d * d)
        })
        .sum();
    -0.5 * beta * sum
}

/// Small-fraction limit of the interior extremum of the two-peak Laplacian
/// curve: log λ = 3 log(−½ + √(¼ + 1/β)). Exact as γ → 0 (it solves
/// (1+βz)³ = z(1+β)³); at finite γ the curve's true extremum is displaced.
/// This is also the formula the gap-based β estimate inverts.
pub fn interior_extremum_location(beta: f64) -> f64 {
    3.0 * (-0.5 + (0.25 + 1.0 / beta).sqrt()).ln()
}

/// β above which the two-peak curve with a single detaching eigenvalue
/// (γ = 1/N) has its global minimum at log λ = 0: β > √N − 1.
pub fn final_phase_boundary(n_total: usize) -> f64 {
    (n_total as f64).sqrt() - 1.0
}

/// Inverse of `interior_extremum_location`: the β at which the extremum
/// sits at gap midpoint `g`, β = 1/((e^{g/3} + ½)² − ¼).
pub fn beta_from_gap_midpoint(g: f64) -> f64 {
    let e = (g / 3.0).exp() + 0.5;
    1.0 / (e * e - 0.25)
}

/// Gap-based inverse-temperature estimate: the largest consecutive gap among
/// the sorted dynamical negative log-eigenvalues, mapped through
/// `beta_from_gap_midpoint`. Returns (β, gap midpoint); None when fewer than
/// two dynamical negative log-eigenvalues exist.
pub fn beta_from_gap(log_lambdas: &[f64]) -> Option<(f64, f64)> {
    let mut negatives: Vec<f64> = log_lambdas
        .iter()
        .copied()
        .filter(|&u| u < -PINNED_LOG_EPS)
        .collect();
    if negatives.len() < 2 {
        return None;
    }
    negatives.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best_gap = -1.0;
    let mut midpoint = 0.0;
    for w in negatives.windows(2) {
        let gap = w[1] - w[0];
        if gap > best_gap {
            best_gap = gap;
            midpoint = 0.5 * (w[0] + w[1]);
        }
    }
    Some((beta_from_gap_midpoint(midpoint), midpoint))
}

/// Self-consistent β from the empirical average loss: iterate
/// β ← N_>(β)/(2U) to a fixed point. None when no positive fixed point is
/// reached.
pub fn self_consistent_beta(lambdas: &[f64], u_empirical: f64, theta: f64) -> Option<f64> {
    // rejects NaN as well as non-positive values
    if u_empirical.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return None;
    }
    let mut beta = 1.0;
    let mut prev = f64::NAN;
    for _ in 0..200 {
        let count = n_greater(lambdas, beta, theta);
        if count == 0 {
            return None;
        }
        let next = count as f64 / (2.0 * u_empirical);
        if !next.is_finite() || next <= 0.0 {
            return None;
        }
        if (next - beta).abs() <= 1e-12 * beta.max(1.0) {
            return Some(next);
        }
        if next == prev {
            // bounce between two N_> plateaus; keep the later value
            return Some(next);
        }
        prev = beta;
        beta = next;
    }
    Some(beta)
}

// ---------------------------------------------------------------------------
// Two-peak toy model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Minimum,
    Maximum,
}

#[derive(Debug, Clone, Copy)]
pub struct ToyExtremum {
    pub log_lambda: f64,
    pub value: f64,
    pub kind: ExtremumKind,
}

#[derive(Debug, Clone)]
pub struct ToyCurve {
    pub log_lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub extrema: Vec<ToyExtremum>,
}

/// −ΔF of the two-peak spectrum at a single point: a fraction γ of
/// eigenvalues at λ and 1 − γ at λ^{γ/(γ−1)} (det-1 balanced),
/// −ΔF = (Nβ/2) [γ (1+βλ)⁻² + (1−γ) (1+βλ^{γ/(γ−1)})⁻²].
pub fn toy_neg_laplacian(beta: f64, gamma: f64, n_total: usize, log_lambda: f64) -> f64 {
    let lambda = log_lambda.exp();
    let partner = (log_lambda * gamma / (gamma - 1.0)).exp();
    let a = 1.0 + beta * lambda;
    let b = 1.0 + beta * partner;
    0.5 * (n_total as f64) * beta * (gamma / (a * a) + (1.0 - gamma) / (b * b))
}

/// Evaluate the curve on a grid and refine every interior extremum by
/// ternary search within its bracketing grid cell.
pub fn toy_curve(beta: f64, gamma: f64, n_total: usize, grid: &[f64]) -> ToyCurve {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    let values: Vec<f64> = grid
        .iter()
        .map(|&u| toy_neg_laplacian(beta, gamma, n_total, u))
        .collect();
    let mut extrema = Vec::new();
    for i in 1..grid.len().saturating_sub(1) {
        let (lo, hi) = (grid[i - 1], grid[i + 1]);
        if values[i] > values[i - 1] && values[i] > values[i + 1] {
            let x = refine_extremum(beta, gamma, n_total, lo, hi, true);
            extrema.push(ToyExtremum {
                log_lambda: x,
                value: toy_neg_laplacian(beta, gamma, n_total, x),
                kind: ExtremumKind::Maximum,
            });
        } else if values[i] < values[i - 1] && values[i] < values[i + 1] {
            let x = refine_extremum(beta, gamma, n_total, lo, hi, false);
            extrema.push(ToyExtremum {
                log_lambda: x,
                value: toy_neg_laplacian(beta, gamma, n_total, x),
                kind: ExtremumKind::Minimum,
            });
        }
    }
    ToyCurve {
        log_lambdas: grid.to_vec(),
        values,
        extrema,
    }
}

fn refine_extremum(
    beta: f64,
    gamma: f64,
    n_total: usize,
    mut lo: f64,
    mut hi: f64,
    maximize: bool,
) -> f64 {
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let f1 = toy_neg_laplacian(beta, gamma, n_total, m1);
        let f2 = toy_neg_laplacian(beta, gamma, n_total, m2);
        let keep_left = if maximize { f1 >= f2 } else { f1 <= f2 };
        if keep_left {
            hi = m2;
        } else {
            lo = m1;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Evenly spaced grid helper for the toy curves.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![lo];
    }
    let step = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| lo + step * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Which linearization point the operator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramMode {
    /// Derivatives at the dataset mean state (default).
    MeanState,
    /// Average of the per-record operators.
    RecordAveraged,
}

/// Spectrum of the residual Gram operator and everything derived from it.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Eigenvalues in non-increasing order.
    pub lambdas: Vec<f64>,
    pub log_lambdas: Vec<f64>,
    pub sum_log: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub mean_state: Vec<f64>,
    /// Coefficients of the mean state in the eigenbasis.
    pub eig_coeffs: Vec<f64>,
    /// N_> evaluated at `beta_gap` (or β = 1 when no gap exists) and θ.
    pub n_greater: usize,
    /// C_n for n ∈ {20, N−20, n_greater} (clamped into range).
    pub complexity_n: BTreeMap<usize, f64>,
    pub beta_gap: Option<f64>,
    pub gap_location: Option<f64>,
    pub theta: f64,
    pub gram: DenseMatrix,
    pub eigenvectors: DenseMatrix,
}

impl SpectralReport {
    /// Relative Frobenius error of reconstructing the operator from its
    /// `count` largest eigenpairs.
    pub fn top_reconstruction_error(&self, count: usize) -> f64 {
        let n = self.gram.rows();
        let k = count.min(n);
        let mut rec = DenseMatrix::zeros(n, n);
        for c in 0..k {
            let l = self.lambdas[c];
            for i in 0..n {
                let vi = self.eigenvectors.get(i, c);
                if vi == 0.0 {
                    continue;
                }
                for j in 0..n {
                    rec.set(i, j, rec.get(i, j) + l * vi * self.eigenvectors.get(j, c));
                }
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = self.gram.get(i, j) - rec.get(i, j);
                num += d * d;
                den += self.gram.get(i, j) * self.gram.get(i, j);
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Full spectral analysis of a network against a dataset.
pub fn analyze(
    s: &Septuple,
    data: &Dataset,
    theta: f64,
    mode: GramMode,
) -> Result<SpectralReport, SpectralError> {
    let mean = mean_state(s, data)?;
    let gram = match mode {
        GramMode::MeanState => {
            let fp = fprime_diag(s, &mean);
            residual_gram(s, &fp)
        }
        GramMode::RecordAveraged => record_averaged_gram(s, data)?,
    };
    let eig = sym_eig(&gram)?;
    let lambdas = eig.eigenvalues;
    let log_lambdas = log_spectrum(&lambdas);
    let (sum_log, mu2, mu3) = log_moments(&log_lambdas);
    let eig_coeffs = eig.eigenvectors.transpose().matvec(&mean);
    let gap = beta_from_gap(&log_lambdas);
    let beta_for_count = gap.map(|(b, _)| b).unwrap_or(1.0);
    let n_gt = n_greater(&lambdas, beta_for_count, theta);
    let n = lambdas.len();
    let mut complexity_map = BTreeMap::new();
    for count in [20usize, n.saturating_sub(20).max(1), n_gt.max(1)] {
        let count = count.min(n).max(1);
        complexity_map.insert(count, complexity_top(&lambdas, count, n));
    }
    Ok(SpectralReport {
        lambdas,
        log_lambdas,
        sum_log,
        mu2,
        mu3,
        mean_state: mean,
        eig_coeffs,
        n_greater: n_gt,
        complexity_n: complexity_map,
        beta_gap: gap.map(|(b, _)| b),
        gap_location: gap.map(|(_, g)| g),
        theta,
        gram,
        eigenvectors: eig.eigenvectors,
    })
}

/// One checkpoint's thermodynamic observables. The decomposed quantities
/// (F, A, C, entropies) are evaluated at the self-consistent β when it
/// exists, otherwise at the gap estimate; with no estimate at all they are
/// NaN. By construction S_total = S_thermo + C and F = A − C/β.
#[derive(Debug, Clone)]
pub struct ThermoRecord {
    pub epoch: usize,
    pub beta_gap: Option<f64>,
    pub beta_selfconsistent: Option<f64>,
    /// Dataset average of the minimized (descent-mode) bulk loss.
    pub u_bulk: f64,
    /// Dataset average of the boundary loss.
    pub u_boundary: f64,
    pub f: f64,
    pub a: f64,
    pub c_theta: f64,
    pub c_20: f64,
    pub c_n_minus_20: f64,
    pub s_total: f64,
    pub s_thermo: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub sum_log: f64,
    pub n_greater: usize,
    pub gap_location: Option<f64>,
}

pub fn thermo_record(
    epoch: usize,
    report: &SpectralReport,
    u_bulk: f64,
    u_boundary: f64,
) -> ThermoRecord {
    let n = report.lambdas.len();
    let theta = report.theta;
    let beta_sc = self_consistent_beta(&report.lambdas, u_bulk, theta);
    let beta = beta_sc.or(report.beta_gap);
    let c_20 = complexity_top(&report.lambdas, 20.min(n), n);
    let c_n_minus_20 = complexity_top(&report.lambdas, n.saturating_sub(20).max(1), n);
    let (f, a, c_theta, s_total, s_thermo, count) = match beta {
        Some(b) if b > 0.0 => {
            let count = n_greater(&report.lambdas, b, theta);
            let c_theta = complexity_top(&report.lambdas, count, n);
            let half = count as f64 / 2.0;
            let a = if count == 0 { 0.0 } else { half * b.ln() / b };
            let s_thermo = -half * b.ln() + half;
            let f = a - c_theta / b;
            let s_total = s_thermo + c_theta;
            (f, a, c_theta, s_total, s_thermo, count)
        }
        _ => (
            f64::NAN,
            f64::NAN,
            complexity_top(&report.lambdas, report.n_greater, n),
            f64::NAN,
            f64::NAN,
            report.n_greater,
        ),
    };
    ThermoRecord {
        epoch,
        beta_gap: report.beta_gap,
        beta_selfconsistent: beta_sc,
        u_bulk,
        u_boundary,
        f,
        a,
        c_theta,
        c_20,
        c_n_minus_20,
        s_total,
        s_thermo,
        mu2: report.mu2,
        mu3: report.mu3,
        sum_log: report.sum_log,
        n_greater: count,
        gap_location: report.gap_location,
    }
}

/// Per-epoch loss row appended by the trainer.
#[derive(Debug, Clone, Copy)]
pub struct EpochLoss {
    pub epoch: usize,
    pub u_boundary: f64,
    /// Forward-mode bulk loss (cheap companion series).
    pub u_bulk_forward: f64,
}

/// Training-time log: cheap per-epoch losses plus full thermodynamic
/// records at checkpoint epochs.
#[derive(Debug, Clone, Default)]
pub struct ThermoTrace {
    pub epochs: Vec<EpochLoss>,
    pub records: Vec<ThermoRecord>,
}

/// |dU − T dS₀ − T dC| / |dU| between consecutive records, using the
/// midpoint temperature. Diagnostic only; meaningful near equilibrium.
pub fn first_law_residuals(records: &[ThermoRecord]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in records.windows(2) {
        let (r0, r1) = (&w[0], &w[1]);
        let betas = match (
            r0.beta_selfconsistent.or(r0.beta_gap),
            r1.beta_selfconsistent.or(r1.beta_gap),
        ) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => (a, b),
            _ => continue,
        };
        let t = 2.0 / (betas.0 + betas.1);
        let du = r1.u_bulk - r0.u_bulk;
        let ds0 = r1.s_thermo - r0.s_thermo;
        let dc = r1.c_theta - r0.c_theta;
        let res = (du - t * ds0 - t * dc).abs() / du.abs().max(1e-300);
        out.push(res);
    }
    out
}

/// Least-squares line fit y ≈ slope·x + intercept with its R².
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, intercept, r2)
}
