//! ADMM training of the tag-space encoder.
//!
//! The encoder `E` (items × tags) is fit so that `X·E·Dᵀ` reconstructs the
//! interaction matrix `X` through the fixed decoder `D` (binary tags plus a
//! popularity column), with the diagonal of `E·Dᵀ` excluded from the fit:
//!
//! ```text
//! min_E ‖X − X(EDᵀ − dm(diag(EDᵀ)))‖²_F + λ1‖EDᵀ − dm(diag(EDᵀ))‖²_F + λ2‖E‖²_F
//! ```
//!
//! The diagonal is split off into `β` with the constraint `diag(EDᵀ) = β`
//! and multiplier `γ`. Each iteration solves the `E` block exactly via the
//! eigendecompositions `XᵀX = U·dm(μ)·Uᵀ` and `DᵀD = V·dm(η)·Vᵀ`, which turn
//! the Sylvester-type system for `E` into an elementwise division, then
//! updates `β` in closed form and takes a dual step on `γ`. Nothing after
//! the Gram matrix depends on the number of users.

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::dataset::{Tag, TagMatrix};
use crate::error::{Error, Result};
use crate::linalg::{dot, sym_eig, DenseMatrix, Gram, SparseBinaryMatrix, SymEig};

/// Backward-error bound accepted for every `E` solve.
pub const SYLVESTER_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Weight of the diagonal-free reconstruction term `‖EDᵀ − dm(β)‖²`.
    pub lambda1: f64,
    /// ℓ2 weight on `E`; must be positive.
    pub lambda2: f64,
    /// ADMM penalty.
    pub rho: f64,
    pub max_iterations: usize,
    /// Stopping threshold on the ∞-norm primal residual and dual step.
    pub tolerance: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda1: 1.0,
            lambda2: 1.0,
            rho: 1.0,
            max_iterations: 1000,
            tolerance: 1e-6,
        }
    }
}

impl Hyperparams {
    pub fn new(lambda1: f64, lambda2: f64, rho: f64) -> Self {
        Hyperparams {
            lambda1,
            lambda2,
            rho,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.lambda1, self.lambda2, self.rho, self.tolerance]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::validation("hyperparameters must be finite"));
        }
        if self.lambda1 < 0.0 {
            return Err(Error::validation("lambda1 must be non-negative"));
        }
        if self.lambda2 <= 0.0 {
            return Err(Error::validation(
                "lambda2 must be positive for the E update to be well defined",
            ));
        }
        if self.rho <= 0.0 {
            return Err(Error::validation("rho must be positive"));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::validation("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// Quantities computed once per training run.
#[derive(Debug, Clone)]
pub struct Precomputation {
    /// `XᵀX`, `n × n`.
    pub gram: DenseMatrix,
    pub gram_diag: Vec<f64>,
    /// `(U, μ)` of `XᵀX`.
    pub items: SymEig,
    /// `(V, η)` of `DᵀD`.
    pub tags: SymEig,
    /// `G(i, j) = 1 / (η_j (μ_i + λ1) + λ2)`, `n × t`.
    pub inverse_spectrum: DenseMatrix,
    /// Decoder `D`, `n × t`.
    pub decoder: DenseMatrix,
    /// `DᵀD`, `t × t`.
    pub decoder_gram: DenseMatrix,
}

impl Precomputation {
    pub fn num_items(&self) -> usize {
        self.decoder.rows()
    }

    pub fn num_tags(&self) -> usize {
        self.decoder.cols()
    }

    /// Same decompositions with the spectral divisor rebuilt for new
    /// regularization weights.
    pub fn retuned(&self, hp: &Hyperparams) -> Result<Precomputation> {
        hp.validate()?;
        let mut pre = self.clone();
        pre.inverse_spectrum = inverse_spectrum(&self.items, &self.tags, hp)?;
        Ok(pre)
    }
}

fn inverse_spectrum(items: &SymEig, tags: &SymEig, hp: &Hyperparams) -> Result<DenseMatrix> {
    let (mu, eta) = (&items.eigenvalues, &tags.eigenvalues);
    let g = DenseMatrix::from_fn(mu.len(), eta.len(), |i, j| {
        1.0 / (eta[j] * (mu[i] + hp.lambda1) + hp.lambda2)
    });
    if !g.as_slice().iter().all(|v| v.is_finite() && *v > 0.0) {
        return Err(Error::numerical(format!(
            "spectral divisor not positive: μ ∈ [{:.3e}, {:.3e}], η ∈ [{:.3e}, {:.3e}]",
            mu[0],
            mu[mu.len() - 1],
            eta[0],
            eta[eta.len() - 1]
        )));
    }
    Ok(g)
}

/// Gram matrix, both eigendecompositions and the spectral divisor.
pub fn precompute(
    x: &SparseBinaryMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> Result<Precomputation> {
    if x.cols() != decoder.rows() {
        return Err(Error::validation(format!(
            "interaction matrix has {} items but decoder has {} rows",
            x.cols(),
            decoder.rows()
        )));
    }
    precompute_from_gram(x.gram()?, decoder, hp)
}

pub fn precompute_from_gram(
    gram: DenseMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> Result<Precomputation> {
    hp.validate()?;
    let n = decoder.rows();
    let t = decoder.cols();
    if gram.shape() != (n, n) {
        return Err(Error::validation(format!(
            "gram is {:?} but decoder has {n} rows",
            gram.shape()
        )));
    }
    if t == 0 {
        return Err(Error::validation("decoder has no columns"));
    }
    let decoder_gram = decoder.gram()?;
    let items = sym_eig(&gram)?;
    let tags = sym_eig(&decoder_gram)?;
    let inverse_spectrum = inverse_spectrum(&items, &tags, hp)?;
    Ok(Precomputation {
        gram_diag: gram.diagonal(),
        gram,
        items,
        tags,
        inverse_spectrum,
        decoder: decoder.clone(),
        decoder_gram,
    })
}

/// Iterate of the ADMM scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub e: DenseMatrix,
    /// `XᵀX · E`, kept alongside `E` so the β step does not recompute it.
    pub gram_e: DenseMatrix,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub iteration: usize,
    /// `‖β − diag(EDᵀ)‖∞` after the last iteration.
    pub primal_residual: f64,
    /// `‖γ_new − γ_old‖∞` of the last dual step.
    pub dual_step: f64,
}

impl AdmmState {
    /// `E = 0`, `β = 0`, `γ = 0`.
    pub fn zeros(n: usize, t: usize) -> Self {
        AdmmState {
            e: DenseMatrix::zeros(n, t),
            gram_e: DenseMatrix::zeros(n, t),
            beta: vec![0.0; n],
            gamma: vec![0.0; n],
            iteration: 0,
            primal_residual: 0.0,
            dual_step: 0.0,
        }
    }

    /// Replaces `E`, recomputing `XᵀX·E`.
    pub fn with_encoder(mut self, e: DenseMatrix, pre: &Precomputation) -> Self {
        self.gram_e = pre.gram.matmul(&e);
        self.e = e;
        self
    }

    /// `diag(E·Dᵀ)`.
    pub fn encoder_diagonal(&self, pre: &Precomputation) -> Vec<f64> {
        self.e.row_dots(&pre.decoder)
    }
}

/// Right-hand side `(XᵀX·dm(1+β) + ρ·dm(γ+β) + λ1·dm(β))·D` of the E system.
pub fn sylvester_rhs(
    pre: &Precomputation,
    beta: &[f64],
    gamma: &[f64],
    hp: &Hyperparams,
) -> DenseMatrix {
    let one_plus: Vec<f64> = beta.iter().map(|b| 1.0 + b).collect();
    let diag: Vec<f64> = beta
        .iter()
        .zip(gamma)
        .map(|(b, g)| hp.rho * (g + b) + hp.lambda1 * b)
        .collect();
    pre.gram
        .matmul(&pre.decoder.scale_rows(&one_plus))
        .add(&pre.decoder.scale_rows(&diag))
}

/// `(XᵀX + λ1·I)·E·DᵀD + λ2·E` given `gram_e = XᵀX·E`.
fn sylvester_lhs(
    pre: &Precomputation,
    e: &DenseMatrix,
    gram_e: &DenseMatrix,
    hp: &Hyperparams,
) -> DenseMatrix {
    gram_e
        .add(&e.scaled(hp.lambda1))
        .matmul(&pre.decoder_gram)
        .add(&e.scaled(hp.lambda2))
}

/// `‖lhs − rhs‖_F / ‖rhs‖_F` for a candidate `E`.
pub fn sylvester_residual(
    pre: &Precomputation,
    e: &DenseMatrix,
    rhs: &DenseMatrix,
    hp: &Hyperparams,
) -> f64 {
    let gram_e = pre.gram.matmul(e);
    let lhs = sylvester_lhs(pre, e, &gram_e, hp);
    relative(lhs.sub(rhs).frobenius_norm(), rhs.frobenius_norm())
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Output of one `E` solve.
#[derive(Debug, Clone)]
pub struct EStep {
    pub e: DenseMatrix,
    pub gram_e: DenseMatrix,
    /// `‖lhs − rhs‖ / ‖rhs‖`.
    pub relative_residual: f64,
}

/// Exact minimizer of the augmented objective over `E` at the current `β`, `γ`.
pub fn update_e(state: &AdmmState, pre: &Precomputation, hp: &Hyperparams) -> Result<EStep> {
    let rhs = sylvester_rhs(pre, &state.beta, &state.gamma, hp);
    let u = &pre.items.eigenvectors;
    let v = &pre.tags.eigenvectors;
    let f = u.t_matmul(&rhs).matmul(v);
    let y = f.hadamard(&pre.inverse_spectrum);
    let e = u.matmul(&y).matmul_t(v);
    if !e.is_finite() {
        return Err(Error::numerical(format!(
            "E update produced non-finite entries at iteration {}",
            state.iteration + 1
        )));
    }

    let gram_e = pre.gram.matmul(&e);
    let lhs = sylvester_lhs(pre, &e, &gram_e, hp);
    let residual_norm = lhs.sub(&rhs).frobenius_norm();
    let relative_residual = relative(residual_norm, rhs.frobenius_norm());
    let backward = relative(residual_norm, rhs.frobenius_norm() + lhs.frobenius_norm());
    if backward > SYLVESTER_TOLERANCE {
        let (mu, eta) = (&pre.items.eigenvalues, &pre.tags.eigenvalues);
        return Err(Error::numerical(format!(
            "E solve residual {relative_residual:.3e} (backward {backward:.3e}) exceeds {SYLVESTER_TOLERANCE:e}; \
             μ ∈ [{:.3e}, {:.3e}], η ∈ [{:.3e}, {:.3e}], λ1 = {}, λ2 = {}",
            mu[0],
            mu[mu.len() - 1],
            eta[0],
            eta[eta.len() - 1],
            hp.lambda1,
            hp.lambda2
        )));
    }
    Ok(EStep {
        e,
        gram_e,
        relative_residual,
    })
}

/// Closed-form minimizer over `β` given the current `E` and `γ`:
///
/// `β_i = [(XᵀX·E·Dᵀ)_ii − (XᵀX)_ii − ρ·γ_i + (λ1+ρ)·(EDᵀ)_ii] / [(XᵀX)_ii + λ1 + 2ρ]`
pub fn update_beta(state: &AdmmState, pre: &Precomputation, hp: &Hyperparams) -> Result<Vec<f64>> {
    let coupled = state.gram_e.row_dots(&pre.decoder);
    let diag = state.encoder_diagonal(pre);
    let beta: Vec<f64> = (0..pre.num_items())
        .map(|i| {
            let g = pre.gram_diag[i];
            (coupled[i] - g - hp.rho * state.gamma[i] + (hp.lambda1 + hp.rho) * diag[i])
                / (g + hp.lambda1 + 2.0 * hp.rho)
        })
        .collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::numerical("β update produced non-finite entries"));
    }
    Ok(beta)
}

/// Dual ascent step `γ + β − diag(EDᵀ)`.
///
/// The multiplier enters the augmented objective as `+2ργᵀ(β − diag(EDᵀ))`,
/// so ascent moves `γ` along `β − diag(EDᵀ)`.
pub fn update_gamma(state: &AdmmState, pre: &Precomputation) -> Vec<f64> {
    let diag = state.encoder_diagonal(pre);
    state
        .gamma
        .iter()
        .zip(&state.beta)
        .zip(&diag)
        .map(|((g, b), d)| g + b - d)
        .collect()
}

/// `‖X + X·dm(β) − X·E·Dᵀ‖² + λ1‖E·Dᵀ − dm(β)‖² + λ2‖E‖²`, evaluated row
/// by row over the users of `x`.
pub fn objective(
    e: &DenseMatrix,
    beta: &[f64],
    x: &SparseBinaryMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> f64 {
    let n = decoder.rows();
    let xe = x.matmul_dense(e);
    let mut fit = 0.0;
    let mut residual = vec![0.0; n];
    for u in 0..x.rows() {
        let xe_u = xe.row(u);
        for (i, r) in residual.iter_mut().enumerate() {
            *r = -dot(xe_u, decoder.row(i));
        }
        for &i in x.row(u) {
            residual[i as usize] += 1.0 + beta[i as usize];
        }
        fit += residual.iter().map(|r| r * r).sum::<f64>();
    }
    fit + diagonal_penalty(e, beta, decoder, hp) + hp.lambda2 * e.frobenius_norm_sq()
}

/// Same value as [`objective`], computed from `XᵀX` in `O(n²t)` without
/// touching user rows.
pub fn objective_from_gram(
    e: &DenseMatrix,
    beta: &[f64],
    gram: &DenseMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> f64 {
    let gram_e = gram.matmul(e);
    let coupled = gram_e.row_dots(decoder);
    let dtd = decoder.gram().expect("non-empty decoder");
    let quad: f64 = e
        .t_matmul(&gram_e)
        .as_slice()
        .iter()
        .zip(dtd.as_slice())
        .map(|(a, b)| a * b)
        .sum();
    let mut fit = quad;
    for (i, &b) in beta.iter().enumerate() {
        let s = 1.0 + b;
        fit += s * s * gram.get(i, i) - 2.0 * s * coupled[i];
    }
    fit + diagonal_penalty(e, beta, decoder, hp) + hp.lambda2 * e.frobenius_norm_sq()
}

/// `λ1‖EDᵀ − dm(β)‖²_F` as `λ1(‖EDᵀ‖² − 2βᵀdiag(EDᵀ) + ‖β‖²)`.
fn diagonal_penalty(e: &DenseMatrix, beta: &[f64], decoder: &DenseMatrix, hp: &Hyperparams) -> f64 {
    if hp.lambda1 == 0.0 {
        return 0.0;
    }
    let ete = e.gram().expect("non-empty encoder");
    let dtd = decoder.gram().expect("non-empty decoder");
    let full: f64 = dot(ete.as_slice(), dtd.as_slice());
    let diag = e.row_dots(decoder);
    let cross: f64 = dot(beta, &diag);
    let beta_sq: f64 = dot(beta, beta);
    hp.lambda1 * (full - 2.0 * cross + beta_sq)
}

/// Training objective with the diagonal eliminated, i.e. [`objective`] at
/// `β = diag(EDᵀ)`.
pub fn diagonal_free_objective(
    e: &DenseMatrix,
    gram: &DenseMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> f64 {
    let beta = e.row_dots(decoder);
    objective_from_gram(e, &beta, gram, decoder, hp)
}

/// Gradient of [`objective`] with respect to `E` at fixed `β`:
/// `2[XᵀX·(E·DᵀD − dm(1+β)·D) + λ1(E·DᵀD − dm(β)·D) + λ2·E]`.
pub fn objective_gradient(
    e: &DenseMatrix,
    beta: &[f64],
    gram: &DenseMatrix,
    decoder: &DenseMatrix,
    hp: &Hyperparams,
) -> DenseMatrix {
    let dtd = decoder.gram().expect("non-empty decoder");
    let edtd = e.matmul(&dtd);
    let one_plus: Vec<f64> = beta.iter().map(|b| 1.0 + b).collect();
    let fit = gram.matmul(&edtd.sub(&decoder.scale_rows(&one_plus)));
    let diag = edtd.sub(&decoder.scale_rows(beta)).scaled(hp.lambda1);
    fit.add(&diag).add(&e.scaled(hp.lambda2)).scaled(2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_step: f64,
    /// [`objective`] at the returned `(E, β)`.
    pub objective: f64,
}

/// Final iterate plus the per-iteration primal residuals.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub state: AdmmState,
    pub report: ConvergenceReport,
    pub residual_history: Vec<f64>,
}

/// Runs ADMM from `E = 0, β = 0, γ = 0`. Each iteration updates `E`, then
/// `β`, then `γ`; it stops once both the primal residual and the dual step
/// are within `hp.tolerance`, or after `hp.max_iterations`.
pub fn solve(pre: &Precomputation, hp: &Hyperparams) -> Result<SolveOutcome> {
    hp.validate()?;
    let mut state = AdmmState::zeros(pre.num_items(), pre.num_tags());
    let mut history = Vec::new();
    let mut converged = false;
    while state.iteration < hp.max_iterations {
        let step = update_e(&state, pre, hp)?;
        state.e = step.e;
        state.gram_e = step.gram_e;
        state.beta = update_beta(&state, pre, hp)?;
        let gamma = update_gamma(&state, pre);
        state.dual_step = max_abs_diff(&gamma, &state.gamma);
        state.gamma = gamma;
        let diag = state.encoder_diagonal(pre);
        state.primal_residual = max_abs_diff(&state.beta, &diag);
        state.iteration += 1;
        history.push(state.primal_residual);
        debug!(
            iteration = state.iteration,
            primal = state.primal_residual,
            sylvester = step.relative_residual,
            "admm step"
        );
        if !state.primal_residual.is_finite() {
            return Err(Error::numerical(format!(
                "ADMM diverged at iteration {}",
                state.iteration
            )));
        }
        if state.primal_residual <= hp.tolerance && state.dual_step <= hp.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!(
            iterations = state.iteration,
            primal = state.primal_residual,
            "ADMM stopped at max_iterations without converging"
        );
    }
    let report = ConvergenceReport {
        converged,
        iterations: state.iteration,
        primal_residual: state.primal_residual,
        dual_step: state.dual_step,
        objective: objective_from_gram(&state.e, &state.beta, &pre.gram, &pre.decoder, hp),
    };
    Ok(SolveOutcome {
        state,
        report,
        residual_history: history,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Trained encoder with the vocabulary it maps into.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    /// `n × t`; row `i` holds the tag affinities contributed by item `i`.
    pub encoder: DenseMatrix,
    /// Tag of every column, popularity last.
    pub vocabulary: Vec<Tag>,
    pub hyperparams: Hyperparams,
    pub report: ConvergenceReport,
}

impl EncoderModel {
    pub fn num_items(&self) -> usize {
        self.encoder.rows()
    }

    pub fn num_tags(&self) -> usize {
        self.encoder.cols()
    }
}

/// Trains an encoder for the given interactions and tag matrix.
pub fn train(x: &SparseBinaryMatrix, tags: &TagMatrix, hp: &Hyperparams) -> Result<EncoderModel> {
    if x.cols() != tags.num_items() {
        return Err(Error::validation(format!(
            "interaction matrix has {} items, tag matrix has {}",
            x.cols(),
            tags.num_items()
        )));
    }
    train_from_gram(x.gram()?, tags, hp)
}

/// [`train`] starting from a precomputed `XᵀX`.
pub fn train_from_gram(
    gram: DenseMatrix,
    tags: &TagMatrix,
    hp: &Hyperparams,
) -> Result<EncoderModel> {
    let pre = precompute_from_gram(gram, &tags.decoder(), hp)?;
    let outcome = solve(&pre, hp)?;
    Ok(EncoderModel {
        encoder: outcome.state.e,
        vocabulary: tags.vocabulary(),
        hyperparams: hp.clone(),
        report: outcome.report,
    })
}
