//! Finite-alphabet thermodynamic formalism on a truncation `Σ_k`.
//!
//! The Ruelle operator of a Markov potential acts on functions of the first
//! coordinate as the transfer matrix `B_ij = exp(t f(i, j))` on admissible
//! edges. Its Perron triple `(λ, h, ν)` gives the pressure `log λ` and the
//! equilibrium Markov chain `P_ij = B_ij h_j / (λ h_i)` with stationary
//! law `π ∝ ν h`. Everything runs in the log domain.

mod log_matrix;
mod measure;

pub use log_matrix::{log_sum_exp, LogMatrix};
pub use measure::{
    cylinder_mass, entropy, gibbs_ratio, integral, one_cylinder_ratios, partition_entropy,
    random_measure, stochasticity_defect, GibbsRatio, MarkovMeasure, OneCylinderRatio,
};

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;
use crate::potential::{MarkovPotential, PotentialError};
use crate::shift_model::{Incidence, Symbol, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RpfError {
    #[error("power iteration did not converge in {max_iter} steps (residual {residual:e})")]
    NoConvergence { max_iter: usize, residual: f64 },
    #[error("no cycle of length {n} through symbol {a}")]
    ZeroDiagonal { a: Symbol, n: usize },
    #[error("enumeration needs {needed} words, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: usize },
    #[error("matrix support is not irreducible")]
    Reducible,
    #[error("invalid transition matrix: {0}")]
    InvalidTransition(String),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

/// Log-domain Perron triple of a nonnegative irreducible matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerronData {
    pub log_lambda: f64,
    pub log_h: Vec<f64>,
    /// Gauge: `sum_i exp(log_nu[i] + log_h[i]) = 1`.
    pub log_nu: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronOptions {
    /// Stop when successive `log λ` estimates differ by less than this.
    pub tol: f64,
    /// Defaults to `max(100 n, 1000)`.
    pub max_iter: Option<usize>,
    pub exec: Execution,
}

impl Default for PerronOptions {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: None,
            exec: Execution::default(),
        }
    }
}

/// Dense storage is used up to this many symbols.
const DENSE_LIMIT: usize = 512;

/// `log B_ij = t f(i, j)` on the admissible edges of `trunc`.
pub fn transfer_matrix(
    trunc: &Truncation,
    f: &MarkovPotential,
    t: f64,
) -> Result<LogMatrix, PotentialError> {
    let n = trunc.len();
    if matches!(trunc.incidence, Incidence::Full(_)) && f.is_row_constant() {
        let row = trunc
            .alphabet
            .iter()
            .map(|&s| f.eval(s, s).map(|v| t * v))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(LogMatrix::outer(row, vec![0.0; n]));
    }
    let edges = trunc.incidence.edge_count();
    if n <= DENSE_LIMIT && 4 * edges >= n * n {
        let mut w = vec![f64::NEG_INFINITY; n * n];
        for a in 0..n {
            let i = trunc.symbol(a);
            for b in trunc.incidence.successors(a) {
                w[a * n + b] = t * f.eval(i, trunc.symbol(b))?;
            }
        }
        return Ok(LogMatrix::dense(n, w));
    }
    let mut list = Vec::with_capacity(edges);
    for a in 0..n {
        let i = trunc.symbol(a);
        for b in trunc.incidence.successors(a) {
            list.push((a, b, t * f.eval(i, trunc.symbol(b))?));
        }
    }
    Ok(LogMatrix::from_edges(n, list))
}

const SHIFT_AFTER: usize = 64;

const REFINE_STEPS: usize = 30;

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

struct Side {
    vec: Vec<f64>,
    iterations: usize,
    /// `None` when the iteration converged, else the last relative change.
    unconverged: Option<f64>,
}

/// Normalized power iteration `x <- B x / max(B x)` in log form.
///
/// For a period-`d` support the growth rate is the mean of `d` consecutive
/// log-normalizers and the eigenvector is the λ-weighted sum of `d`
/// consecutive iterates. Without convergence after [`SHIFT_AFTER`] steps
/// the iteration switches to the aperiodic `B + e^σ I`, with `σ` the running
/// estimate of `log λ`: the Perron vector is the same, and eigenvalues of
/// modulus close to `λ` other than `λ` itself are damped.
fn power_side(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    n: usize,
    d: usize,
    tol: f64,
    max_iter: usize,
) -> Result<Side, RpfError> {
    let mut x = vec![0.0; n];
    // period of the iterated matrix: `B + e^σ I` is aperiodic
    let mut p = d;
    let mut norms: Vec<f64> = Vec::new();
    let mut iterates: VecDeque<Vec<f64>> = VecDeque::from([x.clone()]);
    let mut prev_est = f64::NAN;
    let mut best_delta = f64::INFINITY;
    let mut since_best = 0usize;
    let mut last_delta = f64::INFINITY;
    let mut sigma = f64::NEG_INFINITY;

    for it in 1..=max_iter {
        let mut y = apply(&x);
        // Collatz-Wielandt bracket: min_i (Bx)_i / x_i <= λ <= max_i (Bx)_i / x_i
        let (lo, hi) = y
            .iter()
            .zip(&x)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a - b), hi.max(a - b))
            });
        let bracket = 0.5 * (lo + hi);
        if it == SHIFT_AFTER && bracket.is_finite() {
            sigma = bracket;
            if p > 1 {
                p = 1;
                norms.clear();
                iterates = VecDeque::from([x.clone()]);
                prev_est = f64::NAN;
                best_delta = f64::INFINITY;
                since_best = 0;
            }
        } else if sigma.is_finite() && bracket.is_finite() {
            sigma = bracket;
        }
        if sigma.is_finite() {
            for (v, &xi) in y.iter_mut().zip(&x) {
                *v = log_add(*v, sigma + xi);
            }
        }
        let s = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !s.is_finite() {
            return Err(RpfError::Reducible);
        }
        for v in &mut y {
            *v -= s;
        }
        norms.push(if p == 1 { bracket } else { s });
        iterates.push_back(y.clone());
        if iterates.len() > p + 1 {
            iterates.pop_front();
        }
        x = y;
        if norms.len() < 2 * p {
            continue;
        }
        let est = norms[norms.len() - p..].iter().sum::<f64>() / p as f64;
        let back = &iterates[0];
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let delta = x
            .iter()
            .zip(back)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            / scale;
        last_delta = delta;
        let lambda_ok = (est - prev_est).abs() < tol;
        prev_est = est;
        if delta < best_delta * 0.999 {
            best_delta = delta;
            since_best = 0;
        } else {
            since_best += 1;
        }
        // the vector has hit its floating-point floor
        let stalled = since_best > 50 && delta < 1e-10;
        if lambda_ok && (delta < 1e-14 || stalled) {
            let tail = &norms[norms.len() - p..];
            let vec = if p == 1 {
                x
            } else {
                // iterates holds z_0..z_p; combine z_1..z_p
                let mut acc = 0.0;
                let mut terms: Vec<(f64, &Vec<f64>)> = Vec::with_capacity(p);
                for (r, z) in iterates.iter().skip(1).enumerate() {
                    if r > 0 {
                        acc += tail[r] - est;
                    }
                    terms.push((acc, z));
                }
                (0..n)
                    .map(|i| log_sum_exp(terms.iter().map(|(c, z)| c + z[i])))
                    .collect()
            };
            return Ok(Side {
                vec,
                iterations: it,
                unconverged: None,
            });
        }
    }
    Ok(Side {
        vec: x,
        iterations: max_iter,
        unconverged: Some(last_delta),
    })
}

/// Inverse iteration on the balanced matrix `D⁻¹ B D / e^ℓ`, `D = diag(e^x)`,
/// starting from an approximate log eigenvector `x` and rebalancing after
/// every step. Balancing brings the entries to order one, so a dense LU
/// solve recovers eigenvector components far below the largest one.
fn refine(log_b: &LogMatrix, x: &[f64], transpose: bool) -> Option<Vec<f64>> {
    let n = x.len();
    let entry = |i: usize, j: usize| if transpose { log_b.get(j, i) } else { log_b.get(i, j) };
    let mut x = x.to_vec();
    let mut width = f64::INFINITY;
    for _ in 0..REFINE_STEPS {
        let raw = DMatrix::from_fn(n, n, |i, j| entry(i, j) + x[j] - x[i]);
        // log Collatz-Wielandt bracket of the current vector
        let row_logs: Vec<f64> = (0..n).map(|i| log_sum_exp(raw.row(i).iter().copied())).collect();
        let lo = row_logs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = row_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return None;
        }
        let next_width = hi - lo;
        if next_width <= 1e-13 * (1.0 + hi.abs()) || (next_width > 0.5 * width && next_width < 1e-10) {
            return Some(x);
        }
        width = next_width;
        // row sums of `m` are at most 1, so its Perron root is too
        let mut a = raw.map(|w| (w - hi).exp());
        for i in 0..n {
            a[(i, i)] -= 1.0 + 1e-12;
        }
        let z = a.lu().solve(&DVector::from_element(n, 1.0))?;
        let top = z.iter().copied().fold(0.0f64, |t, v| if v.abs() > t.abs() { v } else { t });
        if top == 0.0 || !top.is_finite() {
            return None;
        }
        for (xi, zi) in x.iter_mut().zip(z.iter()) {
            let u = zi / top;
            if u <= 0.0 {
                return None;
            }
            *xi += u.ln();
        }
    }
    None
}

/// Perron eigenvalue and left/right eigenvectors by log-domain power
/// iteration on `B` and `Bᵀ`.
pub fn perron(log_b: &LogMatrix, tol: f64, max_iter: usize) -> Result<PerronData, RpfError> {
    perron_with(
        log_b,
        &PerronOptions {
            tol,
            max_iter: Some(max_iter),
            ..PerronOptions::default()
        },
    )
}

pub fn perron_with(log_b: &LogMatrix, opts: &PerronOptions) -> Result<PerronData, RpfError> {
    let n = log_b.n();
    if n == 0 || !log_b.is_irreducible() {
        return Err(RpfError::Reducible);
    }
    let d = log_b.period();
    let max_iter = opts.max_iter.unwrap_or((100 * n).max(1000));
    let exec = opts.exec;
    let finish = |side: Side, transpose: bool| -> Result<(Vec<f64>, usize), RpfError> {
        let Some(residual) = side.unconverged else {
            return Ok((side.vec, side.iterations));
        };
        let refined = if n <= DENSE_LIMIT {
            refine(log_b, &side.vec, transpose)
        } else {
            None
        };
        refined
            .map(|v| (v, side.iterations + 1))
            .ok_or(RpfError::NoConvergence { max_iter, residual })
    };
    let (log_h, right_its) = finish(power_side(|x| log_b.matvec(x, exec), n, d, opts.tol, max_iter)?, false)?;
    let (mut log_nu, left_its) = finish(power_side(|x| log_b.vecmat(x, exec), n, d, opts.tol, max_iter)?, true)?;

    let bh = log_b.matvec(&log_h, exec);
    let nu_b = log_b.vecmat(&log_nu, exec);
    let gauge = log_sum_exp(log_nu.iter().zip(&log_h).map(|(a, b)| a + b));
    // two-sided Rayleigh quotient: error is the product of both vector errors
    let log_lambda = log_sum_exp(log_nu.iter().zip(&bh).map(|(a, b)| a + b)) - gauge;
    for v in &mut log_nu {
        *v -= gauge;
    }
    let right_res = bh
        .iter()
        .zip(&log_h)
        .fold(0.0f64, |m, (a, b)| m.max((a - log_lambda - b).abs()));
    let left_res = nu_b
        .iter()
        .zip(&log_nu)
        .fold(0.0f64, |m, (a, b)| m.max((a - gauge - log_lambda - b).abs()));
    let residual = right_res.max(left_res);
    Ok(PerronData {
        log_lambda,
        log_h,
        log_nu,
        iterations: right_its + left_its,
        residual,
        period: d,
    })
}

/// `P_k(t)`: the Gurevich (= topological) pressure of `t f` on `Σ_k`.
pub fn pressure(trunc: &Truncation, f: &MarkovPotential, t: f64) -> Result<f64, RpfError> {
    let b = transfer_matrix(trunc, f, t)?;
    Ok(perron_with(&b, &PerronOptions::default())?.log_lambda)
}

/// `(1/n) log Z_n(t f, a)` with `Z_n = (B^n)_aa`, the weighted count of
/// periodic points of period `n` in the cylinder `[a]`.
pub fn gurevich_estimate(
    trunc: &Truncation,
    f: &MarkovPotential,
    t: f64,
    a: Symbol,
    n: usize,
) -> Result<f64, RpfError> {
    let b = transfer_matrix(trunc, f, t)?;
    let idx = trunc
        .index_of(a)
        .ok_or(PotentialError::SymbolNotInScope(a))?;
    let mut x = vec![f64::NEG_INFINITY; trunc.len()];
    x[idx] = 0.0;
    for _ in 0..n {
        x = b.matvec(&x, Execution::default());
    }
    let z = x[idx];
    if z == f64::NEG_INFINITY {
        return Err(RpfError::ZeroDiagonal { a, n });
    }
    Ok(z / n as f64)
}

/// The equilibrium Markov chain `P_ij = B_ij h_j / (λ h_i)`, `π ∝ ν h`.
///
/// The returned measure is indexed by local positions `0..n`; use
/// [`MarkovMeasure::with_alphabet`] to attach symbols.
pub fn equilibrium(pd: &PerronData, log_b: &LogMatrix) -> MarkovMeasure {
    let n = log_b.n();
    let row_add: Vec<f64> = pd.log_h.iter().map(|h| -h - pd.log_lambda).collect();
    let p = log_b.rescaled(&row_add, &pd.log_h, 0.0);
    let sums = p.row_log_sums(Execution::default());
    let neg: Vec<f64> = sums.iter().map(|s| -s).collect();
    let p = p.rescaled(&neg, &vec![0.0; n], 0.0);
    let lp: Vec<f64> = pd.log_nu.iter().zip(&pd.log_h).map(|(a, b)| a + b).collect();
    let z = log_sum_exp(lp.iter().copied());
    let stationary = lp.iter().map(|v| (v - z).exp()).collect();
    MarkovMeasure::from_parts((0..n).collect(), p, stationary)
}

/// Transfer matrix, Perron data and equilibrium state of `t f` on `Σ_k`.
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub log_b: LogMatrix,
    pub perron: PerronData,
    pub measure: MarkovMeasure,
}

impl Equilibrium {
    pub fn pressure(&self) -> f64 {
        self.perron.log_lambda
    }
}

pub fn solve(trunc: &Truncation, f: &MarkovPotential, t: f64) -> Result<Equilibrium, RpfError> {
    solve_with(trunc, f, t, &PerronOptions::default())
}

pub fn solve_with(
    trunc: &Truncation,
    f: &MarkovPotential,
    t: f64,
    opts: &PerronOptions,
) -> Result<Equilibrium, RpfError> {
    let log_b = transfer_matrix(trunc, f, t)?;
    let perron = perron_with(&log_b, opts)?;
    let measure = equilibrium(&perron, &log_b).with_alphabet(trunc.alphabet.clone());
    Ok(Equilibrium {
        log_b,
        perron,
        measure,
    })
}
