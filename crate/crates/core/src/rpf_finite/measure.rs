use rand::Rng;
use serde::{Deserialize, Serialize};

use super::log_matrix::LogMatrix;
use super::RpfError;
use crate::par::Execution;
use crate::potential::{MarkovPotential, PotentialError};
use crate::shift_model::Symbol;

/// A stationary Markov chain on a finite alphabet: an invariant measure of
/// the one-sided shift. Transition probabilities are kept as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovMeasure {
    pub alphabet: Vec<Symbol>,
    pub log_p: LogMatrix,
    pub stationary: Vec<f64>,
}

impl MarkovMeasure {
    pub(crate) fn from_parts(alphabet: Vec<Symbol>, log_p: LogMatrix, stationary: Vec<f64>) -> Self {
        Self {
            alphabet,
            log_p,
            stationary,
        }
    }

    pub fn with_alphabet(mut self, alphabet: Vec<Symbol>) -> Self {
        assert_eq!(alphabet.len(), self.stationary.len());
        self.alphabet = alphabet;
        self
    }

    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    pub fn index_of(&self, s: Symbol) -> Option<usize> {
        self.alphabet.binary_search(&s).ok()
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.log_p.get(i, j).exp()
    }

    /// Mass of the 1-cylinder `[s]`.
    pub fn mass(&self, s: Symbol) -> f64 {
        self.index_of(s).map_or(0.0, |i| self.stationary[i])
    }

    /// Chain with transition matrix `p` (rows summing to 1) and its
    /// stationary law; `p` must be irreducible on its support.
    pub fn from_transition_matrix(alphabet: Vec<Symbol>, p: &[Vec<f64>]) -> Result<Self, RpfError> {
        let n = alphabet.len();
        if p.len() != n || p.iter().any(|r| r.len() != n) {
            return Err(RpfError::InvalidTransition("shape mismatch".into()));
        }
        for (i, r) in p.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if r.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > 1e-12 {
                return Err(RpfError::InvalidTransition(format!("row {i} sums to {s}")));
            }
        }
        let stationary = stationary_law(p)?;
        let mut edges = Vec::new();
        for (i, r) in p.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                if x > 0.0 {
                    edges.push((i, j, x.ln()));
                }
            }
        }
        Ok(Self {
            alphabet,
            log_p: LogMatrix::from_edges(n, edges),
            stationary,
        })
    }

    /// Uniform measure on the periodic orbit that repeats `cycle`.
    pub fn cycle_measure(cycle: &[Symbol]) -> Result<Self, RpfError> {
        let mut alphabet = cycle.to_vec();
        alphabet.sort_unstable();
        alphabet.dedup();
        if alphabet.len() != cycle.len() || cycle.is_empty() {
            return Err(RpfError::InvalidTransition("cycle must be simple and nonempty".into()));
        }
        let n = alphabet.len();
        let idx = |s: Symbol| alphabet.binary_search(&s).expect("cycle symbol");
        let edges = (0..n)
            .map(|r| (idx(cycle[r]), idx(cycle[(r + 1) % n]), 0.0))
            .collect();
        Ok(Self {
            log_p: LogMatrix::from_edges(n, edges),
            stationary: vec![1.0 / n as f64; n],
            alphabet,
        })
    }
}

/// Solve `π P = π`, `sum π = 1` by Gaussian elimination with partial pivoting.
fn stationary_law(p: &[Vec<f64>]) -> Result<Vec<f64>, RpfError> {
    let n = p.len();
    // rows of A = (P - I)^T, last equation replaced by normalization
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| p[j][i] - if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let mut rhs = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    rhs[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("nonempty range");
        if a[piv][col].abs() < 1e-300 {
            return Err(RpfError::InvalidTransition("singular stationary system".into()));
        }
        a.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                for c in col..n {
                    a[r][c] -= factor * a[col][c];
                }
                rhs[r] -= factor * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / a[r][r];
    }
    Ok(x)
}

/// `μ[ω] = π_{ω_0} Π P_{ω_r ω_{r+1}}`; zero for inadmissible words.
pub fn cylinder_mass(m: &MarkovMeasure, word: &[Symbol]) -> f64 {
    log_cylinder_mass(m, word).exp()
}

fn log_cylinder_mass(m: &MarkovMeasure, word: &[Symbol]) -> f64 {
    let Some(idx) = word
        .iter()
        .map(|&s| m.index_of(s))
        .collect::<Option<Vec<_>>>()
    else {
        return f64::NEG_INFINITY;
    };
    let Some(&first) = idx.first() else {
        return 0.0;
    };
    let mut lm = m.stationary[first].ln();
    for w in idx.windows(2) {
        lm += m.log_p.get(w[0], w[1]);
    }
    lm
}

/// `μ(f) = sum π_i P_ij f(i, j)`.
pub fn integral(m: &MarkovMeasure, f: &MarkovPotential) -> Result<f64, PotentialError> {
    let mut total = 0.0;
    for (i, &pi) in m.stationary.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let si = m.alphabet[i];
        if f.is_row_constant() {
            total += pi * f.eval(si, si)?;
            continue;
        }
        let mut row = 0.0;
        let mut err = None;
        m.log_p.for_each_in_row(i, |j, lp| {
            if err.is_some() {
                return;
            }
            match f.eval(si, m.alphabet[j]) {
                Ok(v) => row += lp.exp() * v,
                Err(e) => err = Some(e),
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        total += pi * row;
    }
    Ok(total)
}

/// Kolmogorov–Sinai entropy `-sum π_i P_ij log P_ij` (with `0 log 0 = 0`).
pub fn entropy(m: &MarkovMeasure) -> f64 {
    let mut h = 0.0;
    for (i, &pi) in m.stationary.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let row = match &m.log_p {
            LogMatrix::Outer { row, col } => {
                // log P_ij = u_i + v_j
                let u = row[i];
                let s: f64 = col.iter().map(|&v| (u + v).exp() * v).sum();
                -(u + s)
            }
            lp => {
                let mut acc = 0.0;
                lp.for_each_in_row(i, |_, l| {
                    if l > f64::NEG_INFINITY {
                        acc -= l.exp() * l;
                    }
                });
                acc
            }
        };
        h += pi * row;
    }
    h
}

/// `H(μ | α^n)`: Shannon entropy of the distribution of length-`n` words.
pub fn partition_entropy(m: &MarkovMeasure, n: usize, budget: usize) -> Result<f64, RpfError> {
    let needed = (m.len() as f64).powi(n as i32);
    if n == 0 || needed > budget as f64 {
        return Err(RpfError::BudgetExceeded { needed, budget });
    }
    fn walk(m: &MarkovMeasure, last: usize, lm: f64, left: usize, acc: &mut f64) {
        if left == 0 {
            *acc -= lm.exp() * lm;
            return;
        }
        m.log_p.for_each_in_row(last, |j, lp| {
            walk(m, j, lm + lp, left - 1, acc);
        });
    }
    let mut acc = 0.0;
    for (i, &pi) in m.stationary.iter().enumerate() {
        if pi > 0.0 {
            walk(m, i, pi.ln(), n - 1, &mut acc);
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsRatio {
    pub ratio: f64,
    /// `C = exp(4 t V_1)` on the support of the measure.
    pub constant: f64,
    pub bound_ok: bool,
}

fn support_variation(m: &MarkovMeasure, f: &MarkovPotential) -> Result<f64, PotentialError> {
    if f.is_row_constant() {
        return Ok(0.0);
    }
    let mut v: f64 = 0.0;
    for i in 0..m.len() {
        let si = m.alphabet[i];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut err = None;
        m.log_p.for_each_in_row(i, |j, _| match f.eval(si, m.alphabet[j]) {
            Ok(x) => {
                lo = lo.min(x);
                hi = hi.max(x);
            }
            Err(e) => err = Some(e),
        });
        if let Some(e) = err {
            return Err(e);
        }
        if hi >= lo {
            v = v.max(hi - lo);
        }
    }
    Ok(v)
}

fn row_sup(m: &MarkovMeasure, f: &MarkovPotential, i: usize) -> Result<f64, PotentialError> {
    let si = m.alphabet[i];
    if f.is_row_constant() {
        return f.eval(si, si);
    }
    let mut best = f64::NEG_INFINITY;
    let mut err = None;
    m.log_p.for_each_in_row(i, |j, _| match f.eval(si, m.alphabet[j]) {
        Ok(x) => best = best.max(x),
        Err(e) => err = Some(e),
    });
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// `μ[ω] / exp(S_n(t f)(x) - n P)` at the point `x = ωωω...` of `[ω]`.
///
/// When `ω` does not close up (last symbol cannot precede the first) the
/// continuation edge is the successor of the last symbol maximizing `f`.
pub fn gibbs_ratio(
    m: &MarkovMeasure,
    word: &[Symbol],
    f: &MarkovPotential,
    t: f64,
    pressure: f64,
) -> Result<GibbsRatio, PotentialError> {
    let n = word.len();
    let mut s = 0.0;
    for w in word.windows(2) {
        s += t * f.eval(w[0], w[1])?;
    }
    let last = *word.last().ok_or(PotentialError::InvalidIndex)?;
    let li = m
        .index_of(last)
        .ok_or(PotentialError::SymbolNotInScope(last))?;
    let first_ok = m
        .index_of(word[0])
        .is_some_and(|fi| m.log_p.get(li, fi) > f64::NEG_INFINITY);
    s += t * if first_ok {
        f.eval(last, word[0])?
    } else {
        row_sup(m, f, li)?
    };
    let log_ratio = log_cylinder_mass(m, word) - (s - n as f64 * pressure);
    let v = support_variation(m, f)?;
    let log_c = 4.0 * t * v;
    // ratios equal to C up to rounding still satisfy the bound
    let slack = 1e-9 * (1.0 + log_c);
    Ok(GibbsRatio {
        ratio: log_ratio.exp(),
        constant: log_c.exp(),
        bound_ok: log_ratio.abs() <= log_c + slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCylinderRatio {
    pub symbol: Symbol,
    pub ratio: f64,
    pub bound_ok: bool,
}

/// `μ[i] / exp(t sup f|[i] - P)` for every symbol, checked against
/// `[exp(-4 t V_1), exp(4 t V_1)]`.
pub fn one_cylinder_ratios(
    m: &MarkovMeasure,
    f: &MarkovPotential,
    t: f64,
    pressure: f64,
) -> Result<Vec<OneCylinderRatio>, PotentialError> {
    let log_c = 4.0 * t * support_variation(m, f)?;
    let slack = 1e-9 * (1.0 + log_c);
    (0..m.len())
        .map(|i| {
            let lr = m.stationary[i].ln() - (t * row_sup(m, f, i)? - pressure);
            Ok(OneCylinderRatio {
                symbol: m.alphabet[i],
                ratio: lr.exp(),
                bound_ok: lr.abs() <= log_c + slack,
            })
        })
        .collect()
}

/// A random Markov chain supported on all edges of `support` (an
/// irreducible 0/1 pattern given as successor lists).
pub fn random_measure<R: Rng>(
    alphabet: Vec<Symbol>,
    support: &[Vec<usize>],
    rng: &mut R,
) -> Result<MarkovMeasure, RpfError> {
    let n = alphabet.len();
    let mut p = vec![vec![0.0; n]; n];
    for (i, succ) in support.iter().enumerate() {
        let weights: Vec<f64> = succ.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for (&j, w) in succ.iter().zip(weights) {
            p[i][j] = w / total;
        }
        // absorb rounding so the row sums to 1 exactly enough
        let s: f64 = p[i].iter().sum();
        if let Some(&j) = succ.first() {
            p[i][j] += 1.0 - s;
        }
    }
    MarkovMeasure::from_transition_matrix(alphabet, &p)
}

/// Largest deviation of row sums from 1 and of `πP` from `π`.
pub fn stochasticity_defect(m: &MarkovMeasure) -> (f64, f64) {
    let rows = m.log_p.row_log_sums(Execution::Sequential);
    let row_err = rows.iter().fold(0.0f64, |a, r| a.max((r.exp() - 1.0).abs()));
    let lpi: Vec<f64> = m.stationary.iter().map(|p| p.ln()).collect();
    let pi_p = m.log_p.vecmat(&lpi, Execution::Sequential);
    let stat_err = pi_p
        .iter()
        .zip(&m.stationary)
        .fold(0.0f64, |a, (x, p)| a.max((x.exp() - p).abs()));
    (row_err, stat_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rpf_finite::{solve, pressure};
    use crate::shift_model::{build_truncation, ShiftModel, TailRule};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn parry2() -> MarkovMeasure {
        let t = build_truncation(&ShiftModel::full(), 1).unwrap();
        solve(&t, &MarkovPotential::constant(0.0), 1.0).unwrap().measure
    }

    fn lq3() -> MarkovMeasure {
        let t = build_truncation(&ShiftModel::full(), 2).unwrap();
        solve(&t, &MarkovPotential::log_quadratic(), 1.0).unwrap().measure
    }

    fn cycle2() -> MarkovMeasure {
        let model = ShiftModel::custom([(0, 1), (1, 0)], TailRule::None);
        let t = build_truncation(&model, 0).unwrap();
        let f = MarkovPotential::table([((0, 1), -0.4), ((1, 0), -2.0)]);
        solve(&t, &f, 3.0).unwrap().measure
    }

    #[test]
    fn equilibrium_examples() {
        let m = parry2();
        for i in 0..2 {
            assert_abs_diff_eq!(m.stationary[i], 0.5, epsilon = 1e-14);
            for j in 0..2 {
                assert_abs_diff_eq!(m.transition(i, j), 0.5, epsilon = 1e-14);
            }
        }
        let m = lq3();
        let q = [2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0];
        for i in 0..3 {
            assert_abs_diff_eq!(m.stationary[i], q[i], epsilon = 1e-14);
            for j in 0..3 {
                assert_abs_diff_eq!(m.transition(i, j), q[j], epsilon = 1e-14);
            }
        }
        let m = cycle2();
        assert_abs_diff_eq!(m.stationary[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(m.transition(0, 1), 1.0, epsilon = 1e-14);
        assert_eq!(m.transition(0, 0), 0.0);
    }

    #[test]
    fn cylinder_masses() {
        assert_abs_diff_eq!(cylinder_mass(&parry2(), &[0, 1]), 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(cylinder_mass(&lq3(), &[0]), 2.0 / 3.0, epsilon = 1e-14);
        assert_eq!(cylinder_mass(&cycle2(), &[0, 0]), 0.0);
        assert_eq!(cylinder_mass(&cycle2(), &[7]), 0.0);
    }

    #[test]
    fn integrals() {
        let c = MarkovPotential::constant(-1.7);
        assert_abs_diff_eq!(integral(&parry2(), &c).unwrap(), -1.7, epsilon = 1e-14);
        let v = integral(&lq3(), &MarkovPotential::log_quadratic()).unwrap();
        let expected = (2.0 / 3.0) * -(2f64.ln()) + (2.0 / 9.0) * -(6f64.ln()) + (1.0 / 9.0) * -(12f64.ln());
        assert_abs_diff_eq!(v, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(v, -1.136367, epsilon = 1e-6);
        let delta = MarkovMeasure::cycle_measure(&[0]).unwrap();
        let tie = MarkovPotential::renewal_weighted();
        assert_eq!(integral(&delta, &tie).unwrap(), -1.0);
    }

    #[test]
    fn entropies() {
        assert_abs_diff_eq!(entropy(&parry2()), 2f64.ln(), epsilon = 1e-14);
        let h = entropy(&lq3());
        let q: [f64; 3] = [2.0 / 3.0, 2.0 / 9.0, 1.0 / 9.0];
        let expected: f64 = q.iter().map(|p| -p * p.ln()).sum();
        assert_abs_diff_eq!(h, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(h, 0.848686, epsilon = 1e-6);
        let v = integral(&lq3(), &MarkovPotential::log_quadratic()).unwrap();
        assert_abs_diff_eq!(h + v, 0.75f64.ln(), epsilon = 1e-13);
        assert_eq!(entropy(&cycle2()), 0.0);
    }

    #[test]
    fn partition_entropies() {
        assert_abs_diff_eq!(
            partition_entropy(&parry2(), 3, 1000).unwrap(),
            3.0 * 2f64.ln(),
            epsilon = 1e-13
        );
        let m = lq3();
        let h1: f64 = m.stationary.iter().map(|p| -p * p.ln()).sum();
        assert_abs_diff_eq!(partition_entropy(&m, 1, 1000).unwrap(), h1, epsilon = 1e-14);
        assert_abs_diff_eq!(partition_entropy(&cycle2(), 5, 1000).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert!(matches!(
            partition_entropy(&m, 7, 1000),
            Err(RpfError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn gibbs_ratios() {
        let t = build_truncation(&ShiftModel::full(), 3).unwrap();
        let zero = MarkovPotential::constant(0.0);
        let eq = solve(&t, &zero, 2.0).unwrap();
        for w in [vec![0], vec![1, 3], vec![2, 2, 0, 1]] {
            let g = gibbs_ratio(&eq.measure, &w, &zero, 2.0, eq.pressure()).unwrap();
            assert_abs_diff_eq!(g.ratio, 1.0, epsilon = 1e-12);
            assert_eq!(g.constant, 1.0);
            assert!(g.bound_ok);
        }
        let t3 = build_truncation(&ShiftModel::full(), 2).unwrap();
        let lq = MarkovPotential::log_quadratic();
        let p = pressure(&t3, &lq, 1.0).unwrap();
        let g = gibbs_ratio(&lq3(), &[0], &lq, 1.0, p).unwrap();
        assert_abs_diff_eq!(g.ratio, 1.0, epsilon = 1e-12);
        for r in one_cylinder_ratios(&lq3(), &lq, 1.0, p).unwrap() {
            assert_abs_diff_eq!(r.ratio, 1.0, epsilon = 1e-12);
            assert!(r.bound_ok);
        }
    }

    #[test]
    fn from_transition_matrix_solves_stationary() {
        let p = vec![vec![0.9, 0.1], vec![0.5, 0.5]];
        let m = MarkovMeasure::from_transition_matrix(vec![0, 1], &p).unwrap();
        assert_abs_diff_eq!(m.stationary[0], 5.0 / 6.0, epsilon = 1e-14);
        let bad = vec![vec![0.9, 0.2], vec![0.5, 0.5]];
        assert!(MarkovMeasure::from_transition_matrix(vec![0, 1], &bad).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let support = vec![vec![0, 1, 2], vec![0], vec![1]];
        let m = random_measure(vec![0, 1, 2], &support, &mut rng).unwrap();
        let (row, stat) = stochasticity_defect(&m);
        assert!(row < 1e-14 && stat < 1e-14);
    }
}
