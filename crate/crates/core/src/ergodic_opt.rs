//! Zero-temperature objects on a finite truncation: the maximal cycle mean
//! `β_k`, a subaction, the critical graph and its transitive components.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph;
use crate::potential::{MarkovPotential, PotentialError};
use crate::rpf_finite::{self, MarkovMeasure, RpfError};
use crate::shift_model::{build_truncation, ShiftError, ShiftModel, Symbol, Truncation};

pub const DEFAULT_TIE_TOL: f64 = 1e-9;
pub const MAX_TIE_TOL: f64 = 1e-6;
/// Components whose restricted pressures differ by less than this are tied.
pub const PRESSURE_TIE_TOL: f64 = 1e-8;
pub const BRUTE_FORCE_MAX_SYMBOLS: usize = 10;

#[derive(Debug, Error)]
pub enum ErgodicError {
    #[error("brute-force enumeration limited to {max} symbols, got {size}")]
    BudgetExceeded { size: usize, max: usize },
    #[error("truncation has no cycle")]
    NoCycle,
    #[error("no tight cycle at tie tolerance {tie_tol:e}")]
    EmptyCriticalGraph { tie_tol: f64 },
    #[error("critical structure did not stabilize up to k = {k_max}")]
    NotStabilized { k_max: usize },
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Rpf(#[from] RpfError),
}

/// Edge list `(a, b, f(a, b))` of a truncation in local indices.
fn weighted_edges(
    trunc: &Truncation,
    f: &MarkovPotential,
) -> Result<Vec<Vec<(usize, f64)>>, PotentialError> {
    (0..trunc.len())
        .map(|a| {
            let i = trunc.symbol(a);
            trunc
                .incidence
                .successors(a)
                .map(|b| Ok((b, f.eval(i, trunc.symbol(b))?)))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxMeanCycle {
    pub beta: f64,
    /// Simple cycle in symbols, starting at its smallest symbol.
    pub witness: Vec<Symbol>,
}

fn cycle_mean(adj: &[Vec<(usize, f64)>], cycle: &[usize]) -> f64 {
    let len = cycle.len();
    let total: f64 = (0..len)
        .map(|r| {
            let (a, b) = (cycle[r], cycle[(r + 1) % len]);
            adj[a]
                .iter()
                .find(|e| e.0 == b)
                .map_or(f64::NEG_INFINITY, |e| e.1)
        })
        .sum();
    total / len as f64
}

fn rotate_to_min(cycle: &mut [usize]) {
    if let Some(p) = (0..cycle.len()).min_by_key(|&p| cycle[p]) {
        cycle.rotate_left(p);
    }
}

/// Karp's algorithm: `β = max_v min_r (D_n(v) - D_r(v)) / (n - r)` where
/// `D_r(v)` is the heaviest walk of length `r` ending at `v`.
pub fn max_mean_cycle(trunc: &Truncation, f: &MarkovPotential) -> Result<MaxMeanCycle, ErgodicError> {
    let adj = weighted_edges(trunc, f)?;
    max_mean_cycle_local(&adj).map(|(beta, cyc)| MaxMeanCycle {
        beta,
        witness: cyc.into_iter().map(|a| trunc.symbol(a)).collect(),
    })
}

fn max_mean_cycle_local(adj: &[Vec<(usize, f64)>]) -> Result<(f64, Vec<usize>), ErgodicError> {
    let n = adj.len();
    const NEG: f64 = f64::NEG_INFINITY;
    let mut d = vec![vec![NEG; n]; n + 1];
    let mut back = vec![vec![usize::MAX; n]; n + 1];
    d[0].fill(0.0);
    for r in 1..=n {
        for u in 0..n {
            let du = d[r - 1][u];
            if du == NEG {
                continue;
            }
            for &(v, w) in &adj[u] {
                if du + w > d[r][v] {
                    d[r][v] = du + w;
                    back[r][v] = u;
                }
            }
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for v in 0..n {
        if d[n][v] == NEG {
            continue;
        }
        let worst = (0..n)
            .filter(|&r| d[r][v] > NEG)
            .map(|r| (d[n][v] - d[r][v]) / (n - r) as f64)
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|(b, _)| worst > b) {
            best = Some((worst, v));
        }
    }
    let (_, end) = best.ok_or(ErgodicError::NoCycle)?;

    // walk of length n ending at `end`, then split it into simple cycles
    let mut walk = vec![end];
    let mut cur = end;
    for r in (1..=n).rev() {
        cur = back[r][cur];
        walk.push(cur);
    }
    walk.reverse();
    let mut stack: Vec<usize> = Vec::new();
    let mut pos = vec![usize::MAX; n];
    let mut witness: Option<(f64, Vec<usize>)> = None;
    for &v in &walk {
        if pos[v] != usize::MAX {
            let mut cycle: Vec<usize> = stack.split_off(pos[v]);
            for &c in &cycle {
                pos[c] = usize::MAX;
            }
            rotate_to_min(&mut cycle);
            let mean = cycle_mean(adj, &cycle);
            if witness.as_ref().is_none_or(|(m, _)| mean > *m) {
                witness = Some((mean, cycle));
            }
        }
        pos[v] = stack.len();
        stack.push(v);
    }
    witness.ok_or(ErgodicError::NoCycle)
}

/// Largest mean over all simple cycles of length at most `lmax`, by
/// exhaustive enumeration.
pub fn brute_force_max_mean(
    trunc: &Truncation,
    f: &MarkovPotential,
    lmax: usize,
) -> Result<f64, ErgodicError> {
    let n = trunc.len();
    if n > BRUTE_FORCE_MAX_SYMBOLS {
        return Err(ErgodicError::BudgetExceeded {
            size: n,
            max: BRUTE_FORCE_MAX_SYMBOLS,
        });
    }
    let adj = weighted_edges(trunc, f)?;
    let mut best = f64::NEG_INFINITY;
    // cycles are enumerated from their smallest vertex
    fn dfs(
        adj: &[Vec<(usize, f64)>],
        start: usize,
        v: usize,
        len: usize,
        sum: f64,
        lmax: usize,
        on_path: &mut [bool],
        best: &mut f64,
    ) {
        for &(w, x) in &adj[v] {
            if w == start {
                *best = best.max((sum + x) / (len + 1) as f64);
            } else if w > start && !on_path[w] && len + 1 < lmax {
                on_path[w] = true;
                dfs(adj, start, w, len + 1, sum + x, lmax, on_path, best);
                on_path[w] = false;
            }
        }
    }
    let mut on_path = vec![false; n];
    for s in 0..n {
        on_path[s] = true;
        dfs(&adj, s, s, 0, 0.0, lmax.min(n), &mut on_path, &mut best);
        on_path[s] = false;
    }
    if best == f64::NEG_INFINITY {
        return Err(ErgodicError::NoCycle);
    }
    Ok(best)
}

/// Max-plus eigenvector of the reduced weights `f - β`: `v_i` is the
/// heaviest reduced path from `i` to the first witness symbol, computed
/// exactly by Bellman-Ford. Equality `v_i = max_j (f(i,j) - β + v_j)` then
/// holds at every symbol. Gauge: `v` vanishes at local index 0.
pub fn subaction(
    trunc: &Truncation,
    f: &MarkovPotential,
    mmc: &MaxMeanCycle,
) -> Result<Vec<f64>, ErgodicError> {
    let adj = weighted_edges(trunc, f)?;
    let anchor = trunc
        .index_of(mmc.witness[0])
        .ok_or(PotentialError::SymbolNotInScope(mmc.witness[0]))?;
    let n = adj.len();
    let mut v = vec![f64::NEG_INFINITY; n];
    v[anchor] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for i in 0..n {
            if i == anchor {
                continue;
            }
            for &(j, w) in &adj[i] {
                let cand = w - mmc.beta + v[j];
                if cand > v[i] {
                    v[i] = cand;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RpfError::Reducible.into());
    }
    let g = v[0];
    Ok(v.into_iter().map(|x| x - g).collect())
}

/// A transitive component of the critical graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalComponent {
    pub alphabet: Vec<Symbol>,
    /// Tight edges inside the component.
    pub edges: Vec<(Symbol, Symbol)>,
    pub h_top: f64,
    /// `P_G(f | component)`.
    pub pressure: f64,
    /// Equilibrium state of `f` on the component.
    pub measure: MarkovMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalDecomposition {
    pub k: usize,
    pub beta: f64,
    pub witness: Vec<Symbol>,
    pub subaction: Vec<f64>,
    pub tight_edges: Vec<(Symbol, Symbol)>,
    pub components: Vec<CriticalComponent>,
    pub maximal_components: Vec<usize>,
    pub tie_tol: f64,
}

/// Alphabet and edge list of one critical component.
pub type ComponentShape = (Vec<Symbol>, Vec<(Symbol, Symbol)>);

impl CriticalDecomposition {
    /// Component alphabets and edges, the data compared when testing
    /// stabilization in `k`.
    pub fn structure(&self) -> Vec<ComponentShape> {
        self.components
            .iter()
            .map(|c| (c.alphabet.clone(), c.edges.clone()))
            .collect()
    }
}

/// Tight edges `|f(i,j) - β + v_j - v_i| <= tie_tol` and the strongly
/// connected components of the tight graph that carry a cycle.
pub fn critical_graph(
    trunc: &Truncation,
    f: &MarkovPotential,
    mmc: &MaxMeanCycle,
    v: &[f64],
    tie_tol: f64,
) -> Result<CriticalDecomposition, ErgodicError> {
    let adj = weighted_edges(trunc, f)?;
    let n = adj.len();
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            adj[i]
                .iter()
                .filter(|&&(j, w)| (w - mmc.beta + v[j] - v[i]).abs() <= tie_tol)
                .map(|&(j, _)| j)
                .collect()
        })
        .collect();
    let tight_edges: Vec<(Symbol, Symbol)> = tight
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
        .map(|(i, j)| (trunc.symbol(i), trunc.symbol(j)))
        .collect();

    let mut comps: Vec<Vec<usize>> = graph::tarjan_scc(&tight)
        .into_iter()
        .filter(|c| graph::has_cycle(&tight, c))
        .collect();
    if comps.is_empty() {
        return Err(ErgodicError::EmptyCriticalGraph { tie_tol });
    }
    for c in &mut comps {
        c.sort_unstable();
    }
    comps.sort();

    let mut components = Vec::with_capacity(comps.len());
    for c in comps {
        let alphabet: Vec<Symbol> = c.iter().map(|&a| trunc.symbol(a)).collect();
        let members: BTreeSet<usize> = c.iter().copied().collect();
        let edges: BTreeSet<(Symbol, Symbol)> = c
            .iter()
            .flat_map(|&a| {
                tight[a]
                    .iter()
                    .filter(|b| members.contains(b))
                    .map(move |&b| (a, b))
            })
            .map(|(a, b)| (trunc.symbol(a), trunc.symbol(b)))
            .collect();
        let sub = Truncation::from_edges(trunc.k, alphabet.clone(), |a, b| edges.contains(&(a, b)));
        let h_top = rpf_finite::pressure(&sub, &MarkovPotential::constant(0.0), 1.0)?;
        let eq = rpf_finite::solve(&sub, f, 1.0)?;
        components.push(CriticalComponent {
            alphabet,
            edges: edges.into_iter().collect(),
            h_top,
            pressure: eq.pressure(),
            measure: eq.measure,
        });
    }
    let top = components
        .iter()
        .map(|c| c.pressure)
        .fold(f64::NEG_INFINITY, f64::max);
    let maximal_components = components
        .iter()
        .enumerate()
        .filter(|(_, c)| c.pressure >= top - PRESSURE_TIE_TOL)
        .map(|(i, _)| i)
        .collect();
    Ok(CriticalDecomposition {
        k: trunc.k,
        beta: mmc.beta,
        witness: mmc.witness.clone(),
        subaction: v.to_vec(),
        tight_edges,
        components,
        maximal_components,
        tie_tol,
    })
}

/// Karp, subaction and critical graph in one pass. An empty critical graph
/// is retried with a tie tolerance ten times larger, up to [`MAX_TIE_TOL`].
pub fn decompose(trunc: &Truncation, f: &MarkovPotential) -> Result<CriticalDecomposition, ErgodicError> {
    let mmc = max_mean_cycle(trunc, f)?;
    let v = subaction(trunc, f, &mmc)?;
    let mut tol = DEFAULT_TIE_TOL;
    loop {
        match critical_graph(trunc, f, &mmc, &v, tol) {
            Err(ErgodicError::EmptyCriticalGraph { .. }) if tol < MAX_TIE_TOL => tol *= 10.0,
            other => return other,
        }
    }
}

/// Supremum of `h(μ)` over maximizing measures: the largest topological
/// entropy among maximal components.
pub fn max_entropy_over_maximizing(dec: &CriticalDecomposition) -> f64 {
    dec.maximal_components
        .iter()
        .map(|&j| dec.components[j].h_top)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K0Report {
    pub k0: usize,
    /// Always true: stabilization over a finite window is not a proof.
    pub heuristic: bool,
    pub betas: Vec<(usize, f64)>,
    pub decomposition: CriticalDecomposition,
}

/// Smallest `k` in the schedule from which `β_k` and the critical component
/// structure stay unchanged over `window` consecutive truncations.
pub fn detect_k0(
    model: &ShiftModel,
    f: &MarkovPotential,
    ks: &[usize],
    window: usize,
) -> Result<K0Report, ErgodicError> {
    let window = window.max(1);
    let mut decs: Vec<CriticalDecomposition> = Vec::with_capacity(ks.len());
    let mut betas = Vec::with_capacity(ks.len());
    for &k in ks {
        let trunc = build_truncation(model, k)?;
        let dec = decompose(&trunc, f)?;
        betas.push((k, dec.beta));
        decs.push(dec);
        let len = decs.len();
        if len < window {
            continue;
        }
        let run = &decs[len - window..];
        let first = &run[0];
        let same = run.iter().all(|d| {
            (d.beta - first.beta).abs() <= PRESSURE_TIE_TOL && d.structure() == first.structure()
        });
        if same {
            return Ok(K0Report {
                k0: first.k,
                heuristic: true,
                betas,
                decomposition: first.clone(),
            });
        }
    }
    Err(ErgodicError::NotStabilized {
        k_max: ks.last().copied().unwrap_or(0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shift_model::TailRule;
    use approx::assert_abs_diff_eq;

    fn renewal(k: usize) -> Truncation {
        build_truncation(&ShiftModel::renewal(), k).unwrap()
    }

    fn full(k: usize) -> Truncation {
        build_truncation(&ShiftModel::full(), k).unwrap()
    }

    #[test]
    fn karp_examples() {
        let rw = MarkovPotential::renewal_weighted();
        let m = max_mean_cycle(&renewal(2), &rw).unwrap();
        assert_eq!(m.beta, -1.0);
        assert_eq!(m.witness, vec![0]);
        assert_eq!(brute_force_max_mean(&renewal(2), &rw, 3).unwrap(), -1.0);

        let m = max_mean_cycle(&full(3), &MarkovPotential::tie_two_loops()).unwrap();
        assert_eq!(m.beta, 0.0);
        assert!(m.witness.iter().all(|&s| s <= 1));

        let m = max_mean_cycle(&full(4), &MarkovPotential::log_quadratic()).unwrap();
        assert_abs_diff_eq!(m.beta, -(2f64.ln()), epsilon = 1e-15);
        assert_eq!(m.witness, vec![0]);
    }

    #[test]
    fn brute_force_examples() {
        let model = ShiftModel::custom([(0, 1), (1, 0)], TailRule::None);
        let t = build_truncation(&model, 0).unwrap();
        let f = MarkovPotential::table([((0, 1), -1.0), ((1, 0), -3.0)]);
        assert_eq!(brute_force_max_mean(&t, &f, 2).unwrap(), -2.0);
        assert_eq!(max_mean_cycle(&t, &f).unwrap().beta, -2.0);

        let f = MarkovPotential::table([((0, 0), 0.0), ((0, 1), -1.0), ((1, 0), -1.0), ((1, 1), -5.0)]);
        assert_eq!(brute_force_max_mean(&full(1), &f, 2).unwrap(), 0.0);
        assert!(matches!(
            brute_force_max_mean(&full(11), &f, 2),
            Err(ErgodicError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn subaction_examples() {
        let t = full(3);
        let c = MarkovPotential::constant(-2.5);
        let m = max_mean_cycle(&t, &c).unwrap();
        assert_eq!(subaction(&t, &c, &m).unwrap(), vec![0.0; 4]);

        let model = ShiftModel::custom([(0, 1), (1, 0)], TailRule::None);
        let t2 = build_truncation(&model, 0).unwrap();
        let f = MarkovPotential::table([((0, 1), 0.0), ((1, 0), -2.0)]);
        let m = max_mean_cycle(&t2, &f).unwrap();
        assert_eq!(m.beta, -1.0);
        let v = subaction(&t2, &f, &m).unwrap();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], -1.0);

        let t3 = full(2);
        let tie = MarkovPotential::tie_two_loops();
        let m = max_mean_cycle(&t3, &tie).unwrap();
        let v = subaction(&t3, &tie, &m).unwrap();
        assert_eq!(&v[..2], &[0.0, 0.0]);
        assert_eq!(v[2], -3.0);
    }

    #[test]
    fn critical_graph_examples() {
        let tie = MarkovPotential::tie_two_loops();
        let dec = decompose(&full(4), &tie).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert_eq!(dec.components[0].alphabet, vec![0, 1]);
        assert_eq!(dec.components[0].edges.len(), 4);
        assert_abs_diff_eq!(dec.components[0].h_top, 2f64.ln(), epsilon = 1e-13);
        assert_eq!(dec.maximal_components, vec![0]);
        assert_abs_diff_eq!(max_entropy_over_maximizing(&dec), 2f64.ln(), epsilon = 1e-12);

        let dec = decompose(&renewal(5), &MarkovPotential::renewal_weighted()).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert_eq!(dec.components[0].alphabet, vec![0]);
        assert_eq!(dec.components[0].h_top, 0.0);
        assert_eq!(max_entropy_over_maximizing(&dec), 0.0);

        let f = MarkovPotential::table([((0, 0), 0.0), ((0, 1), -1.0), ((1, 0), -1.0), ((1, 1), 0.0)]);
        let dec = decompose(&full(1), &f).unwrap();
        assert_eq!(dec.components.len(), 2);
        assert_eq!(dec.maximal_components, vec![0, 1]);
        assert_eq!(max_entropy_over_maximizing(&dec), 0.0);
        for c in &dec.components {
            assert_abs_diff_eq!(c.pressure - dec.beta, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn invariant_under_constant_shift() {
        let t = full(3);
        let f = MarkovPotential::table(
            (0..4).flat_map(|i| (0..4).map(move |j| ((i, j), -(((i * 7 + j * 3) % 5) as f64) * 0.3))),
        );
        let g = MarkovPotential::table(
            (0..4).flat_map(|i| (0..4).map(move |j| ((i, j), -(((i * 7 + j * 3) % 5) as f64) * 0.3 + 1.25))),
        );
        let a = decompose(&t, &f).unwrap();
        let b = decompose(&t, &g).unwrap();
        assert_abs_diff_eq!(b.beta, a.beta + 1.25, epsilon = 1e-12);
        assert_eq!(a.witness, b.witness);
        assert_eq!(a.structure(), b.structure());
    }

    #[test]
    fn k0_examples() {
        let ks: Vec<usize> = (1..=6).collect();
        let r = detect_k0(&ShiftModel::full(), &MarkovPotential::tie_two_loops(), &ks, 3).unwrap();
        assert_eq!(r.k0, 1);
        assert!(r.heuristic);
        let r = detect_k0(&ShiftModel::renewal(), &MarkovPotential::renewal_weighted(), &ks, 3).unwrap();
        assert_eq!(r.k0, 1);
        assert!(r.betas.iter().all(|&(_, b)| b == -1.0));
        let r = detect_k0(&ShiftModel::full(), &MarkovPotential::log_quadratic(), &ks, 3).unwrap();
        assert_eq!(r.k0, 1);
        assert!(matches!(
            detect_k0(&ShiftModel::full(), &MarkovPotential::log_quadratic(), &ks[..2], 3),
            Err(ErgodicError::NotStabilized { k_max: 2 })
        ));
    }
}
