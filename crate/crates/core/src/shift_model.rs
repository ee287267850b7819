//! Countable-alphabet topological Markov shifts and their compact transitive
//! truncations.
//!
//! The alphabet is always the natural numbers. A [`ShiftModel`] describes the
//! (infinite) incidence structure generatively; [`build_truncation`] cuts out
//! the irreducible finite subshift on a prefix alphabet `{0, ..., m_k}`,
//! adding connecting symbols where the prefix alone is not transitive.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph;

/// A symbol of the alphabet ℕ.
pub type Symbol = usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShiftError {
    #[error("truncation {k} is not transitive: {reason}")]
    NonTransitive { k: usize, reason: String },
    #[error("symbol 0 lies on no cycle")]
    NoCycleThroughZero,
    #[error("incidence matrix is not square ({rows} rows, row {row} has {cols} columns)")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("word length must be at least 1")]
    EmptyWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    FullShift,
    RenewalShift,
    Custom,
}

/// Edges among symbols beyond the explicit edge list of a custom model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailRule {
    /// No edge touches a symbol above the largest explicit symbol.
    None,
    /// Every pair `(i, j)` with `max(i, j)` above the explicit range is an edge.
    FullTail,
    /// For `i` above the explicit range: `0 -> i` and `i -> i - 1`.
    RenewalTail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftModel {
    pub kind: ModelKind,
    pub custom_edges: BTreeSet<(Symbol, Symbol)>,
    pub custom_tail_rule: TailRule,
    /// `m_k = k + schedule_offset` for the built-in families.
    pub schedule_offset: usize,
}

impl ShiftModel {
    pub fn full() -> Self {
        Self {
            kind: ModelKind::FullShift,
            custom_edges: BTreeSet::new(),
            custom_tail_rule: TailRule::None,
            schedule_offset: 0,
        }
    }

    pub fn renewal() -> Self {
        Self {
            kind: ModelKind::RenewalShift,
            ..Self::full()
        }
    }

    pub fn custom(edges: impl IntoIterator<Item = (Symbol, Symbol)>, tail: TailRule) -> Self {
        Self {
            kind: ModelKind::Custom,
            custom_edges: edges.into_iter().collect(),
            custom_tail_rule: tail,
            schedule_offset: 0,
        }
    }

    pub fn with_schedule_offset(mut self, offset: usize) -> Self {
        self.schedule_offset = offset;
        self
    }

    /// Largest symbol named by the explicit edge list (custom models).
    pub fn explicit_max(&self) -> Option<Symbol> {
        self.custom_edges.iter().map(|&(i, j)| i.max(j)).max()
    }

    pub fn has_edge(&self, i: Symbol, j: Symbol) -> bool {
        match self.kind {
            ModelKind::FullShift => true,
            ModelKind::RenewalShift => i == 0 || j + 1 == i,
            ModelKind::Custom => {
                if self.custom_edges.contains(&(i, j)) {
                    return true;
                }
                let e = match self.explicit_max() {
                    Some(e) => e,
                    None => return false,
                };
                match self.custom_tail_rule {
                    TailRule::None => false,
                    TailRule::FullTail => i.max(j) > e,
                    TailRule::RenewalTail => (i == 0 && j > e) || (i > e && j + 1 == i),
                }
            }
        }
    }

    /// Whether some symbol has infinitely many successors.
    pub fn has_infinite_row(&self) -> bool {
        match self.kind {
            ModelKind::FullShift | ModelKind::RenewalShift => true,
            ModelKind::Custom => {
                self.explicit_max().is_some() && self.custom_tail_rule != TailRule::None
            }
        }
    }

    /// Whether the alphabet of the model is infinite.
    pub fn is_infinite(&self) -> bool {
        self.has_infinite_row()
    }

    /// Successors of `i` not exceeding `bound`, ascending.
    pub fn successors_within(&self, i: Symbol, bound: Symbol) -> Vec<Symbol> {
        match self.kind {
            ModelKind::FullShift => (0..=bound).collect(),
            ModelKind::RenewalShift if i == 0 => (0..=bound).collect(),
            ModelKind::RenewalShift => {
                if i - 1 <= bound {
                    vec![i - 1]
                } else {
                    vec![]
                }
            }
            ModelKind::Custom => (0..=bound).filter(|&j| self.has_edge(i, j)).collect(),
        }
    }

    /// Finite graph on `0..=bound` induced by the model.
    fn induced_adjacency(&self, bound: Symbol) -> Vec<Vec<usize>> {
        (0..=bound).map(|i| self.successors_within(i, bound)).collect()
    }
}

/// The 0/1 incidence matrix of a truncation, indexed by position in the
/// truncation's alphabet. The built-in families are stored structurally so
/// very large truncations stay cheap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Incidence {
    /// All-ones `n x n`.
    Full(usize),
    /// Renewal pattern on `0..n`: `0 -> j` for all `j`, `i -> i - 1`.
    Renewal(usize),
    /// Sorted successor lists.
    Explicit(Vec<Vec<usize>>),
}

/// Iterator over the successors of one row of an [`Incidence`].
pub enum Successors<'a> {
    Range(Range<usize>),
    Slice(std::slice::Iter<'a, usize>),
}

impl Iterator for Successors<'_> {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        match self {
            Successors::Range(r) => r.next(),
            Successors::Slice(s) => s.next().copied(),
        }
    }
}

impl Incidence {
    pub fn len(&self) -> usize {
        match self {
            Incidence::Full(n) | Incidence::Renewal(n) => *n,
            Incidence::Explicit(adj) => adj.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let n = self.len();
        if i >= n || j >= n {
            return false;
        }
        match self {
            Incidence::Full(_) => true,
            Incidence::Renewal(_) => i == 0 || j + 1 == i,
            Incidence::Explicit(adj) => adj[i].binary_search(&j).is_ok(),
        }
    }

    pub fn successors(&self, i: usize) -> Successors<'_> {
        match self {
            Incidence::Full(n) => Successors::Range(0..*n),
            Incidence::Renewal(n) if i == 0 => Successors::Range(0..*n),
            Incidence::Renewal(_) => Successors::Range(i - 1..i),
            Incidence::Explicit(adj) => Successors::Slice(adj[i].iter()),
        }
    }

    pub fn edge_count(&self) -> usize {
        match self {
            Incidence::Full(n) => n * n,
            Incidence::Renewal(n) => 2 * n - 1,
            Incidence::Explicit(adj) => adj.iter().map(Vec::len).sum(),
        }
    }

    pub fn to_adjacency(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.successors(i).collect()).collect()
    }

    /// Dense 0/1 matrix; only sensible for small alphabets.
    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.len();
        let mut m = vec![vec![0u8; n]; n];
        for (i, row) in m.iter_mut().enumerate() {
            for j in self.successors(i) {
                row[j] = 1;
            }
        }
        m
    }
}

/// A finite transitive subshift `Σ_k` on the alphabet `A_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub k: usize,
    /// Sorted symbols; position in this list is the local index.
    pub alphabet: Vec<Symbol>,
    pub incidence: Incidence,
    pub period: usize,
}

impl Truncation {
    pub fn len(&self) -> usize {
        self.alphabet.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphabet.is_empty()
    }

    /// Local index of a symbol.
    pub fn index_of(&self, symbol: Symbol) -> Option<usize> {
        let n = self.alphabet.len();
        if n > 0 && self.alphabet[n - 1] == n - 1 {
            return (symbol < n).then_some(symbol);
        }
        self.alphabet.binary_search(&symbol).ok()
    }

    pub fn symbol(&self, index: usize) -> Symbol {
        self.alphabet[index]
    }

    pub fn is_mixing(&self) -> bool {
        self.period == 1
    }

    /// Whether every ordered pair of symbols is joined by a path.
    pub fn is_irreducible(&self) -> bool {
        match self.incidence {
            Incidence::Full(n) | Incidence::Renewal(n) => n > 0,
            Incidence::Explicit(ref adj) => {
                let comps = graph::tarjan_scc(adj);
                comps.len() == 1 && graph::has_cycle(adj, &comps[0])
            }
        }
    }

    /// Truncation induced by an explicit symbol set, with edges from `edge`.
    pub fn from_edges(
        k: usize,
        alphabet: Vec<Symbol>,
        edge: impl Fn(Symbol, Symbol) -> bool,
    ) -> Self {
        let adj: Vec<Vec<usize>> = alphabet
            .iter()
            .map(|&a| {
                alphabet
                    .iter()
                    .enumerate()
                    .filter(|&(_, &b)| edge(a, b))
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let period = graph::period(&adj);
        Self {
            k,
            alphabet,
            incidence: Incidence::Explicit(adj),
            period,
        }
    }
}

/// Build the compact transitive truncation `Σ_k`.
///
/// Full and renewal shifts use the prefix alphabet `{0, ..., k + offset}`,
/// which is already irreducible. Custom models restrict the prefix to the
/// strongly connected class of symbol 0 and add the symbols on shortest
/// connecting paths (BFS, smallest index first); `m_k` is bumped past the
/// previous alphabet so the family is strictly nested.
pub fn build_truncation(model: &ShiftModel, k: usize) -> Result<Truncation, ShiftError> {
    let m = k + model.schedule_offset;
    match model.kind {
        ModelKind::FullShift => Ok(Truncation {
            k,
            alphabet: (0..=m).collect(),
            incidence: Incidence::Full(m + 1),
            period: 1,
        }),
        ModelKind::RenewalShift => Ok(Truncation {
            k,
            alphabet: (0..=m).collect(),
            incidence: Incidence::Renewal(m + 1),
            period: 1,
        }),
        ModelKind::Custom => build_custom(model, k),
    }
}

fn build_custom(model: &ShiftModel, k: usize) -> Result<Truncation, ShiftError> {
    let mut prefix = model.schedule_offset;
    let mut alphabet = connected_prefix(model, prefix, 0)?;
    for step in 1..=k {
        let previous = alphabet.clone();
        let last = *previous.last().expect("nonempty alphabet");
        prefix = (prefix + 1).max(last + 1);
        let limit = prefix + model.explicit_max().unwrap_or(0) + 2;
        loop {
            alphabet = connected_prefix(model, prefix, step)?;
            if alphabet.len() > previous.len() {
                break;
            }
            if prefix >= limit {
                return Err(ShiftError::NonTransitive {
                    k: step,
                    reason: format!(
                        "no symbol beyond {last} connects to the class of 0; alphabet exhausted"
                    ),
                });
            }
            prefix += 1;
        }
    }
    let trunc = Truncation::from_edges(k, alphabet, |i, j| model.has_edge(i, j));
    if !trunc.is_irreducible() {
        return Err(ShiftError::NonTransitive {
            k,
            reason: "augmented alphabet is not irreducible".into(),
        });
    }
    Ok(trunc)
}

/// Symbols `<= prefix` in the class of 0, plus connecting symbols.
fn connected_prefix(
    model: &ShiftModel,
    prefix: Symbol,
    k: usize,
) -> Result<Vec<Symbol>, ShiftError> {
    let bound = prefix.max(model.explicit_max().unwrap_or(0)) + 1;
    let adj = model.induced_adjacency(bound);
    let comps = graph::tarjan_scc(&adj);
    let class = comps
        .into_iter()
        .find(|c| c.binary_search(&0).is_ok())
        .expect("every vertex lies in some component");
    if !graph::has_cycle(&adj, &class) {
        return Err(ShiftError::NonTransitive {
            k,
            reason: "symbol 0 lies on no cycle of the explicit edge list".into(),
        });
    }
    let in_class: Vec<bool> = (0..=bound).map(|v| class.binary_search(&v).is_ok()).collect();
    let sub: Vec<Vec<usize>> = adj
        .iter()
        .enumerate()
        .map(|(v, s)| {
            if in_class[v] {
                s.iter().copied().filter(|&w| in_class[w]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let (_, fwd_parent) = graph::bfs_tree(&sub, 0);
    let rev = graph::reverse(&sub);
    let (rev_dist, rev_parent) = graph::bfs_tree(&rev, 0);

    let mut chosen = BTreeSet::new();
    chosen.insert(0);
    let walk = |mut v: usize, parent: &[Option<usize>], out: &mut BTreeSet<usize>| {
        out.insert(v);
        while let Some(p) = parent[v] {
            out.insert(p);
            v = p;
        }
    };
    for a in (0..=prefix).filter(|&a| in_class[a]) {
        walk(a, &fwd_parent, &mut chosen);
        walk(a, &rev_parent, &mut chosen);
    }
    if !sub[0].contains(&0) && chosen.len() == 1 {
        // close a shortest cycle through 0
        let s = sub[0]
            .iter()
            .copied()
            .min_by_key(|&s| (rev_dist[s], s))
            .expect("0 lies on a cycle");
        walk(s, &rev_parent, &mut chosen);
    }
    Ok(chosen.into_iter().collect())
}

/// Restriction of a square 0/1 matrix to the strongly connected class of
/// symbol 0.
pub fn largest_transitive_core(matrix: &[Vec<u8>]) -> Result<Truncation, ShiftError> {
    let n = matrix.len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != n {
            return Err(ShiftError::NotSquare {
                rows: n,
                row,
                cols: r.len(),
            });
        }
    }
    if n == 0 {
        return Err(ShiftError::NoCycleThroughZero);
    }
    let adj: Vec<Vec<usize>> = matrix
        .iter()
        .map(|r| (0..n).filter(|&j| r[j] != 0).collect())
        .collect();
    let class = graph::tarjan_scc(&adj)
        .into_iter()
        .find(|c| c.binary_search(&0).is_ok())
        .expect("0 is in some component");
    if !graph::has_cycle(&adj, &class) {
        return Err(ShiftError::NoCycleThroughZero);
    }
    Ok(Truncation::from_edges(0, class, |i, j| matrix[i][j] != 0))
}

/// All admissible words of length `n`, in lexicographic order of symbols.
pub fn admissible_words(trunc: &Truncation, n: usize) -> Result<Vec<Vec<Symbol>>, ShiftError> {
    if n == 0 {
        return Err(ShiftError::EmptyWord);
    }
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(n);
    fn extend(
        trunc: &Truncation,
        n: usize,
        word: &mut Vec<usize>,
        out: &mut Vec<Vec<Symbol>>,
    ) {
        if word.len() == n {
            out.push(word.iter().map(|&i| trunc.symbol(i)).collect());
            return;
        }
        let last = *word.last().expect("nonempty");
        for j in trunc.incidence.successors(last) {
            word.push(j);
            extend(trunc, n, word, out);
            word.pop();
        }
    }
    for i in 0..trunc.len() {
        word.push(i);
        extend(trunc, n, &mut word, &mut out);
        word.pop();
    }
    Ok(out)
}

/// Gcd of the cycle lengths; 1 exactly when the truncation is mixing.
pub fn period(trunc: &Truncation) -> usize {
    match trunc.incidence {
        Incidence::Full(_) | Incidence::Renewal(_) => 1,
        Incidence::Explicit(ref adj) => graph::period(adj),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> ShiftModel {
        ShiftModel::custom([(0, 1), (1, 0)], TailRule::None)
    }

    fn edges(t: &Truncation) -> Vec<(Symbol, Symbol)> {
        let mut e = Vec::new();
        for i in 0..t.len() {
            for j in t.incidence.successors(i) {
                e.push((t.symbol(i), t.symbol(j)));
            }
        }
        e
    }

    #[test]
    fn full_shift_k1() {
        let t = build_truncation(&ShiftModel::full(), 1).unwrap();
        assert_eq!(t.alphabet, vec![0, 1]);
        assert_eq!(t.incidence.to_matrix(), vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(t.period, 1);
    }

    #[test]
    fn renewal_k2() {
        let t = build_truncation(&ShiftModel::renewal(), 2).unwrap();
        assert_eq!(t.alphabet, vec![0, 1, 2]);
        assert_eq!(edges(&t), vec![(0, 0), (0, 1), (0, 2), (1, 0), (2, 1)]);
        assert_eq!(t.period, 1);
    }

    #[test]
    fn custom_two_cycle_k0_connects() {
        let t = build_truncation(&two_cycle(), 0).unwrap();
        assert_eq!(t.alphabet, vec![0, 1]);
        assert_eq!(t.period, 2);
        assert_eq!(period(&t), 2);
    }

    #[test]
    fn custom_two_cycle_exhausts() {
        let err = build_truncation(&two_cycle(), 1).unwrap_err();
        assert!(matches!(err, ShiftError::NonTransitive { .. }));
    }

    #[test]
    fn custom_one_way_edge_is_not_transitive() {
        let model = ShiftModel::custom([(0, 1)], TailRule::None);
        assert!(matches!(
            build_truncation(&model, 0),
            Err(ShiftError::NonTransitive { .. })
        ));
    }

    #[test]
    fn custom_with_full_tail_nests() {
        let model = ShiftModel::custom([(0, 1), (1, 0), (1, 2)], TailRule::FullTail);
        let mut prev: Option<Truncation> = None;
        for k in 0..6 {
            let t = build_truncation(&model, k).unwrap();
            assert!(t.is_irreducible());
            if let Some(p) = prev {
                assert!(p.alphabet.iter().all(|s| t.alphabet.contains(s)));
                assert!(p.alphabet.len() < t.alphabet.len());
            }
            prev = Some(t);
        }
    }

    #[test]
    fn custom_renewal_tail_matches_renewal_shift() {
        let model = ShiftModel::custom([(0, 0), (0, 1), (1, 0)], TailRule::RenewalTail);
        let t = build_truncation(&model, 3).unwrap();
        let r = build_truncation(&ShiftModel::renewal(), 3).unwrap();
        assert_eq!(t.alphabet, r.alphabet);
        assert_eq!(edges(&t), edges(&r));
    }

    #[test]
    fn core_examples() {
        assert_eq!(
            largest_transitive_core(&[vec![0, 1], vec![0, 0]]).unwrap_err(),
            ShiftError::NoCycleThroughZero
        );
        let core =
            largest_transitive_core(&[vec![0, 1, 0], vec![1, 0, 1], vec![0, 0, 0]]).unwrap();
        assert_eq!(core.alphabet, vec![0, 1]);
        let full = largest_transitive_core(&[vec![1; 3], vec![1; 3], vec![1; 3]]).unwrap();
        assert_eq!(full.alphabet, vec![0, 1, 2]);
        assert_eq!(full.incidence.edge_count(), 9);
    }

    #[test]
    fn words() {
        let full2 = build_truncation(&ShiftModel::full(), 1).unwrap();
        assert_eq!(
            admissible_words(&full2, 2).unwrap(),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        let ren = build_truncation(&ShiftModel::renewal(), 2).unwrap();
        assert_eq!(
            admissible_words(&ren, 2).unwrap(),
            vec![vec![0, 0], vec![0, 1], vec![0, 2], vec![1, 0], vec![2, 1]]
        );
        let cyc = build_truncation(&two_cycle(), 0).unwrap();
        assert_eq!(
            admissible_words(&cyc, 3).unwrap(),
            vec![vec![0, 1, 0], vec![1, 0, 1]]
        );
        assert_eq!(admissible_words(&full2, 1).unwrap(), vec![vec![0], vec![1]]);
        assert_eq!(admissible_words(&full2, 0), Err(ShiftError::EmptyWord));
    }

    /// Cycle lengths up to `max_len` by enumerating closed walks.
    fn brute_cycle_gcd(t: &Truncation, max_len: usize) -> usize {
        let mut g = 0;
        for len in 1..=max_len {
            let words = admissible_words(t, len).unwrap();
            if words
                .iter()
                .any(|w| t.incidence.contains(t.index_of(w[len - 1]).unwrap(), t.index_of(w[0]).unwrap()))
            {
                g = graph::gcd(g, len);
            }
        }
        g
    }

    #[test]
    fn renewal_period_matches_cycle_enumeration() {
        let t = build_truncation(&ShiftModel::renewal(), 2).unwrap();
        assert_eq!(brute_cycle_gcd(&t, 3), 1);
        let explicit = Truncation::from_edges(2, vec![0, 1, 2], |i, j| i == 0 || j + 1 == i);
        assert_eq!(period(&explicit), 1);
    }

    #[test]
    fn full_word_count() {
        for n in 1..=4 {
            let t = build_truncation(&ShiftModel::full(), 2).unwrap();
            assert_eq!(admissible_words(&t, n).unwrap().len(), 3usize.pow(n as u32));
        }
    }
}
