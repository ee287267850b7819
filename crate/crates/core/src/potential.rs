//! Markov potentials `f(x) = f(x_0, x_1)` with summability certificates.
//!
//! Values are in natural-log units. A potential carries an optional tail
//! descriptor, a closed-form majorant of `exp(sup f|[i])` that certifies the
//! infinite-alphabet series; without one, results are per-truncation only.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::shift_model::{ShiftModel, Symbol, Truncation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("edge ({0}, {1}) is outside the domain of the potential")]
    InadmissibleEdge(Symbol, Symbol),
    #[error("symbol {0} has no outgoing admissible edge")]
    DeadEndSymbol(Symbol),
    #[error("symbol {0} is not in the truncation alphabet")]
    SymbolNotInScope(Symbol),
    #[error("no tail descriptor: infinite-alphabet certificates unavailable")]
    NoTailDescriptor,
    #[error("inverse temperature must exceed 1, got {0}")]
    InvalidT(f64),
    #[error("potential is not normalized (sup f = {0} > 0)")]
    NotNormalized(f64),
    #[error("first variation is unbounded on the ambient shift")]
    UnboundedV1,
    #[error("variation index must be at least 1")]
    InvalidIndex,
}

/// Built-in potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// `f(i, j) = -log((i + 1)(i + 2))`, independent of `j`.
    LogQuadratic,
    /// `f(i, j) = 0` for `i, j` in `{0, 1}`, else `-(max(i, j) + 1)`.
    TieTwoLoops,
    /// `f(0, j) = -(j + 1)`, `f(i, i - 1) = -i`.
    RenewalWeighted,
    /// `f(i, j) = c` on every edge.
    Constant(f64),
    /// Explicit finite table of edge values.
    Table(BTreeMap<(Symbol, Symbol), f64>),
}

/// Majorant of `exp(sup f|[i])` beyond the explicit range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailDescriptor {
    None,
    /// `exp(sup f|[i]) <= c * r^i`.
    Geometric { c: f64, r: f64 },
    /// `exp(sup f|[i]) <= c * i^(-p)`.
    Polynomial { c: f64, p: f64 },
}

impl TailDescriptor {
    /// The majorant of `sup f|[i]` in log units.
    pub fn log_majorant(&self, i: Symbol) -> Option<f64> {
        match *self {
            TailDescriptor::None => None,
            TailDescriptor::Geometric { c, r } => Some(c.ln() + i as f64 * r.ln()),
            TailDescriptor::Polynomial { c, p } => {
                if i == 0 {
                    Some(f64::INFINITY)
                } else {
                    Some(c.ln() - p * (i as f64).ln())
                }
            }
        }
    }

    fn shifted(self, offset: f64) -> Self {
        let scale = offset.exp();
        match self {
            TailDescriptor::None => TailDescriptor::None,
            TailDescriptor::Geometric { c, r } => TailDescriptor::Geometric { c: c * scale, r },
            TailDescriptor::Polynomial { c, p } => TailDescriptor::Polynomial { c: c * scale, p },
        }
    }

    /// Upper bound on `sum_{i >= start} exp(sup f|[i])`.
    pub fn tail_sum(&self, start: Symbol) -> f64 {
        match *self {
            TailDescriptor::None => f64::INFINITY,
            TailDescriptor::Geometric { c, r } => {
                if r >= 1.0 {
                    f64::INFINITY
                } else {
                    c * r.powf(start as f64) / (1.0 - r)
                }
            }
            TailDescriptor::Polynomial { c, p } => {
                if p <= 1.0 || start < 2 {
                    f64::INFINITY
                } else {
                    let a = (start - 1) as f64;
                    c * a.powf(1.0 - p) / (p - 1.0)
                }
            }
        }
    }

    /// Upper bound on `sum_{i >= start} y_i exp(-y_i)` with
    /// `y_i = -t * log_majorant(i)`, or `None` when `y_i >= 1` fails
    /// somewhere on the tail (the caller must start later).
    pub fn weighted_tail_sum(&self, start: Symbol, t: f64) -> Option<f64> {
        match *self {
            TailDescriptor::None => Some(f64::INFINITY),
            TailDescriptor::Geometric { c, r } => {
                if r >= 1.0 {
                    return Some(f64::INFINITY);
                }
                // y_i = a + b i, increasing
                let a = -t * c.ln();
                let b = -t * r.ln();
                if a + b * (start as f64) < 1.0 {
                    return None;
                }
                let q = (-b).exp();
                let n = start as f64;
                let s0 = q.powf(n) / (1.0 - q);
                let s1 = q.powf(n) * (n * (1.0 - q) + q) / ((1.0 - q) * (1.0 - q));
                Some((-a).exp() * (a * s0 + b * s1))
            }
            TailDescriptor::Polynomial { c, p } => {
                let s = t * p;
                if s <= 1.0 {
                    return Some(f64::INFINITY);
                }
                if start < 2 {
                    return None;
                }
                let lo = (start - 1) as f64;
                // y(x) = t (p ln x - ln c) must be >= 1 from lo on
                if t * (p * lo.ln() - c.ln()) < 1.0 {
                    return None;
                }
                let base = lo.powf(1.0 - s);
                let i0 = base / (s - 1.0);
                let i1 = base * (lo.ln() / (s - 1.0) + 1.0 / ((s - 1.0) * (s - 1.0)));
                Some(t * c.powf(t) * (p * i1 - c.ln() * i0))
            }
        }
    }
}

/// Certificate for a series of nonnegative terms indexed by symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummabilityCertificate {
    pub converges: bool,
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub total_upper_bound: f64,
    /// Number of explicit terms in `partial_sum`.
    pub explicit_terms: usize,
}

impl SummabilityCertificate {
    fn new(partial_sum: f64, tail_bound: f64, explicit_terms: usize) -> Self {
        Self {
            converges: tail_bound.is_finite(),
            partial_sum,
            tail_bound,
            total_upper_bound: partial_sum + tail_bound,
            explicit_terms,
        }
    }
}

/// Where a supremum or variation is taken.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    Truncation(&'a Truncation),
    Ambient(&'a ShiftModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPotential {
    pub family: Family,
    pub tail: TailDescriptor,
    /// Added to every family value; `normalize` moves it.
    pub offset: f64,
    /// Number of symbols summed explicitly before the tail majorant takes over.
    pub explicit_range: usize,
    pub global_sup: f64,
}

const DEFAULT_EXPLICIT_RANGE: usize = 64;
const MAX_EXPLICIT_RANGE: usize = 1 << 24;

impl MarkovPotential {
    pub fn new(family: Family, tail: TailDescriptor) -> Self {
        let global_sup = family_sup(&family);
        Self {
            family,
            tail,
            offset: 0.0,
            explicit_range: DEFAULT_EXPLICIT_RANGE,
            global_sup,
        }
    }

    /// A family with its closed-form tail descriptor.
    pub fn with_default_tail(family: Family) -> Self {
        let tail = match &family {
            Family::LogQuadratic => TailDescriptor::Polynomial { c: 1.0, p: 2.0 },
            Family::TieTwoLoops => TailDescriptor::Geometric {
                c: std::f64::consts::E,
                r: (-1.0f64).exp(),
            },
            Family::RenewalWeighted => TailDescriptor::Geometric {
                c: 1.0,
                r: (-1.0f64).exp(),
            },
            Family::Constant(c) => TailDescriptor::Geometric { c: c.exp(), r: 1.0 },
            Family::Table(_) => TailDescriptor::None,
        };
        Self::new(family, tail)
    }

    pub fn log_quadratic() -> Self {
        Self::with_default_tail(Family::LogQuadratic)
    }

    pub fn tie_two_loops() -> Self {
        Self::with_default_tail(Family::TieTwoLoops)
    }

    pub fn renewal_weighted() -> Self {
        Self::with_default_tail(Family::RenewalWeighted)
    }

    pub fn constant(c: f64) -> Self {
        Self::with_default_tail(Family::Constant(c))
    }

    pub fn table(values: impl IntoIterator<Item = ((Symbol, Symbol), f64)>) -> Self {
        Self::with_default_tail(Family::Table(values.into_iter().collect()))
    }

    pub fn with_tail(mut self, tail: TailDescriptor) -> Self {
        self.tail = tail.shifted(self.offset);
        self
    }

    pub fn with_explicit_range(mut self, range: usize) -> Self {
        self.explicit_range = range.max(1);
        self
    }

    /// Whether `f(i, j)` does not depend on `j`.
    pub fn is_row_constant(&self) -> bool {
        matches!(self.family, Family::LogQuadratic | Family::Constant(_))
    }

    pub fn is_normalized(&self) -> bool {
        self.global_sup <= 1e-12
    }

    pub fn eval(&self, i: Symbol, j: Symbol) -> Result<f64, PotentialError> {
        let v = match &self.family {
            Family::LogQuadratic => log_quadratic(i),
            Family::TieTwoLoops => {
                if i <= 1 && j <= 1 {
                    0.0
                } else {
                    -((i.max(j) + 1) as f64)
                }
            }
            Family::RenewalWeighted => {
                if i == 0 {
                    -((j + 1) as f64)
                } else if j + 1 == i {
                    -(i as f64)
                } else {
                    return Err(PotentialError::InadmissibleEdge(i, j));
                }
            }
            Family::Constant(c) => *c,
            Family::Table(t) => *t
                .get(&(i, j))
                .ok_or(PotentialError::InadmissibleEdge(i, j))?,
        };
        Ok(v + self.offset)
    }

    /// `sup f|[i]` over all edges out of `i` in the family's own domain.
    /// This majorizes the cylinder supremum in any ambient model.
    pub fn row_sup(&self, i: Symbol) -> Option<f64> {
        let v = match &self.family {
            Family::LogQuadratic => log_quadratic(i),
            Family::TieTwoLoops => {
                if i <= 1 {
                    0.0
                } else {
                    -((i + 1) as f64)
                }
            }
            Family::RenewalWeighted => {
                if i == 0 {
                    -1.0
                } else {
                    -(i as f64)
                }
            }
            Family::Constant(c) => *c,
            Family::Table(t) => t
                .range((i, 0)..=(i, Symbol::MAX))
                .map(|(_, &v)| v)
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?,
        };
        Some(v + self.offset)
    }

    /// Largest symbol with an explicit table row, if this is a table.
    pub fn table_max_symbol(&self) -> Option<Symbol> {
        match &self.family {
            Family::Table(t) => t.keys().map(|&(i, j)| i.max(j)).max(),
            _ => None,
        }
    }
}

fn log_quadratic(i: Symbol) -> f64 {
    let a = (i + 1) as f64;
    -(a.ln() + (a + 1.0).ln())
}

fn family_sup(family: &Family) -> f64 {
    match family {
        Family::LogQuadratic => -(2.0f64).ln(),
        Family::TieTwoLoops => 0.0,
        Family::RenewalWeighted => -1.0,
        Family::Constant(c) => *c,
        Family::Table(t) => t.values().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// `f(i, j)`.
pub fn eval(f: &MarkovPotential, i: Symbol, j: Symbol) -> Result<f64, PotentialError> {
    f.eval(i, j)
}

/// `sup f|[i]`: the maximum of `f(i, j)` over admissible successors `j`.
///
/// On the ambient shift the built-in families are non-increasing in `j`
/// beyond `max(i, 1)`, so the supremum is attained among successors up to
/// `max(i, explicit symbols) + 2`; table rows are searched over their entries.
pub fn cylinder_sup(
    f: &MarkovPotential,
    i: Symbol,
    scope: Scope<'_>,
) -> Result<f64, PotentialError> {
    match scope {
        Scope::Truncation(trunc) => {
            let a = trunc
                .index_of(i)
                .ok_or(PotentialError::SymbolNotInScope(i))?;
            if f.is_row_constant() {
                return f.eval(i, i);
            }
            let mut best: Option<f64> = None;
            for b in trunc.incidence.successors(a) {
                let v = f.eval(i, trunc.symbol(b))?;
                best = Some(best.map_or(v, |x: f64| x.max(v)));
            }
            best.ok_or(PotentialError::DeadEndSymbol(i))
        }
        Scope::Ambient(model) => {
            let bound = i.max(model.explicit_max().unwrap_or(0)).max(1) + 2;
            let bound = match f.table_max_symbol() {
                Some(m) => bound.max(m),
                None => bound,
            };
            let mut best: Option<f64> = None;
            for j in model.successors_within(i, bound) {
                match f.eval(i, j) {
                    Ok(v) => best = Some(best.map_or(v, |x: f64| x.max(v))),
                    Err(e) if !matches!(f.family, Family::Table(_)) => return Err(e),
                    Err(_) => {}
                }
            }
            best.ok_or(PotentialError::DeadEndSymbol(i))
        }
    }
}

/// `f - sup f`, so that the result is nonpositive with supremum 0.
pub fn normalize(f: &MarkovPotential) -> MarkovPotential {
    let shift = -f.global_sup;
    MarkovPotential {
        family: f.family.clone(),
        tail: f.tail.shifted(shift),
        offset: f.offset + shift,
        explicit_range: f.explicit_range,
        global_sup: 0.0,
    }
}

/// Number of explicit terms available for the series (`None` = unlimited).
fn explicit_limit(f: &MarkovPotential) -> Option<usize> {
    f.table_max_symbol().map(|m| m + 1)
}

fn partial_sum(f: &MarkovPotential, from: usize, to: usize, term: impl Fn(f64) -> f64) -> f64 {
    (from..to)
        .filter_map(|i| f.row_sup(i))
        .map(term)
        .sum()
}

/// Certificate for `sum_i exp(sup f|[i]) < ∞`.
///
/// The explicit range doubles until the tail majorant is below `tol` times
/// the running total (families only; tables stop at their last row).
pub fn check_summability(
    f: &MarkovPotential,
    tol: f64,
) -> Result<SummabilityCertificate, PotentialError> {
    if f.tail == TailDescriptor::None {
        return Err(PotentialError::NoTailDescriptor);
    }
    let limit = explicit_limit(f);
    let mut n = limit.unwrap_or(f.explicit_range);
    let mut partial = partial_sum(f, 0, n, f64::exp);
    loop {
        let tail = f.tail.tail_sum(n);
        let done = !tail.is_finite()
            || tail <= tol * (partial + tail)
            || limit.is_some()
            || n >= MAX_EXPLICIT_RANGE;
        if done {
            return Ok(SummabilityCertificate::new(partial, tail, n));
        }
        partial += partial_sum(f, n, 2 * n, f64::exp);
        n *= 2;
    }
}

/// Certificate for `sum_i sup(-t f|[i]) exp(sup(t f|[i])) < ∞` (f normalized).
pub fn check_summability_t(
    f: &MarkovPotential,
    t: f64,
    tol: f64,
) -> Result<SummabilityCertificate, PotentialError> {
    if t <= 1.0 {
        return Err(PotentialError::InvalidT(t));
    }
    if !f.is_normalized() {
        return Err(PotentialError::NotNormalized(f.global_sup));
    }
    if f.tail == TailDescriptor::None {
        return Err(PotentialError::NoTailDescriptor);
    }
    let term = |s: f64| {
        let x = -t * s;
        if x == 0.0 {
            0.0
        } else {
            x * (-x).exp()
        }
    };
    let limit = explicit_limit(f);
    let mut n = limit.unwrap_or(f.explicit_range);
    let mut partial = partial_sum(f, 0, n, term);
    loop {
        let tail = f.tail.weighted_tail_sum(n, t);
        let done = match tail {
            Some(b) => !b.is_finite() || b <= tol * (partial + b) || limit.is_some(),
            None => limit.is_some(),
        } || n >= MAX_EXPLICIT_RANGE;
        if done {
            let bound = tail.unwrap_or(f64::INFINITY);
            return Ok(SummabilityCertificate::new(partial, bound, n));
        }
        partial += partial_sum(f, n, 2 * n, term);
        n *= 2;
    }
}

/// The `n`-th variation. Markov potentials have `V_n = 0` for `n >= 2`.
pub fn variation(f: &MarkovPotential, n: usize, scope: Scope<'_>) -> Result<f64, PotentialError> {
    if n == 0 {
        return Err(PotentialError::InvalidIndex);
    }
    if n >= 2 || f.is_row_constant() {
        return Ok(0.0);
    }
    match scope {
        Scope::Truncation(trunc) => {
            let mut v: f64 = 0.0;
            for a in 0..trunc.len() {
                let i = trunc.symbol(a);
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for b in trunc.incidence.successors(a) {
                    let x = f.eval(i, trunc.symbol(b))?;
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                if hi >= lo {
                    v = v.max(hi - lo);
                }
            }
            Ok(v)
        }
        Scope::Ambient(model) => {
            if model.has_infinite_row() {
                return Err(PotentialError::UnboundedV1);
            }
            let mut rows: BTreeMap<Symbol, (f64, f64)> = BTreeMap::new();
            for &(i, j) in &model.custom_edges {
                let x = f.eval(i, j)?;
                let e = rows.entry(i).or_insert((f64::INFINITY, f64::NEG_INFINITY));
                e.0 = e.0.min(x);
                e.1 = e.1.max(x);
            }
            Ok(rows.values().map(|(lo, hi)| hi - lo).fold(0.0, f64::max))
        }
    }
}
