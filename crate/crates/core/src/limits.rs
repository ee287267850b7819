//! Sweeps over the truncation index `k` and the inverse temperature `t`.
//!
//! Infinite-alphabet quantities are represented by their values at the
//! largest `k` together with the last Cauchy gap, and are only reported
//! when the potential carries a summability certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ergodic_opt::{self, ErgodicError};
use crate::par::{self, Execution};
use crate::potential::{
    check_summability, cylinder_sup, variation, MarkovPotential, PotentialError, Scope,
    SummabilityCertificate,
};
use crate::rpf_finite::{
    self, cylinder_mass, entropy, integral, partition_entropy, MarkovMeasure, PerronOptions,
    RpfError,
};
use crate::shift_model::{build_truncation, ShiftError, ShiftModel, Symbol, Truncation};

pub const CERTIFICATE_TOL: f64 = 1e-6;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const CONVEXITY_TOL: f64 = 1e-9;
pub const DEFAULT_PARTITION_BUDGET: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum LimitsError {
    #[error("series diverges: {0}")]
    NotSummable(String),
    #[error("not converged: final gap {gap:e}")]
    NotConverged { gap: f64, table: Box<LimitTable> },
    #[error("at least {needed} points are required, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error(transparent)]
    Shift(#[from] ShiftError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Rpf(#[from] RpfError),
    #[error(transparent)]
    Ergodic(#[from] ErgodicError),
}

impl LimitsError {
    /// Whether the failure is numerical rather than a rejected input.
    pub fn is_convergence_failure(&self) -> bool {
        matches!(
            self,
            LimitsError::NotConverged { .. }
                | LimitsError::Rpf(RpfError::NoConvergence { .. })
                | LimitsError::Ergodic(ErgodicError::NotStabilized { .. })
        )
    }
}

/// Certificate for `sum_i exp(sup f|[i])`, or the reason there is none.
pub fn certify(f: &MarkovPotential) -> Result<SummabilityCertificate, LimitsError> {
    match check_summability(f, CERTIFICATE_TOL) {
        Ok(c) if c.converges => Ok(c),
        Ok(c) => Err(LimitsError::NotSummable(format!(
            "tail bound is {} after {} explicit terms",
            c.tail_bound, c.explicit_terms
        ))),
        Err(PotentialError::NoTailDescriptor) => Err(LimitsError::NotSummable(
            "no tail descriptor; per-truncation only".into(),
        )),
        Err(e) => Err(e.into()),
    }
}

/// Thermodynamic data of one equilibrium state `μ_{t f_k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointValues {
    pub pressure: f64,
    pub entropy: f64,
    /// `μ(f)`.
    pub integral: f64,
    /// `μ[ω]` for each configured word.
    pub masses: Vec<f64>,
    /// `|h + t μ(f) - P|`.
    pub vp_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub k: usize,
    pub t: f64,
    pub values: Option<PointValues>,
    pub error: Option<String>,
}

/// Equilibrium state of `t f` on `trunc` and its summary values.
pub fn evaluate(
    trunc: &Truncation,
    f: &MarkovPotential,
    t: f64,
    words: &[Vec<Symbol>],
    exec: Execution,
) -> Result<(PointValues, MarkovMeasure), RpfError> {
    let opts = PerronOptions {
        exec,
        ..PerronOptions::default()
    };
    let eq = rpf_finite::solve_with(trunc, f, t, &opts)?;
    let p = eq.pressure();
    let h = entropy(&eq.measure);
    let mf = integral(&eq.measure, f)?;
    let masses = words.iter().map(|w| cylinder_mass(&eq.measure, w)).collect();
    Ok((
        PointValues {
            pressure: p,
            entropy: h,
            integral: mf,
            masses,
            vp_residual: (h + t * mf - p).abs(),
            iterations: eq.perron.iterations,
        },
        eq.measure,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub k: usize,
    pub t: f64,
    pub magnitude: f64,
}

/// `P(t)` represented by `P_{k_max}(t)` and the gap to the previous `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureEstimate {
    pub t: f64,
    pub k: usize,
    pub value: f64,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// Maximal-mean cycle of `Σ_0`.
    pub witness: Vec<Symbol>,
    /// Integral of `f` along the witness orbit.
    pub s_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub ks: Vec<usize>,
    pub ts: Vec<f64>,
    pub words: Vec<Vec<Symbol>>,
    /// Row-major over `(k, t)`.
    pub grid: Vec<GridPoint>,
    pub certificate: Option<SummabilityCertificate>,
    pub certificate_note: Option<String>,
    pub reference: Option<Reference>,
    /// Present only for certified potentials.
    pub estimates: Vec<PressureEstimate>,
    pub violations: Vec<Violation>,
}

impl SweepResult {
    pub fn point(&self, k: usize, t: f64) -> Option<&GridPoint> {
        self.grid.iter().find(|p| p.k == k && p.t == t)
    }

    pub fn is_monotone(&self) -> bool {
        !self.violations.iter().any(|v| v.kind == "monotone_k")
    }

    /// `P_k(t)` for every `k` at fixed `t` (`None` where the solver failed).
    pub fn pressures_at(&self, t: f64) -> Vec<Option<f64>> {
        self.ks
            .iter()
            .map(|&k| {
                self.point(k, t)
                    .and_then(|p| p.values.as_ref())
                    .map(|v| v.pressure)
            })
            .collect()
    }
}

fn reference(model: &ShiftModel, f: &MarkovPotential) -> Option<Reference> {
    let trunc = build_truncation(model, 0).ok()?;
    let mmc = ergodic_opt::max_mean_cycle(&trunc, f).ok()?;
    Some(Reference {
        witness: mmc.witness,
        s_inf: mmc.beta,
    })
}

pub fn pressure_sweep(
    model: &ShiftModel,
    f: &MarkovPotential,
    ks: &[usize],
    ts: &[f64],
    words: &[Vec<Symbol>],
) -> Result<SweepResult, LimitsError> {
    pressure_sweep_with(model, f, ks, ts, words, Execution::default())
}

/// `P_k(t)`, `h`, `μ(f)` and word masses on the grid `ks x ts`. Solver
/// failures are recorded per point and the sweep continues.
pub fn pressure_sweep_with(
    model: &ShiftModel,
    f: &MarkovPotential,
    ks: &[usize],
    ts: &[f64],
    words: &[Vec<Symbol>],
    exec: Execution,
) -> Result<SweepResult, LimitsError> {
    if let Some(&t) = ts.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(PotentialError::InvalidT(t).into());
    }
    let truncs = ks
        .iter()
        .map(|&k| build_truncation(model, k))
        .collect::<Result<Vec<_>, _>>()?;
    let tasks: Vec<(usize, f64)> = (0..ks.len())
        .flat_map(|a| ts.iter().map(move |&t| (a, t)))
        .collect();
    // large truncations parallelize inside the solver instead
    let inner = if tasks.len() > 1 {
        Execution::Sequential
    } else {
        exec
    };
    let grid = par::map_slice(exec, &tasks, |&(a, t)| {
        match evaluate(&truncs[a], f, t, words, inner) {
            Ok((values, _)) => GridPoint {
                k: ks[a],
                t,
                values: Some(values),
                error: None,
            },
            Err(e) => GridPoint {
                k: ks[a],
                t,
                values: None,
                error: Some(e.to_string()),
            },
        }
    });

    let (certificate, certificate_note) = match certify(f) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let mut result = SweepResult {
        ks: ks.to_vec(),
        ts: ts.to_vec(),
        words: words.to_vec(),
        grid,
        certificate,
        certificate_note,
        reference: reference(model, f),
        estimates: Vec::new(),
        violations: Vec::new(),
    };
    result.violations = sweep_violations(&result);
    if result.certificate.is_some() {
        result.estimates = ts
            .iter()
            .filter_map(|&t| {
                let ps = result.pressures_at(t);
                let last = ps.len().checked_sub(1)?;
                let value = ps[last]?;
                let gap = last
                    .checked_sub(1)
                    .and_then(|p| ps[p])
                    .map(|prev| (value - prev).abs());
                Some(PressureEstimate {
                    t,
                    k: ks[last],
                    value,
                    gap,
                })
            })
            .collect();
    }
    Ok(result)
}

fn sweep_violations(r: &SweepResult) -> Vec<Violation> {
    let mut out = Vec::new();
    for &t in &r.ts {
        let ps = r.pressures_at(t);
        for a in 1..ps.len() {
            if let (Some(lo), Some(hi)) = (ps[a - 1], ps[a]) {
                if hi < lo - MONOTONE_TOL {
                    out.push(Violation {
                        kind: "monotone_k".into(),
                        k: r.ks[a],
                        t,
                        magnitude: lo - hi,
                    });
                }
            }
        }
    }
    for &k in &r.ks {
        let pts: Vec<(f64, f64)> = r
            .ts
            .iter()
            .filter_map(|&t| {
                r.point(k, t)
                    .and_then(|p| p.values.as_ref())
                    .map(|v| (t, v.pressure))
            })
            .collect();
        for w in pts.windows(3) {
            let [(t1, p1), (t2, p2), (t3, p3)] = [w[0], w[1], w[2]];
            let chord = ((t3 - t2) * p1 + (t2 - t1) * p3) / (t3 - t1);
            if p2 > chord + CONVEXITY_TOL {
                out.push(Violation {
                    kind: "convex_t".into(),
                    k,
                    t: t2,
                    magnitude: p2 - chord,
                });
            }
        }
    }
    for p in &r.grid {
        let Some(v) = &p.values else { continue };
        for &m in &v.masses {
            if !(-1e-12..=1.0 + 1e-12).contains(&m) {
                out.push(Violation {
                    kind: "probability".into(),
                    k: p.k,
                    t: p.t,
                    magnitude: m,
                });
            }
        }
        if v.entropy < -1e-12 {
            out.push(Violation {
                kind: "entropy_sign".into(),
                k: p.k,
                t: p.t,
                magnitude: v.entropy,
            });
        }
    }
    out
}

/// Trajectories `k -> μ_{t f_k}[ω]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTable {
    pub t: f64,
    pub ks: Vec<usize>,
    pub words: Vec<Vec<Symbol>>,
    /// One trajectory per word, aligned with `ks`.
    pub trajectories: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    /// Last gap `|μ_{k_n}[ω] - μ_{k_{n-1}}[ω]|` per word.
    pub gaps: Vec<f64>,
    pub converged: bool,
    pub certified: bool,
}

fn last_two_gaps(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    ((xs[n - 1] - xs[n - 2]).abs(), (xs[n - 2] - xs[n - 3]).abs())
}

/// Converged when the last two `k`-gaps of every word are below `tol`.
pub fn equilibrium_limit_in_k(
    model: &ShiftModel,
    f: &MarkovPotential,
    t: f64,
    ks: &[usize],
    words: &[Vec<Symbol>],
    tol: f64,
) -> Result<LimitTable, LimitsError> {
    if ks.len() < 3 {
        return Err(LimitsError::TooFewPoints {
            needed: 3,
            got: ks.len(),
        });
    }
    let sweep = pressure_sweep(model, f, ks, &[t], words)?;
    let mut trajectories = vec![Vec::with_capacity(ks.len()); words.len()];
    for p in &sweep.grid {
        let v = match (&p.values, &p.error) {
            (Some(v), _) => v,
            (None, e) => {
                return Err(RpfError::InvalidTransition(e.clone().unwrap_or_default()).into())
            }
        };
        for (w, &m) in v.masses.iter().enumerate() {
            trajectories[w].push(m);
        }
    }
    let mut worst: f64 = 0.0;
    let mut gaps = Vec::with_capacity(words.len());
    for tr in &trajectories {
        let (g1, g2) = last_two_gaps(tr);
        worst = worst.max(g1).max(g2);
        gaps.push(g1);
    }
    let certified = sweep.certificate.is_some();
    let table = LimitTable {
        t,
        ks: ks.to_vec(),
        words: words.to_vec(),
        limits: trajectories.iter().map(|tr| tr[tr.len() - 1]).collect(),
        trajectories,
        gaps,
        converged: certified && worst < tol,
        certified,
    };
    if table.converged {
        Ok(table)
    } else {
        Err(LimitsError::NotConverged {
            gap: worst,
            table: Box::new(table),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub t: f64,
    pub ks: Vec<usize>,
    /// `μ_{t f_k}(t f)`.
    pub integrals: Vec<f64>,
    pub gaps: Vec<f64>,
    pub limit: f64,
    pub pressure_estimate: f64,
    pub entropy_estimate: f64,
    /// `|limit - (P - h)|`.
    pub identity_residual: f64,
}

/// `k -> μ_{t f_k}(t f)` is Cauchy and its limit matches `P(t) - h`.
pub fn integral_convergence_check(
    model: &ShiftModel,
    f: &MarkovPotential,
    t: f64,
    ks: &[usize],
    tol: f64,
) -> Result<IntegralReport, LimitsError> {
    certify(f)?;
    if ks.len() < 3 {
        return Err(LimitsError::TooFewPoints {
            needed: 3,
            got: ks.len(),
        });
    }
    let sweep = pressure_sweep(model, f, ks, &[t], &[])?;
    let vals = sweep
        .grid
        .iter()
        .map(|p| {
            p.values
                .clone()
                .ok_or_else(|| RpfError::InvalidTransition(p.error.clone().unwrap_or_default()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let integrals: Vec<f64> = vals.iter().map(|v| t * v.integral).collect();
    let gaps: Vec<f64> = integrals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let (g1, g2) = last_two_gaps(&integrals);
    let last = vals.last().expect("nonempty");
    let limit = *integrals.last().expect("nonempty");
    let report = IntegralReport {
        t,
        ks: ks.to_vec(),
        limit,
        pressure_estimate: last.pressure,
        entropy_estimate: last.entropy,
        identity_residual: (limit - (last.pressure - last.entropy)).abs(),
        integrals,
        gaps,
    };
    if g1.max(g2) >= tol {
        let gap = g1.max(g2);
        return Err(LimitsError::NotConverged {
            gap,
            table: Box::new(LimitTable {
                t,
                ks: report.ks.clone(),
                words: Vec::new(),
                trajectories: vec![report.integrals.clone()],
                limits: vec![report.limit],
                gaps: vec![g1],
                converged: false,
                certified: true,
            }),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessRow {
    pub k: usize,
    pub v1: f64,
    /// First symbol from which `4 V_1 + sup f|[i] - S <= 0` holds for all
    /// larger symbols of `Σ_k`; `None` when no symbol qualifies.
    pub threshold: Option<Symbol>,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TightnessReport {
    pub t: f64,
    pub reference: Reference,
    pub rows: Vec<TightnessRow>,
}

impl TightnessReport {
    pub fn violation_count(&self) -> usize {
        self.rows.iter().map(|r| r.violations.len()).sum()
    }
}

/// `μ_{t f_k}[i] <= exp(4 V_1 + sup f|[i] - S)` beyond the threshold index,
/// with `S` the mean of `f` along the maximal-mean cycle of `Σ_0`.
pub fn tightness_bound_check(
    model: &ShiftModel,
    f: &MarkovPotential,
    t: f64,
    ks: &[usize],
) -> Result<TightnessReport, LimitsError> {
    let trunc0 = build_truncation(model, 0)?;
    let mmc = ergodic_opt::max_mean_cycle(&trunc0, f)?;
    let reference = Reference {
        witness: mmc.witness,
        s_inf: mmc.beta,
    };
    let s = reference.s_inf;
    let rows = par::map_slice(Execution::default(), ks, |&k| -> Result<TightnessRow, LimitsError> {
        let trunc = build_truncation(model, k)?;
        let v1 = variation(f, 1, Scope::Truncation(&trunc))?;
        let sups = trunc
            .alphabet
            .iter()
            .map(|&i| cylinder_sup(f, i, Scope::Truncation(&trunc)))
            .collect::<Result<Vec<_>, _>>()?;
        let exps: Vec<f64> = sups.iter().map(|sup| 4.0 * v1 + sup - s).collect();
        let start = exps.iter().rposition(|&e| e > 0.0).map_or(0, |p| p + 1);
        let (_, measure) = evaluate(&trunc, f, t, &[], Execution::Sequential)?;
        let mut violations = Vec::new();
        for a in start..trunc.len() {
            let mass = measure.stationary[a];
            let bound = exps[a].exp();
            if mass > bound * (1.0 + 1e-12) {
                violations.push(Violation {
                    kind: format!("tightness[{}]", trunc.symbol(a)),
                    k,
                    t,
                    magnitude: mass - bound,
                });
            }
        }
        Ok(TightnessRow {
            k,
            v1,
            threshold: (start < trunc.len()).then(|| trunc.symbol(start)),
            checked: trunc.len() - start,
            violations,
        })
    });
    Ok(TightnessReport {
        t,
        reference,
        rows: rows.into_iter().collect::<Result<_, _>>()?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentWeight {
    pub alphabet: Vec<Symbol>,
    /// `γ̂_J`: total mass of the component's 1-cylinders at the largest `t`.
    pub gamma: f64,
    /// The same total at the second largest `t`.
    pub gamma_prev: f64,
    /// `ν_{k,J}`.
    pub measure: MarkovMeasure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuInftyEstimate {
    pub k: usize,
    pub beta: f64,
    pub t_max: f64,
    pub t_prev: f64,
    pub components: Vec<ComponentWeight>,
    pub gamma_sum: f64,
    /// Largest `|γ̂_J(t_max) - γ̂_J(t_prev)|`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroTempResult {
    pub k: usize,
    pub words: Vec<Vec<Symbol>>,
    pub points: Vec<GridPoint>,
    pub estimate: Option<MuInftyEstimate>,
}

/// Geometric grid `2, 4, ..., 1024`.
pub fn default_ts() -> Vec<f64> {
    (1..=10).map(|e| f64::from(1u32 << e)).collect()
}

pub fn zero_temp_sweep(
    model: &ShiftModel,
    f: &MarkovPotential,
    k: usize,
    ts: &[f64],
    words: &[Vec<Symbol>],
) -> Result<ZeroTempResult, LimitsError> {
    zero_temp_sweep_with(model, f, k, ts, words, Execution::default())
}

/// `t -> μ_{t f_k}` along `ts` and the component weights `γ̂_J` of the
/// zero-temperature limit, read off the two largest temperatures.
pub fn zero_temp_sweep_with(
    model: &ShiftModel,
    f: &MarkovPotential,
    k: usize,
    ts: &[f64],
    words: &[Vec<Symbol>],
    exec: Execution,
) -> Result<ZeroTempResult, LimitsError> {
    let trunc = build_truncation(model, k)?;
    let dec = ergodic_opt::decompose(&trunc, f)?;
    let results = par::map_slice(exec, ts, |&t| evaluate(&trunc, f, t, words, Execution::Sequential));
    let mut points = Vec::with_capacity(ts.len());
    let mut measures = Vec::with_capacity(ts.len());
    for (&t, r) in ts.iter().zip(results) {
        match r {
            Ok((values, m)) => {
                points.push(GridPoint {
                    k,
                    t,
                    values: Some(values),
                    error: None,
                });
                measures.push((t, m));
            }
            Err(e) => points.push(GridPoint {
                k,
                t,
                values: None,
                error: Some(e.to_string()),
            }),
        }
    }
    measures.sort_by(|a, b| a.0.total_cmp(&b.0));
    let estimate = (measures.len() >= 2).then(|| {
        let (t_max, last) = &measures[measures.len() - 1];
        let (t_prev, prev) = &measures[measures.len() - 2];
        let weight = |m: &MarkovMeasure, alphabet: &[Symbol]| -> f64 {
            alphabet.iter().map(|&s| m.mass(s)).sum()
        };
        let components: Vec<ComponentWeight> = dec
            .maximal_components
            .iter()
            .map(|&j| {
                let c = &dec.components[j];
                ComponentWeight {
                    alphabet: c.alphabet.clone(),
                    gamma: weight(last, &c.alphabet),
                    gamma_prev: weight(prev, &c.alphabet),
                    measure: c.measure.clone(),
                }
            })
            .collect();
        MuInftyEstimate {
            k,
            beta: dec.beta,
            t_max: *t_max,
            t_prev: *t_prev,
            gamma_sum: components.iter().map(|c| c.gamma).sum(),
            residual: components
                .iter()
                .map(|c| (c.gamma - c.gamma_prev).abs())
                .fold(0.0, f64::max),
            components,
        }
    });
    Ok(ZeroTempResult {
        k,
        words: words.to_vec(),
        points,
        estimate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyLimit {
    pub k: usize,
    /// `(t, h(μ_{t f_k}))`.
    pub trajectory: Vec<(f64, f64)>,
    pub h_infinity: f64,
    /// `|h(t_max) - h(t_prev)|`.
    pub gap: f64,
    pub sup_over_maximizing: f64,
    pub mixing: bool,
    pub warning: Option<String>,
}

/// `t -> h(μ_{t f_k})` compared with the entropy supremum over maximizing
/// measures. Non-mixing truncations produce a warning, not an error.
pub fn entropy_limit(
    model: &ShiftModel,
    f: &MarkovPotential,
    k: usize,
    ts: &[f64],
) -> Result<EntropyLimit, LimitsError> {
    if ts.len() < 2 {
        return Err(LimitsError::TooFewPoints {
            needed: 2,
            got: ts.len(),
        });
    }
    let trunc = build_truncation(model, k)?;
    let dec = ergodic_opt::decompose(&trunc, f)?;
    let mut ts = ts.to_vec();
    ts.sort_by(f64::total_cmp);
    let hs = par::map_slice(Execution::default(), &ts, |&t| {
        evaluate(&trunc, f, t, &[], Execution::Sequential).map(|(v, _)| v.entropy)
    });
    let trajectory = ts
        .iter()
        .zip(hs)
        .map(|(&t, h)| h.map(|h| (t, h)))
        .collect::<Result<Vec<_>, _>>()?;
    let n = trajectory.len();
    let mixing = trunc.is_mixing();
    Ok(EntropyLimit {
        k,
        h_infinity: trajectory[n - 1].1,
        gap: (trajectory[n - 1].1 - trajectory[n - 2].1).abs(),
        trajectory,
        sup_over_maximizing: ergodic_opt::max_entropy_over_maximizing(&dec),
        mixing,
        warning: (!mixing).then(|| {
            format!(
                "truncation has period {}; the entropy limit is not validated",
                trunc.period
            )
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub n: usize,
    /// `H(μ_{t f_k} | α^n) / n` per `k`; `None` beyond the word budget.
    pub values: Vec<Option<f64>>,
    pub gaps: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UscReport {
    pub t: f64,
    pub ks: Vec<usize>,
    pub entropies: Vec<f64>,
    pub h_final: f64,
    /// Largest `h_k - h_final` over the schedule.
    pub max_excess: f64,
    pub band_ok: bool,
    pub partition: Vec<PartitionRow>,
}

/// Finite-`k` form of upper semicontinuity of the entropy: `h_k` stays
/// below `h_final + tol`, and `H(·|α^n)/n` settles in `k` for `n <= 3`.
pub fn entropy_upper_semicontinuity_check(
    model: &ShiftModel,
    f: &MarkovPotential,
    t: f64,
    ks: &[usize],
    tol: f64,
    budget: usize,
) -> Result<UscReport, LimitsError> {
    if ks.is_empty() {
        return Err(LimitsError::TooFewPoints { needed: 1, got: 0 });
    }
    let measures = par::map_slice(Execution::default(), ks, |&k| -> Result<MarkovMeasure, LimitsError> {
        let trunc = build_truncation(model, k)?;
        Ok(evaluate(&trunc, f, t, &[], Execution::Sequential)?.1)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let entropies: Vec<f64> = measures.iter().map(entropy).collect();
    let h_final = *entropies.last().expect("nonempty");
    let max_excess = entropies
        .iter()
        .map(|h| h - h_final)
        .fold(f64::NEG_INFINITY, f64::max);
    let partition = (1..=3)
        .map(|n| {
            let values: Vec<Option<f64>> = measures
                .iter()
                .map(|m| partition_entropy(m, n, budget).ok().map(|h| h / n as f64))
                .collect();
            let gaps = values
                .windows(2)
                .map(|w| Some((w[1]? - w[0]?).abs()))
                .collect();
            PartitionRow { n, values, gaps }
        })
        .collect();
    Ok(UscReport {
        t,
        ks: ks.to_vec(),
        entropies,
        h_final,
        max_excess,
        band_ok: max_excess <= tol,
        partition,
    })
}
