//! Deterministic CSV and JSON output.

use serde::Serialize;

use super::config::{word_label, Format};
use crate::limits::{EntropyLimit, LimitTable, MuInftyEstimate, SweepResult, ZeroTempResult};

pub const CSV_HEADER: &str = "k,t,quantity,value,gap,flag";

/// `%.15g`: 15 significant digits, trailing zeros removed, exponent form
/// outside `[1e-5, 1e15)`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { "-" } else { "+" };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub k: Option<usize>,
    pub t: Option<f64>,
    pub quantity: String,
    pub value: Option<f64>,
    pub gap: Option<f64>,
    pub flag: String,
}

impl CsvRow {
    pub fn new(k: usize, t: f64, quantity: impl Into<String>, value: f64) -> Self {
        Self {
            k: Some(k),
            t: Some(t),
            quantity: quantity.into(),
            value: Some(value),
            gap: None,
            flag: "ok".into(),
        }
    }

    pub fn gap(mut self, gap: Option<f64>) -> Self {
        self.gap = gap;
        self
    }

    pub fn flag(mut self, flag: impl Into<String>) -> Self {
        self.flag = flag.into();
        self
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_csv(rows: &[CsvRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let cols = [
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.t.map(fmt_num).unwrap_or_default(),
            field(&r.quantity),
            r.value.map(fmt_num).unwrap_or_default(),
            r.gap.map(fmt_num).unwrap_or_default(),
            field(&r.flag),
        ];
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn mass_label(word: &[usize]) -> String {
    format!("mass[{}]", word_label(word))
}

/// One `pressure` row per grid point, then the certified `P(t)` rows. The
/// other point values are carried by the JSON form.
pub fn sweep_rows(r: &SweepResult) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for (a, &k) in r.ks.iter().enumerate() {
        for &t in &r.ts {
            let Some(p) = r.point(k, t) else { continue };
            let Some(v) = &p.values else {
                rows.push(CsvRow {
                    k: Some(k),
                    t: Some(t),
                    quantity: "pressure".into(),
                    value: None,
                    gap: None,
                    flag: format!("error: {}", p.error.clone().unwrap_or_default()),
                });
                continue;
            };
            let prev = a
                .checked_sub(1)
                .and_then(|b| r.point(r.ks[b], t))
                .and_then(|q| q.values.as_ref());
            let violated = r
                .violations
                .iter()
                .any(|x| x.kind == "monotone_k" && x.k == k && x.t == t);
            let flag = match (violated, r.certificate.is_some()) {
                (true, _) => "monotone_violation",
                (false, true) => "ok",
                (false, false) => "per_truncation",
            };
            rows.push(
                CsvRow::new(k, t, "pressure", v.pressure)
                    .gap(prev.map(|q| (v.pressure - q.pressure).abs()))
                    .flag(flag),
            );
        }
    }
    if r.ks.len() > 1 {
        for e in &r.estimates {
            rows.push(
                CsvRow::new(e.k, e.t, "pressure_limit", e.value)
                    .gap(e.gap)
                    .flag("certified"),
            );
        }
    }
    rows
}

pub fn limit_rows(table: &LimitTable) -> Vec<CsvRow> {
    let flag = match (table.converged, table.certified) {
        (true, _) => "converged",
        (false, true) => "not_converged",
        (false, false) => "per_truncation",
    };
    let mut rows = Vec::new();
    for (w, tr) in table.words.iter().zip(&table.trajectories) {
        for (a, (&k, &m)) in table.ks.iter().zip(tr).enumerate() {
            let gap = a.checked_sub(1).map(|b| (m - tr[b]).abs());
            rows.push(CsvRow::new(k, table.t, mass_label(w), m).gap(gap).flag("ok"));
        }
    }
    if let Some(&k) = table.ks.last() {
        for (w, (&lim, &gap)) in table.words.iter().zip(table.limits.iter().zip(&table.gaps)) {
            rows.push(
                CsvRow::new(k, table.t, format!("limit_{}", mass_label(w)), lim)
                    .gap(Some(gap))
                    .flag(flag),
            );
        }
    }
    rows
}

pub fn zero_temp_rows(z: &ZeroTempResult) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for p in &z.points {
        match &p.values {
            Some(v) => {
                rows.push(CsvRow::new(p.k, p.t, "pressure", v.pressure));
                rows.push(CsvRow::new(p.k, p.t, "entropy", v.entropy));
                for (w, &m) in z.words.iter().zip(&v.masses) {
                    rows.push(CsvRow::new(p.k, p.t, mass_label(w), m));
                }
            }
            None => rows.push(CsvRow {
                k: Some(p.k),
                t: Some(p.t),
                quantity: "pressure".into(),
                value: None,
                gap: None,
                flag: format!("error: {}", p.error.clone().unwrap_or_default()),
            }),
        }
    }
    rows
}

pub fn mu_infty_rows(m: &MuInftyEstimate) -> Vec<CsvRow> {
    m.components
        .iter()
        .map(|c| {
            CsvRow::new(m.k, m.t_max, format!("gamma[{}]", word_label(&c.alphabet)), c.gamma)
                .gap(Some((c.gamma - c.gamma_prev).abs()))
        })
        .collect()
}

pub fn entropy_rows(e: &EntropyLimit) -> Vec<CsvRow> {
    let flag = if e.mixing { "ok" } else { "non_mixing" };
    let mut rows: Vec<CsvRow> = e
        .trajectory
        .iter()
        .map(|&(t, h)| CsvRow::new(e.k, t, "entropy", h).flag(flag))
        .collect();
    if let Some(&(t, _)) = e.trajectory.last() {
        rows.push(CsvRow::new(e.k, t, "entropy_limit", e.h_infinity).gap(Some(e.gap)).flag(flag));
        rows.push(CsvRow::new(e.k, t, "sup_entropy_maximizing", e.sup_over_maximizing).flag(flag));
    }
    rows
}

/// Serialize in the requested format.
pub fn render<T: Serialize>(value: &T, rows: impl FnOnce(&T) -> Vec<CsvRow>, format: Format) -> serde_json::Result<String> {
    match format {
        Format::Csv => Ok(write_csv(&rows(value))),
        Format::Json => to_json(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limits::pressure_sweep;
    use crate::potential::MarkovPotential;
    use crate::shift_model::ShiftModel;

    #[test]
    fn fifteen_significant_digits() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(-0.25), "-0.25");
        assert_eq!(fmt_num(std::f64::consts::PI), "3.14159265358979");
        assert_eq!(fmt_num(-(0.75f64.ln())), "0.287682072451781");
        assert_eq!(fmt_num(1e-7), "1e-07");
        assert_eq!(fmt_num(1.5e20), "1.5e+20");
        assert_eq!(fmt_num(123456.0), "123456");
        assert_eq!(fmt_num(0.0001234), "0.0001234");
        assert_eq!(fmt_num(f64::NEG_INFINITY), "-inf");
        // 15 digits always re-parse to within one part in 1e15
        for x in [1.0 / 3.0, 2f64.ln(), -1.23833e-3, 9.99999999999999e14] {
            let y: f64 = fmt_num(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 1e-14);
        }
    }

    #[test]
    fn csv_shapes() {
        assert_eq!(write_csv(&[]), "k,t,quantity,value,gap,flag\n");
        let r = pressure_sweep(&ShiftModel::full(), &MarkovPotential::log_quadratic(), &[2], &[1.0], &[]).unwrap();
        let rows = sweep_rows(&r);
        assert_eq!(rows.len(), 1);
        assert_eq!(write_csv(&rows), "k,t,quantity,value,gap,flag\n2,1,pressure,-0.287682072451781,,ok\n");
        let row = CsvRow::new(1, 2.0, "a,b", 1.0).flag("x\"y");
        assert!(write_csv(&[row]).ends_with("1,2,\"a,b\",1,,\"x\"\"y\"\n"));
    }

    #[test]
    fn json_round_trip() {
        let r = pressure_sweep(&ShiftModel::full(), &MarkovPotential::tie_two_loops(), &[1, 2, 3], &[2.0, 5.0], &[vec![0], vec![1, 0]])
            .unwrap();
        let text = to_json(&r).unwrap();
        let back: SweepResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }
}
