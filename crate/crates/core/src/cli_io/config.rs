//! Flat INI-style configuration with sections `[model]`, `[potential]`,
//! `[sweep]` and `[output]`.
//!
//! ```text
//! [model]
//! kind = custom
//! edge = 0 1
//! edge = 1 0
//! tail_rule = none
//!
//! [potential]
//! family = table
//! edge = 0 1 -1.0
//! edge = 1 0 -3.0
//! tail = none
//!
//! [sweep]
//! ks = [1..6]
//! ts = [2, 8]
//! words = 0, 0.1
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::potential::{Family, MarkovPotential, TailDescriptor};
use crate::shift_model::{ModelKind, ShiftModel, Symbol, TailRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    pub ks: Vec<usize>,
    pub ts: Vec<f64>,
    pub words: Vec<Vec<Symbol>>,
    pub tol: f64,
    /// Stabilization window for `k0` detection.
    pub window: usize,
    /// Truncation used for zero-temperature runs; detected when absent.
    pub k: Option<usize>,
    /// Largest number of words enumerated for partition entropies.
    pub budget: usize,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            ks: (1..=6).collect(),
            ts: vec![2.0],
            words: vec![vec![0]],
            tol: 1e-6,
            window: 3,
            k: None,
            budget: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputParams {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputParams {
    fn default() -> Self {
        Self {
            dir: None,
            formats: vec![Format::Csv],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub model: ShiftModel,
    pub potential: MarkovPotential,
    pub sweep: SweepParams,
    pub output: OutputParams,
    /// Non-fatal remarks produced while validating.
    pub warnings: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            model: ShiftModel::full(),
            potential: MarkovPotential::log_quadratic(),
            sweep: SweepParams::default(),
            output: OutputParams::default(),
            warnings: Vec::new(),
        }
    }
}

impl ModelConfig {
    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex(&Sha256::digest(emit_config(self).as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().replace('\u{2212}', "-").parse().ok()
}

fn parse_usize(s: &str) -> Option<usize> {
    s.trim().parse().ok()
}

fn strip_brackets(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .unwrap_or(s)
}

/// `[1, 3, 5]`, `1..6` (inclusive) or any comma-separated mix.
pub fn parse_index_list(s: &str) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    for item in strip_brackets(s).split(',') {
        let item = item.trim();
        if let Some((a, b)) = item.split_once("..") {
            let a = parse_usize(a)?;
            let b = parse_usize(b.trim_start_matches('='))?;
            if b < a {
                return None;
            }
            out.extend(a..=b);
        } else {
            out.push(parse_usize(item)?);
        }
    }
    Some(out)
}

pub fn parse_real_list(s: &str) -> Option<Vec<f64>> {
    strip_brackets(s).split(',').map(parse_f64).collect()
}

/// Words separated by commas, symbols inside a word by dots: `0, 0.1, 2.2.0`.
pub fn parse_words(s: &str) -> Option<Vec<Vec<Symbol>>> {
    strip_brackets(s)
        .split(',')
        .map(|w| w.trim().split('.').map(parse_usize).collect())
        .collect()
}

pub fn word_label(word: &[Symbol]) -> String {
    word.iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

fn parse_tail(s: &str) -> Option<Option<TailDescriptor>> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    match parts.as_slice() {
        ["default"] => Some(None),
        ["none"] => Some(Some(TailDescriptor::None)),
        ["geometric", c, r] => Some(Some(TailDescriptor::Geometric {
            c: parse_f64(c)?,
            r: parse_f64(r)?,
        })),
        ["polynomial", c, p] => Some(Some(TailDescriptor::Polynomial {
            c: parse_f64(c)?,
            p: parse_f64(p)?,
        })),
        _ => None,
    }
}

#[derive(Default)]
struct Raw {
    // (section, key) -> [(line, value)]
    entries: BTreeMap<(String, String), Vec<(usize, String)>>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("model", &["kind", "edge", "tail_rule", "schedule_offset"]),
    ("potential", &["family", "value", "edge", "tail", "explicit_range"]),
    ("sweep", &["ks", "ts", "words", "tol", "window", "k", "budget"]),
    ("output", &["dir", "formats"]),
];
const REPEATABLE: &[&str] = &["edge"];

impl Raw {
    fn one(&self, section: &str, key: &str) -> Option<(usize, &str)> {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .and_then(|v| v.first())
            .map(|(l, s)| (*l, s.as_str()))
    }

    fn all(&self, section: &str, key: &str) -> &[(usize, String)] {
        self.entries
            .get(&(section.to_string(), key.to_string()))
            .map_or(&[], |v| v.as_slice())
    }
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut raw = Raw::default();
    let mut section: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(parse_err(line_no, format!("unknown section [{name}]")));
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(parse_err(line_no, "expected `key = value`"));
        };
        let Some(sec) = section.as_deref() else {
            return Err(parse_err(line_no, "key outside of a section"));
        };
        let key = key.trim();
        let allowed = KEYS.iter().find(|(s, _)| *s == sec).map_or(&[][..], |(_, k)| *k);
        if !allowed.contains(&key) {
            return Err(parse_err(line_no, format!("unknown key `{key}` in [{sec}]")));
        }
        let slot = raw
            .entries
            .entry((sec.to_string(), key.to_string()))
            .or_default();
        if !slot.is_empty() && !REPEATABLE.contains(&key) {
            return Err(parse_err(line_no, format!("duplicate key `{key}`")));
        }
        slot.push((line_no, value.trim().to_string()));
    }
    Ok(raw)
}

fn parse_model(raw: &Raw) -> Result<ShiftModel, ConfigError> {
    let (line, kind) = raw.one("model", "kind").unwrap_or((0, "full"));
    let mut model = match kind {
        "full" => ShiftModel::full(),
        "renewal" => ShiftModel::renewal(),
        "custom" => {
            let mut edges = Vec::new();
            for (l, v) in raw.all("model", "edge") {
                let ij: Option<Vec<usize>> = v.split_whitespace().map(parse_usize).collect();
                match ij.as_deref() {
                    Some(&[i, j]) => edges.push((i, j)),
                    _ => return Err(parse_err(*l, "edge must be `i j`")),
                }
            }
            if edges.is_empty() {
                return Err(ConfigError::Validation("custom model without edges".into()));
            }
            let tail = match raw.one("model", "tail_rule") {
                None | Some((_, "none")) => TailRule::None,
                Some((_, "full")) => TailRule::FullTail,
                Some((_, "renewal")) => TailRule::RenewalTail,
                Some((l, other)) => return Err(parse_err(l, format!("unknown tail_rule `{other}`"))),
            };
            ShiftModel::custom(edges, tail)
        }
        other => return Err(parse_err(line, format!("unknown model kind `{other}`"))),
    };
    if model.kind != ModelKind::Custom {
        if let Some((l, _)) = raw.all("model", "edge").first() {
            return Err(parse_err(*l, "edges are only allowed for kind = custom"));
        }
        if let Some((l, _)) = raw.one("model", "tail_rule") {
            return Err(parse_err(l, "tail_rule is only allowed for kind = custom"));
        }
    }
    if let Some((l, v)) = raw.one("model", "schedule_offset") {
        let off = parse_usize(v).ok_or_else(|| parse_err(l, "schedule_offset must be an integer"))?;
        model = model.with_schedule_offset(off);
    }
    Ok(model)
}

fn parse_potential(raw: &Raw, model: &ShiftModel, warnings: &mut Vec<String>) -> Result<MarkovPotential, ConfigError> {
    let (line, family) = raw.one("potential", "family").unwrap_or((0, "log_quadratic"));
    let value = raw.one("potential", "value");
    let family = match family {
        "log_quadratic" => Family::LogQuadratic,
        "tie_two_loops" => Family::TieTwoLoops,
        "renewal_weighted" => Family::RenewalWeighted,
        "constant" => {
            let (l, v) = value.ok_or_else(|| ConfigError::Validation("family = constant needs `value`".into()))?;
            Family::Constant(parse_f64(v).ok_or_else(|| parse_err(l, "value must be a real"))?)
        }
        "table" => {
            let mut table = BTreeMap::new();
            for (l, v) in raw.all("potential", "edge") {
                let parts: Vec<&str> = v.split_whitespace().collect();
                let parsed = match parts.as_slice() {
                    [i, j, x] => parse_usize(i).zip(parse_usize(j)).zip(parse_f64(x)),
                    _ => None,
                };
                let ((i, j), x) = parsed.ok_or_else(|| parse_err(*l, "edge must be `i j value`"))?;
                if !model.has_edge(i, j) {
                    return Err(ConfigError::Validation(format!("potential edge ({i}, {j}) is not admissible")));
                }
                table.insert((i, j), x);
            }
            if table.is_empty() {
                return Err(ConfigError::Validation("family = table without edges".into()));
            }
            Family::Table(table)
        }
        other => return Err(parse_err(line, format!("unknown family `{other}`"))),
    };
    if !matches!(family, Family::Constant(_)) {
        if let Some((l, _)) = value {
            return Err(parse_err(l, "value is only allowed for family = constant"));
        }
    }
    if !matches!(family, Family::Table(_)) {
        if let Some((l, _)) = raw.all("potential", "edge").first() {
            return Err(parse_err(*l, "edges are only allowed for family = table"));
        }
    }
    let mut f = MarkovPotential::with_default_tail(family);
    if let Some((l, v)) = raw.one("potential", "tail") {
        match parse_tail(v) {
            Some(Some(tail)) => f = f.with_tail(tail),
            Some(None) => {}
            None => return Err(parse_err(l, "tail must be none, default, `geometric c r` or `polynomial c p`")),
        }
    }
    if let Some((l, v)) = raw.one("potential", "explicit_range") {
        let r = parse_usize(v).filter(|&r| r > 0).ok_or_else(|| parse_err(l, "explicit_range must be a positive integer"))?;
        f = f.with_explicit_range(r);
    }
    if f.tail == TailDescriptor::None && model.is_infinite() {
        warnings.push("no tail descriptor: results are per-truncation only".into());
    }
    Ok(f)
}

fn parse_sweep(raw: &Raw) -> Result<SweepParams, ConfigError> {
    let mut s = SweepParams::default();
    if let Some((l, v)) = raw.one("sweep", "ks") {
        s.ks = parse_index_list(v).ok_or_else(|| parse_err(l, "ks must be a list of integers"))?;
    }
    if let Some((l, v)) = raw.one("sweep", "ts") {
        s.ts = parse_real_list(v).ok_or_else(|| parse_err(l, "ts must be a list of reals"))?;
    }
    if let Some((l, v)) = raw.one("sweep", "words") {
        s.words = parse_words(v).ok_or_else(|| parse_err(l, "words must look like `0, 0.1, 2.2.0`"))?;
    }
    if let Some((l, v)) = raw.one("sweep", "tol") {
        s.tol = parse_f64(v).ok_or_else(|| parse_err(l, "tol must be a real"))?;
    }
    if let Some((l, v)) = raw.one("sweep", "window") {
        s.window = parse_usize(v).ok_or_else(|| parse_err(l, "window must be an integer"))?;
    }
    if let Some((l, v)) = raw.one("sweep", "k") {
        s.k = Some(parse_usize(v).ok_or_else(|| parse_err(l, "k must be an integer"))?);
    }
    if let Some((l, v)) = raw.one("sweep", "budget") {
        s.budget = parse_usize(v).ok_or_else(|| parse_err(l, "budget must be an integer"))?;
    }
    validate_sweep(&s)?;
    Ok(s)
}

pub fn validate_sweep(s: &SweepParams) -> Result<(), ConfigError> {
    let bad = |m: &str| Err(ConfigError::Validation(m.into()));
    if s.ks.is_empty() {
        return bad("ks is empty");
    }
    if s.ts.is_empty() {
        return bad("ts is empty");
    }
    if s.ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return bad("every t must be a positive real");
    }
    if s.words.iter().any(|w| w.is_empty()) {
        return bad("empty word");
    }
    if !(s.tol.is_finite() && s.tol > 0.0) {
        return bad("tol must be positive");
    }
    if s.window == 0 {
        return bad("window must be at least 1");
    }
    Ok(())
}

fn parse_output(raw: &Raw) -> Result<OutputParams, ConfigError> {
    let mut o = OutputParams::default();
    if let Some((_, v)) = raw.one("output", "dir") {
        o.dir = Some(PathBuf::from(v));
    }
    if let Some((l, v)) = raw.one("output", "formats") {
        o.formats = strip_brackets(v)
            .split(',')
            .map(|f| Format::parse(f.trim()))
            .collect::<Option<Vec<_>>>()
            .filter(|f| !f.is_empty())
            .ok_or_else(|| parse_err(l, "formats must list csv and/or json"))?;
    }
    Ok(o)
}

/// Parse and validate; missing keys take their defaults.
pub fn parse_model_config(text: &str) -> Result<ModelConfig, ConfigError> {
    let raw = tokenize(text)?;
    let mut warnings = Vec::new();
    let model = parse_model(&raw)?;
    let potential = parse_potential(&raw, &model, &mut warnings)?;
    let sweep = parse_sweep(&raw)?;
    let output = parse_output(&raw)?;
    Ok(ModelConfig {
        model,
        potential,
        sweep,
        output,
        warnings,
    })
}

fn real(x: f64) -> String {
    format!("{x:?}")
}

/// Canonical text: every key present, fixed order, round-trip reals.
pub fn emit_config(c: &ModelConfig) -> String {
    let mut s = String::new();
    let m = &c.model;
    s.push_str("[model]\n");
    let kind = match m.kind {
        ModelKind::FullShift => "full",
        ModelKind::RenewalShift => "renewal",
        ModelKind::Custom => "custom",
    };
    let _ = writeln!(s, "kind = {kind}");
    if m.kind == ModelKind::Custom {
        for (i, j) in &m.custom_edges {
            let _ = writeln!(s, "edge = {i} {j}");
        }
        let rule = match m.custom_tail_rule {
            TailRule::None => "none",
            TailRule::FullTail => "full",
            TailRule::RenewalTail => "renewal",
        };
        let _ = writeln!(s, "tail_rule = {rule}");
    }
    let _ = writeln!(s, "schedule_offset = {}", m.schedule_offset);

    let f = &c.potential;
    s.push_str("\n[potential]\n");
    match &f.family {
        Family::LogQuadratic => s.push_str("family = log_quadratic\n"),
        Family::TieTwoLoops => s.push_str("family = tie_two_loops\n"),
        Family::RenewalWeighted => s.push_str("family = renewal_weighted\n"),
        Family::Constant(v) => {
            let _ = writeln!(s, "family = constant\nvalue = {}", real(*v));
        }
        Family::Table(t) => {
            s.push_str("family = table\n");
            for ((i, j), v) in t {
                let _ = writeln!(s, "edge = {i} {j} {}", real(*v));
            }
        }
    }
    let tail = match f.tail {
        TailDescriptor::None => "none".to_string(),
        TailDescriptor::Geometric { c, r } => format!("geometric {} {}", real(c), real(r)),
        TailDescriptor::Polynomial { c, p } => format!("polynomial {} {}", real(c), real(p)),
    };
    let _ = writeln!(s, "tail = {tail}");
    let _ = writeln!(s, "explicit_range = {}", f.explicit_range);

    let w = &c.sweep;
    s.push_str("\n[sweep]\n");
    let ks: Vec<String> = w.ks.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(s, "ks = [{}]", ks.join(", "));
    let ts: Vec<String> = w.ts.iter().map(|t| real(*t)).collect();
    let _ = writeln!(s, "ts = [{}]", ts.join(", "));
    let words: Vec<String> = w.words.iter().map(|x| word_label(x)).collect();
    let _ = writeln!(s, "words = {}", words.join(", "));
    let _ = writeln!(s, "tol = {}", real(w.tol));
    let _ = writeln!(s, "window = {}", w.window);
    if let Some(k) = w.k {
        let _ = writeln!(s, "k = {k}");
    }
    let _ = writeln!(s, "budget = {}", w.budget);

    let o = &c.output;
    s.push_str("\n[output]\n");
    if let Some(d) = &o.dir {
        let _ = writeln!(s, "dir = {}", d.display());
    }
    let formats: Vec<&str> = o.formats.iter().map(|f| f.name()).collect();
    let _ = writeln!(s, "formats = {}", formats.join(", "));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_model_config("[model]\nkind = full\n[potential]\nfamily = log_quadratic\n[sweep]\nts = [2, 8]\nks = [1..6]\n").unwrap();
        assert_eq!(c.sweep.ks, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(c.sweep.ts, vec![2.0, 8.0]);
        assert_eq!(c.sweep.words, vec![vec![0]]);
        assert_eq!(c.potential, MarkovPotential::log_quadratic());
        assert!(c.warnings.is_empty());
        let text = emit_config(&c);
        let again = parse_model_config(&text).unwrap();
        assert_eq!(again, c);
        assert_eq!(emit_config(&again), text);
    }

    #[test]
    fn custom_edges_and_tables() {
        let text = "[model]\nkind = custom\nedge = 0 1\ntail_rule = none\n[potential]\nfamily = table\nedge = 0 1 \u{2212}1.0\n";
        let c = parse_model_config(text).unwrap();
        assert_eq!(c.potential.eval(0, 1).unwrap(), -1.0);
        // a single edge with no way back is rejected once a truncation is built
        assert!(crate::shift_model::build_truncation(&c.model, 0).is_err());
        assert_eq!(c.warnings.len(), 0);

        let c = parse_model_config("[model]\nkind = renewal\n[potential]\nfamily = table\nedge = 1 0 0\nedge = 0 0 0\n").unwrap();
        assert_eq!(c.warnings.len(), 1);
        assert!(c.warnings[0].contains("per-truncation only"));
    }

    #[test]
    fn rejects_bad_input() {
        let e = parse_model_config("[model]\nkind = full\ncolour = red\n").unwrap_err();
        assert_eq!(e, ConfigError::Parse { line: 3, message: "unknown key `colour` in [model]".into() });
        assert!(matches!(parse_model_config("[extra]\n"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(parse_model_config("kind = full\n"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse_model_config("[sweep]\nts = [0]\n"), Err(ConfigError::Validation(_))));
        assert!(matches!(
            parse_model_config("[potential]\nfamily = constant\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_model_config("[model]\nkind = renewal\n[potential]\nfamily = table\nedge = 0 2 1\nedge = 2 0 1\n"),
            Err(ConfigError::Validation(_))
        ));
        assert!(matches!(
            parse_model_config("[sweep]\nks = 1\nks = 2\n"),
            Err(ConfigError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn lists_and_words() {
        assert_eq!(parse_index_list("[1..3, 7]").unwrap(), vec![1, 2, 3, 7]);
        assert_eq!(parse_index_list("2..=4").unwrap(), vec![2, 3, 4]);
        assert!(parse_index_list("5..2").is_none());
        assert_eq!(parse_words("0, 0.1, 2.2.0").unwrap(), vec![vec![0], vec![0, 1], vec![2, 2, 0]]);
        assert_eq!(parse_real_list("[2, 1e3, -0.5]").unwrap(), vec![2.0, 1000.0, -0.5]);
    }

    #[test]
    fn hash_depends_on_canonical_form_only() {
        let a = parse_model_config("[sweep]\nks = 1..6\n# comment\n").unwrap();
        let b = parse_model_config("[sweep]\nks = [1, 2, 3, 4, 5, 6]\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = parse_model_config("[sweep]\nks = 1..5\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
