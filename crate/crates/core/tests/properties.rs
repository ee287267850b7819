use std::collections::BTreeSet;

use gibbsline::cli_io::{emit_config, fmt_num, parse_model_config};
use gibbsline::ergodic_opt::{brute_force_max_mean, decompose, max_mean_cycle};
use gibbsline::limits::evaluate;
use gibbsline::par::Execution;
use gibbsline::potential::MarkovPotential;
use gibbsline::rpf_finite::{entropy, integral, pressure, random_measure, stochasticity_defect};
use gibbsline::shift_model::Truncation;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type EdgeTable = Vec<((usize, usize), f64)>;

/// An irreducible graph on `n` symbols (a Hamiltonian cycle plus extra
/// edges) with edge weights.
fn weighted_graph() -> impl Strategy<Value = (usize, EdgeTable)> {
    (1usize..=6).prop_flat_map(|n| {
        let extra = proptest::collection::vec((0..n, 0..n), 0..=2 * n);
        let weights = proptest::collection::vec(-4.0f64..4.0, n * n);
        (Just(n), extra, weights).prop_map(|(n, extra, w)| {
            let mut edges: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
            edges.extend(extra);
            let table = edges.into_iter().map(|(i, j)| ((i, j), w[i * n + j])).collect();
            (n, table)
        })
    })
}

fn setup(n: usize, table: &[((usize, usize), f64)]) -> (Truncation, MarkovPotential) {
    let edges: BTreeSet<(usize, usize)> = table.iter().map(|&(e, _)| e).collect();
    let trunc = Truncation::from_edges(0, (0..n).collect(), |a, b| edges.contains(&(a, b)));
    (trunc, MarkovPotential::table(table.iter().copied()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn karp_matches_enumeration((n, table) in weighted_graph()) {
        let (trunc, f) = setup(n, &table);
        let karp = max_mean_cycle(&trunc, &f).unwrap();
        let brute = brute_force_max_mean(&trunc, &f, n).unwrap();
        prop_assert!((karp.beta - brute).abs() <= 1e-12);
        let w = &karp.witness;
        let mean = (0..w.len()).map(|r| f.eval(w[r], w[(r + 1) % w.len()]).unwrap()).sum::<f64>() / w.len() as f64;
        prop_assert!((mean - karp.beta).abs() <= 1e-12);
    }

    #[test]
    fn subaction_inequality((n, table) in weighted_graph()) {
        let (trunc, f) = setup(n, &table);
        let dec = decompose(&trunc, &f).unwrap();
        for &((i, j), x) in &table {
            prop_assert!(x - dec.beta + dec.subaction[j] - dec.subaction[i] <= 1e-9);
        }
        for &(i, j) in &dec.tight_edges {
            let x = f.eval(i, j).unwrap();
            prop_assert!((x - dec.beta + dec.subaction[j] - dec.subaction[i]).abs() <= dec.tie_tol * 10.0);
        }
        prop_assert!(!dec.maximal_components.is_empty());
    }

    #[test]
    fn scale_covariance((n, table) in weighted_graph(), c in -3.0f64..3.0, t in 0.1f64..10.0) {
        let (trunc, f) = setup(n, &table);
        let shifted = MarkovPotential::table(table.iter().map(|&(e, x)| (e, x + c)));
        let a = pressure(&trunc, &f, t).unwrap();
        let b = pressure(&trunc, &shifted, t).unwrap();
        prop_assert!((b - a - t * c).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()) + 1e-11, "{a} {b}");
    }

    #[test]
    fn equilibrium_is_stochastic_and_variational((n, table) in weighted_graph(), t in 0.1f64..20.0, seed in any::<u64>()) {
        let (trunc, f) = setup(n, &table);
        let (v, m) = evaluate(&trunc, &f, t, &[], Execution::Sequential).unwrap();
        let (row, stat) = stochasticity_defect(&m);
        prop_assert!(row <= 1e-12 && stat <= 1e-12, "{row} {stat}");
        prop_assert!(v.vp_residual <= 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = random_measure(trunc.alphabet.clone(), &trunc.incidence.to_adjacency(), &mut rng).unwrap();
        prop_assert!(v.pressure - entropy(&r) - t * integral(&r, &f).unwrap() >= -1e-9);
    }

    #[test]
    fn pressure_convex_in_t((n, table) in weighted_graph(), a in 0.1f64..10.0, d in 0.05f64..2.0, w in 0.05f64..0.95) {
        let (trunc, f) = setup(n, &table);
        let p = |s| pressure(&trunc, &f, s).unwrap();
        let c = a + d;
        let b = w * a + (1.0 - w) * c;
        prop_assert!(w * p(a) + (1.0 - w) * p(c) - p(b) >= -1e-9);
    }

    #[test]
    fn fmt_num_reparses(x in proptest::num::f64::NORMAL) {
        let y: f64 = fmt_num(x).parse().unwrap();
        prop_assert!(((y - x) / x).abs() <= 5e-15);
    }

    #[test]
    fn config_canonical_form_is_idempotent(
        kind in prop_oneof![Just("full"), Just("renewal")],
        family in prop_oneof![Just("log_quadratic"), Just("tie_two_loops"), Just("renewal_weighted")],
        ks in proptest::collection::btree_set(0usize..40, 1..6),
        ts in proptest::collection::vec(0.01f64..500.0, 1..5),
        tol in 1e-12f64..1e-2,
    ) {
        let ks: Vec<String> = ks.iter().map(|k| k.to_string()).collect();
        let ts: Vec<String> = ts.iter().map(|t| format!("{t:?}")).collect();
        let text = format!(
            "[model]\nkind = {kind}\n[potential]\nfamily = {family}\n[sweep]\nks = [{}]\nts = [{}]\ntol = {tol:?}\n",
            ks.join(", "),
            ts.join(", ")
        );
        let c = parse_model_config(&text).unwrap();
        let once = emit_config(&c);
        let back = parse_model_config(&once).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(emit_config(&back), once);
        prop_assert_eq!(back.hash(), c.hash());
    }
}
