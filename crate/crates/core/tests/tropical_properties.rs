mod common;

use common::*;
use mlbn_core::tropical::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn closure_matches_path_enumeration_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let dag = random_dag(&mut rng, 8, 0.4);
        let ks = dag.kleene_star();
        assert_eq!(ks.closure().to_f64_rows(), brute_force_closure(&dag));
        let sq = trop_matmul(ks.closure(), ks.closure()).unwrap();
        assert_eq!(&sq, ks.closure());
    }
}

#[test]
fn closure_dominates_base_and_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let dag = random_dag(&mut rng, 6, 0.5);
        let ks = dag.kleene_star();
        assert!(ks.closure().dominates(&dag.weight_matrix()));
        assert!(ks.closure().dominates(&TropicalMatrix::identity(6)));
    }
}

#[test]
fn classification_matches_alternative_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let dag = random_dag(&mut rng, 7, 0.5);
        for c in classify_edges(&dag) {
            let alt = all_paths(&dag, c.source, c.target)
                .into_iter()
                .filter(|p| p.len() > 2)
                .map(|p| path_weight(&dag, &p))
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(c.best_alternative.value(), alt);
            let expected = if c.weight > alt { EdgeClass::FacetDefining } else { EdgeClass::Masked };
            assert_eq!(c.class, expected, "{c:?}");
        }
    }
}

#[test]
fn facets_cover_every_reachable_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let dag = random_dag(&mut rng, 6, 0.5);
        let ks = dag.kleene_star();
        let facets = polytrope_facets(&ks);
        let bf = brute_force_closure(&dag);
        for i in 0..6 {
            for j in 0..6 {
                let f = facets.get(i, j);
                if i == j || bf[i][j] == f64::NEG_INFINITY {
                    assert!(f.is_none());
                } else {
                    assert_eq!(f.unwrap().bound, bf[i][j]);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn raising_a_weight_never_lowers_the_closure(seed in 0u64..10_000, bump in 0.0f64..3.0, pick in 0usize..64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dag = random_dag(&mut rng, 6, 0.5);
        prop_assume!(!dag.edges().is_empty());
        let e = dag.edges()[pick % dag.edges().len()];
        let raised = dag.with_weight(e.source, e.target, e.weight + bump).unwrap();
        let before = dag.kleene_star();
        let after = raised.kleene_star();
        prop_assert!(after.closure().dominates(before.closure()));
    }

    #[test]
    fn membership_ignores_common_translation(x in prop::collection::vec(-5.0f64..5.0, 4), shift in -100.0f64..100.0) {
        let dag = mlbn_core::presets::example_one([1.0, 0.5, -0.25, 2.0, 0.75]);
        let facets = polytrope_facets(&dag.kleene_star());
        let moved: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let a = membership(&x, &facets, 1e-9).unwrap();
        let b = membership(&moved, &facets, 1e-9).unwrap();
        // translation can only flip a point sitting within rounding of a facet
        let margin = facets.constraints.iter().map(|f| f.slack(&x).abs()).fold(f64::INFINITY, f64::min);
        prop_assert!(a == b || margin < 1e-9 + 1e-13 * shift.abs().max(1.0) * 10.0);
    }
}
