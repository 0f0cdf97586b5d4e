mod common;

use common::*;
use mlbn_core::network::*;
use mlbn_core::simulate::{simulate, InnovationSpec, NoiseSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

#[test]
fn ancestors_match_reachability() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let dag = random_dag(&mut rng, 7, 0.35);
        for v in 0..7 {
            let got: Vec<usize> = dag.ancestors(v).unwrap().into_iter().collect();
            assert_eq!(got, brute_force_ancestors(&dag, v));
            let ext = dag.extended_ancestors(v).unwrap();
            assert!(ext.contains(&v));
            assert_eq!(ext.len(), got.len() + 1);
        }
    }
}

#[test]
fn atom_count_equals_common_extended_ancestors() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let dag = random_dag(&mut rng, 7, 0.4);
        let ks = dag.kleene_star();
        for i in 0..7 {
            for j in 0..7 {
                if i == j {
                    continue;
                }
                let a = atom_set(&dag, &ks, i, j).unwrap();
                let ei: BTreeSet<usize> = dag.extended_ancestors(i).unwrap();
                let ej: BTreeSet<usize> = dag.extended_ancestors(j).unwrap();
                assert_eq!(a.total_multiplicity(), ei.intersection(&ej).count());
                assert!(a.atoms.windows(2).all(|w| w[0].location < w[1].location));
            }
        }
    }
}

#[test]
fn smallest_atom_of_an_ancestor_pair_is_the_closure_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    for _ in 0..50 {
        let dag = random_dag(&mut rng, 7, 0.4);
        let ks = dag.kleene_star();
        let bf = brute_force_closure(&dag);
        for i in 0..7 {
            for j in 0..7 {
                if i != j && dag.is_ancestor(i, j).unwrap() {
                    let a = atom_set(&dag, &ks, i, j).unwrap();
                    assert_eq!(a.min_location(), Some(bf[i][j]));
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn occupancy_partitions_each_vertex() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..10 {
        let dag = random_dag(&mut rng, 6, 0.5);
        let s = simulate(&dag, &InnovationSpec::default(), &NoiseSpec::uniform(6, 0.1), 500, seed).unwrap();
        let occ = edge_occupancy(&dag, &s).unwrap();
        let own = innovation_occupancy(&dag, &s).unwrap();
        for v in 0..6 {
            let parents: usize = occ.iter().filter(|o| o.target == v).map(|o| o.count).sum();
            let total = parents as f64 / 500.0 + own[v];
            assert!((total - 1.0).abs() < 1e-12, "vertex {v}: {total}");
        }
        let flags = inactivation_flags(&occ, INACTIVATION_THRESHOLD);
        for (f, o) in flags.iter().zip(&occ) {
            assert_eq!(f.approaching_inactivation, o.fraction < INACTIVATION_THRESHOLD);
        }
    }
}
