#![allow(dead_code)]

use mlbn_core::network::WeightedDag;
use rand::Rng;

/// Random DAG on `n` vertices with edges only from lower to higher index and
/// dyadic weights `k / 1024` in `[-2, 2]`.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p_edge: f64) -> WeightedDag {
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p_edge) {
                triples.push((i, j, dyadic(rng)));
            }
        }
    }
    WeightedDag::from_triples(n, &triples).unwrap()
}

pub fn dyadic<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(-2048i32..=2048) as f64 / 1024.0
}

/// Heaviest-path weight by exhaustive depth-first enumeration; the empty path
/// counts, so the diagonal is 0.
pub fn brute_force_closure(dag: &WeightedDag) -> Vec<Vec<f64>> {
    let n = dag.n();
    let mut out = vec![vec![f64::NEG_INFINITY; n]; n];
    fn dfs(dag: &WeightedDag, v: usize, acc: f64, row: &mut [f64]) {
        if acc > row[v] {
            row[v] = acc;
        }
        for &(c, w) in dag.children(v) {
            dfs(dag, c, acc + w, row);
        }
    }
    for (s, row) in out.iter_mut().enumerate() {
        // track the max over every path, so recurse without pruning
        let mut best = vec![f64::NEG_INFINITY; n];
        dfs(dag, s, 0.0, &mut best);
        row.copy_from_slice(&best);
    }
    out
}

/// All paths from `s` to `t` as vertex lists.
pub fn all_paths(dag: &WeightedDag, s: usize, t: usize) -> Vec<Vec<usize>> {
    fn go(dag: &WeightedDag, v: usize, t: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        cur.push(v);
        if v == t {
            out.push(cur.clone());
        } else {
            for &(c, _) in dag.children(v) {
                go(dag, c, t, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    go(dag, s, t, &mut Vec::new(), &mut out);
    out
}

pub fn path_weight(dag: &WeightedDag, path: &[usize]) -> f64 {
    path.windows(2).map(|e| dag.weight(e[0], e[1]).unwrap()).sum()
}

/// Ancestor sets by reverse reachability.
pub fn brute_force_ancestors(dag: &WeightedDag, v: usize) -> Vec<usize> {
    (0..dag.n()).filter(|&u| u != v && !all_paths(dag, u, v).is_empty()).collect()
}
