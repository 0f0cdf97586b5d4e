//! Weighted DAGs underlying a max-linear network.
//!
//! Vertices are `0..n` in the Rust API. The JSON graph format and every
//! user-facing interface (CLI, HTTP, Python) number vertices from 1.

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::simulate::{SampleSet, SELF_PROVENANCE};
use crate::tropical::{kleene_star, ties, KleeneStar, TropicalMatrix, TropicalValue};

/// Directed edge `source -> target` with log-scale weight `ω = log c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    #[serde(with = "crate::one_based")]
    pub source: usize,
    #[serde(with = "crate::one_based")]
    pub target: usize,
    pub weight: f64,
}

/// Acyclic, simple, finitely weighted digraph.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedDag {
    n: usize,
    edges: Vec<Edge>,
    topo_order: Vec<usize>,
    parents: Vec<Vec<(usize, f64)>>,
    children: Vec<Vec<(usize, f64)>>,
}

impl WeightedDag {
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for e in &edges {
            for v in [e.source, e.target] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if e.source == e.target {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {}", e.source + 1)));
            }
            if !e.weight.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge {} -> {} has non-finite weight",
                    e.source + 1,
                    e.target + 1
                )));
            }
            if !seen.insert((e.source, e.target)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {} -> {}",
                    e.source + 1,
                    e.target + 1
                )));
            }
            parents[e.target].push((e.source, e.weight));
            children[e.source].push((e.target, e.weight));
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_by_key(|&(v, _)| v);
        }

        // Kahn's algorithm, lowest index first so the order is canonical.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<usize>> =
            (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut topo_order = Vec::with_capacity(n);
        while let Some(Reverse(v)) = ready.pop() {
            topo_order.push(v);
            for &(c, _) in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(Reverse(c));
                }
            }
        }
        if topo_order.len() != n {
            let v = (0..n).find(|&v| indegree[v] > 0).unwrap_or(0);
            return Err(Error::InvalidGraph(format!("graph has a cycle through vertex {}", v + 1)));
        }

        let mut edges = edges;
        edges.sort_by_key(|e| (e.source, e.target));
        Ok(WeightedDag { n, edges, topo_order, parents, children })
    }

    /// Convenience constructor from `(source, target, weight)` triples (0-based).
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(
            n,
            triples.iter().map(|&(source, target, weight)| Edge { source, target, weight }).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Parents of `v` with edge weights, sorted by index.
    pub fn parents(&self, v: usize) -> &[(usize, f64)] {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> &[(usize, f64)] {
        &self.children[v]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.parents.get(j)?.iter().find(|&&(p, _)| p == i).map(|&(_, w)| w)
    }

    /// Returns a copy with the weight of an existing edge replaced.
    pub fn with_weight(&self, i: usize, j: usize, weight: f64) -> Result<Self> {
        if self.weight(i, j).is_none() {
            return Err(Error::InvalidGraph(format!("no edge {} -> {}", i + 1, j + 1)));
        }
        let edges = self
            .edges
            .iter()
            .map(|e| if e.source == i && e.target == j { Edge { weight, ..*e } } else { *e })
            .collect();
        Self::new(self.n, edges)
    }

    /// Max-plus weight matrix with zero diagonal.
    pub fn weight_matrix(&self) -> TropicalMatrix {
        let mut m = TropicalMatrix::identity(self.n);
        for e in &self.edges {
            m.set(e.source, e.target, TropicalValue::finite(e.weight));
        }
        m
    }

    pub fn kleene_star(&self) -> KleeneStar {
        kleene_star(&self.weight_matrix()).expect("acyclic graphs have no positive cycles")
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange { vertex: v, n: self.n })
        }
    }

    /// All `u` with a path `u ⇝ v`, excluding `v`.
    pub fn ancestors(&self, v: usize) -> Result<BTreeSet<usize>> {
        self.check_vertex(v)?;
        let mut out = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[v].iter().map(|&(p, _)| p).collect();
        while let Some(u) = stack.pop() {
            if out.insert(u) {
                stack.extend(self.parents[u].iter().map(|&(p, _)| p));
            }
        }
        Ok(out)
    }

    /// `ancestors(v) ∪ {v}`.
    pub fn extended_ancestors(&self, v: usize) -> Result<BTreeSet<usize>> {
        let mut a = self.ancestors(v)?;
        a.insert(v);
        Ok(a)
    }

    pub fn is_ancestor(&self, i: usize, j: usize) -> Result<bool> {
        Ok(self.ancestors(j)?.contains(&i))
    }

    pub fn common_extended_ancestors(&self, i: usize, j: usize) -> Result<BTreeSet<usize>> {
        let a = self.extended_ancestors(i)?;
        let b = self.extended_ancestors(j)?;
        Ok(a.intersection(&b).copied().collect())
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn graph_hash(&self) -> String {
        let canonical = serde_json::to_vec(&GraphFile::from(self)).expect("graph serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GraphFile = serde_json::from_str(s)?;
        g.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }
}

/// On-disk graph format, 1-based.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<GraphFileEdge>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFileEdge {
    pub i: usize,
    pub j: usize,
    pub omega: f64,
}

impl From<&WeightedDag> for GraphFile {
    fn from(d: &WeightedDag) -> Self {
        GraphFile {
            n: d.n,
            edges: d
                .edges
                .iter()
                .map(|e| GraphFileEdge { i: e.source + 1, j: e.target + 1, omega: e.weight })
                .collect(),
        }
    }
}

impl TryFrom<GraphFile> for WeightedDag {
    type Error = Error;
    fn try_from(g: GraphFile) -> Result<Self> {
        let edges = g
            .edges
            .iter()
            .map(|e| {
                if e.i == 0 || e.j == 0 {
                    return Err(Error::InvalidGraph("vertex ids are 1-based".into()));
                }
                Ok(Edge { source: e.i - 1, target: e.j - 1, weight: e.omega })
            })
            .collect::<Result<Vec<_>>>()?;
        WeightedDag::new(g.n, edges)
    }
}

impl Serialize for WeightedDag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightedDag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        GraphFile::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

/// A point mass of `Y_ij = log X_j - log X_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    /// Common extended ancestors realising this location.
    #[serde(with = "crate::one_based::vec")]
    pub ancestors: Vec<usize>,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomSet {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    /// Distinct locations in ascending order.
    pub atoms: Vec<Atom>,
}

impl AtomSet {
    pub fn min_location(&self) -> Option<f64> {
        self.atoms.first().map(|a| a.location)
    }

    /// Number of common extended ancestors, counting merged duplicates.
    pub fn total_multiplicity(&self) -> usize {
        self.atoms.iter().map(|a| a.multiplicity).sum()
    }

    pub fn locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.location).collect()
    }
}

/// Atoms of `Y_ij` at `ω*(k, j) - ω*(k, i)` for each common extended ancestor `k`.
pub fn atom_set(dag: &WeightedDag, ks: &KleeneStar, i: usize, j: usize) -> Result<AtomSet> {
    dag.check_vertex(i)?;
    dag.check_vertex(j)?;
    if i == j {
        return Err(Error::SamePair(i + 1));
    }
    if ks.n() != dag.n() {
        return Err(Error::DimensionMismatch { expected: dag.n(), found: ks.n() });
    }
    let mut raw: Vec<(f64, usize)> = dag
        .common_extended_ancestors(i, j)?
        .into_iter()
        .map(|k| (ks.weight(k, j).value() - ks.weight(k, i).value(), k))
        .collect();
    raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut atoms: Vec<Atom> = Vec::new();
    for (location, k) in raw {
        match atoms.last_mut() {
            Some(last) if ties(last.location, location) => {
                last.ancestors.push(k);
                last.multiplicity += 1;
            }
            _ => atoms.push(Atom { location, ancestors: vec![k], multiplicity: 1 }),
        }
    }
    Ok(AtomSet { i, j, atoms })
}

/// Empirical probability that the max at `target` is attained through `source`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeOccupancy {
    #[serde(with = "crate::one_based")]
    pub source: usize,
    #[serde(with = "crate::one_based")]
    pub target: usize,
    pub count: usize,
    pub n_samples: usize,
    pub fraction: f64,
}

fn provenance_for<'a>(dag: &WeightedDag, samples: &'a SampleSet) -> Result<&'a [u8]> {
    if samples.n_vertices() != dag.n() {
        return Err(Error::DimensionMismatch { expected: dag.n(), found: samples.n_vertices() });
    }
    samples.provenance().ok_or(Error::MissingProvenance)
}

pub fn edge_occupancy(dag: &WeightedDag, samples: &SampleSet) -> Result<Vec<EdgeOccupancy>> {
    let prov = provenance_for(dag, samples)?;
    let n = dag.n();
    let rows = samples.n_samples();
    Ok(dag
        .edges()
        .iter()
        .map(|e| {
            let count = prov.chunks(n).filter(|row| row[e.target] as usize == e.source).count();
            EdgeOccupancy {
                source: e.source,
                target: e.target,
                count,
                n_samples: rows,
                fraction: count as f64 / rows as f64,
            }
        })
        .collect())
}

/// Per-vertex fraction of samples where the vertex's own innovation wins.
pub fn innovation_occupancy(dag: &WeightedDag, samples: &SampleSet) -> Result<Vec<f64>> {
    let prov = provenance_for(dag, samples)?;
    let n = dag.n();
    let rows = samples.n_samples() as f64;
    Ok((0..n)
        .map(|v| prov.chunks(n).filter(|row| row[v] == SELF_PROVENANCE).count() as f64 / rows)
        .collect())
}

/// Default occupancy below which an edge is approaching structural inactivation.
pub const INACTIVATION_THRESHOLD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InactivationFlag {
    #[serde(with = "crate::one_based")]
    pub source: usize,
    #[serde(with = "crate::one_based")]
    pub target: usize,
    pub fraction: f64,
    pub approaching_inactivation: bool,
}

/// Flags edges whose occupancy is strictly below `threshold`.
pub fn inactivation_flags(occ: &[EdgeOccupancy], threshold: f64) -> Vec<InactivationFlag> {
    occ.iter()
        .map(|o| InactivationFlag {
            source: o.source,
            target: o.target,
            fraction: o.fraction,
            approaching_inactivation: o.fraction < threshold,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn rejects_bad_graphs() {
        assert!(WeightedDag::from_triples(3, &[(0, 0, 1.0)]).is_err());
        assert!(WeightedDag::from_triples(3, &[(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(WeightedDag::from_triples(3, &[(0, 1, f64::NAN)]).is_err());
        assert!(WeightedDag::from_triples(3, &[(0, 3, 1.0)]).is_err());
        let cyc = WeightedDag::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]);
        assert!(matches!(cyc, Err(Error::InvalidGraph(_))));
    }

    #[test]
    fn topo_order_is_forward() {
        let g = presets::ten_node();
        let pos: Vec<usize> = {
            let mut p = vec![0; g.n()];
            for (k, &v) in g.topo_order().iter().enumerate() {
                p[v] = k;
            }
            p
        };
        assert!(g.edges().iter().all(|e| pos[e.source] < pos[e.target]));
    }

    #[test]
    fn figure_one_ancestors() {
        let g = presets::example_one([1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.ancestors(3).unwrap(), BTreeSet::from([0, 1, 2]));
        assert!(g.ancestors(0).unwrap().is_empty());
        assert!(g.ancestors(9).is_err());
    }

    #[test]
    fn gmm_example_single_atom() {
        let g = presets::example_gmm();
        let ks = g.kleene_star();
        let a = atom_set(&g, &ks, 1, 3).unwrap();
        assert_eq!(a.locations(), vec![1.5]);
        assert_eq!(a.atoms[0].ancestors, vec![1]);
        assert!(atom_set(&g, &ks, 1, 1).is_err());
    }

    #[test]
    fn isolated_vertex_has_no_atoms() {
        let g = presets::ten_node();
        let ks = g.kleene_star();
        for v in 0..9 {
            assert!(atom_set(&g, &ks, 9, v).unwrap().atoms.is_empty());
        }
    }

    #[test]
    fn duplicate_locations_merge() {
        // two sources with the same offset between vertices 2 and 3
        let g = WeightedDag::from_triples(
            4,
            &[(0, 2, 1.0), (0, 3, 2.0), (1, 2, 0.5), (1, 3, 1.5)],
        )
        .unwrap();
        let a = atom_set(&g, &g.kleene_star(), 2, 3).unwrap();
        assert_eq!(a.atoms.len(), 1);
        assert_eq!(a.atoms[0].multiplicity, 2);
        assert_eq!(a.total_multiplicity(), 2);
    }

    #[test]
    fn inactivation_threshold_is_strict() {
        let occ = |fraction| EdgeOccupancy { source: 0, target: 1, count: 0, n_samples: 100, fraction };
        let flags = inactivation_flags(&[occ(0.04), occ(0.05), occ(0.0099)], INACTIVATION_THRESHOLD);
        assert!(flags[0].approaching_inactivation);
        assert!(!flags[1].approaching_inactivation);
        assert!(flags[2].approaching_inactivation);
    }

    #[test]
    fn graph_json_roundtrip_is_one_based() {
        let g = presets::example_gmm();
        let s = g.to_json();
        assert!(s.contains("\"i\": 1"));
        let back = WeightedDag::from_json(&s).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.graph_hash(), g.graph_hash());
        assert!(WeightedDag::from_json(r#"{"n":2,"edges":[{"i":0,"j":1,"omega":1}]}"#).is_err());
    }
}
