//! Max-plus linear algebra.
//!
//! Values live in `T = R ∪ {-inf}` with `a ⊕ b = max(a, b)` and `a ⊙ b = a + b`.
//! Edge weights of a max-linear network are stored in log scale, so the
//! weight matrix `ω = log C` and its Kleene star `ω*` are max-plus matrices.
//! The Kleene star is the weight of the heaviest path between two vertices;
//! its rows span the polytrope `Q(C) = { x : x_j - x_i >= ω*(i, j) }` that
//! contains every noise-free log-observation of the network.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::network::WeightedDag;

/// Diagonal entries above this after relaxation indicate a positive cycle.
pub const CYCLE_TOL: f64 = 1e-12;

/// Two path weights closer than this (relative) are treated as tied.
const TIE_TOL: f64 = 1e-12;

pub(crate) fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOL * (1.0 + a.abs().max(b.abs()))
}

/// An element of the max-plus semiring.
///
/// `-inf` is the additive identity and absorbs under `⊙`. NaN and `+inf` are
/// never representable.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct TropicalValue(f64);

impl TropicalValue {
    pub const NEG_INF: TropicalValue = TropicalValue(f64::NEG_INFINITY);
    pub const ZERO: TropicalValue = TropicalValue(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value == f64::INFINITY {
            Err(Error::InvalidValue(value))
        } else {
            Ok(TropicalValue(value))
        }
    }

    /// Wraps a finite real. Panics on NaN or infinities.
    pub fn finite(value: f64) -> Self {
        assert!(value.is_finite(), "tropical value must be finite, got {value}");
        TropicalValue(value)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        !self.is_neg_inf()
    }

    /// Tropical addition: `max(a, b)`.
    #[inline]
    pub fn oplus(self, rhs: Self) -> Self {
        if self.0 >= rhs.0 {
            self
        } else {
            rhs
        }
    }

    /// Tropical multiplication: `a + b`, with `-inf` absorbing.
    #[inline]
    pub fn otimes(self, rhs: Self) -> Self {
        if self.is_neg_inf() || rhs.is_neg_inf() {
            Self::NEG_INF
        } else {
            TropicalValue(self.0 + rhs.0)
        }
    }
}

impl fmt::Debug for TropicalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_neg_inf() {
            f.write_str("-inf")
        } else {
            write!(f, "{:?}", self.0)
        }
    }
}

impl fmt::Display for TropicalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Serialize for TropicalValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.is_neg_inf() {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for TropicalValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = TropicalValue;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or the string \"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Self::Value, E> {
                TropicalValue::new(v).map_err(E::custom)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                Ok(TropicalValue(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                Ok(TropicalValue(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                match v {
                    "-inf" | "-Infinity" => Ok(TropicalValue::NEG_INF),
                    _ => Err(E::custom(format!("unexpected string {v:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Square matrix over the max-plus semiring, row-major.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct TropicalMatrix {
    n: usize,
    entries: Vec<TropicalValue>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    n: usize,
    entries: Vec<Vec<TropicalValue>>,
}

impl TryFrom<MatrixRepr> for TropicalMatrix {
    type Error = Error;
    fn try_from(r: MatrixRepr) -> Result<Self> {
        TropicalMatrix::from_rows(r.n, r.entries)
    }
}

impl From<TropicalMatrix> for MatrixRepr {
    fn from(m: TropicalMatrix) -> Self {
        MatrixRepr { n: m.n, entries: m.rows() }
    }
}

impl TropicalMatrix {
    /// All entries `-inf`.
    pub fn neg_inf(n: usize) -> Self {
        TropicalMatrix { n, entries: vec![TropicalValue::NEG_INF; n * n] }
    }

    /// Tropical identity: zero diagonal, `-inf` elsewhere.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::neg_inf(n);
        for i in 0..n {
            m.set(i, i, TropicalValue::ZERO);
        }
        m
    }

    pub fn from_rows(n: usize, rows: Vec<Vec<TropicalValue>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if rows.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rows.len() });
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: row.len() });
            }
            entries.extend(row);
        }
        Ok(TropicalMatrix { n, entries })
    }

    /// Builds a matrix from plain floats; `f64::NEG_INFINITY` marks a missing entry.
    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|&v| TropicalValue::new(v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(n, rows)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> TropicalValue {
        self.entries[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: TropicalValue) {
        self.entries[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[TropicalValue] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<TropicalValue>> {
        self.entries.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(|r| r.iter().map(|v| v.value()).collect()).collect()
    }

    /// Every row and every column has a finite entry.
    pub fn is_r_astic(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..n).any(|j| self.get(i, j).is_finite()))
            && (0..n).all(|j| (0..n).any(|i| self.get(i, j).is_finite()))
    }

    /// Entrywise `≥` in the extended order.
    pub fn dominates(&self, other: &TropicalMatrix) -> bool {
        self.n == other.n && self.entries.iter().zip(&other.entries).all(|(a, b)| a >= b)
    }
}

/// Max-plus matrix product: `(a ⊙ b)(i, j) = max_k a(i, k) + b(k, j)`.
pub fn trop_matmul(a: &TropicalMatrix, b: &TropicalMatrix) -> Result<TropicalMatrix> {
    if a.n != b.n {
        return Err(Error::DimensionMismatch { expected: a.n, found: b.n });
    }
    let n = a.n;
    let mut out = TropicalMatrix::neg_inf(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik.is_neg_inf() {
                continue;
            }
            for j in 0..n {
                let v = aik.otimes(b.get(k, j));
                let cur = out.get(i, j);
                out.set(i, j, cur.oplus(v));
            }
        }
    }
    Ok(out)
}

/// A weight matrix together with its Kleene star.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KleeneStar {
    base: TropicalMatrix,
    closure: TropicalMatrix,
}

impl KleeneStar {
    pub fn base(&self) -> &TropicalMatrix {
        &self.base
    }

    pub fn closure(&self) -> &TropicalMatrix {
        &self.closure
    }

    pub fn n(&self) -> usize {
        self.closure.n
    }

    /// Heaviest path weight from `i` to `j` (`-inf` if unreachable).
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> TropicalValue {
        self.closure.get(i, j)
    }
}

/// Computes `I ⊕ w ⊕ w^2 ⊕ ...` by max-plus Floyd–Warshall relaxation.
///
/// Fails if the graph of `w` carries a positive-weight cycle.
pub fn kleene_star(w: &TropicalMatrix) -> Result<KleeneStar> {
    let n = w.n;
    for i in 0..n {
        if w.get(i, i).value() > CYCLE_TOL {
            return Err(Error::PositiveCycle { vertex: i });
        }
    }
    let mut c = w.clone();
    for i in 0..n {
        c.set(i, i, TropicalValue::ZERO);
    }
    for k in 0..n {
        for i in 0..n {
            let cik = c.get(i, k);
            if cik.is_neg_inf() {
                continue;
            }
            for j in 0..n {
                let ckj = c.get(k, j);
                if ckj.is_neg_inf() {
                    continue;
                }
                let via = cik.otimes(ckj);
                if via > c.get(i, j) {
                    c.set(i, j, via);
                }
            }
        }
    }
    if let Some(v) = (0..n).find(|&i| c.get(i, i).value() > CYCLE_TOL) {
        return Err(Error::PositiveCycle { vertex: v });
    }
    for i in 0..n {
        c.set(i, i, TropicalValue::ZERO);
    }
    Ok(KleeneStar { base: w.clone(), closure: c })
}

/// Half-space `x_j - x_i >= bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    #[serde(with = "crate::one_based")]
    pub i: usize,
    #[serde(with = "crate::one_based")]
    pub j: usize,
    pub bound: f64,
    /// The hyperplane supports a facet of the polytrope: no intermediate
    /// vertex attains the same path weight.
    pub facet_defining: bool,
}

impl Facet {
    #[inline]
    pub fn slack(&self, x: &[f64]) -> f64 {
        x[self.j] - x[self.i] - self.bound
    }
}

/// Half-space description of the polytrope of a Kleene star.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolytropeFacets {
    pub n: usize,
    pub constraints: Vec<Facet>,
}

impl PolytropeFacets {
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Facet> {
        self.constraints.iter().find(|f| f.i == i && f.j == j)
    }
}

/// One constraint per finite off-diagonal entry of the closure.
pub fn polytrope_facets(ks: &KleeneStar) -> PolytropeFacets {
    let c = &ks.closure;
    let n = c.n;
    let mut constraints = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || c.get(i, j).is_neg_inf() {
                continue;
            }
            let bound = c.get(i, j).value();
            let facet_defining = (0..n).filter(|&k| k != i && k != j).all(|k| {
                let via = c.get(i, k).otimes(c.get(k, j));
                via.is_neg_inf() || (via.value() < bound && !ties(via.value(), bound))
            });
            constraints.push(Facet { i, j, bound, facet_defining });
        }
    }
    PolytropeFacets { n, constraints }
}

/// Whether `x` satisfies every constraint up to `tol`.
///
/// Invariant under `x + λ·1`.
pub fn membership(x: &[f64], facets: &PolytropeFacets, tol: f64) -> Result<bool> {
    if x.len() != facets.n {
        return Err(Error::DimensionMismatch { expected: facets.n, found: x.len() });
    }
    Ok(facets.constraints.iter().all(|f| f.slack(x) >= -tol))
}

/// Whether an edge supports its own facet or is hidden behind a heavier path.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeClass {
    FacetDefining,
    Masked,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeClassification {
    #[serde(with = "crate::one_based")]
    pub source: usize,
    #[serde(with = "crate::one_based")]
    pub target: usize,
    pub weight: f64,
    /// Heaviest `source ⇝ target` path avoiding the direct edge (`-inf` if none).
    pub best_alternative: TropicalValue,
    pub class: EdgeClass,
}

/// Flags each edge `i -> j` as facet-defining iff `ω(i, j)` strictly beats
/// every other `i ⇝ j` path. Ties are masked.
pub fn classify_edges(dag: &WeightedDag) -> Vec<EdgeClassification> {
    let ks = dag.kleene_star();
    let c = ks.closure();
    dag.edges()
        .iter()
        .map(|e| {
            // any other path leaves `source` through a different child
            let best_alternative = dag
                .children(e.source)
                .iter()
                .filter(|&&(child, _)| child != e.target)
                .map(|&(child, w)| TropicalValue::finite(w).otimes(c.get(child, e.target)))
                .fold(TropicalValue::NEG_INF, TropicalValue::oplus);
            let class = if best_alternative.is_neg_inf()
                || (e.weight > best_alternative.value() && !ties(e.weight, best_alternative.value()))
            {
                EdgeClass::FacetDefining
            } else {
                EdgeClass::Masked
            };
            EdgeClassification {
                source: e.source,
                target: e.target,
                weight: e.weight,
                best_alternative,
                class,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: f64) -> TropicalValue {
        TropicalValue::new(v).unwrap()
    }

    const NI: f64 = f64::NEG_INFINITY;

    #[test]
    fn semiring_identities() {
        let a = t(2.5);
        assert_eq!(TropicalValue::NEG_INF.oplus(a), a);
        assert_eq!(TropicalValue::NEG_INF.otimes(a), TropicalValue::NEG_INF);
        assert_eq!(TropicalValue::ZERO.otimes(a), a);
        assert!(TropicalValue::new(f64::NAN).is_err());
        assert!(TropicalValue::new(f64::INFINITY).is_err());
    }

    #[test]
    fn matmul_hand_example() {
        let a = TropicalMatrix::from_f64_rows(&[vec![0.0, 1.0], vec![NI, 0.0]]).unwrap();
        let b = TropicalMatrix::from_f64_rows(&[vec![0.0, 2.0], vec![NI, 0.0]]).unwrap();
        let p = trop_matmul(&a, &b).unwrap();
        // (0, 1) = max(0 + 2, 1 + 0)
        assert_eq!(p.to_f64_rows(), vec![vec![0.0, 2.0], vec![NI, 0.0]]);
    }

    #[test]
    fn matmul_identity_and_mismatch() {
        let a = TropicalMatrix::from_f64_rows(&[
            vec![0.0, -1.5, NI],
            vec![2.0, 0.0, 4.0],
            vec![NI, NI, 0.0],
        ])
        .unwrap();
        let id = TropicalMatrix::identity(3);
        assert_eq!(trop_matmul(&id, &a).unwrap(), a);
        assert_eq!(trop_matmul(&a, &id).unwrap(), a);
        assert!(matches!(
            trop_matmul(&a, &TropicalMatrix::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn chain_closure_is_path_sum() {
        let (a, b) = (0.75, -2.0);
        let w = TropicalMatrix::from_f64_rows(&[
            vec![0.0, a, NI],
            vec![NI, 0.0, b],
            vec![NI, NI, 0.0],
        ])
        .unwrap();
        let ks = kleene_star(&w).unwrap();
        assert_eq!(ks.weight(0, 2).value(), a + b);
        assert!(ks.weight(2, 0).is_neg_inf());
    }

    #[test]
    fn positive_cycle_detected() {
        let w = TropicalMatrix::from_f64_rows(&[
            vec![0.0, 1.0, NI],
            vec![NI, 0.0, 1.0],
            vec![-1.5, NI, 0.0],
        ])
        .unwrap();
        assert!(matches!(kleene_star(&w), Err(Error::PositiveCycle { .. })));

        // zero-weight cycle is fine
        let w = TropicalMatrix::from_f64_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let ks = kleene_star(&w).unwrap();
        assert_eq!(ks.weight(0, 1).value(), 1.0);
    }

    #[test]
    fn empty_graph_has_no_facets() {
        let ks = kleene_star(&TropicalMatrix::identity(4)).unwrap();
        assert!(polytrope_facets(&ks).is_empty());
    }

    #[test]
    fn membership_is_translation_invariant() {
        let w = TropicalMatrix::from_f64_rows(&[vec![0.0, 1.0], vec![NI, 0.0]]).unwrap();
        let f = polytrope_facets(&kleene_star(&w).unwrap());
        for x in [[0.0, 1.0], [0.0, 0.5], [3.0, 9.0]] {
            let shifted = [x[0] + 7.0, x[1] + 7.0];
            assert_eq!(membership(&x, &f, 0.0).unwrap(), membership(&shifted, &f, 0.0).unwrap());
        }
        assert!(membership(&[0.0, 1.0], &f, 0.0).unwrap());
        assert!(!membership(&[0.0, 0.5], &f, 0.0).unwrap());
        assert!(membership(&[0.0], &f, 0.0).is_err());
    }

    #[test]
    fn json_uses_neg_inf_string() {
        let m = TropicalMatrix::from_f64_rows(&[vec![0.0, 1.5], vec![NI, 0.0]]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"n":2,"entries":[[0.0,1.5],["-inf",0.0]]}"#);
        let back: TropicalMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
        let bad = r#"{"n":2,"entries":[[0.0,1.5]]}"#;
        assert!(serde_json::from_str::<TropicalMatrix>(bad).is_err());
    }
}
