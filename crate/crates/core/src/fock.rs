//! Exact q-deformed full Fock space.
//!
//! Vectors are finite rational combinations of tensor words over orthonormal
//! basis labels. Left creation prepends, right creation appends; the
//! annihilators carry the q-weights `q^{k-1}` (left) and `q^{n-k}` (right).
//! At `q = 0` these are the free operators `l, l*, r, r*`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use smallvec::SmallVec;

use crate::rational::{self, Rational};
use crate::{Error, Result};

/// Largest word length accepted by [`q_inner`].
pub const Q_INNER_GUARD: usize = 8;

/// An element of a fixed orthonormal family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisLabel {
    /// `h^k_{i,j}`, indexed by matrix position and colour.
    Entry { i: u16, j: u16, k: u16 },
    /// A free-standing vector `h_n`.
    Plain(u32),
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisLabel::Entry { i, j, k } => write!(f, "h{k}[{i},{j}]"),
            BasisLabel::Plain(n) => write!(f, "h{n}"),
        }
    }
}

impl Serialize for BasisLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

pub type TensorWord = SmallVec<[BasisLabel; 8]>;

/// A finite rational combination of tensor words; zero weights are never
/// stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FockVector {
    terms: BTreeMap<TensorWord, Rational>,
}

impl FockVector {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn vacuum() -> Self {
        Self::basis(TensorWord::new())
    }

    pub fn basis(word: TensorWord) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(word, Rational::one());
        FockVector { terms }
    }

    pub fn from_labels(labels: &[BasisLabel]) -> Self {
        Self::basis(labels.iter().copied().collect())
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&TensorWord, &Rational)> {
        self.terms.iter()
    }

    pub fn weight(&self, word: &[BasisLabel]) -> Rational {
        let key: TensorWord = word.iter().copied().collect();
        self.terms.get(&key).cloned().unwrap_or_else(Rational::zero)
    }

    /// Coefficient of the vacuum `Ω`.
    pub fn vacuum_weight(&self) -> Rational {
        self.weight(&[])
    }

    pub fn max_depth(&self) -> usize {
        self.terms.keys().map(|w| w.len()).max().unwrap_or(0)
    }

    /// Adds `coeff * word`, dropping the entry if it cancels.
    pub fn add_term(&mut self, word: TensorWord, coeff: Rational) {
        if coeff.is_zero() {
            return;
        }
        match self.terms.entry(word) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(coeff);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn add_scaled(&mut self, other: &FockVector, scale: &Rational) {
        if scale.is_zero() {
            return;
        }
        for (w, c) in &other.terms {
            self.add_term(w.clone(), c * scale);
        }
    }

    pub fn scaled(&self, scale: &Rational) -> FockVector {
        let mut out = FockVector::zero();
        out.add_scaled(self, scale);
        out
    }

    pub fn add(&self, other: &FockVector) -> FockVector {
        let mut out = self.clone();
        out.add_scaled(other, &Rational::one());
        out
    }

    pub fn sub(&self, other: &FockVector) -> FockVector {
        let mut out = self.clone();
        out.add_scaled(other, &-Rational::one());
        out
    }
}

impl Serialize for FockVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Term<'a> {
            word: &'a [BasisLabel],
            weight: String,
        }
        let mut seq = s.serialize_seq(Some(self.terms.len()))?;
        for (w, c) in &self.terms {
            seq.serialize_element(&Term { word: w, weight: rational::to_string(c) })?;
        }
        seq.end()
    }
}

/// A single Fock-space operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FockOp {
    /// `a(h)` / `l(h)`: prepend `h`.
    CreateLeft(BasisLabel),
    /// `a*(h)` / `l*(h)`.
    AnnihilateLeft(BasisLabel),
    /// `b(h)` / `r(h)`: append `h`.
    CreateRight(BasisLabel),
    /// `b*(h)` / `r*(h)`.
    AnnihilateRight(BasisLabel),
    /// `P_n`, projection onto words of length `n`.
    ProjectLength(usize),
    /// `P_Ω`.
    ProjectVacuum,
    Identity,
    /// `sum_{n >= 0} q^n P_n`, evaluated per word length.
    QNumberProjector,
}

impl FockOp {
    pub fn is_creation(&self) -> bool {
        matches!(self, FockOp::CreateLeft(_) | FockOp::CreateRight(_))
    }

    /// The adjoint operator (all operators here are real).
    pub fn adjoint(&self) -> FockOp {
        match *self {
            FockOp::CreateLeft(h) => FockOp::AnnihilateLeft(h),
            FockOp::AnnihilateLeft(h) => FockOp::CreateLeft(h),
            FockOp::CreateRight(h) => FockOp::AnnihilateRight(h),
            FockOp::AnnihilateRight(h) => FockOp::CreateRight(h),
            other => other,
        }
    }
}

impl fmt::Display for FockOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FockOp::CreateLeft(h) => write!(f, "l({h})"),
            FockOp::AnnihilateLeft(h) => write!(f, "l*({h})"),
            FockOp::CreateRight(h) => write!(f, "r({h})"),
            FockOp::AnnihilateRight(h) => write!(f, "r*({h})"),
            FockOp::ProjectLength(n) => write!(f, "P{n}"),
            FockOp::ProjectVacuum => write!(f, "P_vac"),
            FockOp::Identity => write!(f, "I"),
            FockOp::QNumberProjector => write!(f, "Q"),
        }
    }
}

/// Number of creation operators in an operator word.
pub fn creation_count(ops: &[FockOp]) -> usize {
    ops.iter().filter(|o| o.is_creation()).count()
}

/// The Fock space `F_q(H)` with a hard cap on word length.
#[derive(Clone, Debug)]
pub struct FockSpace {
    q: Rational,
    depth_cap: usize,
    q_powers: Vec<Rational>,
}

impl FockSpace {
    /// `q` must lie in `[-1, 1]`.
    pub fn new(q: Rational, depth_cap: usize) -> Result<Self> {
        if q > Rational::one() || q < -Rational::one() {
            return Err(Error::InvalidArgument(format!("q = {q} outside [-1, 1]")));
        }
        let mut q_powers = Vec::with_capacity(depth_cap + 1);
        let mut p = Rational::one();
        for _ in 0..=depth_cap {
            q_powers.push(p.clone());
            p *= &q;
        }
        Ok(FockSpace { q, depth_cap, q_powers })
    }

    pub fn q(&self) -> &Rational {
        &self.q
    }

    pub fn depth_cap(&self) -> usize {
        self.depth_cap
    }

    fn q_pow(&self, n: usize) -> Rational {
        match self.q_powers.get(n) {
            Some(p) => p.clone(),
            None => rational::pow(&self.q, n as i32),
        }
    }

    /// Applies `op` to `coeff * word`, accumulating into `out`.
    pub fn apply_term(&self, op: &FockOp, word: &TensorWord, coeff: &Rational, out: &mut FockVector) -> Result<()> {
        let n = word.len();
        match *op {
            FockOp::CreateLeft(h) | FockOp::CreateRight(h) => {
                if n + 1 > self.depth_cap {
                    return Err(Error::DepthOverflow { required: n + 1, cap: self.depth_cap });
                }
                let mut w = TensorWord::with_capacity(n + 1);
                if matches!(op, FockOp::CreateLeft(_)) {
                    w.push(h);
                    w.extend_from_slice(word);
                } else {
                    w.extend_from_slice(word);
                    w.push(h);
                }
                out.add_term(w, coeff.clone());
            }
            FockOp::AnnihilateLeft(h) | FockOp::AnnihilateRight(h) => {
                let left = matches!(op, FockOp::AnnihilateLeft(_));
                for (k, &g) in word.iter().enumerate() {
                    if g != h {
                        continue;
                    }
                    let power = if left { k } else { n - 1 - k };
                    let weight = self.q_pow(power);
                    if weight.is_zero() {
                        continue;
                    }
                    let mut w = TensorWord::with_capacity(n - 1);
                    w.extend_from_slice(&word[..k]);
                    w.extend_from_slice(&word[k + 1..]);
                    out.add_term(w, coeff * weight);
                }
            }
            FockOp::ProjectLength(m) => {
                if n == m {
                    out.add_term(word.clone(), coeff.clone());
                }
            }
            FockOp::ProjectVacuum => {
                if n == 0 {
                    out.add_term(word.clone(), coeff.clone());
                }
            }
            FockOp::Identity => out.add_term(word.clone(), coeff.clone()),
            FockOp::QNumberProjector => {
                let w = self.q_pow(n);
                if !w.is_zero() {
                    out.add_term(word.clone(), coeff * w);
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, op: &FockOp, v: &FockVector) -> Result<FockVector> {
        let mut out = FockVector::zero();
        for (w, c) in v.iter() {
            self.apply_term(op, w, c, &mut out)?;
        }
        Ok(out)
    }

    /// Applies the operator product `ops[0] ops[1] ... ops[m-1]`, i.e. the
    /// last operator acts first.
    pub fn apply_product(&self, ops: &[FockOp], v: &FockVector) -> Result<FockVector> {
        let mut cur = v.clone();
        for op in ops.iter().rev() {
            if cur.is_zero() {
                break;
            }
            cur = self.apply(op, &cur)?;
        }
        Ok(cur)
    }

    /// Applies `sum_t c_t * prod_t`.
    pub fn apply_sum(&self, terms: &[(Rational, Vec<FockOp>)], v: &FockVector) -> Result<FockVector> {
        let mut out = FockVector::zero();
        for (c, ops) in terms {
            out.add_scaled(&self.apply_product(ops, v)?, c);
        }
        Ok(out)
    }

    /// `⟨T Ω, Ω⟩_q` for the operator product `T = ops[0] ... ops[m-1]`.
    pub fn vacuum_expectation(&self, ops: &[FockOp]) -> Result<Rational> {
        Ok(self.apply_product(ops, &FockVector::vacuum())?.vacuum_weight())
    }
}

impl FockSpace {
    /// `φ_q` of every operator word of length `1..=max_len` over `alphabet`,
    /// keyed by letter indices (leftmost first); zero values are omitted.
    pub fn exhaustive_vacuum_expectations(
        &self,
        alphabet: &[FockOp],
        max_len: usize,
    ) -> Result<std::collections::HashMap<Vec<usize>, Rational>> {
        let mut out = std::collections::HashMap::new();
        let mut suffix = Vec::new();
        self.vacuum_dfs(alphabet, max_len, &FockVector::vacuum(), &mut suffix, &mut out)?;
        Ok(out)
    }

    fn vacuum_dfs(
        &self,
        alphabet: &[FockOp],
        max_len: usize,
        v: &FockVector,
        suffix: &mut Vec<usize>,
        out: &mut std::collections::HashMap<Vec<usize>, Rational>,
    ) -> Result<()> {
        for (idx, op) in alphabet.iter().enumerate() {
            let next = self.apply(op, v)?;
            if next.is_zero() {
                continue;
            }
            suffix.push(idx);
            let w = next.vacuum_weight();
            if !w.is_zero() {
                out.insert(suffix.iter().rev().copied().collect(), w);
            }
            let remaining = max_len - suffix.len();
            let min_depth = next.iter().map(|(w, _)| w.len()).min().unwrap_or(0);
            if remaining > 0 && min_depth <= remaining {
                self.vacuum_dfs(alphabet, max_len, &next, suffix, out)?;
            }
            suffix.pop();
        }
        Ok(())
    }
}

/// `φ_q(ops)` with the depth cap set to the number of creations in `ops`.
pub fn vacuum_expectation(q: &Rational, ops: &[FockOp]) -> Result<Rational> {
    FockSpace::new(q.clone(), creation_count(ops))?.vacuum_expectation(ops)
}

fn inversions(perm: &[usize]) -> usize {
    let mut inv = 0;
    for a in 0..perm.len() {
        for b in a + 1..perm.len() {
            if perm[a] > perm[b] {
                inv += 1;
            }
        }
    }
    inv
}

/// `⟨g_1 ⊗ ... ⊗ g_n, h_1 ⊗ ... ⊗ h_m⟩_q
///   = δ_{n,m} sum_{σ in S_n} q^{inv(σ)} prod_k ⟨g_k, h_{σ(k)}⟩`.
pub fn q_inner(u: &[BasisLabel], v: &[BasisLabel], q: &Rational) -> Result<Rational> {
    let n = u.len().max(v.len());
    if n > Q_INNER_GUARD {
        return Err(Error::LengthGuard(n));
    }
    if u.len() != v.len() {
        return Ok(Rational::zero());
    }
    let mut total = Rational::zero();
    let mut perm: Vec<usize> = Vec::with_capacity(n);
    let mut used = vec![false; n];
    // depth-first over permutations compatible with the label deltas
    fn go(
        u: &[BasisLabel],
        v: &[BasisLabel],
        q: &Rational,
        perm: &mut Vec<usize>,
        used: &mut [bool],
        total: &mut Rational,
    ) {
        let k = perm.len();
        if k == u.len() {
            *total += rational::pow(q, inversions(perm) as i32);
            return;
        }
        for s in 0..v.len() {
            if !used[s] && u[k] == v[s] {
                used[s] = true;
                perm.push(s);
                go(u, v, q, perm, used, total);
                perm.pop();
                used[s] = false;
            }
        }
    }
    go(u, v, q, &mut perm, &mut used, &mut total);
    Ok(total)
}

/// Bilinear extension of [`q_inner`] to vectors.
pub fn q_inner_vectors(u: &FockVector, v: &FockVector, q: &Rational) -> Result<Rational> {
    let mut total = Rational::zero();
    for (wu, cu) in u.iter() {
        for (wv, cv) in v.iter() {
            if wu.len() == wv.len() {
                let ip = q_inner(wu, wv, q)?;
                if !ip.is_zero() {
                    total += cu * cv * ip;
                }
            }
        }
    }
    Ok(total)
}

/// Every basis word of length at most `depth` over `labels`.
pub fn basis_words(labels: &[BasisLabel], depth: usize) -> Vec<TensorWord> {
    let mut out = vec![TensorWord::new()];
    let mut layer = vec![TensorWord::new()];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(layer.len() * labels.len());
        for w in &layer {
            for &h in labels {
                let mut x = w.clone();
                x.push(h);
                next.push(x);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// An operator identity `lhs = rhs`, each side a weighted sum of products.
#[derive(Clone, Debug)]
pub struct Relation {
    pub name: String,
    pub lhs: Vec<(Rational, Vec<FockOp>)>,
    pub rhs: Vec<(Rational, Vec<FockOp>)>,
}

fn delta(h1: BasisLabel, h2: BasisLabel) -> Rational {
    if h1 == h2 {
        Rational::one()
    } else {
        Rational::zero()
    }
}

fn commutator(x: FockOp, y: FockOp) -> Vec<(Rational, Vec<FockOp>)> {
    vec![(Rational::one(), vec![x, y]), (-Rational::one(), vec![y, x])]
}

/// The free (`q = 0`) relations between left and right operators for the
/// label pair `(h1, h2)`.
pub fn free_relations(h1: BasisLabel, h2: BasisLabel) -> Vec<Relation> {
    use FockOp::*;
    let d = delta(h2, h1);
    let one = Rational::one();
    vec![
        Relation {
            name: format!("l*({h1}) l({h2}) = <{h2},{h1}> I"),
            lhs: vec![(one.clone(), vec![AnnihilateLeft(h1), CreateLeft(h2)])],
            rhs: vec![(d.clone(), vec![Identity])],
        },
        Relation {
            name: format!("r*({h1}) r({h2}) = <{h2},{h1}> I"),
            lhs: vec![(one.clone(), vec![AnnihilateRight(h1), CreateRight(h2)])],
            rhs: vec![(d.clone(), vec![Identity])],
        },
        Relation {
            name: format!("[l*({h1}), r({h2})] = <{h2},{h1}> P_vac"),
            lhs: commutator(AnnihilateLeft(h1), CreateRight(h2)),
            rhs: vec![(d.clone(), vec![ProjectVacuum])],
        },
        Relation {
            name: format!("[r*({h1}), l({h2})] = <{h2},{h1}> P_vac"),
            lhs: commutator(AnnihilateRight(h1), CreateLeft(h2)),
            rhs: vec![(d, vec![ProjectVacuum])],
        },
        Relation {
            name: format!("[l({h1}), r({h2})] = 0"),
            lhs: commutator(CreateLeft(h1), CreateRight(h2)),
            rhs: vec![],
        },
        Relation {
            name: format!("[l*({h1}), r*({h2})] = 0"),
            lhs: commutator(AnnihilateLeft(h1), AnnihilateRight(h2)),
            rhs: vec![],
        },
    ]
}

/// The q-deformed relations for the label pair `(h1, h2)`.
pub fn q_relations(q: &Rational, h1: BasisLabel, h2: BasisLabel) -> Vec<Relation> {
    use FockOp::*;
    let d = delta(h2, h1);
    let one = Rational::one();
    vec![
        Relation {
            name: format!("[a({h1}), b({h2})] = 0"),
            lhs: commutator(CreateLeft(h1), CreateRight(h2)),
            rhs: vec![],
        },
        Relation {
            name: format!("[a*({h1}), b*({h2})] = 0"),
            lhs: commutator(AnnihilateLeft(h1), AnnihilateRight(h2)),
            rhs: vec![],
        },
        Relation {
            name: format!("[a*({h1}), b({h2})] = <{h2},{h1}> sum q^n P_n"),
            lhs: commutator(AnnihilateLeft(h1), CreateRight(h2)),
            rhs: vec![(d.clone(), vec![QNumberProjector])],
        },
        Relation {
            name: format!("[b*({h1}), a({h2})] = <{h2},{h1}> sum q^n P_n"),
            lhs: commutator(AnnihilateRight(h1), CreateLeft(h2)),
            rhs: vec![(d.clone(), vec![QNumberProjector])],
        },
        Relation {
            name: format!("a*({h1}) a({h2}) - q a({h2}) a*({h1}) = <{h2},{h1}> I"),
            lhs: vec![
                (one.clone(), vec![AnnihilateLeft(h1), CreateLeft(h2)]),
                (-q.clone(), vec![CreateLeft(h2), AnnihilateLeft(h1)]),
            ],
            rhs: vec![(d.clone(), vec![Identity])],
        },
        Relation {
            name: format!("b*({h1}) b({h2}) - q b({h2}) b*({h1}) = <{h2},{h1}> I"),
            lhs: vec![
                (one, vec![AnnihilateRight(h1), CreateRight(h2)]),
                (-q.clone(), vec![CreateRight(h2), AnnihilateRight(h1)]),
            ],
            rhs: vec![(d, vec![Identity])],
        },
    ]
}

/// Outcome of checking relations on a family of test vectors.
#[derive(Clone, Debug, Default)]
pub struct RelationCheck {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl RelationCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks every relation on every basis word of length at most `depth` over
/// `labels` (which by linearity covers every test vector they span).
pub fn check_relations(
    space: &FockSpace,
    relations: &[Relation],
    labels: &[BasisLabel],
    depth: usize,
) -> Result<RelationCheck> {
    let words = basis_words(labels, depth);
    let mut report = RelationCheck::default();
    for rel in relations {
        for w in &words {
            let v = FockVector::basis(w.clone());
            let lhs = space.apply_sum(&rel.lhs, &v)?;
            let rhs = space.apply_sum(&rel.rhs, &v)?;
            report.checks += 1;
            if lhs != rhs && report.failures.len() < 20 {
                report.failures.push(format!("{} fails on {:?}", rel.name, w.as_slice()));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    const H: BasisLabel = BasisLabel::Plain(0);
    const G: BasisLabel = BasisLabel::Plain(1);

    fn labels(n: u32) -> Vec<BasisLabel> {
        (0..n).map(BasisLabel::Plain).collect()
    }

    fn qs() -> Vec<Rational> {
        vec![int(-1), ratio(-1, 2), int(0), ratio(1, 2), int(1)]
    }

    #[test]
    fn operator_examples() {
        let q = ratio(1, 3);
        let space = FockSpace::new(q.clone(), 4).unwrap();
        let v = space.apply(&FockOp::CreateLeft(H), &FockVector::vacuum()).unwrap();
        assert_eq!(v, FockVector::from_labels(&[H]));
        let hh = FockVector::from_labels(&[H, H]);
        let got = space.apply(&FockOp::AnnihilateLeft(H), &hh).unwrap();
        assert_eq!(got, FockVector::from_labels(&[H]).scaled(&(int(1) + &q)));
        let hg = FockVector::from_labels(&[H, G]);
        assert_eq!(space.apply(&FockOp::AnnihilateRight(G), &hg).unwrap(), FockVector::from_labels(&[H]));
        assert!(space.apply(&FockOp::AnnihilateLeft(H), &FockVector::vacuum()).unwrap().is_zero());
        let b = space.apply(&FockOp::CreateRight(G), &FockVector::from_labels(&[H])).unwrap();
        assert_eq!(b, hg);
    }

    #[test]
    fn depth_overflow_is_an_error() {
        let space = FockSpace::new(int(0), 1).unwrap();
        let err = space.apply_product(&[FockOp::CreateLeft(H), FockOp::CreateLeft(H)], &FockVector::vacuum());
        assert!(matches!(err, Err(Error::DepthOverflow { required: 2, cap: 1 })));
    }

    #[test]
    fn q_inner_examples() {
        let q = ratio(1, 5);
        assert_eq!(q_inner(&[H, G], &[H, G], &q).unwrap(), int(1));
        assert_eq!(q_inner(&[H, H], &[H, H], &q).unwrap(), int(1) + &q);
        assert_eq!(q_inner(&[H], &[H, H], &q).unwrap(), int(0));
        assert_eq!(q_inner(&[H, G], &[G, H], &q).unwrap(), q);
        let long = vec![H; 9];
        assert!(matches!(q_inner(&long, &long, &q), Err(Error::LengthGuard(9))));
    }

    #[test]
    fn vacuum_examples() {
        for q in qs() {
            use FockOp::*;
            assert_eq!(vacuum_expectation(&q, &[AnnihilateLeft(H), CreateLeft(H)]).unwrap(), int(1));
            // (a + a*)^4 expanded over all 16 operator words
            let mut total = int(0);
            for mask in 0..16u32 {
                let ops: Vec<FockOp> =
                    (0..4).map(|b| if mask >> b & 1 == 1 { CreateLeft(H) } else { AnnihilateLeft(H) }).collect();
                total += FockSpace::new(q.clone(), 4).unwrap().vacuum_expectation(&ops).unwrap();
            }
            assert_eq!(total, int(2) + &q);
        }
        let zero = int(0);
        assert_eq!(vacuum_expectation(&zero, &[FockOp::AnnihilateLeft(H), FockOp::CreateRight(H)]).unwrap(), int(1));
        assert_eq!(vacuum_expectation(&zero, &[FockOp::AnnihilateLeft(H), FockOp::CreateRight(G)]).unwrap(), int(0));
        assert_eq!(vacuum_expectation(&zero, &[FockOp::AnnihilateLeft(H)]).unwrap(), int(0));
    }

    #[test]
    fn free_relations_hold() {
        let ls = labels(3);
        let space = FockSpace::new(int(0), 5).unwrap();
        for &h1 in &ls {
            for &h2 in &ls {
                let r = check_relations(&space, &free_relations(h1, h2), &ls, 3).unwrap();
                assert!(r.passed(), "{:?}", r.failures);
            }
        }
    }

    #[test]
    fn q_relations_hold() {
        let ls = labels(3);
        for q in qs() {
            let space = FockSpace::new(q.clone(), 5).unwrap();
            for &h1 in &ls {
                for &h2 in &ls {
                    let r = check_relations(&space, &q_relations(&q, h1, h2), &ls, 3).unwrap();
                    assert!(r.passed(), "q={q}: {:?}", r.failures);
                }
            }
        }
    }

    #[test]
    fn broken_relation_is_reported() {
        let space = FockSpace::new(ratio(1, 2), 4).unwrap();
        // the q = 0 form of the left relation fails once q != 0
        let rel = &free_relations(H, H)[0];
        let r = check_relations(&space, std::slice::from_ref(rel), &[H], 2).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn serializes_for_debugging() {
        let v = FockVector::from_labels(&[H, G]).scaled(&ratio(1, 2));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"[{"word":["h0","h1"],"weight":"1/2"}]"#);
    }

    fn word_strategy() -> impl Strategy<Value = Vec<u32>> {
        prop::collection::vec(0u32..3, 0..=4)
    }

    fn to_labels(w: &[u32]) -> Vec<BasisLabel> {
        w.iter().map(|&x| BasisLabel::Plain(x)).collect()
    }

    proptest! {
        #[test]
        fn creation_is_adjoint_to_annihilation(u in word_strategy(), v in word_strategy(), h in 0u32..3, qi in 0usize..5, right in any::<bool>()) {
            let q = qs()[qi].clone();
            let space = FockSpace::new(q.clone(), 6).unwrap();
            let h = BasisLabel::Plain(h);
            let (c, a) = if right { (FockOp::CreateRight(h), FockOp::AnnihilateRight(h)) } else { (FockOp::CreateLeft(h), FockOp::AnnihilateLeft(h)) };
            let u = FockVector::from_labels(&to_labels(&u));
            let v = FockVector::from_labels(&to_labels(&v));
            let lhs = q_inner_vectors(&space.apply(&c, &u).unwrap(), &v, &q).unwrap();
            let rhs = q_inner_vectors(&u, &space.apply(&a, &v).unwrap(), &q).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn apply_is_linear(u in word_strategy(), v in word_strategy(), a in -5i64..5, b in -5i64..5, op in 0usize..4, h in 0u32..3) {
            let space = FockSpace::new(ratio(1, 2), 6).unwrap();
            let h = BasisLabel::Plain(h);
            let op = [FockOp::CreateLeft(h), FockOp::AnnihilateLeft(h), FockOp::CreateRight(h), FockOp::AnnihilateRight(h)][op];
            let u = FockVector::from_labels(&to_labels(&u));
            let v = FockVector::from_labels(&to_labels(&v));
            let mut combo = u.scaled(&int(a));
            combo.add_scaled(&v, &int(b));
            let mut expected = space.apply(&op, &u).unwrap().scaled(&int(a));
            expected.add_scaled(&space.apply(&op, &v).unwrap(), &int(b));
            prop_assert_eq!(space.apply(&op, &combo).unwrap(), expected);
        }

        #[test]
        fn surplus_annihilations_vanish(ops in prop::collection::vec((0usize..4, 0u32..2), 1..6)) {
            let ops: Vec<FockOp> = ops.into_iter().map(|(k, h)| {
                let h = BasisLabel::Plain(h);
                [FockOp::CreateLeft(h), FockOp::AnnihilateLeft(h), FockOp::CreateRight(h), FockOp::AnnihilateRight(h)][k]
            }).collect();
            let creations = creation_count(&ops);
            prop_assume!(ops.len() - creations > creations);
            prop_assert_eq!(vacuum_expectation(&ratio(1, 2), &ops).unwrap(), int(0));
        }
    }
}
