//! Set-partition combinatorics for bi-free probability.
//!
//! Positions are 1-based in every public signature (blocks, permutations and
//! subsets), matching the JSON form `[[1,4],[2,5],[3,6]]`. Internally a
//! partition is stored as its restricted growth string: `labels[k]` is the
//! index of the block containing element `k + 1`, with blocks numbered in
//! order of their least element. That string is the canonical form, so
//! derived equality, ordering and hashing are all canonical.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

use crate::{Error, Rational, Result};

/// Largest `n` accepted by [`enumerate_bnc`].
pub const ENUMERATION_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_char(self) -> char {
        match self {
            Side::Left => 'l',
            Side::Right => 'r',
        }
    }

    pub fn from_char(c: char) -> Option<Side> {
        match c {
            'l' | 'L' | 'ℓ' => Some(Side::Left),
            'r' | 'R' => Some(Side::Right),
            _ => None,
        }
    }
}

/// A left/right tag for each position of a word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChiMap {
    tags: Vec<Side>,
}

impl ChiMap {
    pub fn new(tags: Vec<Side>) -> Result<Self> {
        if tags.is_empty() {
            return Err(Error::InvalidChi("empty side map".into()));
        }
        Ok(ChiMap { tags })
    }

    /// Parses a string over `{l, r}` such as `"rllrrl"`.
    pub fn parse(s: &str) -> Result<Self> {
        let tags = s
            .trim()
            .chars()
            .map(|c| Side::from_char(c).ok_or_else(|| Error::InvalidChi(format!("bad tag {c:?} in {s:?}"))))
            .collect::<Result<Vec<_>>>()?;
        ChiMap::new(tags)
    }

    pub fn uniform(side: Side, n: usize) -> Result<Self> {
        ChiMap::new(vec![side; n])
    }

    /// Every side map of length `n`, in binary order with `l` < `r`.
    pub fn all_of_length(n: usize) -> impl Iterator<Item = ChiMap> {
        (0u64..(1u64 << n)).map(move |bits| ChiMap {
            tags: (0..n).map(|k| if bits >> (n - 1 - k) & 1 == 1 { Side::Right } else { Side::Left }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Side] {
        &self.tags
    }

    /// Side of the 1-based position `k`.
    pub fn side(&self, k: usize) -> Side {
        self.tags[k - 1]
    }

    pub fn count(&self, side: Side) -> usize {
        self.tags.iter().filter(|&&s| s == side).count()
    }

    /// `(s_chi(1), ..., s_chi(n))`: left positions increasing, then right
    /// positions decreasing.
    pub fn s_chi(&self) -> Vec<usize> {
        let n = self.len();
        let lefts = (1..=n).filter(|&k| self.side(k) == Side::Left);
        let rights = (1..=n).rev().filter(|&k| self.side(k) == Side::Right);
        lefts.chain(rights).collect()
    }

    /// Inverse of [`ChiMap::s_chi`], 1-based.
    pub fn s_chi_inverse(&self) -> Vec<usize> {
        let s = self.s_chi();
        let mut inv = vec![0; s.len()];
        for (k, &v) in s.iter().enumerate() {
            inv[v - 1] = k + 1;
        }
        inv
    }

    /// Restriction to the given increasing 1-based positions.
    pub fn restrict(&self, positions: &[usize]) -> Result<ChiMap> {
        ChiMap::new(positions.iter().map(|&k| self.side(k)).collect())
    }
}

impl fmt::Display for ChiMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.tags {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for ChiMap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ChiMap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ChiMap::parse(&s).map_err(serde::de::Error::custom)
    }
}

type Labels = SmallVec<[u8; 16]>;

/// A partition of `{1, ..., n}` in canonical form.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetPartition {
    labels: Labels,
}

impl SetPartition {
    /// Builds a partition from 1-based blocks, validating disjointness and
    /// coverage.
    pub fn from_blocks(n: usize, blocks: &[Vec<usize>]) -> Result<Self> {
        if n > u8::MAX as usize {
            return Err(Error::InvalidPartition(format!("n = {n} is too large")));
        }
        let mut owner = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            for &k in block {
                if k == 0 || k > n {
                    return Err(Error::InvalidPartition(format!("element {k} outside 1..={n}")));
                }
                if owner[k - 1] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("element {k} appears twice")));
                }
                owner[k - 1] = b;
            }
        }
        if let Some(k) = owner.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidPartition(format!("element {} is not covered", k + 1)));
        }
        Ok(SetPartition::from_coloring(&owner))
    }

    /// The partition whose blocks are the level sets of `colors`.
    pub fn from_coloring<T: PartialEq>(colors: &[T]) -> Self {
        assert!(colors.len() <= u8::MAX as usize, "partition too large");
        let mut seen: Vec<&T> = Vec::new();
        let labels = colors
            .iter()
            .map(|c| match seen.iter().position(|s| *s == c) {
                Some(i) => i as u8,
                None => {
                    seen.push(c);
                    (seen.len() - 1) as u8
                }
            })
            .collect();
        SetPartition { labels }
    }

    /// `0_n`, the partition into singletons.
    pub fn singletons(n: usize) -> Self {
        SetPartition { labels: (0..n).map(|k| k as u8).collect() }
    }

    /// `1_n`, the partition with one block.
    pub fn full(n: usize) -> Self {
        SetPartition { labels: std::iter::repeat_n(0u8, n).collect() }
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Restricted growth string: block index of each element.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn num_blocks(&self) -> usize {
        self.labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0)
    }

    /// Blocks as sorted 1-based vectors ordered by least element.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.num_blocks()];
        for (k, &l) in self.labels.iter().enumerate() {
            blocks[l as usize].push(k + 1);
        }
        blocks
    }

    pub fn same_block(&self, a: usize, b: usize) -> bool {
        self.labels[a - 1] == self.labels[b - 1]
    }

    /// Refinement order: every block of `self` lies inside a block of `other`.
    pub fn leq(&self, other: &SetPartition) -> bool {
        if self.n() != other.n() {
            return false;
        }
        let mut image = [u8::MAX; 256];
        for (&a, &b) in self.labels.iter().zip(other.labels.iter()) {
            let slot = &mut image[a as usize];
            if *slot == u8::MAX {
                *slot = b;
            } else if *slot != b {
                return false;
            }
        }
        true
    }

    pub fn is_pairing(&self) -> bool {
        let mut sizes = [0u8; 256];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes[..self.num_blocks()].iter().all(|&s| s == 2)
    }

    /// Image under the element map `k -> map[k - 1]` (1-based bijection).
    pub fn map_elements(&self, map: &[usize]) -> SetPartition {
        debug_assert_eq!(map.len(), self.n());
        let mut colors = vec![0u8; self.n()];
        for (k, &l) in self.labels.iter().enumerate() {
            colors[map[k] - 1] = l;
        }
        SetPartition::from_coloring(&colors)
    }

    /// True when no `a < b < c < d` has `a ~ c`, `b ~ d` and `a !~ b`.
    pub fn is_non_crossing(&self) -> bool {
        let n = self.n();
        let mut first = [usize::MAX; 256];
        let mut last = [0usize; 256];
        for (k, &l) in self.labels.iter().enumerate() {
            let l = l as usize;
            first[l] = first[l].min(k);
            last[l] = k;
        }
        // between consecutive elements of a block, every other block must be
        // nested strictly inside
        let mut prev = [usize::MAX; 256];
        for k in 0..n {
            let l = self.labels[k] as usize;
            let p = prev[l];
            if p != usize::MAX {
                for x in p + 1..k {
                    let m = self.labels[x] as usize;
                    if first[m] < p || last[m] > k {
                        return false;
                    }
                }
            }
            prev[l] = k;
        }
        true
    }

    /// Intersections with `subset` (increasing, 1-based), relabelled to
    /// `1..=|subset|` in order; empty intersections are dropped.
    pub fn restrict(&self, subset: &[usize]) -> SetPartition {
        let colors: Vec<u8> = subset.iter().map(|&k| self.labels[k - 1]).collect();
        SetPartition::from_coloring(&colors)
    }
}

impl fmt::Display for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.blocks().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{{")?;
            for (j, k) in b.iter().enumerate() {
                if j > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{k}")?;
            }
            write!(f, "}}")?;
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for SetPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for SetPartition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.blocks().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SetPartition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let blocks = Vec::<Vec<usize>>::deserialize(deserializer)?;
        let n = blocks.iter().map(Vec::len).sum();
        SetPartition::from_blocks(n, &blocks).map_err(serde::de::Error::custom)
    }
}

/// `s_chi(1), ..., s_chi(n)` as a 1-based vector.
pub fn s_chi(chi: &ChiMap) -> Vec<usize> {
    chi.s_chi()
}

fn check_len(pi: &SetPartition, chi: &ChiMap) -> Result<()> {
    if pi.n() != chi.len() {
        return Err(Error::LengthMismatch { expected: chi.len(), actual: pi.n() });
    }
    Ok(())
}

/// `pi` is bi-non-crossing for `chi` iff `s_chi^{-1} . pi` is non-crossing.
pub fn is_bi_non_crossing(pi: &SetPartition, chi: &ChiMap) -> Result<bool> {
    check_len(pi, chi)?;
    Ok(pi.map_elements(&chi.s_chi_inverse()).is_non_crossing())
}

/// Non-crossing partitions of `{1..n}` in lexicographic order of their
/// restricted growth strings, generated by nesting (never by filtering).
pub fn enumerate_nc(n: usize, pairs_only: bool) -> Vec<SetPartition> {
    let mut out = Vec::new();
    if pairs_only && n % 2 == 1 {
        return out;
    }
    let mut labels: Vec<u8> = Vec::with_capacity(n);
    let mut first: Vec<usize> = Vec::with_capacity(n);
    let mut last: Vec<usize> = Vec::with_capacity(n);
    let mut size: Vec<usize> = Vec::with_capacity(n);
    nc_extend(n, pairs_only, &mut labels, &mut first, &mut last, &mut size, &mut out);
    out
}

fn nc_extend(
    n: usize,
    pairs_only: bool,
    labels: &mut Vec<u8>,
    first: &mut Vec<usize>,
    last: &mut Vec<usize>,
    size: &mut Vec<usize>,
    out: &mut Vec<SetPartition>,
) {
    let i = labels.len();
    if i == n {
        if !pairs_only || size.iter().all(|&s| s == 2) {
            out.push(SetPartition { labels: labels.iter().copied().collect() });
        }
        return;
    }
    if pairs_only {
        let open = size.iter().filter(|&&s| s == 1).count();
        if open > n - i {
            return;
        }
    }
    // Block b may receive i iff every element strictly between last(b) and i
    // belongs to a block starting after last(b).
    let mut allowed: SmallVec<[usize; 16]> = SmallVec::new();
    let mut min_first = usize::MAX;
    for p in (0..i).rev() {
        let b = labels[p] as usize;
        if last[b] == p && min_first > p && (!pairs_only || size[b] < 2) {
            allowed.push(b);
        }
        min_first = min_first.min(first[b]);
    }
    allowed.sort_unstable();
    for b in allowed {
        let prev_last = last[b];
        labels.push(b as u8);
        last[b] = i;
        size[b] += 1;
        nc_extend(n, pairs_only, labels, first, last, size, out);
        size[b] -= 1;
        last[b] = prev_last;
        labels.pop();
    }
    let b = first.len();
    labels.push(b as u8);
    first.push(i);
    last.push(i);
    size.push(1);
    nc_extend(n, pairs_only, labels, first, last, size, out);
    size.pop();
    last.pop();
    first.pop();
    labels.pop();
}

/// All of `BNC(chi)` (or `BNC_2(chi)` with `pairs_only`) in canonical order:
/// non-crossing partitions pushed forward through `s_chi`, then sorted.
pub fn enumerate_bnc(chi: &ChiMap, pairs_only: bool) -> Result<Vec<SetPartition>> {
    let n = chi.len();
    if n > ENUMERATION_CAP {
        return Err(Error::CapExceeded { n, cap: ENUMERATION_CAP });
    }
    let s = chi.s_chi();
    let mut out: Vec<SetPartition> = enumerate_nc(n, pairs_only).iter().map(|p| p.map_elements(&s)).collect();
    out.sort_unstable();
    Ok(out)
}

/// `restrict` as a free function.
pub fn restrict(pi: &SetPartition, subset: &[usize]) -> SetPartition {
    pi.restrict(subset)
}

/// The lattice `BNC(chi)` with memoised Möbius rows.
pub struct BncLattice {
    chi: ChiMap,
    elements: Vec<SetPartition>,
    index: HashMap<SetPartition, usize>,
    rows: HashMap<usize, HashMap<usize, Rational>>,
    columns: HashMap<usize, Arc<[(usize, Rational)]>>,
}

impl BncLattice {
    pub fn new(chi: &ChiMap) -> Result<Self> {
        let elements = enumerate_bnc(chi, false)?;
        let index = elements.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect();
        Ok(BncLattice { chi: chi.clone(), elements, index, rows: HashMap::new(), columns: HashMap::new() })
    }

    pub fn chi(&self) -> &ChiMap {
        &self.chi
    }

    pub fn elements(&self) -> &[SetPartition] {
        &self.elements
    }

    pub fn index_of(&self, pi: &SetPartition) -> Option<usize> {
        self.index.get(pi).copied()
    }

    fn require(&self, pi: &SetPartition) -> Result<usize> {
        check_len(pi, &self.chi)?;
        self.index_of(pi).ok_or_else(|| Error::NotBiNonCrossing(pi.to_string()))
    }

    /// Solves `sum_{pi <= tau <= sigma} mu(pi, tau) = [pi = sigma]` for every
    /// `sigma >= pi` at once.
    fn row(&mut self, pi: usize) -> &HashMap<usize, Rational> {
        if !self.rows.contains_key(&pi) {
            let base = &self.elements[pi];
            let mut up: Vec<usize> = (0..self.elements.len()).filter(|&t| base.leq(&self.elements[t])).collect();
            up.sort_by_key(|&t| std::cmp::Reverse(self.elements[t].num_blocks()));
            let mut row: HashMap<usize, Rational> = HashMap::with_capacity(up.len());
            for (pos, &sigma) in up.iter().enumerate() {
                let value = if sigma == pi {
                    Rational::one()
                } else {
                    let target = &self.elements[sigma];
                    let mut acc = Rational::zero();
                    for &tau in &up[..pos] {
                        if self.elements[tau].leq(target) {
                            acc += &row[&tau];
                        }
                    }
                    -acc
                };
                row.insert(sigma, value);
            }
            self.rows.insert(pi, row);
        }
        &self.rows[&pi]
    }

    /// `mu_BNC(pi, sigma)`; zero unless `pi <= sigma`.
    pub fn mobius(&mut self, pi: &SetPartition, sigma: &SetPartition) -> Result<Rational> {
        let p = self.require(pi)?;
        let s = self.require(sigma)?;
        Ok(self.mobius_idx(p, s))
    }

    pub fn mobius_idx(&mut self, pi: usize, sigma: usize) -> Rational {
        self.row(pi).get(&sigma).cloned().unwrap_or_else(Rational::zero)
    }

    /// `mu_BNC(sigma, pi)` for every `sigma <= pi`, solved through the dual
    /// recursion `sum_{sigma <= tau <= pi} mu(tau, pi) = [sigma = pi]`.
    pub fn mobius_column(&mut self, pi: usize) -> Arc<[(usize, Rational)]> {
        if let Some(col) = self.columns.get(&pi) {
            return Arc::clone(col);
        }
        let top = &self.elements[pi];
        let mut down: Vec<usize> = (0..self.elements.len()).filter(|&t| self.elements[t].leq(top)).collect();
        down.sort_by_key(|&t| self.elements[t].num_blocks());
        let mut col: Vec<(usize, Rational)> = Vec::with_capacity(down.len());
        for &sigma in &down {
            let value = if sigma == pi {
                Rational::one()
            } else {
                let base = &self.elements[sigma];
                let mut acc = Rational::zero();
                for (tau, v) in &col {
                    if base.leq(&self.elements[*tau]) {
                        acc += v;
                    }
                }
                -acc
            };
            col.push((sigma, value));
        }
        let col: Arc<[(usize, Rational)]> = col.into();
        self.columns.insert(pi, Arc::clone(&col));
        col
    }

    /// `sum_{sigma in BNC(chi), pi <= sigma <= eps} mu_BNC(pi, sigma)` for an
    /// arbitrary (not necessarily bi-non-crossing) `eps`.
    pub fn interval_sum(&mut self, pi: usize, eps: &SetPartition) -> Rational {
        if !self.elements[pi].leq(eps) {
            return Rational::zero();
        }
        let row = self.row(pi).clone();
        row.iter().filter(|(s, _)| self.elements[**s].leq(eps)).map(|(_, v)| v).fold(Rational::zero(), |acc, v| acc + v)
    }
}

/// Memo of Möbius values, one lattice per side map.
///
/// The cache is owned by a single worker; share it behind a lock if needed.
#[derive(Default)]
pub struct MobiusCache {
    lattices: HashMap<ChiMap, BncLattice>,
}

impl MobiusCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn lattice(&mut self, chi: &ChiMap) -> Result<&mut BncLattice> {
        if !self.lattices.contains_key(chi) {
            let lattice = BncLattice::new(chi)?;
            self.lattices.insert(chi.clone(), lattice);
        }
        Ok(self.lattices.get_mut(chi).expect("inserted above"))
    }
}

/// The bi-non-crossing Möbius function, memoised in `cache`.
pub fn mobius_bnc(pi: &SetPartition, sigma: &SetPartition, chi: &ChiMap, cache: &mut MobiusCache) -> Result<Rational> {
    cache.lattice(chi)?.mobius(pi, sigma)
}

/// Every `sigma` in `BNC(chi)` with `pi <= sigma <= eps`.
pub fn interval_partitions(pi: &SetPartition, eps: &SetPartition, chi: &ChiMap) -> Result<Vec<SetPartition>> {
    check_len(pi, chi)?;
    check_len(eps, chi)?;
    Ok(enumerate_bnc(chi, false)?.into_iter().filter(|s| pi.leq(s) && s.leq(eps)).collect())
}
