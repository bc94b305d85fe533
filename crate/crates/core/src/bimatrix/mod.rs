//! Matrices of Fock operators acting on matrices of Fock vectors.
//!
//! A left matrix `L([T])` acts by `[η] ↦ [Σ_k T_{ik}(η_{kj})]` and a right
//! matrix `R([S])` by the twisted rule `[η] ↦ [Σ_k S_{kj}(η_{ik})]`. The
//! expectation `E(Z)` reads off vacuum weights of `Z · diag(Ω, ..., Ω)` and
//! `Φ = (1/N) Tr ∘ E`.
//!
//! Normalisations `N^{-1/2}` are never stored: each matrix carries a
//! half-power exponent and the product is applied once per word.

mod parse;

use std::collections::HashMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::fock::{BasisLabel, FockOp, FockSpace, FockVector};
use crate::partitions::{ChiMap, Side};
use crate::rational::Rational;
use crate::{Error, Result};

pub use parse::{parse_word, FactorSpec, MatrixRegistry};

/// A rational combination of operator products; an empty product is the
/// identity operator.
pub type OpExpr = Vec<(Rational, Vec<FockOp>)>;

/// Which entry pattern a Fock matrix uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Creator at `h^k_{i,j}`.
    Plain,
    /// Annihilator at `h^k_{j,i}`.
    Star,
    /// Creator at `h^k_{j,i}`.
    T,
    /// Annihilator at `h^k_{i,j}`.
    TStar,
}

impl Variant {
    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Plain => "",
            Variant::Star => "*",
            Variant::T => "t",
            Variant::TStar => "t*",
        }
    }

    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::Star, Variant::T, Variant::TStar];
}

/// An `N × N` matrix of operator expressions with its face.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    name: String,
    n: usize,
    side: Side,
    entries: Vec<Option<OpExpr>>,
    norm_exp: u32,
    q: Option<Rational>,
}

impl OperatorMatrix {
    /// The zero matrix.
    pub fn zeros(name: impl Into<String>, n: usize, side: Side) -> Self {
        OperatorMatrix { name: name.into(), n, side, entries: vec![None; n * n], norm_exp: 0, q: None }
    }

    /// A constant matrix: entry `(i, j)` is `values[i][j]` times the identity.
    pub fn scalar(name: impl Into<String>, side: Side, values: &[Vec<Rational>]) -> Result<Self> {
        let n = values.len();
        if n == 0 || values.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("constant matrix must be square and nonempty".into()));
        }
        let mut m = OperatorMatrix::zeros(name, n, side);
        for (i, row) in values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_zero() {
                    m.entries[i * n + j] = Some(vec![(v.clone(), Vec::new())]);
                }
            }
        }
        Ok(m)
    }

    pub fn with_q(mut self, q: Rational) -> Self {
        self.q = Some(q);
        self
    }

    pub fn with_norm_exp(mut self, h: u32) -> Self {
        self.norm_exp = h;
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// The same entries under the other action.
    pub fn with_side(mut self, side: Side) -> Self {
        self.side = side;
        self
    }

    /// Sets the 1-based entry `(i, j)`.
    pub fn set(&mut self, i: usize, j: usize, expr: OpExpr) {
        let expr: OpExpr = expr.into_iter().filter(|(c, _)| !c.is_zero()).collect();
        self.entries[(i - 1) * self.n + (j - 1)] = if expr.is_empty() { None } else { Some(expr) };
    }

    /// Sets the 1-based entry `(i, j)` to a single operator.
    pub fn set_op(&mut self, i: usize, j: usize, op: FockOp) {
        self.set(i, j, vec![(Rational::one(), vec![op])]);
    }

    /// The 1-based entry `(i, j)`, `None` when zero.
    pub fn entry(&self, i: usize, j: usize) -> Option<&OpExpr> {
        self.entries[(i - 1) * self.n + (j - 1)].as_ref()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn norm_exp(&self) -> u32 {
        self.norm_exp
    }

    pub fn q(&self) -> Option<&Rational> {
        self.q.as_ref()
    }

    /// True when every entry is a multiple of the identity.
    pub fn is_scalar(&self) -> bool {
        self.entries.iter().flatten().all(|e| e.iter().all(|(_, ops)| ops.is_empty()))
    }

    /// The scalar values, when [`OperatorMatrix::is_scalar`] holds.
    pub fn scalar_values(&self) -> Option<Vec<Vec<Rational>>> {
        if !self.is_scalar() {
            return None;
        }
        Some(
            (0..self.n)
                .map(|i| {
                    (0..self.n)
                        .map(|j| match &self.entries[i * self.n + j] {
                            Some(e) => e.iter().fold(Rational::zero(), |acc, (c, _)| acc + c),
                            None => Rational::zero(),
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Largest number of creation operators in a single term of any entry.
    pub fn max_creations(&self) -> usize {
        self.terms().map(|(_, ops)| crate::fock::creation_count(ops)).max().unwrap_or(0)
    }

    /// Largest number of annihilators or projections in a single term.
    pub fn max_lowering(&self) -> usize {
        self.terms().map(|(_, ops)| ops.iter().filter(|o| !o.is_creation()).count()).max().unwrap_or(0)
    }

    fn terms(&self) -> impl Iterator<Item = &(Rational, Vec<FockOp>)> {
        self.entries.iter().flatten().flatten()
    }
}

/// The orthonormal label `h^k_{i,j}`.
pub fn entry_label(i: usize, j: usize, k: usize) -> BasisLabel {
    BasisLabel::Entry { i: i as u16, j: j as u16, k: k as u16 }
}

fn creator(side: Side, h: BasisLabel) -> FockOp {
    match side {
        Side::Left => FockOp::CreateLeft(h),
        Side::Right => FockOp::CreateRight(h),
    }
}

fn annihilator(side: Side, h: BasisLabel) -> FockOp {
    match side {
        Side::Left => FockOp::AnnihilateLeft(h),
        Side::Right => FockOp::AnnihilateRight(h),
    }
}

/// `N^{-1/2} Z^θ([z(h^k_{i,j})])` and its three siblings; at `q = 0` these
/// are `L_k, L*_k, R_k, R*_k`.
pub fn build_fock_matrix(side: Side, variant: Variant, k: usize, n: usize, q: &Rational) -> Result<OperatorMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    let face = match side {
        Side::Left => 'L',
        Side::Right => 'R',
    };
    let mut m =
        OperatorMatrix::zeros(format!("{face}{k}{}", variant.suffix()), n, side).with_q(q.clone()).with_norm_exp(1);
    for i in 1..=n {
        for j in 1..=n {
            let op = match variant {
                Variant::Plain => creator(side, entry_label(i, j, k)),
                Variant::Star => annihilator(side, entry_label(j, i, k)),
                Variant::T => creator(side, entry_label(j, i, k)),
                Variant::TStar => annihilator(side, entry_label(i, j, k)),
            };
            m.set_op(i, j, op);
        }
    }
    Ok(m)
}

/// A matrix of Fock vectors, an element of `X_N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatrixState {
    n: usize,
    cells: Vec<FockVector>,
}

impl MatrixState {
    pub fn zeros(n: usize) -> Self {
        MatrixState { n, cells: vec![FockVector::zero(); n * n] }
    }

    /// `I_{N,Ω} = diag(Ω, ..., Ω)`.
    pub fn identity_vacuum(n: usize) -> Self {
        let mut s = MatrixState::zeros(n);
        for i in 0..n {
            s.cells[i * n + i] = FockVector::vacuum();
        }
        s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The 1-based cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> &FockVector {
        &self.cells[(i - 1) * self.n + (j - 1)]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut FockVector {
        &mut self.cells[(i - 1) * self.n + (j - 1)]
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().all(FockVector::is_zero)
    }

    /// Shortest word length present in any cell (`None` for the zero state).
    pub fn min_depth(&self) -> Option<usize> {
        self.cells.iter().flat_map(|c| c.iter().map(|(w, _)| w.len())).min()
    }

    /// `p_{X_N}`: the matrix of vacuum weights.
    pub fn vacuum_weights(&self) -> Vec<Vec<Rational>> {
        (1..=self.n).map(|i| (1..=self.n).map(|j| self.cell(i, j).vacuum_weight()).collect()).collect()
    }

    pub fn trace_vacuum(&self) -> Rational {
        (1..=self.n).fold(Rational::zero(), |acc, i| acc + self.cell(i, i).vacuum_weight())
    }

    pub fn add_scaled(&mut self, other: &MatrixState, c: &Rational) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.add_scaled(b, c);
        }
    }
}

/// A letter of a bi-matrix word.
#[derive(Clone, Copy, Debug)]
pub enum Factor<'a> {
    Matrix(&'a OperatorMatrix),
    /// `P_0([ξ]) = (1/N) diag(P_Ω Tr[ξ], ..., P_Ω Tr[ξ])`.
    P0,
}

impl Factor<'_> {
    fn norm_exp(&self) -> u32 {
        match self {
            Factor::Matrix(m) => m.norm_exp,
            Factor::P0 => 0,
        }
    }
}

/// What [`word_moment`] returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stat {
    /// `(1/N) Tr ∘ E`.
    Trace,
    /// The full matrix `E`.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MomentValue {
    Trace(Rational),
    Full(Vec<Vec<Rational>>),
}

fn apply_expr_term(space: &FockSpace, expr: &OpExpr, input: &FockVector, out: &mut FockVector) -> Result<()> {
    for (c, ops) in expr {
        match ops.as_slice() {
            [] => out.add_scaled(input, c),
            [op] => {
                for (w, x) in input.iter() {
                    space.apply_term(op, w, &(x * c), out)?;
                }
            }
            _ => out.add_scaled(&space.apply_product(ops, input)?, c),
        }
    }
    Ok(())
}

/// `N^{-h/2}` as an exact rational; `h` must be even.
pub fn normalisation(n: usize, h: u32) -> Rational {
    Rational::new(BigInt::one(), num_traits::pow(BigInt::from(n), (h / 2) as usize))
}

/// Evaluation context: matrix size and the Fock space all entries act on.
#[derive(Clone, Debug)]
pub struct Bimatrix {
    n: usize,
    space: FockSpace,
}

impl Bimatrix {
    pub fn new(n: usize, q: Rational, depth_cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        Ok(Bimatrix { n, space: FockSpace::new(q, depth_cap)? })
    }

    /// A context sized for `word`: q from its Fock matrices (0 if none) and
    /// depth cap equal to its total creation count.
    pub fn for_word(n: usize, word: &[Factor]) -> Result<Self> {
        let q = common_q(word)?.unwrap_or_else(Rational::zero);
        let cap = word
            .iter()
            .map(|f| match f {
                Factor::Matrix(m) => m.max_creations(),
                Factor::P0 => 0,
            })
            .sum();
        Bimatrix::new(n, q, cap)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    fn check(&self, m: &OperatorMatrix) -> Result<()> {
        if m.n != self.n {
            return Err(Error::DimensionMismatch(format!("{} is {}x{}, expected N = {}", m.name, m.n, m.n, self.n)));
        }
        if let Some(q) = &m.q {
            if q != self.space.q() {
                return Err(Error::QMismatch(format!("{} has q = {q}, context has q = {}", m.name, self.space.q())));
            }
        }
        Ok(())
    }

    /// `L([T])` or `R([S])` applied to a state, per the matrix's side.
    pub fn act(&self, m: &OperatorMatrix, state: &MatrixState) -> Result<MatrixState> {
        self.check(m)?;
        if state.n != self.n {
            return Err(Error::DimensionMismatch(format!("state is {0}x{0}, expected N = {1}", state.n, self.n)));
        }
        let n = self.n;
        let mut out = MatrixState::zeros(n);
        for a in 0..n {
            for b in 0..n {
                let Some(expr) = &m.entries[a * n + b] else { continue };
                match m.side {
                    // T_{ab} maps η_{bj} into cell (a, j)
                    Side::Left => {
                        for j in 0..n {
                            let input = &state.cells[b * n + j];
                            if !input.is_zero() {
                                apply_expr_term(&self.space, expr, input, &mut out.cells[a * n + j])?;
                            }
                        }
                    }
                    // S_{ab} maps η_{ia} into cell (i, b)
                    Side::Right => {
                        for i in 0..n {
                            let input = &state.cells[i * n + a];
                            if !input.is_zero() {
                                apply_expr_term(&self.space, expr, input, &mut out.cells[i * n + b])?;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `P_0` applied to a state.
    pub fn p0(&self, state: &MatrixState) -> MatrixState {
        let avg = state.trace_vacuum() / Rational::from_integer(BigInt::from(self.n));
        let mut out = MatrixState::zeros(self.n);
        if !avg.is_zero() {
            for i in 1..=self.n {
                out.cell_mut(i, i).add_term(Default::default(), avg.clone());
            }
        }
        out
    }

    pub fn apply_factor(&self, f: &Factor, state: &MatrixState) -> Result<MatrixState> {
        match f {
            Factor::Matrix(m) => self.act(m, state),
            Factor::P0 => Ok(self.p0(state)),
        }
    }

    /// Applies `word[0] ... word[m-1]` (last factor first) to `state`, raw
    /// (without normalisation).
    pub fn apply_word(&self, word: &[Factor], state: &MatrixState) -> Result<MatrixState> {
        let mut cur = state.clone();
        for f in word.iter().rev() {
            if cur.is_zero() {
                break;
            }
            cur = self.apply_factor(f, &cur)?;
        }
        Ok(cur)
    }

    /// Applies `sum_t c_t word_t` with each term's own `N^{-h/2}`.
    pub fn apply_expr(&self, expr: &[(Rational, Vec<Factor>)], state: &MatrixState) -> Result<MatrixState> {
        let mut out = MatrixState::zeros(self.n);
        for (c, word) in expr {
            let raw = self.apply_word(word, state)?;
            let h: u32 = word.iter().map(Factor::norm_exp).sum();
            if raw.is_zero() {
                continue;
            }
            if h % 2 == 1 {
                return Err(Error::OddNormalisation(h));
            }
            out.add_scaled(&raw, &(c * normalisation(self.n, h)));
        }
        Ok(out)
    }

    /// `E(word)` as a normalised scalar matrix.
    pub fn expectation(&self, word: &[Factor]) -> Result<Vec<Vec<Rational>>> {
        let raw = self.apply_word(word, &MatrixState::identity_vacuum(self.n))?.vacuum_weights();
        let h: u32 = word.iter().map(Factor::norm_exp).sum();
        scale_normalised(raw, self.n, h)
    }

    /// `Φ(word) = (1/N) Tr E(word)`.
    pub fn trace_moment(&self, word: &[Factor]) -> Result<Rational> {
        let raw = self.apply_word(word, &MatrixState::identity_vacuum(self.n))?.trace_vacuum();
        let h: u32 = word.iter().map(Factor::norm_exp).sum();
        if raw.is_zero() {
            return Ok(raw);
        }
        if h % 2 == 1 {
            return Err(Error::OddNormalisation(h));
        }
        Ok(raw * normalisation(self.n, h) / Rational::from_integer(BigInt::from(self.n)))
    }

    /// `Φ` of every word of length `1..=max_len` over `alphabet`, keyed by
    /// letter indices (leftmost first); words whose value is zero are
    /// omitted. Suffix states are shared, and branches that can no longer
    /// return to the vacuum are cut.
    pub fn exhaustive_trace_moments(
        &self,
        alphabet: &[Factor],
        max_len: usize,
    ) -> Result<HashMap<Vec<usize>, Rational>> {
        for f in alphabet {
            if let Factor::Matrix(m) = f {
                self.check(m)?;
            }
        }
        let lowering: Option<usize> = alphabet
            .iter()
            .map(|f| match f {
                Factor::Matrix(m) => Some(m.max_lowering()),
                Factor::P0 => None,
            })
            .try_fold(0usize, |acc, x| x.map(|x| acc.max(x)));
        let mut out = HashMap::new();
        let mut suffix = Vec::new();
        self.dfs(alphabet, max_len, lowering, &MatrixState::identity_vacuum(self.n), 0, &mut suffix, &mut out)?;
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        alphabet: &[Factor],
        max_len: usize,
        lowering: Option<usize>,
        state: &MatrixState,
        h: u32,
        suffix: &mut Vec<usize>,
        out: &mut HashMap<Vec<usize>, Rational>,
    ) -> Result<()> {
        if suffix.len() == max_len {
            return Ok(());
        }
        for (idx, f) in alphabet.iter().enumerate() {
            let next = self.apply_factor(f, state)?;
            if next.is_zero() {
                continue;
            }
            let h_next = h + f.norm_exp();
            suffix.push(idx);
            let tr = next.trace_vacuum();
            if !tr.is_zero() {
                if h_next % 2 == 1 {
                    return Err(Error::OddNormalisation(h_next));
                }
                let v = tr * normalisation(self.n, h_next) / Rational::from_integer(BigInt::from(self.n));
                let mut key = suffix.clone();
                key.reverse();
                out.insert(key, v);
            }
            let remaining = max_len - suffix.len();
            let reachable = match (lowering, next.min_depth()) {
                (_, None) => false,
                (None, Some(_)) => true,
                (Some(low), Some(d)) => d <= remaining * low,
            };
            if remaining > 0 && reachable {
                self.dfs(alphabet, max_len, lowering, &next, h_next, suffix, out)?;
            }
            suffix.pop();
        }
        Ok(())
    }
}

fn scale_normalised(raw: Vec<Vec<Rational>>, n: usize, h: u32) -> Result<Vec<Vec<Rational>>> {
    let nonzero = raw.iter().flatten().any(|v| !v.is_zero());
    if !nonzero {
        return Ok(raw);
    }
    if h % 2 == 1 {
        return Err(Error::OddNormalisation(h));
    }
    let s = normalisation(n, h);
    Ok(raw.into_iter().map(|r| r.into_iter().map(|v| v * &s).collect()).collect())
}

/// The shared `q` of the Fock matrices in a word (`None` if it has none).
pub fn common_q(word: &[Factor]) -> Result<Option<Rational>> {
    let mut q: Option<&Rational> = None;
    for f in word {
        if let Factor::Matrix(m) = f {
            if let Some(mq) = &m.q {
                match q {
                    Some(prev) if prev != mq => {
                        return Err(Error::QMismatch(format!("{prev} vs {mq} in {}", m.name)));
                    }
                    _ => q = Some(mq),
                }
            }
        }
    }
    Ok(q.cloned())
}

/// Evaluates a word applied to `I_{N,Ω}`: the full expectation matrix or the
/// normalised trace. `N` is taken from the matrices in the word.
pub fn word_moment(word: &[Factor], stat: Stat) -> Result<MomentValue> {
    let n = word
        .iter()
        .find_map(|f| match f {
            Factor::Matrix(m) => Some(m.n),
            Factor::P0 => None,
        })
        .ok_or_else(|| Error::InvalidArgument("word must contain at least one matrix".into()))?;
    let ctx = Bimatrix::for_word(n, word)?;
    Ok(match stat {
        Stat::Trace => MomentValue::Trace(ctx.trace_moment(word)?),
        Stat::Full => MomentValue::Full(ctx.expectation(word)?),
    })
}

/// `E_{i_{s(1)}, j_{s(1)}} ⋯ E_{i_{s(n)}, j_{s(n)}}` with `s = s_chi`, indices
/// 1-based.
pub fn matrix_unit_word(chi: &ChiMap, i: &[usize], j: &[usize], n: usize) -> Result<Vec<Vec<u8>>> {
    if i.len() != chi.len() || j.len() != chi.len() {
        return Err(Error::LengthMismatch { expected: chi.len(), actual: i.len().min(j.len()) });
    }
    if i.iter().chain(j).any(|&x| x == 0 || x > n) {
        return Err(Error::InvalidArgument(format!("matrix-unit index outside 1..={n}")));
    }
    let order = chi.s_chi();
    // a product of matrix units is either zero or a single unit E_{a,b}
    let mut unit = Some((i[order[0] - 1], j[order[0] - 1]));
    for &p in &order[1..] {
        unit = match unit {
            Some((a, b)) if b == i[p - 1] => Some((a, j[p - 1])),
            _ => None,
        };
    }
    let mut m = vec![vec![0u8; n]; n];
    if let Some((a, b)) = unit {
        m[a - 1][b - 1] = 1;
    }
    Ok(m)
}

/// `T_k(N)` (left, superdiagonal `l*(h_k), l(h_k), l*(h_k), ...`) and
/// `R(S(N))` with `S(N) = Σ_{j=2}^N E_{j,j-1}`.
pub fn build_boolean_matrices(k: usize, n: usize) -> Result<(OperatorMatrix, OperatorMatrix)> {
    if n < 2 {
        return Err(Error::InvalidArgument("Boolean model needs N >= 2".into()));
    }
    let h = boolean_label(k);
    let mut t = OperatorMatrix::zeros(format!("T{k}"), n, Side::Left).with_q(Rational::zero());
    for i in 1..n {
        let op = if i % 2 == 1 { FockOp::AnnihilateLeft(h) } else { FockOp::CreateLeft(h) };
        t.set_op(i, i + 1, op);
    }
    let mut shift = vec![vec![Rational::zero(); n]; n];
    for j in 2..=n {
        shift[j - 1][j - 2] = Rational::one();
    }
    let s = OperatorMatrix::scalar("S", Side::Right, &shift)?;
    Ok((t, s))
}

/// The per-colour vector `h_{1,k}` of the Boolean model.
pub fn boolean_label(k: usize) -> BasisLabel {
    BasisLabel::Plain(k as u32)
}

/// The label `h_x` of the monotone model (`h_0` drives `T_1`).
pub fn monotone_label(x: usize) -> BasisLabel {
    BasisLabel::Plain(x as u32)
}

fn semicircular(h: BasisLabel) -> OpExpr {
    vec![(Rational::one(), vec![FockOp::CreateLeft(h)]), (Rational::one(), vec![FockOp::AnnihilateLeft(h)])]
}

/// `T_1 = L(Σ_j s(h_0) ⊗ E_{j+1,j})`, `S_1 = R(Σ_j E_{j,j+1})` and
/// `T_2 = L(diag(s(h_1), ..., s(h_N)))` with `s(h) = l(h) + l*(h)`.
pub fn build_monotone_matrices(n: usize) -> Result<(OperatorMatrix, OperatorMatrix, OperatorMatrix)> {
    if n < 2 {
        return Err(Error::InvalidArgument("monotone model needs N >= 2".into()));
    }
    let mut t1 = OperatorMatrix::zeros("T1", n, Side::Left).with_q(Rational::zero());
    for j in 1..n {
        t1.set(j + 1, j, semicircular(monotone_label(0)));
    }
    let mut shift = vec![vec![Rational::zero(); n]; n];
    for j in 1..n {
        shift[j - 1][j] = Rational::one();
    }
    let s1 = OperatorMatrix::scalar("S1", Side::Right, &shift)?;
    let mut t2 = OperatorMatrix::zeros("T2", n, Side::Left).with_q(Rational::zero());
    for x in 1..=n {
        t2.set(x, x, semicircular(monotone_label(x)));
    }
    Ok((t1, s1, t2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::vacuum_expectation;
    use crate::rational::{int, ratio};
    use proptest::prelude::*;

    fn zero() -> Rational {
        int(0)
    }

    fn fock_set(n: usize, k: usize) -> Vec<OperatorMatrix> {
        let mut out = Vec::new();
        for side in [Side::Left, Side::Right] {
            for v in [Variant::Plain, Variant::Star] {
                out.push(build_fock_matrix(side, v, k, n, &zero()).unwrap());
            }
        }
        out
    }

    #[test]
    fn fock_matrix_entries() {
        let m = build_fock_matrix(Side::Left, Variant::Star, 1, 3, &zero()).unwrap();
        assert_eq!(m.entry(1, 2), Some(&vec![(int(1), vec![FockOp::AnnihilateLeft(entry_label(2, 1, 1))])]));
        let m = build_fock_matrix(Side::Right, Variant::Plain, 2, 3, &zero()).unwrap();
        assert_eq!(m.entry(3, 1), Some(&vec![(int(1), vec![FockOp::CreateRight(entry_label(3, 1, 2))])]));
        let m = build_fock_matrix(Side::Left, Variant::T, 1, 3, &zero()).unwrap();
        assert_eq!(m.entry(1, 2), Some(&vec![(int(1), vec![FockOp::CreateLeft(entry_label(2, 1, 1))])]));
        assert_eq!(m.norm_exp(), 1);
        assert_eq!(m.name(), "L1t");
    }

    #[test]
    fn scalar_left_action_on_identity() {
        let a = vec![vec![int(1), int(2)], vec![int(3), int(4)]];
        let ctx = Bimatrix::new(2, zero(), 0).unwrap();
        let la = OperatorMatrix::scalar("a", Side::Left, &a).unwrap();
        let out = ctx.act(&la, &MatrixState::identity_vacuum(2)).unwrap();
        assert_eq!(out.vacuum_weights(), a);
        let ra = la.clone().with_side(Side::Right);
        assert_eq!(ctx.act(&ra, &MatrixState::identity_vacuum(2)).unwrap(), out);
    }

    #[test]
    fn left_and_right_agree_on_identity() {
        let ctx = Bimatrix::new(3, ratio(1, 2), 1).unwrap();
        for v in Variant::ALL {
            let l = build_fock_matrix(Side::Left, v, 1, 3, &ratio(1, 2)).unwrap();
            let r = l.clone().with_side(Side::Right);
            let id = MatrixState::identity_vacuum(3);
            assert_eq!(ctx.act(&l, &id).unwrap(), ctx.act(&r, &id).unwrap());
        }
    }

    #[test]
    fn fock_matrix_identities_at_small_n() {
        for n in 1..=3 {
            let lk = build_fock_matrix(Side::Left, Variant::Plain, 1, n, &zero()).unwrap();
            let ls = build_fock_matrix(Side::Left, Variant::Star, 1, n, &zero()).unwrap();
            let v = word_moment(&[Factor::Matrix(&ls), Factor::Matrix(&lk)], Stat::Trace).unwrap();
            assert_eq!(v, MomentValue::Trace(int(1)));
        }
    }

    #[test]
    fn mismatches_are_errors() {
        let a = build_fock_matrix(Side::Left, Variant::Plain, 1, 2, &zero()).unwrap();
        let b = build_fock_matrix(Side::Left, Variant::Star, 1, 2, &ratio(1, 2)).unwrap();
        assert!(matches!(
            word_moment(&[Factor::Matrix(&b), Factor::Matrix(&a)], Stat::Trace),
            Err(Error::QMismatch(_))
        ));
        let c = build_fock_matrix(Side::Left, Variant::Star, 1, 3, &zero()).unwrap();
        assert!(matches!(
            word_moment(&[Factor::Matrix(&c), Factor::Matrix(&a)], Stat::Trace),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn odd_normalisation_is_detected() {
        // a constant matrix wrongly tagged with h = 1
        let odd = OperatorMatrix::scalar("odd", Side::Left, &[vec![int(1)]]).unwrap().with_norm_exp(1);
        assert!(matches!(word_moment(&[Factor::Matrix(&odd)], Stat::Trace), Err(Error::OddNormalisation(1))));
    }

    #[test]
    fn degenerate_n_one_is_plain_composition() {
        let q = ratio(1, 3);
        let ms: Vec<OperatorMatrix> = [Side::Left, Side::Right]
            .iter()
            .flat_map(|&s| Variant::ALL.map(|v| build_fock_matrix(s, v, 1, 1, &q).unwrap()))
            .collect();
        let ctx = Bimatrix::new(1, q.clone(), 4).unwrap();
        for a in &ms {
            for b in &ms {
                for c in &ms {
                    for d in &ms {
                        let word = [Factor::Matrix(a), Factor::Matrix(b), Factor::Matrix(c), Factor::Matrix(d)];
                        let ops: Vec<FockOp> = [a, b, c, d].iter().map(|m| m.entry(1, 1).unwrap()[0].1[0]).collect();
                        assert_eq!(ctx.trace_moment(&word).unwrap(), vacuum_expectation(&q, &ops).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn p0_properties() {
        let n = 3;
        let ctx = Bimatrix::new(n, zero(), 4).unwrap();
        let ms = fock_set(n, 1);
        let states: Vec<MatrixState> = ms
            .iter()
            .flat_map(|a| ms.iter().map(move |b| (a, b)))
            .map(|(a, b)| {
                ctx.apply_word(&[Factor::Matrix(a), Factor::Matrix(b)], &MatrixState::identity_vacuum(n)).unwrap()
            })
            .collect();
        for s in &states {
            let once = ctx.p0(s);
            assert_eq!(ctx.p0(&once), once);
        }
    }

    #[test]
    fn matrix_unit_examples() {
        let lr = ChiMap::parse("lr").unwrap();
        assert_eq!(matrix_unit_word(&lr, &[1, 2], &[2, 1], 2).unwrap(), vec![vec![1, 0], vec![0, 0]]);
        assert_eq!(matrix_unit_word(&lr, &[1, 1], &[2, 1], 2).unwrap(), vec![vec![0, 0], vec![0, 0]]);
        let rl = ChiMap::parse("rl").unwrap();
        // s_chi = (2, 1): E_{i2,j2} E_{i1,j1}
        assert_eq!(matrix_unit_word(&rl, &[1, 2], &[2, 1], 2).unwrap(), vec![vec![0, 0], vec![0, 1]]);
    }

    #[test]
    fn boolean_matrix_shape() {
        let (t, s) = build_boolean_matrices(1, 3).unwrap();
        assert_eq!(t.entry(1, 2), Some(&vec![(int(1), vec![FockOp::AnnihilateLeft(boolean_label(1))])]));
        assert_eq!(t.entry(2, 3), Some(&vec![(int(1), vec![FockOp::CreateLeft(boolean_label(1))])]));
        assert_eq!(t.entry(2, 1), None);
        assert_eq!(
            s.scalar_values().unwrap(),
            vec![vec![int(0), int(0), int(0)], vec![int(1), int(0), int(0)], vec![int(0), int(1), int(0)]]
        );
    }

    #[test]
    fn monotone_diagonal_rules() {
        let n = 4;
        let (t1, s1, t2) = build_monotone_matrices(n).unwrap();
        let ctx = Bimatrix::new(n, zero(), 6).unwrap();
        // a diagonal state of distinct basis vectors
        let mut diag = MatrixState::zeros(n);
        for x in 1..=n {
            diag.cell_mut(x, x).add_term(std::iter::once(BasisLabel::Plain(100 + x as u32)).collect(), int(1));
        }
        let shifted = ctx.apply_word(&[Factor::Matrix(&t1), Factor::Matrix(&s1)], &diag).unwrap();
        let space = ctx.space();
        let s_h0 = semicircular(monotone_label(0));
        for i in 1..=n {
            for j in 1..=n {
                let expected = if i == j && i > 1 {
                    space.apply_sum(&s_h0, diag.cell(i - 1, i - 1)).unwrap()
                } else {
                    FockVector::zero()
                };
                assert_eq!(shifted.cell(i, j), &expected, "cell {i},{j}");
            }
        }
        let squared = ctx.apply_word(&[Factor::Matrix(&t2), Factor::Matrix(&t2)], &diag).unwrap();
        for x in 1..=n {
            let s = semicircular(monotone_label(x));
            let once = space.apply_sum(&s, diag.cell(x, x)).unwrap();
            assert_eq!(squared.cell(x, x), &space.apply_sum(&s, &once).unwrap());
        }
    }

    #[test]
    fn exhaustive_matches_direct() {
        let n = 2;
        let ms = fock_set(n, 1);
        let alphabet: Vec<Factor> = ms.iter().map(Factor::Matrix).collect();
        let ctx = Bimatrix::new(n, zero(), 4).unwrap();
        let table = ctx.exhaustive_trace_moments(&alphabet, 4).unwrap();
        for len in 1..=4usize {
            for code in 0..4usize.pow(len as u32) {
                let idx: Vec<usize> = (0..len).map(|p| code / 4usize.pow(p as u32) % 4).collect();
                let word: Vec<Factor> = idx.iter().map(|&i| alphabet[i]).collect();
                let direct = ctx.trace_moment(&word).unwrap();
                assert_eq!(table.get(&idx).cloned().unwrap_or_else(zero), direct, "{idx:?}");
            }
        }
    }

    fn rational_matrix(n: usize) -> impl Strategy<Value = Vec<Vec<Rational>>> {
        prop::collection::vec(prop::collection::vec(-3i64..=3, n), n)
            .prop_map(|rows| rows.into_iter().map(|r| r.into_iter().map(int).collect()).collect())
    }

    fn matmul(a: &[Vec<Rational>], b: &[Vec<Rational>]) -> Vec<Vec<Rational>> {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| (0..n).fold(zero(), |acc, k| acc + &a[i][k] * &b[k][j])).collect()).collect()
    }

    proptest! {
        #[test]
        fn left_is_homomorphism_right_is_anti(a in rational_matrix(3), b in rational_matrix(3)) {
            let ctx = Bimatrix::new(3, zero(), 0).unwrap();
            let id = MatrixState::identity_vacuum(3);
            let la = OperatorMatrix::scalar("a", Side::Left, &a).unwrap();
            let lb = OperatorMatrix::scalar("b", Side::Left, &b).unwrap();
            let lab = OperatorMatrix::scalar("ab", Side::Left, &matmul(&a, &b)).unwrap();
            let composed = ctx.apply_word(&[Factor::Matrix(&la), Factor::Matrix(&lb)], &id).unwrap();
            prop_assert_eq!(composed, ctx.act(&lab, &id).unwrap());
            // R(A) R(B) acts as right multiplication by B then A: η ↦ η B A
            let ra = la.clone().with_side(Side::Right);
            let rb = lb.clone().with_side(Side::Right);
            let rba = OperatorMatrix::scalar("ba", Side::Right, &matmul(&b, &a)).unwrap();
            let composed = ctx.apply_word(&[Factor::Matrix(&ra), Factor::Matrix(&rb)], &id).unwrap();
            prop_assert_eq!(composed.vacuum_weights(), matmul(&b, &a));
            prop_assert_eq!(composed, ctx.act(&rba, &id).unwrap());
            // scalar left and right matrices commute
            let lr = ctx.apply_word(&[Factor::Matrix(&la), Factor::Matrix(&rb)], &id).unwrap();
            let rl = ctx.apply_word(&[Factor::Matrix(&rb), Factor::Matrix(&la)], &id).unwrap();
            prop_assert_eq!(lr.vacuum_weights(), matmul(&a, &b));
            prop_assert_eq!(lr, rl);
        }

        #[test]
        fn commutative_fast_path_agrees(ms in prop::collection::vec((rational_matrix(2), any::<bool>()), 1..5)) {
            let mats: Vec<OperatorMatrix> = ms.iter().enumerate().map(|(i, (v, right))| {
                let side = if *right { Side::Right } else { Side::Left };
                OperatorMatrix::scalar(format!("m{i}"), side, v).unwrap()
            }).collect();
            let word: Vec<Factor> = mats.iter().map(Factor::Matrix).collect();
            let ctx = Bimatrix::new(2, zero(), 0).unwrap();
            let direct = ctx.trace_moment(&word).unwrap();
            let id = vec![vec![int(1), int(0)], vec![int(0), int(1)]];
            let mut left = id.clone();
            let mut right = id;
            for m in &mats {
                let v = m.scalar_values().unwrap();
                match m.side() {
                    Side::Left => left = matmul(&left, &v),
                    Side::Right => right = matmul(&v, &right),
                }
            }
            let prod = matmul(&left, &right);
            let fast = (prod[0][0].clone() + prod[1][1].clone()) / int(2);
            prop_assert_eq!(direct, fast);
        }

        #[test]
        fn expansion_into_matrix_units(
            letters in prop::collection::vec((any::<bool>(), 0usize..4, 1usize..=3, 1usize..=3), 1..=4),
        ) {
            let n = 3;
            let q = ratio(1, 2);
            let ops: Vec<FockOp> = letters.iter().enumerate().map(|(p, &(right, kind, _, _))| {
                let h = BasisLabel::Plain((p % 2) as u32);
                let side = if right { Side::Right } else { Side::Left };
                if kind % 2 == 0 { creator(side, h) } else { annihilator(side, h) }
            }).collect();
            let mats: Vec<OperatorMatrix> = letters.iter().zip(&ops).enumerate().map(|(p, (&(right, _, i, j), op))| {
                let side = if right { Side::Right } else { Side::Left };
                let mut m = OperatorMatrix::zeros(format!("z{p}"), n, side).with_q(q.clone());
                m.set_op(i, j, *op);
                m
            }).collect();
            let chi = ChiMap::new(mats.iter().map(|m| m.side()).collect()).unwrap();
            let is: Vec<usize> = letters.iter().map(|l| l.2).collect();
            let js: Vec<usize> = letters.iter().map(|l| l.3).collect();
            let units = matrix_unit_word(&chi, &is, &js, n).unwrap();
            let phi = crate::fock::FockSpace::new(q.clone(), 4).unwrap().vacuum_expectation(&ops).unwrap();
            let word: Vec<Factor> = mats.iter().map(Factor::Matrix).collect();
            let ctx = Bimatrix::new(n, q, 4).unwrap();
            let e = ctx.expectation(&word).unwrap();
            for a in 0..n {
                for b in 0..n {
                    prop_assert_eq!(&e[a][b], &(&phi * int(units[a][b] as i64)));
                }
            }
        }
    }
}
