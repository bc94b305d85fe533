//! Moment/cumulant transforms over bi-non-crossing partitions.
//!
//! Every transform is generic over a [`MomentFunctional`], so exact
//! (rational) and Monte Carlo (float) functionals share one code path.

use std::fmt;
use std::io::Write;
use std::path::Path;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::partitions::{enumerate_bnc, ChiMap, MobiusCache, SetPartition, Side};
use crate::rational::{self, Rational};
use crate::{Error, Result};

/// Ring operations needed by the transforms.
pub trait Scalar:
    Clone
    + Zero
    + One
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn from_rational(r: &Rational) -> Self;
}

impl Scalar for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
}

impl Scalar for rational::CheckedRational {
    fn from_rational(r: &Rational) -> Self {
        rational::CheckedRational::from_rational(r)
    }
}

impl Scalar for f64 {
    fn from_rational(r: &Rational) -> Self {
        rational::to_f64(r)
    }
}

/// One letter of a word: a variable name, its face and an optional colour.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letter {
    pub var: String,
    pub side: Side,
    pub color: Option<u32>,
}

impl Letter {
    pub fn new(var: impl Into<String>, side: Side) -> Self {
        Letter { var: var.into(), side, color: None }
    }

    pub fn colored(var: impl Into<String>, side: Side, color: u32) -> Self {
        Letter { var: var.into(), side, color: Some(color) }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.var, self.side.as_char())?;
        if let Some(c) = self.color {
            write!(f, "@{c}")?;
        }
        Ok(())
    }
}

/// A word `Z_1 ... Z_n` of two-faced variables.
///
/// Text form: whitespace-separated letters `name.l` or `name.r`, each with an
/// optional colour suffix, e.g. `"x.l@1 y.r@2 x.l@1"`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    pub letters: Vec<Letter>,
}

impl Word {
    pub fn new(letters: Vec<Letter>) -> Self {
        Word { letters }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let letters = s
            .split_whitespace()
            .map(|tok| {
                let bad = || Error::Parse(format!("bad letter {tok:?}; expected name.l or name.r[@color]"));
                let (body, color) = match tok.split_once('@') {
                    Some((b, c)) => (b, Some(c.parse::<u32>().map_err(|_| bad())?)),
                    None => (tok, None),
                };
                let (var, side) = body.rsplit_once('.').ok_or_else(bad)?;
                let mut chars = side.chars();
                let side = match (chars.next().and_then(Side::from_char), chars.next()) {
                    (Some(s), None) => s,
                    _ => return Err(bad()),
                };
                if var.is_empty() {
                    return Err(bad());
                }
                Ok(Letter { var: var.to_string(), side, color })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Word { letters })
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn chi(&self) -> Result<ChiMap> {
        ChiMap::new(self.letters.iter().map(|l| l.side).collect())
    }

    /// The partition induced by the colouring; uncoloured letters share one
    /// implicit colour.
    pub fn epsilon(&self) -> SetPartition {
        let colors: Vec<Option<u32>> = self.letters.iter().map(|l| l.color).collect();
        SetPartition::from_coloring(&colors)
    }

    /// Letters at the given 1-based positions, in order.
    pub fn subword(&self, positions: &[usize]) -> Word {
        Word { letters: positions.iter().map(|&k| self.letters[k - 1].clone()).collect() }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.letters.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// A unital linear functional, seen through its values on words.
///
/// Implementations must return 1 on the empty word and be deterministic.
pub trait MomentFunctional {
    type Value: Scalar;

    fn moment(&self, word: &Word) -> Result<Self::Value>;
}

impl<S: Scalar, F> MomentFunctional for F
where
    F: Fn(&Word) -> Result<S>,
{
    type Value = S;

    fn moment(&self, word: &Word) -> Result<S> {
        self(word)
    }
}

fn check_len(pi: &SetPartition, word: &Word) -> Result<()> {
    if pi.n() != word.len() {
        return Err(Error::LengthMismatch { expected: word.len(), actual: pi.n() });
    }
    Ok(())
}

/// `phi_pi`: the product over blocks of the moments of the block subwords.
/// The empty product is 1.
pub fn phi_pi<F: MomentFunctional>(pi: &SetPartition, word: &Word, f: &F) -> Result<F::Value> {
    check_len(pi, word)?;
    let mut acc = F::Value::one();
    for block in pi.blocks() {
        acc = acc * f.moment(&word.subword(&block))?;
    }
    Ok(acc)
}

/// `kappa_pi = sum_{sigma <= pi, sigma in BNC(chi)} phi_sigma mu_BNC(sigma, pi)`.
pub fn kappa_pi<F: MomentFunctional>(
    pi: &SetPartition,
    word: &Word,
    f: &F,
    cache: &mut MobiusCache,
) -> Result<F::Value> {
    check_len(pi, word)?;
    let chi = word.chi()?;
    let lattice = cache.lattice(&chi)?;
    let top = lattice.index_of(pi).ok_or_else(|| Error::NotBiNonCrossing(pi.to_string()))?;
    let column = lattice.mobius_column(top);
    let mut acc = F::Value::zero();
    for (sigma, mu) in column.iter() {
        if mu.is_zero() {
            continue;
        }
        let sigma = &lattice.elements()[*sigma];
        acc = acc + phi_pi(sigma, word, f)? * F::Value::from_rational(mu);
    }
    Ok(acc)
}

/// The full `(l, r)`-cumulant `kappa_chi(Z_1, ..., Z_n)`, i.e. `kappa` at `1_chi`.
pub fn cumulant<F: MomentFunctional>(word: &Word, f: &F, cache: &mut MobiusCache) -> Result<F::Value> {
    kappa_pi(&SetPartition::full(word.len()), word, f, cache)
}

/// `sum_{pi in BNC(chi)} prod_{V in pi} cumulant_fn(chi|_V, word|_V)`.
pub fn moment_from_cumulants<S, C>(word: &Word, cumulant_fn: C) -> Result<S>
where
    S: Scalar,
    C: FnMut(&ChiMap, &Word) -> Result<S>,
{
    moment_from_cumulants_cached(word, &mut MobiusCache::new(), cumulant_fn)
}

/// [`moment_from_cumulants`] reusing the lattices held in `cache`.
pub fn moment_from_cumulants_cached<S, C>(word: &Word, cache: &mut MobiusCache, mut cumulant_fn: C) -> Result<S>
where
    S: Scalar,
    C: FnMut(&ChiMap, &Word) -> Result<S>,
{
    if word.is_empty() {
        return Ok(S::one());
    }
    let chi = word.chi()?;
    let mut total = S::zero();
    for pi in cache.lattice(&chi)?.elements() {
        let mut term = S::one();
        for block in pi.blocks() {
            term = term * cumulant_fn(&chi.restrict(&block)?, &word.subword(&block))?;
        }
        total = total + term;
    }
    Ok(total)
}

/// `sum_{pi in BNC(chi)} [sum_{sigma in BNC(chi), pi <= sigma <= eps} mu(pi, sigma)] phi_pi`
/// with `eps` the colour partition of the word.
///
/// For bi-free colour classes this equals the moment of the word; the
/// difference is the bi-freeness residual.
pub fn universal_moment_rhs<F: MomentFunctional>(word: &Word, f: &F, cache: &mut MobiusCache) -> Result<F::Value> {
    if word.is_empty() {
        return Ok(F::Value::one());
    }
    let chi = word.chi()?;
    let eps = word.epsilon();
    let lattice = cache.lattice(&chi)?;
    let mut total = F::Value::zero();
    for idx in 0..lattice.elements().len() {
        if !lattice.elements()[idx].leq(&eps) {
            continue;
        }
        let weight = lattice.interval_sum(idx, &eps);
        if weight.is_zero() {
            continue;
        }
        let pi = lattice.elements()[idx].clone();
        total = total + phi_pi(&pi, word, f)? * F::Value::from_rational(&weight);
    }
    Ok(total)
}

/// `f(word) - universal_moment_rhs(word, f)`.
pub fn bifreeness_residual<F: MomentFunctional>(word: &Word, f: &F, cache: &mut MobiusCache) -> Result<F::Value> {
    Ok(f.moment(word)? - universal_moment_rhs(word, f, cache)?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovarianceLabel {
    pub name: String,
    #[serde(with = "side_serde")]
    pub side: Side,
}

mod side_serde {
    use super::Side;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(side: &Side, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&side.as_char().to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Side, D::Error> {
        let s = String::deserialize(d)?;
        let mut chars = s.chars();
        match (chars.next().and_then(Side::from_char), chars.next()) {
            (Some(side), None) => Ok(side),
            _ => Err(serde::de::Error::custom(format!("bad side {s:?}"))),
        }
    }
}

/// Covariance matrix of a two-faced central limit family over `I ⊔ J`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceSpec {
    labels: Vec<CovarianceLabel>,
    matrix: Vec<Vec<Rational>>,
}

#[derive(Deserialize)]
struct RawCovariance {
    labels: Vec<CovarianceLabel>,
    matrix: Vec<Vec<serde_json::Value>>,
}

/// Tolerance for the positive semidefiniteness check.
pub const PSD_TOLERANCE: f64 = 1e-9;

impl CovarianceSpec {
    /// Validates symmetry (exact) and positive semidefiniteness (smallest
    /// eigenvalue at least `-1e-9`).
    pub fn new(labels: Vec<CovarianceLabel>, matrix: Vec<Vec<Rational>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidCovariance("no labels".into()));
        }
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidCovariance(format!("matrix must be {n}x{n}")));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidCovariance(format!("duplicate label {}", a.name)));
            }
        }
        for i in 0..n {
            for j in 0..i {
                if matrix[i][j] != matrix[j][i] {
                    return Err(Error::InvalidCovariance(format!("not symmetric at ({}, {})", i + 1, j + 1)));
                }
            }
        }
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| rational::to_f64(&matrix[i][j]));
        let min_eig = dense.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOLERANCE {
            return Err(Error::InvalidCovariance(format!("not positive semidefinite (eigenvalue {min_eig})")));
        }
        Ok(CovarianceSpec { labels, matrix })
    }

    /// One left label `"l"` and one right label `"r"` with unit variances and
    /// cross-covariance `c`.
    pub fn unit_pair(c: Rational) -> Result<Self> {
        CovarianceSpec::new(
            vec![
                CovarianceLabel { name: "l".into(), side: Side::Left },
                CovarianceLabel { name: "r".into(), side: Side::Right },
            ],
            vec![vec![Rational::one(), c.clone()], vec![c, Rational::one()]],
        )
    }

    /// Parses `{"labels":[{"name":..,"side":"l"},..],"matrix":[[..],..]}`;
    /// entries may be JSON numbers or `"p/q"` strings.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCovariance = serde_json::from_str(text)?;
        let matrix = raw
            .matrix
            .iter()
            .map(|row| row.iter().map(rational::from_json).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        CovarianceSpec::new(raw.labels, matrix)
    }

    pub fn load(path: &Path) -> Result<Self> {
        CovarianceSpec::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "labels": self.labels,
            "matrix": self.matrix.iter().map(|r| r.iter().map(rational::to_string).collect::<Vec<_>>()).collect::<Vec<_>>(),
        })
    }

    pub fn labels(&self) -> &[CovarianceLabel] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l.name == name)
            .ok_or_else(|| Error::SideMismatch(format!("unknown label {name:?}")))
    }

    pub fn entry(&self, a: usize, b: usize) -> &Rational {
        &self.matrix[a][b]
    }

    pub fn matrix_f64(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        nalgebra::DMatrix::from_fn(n, n, |i, j| rational::to_f64(&self.matrix[i][j]))
    }
}

/// Moment of the bi-free central limit family:
/// `sum_{pi in BNC_2(chi)} prod_{{x,y} in pi} c_{a(x), a(y)}`.
pub fn clt_moment(chi: &ChiMap, cov: &CovarianceSpec, assignment: &[&str]) -> Result<Rational> {
    if assignment.len() != chi.len() {
        return Err(Error::LengthMismatch { expected: chi.len(), actual: assignment.len() });
    }
    let idx = assignment
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let i = cov.index_of(name)?;
            let side = cov.labels()[i].side;
            if side != chi.tags()[k] {
                return Err(Error::SideMismatch(format!(
                    "label {name:?} is {} but position {} is {}",
                    side.as_char(),
                    k + 1,
                    chi.tags()[k].as_char()
                )));
            }
            Ok(i)
        })
        .collect::<Result<Vec<_>>>()?;
    if chi.len() % 2 == 1 {
        return Ok(Rational::zero());
    }
    let mut total = Rational::zero();
    for pi in enumerate_bnc(chi, true)? {
        let mut term = Rational::one();
        for block in pi.blocks() {
            term *= cov.entry(idx[block[0] - 1], idx[block[1] - 1]);
            if term.is_zero() {
                break;
            }
        }
        total += term;
    }
    Ok(total)
}

/// The bi-free Poisson cumulant `lambda * alpha^{#l} * beta^{#r}`.
pub fn bi_poisson_cumulant<S: Scalar>(chi: &ChiMap, lambda: &S, alpha: &S, beta: &S) -> S {
    let mut acc = lambda.clone();
    for side in chi.tags() {
        acc = acc
            * match side {
                Side::Left => alpha.clone(),
                Side::Right => beta.clone(),
            };
    }
    acc
}

/// A row of an exact moment table.
#[derive(Clone, Debug)]
pub struct ExactMomentRow {
    pub word: String,
    pub chi: String,
    pub value: Rational,
}

/// A row of a Monte Carlo moment table.
#[derive(Clone, Debug)]
pub struct FloatMomentRow {
    pub word: String,
    pub chi: String,
    pub value: f64,
    pub stderr: f64,
}

/// CSV with columns `word, chi, value_num, value_den`.
pub fn write_exact_table<W: Write>(out: W, rows: &[ExactMomentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "chi", "value_num", "value_den"])?;
    for r in rows {
        w.write_record([r.word.clone(), r.chi.clone(), r.value.numer().to_string(), r.value.denom().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with columns `word, chi, value, stderr`.
pub fn write_float_table<W: Write>(out: W, rows: &[FloatMomentRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "chi", "value", "stderr"])?;
    for r in rows {
        w.write_record([r.word.clone(), r.chi.clone(), rational::format_f64(r.value), rational::format_f64(r.stderr)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    // Moments of one semicircular variable, whatever its side.
    fn semicircle(word: &Word) -> Result<Rational> {
        let n = word.len();
        Ok(if n % 2 == 1 {
            int(0)
        } else {
            let m = n / 2;
            let mut c = Rational::one();
            for k in 0..m {
                c = c * int(2 * (2 * k as i64 + 1)) / int(k as i64 + 2);
            }
            c
        })
    }

    fn word_of(chi: &str) -> Word {
        Word::new(chi.chars().map(|c| Letter::new("z", Side::from_char(c).unwrap())).collect())
    }

    #[test]
    fn phi_pi_examples() {
        let w = word_of("lll");
        let pi = SetPartition::from_blocks(3, &[vec![1, 3], vec![2]]).unwrap();
        assert_eq!(phi_pi(&pi, &w, &semicircle).unwrap(), int(0));
        assert_eq!(phi_pi(&SetPartition::full(4), &word_of("llll"), &semicircle).unwrap(), int(2));
    }

    #[test]
    fn kappa_examples() {
        let mut cache = MobiusCache::new();
        let w = word_of("llll");
        assert_eq!(cumulant(&w, &semicircle, &mut cache).unwrap(), int(0));
        assert_eq!(cumulant(&word_of("ll"), &semicircle, &mut cache).unwrap(), int(1));
        let table = |w: &Word| -> Result<Rational> {
            Ok(match w.len() {
                0 => int(1),
                1 if w.letters[0].side == Side::Left => int(3),
                1 => int(5),
                _ => int(17),
            })
        };
        assert_eq!(cumulant(&word_of("lr"), &table, &mut cache).unwrap(), int(17 - 15));
        assert_eq!(cumulant(&word_of("r"), &table, &mut cache).unwrap(), int(5));
    }

    #[test]
    fn reversion_examples() {
        let w = word_of("llll");
        let got: Rational =
            moment_from_cumulants(&w, |chi, _| Ok(if chi.len() == 2 { int(1) } else { int(0) })).unwrap();
        assert_eq!(got, int(2));
        let half = ratio(1, 2);
        let one = int(1);
        let got: Rational =
            moment_from_cumulants(&word_of("lr"), |chi, _| Ok(bi_poisson_cumulant(chi, &half, &one, &one))).unwrap();
        assert_eq!(got, ratio(3, 4));
    }

    #[test]
    fn universal_rhs_examples() {
        let mut cache = MobiusCache::new();
        let w = Word::parse("x.l@1 y.l@2").unwrap();
        let f = |w: &Word| -> Result<Rational> {
            let mut acc = int(1);
            for l in &w.letters {
                acc *= if l.var == "x" { int(2) } else { int(7) };
            }
            Ok(acc)
        };
        assert_eq!(universal_moment_rhs(&w, &f, &mut cache).unwrap(), int(14));
        let single = Word::parse("z.l@1 z.r@1 z.l@1 z.r@1").unwrap();
        assert_eq!(bifreeness_residual(&single, &semicircle, &mut cache).unwrap(), int(0));
    }

    #[test]
    fn clt_examples() {
        let c = ratio(1, 3);
        let cov = CovarianceSpec::unit_pair(c.clone()).unwrap();
        assert_eq!(clt_moment(&ChiMap::parse("lr").unwrap(), &cov, &["l", "r"]).unwrap(), c);
        assert_eq!(clt_moment(&ChiMap::parse("lrl").unwrap(), &cov, &["l", "r", "l"]).unwrap(), int(0));
        assert_eq!(clt_moment(&ChiMap::parse("llrr").unwrap(), &cov, &["l", "l", "r", "r"]).unwrap(), int(1) + &c * &c);
        assert!(matches!(clt_moment(&ChiMap::parse("lr").unwrap(), &cov, &["l", "l"]), Err(Error::SideMismatch(_))));
    }

    #[test]
    fn poisson_cumulant_examples() {
        let chi = ChiMap::parse("lrr").unwrap();
        assert_eq!(bi_poisson_cumulant(&chi, &ratio(1, 2), &int(2), &int(3)), int(9));
        assert_eq!(bi_poisson_cumulant(&chi, &ratio(1, 2), &int(0), &int(3)), int(0));
        assert_eq!(bi_poisson_cumulant(&ChiMap::parse("lll").unwrap(), &2.0, &0.5, &1.0), 0.25);
    }

    #[test]
    fn covariance_json() {
        let text = r#"{"labels":[{"name":"a","side":"l"},{"name":"b","side":"r"}],"matrix":[[1,0.5],[0.5,"1/1"]]}"#;
        let cov = CovarianceSpec::from_json(text).unwrap();
        assert_eq!(cov.entry(0, 1), &ratio(1, 2));
        let asym = r#"{"labels":[{"name":"a","side":"l"},{"name":"b","side":"r"}],"matrix":[[1,0.5],[0.4,1]]}"#;
        assert!(CovarianceSpec::from_json(asym).is_err());
        let indefinite = r#"{"labels":[{"name":"a","side":"l"},{"name":"b","side":"r"}],"matrix":[[1,2],[2,1]]}"#;
        assert!(matches!(CovarianceSpec::from_json(indefinite), Err(Error::InvalidCovariance(_))));
    }

    #[test]
    fn word_text_round_trip() {
        let w = Word::parse("x.l@1 y.r  x.l@2").unwrap();
        assert_eq!(w.to_string(), "x.l@1 y.r x.l@2");
        assert_eq!(w.chi().unwrap().to_string(), "lrl");
        assert!(Word::parse("x.q").is_err());
        assert!(Word::parse(".l").is_err());
    }

    #[test]
    fn csv_tables() {
        let mut buf = Vec::new();
        write_exact_table(&mut buf, &[ExactMomentRow { word: "z.l z.r".into(), chi: "lr".into(), value: ratio(3, 4) }])
            .unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "word,chi,value_num,value_den\nz.l z.r,lr,3,4\n");
    }
}
