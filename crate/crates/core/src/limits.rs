//! Boolean and monotone bi-matrix models: exact finite-N values, the
//! diagonal closed forms, and the limiting moments.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::Serialize;

use crate::bimatrix::{build_boolean_matrices, build_monotone_matrices, Bimatrix, Factor};
use crate::rational::{self, Rational};
use crate::{Error, Result};

/// Largest index accepted by [`catalan`].
pub const CATALAN_CAP: u32 = 30;

/// The `m`-th Catalan number.
pub fn catalan(m: u32) -> Result<u64> {
    if m > CATALAN_CAP {
        return Err(Error::Overflow(format!("catalan({m}) exceeds the cap {CATALAN_CAP}")));
    }
    // C_{k+1} = C_k * 2(2k+1) / (k+2), exact at every step
    let mut c: u128 = 1;
    for k in 0..m as u128 {
        c = c * 2 * (2 * k + 1) / (k + 2);
    }
    u64::try_from(c).map_err(|_| Error::Overflow(format!("catalan({m})")))
}

/// Moment of order `n` of the standard semicircle law.
pub fn semicircle_moment(n: u32) -> Result<u64> {
    if n % 2 == 1 {
        Ok(0)
    } else {
        catalan(n / 2)
    }
}

/// Parses a colour word such as `"1 1 2 2"`.
pub fn parse_colors(s: &str) -> Result<Vec<usize>> {
    let colors: Vec<usize> = s
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad colour {t:?}"))))
        .collect::<Result<_>>()?;
    if colors.is_empty() {
        return Err(Error::Parse("empty colour word".into()));
    }
    Ok(colors)
}

fn int(v: usize) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

fn matched_pairs(colors: &[usize]) -> bool {
    colors.len().is_multiple_of(2) && colors.chunks(2).all(|p| p[0] == p[1])
}

/// `(2/N) max{0, ⌊(N-n)/2⌋}` for an even word with `ε(2m-1) = ε(2m)`, else 0.
pub fn boolean_closed_form(colors: &[usize], n: usize) -> Rational {
    if !matched_pairs(colors) || n <= colors.len() {
        return Rational::zero();
    }
    int(2) * int((n - colors.len()) / 2) / int(n)
}

/// `(2/N) Tr E` of `(L_{ε(1)} R)(L_{ε(2)} R) ⋯` evaluated on the bi-matrix
/// model.
pub fn boolean_direct(colors: &[usize], n: usize) -> Result<Rational> {
    if colors.is_empty() {
        return Err(Error::InvalidArgument("empty colour word".into()));
    }
    let mut distinct: Vec<usize> = colors.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let mut ts = Vec::new();
    let mut shift = None;
    for &k in &distinct {
        let (t, s) = build_boolean_matrices(k, n)?;
        ts.push((k, t));
        shift = Some(s);
    }
    let shift = shift.expect("at least one colour");
    let mut word = Vec::with_capacity(2 * colors.len());
    for &c in colors {
        let t = &ts.iter().find(|(k, _)| *k == c).expect("built above").1;
        word.push(Factor::Matrix(t));
        word.push(Factor::Matrix(&shift));
    }
    let ctx = Bimatrix::for_word(n, &word)?;
    Ok(int(2) * ctx.trace_moment(&word)?)
}

/// Direct value and closed form of one Boolean word.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BooleanEvaluation {
    pub n: usize,
    #[serde(serialize_with = "ser_rational")]
    pub direct: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub closed_form: Rational,
    pub matches: bool,
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&rational::to_string(r))
}

pub fn boolean_evaluate(colors: &[usize], n: usize) -> Result<BooleanEvaluation> {
    let direct = boolean_direct(colors, n)?;
    let closed_form = boolean_closed_form(colors, n);
    let matches = direct == closed_form;
    Ok(BooleanEvaluation { n, direct, closed_form, matches })
}

/// The Boolean word value, cross-checked against the closed form; a
/// disagreement is reported as [`Error::Mismatch`].
pub fn boolean_word_value(colors: &[usize], n: usize) -> Result<Rational> {
    let e = boolean_evaluate(colors, n)?;
    if !e.matches {
        return Err(Error::Mismatch(format!(
            "Boolean word {colors:?} at N = {n}: direct {} vs closed form {}",
            rational::to_string(&e.direct),
            rational::to_string(&e.closed_form)
        )));
    }
    Ok(e.direct)
}

/// Limit of the Boolean word: the product over maximal same-colour runs of
/// the Bernoulli `½(δ_{-1} + δ_1)` moments of the run lengths.
pub fn boolean_limit(colors: &[usize]) -> Rational {
    let mut i = 0;
    while i < colors.len() {
        let mut j = i;
        while j < colors.len() && colors[j] == colors[i] {
            j += 1;
        }
        if (j - i) % 2 == 1 {
            return Rational::zero();
        }
        i = j;
    }
    int(1)
}

/// `s_2^{m_1} s_1^{k_1} s_2^{m_2} ⋯ s_1^{k_n} s_2^{m_{n+1}}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MonotonePattern {
    pub m: Vec<u32>,
    pub k: Vec<u32>,
}

impl MonotonePattern {
    /// `m` must be one longer than `k`, and every `k_j` positive.
    pub fn new(m: Vec<u32>, k: Vec<u32>) -> Result<Self> {
        if m.len() != k.len() + 1 {
            return Err(Error::InvalidArgument("need exactly one more m exponent than k exponents".into()));
        }
        if k.contains(&0) {
            return Err(Error::InvalidArgument("k exponents must be positive".into()));
        }
        if m.iter().chain(&k).all(|&e| e == 0) {
            return Err(Error::InvalidArgument("empty pattern".into()));
        }
        Ok(MonotonePattern { m, k })
    }

    /// Parses `"s2^1 s1^2 s2^1"`; adjacent powers of the same generator
    /// merge, and `^1` may be omitted.
    pub fn parse(s: &str) -> Result<Self> {
        let mut m = vec![0u32];
        let mut k: Vec<u32> = Vec::new();
        let mut last_was_s1 = false;
        for tok in s.split_whitespace() {
            let bad = || Error::Parse(format!("bad pattern token {tok:?}"));
            let (base, exp) = match tok.split_once('^') {
                Some((b, e)) => (b, e.parse::<u32>().map_err(|_| bad())?),
                None => (tok, 1),
            };
            match base {
                "s1" => {
                    if exp == 0 {
                        continue;
                    }
                    if last_was_s1 {
                        *k.last_mut().expect("set") += exp;
                    } else {
                        k.push(exp);
                        m.push(0);
                        last_was_s1 = true;
                    }
                }
                "s2" => {
                    *m.last_mut().expect("nonempty") += exp;
                    if exp > 0 {
                        last_was_s1 = false;
                    }
                }
                _ => return Err(bad()),
            }
        }
        MonotonePattern::new(m, k)
    }

    pub fn k_sum(&self) -> u32 {
        self.k.iter().sum()
    }

    pub fn degree(&self) -> u32 {
        self.k_sum() + self.m.iter().sum::<u32>()
    }

    /// Every pattern of total degree `1..=max_degree`.
    pub fn all_up_to(max_degree: u32) -> Vec<MonotonePattern> {
        // compositions: a word in {s1, s2} of each length, grouped into runs
        let mut out = Vec::new();
        for len in 1..=max_degree {
            for bits in 0u32..(1 << len) {
                let text: Vec<&str> = (0..len).map(|b| if bits >> b & 1 == 1 { "s1" } else { "s2" }).collect();
                out.push(MonotonePattern::parse(&text.join(" ")).expect("valid by construction"));
            }
        }
        out
    }
}

impl fmt::Display for MonotonePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (j, &mj) in self.m.iter().enumerate() {
            if mj > 0 {
                parts.push(format!("s2^{mj}"));
            }
            if let Some(&kj) = self.k.get(j) {
                parts.push(format!("s1^{kj}"));
            }
        }
        write!(f, "{}", parts.join(" "))
    }
}

/// `sc(Σ k_j) Π_j sc(m_j)` with `sc` the semicircle moments.
pub fn monotone_limit(p: &MonotonePattern) -> Result<Rational> {
    let mut acc = semicircle_moment(p.k_sum())? as usize;
    for &mj in &p.m {
        acc *= semicircle_moment(mj)? as usize;
    }
    Ok(int(acc))
}

/// `((N - Σk)/N) · monotone_limit(p)` for `N > Σk`, else 0.
pub fn monotone_closed_form(p: &MonotonePattern, n: usize) -> Result<Rational> {
    let ks = p.k_sum() as usize;
    if n <= ks {
        return Ok(Rational::zero());
    }
    Ok(int(n - ks) / int(n) * monotone_limit(p)?)
}

/// `(1/N) Tr E(T_2^{m_1} (T_1 S_1)^{k_1} ⋯ T_2^{m_{n+1}})` on the bi-matrix
/// model.
pub fn monotone_direct(p: &MonotonePattern, n: usize) -> Result<Rational> {
    let (t1, s1, t2) = build_monotone_matrices(n)?;
    let mut word = Vec::new();
    for (j, &mj) in p.m.iter().enumerate() {
        word.extend(std::iter::repeat_n(Factor::Matrix(&t2), mj as usize));
        if let Some(&kj) = p.k.get(j) {
            for _ in 0..kj {
                word.push(Factor::Matrix(&t1));
                word.push(Factor::Matrix(&s1));
            }
        }
    }
    Bimatrix::for_word(n, &word)?.trace_moment(&word)
}

/// The monotone word value, cross-checked against the diagonal closed form.
pub fn monotone_word_value(p: &MonotonePattern, n: usize) -> Result<Rational> {
    let direct = monotone_direct(p, n)?;
    let closed = monotone_closed_form(p, n)?;
    if direct != closed {
        return Err(Error::Mismatch(format!(
            "monotone pattern {p} at N = {n}: direct {} vs closed form {}",
            rational::to_string(&direct),
            rational::to_string(&closed)
        )));
    }
    Ok(direct)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int as rint, ratio};

    #[test]
    fn catalan_values() {
        assert_eq!(catalan(0).unwrap(), 1);
        assert_eq!(catalan(2).unwrap(), 2);
        assert_eq!(catalan(4).unwrap(), 14);
        assert_eq!(catalan(30).unwrap(), 3814986502092304);
        assert!(catalan(31).is_err());
    }

    #[test]
    fn boolean_closed_form_examples() {
        assert_eq!(boolean_closed_form(&[1, 1], 10), ratio(4, 5));
        assert_eq!(boolean_closed_form(&[1, 1, 1], 10), rint(0));
        assert_eq!(boolean_closed_form(&[1, 2], 10), rint(0));
        assert_eq!(boolean_closed_form(&[1, 1], 2), rint(0));
    }

    #[test]
    fn boolean_direct_even_n() {
        assert_eq!(boolean_word_value(&[1, 1], 10).unwrap(), ratio(4, 5));
        assert_eq!(boolean_word_value(&[1, 2], 10).unwrap(), rint(0));
        assert_eq!(boolean_word_value(&[1, 1, 2, 2], 8).unwrap(), ratio(1, 2));
    }

    #[test]
    fn boolean_direct_odd_n_counts_odd_diagonal_positions() {
        // At odd N the nonzero diagonal entries sit at the odd x <= N - n,
        // so the direct value is (2/N) ceil((N - n)/2), one more than the floor.
        let e = boolean_evaluate(&[1, 1], 3).unwrap();
        assert_eq!(e.direct, ratio(2, 3));
        assert_eq!(e.closed_form, rint(0));
        assert!(!e.matches);
        assert!(boolean_word_value(&[1, 1], 3).is_err());
        for n in (3..=11).step_by(2) {
            let e = boolean_evaluate(&[2, 2, 1, 1], n).unwrap();
            let expected = if n > 4 { ratio(2 * (n as i64 - 4 + 1) / 2, n as i64) } else { rint(0) };
            assert_eq!(e.direct, expected, "N = {n}");
        }
    }

    #[test]
    fn boolean_limits() {
        assert_eq!(boolean_limit(&[1, 1]), rint(1));
        assert_eq!(boolean_limit(&[1, 1, 1]), rint(0));
        assert_eq!(boolean_limit(&[1, 1, 2, 2]), rint(1));
        assert_eq!(boolean_limit(&[1, 2, 1, 2]), rint(0));
        assert_eq!(boolean_limit(&[1, 1, 1, 1]), rint(1));
    }

    #[test]
    fn pattern_parsing() {
        let p = MonotonePattern::parse("s2^1 s1^2 s2^1").unwrap();
        assert_eq!(p, MonotonePattern { m: vec![1, 1], k: vec![2] });
        assert_eq!(p.to_string(), "s2^1 s1^2 s2^1");
        let p = MonotonePattern::parse("s1 s1 s2^2").unwrap();
        assert_eq!(p, MonotonePattern { m: vec![0, 2], k: vec![2] });
        assert!(MonotonePattern::parse("s3").is_err());
        assert!(MonotonePattern::parse("").is_err());
        assert_eq!(MonotonePattern::all_up_to(3).len(), 2 + 4 + 8);
    }

    #[test]
    fn monotone_limit_examples() {
        let lim = |s: &str| monotone_limit(&MonotonePattern::parse(s).unwrap()).unwrap();
        assert_eq!(lim("s1^2 s2^2"), rint(1));
        assert_eq!(lim("s1 s2^2 s1"), rint(1));
        assert_eq!(lim("s1^4"), rint(2));
        assert_eq!(lim("s2^1 s1^2 s2^1"), rint(0));
    }

    #[test]
    fn monotone_direct_examples() {
        let p = MonotonePattern::new(vec![0, 0], vec![2]).unwrap();
        assert_eq!(monotone_word_value(&p, 10).unwrap(), ratio(4, 5));
        let p = MonotonePattern::new(vec![1, 1], vec![2]).unwrap();
        for n in 2..6 {
            assert_eq!(monotone_word_value(&p, n).unwrap(), rint(0));
        }
    }
}
