//! The compact word grammar.
//!
//! Tokens are separated by whitespace:
//!
//! * `L1`, `L1*`, `L1t`, `L1t*` (and `R...`): the Fock matrices of colour 1
//!   in the plain, star, transposed-creator and transposed-annihilator
//!   variants;
//! * `L[a]`, `R[a]`: a registered constant matrix `a` under the left or right
//!   action, with `C[a]` short for `L[a]`;
//! * `P0`: the averaged vacuum projection.

use std::collections::HashMap;
use std::fmt;

use super::{build_fock_matrix, Factor, OperatorMatrix, Variant};
use crate::fock::{BasisLabel, FockOp};
use crate::partitions::Side;
use crate::rational::Rational;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FactorSpec {
    Fock { side: Side, variant: Variant, k: usize },
    Constant { side: Side, name: String },
    P0,
}

impl FactorSpec {
    pub fn side(&self) -> Option<Side> {
        match self {
            FactorSpec::Fock { side, .. } | FactorSpec::Constant { side, .. } => Some(*side),
            FactorSpec::P0 => None,
        }
    }

    /// The operator this matrix converges to: plain/star use `h_k`, the
    /// transposed variants a separate unit vector `h^t_k`, all at `q = 0`.
    pub fn limit_op(&self) -> Result<FockOp> {
        let FactorSpec::Fock { side, variant, k } = self else {
            return Err(Error::Unsupported(format!("{self} has no Fock limit")));
        };
        let h = BasisLabel::Plain(2 * *k as u32);
        let ht = BasisLabel::Plain(2 * *k as u32 + 1);
        Ok(match (side, variant) {
            (Side::Left, Variant::Plain) => FockOp::CreateLeft(h),
            (Side::Left, Variant::Star) => FockOp::AnnihilateLeft(h),
            (Side::Left, Variant::T) => FockOp::CreateLeft(ht),
            (Side::Left, Variant::TStar) => FockOp::AnnihilateLeft(ht),
            (Side::Right, Variant::Plain) => FockOp::CreateRight(h),
            (Side::Right, Variant::Star) => FockOp::AnnihilateRight(h),
            (Side::Right, Variant::T) => FockOp::CreateRight(ht),
            (Side::Right, Variant::TStar) => FockOp::AnnihilateRight(ht),
        })
    }
}

impl fmt::Display for FactorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let face = |s: &Side| match s {
            Side::Left => 'L',
            Side::Right => 'R',
        };
        match self {
            FactorSpec::Fock { side, variant, k } => write!(f, "{}{k}{}", face(side), variant.suffix()),
            FactorSpec::Constant { side, name } => write!(f, "{}[{name}]", face(side)),
            FactorSpec::P0 => write!(f, "P0"),
        }
    }
}

fn parse_token(tok: &str) -> Result<FactorSpec> {
    let bad = || Error::Parse(format!("bad word token {tok:?}"));
    if tok == "P0" {
        return Ok(FactorSpec::P0);
    }
    let mut chars = tok.chars();
    let side = match chars.next() {
        Some('L') | Some('C') => Side::Left,
        Some('R') => Side::Right,
        _ => return Err(bad()),
    };
    let rest = chars.as_str();
    if let Some(inner) = rest.strip_prefix('[') {
        let name = inner.strip_suffix(']').ok_or_else(bad)?;
        if name.is_empty() {
            return Err(bad());
        }
        return Ok(FactorSpec::Constant { side, name: name.to_string() });
    }
    if tok.starts_with('C') {
        return Err(bad());
    }
    let digits_end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    let k: usize = rest[..digits_end].parse().map_err(|_| bad())?;
    let variant = match &rest[digits_end..] {
        "" => Variant::Plain,
        "*" => Variant::Star,
        "t" => Variant::T,
        "t*" => Variant::TStar,
        _ => return Err(bad()),
    };
    Ok(FactorSpec::Fock { side, variant, k })
}

/// Parses a word such as `"L1* R1 L2 C[a]"`.
pub fn parse_word(s: &str) -> Result<Vec<FactorSpec>> {
    let word: Vec<FactorSpec> = s.split_whitespace().map(parse_token).collect::<Result<_>>()?;
    if word.is_empty() {
        return Err(Error::Parse("empty word".into()));
    }
    Ok(word)
}

/// Builds and owns the matrices a set of words refers to.
pub struct MatrixRegistry {
    n: usize,
    q: Rational,
    constants: HashMap<String, Vec<Vec<Rational>>>,
    built: HashMap<FactorSpec, OperatorMatrix>,
}

impl MatrixRegistry {
    pub fn new(n: usize, q: Rational, constants: HashMap<String, Vec<Vec<Rational>>>) -> Self {
        MatrixRegistry { n, q, constants, built: HashMap::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &Rational {
        &self.q
    }

    /// Builds every matrix `word` refers to.
    pub fn prepare(&mut self, word: &[FactorSpec]) -> Result<()> {
        for spec in word {
            if self.built.contains_key(spec) {
                continue;
            }
            let m = match spec {
                FactorSpec::Fock { side, variant, k } => build_fock_matrix(*side, *variant, *k, self.n, &self.q)?,
                FactorSpec::Constant { side, name } => {
                    let values = self.constants.get(name).ok_or_else(|| Error::UnknownFactor(name.clone()))?;
                    if values.len() != self.n {
                        return Err(Error::DimensionMismatch(format!(
                            "constant {name} is {0}x{0}, N = {1}",
                            values.len(),
                            self.n
                        )));
                    }
                    OperatorMatrix::scalar(spec.to_string(), *side, values)?
                }
                FactorSpec::P0 => continue,
            };
            self.built.insert(spec.clone(), m);
        }
        Ok(())
    }

    /// Factors for a prepared word.
    pub fn factors(&self, word: &[FactorSpec]) -> Result<Vec<Factor<'_>>> {
        word.iter()
            .map(|spec| match spec {
                FactorSpec::P0 => Ok(Factor::P0),
                other => self
                    .built
                    .get(other)
                    .map(Factor::Matrix)
                    .ok_or_else(|| Error::UnknownFactor(format!("{other} was not prepared"))),
            })
            .collect()
    }
}
