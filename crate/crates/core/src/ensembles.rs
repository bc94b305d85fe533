//! Monte Carlo random pair-of-matrices models.
//!
//! Words are [`Word`]s whose variable names are factor names of the model:
//! the covariance labels of a Gaussian family, `X` for a Wishart pair, `U`
//! for a Haar unitary, or the name of a registered constant matrix. A name
//! may carry a power `^p` and then an adjoint `*`, e.g. `U*` or `X^2`.
//!
//! Each sampled word is evaluated through the commutative fast path: left
//! factors multiply in word order, right factors in reverse word order, and
//! the value is `(1/N) Re Tr` of that product.
//!
//! Sampling is split into fixed chunks. Chunk `c` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` switched to stream `c`, Gaussian
//! variates come from `rand_distr::StandardNormal` (ziggurat), and chunk sums
//! are reduced in chunk order, so results do not depend on the worker count.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Deserialize;

use crate::bimatrix::{parse_word, FactorSpec};
use crate::cumulants::{bifreeness_residual, CovarianceSpec, Letter, Word};
use crate::partitions::{MobiusCache, Side};
use crate::rational;
use crate::{Error, Result};

/// A complex matrix stored as separate real and imaginary parts so that
/// products run through the real matrix kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { re: DMatrix::zeros(n, n), im: DMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        CMat { re: DMatrix::identity(n, n), im: DMatrix::zeros(n, n) }
    }

    pub fn real(re: DMatrix<f64>) -> Self {
        let im = DMatrix::zeros(re.nrows(), re.ncols());
        CMat { re, im }
    }

    pub fn n(&self) -> usize {
        self.re.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[(i, j)], self.im[(i, j)])
    }

    /// Product with three real multiplications.
    pub fn mul(&self, other: &CMat) -> CMat {
        let t1 = &self.re * &other.re;
        let t2 = &self.im * &other.im;
        let t3 = (&self.re + &self.im) * (&other.re + &other.im);
        let re = &t1 - &t2;
        let im = t3 - t1 - t2;
        CMat { re, im }
    }

    pub fn adjoint(&self) -> CMat {
        CMat { re: self.re.transpose(), im: -self.im.transpose() }
    }

    pub fn scaled(&self, s: f64) -> CMat {
        CMat { re: &self.re * s, im: &self.im * s }
    }

    pub fn pow(&self, p: u32) -> CMat {
        let mut acc = CMat::identity(self.n());
        for _ in 0..p {
            acc = acc.mul(self);
        }
        acc
    }

    pub fn trace(&self) -> Complex64 {
        Complex64::new(self.re.trace(), self.im.trace())
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &CMat) -> Complex64 {
        let bt_re = other.re.transpose();
        let bt_im = other.im.transpose();
        let re = self.re.component_mul(&bt_re).sum() - self.im.component_mul(&bt_im).sum();
        let im = self.re.component_mul(&bt_im).sum() + self.im.component_mul(&bt_re).sum();
        Complex64::new(re, im)
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n() {
            for j in 0..self.n() {
                m = m.max((self.entry(i, j) - other.entry(i, j)).norm());
            }
        }
        m
    }
}

/// The random (or fixed) matrix model behind a pair of faces.
#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleModel {
    /// A self-adjoint Gaussian family with the given covariance over `I ⊔ J`.
    Gaussian { cov: CovarianceSpec },
    /// `X = (1/N) Y Y^T` with `Y` real Gaussian of size `N x round(lambda N)`;
    /// the left factor is `alpha X` and the right factor `beta X`.
    Wishart { lambda: f64, alpha: f64, beta: f64 },
    /// A Haar unitary `U`.
    Haar,
    /// Registered constants only.
    Constants,
}

/// A model, its size and seed, plus named constant matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PairEnsembleSpec {
    pub n: usize,
    pub seed: u64,
    pub model: EnsembleModel,
    pub constants: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    model: String,
    #[serde(default)]
    cov: Option<serde_json::Value>,
    #[serde(default)]
    lambda: Option<f64>,
    #[serde(default)]
    alpha: Option<f64>,
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    constants: BTreeMap<String, Vec<Vec<f64>>>,
}

impl PairEnsembleSpec {
    pub fn new(n: usize, seed: u64, model: EnsembleModel) -> Result<Self> {
        let spec = PairEnsembleSpec { n, seed, model, constants: BTreeMap::new() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_constant(mut self, name: impl Into<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        self.constants.insert(name.into(), values);
        self.validate()?;
        Ok(self)
    }

    /// Parses e.g. `{"N": 100, "seed": 7, "model": "gaussian", "cov": {..}}`,
    /// `{"model": "wishart", "lambda": 0.5, "alpha": 1, "beta": 1, ..}`,
    /// `{"model": "haar", ..}` or `{"model": "constants", ..}`; any of them
    /// may add `"constants": {"D": [[..], ..]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text)?;
        let missing = |f: &str| Error::Parse(format!("model {:?} needs field {f:?}", raw.model));
        let model = match raw.model.as_str() {
            "gaussian" => {
                let cov = raw.cov.as_ref().ok_or_else(|| missing("cov"))?;
                EnsembleModel::Gaussian { cov: CovarianceSpec::from_json(&cov.to_string())? }
            }
            "wishart" => EnsembleModel::Wishart {
                lambda: raw.lambda.ok_or_else(|| missing("lambda"))?,
                alpha: raw.alpha.unwrap_or(1.0),
                beta: raw.beta.unwrap_or(1.0),
            },
            "haar" => EnsembleModel::Haar,
            "constants" => EnsembleModel::Constants,
            other => return Err(Error::Parse(format!("unknown model {other:?}"))),
        };
        let spec = PairEnsembleSpec { n: raw.n, seed: raw.seed, model, constants: raw.constants };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PairEnsembleSpec::from_json(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if let EnsembleModel::Wishart { lambda, .. } = self.model {
            wishart_columns(lambda, self.n)?;
        }
        for (name, m) in &self.constants {
            if m.len() != self.n || m.iter().any(|r| r.len() != self.n) {
                return Err(Error::DimensionMismatch(format!("constant {name} must be {0}x{0}", self.n)));
            }
        }
        Ok(())
    }

    /// The factor names the model provides, before powers and adjoints.
    pub fn factor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = match &self.model {
            EnsembleModel::Gaussian { cov } => cov.labels().iter().map(|l| l.name.clone()).collect(),
            EnsembleModel::Wishart { .. } => vec!["X".into()],
            EnsembleModel::Haar => vec!["U".into()],
            EnsembleModel::Constants => vec![],
        };
        names.extend(self.constants.keys().cloned());
        names
    }
}

/// `M_N = round(lambda N)`, which must be at least 1.
pub fn wishart_columns(lambda: f64, n: usize) -> Result<usize> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("Wishart rate must be positive, got {lambda}")));
    }
    let m = (lambda * n as f64).round();
    if m < 1.0 {
        return Err(Error::InvalidArgument(format!("round(lambda * N) = {m} < 1")));
    }
    Ok(m as usize)
}

/// A self-adjoint Gaussian family, one `N x N` matrix per covariance label,
/// with `E(X^a_ij X^b_lm) = delta_im delta_jl c_ab / N`.
///
/// With `C = A A^T`: diagonal entries are `A z / sqrt(N)` for a standard
/// normal vector `z`; above the diagonal `X_ij = (A u + i A v) / sqrt(2N)`
/// and `X_ji` is its conjugate, which realises the block covariance
/// `(1/2)(C ⊗ I_2) / N` of the real and imaginary parts.
pub fn sample_gaussian_family<R: Rng + ?Sized>(cov: &CovarianceSpec, n: usize, rng: &mut R) -> Vec<CMat> {
    let a = covariance_root(cov);
    sample_gaussian_with_root(&a, n, rng)
}

/// The two matrices of a one-left, one-right Gaussian pair.
pub fn sample_gaussian_pair<R: Rng + ?Sized>(cov: &CovarianceSpec, n: usize, rng: &mut R) -> Result<(CMat, CMat)> {
    if cov.dim() != 2 {
        return Err(Error::InvalidCovariance(format!("a pair needs 2 labels, got {}", cov.dim())));
    }
    let mut fam = sample_gaussian_family(cov, n, rng);
    let second = fam.pop().expect("two matrices");
    let first = fam.pop().expect("two matrices");
    Ok((first, second))
}

fn covariance_root(cov: &CovarianceSpec) -> DMatrix<f64> {
    let eig = cov.matrix_f64().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

fn sample_gaussian_with_root<R: Rng + ?Sized>(a: &DMatrix<f64>, n: usize, rng: &mut R) -> Vec<CMat> {
    let d = a.nrows();
    let mut out = vec![CMat::zeros(n); d];
    let diag_scale = 1.0 / (n as f64).sqrt();
    let off_scale = 1.0 / (2.0 * n as f64).sqrt();
    let mut z = nalgebra::DVector::<f64>::zeros(d);
    let mut w = nalgebra::DVector::<f64>::zeros(d);
    for i in 0..n {
        for j in i..n {
            for k in 0..d {
                z[k] = rng.sample(StandardNormal);
            }
            let x = a * &z;
            if i == j {
                for (k, m) in out.iter_mut().enumerate() {
                    m.re[(i, i)] = x[k] * diag_scale;
                }
            } else {
                for k in 0..d {
                    w[k] = rng.sample(StandardNormal);
                }
                let y = a * &w;
                for (k, m) in out.iter_mut().enumerate() {
                    let (re, im) = (x[k] * off_scale, y[k] * off_scale);
                    m.re[(i, j)] = re;
                    m.im[(i, j)] = im;
                    m.re[(j, i)] = re;
                    m.im[(j, i)] = -im;
                }
            }
        }
    }
    out
}

/// One Wishart draw `X = (1/N) Y Y^T`, returned as `(alpha X, beta X)`.
pub fn wishart_pair_matrices<R: Rng + ?Sized>(
    lambda: f64,
    alpha: f64,
    beta: f64,
    n: usize,
    rng: &mut R,
) -> Result<(CMat, CMat)> {
    let x = sample_wishart(lambda, n, rng)?;
    Ok((CMat::real(&x * alpha), CMat::real(&x * beta)))
}

fn sample_wishart<R: Rng + ?Sized>(lambda: f64, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    let m = wishart_columns(lambda, n)?;
    let y = DMatrix::<f64>::from_fn(n, m, |_, _| rng.sample(StandardNormal));
    Ok((&y * y.transpose()) / n as f64)
}

/// A Haar unitary: complex Ginibre matrix, QR factorisation, then the phases
/// of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * s, im * s)
    });
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    CMat { re: q.map(|c| c.re), im: q.map(|c| c.im) }
}

/// Summary of a Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl MomentEstimate {
    /// `max(sigmas * stderr, floor)`.
    pub fn tolerance(&self, sigmas: f64, floor: f64) -> f64 {
        (sigmas * self.stderr).max(floor)
    }

    pub fn within(&self, target: f64, sigmas: f64, floor: f64) -> bool {
        (self.mean - target).abs() <= self.tolerance(sigmas, floor)
    }

    /// `(mean - target) / stderr`, or 0 when both numerator and stderr vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

/// Real and imaginary estimates of one word plus the per-sample range of
/// the real part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WordStatistics {
    pub re: MomentEstimate,
    pub im: MomentEstimate,
    pub min_re: f64,
    pub max_re: f64,
}

/// Parses a Monte Carlo word either as letters (`"xl.l xr.r"`) or in the
/// bracket grammar (`"L[xl] R[xr]"`).
pub fn parse_mc_word(s: &str) -> Result<Word> {
    if s.contains('[') {
        let specs = parse_word(s)?;
        let letters = specs
            .into_iter()
            .map(|f| match f {
                FactorSpec::Constant { side, name } => Ok(Letter::new(name, side)),
                other => Err(Error::UnknownFactor(format!("{other} is not a random-matrix factor"))),
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(Word::new(letters));
    }
    let w = Word::parse(s)?;
    if w.is_empty() {
        return Err(Error::Parse("empty word".into()));
    }
    Ok(w)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct FactorKey {
    base: String,
    power: u32,
    adjoint: bool,
    // Side matters only for factors whose left and right versions differ.
    side: Option<Side>,
}

fn parse_factor_name(var: &str) -> Result<(String, u32, bool)> {
    let (body, adjoint) = match var.strip_suffix('*') {
        Some(b) => (b, true),
        None => (var, false),
    };
    let (base, power) = match body.split_once('^') {
        Some((b, p)) => (b, p.parse::<u32>().map_err(|_| Error::Parse(format!("bad power in {var:?}")))?),
        None => (body, 1),
    };
    if base.is_empty() {
        return Err(Error::Parse(format!("bad factor name {var:?}")));
    }
    Ok((base.to_string(), power, adjoint))
}

/// The words compiled against a model: distinct factors and, per word, the
/// fast-path product sequence as factor indices.
struct Plan {
    factors: Vec<FactorKey>,
    sequences: Vec<Vec<usize>>,
}

impl Plan {
    fn new(spec: &PairEnsembleSpec, words: &[Word]) -> Result<Self> {
        let names = spec.factor_names();
        let sided = matches!(spec.model, EnsembleModel::Wishart { .. });
        let mut factors: Vec<FactorKey> = Vec::new();
        let mut index: HashMap<FactorKey, usize> = HashMap::new();
        let mut sequences = Vec::with_capacity(words.len());
        for word in words {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for letter in &word.letters {
                let (base, power, adjoint) = parse_factor_name(&letter.var)?;
                if !names.contains(&base) {
                    return Err(Error::UnknownFactor(format!("{base:?} (model provides {names:?})")));
                }
                let side = (sided && !spec.constants.contains_key(&base)).then_some(letter.side);
                let key = FactorKey { base, power, adjoint, side };
                let idx = *index.entry(key.clone()).or_insert_with(|| {
                    factors.push(key);
                    factors.len() - 1
                });
                match letter.side {
                    Side::Left => left.push(idx),
                    Side::Right => right.push(idx),
                }
            }
            right.reverse();
            left.extend(right);
            sequences.push(left);
        }
        Ok(Plan { factors, sequences })
    }
}

/// The base matrices of one draw.
fn draw(spec: &PairEnsembleSpec, root: Option<&DMatrix<f64>>, rng: &mut ChaCha8Rng) -> Result<HashMap<String, CMat>> {
    let n = spec.n;
    let mut out = HashMap::new();
    match &spec.model {
        EnsembleModel::Gaussian { cov } => {
            let root = root.expect("gaussian root");
            for (label, m) in cov.labels().iter().zip(sample_gaussian_with_root(root, n, rng)) {
                out.insert(label.name.clone(), m);
            }
        }
        EnsembleModel::Wishart { lambda, .. } => {
            out.insert("X".to_string(), CMat::real(sample_wishart(*lambda, n, rng)?));
        }
        EnsembleModel::Haar => {
            out.insert("U".to_string(), haar_unitary(n, rng));
        }
        EnsembleModel::Constants => {}
    }
    for (name, rows) in &spec.constants {
        out.insert(name.clone(), CMat::real(DMatrix::from_fn(n, n, |i, j| rows[i][j])));
    }
    Ok(out)
}

fn resolve(spec: &PairEnsembleSpec, key: &FactorKey, base: &HashMap<String, CMat>) -> CMat {
    let m = &base[&key.base];
    let mut m = if key.power == 1 { m.clone() } else { m.pow(key.power) };
    if let (Some(side), EnsembleModel::Wishart { alpha, beta, .. }) = (key.side, &spec.model) {
        let s = match side {
            Side::Left => *alpha,
            Side::Right => *beta,
        };
        m = m.scaled(s.powi(key.power as i32));
    }
    if key.adjoint {
        m.adjoint()
    } else {
        m
    }
}

/// Product of a factor sequence, memoised on balanced halves.
fn product(seq: &[usize], factors: &[CMat], memo: &mut HashMap<Vec<usize>, CMat>) -> CMat {
    if seq.len() == 1 {
        return factors[seq[0]].clone();
    }
    if let Some(m) = memo.get(seq) {
        return m.clone();
    }
    let h = seq.len().div_ceil(2);
    let p = product(&seq[..h], factors, memo).mul(&product(&seq[h..], factors, memo));
    memo.insert(seq.to_vec(), p.clone());
    p
}

fn normalised_trace(seq: &[usize], factors: &[CMat], memo: &mut HashMap<Vec<usize>, CMat>, n: usize) -> Complex64 {
    let t = match seq.len() {
        0 => Complex64::new(n as f64, 0.0),
        1 => factors[seq[0]].trace(),
        len => {
            let h = len.div_ceil(2);
            product(&seq[..h], factors, memo).trace_product(&product(&seq[h..], factors, memo))
        }
    };
    t / n as f64
}

/// Running mean and sum of squared deviations (Welford), mergeable.
#[derive(Clone, Copy, Debug, Default)]
struct Running {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, o: &Running) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn estimate(&self) -> MomentEstimate {
        let var = if self.n > 1.0 { self.m2 / (self.n - 1.0) } else { 0.0 };
        MomentEstimate { mean: self.mean, stderr: (var.max(0.0) / self.n).sqrt(), samples: self.n as usize }
    }
}

/// Per-chunk sums for every word.
#[derive(Clone, Debug)]
struct ChunkSums {
    count: usize,
    sum: Vec<Complex64>,
    re: Vec<Running>,
    im: Vec<Running>,
    min_re: Vec<f64>,
    max_re: Vec<f64>,
}

/// Samples per chunk: between 1 and 64, aiming for at least 32 chunks.
fn chunk_size(samples: usize) -> usize {
    (samples / 32).clamp(1, 64)
}

fn run_chunks(spec: &PairEnsembleSpec, words: &[Word], samples: usize) -> Result<Vec<ChunkSums>> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {samples}")));
    }
    let plan = Plan::new(spec, words)?;
    let root = match &spec.model {
        EnsembleModel::Gaussian { cov } => Some(covariance_root(cov)),
        _ => None,
    };
    let size = chunk_size(samples);
    let chunks = samples.div_ceil(size);
    let nw = words.len();
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let count = size.min(samples - c * size);
            let mut acc = ChunkSums {
                count,
                sum: vec![Complex64::new(0.0, 0.0); nw],
                re: vec![Running::default(); nw],
                im: vec![Running::default(); nw],
                min_re: vec![f64::INFINITY; nw],
                max_re: vec![f64::NEG_INFINITY; nw],
            };
            for _ in 0..count {
                let base = draw(spec, root.as_ref(), &mut rng)?;
                let factors: Vec<CMat> = plan.factors.iter().map(|k| resolve(spec, k, &base)).collect();
                let mut memo = HashMap::new();
                for (w, seq) in plan.sequences.iter().enumerate() {
                    let v = normalised_trace(seq, &factors, &mut memo, spec.n);
                    acc.sum[w] += v;
                    acc.re[w].push(v.re);
                    acc.im[w].push(v.im);
                    acc.min_re[w] = acc.min_re[w].min(v.re);
                    acc.max_re[w] = acc.max_re[w].max(v.re);
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Real/imaginary estimates and per-sample ranges for several words from
/// the same draws.
pub fn estimate_word_statistics(
    spec: &PairEnsembleSpec,
    words: &[Word],
    samples: usize,
) -> Result<Vec<WordStatistics>> {
    let chunks = run_chunks(spec, words, samples)?;
    Ok((0..words.len())
        .map(|w| {
            let (mut re, mut im) = (Running::default(), Running::default());
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in &chunks {
                re.merge(&c.re[w]);
                im.merge(&c.im[w]);
                lo = lo.min(c.min_re[w]);
                hi = hi.max(c.max_re[w]);
            }
            WordStatistics { re: re.estimate(), im: im.estimate(), min_re: lo, max_re: hi }
        })
        .collect())
}

/// Estimates of `(1/N) Re Tr` for several words from the same draws.
pub fn estimate_word_moments(spec: &PairEnsembleSpec, words: &[Word], samples: usize) -> Result<Vec<MomentEstimate>> {
    Ok(estimate_word_statistics(spec, words, samples)?.into_iter().map(|s| s.re).collect())
}

pub fn estimate_word_moment(spec: &PairEnsembleSpec, word: &Word, samples: usize) -> Result<MomentEstimate> {
    Ok(estimate_word_moments(spec, std::slice::from_ref(word), samples)?[0])
}

fn strip_colors(w: &Word) -> Word {
    Word::new(w.letters.iter().map(|l| Letter::new(l.var.clone(), l.side)).collect())
}

/// The estimated moment of a coloured word minus the universal bi-free
/// polynomial evaluated on estimated moments of its single-colour subwords.
///
/// All subword moments come from the same draws; the standard error is a
/// delete-one-chunk jackknife.
pub fn bifreeness_residual_mc(spec: &PairEnsembleSpec, word: &Word, samples: usize) -> Result<MomentEstimate> {
    Ok(bifreeness_residuals_mc(spec, std::slice::from_ref(word), samples)?[0])
}

/// [`bifreeness_residual_mc`] for several words from one set of draws.
pub fn bifreeness_residuals_mc(spec: &PairEnsembleSpec, words: &[Word], samples: usize) -> Result<Vec<MomentEstimate>> {
    let mut subwords: Vec<Word> = Vec::new();
    let mut index: HashMap<Word, usize> = HashMap::new();
    for word in words {
        let n = word.len();
        if n == 0 || n > 16 {
            return Err(Error::InvalidArgument(format!("word length {n} out of range 1..=16")));
        }
        for mask in 1u32..(1 << n) {
            let positions: Vec<usize> = (1..=n).filter(|k| mask & (1 << (k - 1)) != 0).collect();
            let sub = strip_colors(&word.subword(&positions));
            if !index.contains_key(&sub) {
                index.insert(sub.clone(), subwords.len());
                subwords.push(sub);
            }
        }
    }
    let chunks = run_chunks(spec, &subwords, samples)?;
    let total: Vec<f64> = (0..subwords.len()).map(|w| chunks.iter().map(|c| c.sum[w].re).sum()).collect();
    let mut cache = MobiusCache::new();
    let mut residual_for = |word: &Word, means: &[f64]| -> Result<f64> {
        let f = |w: &Word| -> Result<f64> {
            if w.is_empty() {
                return Ok(1.0);
            }
            index
                .get(&strip_colors(w))
                .map(|&i| means[i])
                .ok_or_else(|| Error::Unsupported(format!("no estimate for {w}")))
        };
        bifreeness_residual(word, &f, &mut cache)
    };
    let means: Vec<f64> = total.iter().map(|s| s / samples as f64).collect();
    let leave_one_out: Vec<Vec<f64>> = chunks
        .iter()
        .map(|c| {
            let rest = (samples - c.count) as f64;
            total.iter().zip(&c.sum).map(|(t, s)| (t - s.re) / rest).collect()
        })
        .collect();
    let k = chunks.len();
    words
        .iter()
        .map(|word| {
            let estimate = residual_for(word, &means)?;
            let stderr = if k < 2 {
                f64::INFINITY
            } else {
                let rs = leave_one_out.iter().map(|m| residual_for(word, m)).collect::<Result<Vec<f64>>>()?;
                let avg = rs.iter().sum::<f64>() / k as f64;
                let ss: f64 = rs.iter().map(|r| (r - avg).powi(2)).sum();
                ((k as f64 - 1.0) / k as f64 * ss).sqrt()
            };
            Ok(MomentEstimate { mean: estimate, stderr, samples })
        })
        .collect()
}

/// One CSV row of a Monte Carlo report.
#[derive(Clone, Debug)]
pub struct EstimateRow {
    pub word: String,
    pub n: usize,
    pub estimate: MomentEstimate,
    pub target: Option<f64>,
}

/// CSV with columns `word, N, samples, mean, stderr, target, z_score`; the
/// last two are empty without a target.
pub fn write_estimate_table<W: Write>(out: W, rows: &[EstimateRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["word", "N", "samples", "mean", "stderr", "target", "z_score"])?;
    for r in rows {
        let (target, z) = match r.target {
            Some(t) => (rational::format_f64(t), rational::format_f64(r.estimate.z_score(t))),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.word.clone(),
            r.n.to_string(),
            r.estimate.samples.to_string(),
            rational::format_f64(r.estimate.mean),
            rational::format_f64(r.estimate.stderr),
            target,
            z,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bimatrix::Bimatrix;
    use crate::bimatrix::MatrixRegistry;
    use crate::cumulants::CovarianceLabel;
    use crate::rational::{int, ratio};

    fn rng(stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(11);
        r.set_stream(stream);
        r
    }

    #[test]
    fn gaussian_samples_are_exactly_self_adjoint() {
        let cov = CovarianceSpec::unit_pair(ratio(1, 2)).unwrap();
        let (a, b) = sample_gaussian_pair(&cov, 7, &mut rng(0)).unwrap();
        assert_eq!(a, a.adjoint());
        assert_eq!(b, b.adjoint());
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let u = haar_unitary(12, &mut rng(1));
        assert!(u.mul(&u.adjoint()).max_abs_diff(&CMat::identity(12)) < 1e-10);
    }

    #[test]
    fn complex_product_matches_direct_formula() {
        let mut r = rng(2);
        let mk = |r: &mut ChaCha8Rng| CMat {
            re: DMatrix::from_fn(3, 3, |_, _| r.sample(StandardNormal)),
            im: DMatrix::from_fn(3, 3, |_, _| r.sample(StandardNormal)),
        };
        let (a, b) = (mk(&mut r), mk(&mut r));
        let p = a.mul(&b);
        for i in 0..3 {
            for j in 0..3 {
                let direct: Complex64 = (0..3).map(|k| a.entry(i, k) * b.entry(k, j)).sum();
                assert!((p.entry(i, j) - direct).norm() < 1e-12);
            }
        }
        assert!((a.trace_product(&b) - p.trace()).norm() < 1e-12);
    }

    #[test]
    fn fast_path_matches_exact_bimatrix_evaluation() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0], vec![0.0, 1.0, -2.0]];
        let b = vec![vec![0.0, 1.0, 1.0], vec![2.0, 0.0, -1.0], vec![1.0, 1.0, 0.25]];
        let spec = PairEnsembleSpec::new(3, 0, EnsembleModel::Constants)
            .unwrap()
            .with_constant("a", a.clone())
            .unwrap()
            .with_constant("b", b.clone())
            .unwrap();
        let to_rat = |m: &Vec<Vec<f64>>| -> Vec<Vec<rational::Rational>> {
            m.iter().map(|r| r.iter().map(|&x| rational::from_f64(x).unwrap()).collect()).collect()
        };
        let mut consts = HashMap::new();
        consts.insert("a".to_string(), to_rat(&a));
        consts.insert("b".to_string(), to_rat(&b));
        for text in ["L[a] R[b]", "R[b] L[a] R[a] L[b]", "L[a] L[b] R[a] R[b] L[a]", "R[a] R[b] R[b]"] {
            let mut reg = MatrixRegistry::new(3, int(0), consts.clone());
            let specs = parse_word(text).unwrap();
            reg.prepare(&specs).unwrap();
            let factors = reg.factors(&specs).unwrap();
            let exact = Bimatrix::for_word(3, &factors).unwrap().trace_moment(&factors).unwrap();
            let est = estimate_word_moment(&spec, &parse_mc_word(text).unwrap(), 4).unwrap();
            assert!((est.mean - rational::to_f64(&exact)).abs() < 1e-12, "{text}");
            assert!(est.stderr < 1e-12);
        }
    }

    #[test]
    fn estimates_are_deterministic() {
        let cov = CovarianceSpec::unit_pair(ratio(1, 2)).unwrap();
        let spec = PairEnsembleSpec::new(6, 42, EnsembleModel::Gaussian { cov }).unwrap();
        let w = parse_mc_word("l.l l.l r.r").unwrap();
        let a = estimate_word_moment(&spec, &w, 100).unwrap();
        let b = estimate_word_moment(&spec, &w, 100).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn wishart_scales_left_and_right_separately() {
        let spec = PairEnsembleSpec::new(10, 3, EnsembleModel::Wishart { lambda: 0.5, alpha: 0.0, beta: 2.0 }).unwrap();
        let words = [parse_mc_word("X.l").unwrap(), parse_mc_word("X.r").unwrap()];
        let est = estimate_word_moments(&spec, &words, 20).unwrap();
        assert_eq!(est[0].mean, 0.0);
        assert!(est[1].mean > 0.0);
    }

    #[test]
    fn spec_json_round_trip_and_errors() {
        let text = r#"{"N": 4, "seed": 9, "model": "gaussian",
            "cov": {"labels": [{"name": "a", "side": "l"}, {"name": "b", "side": "r"}], "matrix": [[1, "1/2"], ["1/2", 1]]},
            "constants": {"D": [[1,0,0,0],[0,1,0,0],[0,0,-1,0],[0,0,0,-1]]}}"#;
        let spec = PairEnsembleSpec::from_json(text).unwrap();
        assert_eq!(spec.factor_names(), ["a", "b", "D"]);
        assert!(PairEnsembleSpec::from_json(r#"{"N": 4, "seed": 1, "model": "wishart", "lambda": 0.01}"#).is_err());
        assert!(PairEnsembleSpec::from_json(r#"{"N": 4, "seed": 1, "model": "nope"}"#).is_err());
        let haar = PairEnsembleSpec::from_json(r#"{"N": 4, "seed": 1, "model": "haar"}"#).unwrap();
        let w = parse_mc_word("Q.l").unwrap();
        assert!(matches!(estimate_word_moment(&haar, &w, 4), Err(Error::UnknownFactor(_))));
        assert!(estimate_word_moment(&haar, &parse_mc_word("U.l").unwrap(), 1).is_err());
    }

    #[test]
    fn factor_names_with_power_and_adjoint() {
        let spec = PairEnsembleSpec::new(5, 1, EnsembleModel::Haar).unwrap();
        let words = [parse_mc_word("U.l U*.r").unwrap(), parse_mc_word("U^2.l U^1*.l").unwrap()];
        assert!(parse_factor_name("^2").is_err());
        assert!(parse_factor_name("U^x").is_err());
        // U^2 U* = U, whose normalised trace is not identically 1.
        let stats = estimate_word_statistics(&spec, &words, 8).unwrap();
        assert!((stats[0].min_re - 1.0).abs() < 1e-12 && (stats[0].max_re - 1.0).abs() < 1e-12);
        let _ = stats[1];
    }

    #[test]
    fn general_family_respects_block_independence() {
        let labels =
            ["a", "b", "c"].iter().map(|n| CovarianceLabel { name: n.to_string(), side: Side::Left }).collect();
        let m = vec![vec![int(1), int(0), int(0)], vec![int(0), int(2), int(0)], vec![int(0), int(0), int(0)]];
        let cov = CovarianceSpec::new(labels, m).unwrap();
        let fam = sample_gaussian_family(&cov, 4, &mut rng(5));
        assert_eq!(fam.len(), 3);
        assert_eq!(fam[2], CMat::zeros(4));
    }
}
