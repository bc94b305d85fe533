//! `bifree`: command-line front end for the bi-free probability laboratory.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bifree::battery::{Battery, CRITERIA};
use bifree::bimatrix::{parse_word, Bimatrix, FactorSpec, MatrixRegistry};
use bifree::cumulants::{
    bi_poisson_cumulant, clt_moment, cumulant, kappa_pi, moment_from_cumulants, write_exact_table, CovarianceSpec,
    ExactMomentRow, Word,
};
use bifree::ensembles::{
    bifreeness_residuals_mc, estimate_word_moments, parse_mc_word, write_estimate_table, EnsembleModel, EstimateRow,
    MomentEstimate, PairEnsembleSpec,
};
use bifree::fock::{check_relations, free_relations, q_relations, BasisLabel, FockSpace};
use bifree::limits::{
    boolean_evaluate, boolean_limit, monotone_closed_form, monotone_direct, monotone_limit, parse_colors,
    MonotonePattern,
};
use bifree::partitions::{enumerate_bnc, mobius_bnc, ChiMap, MobiusCache, SetPartition, Side};
use bifree::rational::{self, int, Rational};
use bifree::report::{emit_convergence, ConvergencePoint, ReportDocument, ReportRow, Slope};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::Zero;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug, Serialize)]
#[command(name = "bifree", version, about = "Exact and Monte Carlo bi-free probability computations")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write the report to this path; the extension picks JSON or CSV.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format, overriding the extension of --out.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Enumerate or count the bi-non-crossing partitions of a side map.
    Partitions {
        /// Side map over {l, r}, e.g. "llrr".
        #[arg(long)]
        chi: String,
        /// Print only the count.
        #[arg(long)]
        count: bool,
        /// Restrict to pair partitions.
        #[arg(long)]
        pairs: bool,
    },
    /// The bi-non-crossing Möbius function on an interval.
    Mobius {
        #[arg(long)]
        chi: String,
        /// Lower partition as "1,4|2|3" (default: all singletons).
        #[arg(long)]
        pi: Option<String>,
        /// Upper partition (default: one block).
        #[arg(long)]
        sigma: Option<String>,
    },
    /// A cumulant of a word from a table of moments.
    Cumulant {
        /// Word such as "x.l y.r x.l".
        #[arg(long)]
        word: String,
        /// JSON object mapping every needed subword to its moment.
        #[arg(long)]
        moments: PathBuf,
        /// Evaluate kappa_pi for this partition instead of the full cumulant.
        #[arg(long)]
        pi: Option<String>,
    },
    /// Exact central limit moment for a covariance matrix.
    CltMoment {
        #[arg(long)]
        chi: String,
        #[arg(long)]
        cov: PathBuf,
        /// Covariance label for each position, space separated. Defaults to
        /// the single label of each side.
        #[arg(long)]
        labels: Option<String>,
    },
    /// Check the Fock space operator relations exactly.
    FockVerify {
        /// Deformation parameters, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "-1,-1/2,0,1/2,1")]
        q: Vec<String>,
        /// Maximal length of the test vectors.
        #[arg(long, default_value_t = 4)]
        depth: usize,
        /// Number of orthonormal labels.
        #[arg(long, default_value_t = 6)]
        labels: u32,
    },
    /// Exact moment of a word in Fock and constant bi-matrices.
    WordMoment {
        /// Word such as "L1* R1 L[a] P0 R2".
        #[arg(long)]
        word: String,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value = "0")]
        q: String,
        /// JSON object of named constant matrices.
        #[arg(long)]
        constants: Option<PathBuf>,
        /// Report the full expectation matrix instead of the trace.
        #[arg(long)]
        full: bool,
    },
    /// Monte Carlo estimates for a Gaussian pair or family.
    GaussMc(McArgs),
    /// Monte Carlo estimates for a Wishart pair.
    WishartMc {
        #[command(flatten)]
        mc: McArgs,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Monte Carlo estimates for a Haar unitary pair.
    HaarMc(McArgs),
    /// Exact convergence of a q-deformed matrix word to its limit.
    Qconv {
        #[arg(long)]
        word: String,
        #[arg(long, default_value = "0")]
        q: String,
        #[arg(long = "N", value_delimiter = ',', default_value = "2,4,8")]
        n: Vec<usize>,
    },
    /// The Boolean bi-matrix model: direct value against the closed form.
    Boolean {
        /// Colour word such as "1 1 2 2".
        #[arg(long)]
        colors: String,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// The monotone bi-matrix model: direct value against the closed form.
    Monotone {
        /// Pattern such as "s2^1 s1^2 s2^1".
        #[arg(long)]
        pattern: String,
        #[arg(long = "N", value_delimiter = ',', required = true)]
        n: Vec<usize>,
    },
    /// Run the acceptance battery.
    Suite {
        /// Criterion ids to run, comma separated (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Debug, Serialize)]
struct McArgs {
    /// JSON ensemble spec; --N and --seed override its values.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Covariance JSON (Gaussian only, when no --spec is given).
    #[arg(long)]
    cov: Option<PathBuf>,
    /// Word to estimate; repeat for several.
    #[arg(long, required = true)]
    word: Vec<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Estimate bi-freeness residuals of coloured words instead of moments.
    #[arg(long)]
    residual: bool,
    /// Pass band in standard errors around a known target.
    #[arg(long, default_value_t = 5.0)]
    sigmas: f64,
    /// Minimal absolute tolerance around a known target.
    #[arg(long, default_value_t = 0.0)]
    floor: f64,
}

/// Input the user got wrong; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// What a command produced.
struct Outcome {
    result: Value,
    rows: Vec<ReportRow>,
    seed: Option<u64>,
    /// Settings resolved from files and defaults, recorded in the report.
    resolved: Value,
    /// A command-specific CSV table; rows are used otherwise.
    csv: Option<Vec<u8>>,
}

impl Outcome {
    fn new(result: Value, rows: Vec<ReportRow>) -> Self {
        Outcome { result, rows, seed: None, resolved: Value::Null, csv: None }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<bifree::Error>() {
        Some(
            bifree::Error::Mismatch(_)
            | bifree::Error::Overflow(_)
            | bifree::Error::DepthOverflow { .. }
            | bifree::Error::LengthGuard(_)
            | bifree::Error::OddNormalisation(_),
        ) => 1,
        _ => 2,
    }
}

/// Runs the command and writes its output; `Ok(false)` if any check failed.
fn run(cli: &Cli) -> anyhow::Result<bool> {
    let outcome = match &cli.command {
        Command::Partitions { chi, count, pairs } => partitions(chi, *count, *pairs)?,
        Command::Mobius { chi, pi, sigma } => mobius(chi, pi.as_deref(), sigma.as_deref())?,
        Command::Cumulant { word, moments, pi } => cumulant_cmd(word, moments, pi.as_deref())?,
        Command::CltMoment { chi, cov, labels } => clt(chi, cov, labels.as_deref())?,
        Command::FockVerify { q, depth, labels } => fock_verify(q, *depth, *labels)?,
        Command::WordMoment { word, n, q, constants, full } => word_moment(word, n, q, constants.as_deref(), *full)?,
        Command::GaussMc(mc) => monte_carlo(mc, ModelKind::Gaussian)?,
        Command::WishartMc { mc, lambda, alpha, beta } => {
            monte_carlo(mc, ModelKind::Wishart { lambda: *lambda, alpha: *alpha, beta: *beta })?
        }
        Command::HaarMc(mc) => monte_carlo(mc, ModelKind::Haar)?,
        Command::Qconv { word, q, n } => qconv(word, q, n)?,
        Command::Boolean { colors, n } => boolean(colors, n)?,
        Command::Monotone { pattern, n } => monotone(pattern, n)?,
        Command::Suite { criteria, seed } => suite(criteria, *seed)?,
    };
    let mut config = serde_json::to_value(cli)?;
    if !outcome.resolved.is_null() {
        config["resolved"] = outcome.resolved;
    }
    let mut doc = ReportDocument::new(outcome.seed, config);
    doc.result = outcome.result.clone();
    for row in outcome.rows {
        doc.push(row);
    }
    emit(cli, &doc, outcome.csv)?;
    Ok(doc.all_passed())
}

fn emit(cli: &Cli, doc: &ReportDocument, csv: Option<Vec<u8>>) -> anyhow::Result<()> {
    let format = cli.format.unwrap_or(match &cli.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        _ => Format::Json,
    });
    let bytes = match format {
        Format::Csv => match csv {
            Some(table) => table,
            None => rows_csv(&doc.rows)?,
        },
        Format::Json if cli.out.is_some() => (doc.to_json()? + "\n").into_bytes(),
        Format::Json => (serde_json::to_string_pretty(&doc.result)? + "\n").into_bytes(),
    };
    match &cli.out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn rows_csv(rows: &[ReportRow]) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["experiment", "inputs", "value", "target", "tolerance", "passed"])?;
        for r in rows {
            w.write_record([
                r.experiment.clone(),
                r.inputs.to_string(),
                r.value.clone(),
                r.target.clone().unwrap_or_default(),
                r.tolerance.clone().unwrap_or_default(),
                r.passed.map(|p| p.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
    }
    Ok(buf)
}

fn parse_chi(s: &str) -> anyhow::Result<ChiMap> {
    ChiMap::parse(s).map_err(|e| usage(e.to_string()))
}

fn parse_rational(s: &str) -> anyhow::Result<Rational> {
    rational::parse(s).map_err(|e| usage(e.to_string()))
}

/// Parses "1,4|2|3" or the printed form "{{1,4},{2},{3}}".
fn parse_partition(s: &str, n: usize) -> anyhow::Result<SetPartition> {
    let flat = s.replace("},", "|").replace(['{', '}'], "");
    let blocks = flat
        .split('|')
        .filter(|b| !b.trim().is_empty())
        .map(|b| {
            b.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| usage(format!("bad partition {s:?}"))))
                .collect::<anyhow::Result<Vec<_>>>()
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    SetPartition::from_blocks(n, &blocks).map_err(|e| usage(e.to_string()))
}

fn read_json(path: &Path) -> anyhow::Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn exact(r: &Rational) -> Value {
    Value::String(rational::to_string(r))
}

fn partitions(chi: &str, count_only: bool, pairs: bool) -> anyhow::Result<Outcome> {
    let chi_map = parse_chi(chi)?;
    let parts = enumerate_bnc(&chi_map, pairs)?;
    let inputs = json!({ "chi": chi, "pairs": pairs });
    let rows = vec![ReportRow::exact("bnc_count", inputs, &int(parts.len() as i64), None)];
    let result = if count_only {
        json!({ "count": parts.len() })
    } else {
        json!({
            "chi": chi,
            "count": parts.len(),
            "partitions": parts.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
        })
    };
    Ok(Outcome::new(result, rows))
}

fn mobius(chi: &str, pi: Option<&str>, sigma: Option<&str>) -> anyhow::Result<Outcome> {
    let chi_map = parse_chi(chi)?;
    let n = chi_map.len();
    let pi = pi.map(|s| parse_partition(s, n)).transpose()?.unwrap_or_else(|| SetPartition::singletons(n));
    let sigma = sigma.map(|s| parse_partition(s, n)).transpose()?.unwrap_or_else(|| SetPartition::full(n));
    let value = mobius_bnc(&pi, &sigma, &chi_map, &mut MobiusCache::new())?;
    let inputs = json!({ "chi": chi, "pi": pi.to_string(), "sigma": sigma.to_string() });
    let result = json!({ "chi": chi, "pi": pi.to_string(), "sigma": sigma.to_string(), "value": exact(&value) });
    Ok(Outcome::new(result, vec![ReportRow::exact("mobius", inputs, &value, None)]))
}

fn cumulant_cmd(word: &str, moments: &Path, pi: Option<&str>) -> anyhow::Result<Outcome> {
    let w = Word::parse(word).map_err(|e| usage(e.to_string()))?;
    let Value::Object(map) = read_json(moments)? else {
        return Err(usage("moments file must be a JSON object of word -> moment"));
    };
    let mut table: HashMap<Word, Rational> = HashMap::new();
    for (k, v) in &map {
        let key = Word::parse(k).map_err(|e| usage(e.to_string()))?;
        table.insert(key, rational::from_json(v).map_err(|e| usage(e.to_string()))?);
    }
    let f = |sub: &Word| -> bifree::Result<Rational> {
        if sub.is_empty() {
            return Ok(Rational::from_integer(1.into()));
        }
        table.get(sub).cloned().ok_or_else(|| bifree::Error::Unsupported(format!("no moment given for {sub}")))
    };
    let mut cache = MobiusCache::new();
    let (value, label) = match pi {
        Some(p) => {
            let part = parse_partition(p, w.len())?;
            (kappa_pi(&part, &w, &f, &mut cache)?, part.to_string())
        }
        None => (cumulant(&w, &f, &mut cache)?, SetPartition::full(w.len()).to_string()),
    };
    let inputs = json!({ "word": word, "pi": label });
    let result = json!({ "word": word, "pi": label, "cumulant": exact(&value) });
    Ok(Outcome::new(result, vec![ReportRow::exact("cumulant", inputs, &value, None)]))
}

fn clt(chi: &str, cov_path: &Path, labels: Option<&str>) -> anyhow::Result<Outcome> {
    let chi_map = parse_chi(chi)?;
    let cov = CovarianceSpec::load(cov_path).map_err(|e| usage(e.to_string()))?;
    let assignment: Vec<String> = match labels {
        Some(l) => l.split_whitespace().map(str::to_string).collect(),
        None => {
            let pick = |side: Side| -> anyhow::Result<String> {
                let names: Vec<&str> =
                    cov.labels().iter().filter(|l| l.side == side).map(|l| l.name.as_str()).collect();
                match names.as_slice() {
                    [one] => Ok(one.to_string()),
                    _ => Err(usage(format!("{} labels on side {}; pass --labels", names.len(), side.as_char()))),
                }
            };
            chi_map.tags().iter().map(|&s| pick(s)).collect::<anyhow::Result<_>>()?
        }
    };
    let refs: Vec<&str> = assignment.iter().map(String::as_str).collect();
    let value = clt_moment(&chi_map, &cov, &refs)?;
    let inputs = json!({ "chi": chi, "labels": assignment });
    let result = json!({ "chi": chi, "labels": assignment, "value": exact(&value) });
    Ok(Outcome::new(result, vec![ReportRow::exact("clt_moment", inputs, &value, None)]))
}

fn fock_verify(qs: &[String], depth: usize, n_labels: u32) -> anyhow::Result<Outcome> {
    let labels: Vec<BasisLabel> = (0..n_labels).map(BasisLabel::Plain).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut run_family = |name: &str, q: &Rational, free: bool| -> anyhow::Result<()> {
        let space = FockSpace::new(q.clone(), depth + 2)?;
        let (mut checks, mut failures) = (0usize, Vec::new());
        for &h1 in &labels {
            for &h2 in &labels {
                let rels = if free { free_relations(h1, h2) } else { q_relations(q, h1, h2) };
                let r = check_relations(&space, &rels, &labels, depth)?;
                checks += r.checks;
                failures.extend(r.failures);
            }
        }
        failures.truncate(10);
        let inputs = json!({ "relations": name, "q": rational::to_string(q), "depth": depth, "labels": n_labels });
        let detail = format!("{checks} checks, {} failures", failures.len());
        rows.push(ReportRow::check(format!("{name}_relations"), inputs, detail, failures.is_empty()));
        summary.push(json!({
            "relations": name,
            "q": exact(q),
            "checks": checks,
            "failures": failures,
            "passed": failures.is_empty(),
        }));
        Ok(())
    };
    let parsed: Vec<Rational> = qs.iter().map(|q| parse_rational(q)).collect::<anyhow::Result<_>>()?;
    if parsed.iter().any(|q| q.is_zero()) {
        run_family("free", &int(0), true)?;
    }
    for q in &parsed {
        run_family("q", q, false)?;
    }
    Ok(Outcome::new(Value::Array(summary), rows))
}

fn load_constants(path: Option<&Path>) -> anyhow::Result<HashMap<String, Vec<Vec<Rational>>>> {
    let Some(path) = path else { return Ok(HashMap::new()) };
    let Value::Object(map) = read_json(path)? else {
        return Err(usage("constants file must be a JSON object of name -> matrix"));
    };
    let mut out = HashMap::new();
    for (name, m) in map {
        let rows = m.as_array().ok_or_else(|| usage(format!("constant {name} must be a list of rows")))?;
        let parsed = rows
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| usage(format!("constant {name} must be a list of rows")))?
                    .iter()
                    .map(|v| rational::from_json(v).map_err(|e| usage(e.to_string())))
                    .collect::<anyhow::Result<Vec<_>>>()
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        out.insert(name, parsed);
    }
    Ok(out)
}

fn parse_factors(word: &str) -> anyhow::Result<Vec<FactorSpec>> {
    parse_word(word).map_err(|e| usage(e.to_string()))
}

/// Exact trace (or full expectation) of a word at size `n`.
fn evaluate_word(
    specs: &[FactorSpec],
    n: usize,
    q: &Rational,
    constants: &HashMap<String, Vec<Vec<Rational>>>,
    full: bool,
) -> anyhow::Result<Value> {
    let mut reg = MatrixRegistry::new(n, q.clone(), constants.clone());
    reg.prepare(specs)?;
    let factors = reg.factors(specs)?;
    let ctx = Bimatrix::for_word(n, &factors)?;
    Ok(if full {
        Value::Array(
            ctx.expectation(&factors)?.iter().map(|row| Value::Array(row.iter().map(exact).collect())).collect(),
        )
    } else {
        exact(&ctx.trace_moment(&factors)?)
    })
}

fn word_chi(specs: &[FactorSpec]) -> String {
    specs.iter().filter_map(FactorSpec::side).map(Side::as_char).collect()
}

fn word_moment(word: &str, sizes: &[usize], q: &str, constants: Option<&Path>, full: bool) -> anyhow::Result<Outcome> {
    let specs = parse_factors(word)?;
    let q = parse_rational(q)?;
    let constants = load_constants(constants)?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &n in sizes {
        let value = evaluate_word(&specs, n, &q, &constants, full)?;
        let inputs = json!({ "word": word, "N": n, "q": exact(&q) });
        if let Value::String(s) = &value {
            let r = rational::parse(s)?;
            rows.push(ReportRow::exact("word_moment", inputs, &r, None));
            table.push(ExactMomentRow { word: format!("{word} @ N={n}"), chi: word_chi(&specs), value: r });
        } else {
            rows.push(ReportRow::check("word_expectation", inputs, value.to_string(), true));
        }
        results.push(json!({ "N": n, "value": value }));
    }
    let mut outcome = Outcome::new(json!({ "word": word, "q": exact(&q), "values": results }), rows);
    if !full {
        let mut buf = Vec::new();
        write_exact_table(&mut buf, &table)?;
        outcome.csv = Some(buf);
    }
    Ok(outcome)
}

enum ModelKind {
    Gaussian,
    Wishart { lambda: Option<f64>, alpha: Option<f64>, beta: Option<f64> },
    Haar,
}

fn monte_carlo(mc: &McArgs, kind: ModelKind) -> anyhow::Result<Outcome> {
    let mut spec = match &mc.spec {
        Some(path) => PairEnsembleSpec::load(path).map_err(|e| usage(e.to_string()))?,
        None => {
            let n = mc.n.ok_or_else(|| usage("--N is required without --spec"))?;
            let model = match &kind {
                ModelKind::Gaussian => {
                    let path = mc.cov.as_ref().ok_or_else(|| usage("gauss-mc needs --cov or --spec"))?;
                    EnsembleModel::Gaussian { cov: CovarianceSpec::load(path).map_err(|e| usage(e.to_string()))? }
                }
                ModelKind::Wishart { lambda, alpha, beta } => EnsembleModel::Wishart {
                    lambda: lambda.ok_or_else(|| usage("wishart-mc needs --lambda or --spec"))?,
                    alpha: alpha.unwrap_or(1.0),
                    beta: beta.unwrap_or(1.0),
                },
                ModelKind::Haar => EnsembleModel::Haar,
            };
            PairEnsembleSpec::new(n, mc.seed.unwrap_or(0), model).map_err(|e| usage(e.to_string()))?
        }
    };
    let model_ok = matches!(
        (&kind, &spec.model),
        (ModelKind::Gaussian, EnsembleModel::Gaussian { .. })
            | (ModelKind::Wishart { .. }, EnsembleModel::Wishart { .. })
            | (ModelKind::Haar, EnsembleModel::Haar)
    );
    if !model_ok {
        return Err(usage("the ensemble file's model does not match the subcommand"));
    }
    if let Some(n) = mc.n {
        spec.n = n;
    }
    if let Some(seed) = mc.seed {
        spec.seed = seed;
    }
    if mc.samples < 2 {
        return Err(usage("--samples must be at least 2"));
    }
    let words: Vec<Word> =
        mc.word.iter().map(|w| parse_mc_word(w).map_err(|e| usage(e.to_string()))).collect::<anyhow::Result<_>>()?;
    let estimates = if mc.residual {
        bifreeness_residuals_mc(&spec, &words, mc.samples)?
    } else {
        estimate_word_moments(&spec, &words, mc.samples)?
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut results = Vec::new();
    for ((text, w), est) in mc.word.iter().zip(&words).zip(&estimates) {
        let target = if mc.residual { Some(0.0) } else { known_target(&spec.model, w) };
        let inputs = json!({ "word": text, "N": spec.n, "samples": mc.samples, "residual": mc.residual });
        let tolerance = est.tolerance(mc.sigmas, mc.floor);
        rows.push(ReportRow::float(
            if mc.residual { "residual" } else { "moment" },
            inputs,
            est.mean,
            target,
            tolerance,
        ));
        results.push(estimate_json(text, spec.n, est, target, tolerance));
        table.push(EstimateRow { word: text.clone(), n: spec.n, estimate: *est, target });
    }
    let mut buf = Vec::new();
    write_estimate_table(&mut buf, &table)?;
    let resolved = json!({ "N": spec.n, "seed": spec.seed, "model": model_json(&spec.model), "samples": mc.samples });
    Ok(Outcome { result: Value::Array(results), rows, seed: Some(spec.seed), resolved, csv: Some(buf) })
}

fn model_json(model: &EnsembleModel) -> Value {
    match model {
        EnsembleModel::Gaussian { cov } => json!({ "model": "gaussian", "cov": cov.to_json() }),
        EnsembleModel::Wishart { lambda, alpha, beta } => {
            json!({ "model": "wishart", "lambda": lambda, "alpha": alpha, "beta": beta })
        }
        EnsembleModel::Haar => json!({ "model": "haar" }),
        EnsembleModel::Constants => json!({ "model": "constants" }),
    }
}

fn estimate_json(word: &str, n: usize, est: &MomentEstimate, target: Option<f64>, tolerance: f64) -> Value {
    let mut v = json!({
        "word": word,
        "N": n,
        "samples": est.samples,
        "mean": rational::format_f64(est.mean),
        "stderr": rational::format_f64(est.stderr),
    });
    if let Some(t) = target {
        v["target"] = json!(rational::format_f64(t));
        v["tolerance"] = json!(rational::format_f64(tolerance));
        v["passed"] = json!(est.within(t, 0.0, tolerance));
    }
    v
}

/// The limiting moment of a plain word, where the model has an exact oracle.
fn known_target(model: &EnsembleModel, w: &Word) -> Option<f64> {
    let chi = w.chi().ok()?;
    match model {
        EnsembleModel::Gaussian { cov } => {
            let names: Vec<&str> = w.letters.iter().map(|l| l.var.as_str()).collect();
            clt_moment(&chi, cov, &names).ok().map(|v| rational::to_f64(&v))
        }
        EnsembleModel::Wishart { lambda, alpha, beta } => {
            if w.letters.iter().any(|l| l.var != "X") {
                return None;
            }
            let (l, a, b) = (rational::from_f64(*lambda)?, rational::from_f64(*alpha)?, rational::from_f64(*beta)?);
            let v: Rational = moment_from_cumulants(w, |c, _| Ok(bi_poisson_cumulant(c, &l, &a, &b))).ok()?;
            Some(rational::to_f64(&v))
        }
        _ => None,
    }
}

fn qconv(word: &str, q: &str, sizes: &[usize]) -> anyhow::Result<Outcome> {
    let specs = parse_factors(word)?;
    let q = parse_rational(q)?;
    let ops =
        specs.iter().map(FactorSpec::limit_op).collect::<bifree::Result<Vec<_>>>().map_err(|e| usage(e.to_string()))?;
    let target = FockSpace::new(int(0), ops.len())?.vacuum_expectation(&ops)?;
    let mut series = Vec::new();
    for &n in sizes {
        let Value::String(v) = evaluate_word(&specs, n, &q, &HashMap::new(), false)? else { unreachable!("trace") };
        series.push(ConvergencePoint { n, value: rational::parse(&v)?, target: target.clone() });
    }
    let mut buf = Vec::new();
    let slope = emit_convergence(&series, &mut buf).map_err(|e| usage(e.to_string()))?;
    let rows = series
        .iter()
        .map(|p| ReportRow::exact("qconv", json!({ "word": word, "q": exact(&q), "N": p.n }), &p.value, None))
        .collect();
    let points: Vec<Value> = series
        .iter()
        .map(|p| json!({ "N": p.n, "value": exact(&p.value), "target": exact(&p.target), "abs_error": exact(&p.abs_error()) }))
        .collect();
    let mut outcome =
        Outcome::new(json!({ "word": word, "q": exact(&q), "points": points, "slope": slope_json(slope) }), rows);
    outcome.csv = Some(buf);
    Ok(outcome)
}

fn slope_json(slope: Slope) -> Value {
    match slope {
        Slope::Fitted { slope } => json!({ "kind": "fitted", "slope": rational::format_f64(slope) }),
        other => serde_json::to_value(other).unwrap_or(Value::Null),
    }
}

fn boolean(colors: &str, sizes: &[usize]) -> anyhow::Result<Outcome> {
    let cs = parse_colors(colors).map_err(|e| usage(e.to_string()))?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &n in sizes {
        let e = boolean_evaluate(&cs, n)?;
        let inputs = json!({ "colors": colors, "N": n });
        rows.push(ReportRow::exact("boolean", inputs, &e.direct, Some(&e.closed_form)));
        results.push(json!({ "N": n, "value": exact(&e.direct), "closed_form_match": e.matches }));
    }
    let result = if let [single] = results.as_slice() {
        json!({ "value": single["value"], "closed_form_match": single["closed_form_match"] })
    } else {
        json!({ "colors": colors, "limit": exact(&boolean_limit(&cs)), "values": results })
    };
    Ok(Outcome::new(result, rows))
}

fn monotone(pattern: &str, sizes: &[usize]) -> anyhow::Result<Outcome> {
    let p = MonotonePattern::parse(pattern).map_err(|e| usage(e.to_string()))?;
    let limit = monotone_limit(&p)?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &n in sizes {
        let direct = monotone_direct(&p, n)?;
        let closed = monotone_closed_form(&p, n)?;
        let inputs = json!({ "pattern": pattern, "N": n });
        rows.push(ReportRow::exact("monotone", inputs, &direct, Some(&closed)));
        results.push(json!({ "N": n, "value": exact(&direct), "closed_form_match": direct == closed }));
    }
    Ok(Outcome::new(json!({ "pattern": p.to_string(), "limit": exact(&limit), "values": results }), rows))
}

fn suite(criteria: &[u8], seed: Option<u64>) -> anyhow::Result<Outcome> {
    let battery = seed.map(Battery::new).unwrap_or_default();
    let ids: Vec<u8> =
        if criteria.is_empty() { CRITERIA.iter().map(|(id, _)| *id).collect() } else { criteria.to_vec() };
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for id in ids {
        let r = battery.run(id).map_err(|e| usage(e.to_string()))?;
        eprintln!("{r}");
        rows.push(ReportRow::check(format!("criterion {id}"), json!({ "name": r.name }), r.detail.clone(), r.passed));
        results.push(serde_json::to_value(&r)?);
    }
    if results.is_empty() {
        return Err(usage("no criteria selected"));
    }
    let mut outcome = Outcome::new(Value::Array(results), rows);
    outcome.seed = Some(battery.seed);
    Ok(outcome)
}
