//! Machine-readable reports and convergence-curve data.

use std::io::Write;
use std::time::{SystemTime, UNIX_EPOCH};

use num_traits::Zero;
use serde::Serialize;

use crate::rational::{self, Rational};
use crate::{Error, Result};

/// One point of a convergence series.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub n: usize,
    pub value: Rational,
    pub target: Rational,
}

impl ConvergencePoint {
    pub fn abs_error(&self) -> Rational {
        rational::abs(&(&self.value - &self.target))
    }
}

/// The fitted decay of `|value - target|` in `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Slope {
    /// Least-squares slope of `log(error)` against `log(N)`.
    Fitted { slope: f64 },
    /// Every error is exactly zero.
    ExactConvergence,
    /// Some errors vanish and fewer than two are nonzero.
    Undetermined,
}

/// Writes the CSV `N, value, target, abs_error, error_times_N` (floats with
/// 12 significant digits) and returns the fitted slope.
pub fn emit_convergence<W: Write>(series: &[ConvergencePoint], out: W) -> Result<Slope> {
    let mut ns: Vec<usize> = series.iter().map(|p| p.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::InvalidArgument("a convergence series needs at least 2 distinct N".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "value", "target", "abs_error", "error_times_N"])?;
    for p in series {
        let err = p.abs_error();
        let scaled = &err * Rational::from_integer(p.n.into());
        w.write_record([
            p.n.to_string(),
            rational::format_f64(rational::to_f64(&p.value)),
            rational::format_f64(rational::to_f64(&p.target)),
            rational::format_f64(rational::to_f64(&err)),
            rational::format_f64(rational::to_f64(&scaled)),
        ])?;
    }
    w.flush()?;
    Ok(fit_slope(series))
}

/// The log-log slope of a series without writing anything.
pub fn fit_slope(series: &[ConvergencePoint]) -> Slope {
    let nonzero: Vec<(f64, f64)> = series
        .iter()
        .filter(|p| !p.abs_error().is_zero())
        .map(|p| ((p.n as f64).ln(), rational::to_f64(&p.abs_error()).ln()))
        .collect();
    if nonzero.is_empty() {
        return Slope::ExactConvergence;
    }
    if nonzero.len() < 2 || nonzero.len() < series.len() {
        return Slope::Undetermined;
    }
    let k = nonzero.len() as f64;
    let mx = nonzero.iter().map(|p| p.0).sum::<f64>() / k;
    let my = nonzero.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = nonzero.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = nonzero.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Slope::Undetermined;
    }
    Slope::Fitted { slope: sxy / sxx }
}

/// One experiment row: pass/fail is computed from value, target and
/// tolerance, never entered by hand.
#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub inputs: serde_json::Value,
    pub value: String,
    pub target: Option<String>,
    pub tolerance: Option<String>,
    pub passed: Option<bool>,
}

impl ReportRow {
    /// An exact row; passes iff `value == target`.
    pub fn exact(
        experiment: impl Into<String>,
        inputs: serde_json::Value,
        value: &Rational,
        target: Option<&Rational>,
    ) -> Self {
        ReportRow {
            experiment: experiment.into(),
            inputs,
            value: rational::to_string(value),
            target: target.map(rational::to_string),
            tolerance: target.map(|_| "exact".to_string()),
            passed: target.map(|t| t == value),
        }
    }

    /// A float row; passes iff `|value - target| <= tolerance`.
    pub fn float(
        experiment: impl Into<String>,
        inputs: serde_json::Value,
        value: f64,
        target: Option<f64>,
        tolerance: f64,
    ) -> Self {
        ReportRow {
            experiment: experiment.into(),
            inputs,
            value: rational::format_f64(value),
            target: target.map(rational::format_f64),
            tolerance: target.map(|_| rational::format_f64(tolerance)),
            passed: target.map(|t| (value - t).abs() <= tolerance),
        }
    }

    /// A row whose outcome is a named check rather than a number.
    pub fn check(
        experiment: impl Into<String>,
        inputs: serde_json::Value,
        detail: impl Into<String>,
        passed: bool,
    ) -> Self {
        ReportRow {
            experiment: experiment.into(),
            inputs,
            value: detail.into(),
            target: None,
            tolerance: None,
            passed: Some(passed),
        }
    }
}

/// A full report with its resolved configuration.
#[derive(Clone, Debug, Serialize)]
pub struct ReportDocument {
    pub version: String,
    pub seed: Option<u64>,
    pub timestamp: u64,
    pub config: serde_json::Value,
    /// The command's primary output, if it has one beyond the rows.
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub result: serde_json::Value,
    pub rows: Vec<ReportRow>,
}

impl ReportDocument {
    pub fn new(seed: Option<u64>, config: serde_json::Value) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        ReportDocument {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            timestamp,
            config,
            result: serde_json::Value::Null,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    /// False if any row failed; rows without a verdict do not count.
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed != Some(false))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn series(errors: &[(usize, Rational)]) -> Vec<ConvergencePoint> {
        errors.iter().map(|(n, e)| ConvergencePoint { n: *n, value: int(1) + e, target: int(1) }).collect()
    }

    #[test]
    fn exact_inverse_n_decay() {
        let s = series(&[(4, ratio(1, 2)), (8, ratio(1, 4)), (16, ratio(1, 8))]);
        let mut buf = Vec::new();
        let slope = emit_convergence(&s, &mut buf).unwrap();
        let Slope::Fitted { slope } = slope else { panic!("{slope:?}") };
        assert!((slope + 1.0).abs() < 1e-12);
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "N,value,target,abs_error,error_times_N");
        assert!(rows[1..].iter().all(|r| r.ends_with(",2")));
    }

    #[test]
    fn zero_errors_give_the_sentinel() {
        let s = series(&[(2, int(0)), (4, int(0))]);
        assert_eq!(emit_convergence(&s, Vec::new()).unwrap(), Slope::ExactConvergence);
        let mixed = series(&[(2, int(0)), (4, ratio(1, 3)), (8, ratio(1, 9))]);
        assert_eq!(fit_slope(&mixed), Slope::Undetermined);
    }

    #[test]
    fn too_few_points_is_an_error() {
        let s = series(&[(4, int(1)), (4, int(2))]);
        assert!(emit_convergence(&s, Vec::new()).is_err());
    }

    #[test]
    fn rows_compute_their_verdicts() {
        let mut doc = ReportDocument::new(Some(3), serde_json::json!({"N": 2}));
        doc.push(ReportRow::exact("a", serde_json::Value::Null, &ratio(1, 2), Some(&ratio(1, 2))));
        doc.push(ReportRow::float("b", serde_json::Value::Null, 0.51, Some(0.5), 0.02));
        assert!(doc.all_passed());
        doc.push(ReportRow::float("c", serde_json::Value::Null, 0.6, Some(0.5), 0.02));
        assert!(!doc.all_passed());
        let json: serde_json::Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
        assert_eq!(json["rows"][0]["value"], "1/2");
        assert_eq!(json["rows"][2]["passed"], false);
    }
}
