//! Discrete error norms, log-log rate fits and error tables.

use std::io::Write;

use mmd_core::Point;
use serde::Serialize;

use crate::BenchError;

/// Discrete errors over all points, in three normalizations.
///
/// `*_sum` are the plain sums `sqrt(Σ e_i²)` and `sqrt(Σ |Δσ_i|²/ε_i)`.
/// `*_weighted` insert the volumes `μ_i`. `*_relative` divide the plain sum by
/// the same sum of the exact values and are the headline norms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ErrorNorms {
    pub l2_sum: f64,
    pub l2_weighted: f64,
    pub l2_relative: f64,
    pub h1_sum: f64,
    pub h1_weighted: f64,
    pub h1_relative: f64,
}

impl ErrorNorms {
    /// Column names matching [`ErrorNorms::values`].
    pub const COLUMNS: [&'static str; 6] =
        ["l2_rel", "h1_rel", "l2_sum", "l2_mu", "h1_sum", "h1_mu"];

    pub fn values(&self) -> Vec<f64> {
        vec![
            self.l2_relative,
            self.h1_relative,
            self.l2_sum,
            self.l2_weighted,
            self.h1_sum,
            self.h1_weighted,
        ]
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Scalar part only: `(sum, weighted, relative)` of `u − exact`.
pub fn l2_norms(u: &[f64], exact: &[f64], mu: &[f64]) -> (f64, f64, f64) {
    assert_eq!(u.len(), exact.len());
    assert_eq!(u.len(), mu.len());
    let mut sq = 0.0;
    let mut w = 0.0;
    let mut ex = 0.0;
    for ((a, b), m) in u.iter().zip(exact).zip(mu) {
        let e = a - b;
        sq += e * e;
        w += m * e * e;
        ex += b * b;
    }
    (sq.sqrt(), w.sqrt(), ratio(sq.sqrt(), ex.sqrt()))
}

/// ℓ2 norms of `u − exact` and h1 norms of `flux − exact_flux` scaled by
/// `1/ε_i`, summed over all points.
pub fn error_norms(
    u: &[f64],
    exact: &[f64],
    flux: &[Point],
    exact_flux: &[Point],
    epsilon: &[f64],
    mu: &[f64],
) -> ErrorNorms {
    let (l2_sum, l2_weighted, l2_relative) = l2_norms(u, exact, mu);
    assert_eq!(flux.len(), exact_flux.len());
    let mut sq = 0.0;
    let mut w = 0.0;
    let mut ex = 0.0;
    for (((s, t), eps), m) in flux.iter().zip(exact_flux).zip(epsilon).zip(mu) {
        let d = *s - *t;
        let e2 = d.dot(d) / eps;
        sq += e2;
        w += m * e2;
        ex += t.dot(*t) / eps;
    }
    ErrorNorms {
        l2_sum,
        l2_weighted,
        l2_relative,
        h1_sum: sq.sqrt(),
        h1_weighted: w.sqrt(),
        h1_relative: ratio(sq.sqrt(), ex.sqrt()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub rows_used: usize,
}

/// How rates are estimated; written next to every fitted rate.
pub const RATE_METHOD: &str = "least-squares slope of log(error) against log(1/N)";

/// Least-squares slope of `log e` against `log(1/N)` over the rows with a
/// finite positive error. Needs at least two such rows.
pub fn fit_rate(sizes: &[usize], errors: &[Option<f64>]) -> Option<RateFit> {
    let pts: Vec<(f64, f64)> = sizes
        .iter()
        .zip(errors)
        .filter_map(|(&n, e)| match e {
            Some(e) if e.is_finite() && *e > 0.0 => Some(((1.0 / n as f64).ln(), e.ln())),
            _ => None,
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| RateFit {
        rate: sxy / sxx,
        rows_used: pts.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub n: usize,
    pub points: usize,
    /// Fill distance of the cloud.
    pub h: f64,
    /// One entry per column; `None` where the solve did not converge.
    pub values: Vec<Option<f64>>,
    pub iterations: usize,
    pub seconds: f64,
    pub converged: bool,
}

/// Errors of one case (boundary condition, Péclet number, volume scheme, ...)
/// over a sequence of lattice sizes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTable {
    pub case: String,
    pub columns: Vec<String>,
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn new(case: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            case: case.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ErrorRow) {
        assert_eq!(row.values.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    fn column(&self, name: &str) -> usize {
        self.columns
            .iter()
            .position(|c| c == name)
            .unwrap_or_else(|| panic!("no column '{name}' in table '{}'", self.case))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.n).collect()
    }

    /// Column values; rows that did not converge read as `None`.
    pub fn values(&self, name: &str) -> Vec<Option<f64>> {
        let c = self.column(name);
        self.rows
            .iter()
            .map(|r| if r.converged { r.values[c] } else { None })
            .collect()
    }

    pub fn value_at(&self, name: &str, n: usize) -> Option<f64> {
        let c = self.column(name);
        self.rows
            .iter()
            .find(|r| r.n == n && r.converged)
            .and_then(|r| r.values[c])
    }

    pub fn rate(&self, name: &str) -> Option<RateFit> {
        fit_rate(&self.sizes(), &self.values(name))
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "n.c.".to_string(), |x| format!("{x:.6e}"))
}

/// Writes all tables into one wide CSV; the tables must share columns.
/// Timings are left out so that reruns reproduce the file byte for byte.
pub fn write_errors_csv<W: Write>(out: W, tables: &[ErrorTable]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = tables.first() else {
        return Ok(());
    };
    let mut header = vec!["case", "N", "points", "h_fill", "converged", "iterations"];
    header.extend(first.columns.iter().map(String::as_str));
    w.write_record(&header)?;
    for t in tables {
        assert_eq!(
            t.columns, first.columns,
            "tables in one CSV must share columns"
        );
        for r in &t.rows {
            let mut rec = vec![
                t.case.clone(),
                r.n.to_string(),
                r.points.to_string(),
                format!("{:.6e}", r.h),
                r.converged.to_string(),
                r.iterations.to_string(),
            ];
            rec.extend(
                r.values
                    .iter()
                    .map(|v| fmt_value(if r.converged { *v } else { None })),
            );
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `case,norm,rate,rows_used,method` for every column of every table.
pub fn write_rates_csv<W: Write>(out: W, tables: &[ErrorTable]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "norm", "rate", "rows_used", "method"])?;
    for t in tables {
        for c in &t.columns {
            let fit = t.rate(c);
            w.write_record([
                t.case.as_str(),
                c.as_str(),
                &fit.map_or_else(|| "n/a".into(), |f| format!("{:.4}", f.rate)),
                &fit.map_or(0, |f| f.rows_used).to_string(),
                RATE_METHOD,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_errors_gives_rate_one() {
        let fit = fit_rate(&[16, 32], &[Some(0.1), Some(0.05)]).unwrap();
        assert!((fit.rate - 1.0).abs() < 1e-12);
        assert_eq!(fit.rows_used, 2);
    }

    #[test]
    fn rate_recovers_power_law_and_skips_gaps() {
        let sizes = [8, 16, 32, 64, 128];
        let errs: Vec<Option<f64>> = sizes
            .iter()
            .map(|&n| Some(3.0 * (n as f64).powf(-1.7)))
            .collect();
        assert!((fit_rate(&sizes, &errs).unwrap().rate - 1.7).abs() < 1e-12);
        let gappy = [None, errs[1], None, errs[3], Some(f64::NAN)];
        let fit = fit_rate(&sizes, &gappy).unwrap();
        assert_eq!(fit.rows_used, 2);
        assert!((fit.rate - 1.7).abs() < 1e-12);
        assert!(fit_rate(&sizes, &[None, Some(0.1), None, None, None]).is_none());
    }

    #[test]
    fn single_point_error_is_its_magnitude() {
        let n = error_norms(
            &[1.5],
            &[1.0],
            &[Point::new(0.0, 0.0)],
            &[Point::new(0.0, 0.0)],
            &[1.0],
            &[0.25],
        );
        assert_eq!(n.l2_sum, 0.5);
        assert_eq!(n.l2_weighted, 0.25);
        assert_eq!(n.l2_relative, 0.5);
        assert_eq!(n.h1_sum, 0.0);
    }

    #[test]
    fn h1_scales_with_inverse_diffusivity() {
        let flux = [Point::new(3.0, 4.0)];
        let exact = [Point::new(0.0, 0.0)];
        let n = error_norms(&[0.0], &[0.0], &flux, &exact, &[4.0], &[1.0]);
        assert!((n.h1_sum - 2.5).abs() < 1e-15);
    }

    #[test]
    fn csv_marks_non_converged_rows() {
        let mut t = ErrorTable::new("case", &["l2"]);
        for (n, conv) in [(16, true), (32, false)] {
            t.push(ErrorRow {
                n,
                points: n * n,
                h: 1.0 / n as f64,
                values: vec![Some(0.1)],
                iterations: 3,
                seconds: 0.0,
                converged: conv,
            });
        }
        let mut buf = Vec::new();
        write_errors_csv(&mut buf, &[t.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().ends_with("n.c."));
        assert_eq!(t.values("l2"), vec![Some(0.1), None]);
        assert!(t.rate("l2").is_none());
    }
}
