//! Render a result table as an aligned text summary plus a plot-ready CSV.
//!
//! The text groups rows by experiment and operation: per-τ medians and
//! interquartile ranges for maxima, probability curves for condition
//! checks, KS outcomes and growth-exponent fits where the ladder supports
//! them.  The companion CSV carries the same curves as
//! (statistic, τ, median, lower, upper, count) rows for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::Operation;
use crate::error::{Error, Result};
use crate::maxima::growth_exponent_fit;
use crate::stats::{median, quantile_sorted};
use crate::table::{ResultRow, ResultTable};

#[derive(Debug)]
pub struct Summary {
    pub text: String,
    pub companion_csv: String,
}

struct Companion {
    rows: Vec<[String; 8]>,
}

impl Companion {
    fn push(
        &mut self,
        experiment: &str,
        operation: Operation,
        statistic: &str,
        tau: Option<f64>,
        mid: f64,
        lower: f64,
        upper: f64,
        count: usize,
    ) {
        self.rows.push([
            experiment.to_string(),
            operation.to_string(),
            statistic.to_string(),
            tau.map(|t| format!("{t}")).unwrap_or_default(),
            format!("{mid:.16e}"),
            format!("{lower:.16e}"),
            format!("{upper:.16e}"),
            count.to_string(),
        ]);
    }

    fn render(&self) -> String {
        let mut s = String::from("experiment,operation,statistic,tau,mid,lower,upper,count\n");
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Values of one statistic grouped along the ladder, in τ order.
fn by_tau<'a>(
    rows: &[&'a ResultRow],
    statistic: &str,
) -> Vec<(f64, Vec<f64>)> {
    let mut m: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.statistic == statistic) {
        let Some(tau) = r.tau else { continue };
        m.entry(tau.to_bits())
            .or_insert_with(|| (tau, Vec::new()))
            .1
            .push(r.value);
    }
    let mut out: Vec<(f64, Vec<f64>)> = m.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn find(rows: &[&ResultRow], statistic: &str) -> Option<f64> {
    rows.iter().find(|r| r.statistic == statistic).map(|r| r.value)
}

fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (
        quantile_sorted(&v, 0.25),
        quantile_sorted(&v, 0.5),
        quantile_sorted(&v, 0.75),
    )
}

fn maxima_section(
    text: &mut String,
    companion: &mut Companion,
    experiment: &str,
    operation: Operation,
    rows: &[&ResultRow],
) {
    let power = by_tau(rows, "m-over-power");
    let btau = by_tau(rows, "m-over-btau");
    if !power.is_empty() {
        let _ = writeln!(
            text,
            "  {:>10}  {:>12} {:>12}  {:>12} {:>12}  {:>6}",
            "tau", "med M/t^da", "IQR", "med M/b", "IQR", "reps"
        );
        for ((tau, vals), (_, bvals)) in power.iter().zip(&btau) {
            let (q1, med, q3) = quartiles(vals);
            let (b1, bmed, b3) = quartiles(bvals);
            let _ = writeln!(
                text,
                "  {:>10}  {:>12.5e} {:>12.5e}  {:>12.5e} {:>12.5e}  {:>6}",
                tau,
                med,
                q3 - q1,
                bmed,
                b3 - b1,
                vals.len()
            );
            companion.push(experiment, operation, "m-over-power", Some(*tau), med, q1, q3, vals.len());
            companion.push(experiment, operation, "m-over-btau", Some(*tau), bmed, b1, b3, bvals.len());
        }

        let taus: Vec<f64> = power.iter().map(|e| e.0).collect();
        let raw_medians: Vec<f64> = power
            .iter()
            .map(|(tau, _)| {
                let raws: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.statistic == "m-over-power" && r.tau == Some(*tau)
                    })
                    .filter_map(|r| r.raw_value)
                    .collect();
                median(&raws)
            })
            .collect();
        if let Ok(fit) = growth_exponent_fit(&taus, &raw_medians) {
            let _ = writeln!(
                text,
                "  growth exponent of median M_tau:        {:+.4} (max log residual {:.2e})",
                fit.slope, fit.max_residual
            );
        }
        let btau_medians: Vec<f64> = btau.iter().map(|(_, v)| median(v)).collect();
        if let Ok(fit) = growth_exponent_fit(&taus, &btau_medians) {
            let _ = writeln!(
                text,
                "  growth exponent of median M_tau/b_tau:  {:+.4} (max log residual {:.2e})",
                fit.slope, fit.max_residual
            );
        }
        let power_medians: Vec<f64> = power.iter().map(|(_, v)| median(v)).collect();
        if power_medians.len() >= 2 && power_medians.windows(2).all(|w| w[1] < w[0]) {
            let _ = writeln!(
                text,
                "  median of M_tau/tau^(d/alpha) decreasing along the ladder"
            );
        }
    }

    if let Some(ks) = find(rows, "ks-statistic") {
        let crit5 = find(rows, "ks-critical-5pct").unwrap_or(f64::NAN);
        let n = find(rows, "ks-sample-size").unwrap_or(f64::NAN);
        let verdict = if ks < crit5 { "pass" } else { "FAIL" };
        let _ = writeln!(
            text,
            "  limit-law KS: statistic {ks:.5} vs 5% critical {crit5:.5} on {n:.0} maxima — {verdict}"
        );
        if let (Some(kx), Some(scale)) = (find(rows, "k-x"), find(rows, "frechet-scale")) {
            let _ = writeln!(
                text,
                "  limit constant K_X = {kx:.6}, Frechet scale {scale:.6}"
            );
        }
        companion.push(experiment, operation, "ks-statistic", None, ks, ks, ks, 1);
    }
}

fn condition_section(
    text: &mut String,
    companion: &mut Companion,
    experiment: &str,
    operation: Operation,
    rows: &[&ResultRow],
) {
    let probs = by_tau(rows, "pair-probability");
    let ses = by_tau(rows, "pair-probability-se");
    let bs = by_tau(rows, "b-tau");
    if !probs.is_empty() {
        let _ = writeln!(
            text,
            "  {:>10}  {:>14} {:>12}  {:>12}",
            "tau", "P(shared site)", "SE", "b_tau"
        );
        for (i, (tau, vals)) in probs.iter().enumerate() {
            let p = vals[0];
            let se = ses.get(i).map(|e| e.1[0]).unwrap_or(f64::NAN);
            let b = bs.get(i).map(|e| e.1[0]).unwrap_or(f64::NAN);
            let _ = writeln!(
                text,
                "  {:>10}  {:>14.5e} {:>12.3e}  {:>12.5e}",
                tau, p, se, b
            );
            companion.push(
                experiment,
                operation,
                "pair-probability",
                Some(*tau),
                p,
                p - se,
                p + se,
                1,
            );
        }
    }
    if let (Some(slope), Some(threshold)) =
        (find(rows, "b-slope"), find(rows, "divergence-threshold"))
    {
        let diverges = find(rows, "normalizer-diverges").unwrap_or(0.0) != 0.0;
        let _ = writeln!(
            text,
            "  b_tau growth slope {slope:+.4} vs threshold d/(2 alpha) = {threshold:.4}: \
             tau^(-d/2a) b_tau {}",
            if diverges { "diverges" } else { "does not diverge" }
        );
    }
}

fn classify_section(text: &mut String, rows: &[&ResultRow]) {
    for r in rows.iter().filter(|r| r.statistic.starts_with("verdict/")) {
        let _ = writeln!(
            text,
            "  verdict: {}",
            r.statistic.trim_start_matches("verdict/")
        );
    }
    let slopes: Vec<f64> = rows
        .iter()
        .filter(|r| r.statistic == "slope")
        .map(|r| r.value)
        .collect();
    if !slopes.is_empty() {
        let _ = writeln!(
            text,
            "  {} sampled states, median lifetime slope {:+.4}",
            slopes.len(),
            median(&slopes)
        );
    }
}

fn simulate_section(text: &mut String, rows: &[&ResultRow]) {
    let maxes: Vec<f64> = rows
        .iter()
        .filter(|r| r.statistic == "max-abs")
        .map(|r| r.value)
        .collect();
    if !maxes.is_empty() {
        let (q1, med, q3) = quartiles(&maxes);
        let _ = writeln!(
            text,
            "  {} replications; max |X| median {:.5e}, IQR [{:.5e}, {:.5e}]",
            maxes.len(),
            med,
            q1,
            q3
        );
    }
}

/// Summarize a table; sections follow the order experiments and operations
/// first appear in the rows.
pub fn report(table: &ResultTable) -> Result<Summary> {
    if table.is_empty() {
        return Err(Error::Data(
            "result table is empty; nothing to summarize".into(),
        ));
    }
    let mut order: Vec<(String, Operation)> = Vec::new();
    for r in table.rows() {
        let key = (r.experiment.clone(), r.operation);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    let mut text = String::new();
    let mut companion = Companion { rows: Vec::new() };
    for (experiment, operation) in order {
        let rows: Vec<&ResultRow> = table
            .rows()
            .iter()
            .filter(|r| r.experiment == experiment && r.operation == operation)
            .collect();
        let _ = writeln!(text, "experiment '{experiment}' — {operation}");
        match operation {
            Operation::Maxima | Operation::LimitTest => {
                maxima_section(&mut text, &mut companion, &experiment, operation, &rows)
            }
            Operation::ConditionCheck => {
                condition_section(&mut text, &mut companion, &experiment, operation, &rows)
            }
            Operation::Classify => classify_section(&mut text, &rows),
            Operation::Simulate => simulate_section(&mut text, &rows),
            Operation::Report => {}
        }
        let failures = rows.iter().filter(|r| r.statistic == "error").count();
        if failures > 0 {
            let _ = writeln!(text, "  {failures} replication(s) failed");
        }
        text.push('\n');
    }
    Ok(Summary {
        text,
        companion_csv: companion.render(),
    })
}
