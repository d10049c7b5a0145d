//! CSV exports for plotting; JSON goes through serde directly.

use std::fmt::Write;

use spadqrng_core::stats::{CorrelationMap, HistogramReport, TestReport, Uniformity};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

/// One line per test row: name, pass count, threshold, uniformity P, verdict.
pub fn battery_csv(report: &TestReport) -> String {
    let mut s = String::from("test,sequences,pass_count,pass_threshold,uniformity_p,passed,skipped\n");
    for r in report.rows.iter().chain(&report.template_rows) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.name,
            r.sequences,
            r.pass_count,
            r.pass_threshold,
            opt(r.uniformity_p()),
            r.passed,
            r.skipped.as_deref().unwrap_or("").replace(',', ";")
        );
    }
    s
}

pub fn uniformity_csv(u: &Uniformity) -> String {
    let mut s = String::from("bin_low,bin_high,count\n");
    for (i, c) in u.bins.iter().enumerate() {
        let _ = writeln!(s, "{:.1},{:.1},{}", i as f64 / 10.0, (i + 1) as f64 / 10.0, c);
    }
    let _ = writeln!(s, "# chi_square={} p_value={}", u.chi_square, u.p_value);
    s
}

pub fn histogram_csv(h: &HistogramReport) -> String {
    let mut s = String::from("weight,count,expected\n");
    for (k, (c, e)) in h.counts.iter().zip(h.expected()).enumerate() {
        let _ = writeln!(s, "{k},{c},{e}");
    }
    s
}

pub fn correlation_csv(map: &CorrelationMap) -> String {
    let mut s = String::from("d_row,d_col,correlation\n");
    for (dr, dc, c) in &map.entries {
        let _ = writeln!(s, "{dr},{dc},{}", opt(c.value()));
    }
    s
}

/// Human-readable battery table.
pub fn battery_summary(report: &TestReport) -> String {
    let mut s = format!(
        "{} sequences x {} bits, pass threshold {}/{}\n",
        report.sequences, report.sequence_len, report.pass_threshold, report.sequences
    );
    for r in &report.rows {
        match &r.skipped {
            Some(reason) => {
                let _ = writeln!(s, "{:<24} skipped: {reason}", r.name);
            }
            None => {
                let _ = writeln!(
                    s,
                    "{:<24} {:>10} {:>5}/{:<5} {}",
                    r.name,
                    opt(r.uniformity_p().map(|p| (p * 1e6).round() / 1e6)),
                    r.pass_count,
                    r.sequences,
                    if r.passed { "ok" } else { "FAIL" }
                );
            }
        }
    }
    let _ = writeln!(s, "verdict: {}", if report.passed { "pass" } else { "FAIL" });
    s
}
