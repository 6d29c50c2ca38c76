//! Reference computations shared by the integration tests. None of these call
//! into the library's solvers or discounting code.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::io::Write;
use std::path::PathBuf;

/// Best total value over every subset of `open` whose ids are pairwise distinct
/// and which `feasible` accepts. The empty set is always a candidate.
pub fn best_subset_value<F>(open: &[usize], ids: &[&str], values: &[i64], feasible: F) -> i64
where
    F: Fn(&[usize]) -> bool,
{
    assert!(
        open.len() <= 20,
        "exhaustive search over {} items",
        open.len()
    );
    let mut best = 0i64;
    let mut set = Vec::with_capacity(open.len());
    for mask in 0u32..(1u32 << open.len()) {
        set.clear();
        set.extend(
            (0..open.len())
                .filter(|b| mask >> b & 1 == 1)
                .map(|b| open[b]),
        );
        let distinct: BTreeSet<&str> = set.iter().map(|&i| ids[i]).collect();
        if distinct.len() != set.len() {
            continue;
        }
        let v: i64 = set.iter().map(|&i| values[i]).sum();
        if v > best && feasible(&set) {
            best = v;
        }
    }
    best
}

/// Σ_{t=0}^{T} (1 + r)^-t as a geometric series.
pub fn annuity_closed_form(rate: f64, years: u32) -> f64 {
    if rate == 0.0 {
        return years as f64 + 1.0;
    }
    let q = 1.0 / (1.0 + rate);
    (1.0 - q.powi(years as i32 + 1)) / (1.0 - q)
}

/// `share * budget` rounded down, for shares that are exact binary fractions.
pub fn share_cap(share: f64, budget: i64) -> i64 {
    (share * budget as f64).floor() as i64
}

pub fn resources_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../resources")
}

pub fn defaults_toml() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/defaults.toml")
}

/// Prints one verdict line, bypassing the test harness's output capture, and
/// fails the test when `pass` is false.
pub fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {criterion:>2} [{tag}] {name}: {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
    assert!(pass, "criterion {criterion} ({name}) failed");
}
