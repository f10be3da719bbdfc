//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are reported faithfully but do not fail the
//! process; any other failure does. A known-red criterion that turns green is
//! announced so the list can be trimmed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use adaptor_lab::scenario::{load_scenario, run_scenario, Manifest};

/// Weighted decay at n = 768, R = 60: the box horizon is about t = 5, so the
/// fit over [5, 50] measures reflected waves.
const KNOWN_RED: &[u32] = &[3];

struct Outcome {
    exit: i32,
    manifest: Option<Manifest>,
    elapsed: Duration,
    series: BTreeMap<String, Vec<u8>>,
}

fn run(name: &str, out: &Path) -> Outcome {
    let start = Instant::now();
    let config = match load_scenario(name) {
        Ok(c) => c,
        Err(e) => {
            return Outcome { exit: if e.is_config() { 2 } else { 1 }, manifest: None, elapsed: start.elapsed(), series: BTreeMap::new() }
        }
    };
    match run_scenario(&config, out) {
        Ok(a) => {
            let elapsed = start.elapsed();
            let mut series = BTreeMap::new();
            if let Ok(entries) = fs::read_dir(a.dir.join("series")) {
                for e in entries.flatten() {
                    series.insert(e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap_or_default());
                }
            }
            Outcome { exit: a.exit_code(), manifest: Some(a.manifest), elapsed, series }
        }
        Err(e) => Outcome { exit: if e.is_config() { 2 } else { 1 }, manifest: None, elapsed: start.elapsed(), series: BTreeMap::new() },
    }
}

impl Outcome {
    fn suite_passed(&self, suite: &str) -> bool {
        self.manifest
            .as_ref()
            .and_then(|m| m.suites.iter().find(|s| s.suite == suite))
            .is_some_and(|s| s.passed && s.error.is_none())
    }

    fn check(&self, suite: &str, prefix: &str) -> Vec<(f64, bool)> {
        self.manifest
            .iter()
            .flat_map(|m| m.suites.iter().filter(|s| s.suite == suite))
            .flat_map(|s| s.checks.iter().filter(|c| c.name.starts_with(prefix)))
            .map(|c| (c.measured, c.pass))
            .collect()
    }

    fn fit_slope(&self, suite: &str, name: &str) -> Option<f64> {
        self.manifest
            .iter()
            .flat_map(|m| m.suites.iter().filter(|s| s.suite == suite))
            .flat_map(|s| s.fits.iter().filter(|f| f.name == name))
            .map(|f| f.slope)
            .next()
    }

    fn all_pass(&self, suite: &str, prefix: &str) -> bool {
        let c = self.check(suite, prefix);
        !c.is_empty() && c.iter().all(|&(_, p)| p)
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let out = tmp.path();
    let mut verdicts: Vec<(u32, bool, String)> = Vec::new();

    let free = run("free", out);
    let radial = run("positive_potential_radial", out);
    let well = run("well_with_barrier", out);
    let small_w = run("self_similar_W", out);
    let large_w = run("self_similar_W_large", out);
    let nls = run("cubic_nls_small", out);
    let morawetz = run("morawetz_radial", out);

    let c1 = free.suite_passed("operator_identities")
        && free.all_pass("operator_identities", "i[H,A] residual ratio")
        && free.all_pass("operator_identities", "stencil-factor residual ratio")
        && free.all_pass("operator_identities", "i[H,A] weak residual")
        && free.elapsed <= Duration::from_secs(60);
    verdicts.push((
        1,
        c1,
        format!(
            "operator identities: i[H,A] residual {:?}, halving ratios {:?}; runtime {:.1}s",
            free.check("operator_identities", "i[H,A] weak residual").first().map(|c| c.0),
            free.check("operator_identities", "i[H,A] residual ratio").first().map(|c| c.0),
            free.elapsed.as_secs_f64()
        ),
    ));

    verdicts.push((
        2,
        radial.suite_passed("adaptor"),
        format!("adaptor suite on positive_potential_radial: {} checks", radial.check("adaptor", "").len()),
    ));

    let slope3 = radial.fit_slope("weighted_decay", "weighted propagator norm");
    let c3 = radial.suite_passed("weighted_decay") && radial.elapsed <= Duration::from_secs(180);
    verdicts.push((3, c3, format!("weighted decay slope {slope3:?} on [5, 50], want [-1.25, -0.80]; runtime {:.1}s", radial.elapsed.as_secs_f64())));

    verdicts.push((
        4,
        radial.suite_passed("positive_potential"),
        format!(
            "L6 slope {:?}, first-level slope {:?}, sharp-quantity growth {:?}",
            radial.fit_slope("positive_potential", "L6 norm"),
            radial.fit_slope("positive_potential", "first-level bound"),
            radial.fit_slope("positive_potential", "sharp quantity, log-log")
        ),
    ));

    let delta = well.check("general_potential", "genericity margin").first().map(|c| c.0);
    verdicts.push((
        5,
        well.suite_passed("general_potential") && delta.is_some_and(|d| d > 0.0),
        format!("delta* {delta:?}, lens spread {:?}", well.check("general_potential", "lens lower-bound spread").first().map(|c| c.0)),
    ));

    verdicts.push((
        6,
        small_w.suite_passed("time_dependent") && large_w.suite_passed("time_dependent"),
        format!(
            "small W ibp residual {:?}; large W power-law slopes {:?}",
            small_w.check("time_dependent", "integration-by-parts").first().map(|c| c.0),
            [large_w.check("time_dependent", "dispersive integral I(T) power-law"), large_w.check("time_dependent", "forcing integral power-law")]
                .concat()
                .iter()
                .map(|c| c.0)
                .collect::<Vec<_>>()
        ),
    ));

    verdicts.push((7, nls.suite_passed("nls"), format!("sup-norm slope {:?}", nls.fit_slope("nls", "|psi|_inf"))));

    verdicts.push((
        8,
        morawetz.suite_passed("morawetz"),
        format!("C, C' refinement changes {:?}", morawetz.check("morawetz", "Morawetz C").iter().map(|c| c.0).collect::<Vec<_>>()),
    ));

    let negatives: Vec<(&str, i32)> = ["negative_flipped_q", "negative_corrupt_derivative", "negative_focusing"]
        .iter()
        .map(|n| (*n, run(n, out).exit))
        .collect();
    verdicts.push((9, negatives.iter().all(|&(_, e)| e != 0), format!("exit codes {negatives:?}")));

    let twin_dir = out.join("twin");
    let twin = [run("self_similar_W", &twin_dir), run("cubic_nls_small", &twin_dir)];
    let identical = [&small_w, &nls].iter().zip(&twin).all(|(a, b)| !a.series.is_empty() && a.series == b.series);
    verdicts.push((10, identical, "self_similar_W and cubic_nls_small series compared byte for byte".into()));

    let mut unexpected = 0;
    for (id, pass, detail) in &verdicts {
        let tag = if *pass { "PASS" } else { "FAIL" };
        let note = match (pass, KNOWN_RED.contains(id)) {
            (false, true) => " (known red)",
            (true, true) => " (known red now green)",
            _ => "",
        };
        println!("criterion {id:>2}: {tag}{note}  {detail}");
        if !pass && !KNOWN_RED.contains(id) {
            unexpected += 1;
        }
    }
    let passed = verdicts.iter().filter(|v| v.1).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    if unexpected > 0 {
        eprintln!("acceptance: {unexpected} criteria failed outside the known-red list");
        std::process::exit(1);
    }
}
