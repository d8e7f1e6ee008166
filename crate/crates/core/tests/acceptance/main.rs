//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Set `GELDA_ACCEPTANCE` to a
//! comma-separated list of name fragments to run a subset.

#[path = "../common/mod.rs"]
mod common;
mod oracles;
mod pipeline;

use std::time::Instant;

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Criterion = (&'static str, fn(&mut oracles::Shared) -> Check);

const CRITERIA: &[Criterion] = &[
    ("gradient_suite", oracles::gradient_suite),
    ("point_mass_oracle", oracles::point_mass),
    ("gaussian_conditional_oracle", oracles::gaussian_conditional),
    ("bayes_denoiser_probe", oracles::bayes_probe),
    ("cfg_identities", oracles::cfg_identities),
    ("sampler_closed_forms", oracles::sampler_closed_forms),
    ("zero_shot_transfer", pipeline::zero_shot_transfer),
    ("few_shot_ordering", pipeline::few_shot_ordering),
    ("metrics_oracle", oracles::metrics_oracle),
    (
        "scenario_freezing_isolation",
        pipeline::scenario_freezing_isolation,
    ),
    ("format_fuzzing", oracles::format_fuzzing),
];

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    let filter: Vec<String> = std::env::var("GELDA_ACCEPTANCE")
        .map(|s| {
            s.split(',')
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect()
        })
        .unwrap_or_default();
    if std::env::args().any(|a| a == "--list") {
        for (name, _) in CRITERIA {
            println!("{name}: test");
        }
        return;
    }
    let mut shared = oracles::Shared::default();
    let mut failed = Vec::new();
    for (name, run) in CRITERIA {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let check = run(&mut shared);
        let status = if check.pass { "PASS" } else { "FAIL" };
        println!(
            "{status} {name} ({:.1}s): {}",
            start.elapsed().as_secs_f64(),
            check.detail
        );
        if !check.pass {
            failed.push(*name);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
