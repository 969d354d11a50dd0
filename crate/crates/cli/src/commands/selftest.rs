use std::time::Instant;

use anyhow::{Context, Result};
use saam_core::selftest::run_all;
use saam_core::tensor::GradCheckConfig;
use serde_json::json;

use crate::data::write_lines;
use crate::manifest::RunManifest;
use crate::{NumericFailure, SelftestArgs};

pub fn run(args: SelftestArgs) -> Result<()> {
    let mut manifest = RunManifest::start("selftest");
    let cfg = GradCheckConfig {
        seed: args.seed,
        fault: args.inject_fault,
        ..GradCheckConfig::default()
    };
    manifest.seed = Some(args.seed);
    manifest.config = json!({
        "step": cfg.step,
        "tolerance": cfg.tolerance,
        "exhaustive_limit": cfg.exhaustive_limit,
        "sample_size": cfg.sample_size,
        "inject_fault": args.inject_fault.map(|o| o.name()),
    });
    let started = Instant::now();
    let outcomes = run_all(&cfg);
    let lines: Vec<String> = outcomes.iter().map(|o| o.render()).collect();
    for l in &lines {
        println!("{l}");
    }
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| format!("{}/{}", o.suite, o.name))
        .collect();
    println!(
        "{} checks, {} failed, {:.1}s",
        outcomes.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    manifest.count("checks", outcomes.len());
    manifest.count("failed", failed.len());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let report = dir.join("selftest.txt");
        write_lines(&report, &lines)?;
        manifest.output("report", &report);
        manifest.write(&dir.join("selftest.manifest.json"))?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(NumericFailure(format!("failed checks: {}", failed.join(", "))).into())
    }
}
