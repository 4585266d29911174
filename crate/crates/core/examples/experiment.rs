//! Train one run with the default config and print its evaluation table.
//!
//! `cargo run --release --example experiment -- [proposed|baseline] [seed] [cylinder|elongated] [center|left|right]`
//!
//! Set `DUMP=path` to keep the run report.

use std::time::Instant;

use selfgrasp::orchestrator::{RunConfig, Trainer};
use selfgrasp::simenv::{Condition, ObjectKind};

fn main() -> selfgrasp::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = RunConfig {
        mode: args.get(1).map_or("proposed", |s| s.as_str()).parse()?,
        seed: args.get(2).map_or(Ok(0), |s| s.parse()).expect("seed"),
        ..RunConfig::default()
    };
    if args.get(3).map(|s| s.as_str()) == Some("elongated") {
        cfg.object_kind = ObjectKind::Elongated;
    }
    if let Some(d) = args.get(4) {
        cfg.design = d.parse()?;
    }
    let start = Instant::now();
    let mut tr = Trainer::new(cfg)?;
    let mut report = Vec::new();
    let s = tr.run(&mut report, None)?;
    if let Ok(path) = std::env::var("DUMP") {
        std::fs::write(path, &report)?;
    }
    let t = tr.evaluate()?;
    for r in &t.rows {
        println!("{} objects: strict {:.2} any {:.2}", r.objects, r.strict_rate(), r.any_rate());
    }
    println!(
        "total strict {:.3} any {:.3} | successes {} trials {} aborted {} detector steps {} evaluator steps {} | {:.1}s",
        t.rate(Condition::Strict),
        t.rate(Condition::AnySuccess),
        s.counters.successes,
        s.counters.trials,
        s.counters.aborted_episodes,
        s.detector.steps,
        s.counters.evaluator_steps,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
