//! Run one experiment preset end to end and print a condensed report.
//!
//!     cargo run --release --example run_preset -- noncompensated-superlinear

use she_lab::config::{load_preset, PRESET_NAMES};
use she_lab::experiment::run_experiment;

fn main() {
    let name = std::env::args().nth(1).unwrap_or_else(|| {
        eprintln!("usage: run_preset <{}>", PRESET_NAMES.join("|"));
        std::process::exit(2);
    });
    let preset = load_preset(&name).unwrap();
    let dir = std::env::temp_dir().join("she-lab-example").join(&name);
    let rep = run_experiment(&preset, 42, &dir).unwrap();
    println!("regime: {}   verdict: {:?}", rep.regime, rep.blowup.verdict);
    for r in &rep.blowup.rungs {
        println!(
            "rung dt={} replicas={} diverged={:.3} median_t={:?}",
            r.dt, r.replicas, r.diverged_fraction, r.median_divergence_time
        );
    }
    if let Some(b) = &rep.bound_check {
        println!("bound {} t*={:?} dominated={}", b.kind, b.t_star, b.dominated);
    }
    if let Some(p) = &rep.probe {
        println!("certified horizon: {:?}", p.certified_horizon);
    }
    println!("outputs in {}", dir.display());
}
