//! Simulates two XP300 sessions, trains on one and decodes the other.

use std::error::Error;

use xp300::patterns::{seeded_pattern, PatternKind, SpellerMatrix};
use xp300::pipeline::{evaluate, train, PipelineConfig};
use xp300::scheduler::{make_schedule, Paradigm, ScheduleParams};
use xp300::synth::{synthesize_session, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let m = SpellerMatrix::standard();
    let targets: Vec<_> = "HELLO_WORLD".chars().map(|c| m.find(c).unwrap()).collect();
    let pattern = seeded_pattern(PatternKind::Constrained, 6, Some(1))?;
    let params = ScheduleParams::new(10, 0.133, 7);
    let a = make_schedule(Paradigm::Xp300, &pattern, &params, &targets)?;
    let b = make_schedule(Paradigm::Xp300, &pattern, &ScheduleParams { seed: 8, ..params }, &targets)?;

    let synth = SynthConfig::default();
    let cfg = PipelineConfig::default();
    let model = train(&synthesize_session(&a, &synth, 1)?, &cfg)?;
    let eval = evaluate(&model, &b, &synthesize_session(&b, &synth, 2)?, &m, &cfg)?;

    for (k, (acc, itr)) in eval.accuracy.iter().zip(&eval.itr_bpm).enumerate() {
        println!("k={:2}  accuracy={acc:.3}  itr={itr:.2} bpm", k + 1);
    }
    println!("auc={:.4}", eval.auc());
    Ok(())
}
