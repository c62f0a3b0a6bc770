mod common;

use std::time::Instant;

use jay_repair::corpus::{Direction, TrainingSample};
use jay_repair::mechanical::{generate_mechanical_dataset, Rule};
use jay_repair::model::{mean_loss, train, ModelConfig, Seq2Seq, TrainConfig};
use jay_repair::representation::RepresentationConfig;

fn fifty_fix_samples() -> (usize, Vec<TrainingSample>) {
    let c = common::corpus();
    let v = common::vocab(&c);
    let ds = generate_mechanical_dataset(&c.correct(), &Rule::ALL, 1, 9, &v, &RepresentationConfig::default());
    let fixes: Vec<TrainingSample> =
        ds.samples.into_iter().filter(|s| s.direction == Direction::Fix).step_by(3).take(50).collect();
    assert_eq!(fixes.len(), 50);
    (v.len(), fixes)
}

#[test]
fn memorizes_fifty_samples() {
    let (vocab, samples) = fifty_fix_samples();
    let refs: Vec<&TrainingSample> = samples.iter().collect();
    let mut m = Seq2Seq::new(ModelConfig { seed: 1, ..ModelConfig::tiny(vocab) }).unwrap();
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        max_epochs: 500,
        patience: 500,
        stop_below: Some(0.05),
        seed: 1,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let out = train(&mut m, &refs, &refs, &cfg).unwrap();
    eprintln!("epochs {} best {} in {:?}", out.epochs_run, out.best_val_loss, t.elapsed());
    assert!(mean_loss(&m, &refs).unwrap() < 0.05);
    let exact = samples.iter().filter(|s| m.greedy(&s.input_tokens, 64).unwrap() == s.target_tokens).count();
    eprintln!("exact {exact}/50");
    assert!(exact >= 45);
}
