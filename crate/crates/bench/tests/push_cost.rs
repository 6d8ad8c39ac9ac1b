use std::sync::Arc;
use std::time::{Duration, Instant};

use trn_bench::{chunks, model, params};
use trn_core::model::FusionVariant;
use trn_core::OnlineDetector;

/// Fastest of several timed runs of `n` pushes.
fn best_of(det: &mut OnlineDetector, input: &[trn_core::ChunkInput], rounds: usize) -> Duration {
    (0..rounds)
        .map(|_| {
            let start = Instant::now();
            for c in input {
                std::hint::black_box(det.push_chunk(c).unwrap());
            }
            start.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn push_cost_does_not_grow_with_history() {
    let cfg = model(FusionVariant::TwoStream, 64);
    let p = Arc::new(params(&cfg));
    let input = chunks(&cfg, 200, 5);

    let mut fresh = OnlineDetector::new(cfg.clone(), Arc::clone(&p)).unwrap();
    let mut long = OnlineDetector::new(cfg, p).unwrap();
    for _ in 0..50 {
        for c in &input {
            long.push_chunk(c).unwrap();
        }
    }
    assert_eq!(long.chunks_seen(), 10_000);

    // Interleave so drift in machine load hits both sides.
    let (mut a, mut b) = (Duration::MAX, Duration::MAX);
    for _ in 0..5 {
        fresh.reset();
        a = a.min(best_of(&mut fresh, &input, 1));
        b = b.min(best_of(&mut long, &input, 1));
    }
    let ratio = b.as_secs_f64() / a.as_secs_f64();
    assert!(
        (0.8..=1.2).contains(&ratio),
        "after 10000 chunks: {b:?} vs fresh {a:?} per 200 pushes (ratio {ratio:.3})"
    );
}
