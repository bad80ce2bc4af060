// Scratch harness for predictor hyperparameter tuning. Not part of the build
// contract; run with `cargo run -p neursplit-core --example tune --features std`.

use neursplit_core::predictor::{train_adaptive, TrainConfig};
use neursplit_core::synth::planted_mask_dataset;

fn main() {
    // The acceptance-critical settings: sparsity >= 0.9 must reach recall
    // 0.95 within a hidden budget of ~8, and 0.95-vs-0.5 sizing must be
    // monotone.
    for (d, m, rank, sparsity, zipf, n, h_max) in [
        (64usize, 128usize, 2usize, 0.9f64, 0.7f64, 640usize, Some(8usize)),
        (64, 128, 2, 0.95, 0.7, 640, Some(8)),
        (64, 128, 2, 0.5, 0.7, 640, Some(8)),
        (32, 64, 2, 0.95, 0.7, 480, None),
    ] {
        for epochs in [150usize, 300] {
            for lr in [0.02f32, 0.05] {
                for pw in [3.0f32, 5.0] {
                    let mut recalls = Vec::new();
                    let mut hiddens = Vec::new();
                    for seed in 0..6u64 {
                        let data =
                            planted_mask_dataset(d, m, rank, sparsity, zipf, n, seed).unwrap();
                        let cfg = TrainConfig {
                            epochs,
                            learning_rate: lr,
                            pos_weight: pw,
                            seed,
                            h_max,
                            ..TrainConfig::default()
                        };
                        let (_, report) = train_adaptive(&data, 0, sparsity, &cfg).unwrap();
                        recalls.push(report.recall);
                        hiddens.push(report.final_hidden);
                    }
                    let min = recalls.iter().cloned().fold(f64::INFINITY, f64::min);
                    println!(
                        "d={d} m={m} r={rank} s={sparsity} z={zipf} n={n} hmax={h_max:?} \
                         ep={epochs} lr={lr} pw={pw}: min={min:.4} recalls={recalls:.3?} \
                         hidden={hiddens:?}"
                    );
                }
            }
        }
        println!();
    }
}
