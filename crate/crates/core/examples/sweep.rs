//! Scratch experiment: robustness of candidate default weights.

use colalign_core::synth::{recovery_study, synthetic_dorf, RecoveryTemplate};
use colalign_core::{BoldParams, SkewnessSource};

fn main() {
    for db_seed in [2024u64, 1u64] {
        let db = synthetic_dorf(201, db_seed).unwrap();
        for (l1, l2) in [(1.0, 20.0), (0.5, 20.0), (0.0, 20.0), (1.0, 40.0), (0.5, 40.0), (0.0, 40.0), (1.0, 80.0), (0.0, 80.0)] {
            for seed in [7u64, 99u64, 12345u64] {
                let template = RecoveryTemplate {
                    bold: BoldParams {
                        lambda1: l1,
                        lambda2: l2,
                        s: 100,
                        skewness_source: SkewnessSource::MeanCurve,
                    },
                    seed,
                    ..RecoveryTemplate::default()
                };
                let study = recovery_study(&db, 40, &template).unwrap();
                println!(
                    "db={db_seed:<5} l1={l1:<4} l2={l2:<4} seed={seed:<6} ok={:>5.1}% mean_dev={:.4}",
                    study.fraction_ok * 100.0,
                    study.mean_deviation,
                );
            }
        }
    }
}
