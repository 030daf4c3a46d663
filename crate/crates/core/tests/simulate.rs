mod common;

use common::*;
use mindev::model::{iid_product, SampleMode};
use mindev::simulate::{estimate_risk_mc, LearnSampler, StrategyRule};
use mindev::RiskEngine;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let obj = random_object(&mut rng, 3, 3, 2);
    let base = random_learning(&mut rng, 3, 2);
    let ld = iid_product(&base, 3, SampleMode::Multiset, 1 << 20).unwrap();
    let loss = mindev::LossMatrix::zero_one(3);
    let q = random_strategy(&mut rng, 3, ld.len(), 3);
    let rule = StrategyRule::new(&q, &ld).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate_risk_mc(
                    &rule,
                    1,
                    &obj,
                    LearnSampler::for_learning(&ld),
                    &loss,
                    5000,
                    17,
                )
                .unwrap()
            })
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

#[test]
fn sampled_and_tabulated_learning_agree() {
    // drawing the sample element-wise and drawing a multiset value from its
    // table are two routes to the same risk
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let obj = random_object(&mut rng, 2, 2, 2);
    let base = random_learning(&mut rng, 3, 2);
    let ld = iid_product(&base, 2, SampleMode::Multiset, 1 << 20).unwrap();
    let loss = mindev::LossMatrix::zero_one(2);
    let q = random_strategy(&mut rng, 2, ld.len(), 2);
    let exact = RiskEngine::new(&obj, &ld, &loss)
        .unwrap()
        .risks(&q)
        .unwrap();
    let rule = StrategyRule::new(&q, &ld).unwrap();
    for (t, want) in exact.iter().enumerate() {
        for learn in [LearnSampler::Table(&ld), LearnSampler::for_learning(&ld)] {
            let est = estimate_risk_mc(&rule, t, &obj, learn, &loss, 100_000, 5).unwrap();
            assert!(
                (est.mean - want).abs() <= 4.0 * est.stderr,
                "model {t}: {} ± {} vs {want}",
                est.mean,
                est.stderr
            );
        }
    }
}
