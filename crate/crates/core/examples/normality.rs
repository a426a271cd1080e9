//! The omnibus normality test and the step-0 error model behind FSA.
//!
//! cargo run --example normality

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};
use replan::skip::{build_error_model, dagostino_pearson, fsa_should_skip};

fn main() -> replan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let normal: Vec<f64> = (0..500).map(|_| 0.1 + 0.02 * rng.sample::<f64, _>(StandardNormal)).collect();
    let skewed: Vec<f64> = (0..500).map(|_| rng.sample(Exp::new(10.0).unwrap())).collect();
    for (name, sample) in [("normal", &normal), ("exponential", &skewed)] {
        let t = dagostino_pearson(sample)?;
        let m = build_error_model(sample, 0.05)?;
        println!(
            "{name:<12} K2 {:8.3}  p {:.4}  normal {:<5}  thresholds c=0.5: {:.4}  c=0.95: {:.4}",
            t.k2,
            t.p_value,
            m.is_normal(),
            m.fsa_threshold(0.5),
            m.fsa_threshold(0.95)
        );
        let eps = 0.12;
        println!(
            "{:<12} eps {eps}: skip at c=0.5 {}, at c=0.95 {}",
            "",
            fsa_should_skip(&m, eps, 0.5),
            fsa_should_skip(&m, eps, 0.95)
        );
    }
    Ok(())
}
