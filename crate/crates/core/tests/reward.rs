mod common;

use common::{check_term_bounds, random_reward_inputs, rng};
use morphcritic_core::reward::{evaluate, total_reward, Category, RewardWeights, Term};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn terms_stay_in_range(seed in any::<u64>()) {
        let x = random_reward_inputs(&mut rng(seed));
        prop_assert_eq!(check_term_bounds(&x, &RewardWeights::default()), Ok(()));
    }

    #[test]
    fn raising_a_term_moves_the_total_by_its_category(seed in any::<u64>(), k in 0usize..22, bump in 0.01..5.0f64) {
        let p = RewardWeights::default();
        let x = random_reward_inputs(&mut rng(seed));
        let b = evaluate(&x, &p);
        let t = Term::ALL[k];
        let mut raised = b.values;
        raised[k] += bump;
        let (_, total) = total_reward(&raised, &p);
        match t.category() {
            Category::Penalty => prop_assert!(total <= b.total),
            Category::Task | Category::Stability => prop_assert!(total >= b.total),
        }
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>()) {
        let x = random_reward_inputs(&mut rng(seed));
        let p = RewardWeights::default();
        prop_assert_eq!(evaluate(&x, &p), evaluate(&x.clone(), &p));
    }
}

#[test]
fn breakdown_sums_to_total() {
    let p = RewardWeights::default();
    let mut r = rng(3);
    for _ in 0..200 {
        let b = evaluate(&random_reward_inputs(&mut r), &p);
        let sum: f64 = b.weighted.iter().sum();
        assert!((sum - b.total).abs() <= 1e-9 * (1.0 + b.total.abs()));
    }
}
