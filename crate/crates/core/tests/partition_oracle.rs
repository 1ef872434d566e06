mod common;

use common::{build, sweep_oracle_trials, R_MAX, R_MIN};
use kinetic_rom::partition::{sweep, HighRank, TimePartition};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sweep_matches_boundary_set_oracle() {
    if let Err(e) = sweep_oracle_trials(200, 77) {
        panic!("{e}");
    }
}

#[test]
fn documented_traces() {
    // ranks [20, 3, 3, 4] on four intervals of 16 samples: the first is
    // split, the low run at the end collapses
    let (iv, times) = build(&[16, 16, 16, 16], 1.0);
    let out = sweep(&iv, &[20, 3, 3, 4], &times, R_MAX, R_MIN, false, |_, _| HighRank::Split);
    let b = TimePartition::new(out.intervals, &times).unwrap().boundaries();
    assert_eq!(b, vec![0.0, 8.0, 16.0, 64.0]);
    // a low final interval merges backward without equilibrium detection
    let (iv, times) = build(&[10, 10], 1.0);
    let out = sweep(&iv, &[10, 3], &times, R_MAX, R_MIN, false, |_, _| HighRank::Split);
    assert_eq!(out.intervals.len(), 1);
    let out = sweep(&iv, &[10, 3], &times, R_MAX, R_MIN, true, |_, _| HighRank::Split);
    assert_eq!(out.intervals.len(), 2);
}

proptest! {
    #[test]
    fn sweep_output_tiles_the_input(
        counts in prop::collection::vec(1usize..12, 1..10),
        seed in 0u64..1000,
        eq in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranks: Vec<usize> = counts.iter().map(|_| rng.random_range(0..30)).collect();
        let (iv, times) = build(&counts, 0.5);
        let out = sweep(&iv, &ranks, &times, R_MAX, R_MIN, eq, |_, _| HighRank::Split);
        prop_assert!(TimePartition::new(out.intervals.clone(), &times).is_ok());
        prop_assert_eq!(out.intervals.first().unwrap().start, 0);
        prop_assert_eq!(out.intervals.last().unwrap().end, times.len());
        prop_assert_eq!(out.marks.len(), out.intervals.len());
        prop_assert!(out.intervals.len() <= 2 * iv.len());
    }
}
