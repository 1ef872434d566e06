mod common;

use common::worst_spline_error;
use kinetic_rom::online::{InterpolationKind, Interpolator};
use kinetic_rom::RomError;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalars(v: &[f64]) -> Vec<Vec<f64>> {
    v.iter().map(|&x| vec![x]).collect()
}

#[test]
fn spline_matches_tridiagonal_oracle() {
    let worst = worst_spline_error(50, 2024);
    assert!(worst <= 1e-10, "worst deviation from the tridiagonal oracle {worst:e}");
}

#[test]
fn knots_are_reproduced_exactly_by_the_spline() {
    let x = [4.0, 4.2, 4.4, 4.6, 4.8, 5.0, 5.2, 5.4, 5.6, 5.8, 6.0];
    let it = Interpolator::spline(&scalars(&x)).unwrap();
    let v = DMatrix::from_fn(3, x.len(), |r, j| (j * j) as f64 - r as f64 * x[j].exp());
    for (j, &mu) in x.iter().enumerate() {
        let got = it.interpolate(&v, &[mu]).unwrap();
        for r in 0..3 {
            assert_eq!(got[r], v[(r, j)]);
        }
    }
}

#[test]
fn rbf_reproduces_knots_in_two_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let params: Vec<Vec<f64>> = (0..12).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let it = Interpolator::new(&params, InterpolationKind::Auto).unwrap();
    assert_eq!(it.name(), "quintic-rbf");
    let v = DMatrix::from_fn(4, 12, |r, j| (params[j][0] * (r + 1) as f64).cos() + params[j][1]);
    for (j, mu) in params.iter().enumerate() {
        let got = it.interpolate(&v, mu).unwrap();
        for r in 0..4 {
            assert!((got[r] - v[(r, j)]).abs() <= 1e-10, "{} vs {}", got[r], v[(r, j)]);
        }
    }
    assert!(it.weights(&[1.5, 0.5]).unwrap().out_of_hull);
}

#[test]
fn quintic_two_point_worked_example() {
    let it = Interpolator::rbf(&scalars(&[0.0, 1.0])).unwrap();
    let v = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    // weights (1, 0): the value is phi(0.5) = 0.5^5
    assert_eq!(it.interpolate(&v, &[0.5]).unwrap()[0], 0.03125);
    assert_eq!(it.interpolate(&v, &[0.0]).unwrap()[0], 0.0);
}

#[test]
fn single_parameter_is_insufficient() {
    for kind in [InterpolationKind::Spline, InterpolationKind::Rbf, InterpolationKind::Auto] {
        let e = Interpolator::new(&[vec![1.0]], kind).unwrap_err();
        assert!(matches!(e, RomError::InsufficientData { needed: 2, got: 1 }));
    }
}

proptest! {
    #[test]
    fn spline_reproduces_affine_data(
        gaps in prop::collection::vec(0.05f64..2.0, 1..20),
        a in -5.0f64..5.0,
        b in -5.0f64..5.0,
        t in -0.5f64..1.5,
    ) {
        let mut x = vec![0.0];
        for g in &gaps {
            x.push(x.last().unwrap() + g);
        }
        let it = Interpolator::spline(&scalars(&x)).unwrap();
        let v = DMatrix::from_fn(1, x.len(), |_, j| a * x[j] + b);
        let at = t * x.last().unwrap();
        let got = it.interpolate(&v, &[at]).unwrap()[0];
        prop_assert!((got - (a * at + b)).abs() <= 1e-9 * (1.0 + (a * at + b).abs()));
    }

    #[test]
    fn weights_form_a_partition_of_unity(gaps in prop::collection::vec(0.05f64..2.0, 1..20), t in 0.0f64..1.0) {
        let mut x = vec![0.0];
        for g in &gaps {
            x.push(x.last().unwrap() + g);
        }
        let it = Interpolator::spline(&scalars(&x)).unwrap();
        let w = it.weights(&[t * x.last().unwrap()]).unwrap();
        prop_assert!(!w.out_of_hull);
        prop_assert!((w.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
