use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use divide_blo::bench::BilevelOracle;
use divide_blo::problem::{make_coupled_1d, make_synthetic_1d};
use divide_blo::value_function::oracle_true_value;

#[test]
fn f_star_agrees_across_resolutions() {
    let p = make_synthetic_1d();
    let coarse = BilevelOracle::new(&p, 1001).unwrap();
    let fine = BilevelOracle::new(&p, 4001).unwrap();
    assert!(
        (coarse.f_star - fine.f_star).abs() <= 1e-5,
        "{} vs {}",
        coarse.f_star,
        fine.f_star
    );
    assert!(coarse.c_f <= coarse.f_star && fine.c_f <= fine.f_star);
}

#[test]
fn f_star_matches_closed_form_on_synthetic() {
    // g does not depend on x, so y* is the global minimizer of
    // sin(10y) + 2y^2 and f* = min_x 3x^2 + 7x y* + 5y*^2 + x - y* + 5,
    // attained at x = -(7 y* + 1) / 6.
    let p = make_synthetic_1d();
    let o = BilevelOracle::new(&p, 1001).unwrap();
    let mut y = -0.15f64;
    for _ in 0..50 {
        let d1 = 10.0 * (10.0 * y).cos() + 4.0 * y;
        let d2 = -100.0 * (10.0 * y).sin() + 4.0;
        y -= d1 / d2;
    }
    let x = -(7.0 * y + 1.0) / 6.0;
    let f_star = p.f(&[x], &[y]);
    assert!((o.f_star - f_star).abs() <= 1e-8, "{} vs {f_star}", o.f_star);
    assert!((o.argmin.1[0] - y).abs() <= 1e-6);
}

#[test]
fn value_oracle_agrees_across_resolutions() {
    let p = make_coupled_1d();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..25 {
        let x = [rng.random_range(-3.0..=3.0)];
        let a = oracle_true_value(&p, &x, 1001).unwrap();
        let b = oracle_true_value(&p, &x, 4001).unwrap();
        assert!((a - b).abs() <= 1e-5, "x = {x:?}: {a} vs {b}");
    }
}

#[test]
fn violation_is_nonnegative_up_to_oracle_error() {
    let p = make_coupled_1d();
    let o = BilevelOracle::new(&p, 1001).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x = [rng.random_range(-3.0..=3.0)];
        let y = [rng.random_range(-2.0..=2.0)];
        let r = o.report_at(&x, &y).unwrap();
        assert!(r.violation >= -1e-6, "{r:?}");
        if p.f(&x, &y) >= r.f_star {
            assert!(r.total_gap >= r.violation - 1e-6);
        }
    }
}
