mod common;

use common::bbox;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use vodtrack::kalman::KalmanFilter;
use vodtrack::KalmanState;

fn min_eigenvalue(s: &KalmanState) -> f64 {
    let m = DMatrix::from_fn(8, 8, |i, j| s.covariance[i][j]);
    SymmetricEigen::new(m).eigenvalues.min()
}

fn check(s: &KalmanState) -> Result<(), TestCaseError> {
    prop_assert!(s.max_asymmetry() <= 1e-9 * s.trace().max(1.0));
    prop_assert!(min_eigenvalue(s) >= -1e-9 * s.trace().max(1.0), "min eig {}", min_eigenvalue(s));
    Ok(())
}

fn box_strategy() -> impl Strategy<Value = [f64; 4]> {
    (0.0..300.0f64, 0.0..300.0f64, 4.0..150.0f64, 4.0..150.0f64).prop_map(|(x, y, w, h)| [x, y, x + w, y + h])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn covariance_stays_symmetric_psd(
        start in box_strategy(),
        ops in prop::collection::vec(prop::option::of(box_strategy()), 1..30),
    ) {
        let kf = KalmanFilter::default();
        let mut s = kf.init(&bbox(start)).unwrap();
        check(&s)?;
        for op in ops {
            s = kf.predict(&s);
            check(&s)?;
            if let Some(m) = op {
                s = kf.update(&s, &bbox(m)).unwrap();
                check(&s)?;
            }
        }
    }

    #[test]
    fn constant_velocity_error_below_half_pixel(
        start in box_strategy(),
        vx in -6.0..6.0f64,
        vy in -6.0..6.0f64,
    ) {
        let kf = KalmanFilter::default();
        let at = |t: f64| bbox([start[0] + vx * t, start[1] + vy * t, start[2] + vx * t, start[3] + vy * t]);
        let mut s = kf.init(&at(0.0)).unwrap();
        for t in 1..=10 {
            s = kf.predict(&s);
            if t == 10 {
                let (p, truth) = (s.bbox().to_array(), at(10.0).to_array());
                let err = p.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                prop_assert!(err < 0.5, "error {err}");
            }
            s = kf.update(&s, &at(t as f64)).unwrap();
        }
    }

    #[test]
    fn prediction_grows_uncertainty(start in box_strategy()) {
        let kf = KalmanFilter::default();
        let s = kf.init(&bbox(start)).unwrap();
        prop_assert!(kf.predict(&s).trace() > s.trace());
    }

    #[test]
    fn update_shrinks_uncertainty(start in box_strategy()) {
        let kf = KalmanFilter::default();
        let s = kf.predict(&kf.init(&bbox(start)).unwrap());
        prop_assert!(kf.update(&s, &bbox(start)).unwrap().trace() < s.trace());
    }
}

#[test]
fn zero_height_box_rejected_at_init() {
    assert!(KalmanFilter::default().init(&bbox([0.0, 0.0, 10.0, 0.0])).is_err());
}
