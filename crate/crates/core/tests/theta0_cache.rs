//! Runs in its own process so that the de Gennes cache starts empty.

use stepgl::halfplane::essential_floor;
use stepgl::spectral1d::{compute_theta0, theta0_cache};
use stepgl::Error;

#[test]
fn floor_requires_the_cached_constant_then_scales_linearly() {
    assert!(matches!(essential_floor(-1.0), Err(Error::Theta0Unavailable)));
    let msg = Error::Theta0Unavailable.to_string();
    assert!(msg.contains("theta0"), "{msg}");
    let th = compute_theta0(1e-6).unwrap();
    theta0_cache().offer(th.minimum, 1e-6);
    assert!((essential_floor(-1.0).unwrap() - 0.59).abs() < 5e-3);
    assert!((essential_floor(0.5).unwrap() - 0.295).abs() < 3e-3);
    assert!((essential_floor(-0.25).unwrap() - 0.1475).abs() < 2e-3);
    assert_eq!(essential_floor(-0.25).unwrap(), 0.25 * th.minimum);
}
