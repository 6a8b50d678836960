//! Analytic bit-error model for multiplicative programming noise.
//!
//! Levels are equispaced in normalized conductance `[1/ratio, 1]`. A cell
//! programmed to `g` reads `g·(1+η)`, and a read is wrong when it crosses the
//! midpoint to a neighbouring level.

use crate::error::{Error, Result};
use crate::math;

use super::CellMode;

pub const DEFAULT_ON_OFF_RATIO: f64 = 150.0;

const BISECTION_HI: f64 = 2.0;
const BER_TOL: f64 = 1e-9;

/// Mean boundary-crossing probability over all levels of `mode`.
pub fn ber(sigma: f64, mode: CellMode, on_off_ratio: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    let levels = mode.levels();
    let g_min = 1.0 / on_off_ratio;
    let step = (1.0 - g_min) / (levels - 1) as f64;
    let half = step / 2.0;
    let mut total = 0.0;
    for i in 0..levels {
        let g = g_min + step * i as f64;
        let tail = math::normal_cdf(-half / (g * sigma));
        if i > 0 {
            total += tail;
        }
        if i + 1 < levels {
            total += tail;
        }
    }
    total / levels as f64
}

/// Noise level at which [`ber`] equals `target_ber`, by bisection on
/// `σ ∈ [0, 2]`.
pub fn calibrate_sigma(target_ber: f64, mode: CellMode, on_off_ratio: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&target_ber) {
        return Err(Error::invalid(alloc::format!("target BER {target_ber} outside [0, 0.5)")));
    }
    if on_off_ratio.is_nan() || on_off_ratio <= 1.0 {
        return Err(Error::invalid("on/off ratio must exceed 1"));
    }
    if target_ber == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, BISECTION_HI);
    let (mut f_lo, f_hi) = (0.0, ber(hi, mode, on_off_ratio));
    if f_hi < target_ber {
        return Err(Error::CalibrationFailed(alloc::format!(
            "target BER {target_ber} exceeds {f_hi} reachable at sigma {BISECTION_HI}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = ber(mid, mode, on_off_ratio);
        if f_mid < f_lo || f_mid > f_hi {
            return Err(Error::CalibrationFailed("BER is not monotone in sigma".into()));
        }
        if (f_mid - target_ber).abs() <= BER_TOL {
            return Ok(mid);
        }
        if f_mid < target_ber {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            return Ok(mid);
        }
    }
    Err(Error::CalibrationFailed("bisection did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_round_trips() {
        for mode in [CellMode::Slc, CellMode::Mlc2] {
            let s = calibrate_sigma(0.0404, mode, DEFAULT_ON_OFF_RATIO).unwrap();
            assert!((ber(s, mode, DEFAULT_ON_OFF_RATIO) - 0.0404).abs() <= 1e-6);
        }
        assert_eq!(calibrate_sigma(0.0, CellMode::Mlc2, 150.0).unwrap(), 0.0);
    }

    #[test]
    fn slc_tolerates_more_noise() {
        let slc = calibrate_sigma(0.0404, CellMode::Slc, 150.0).unwrap();
        let mlc = calibrate_sigma(0.0404, CellMode::Mlc2, 150.0).unwrap();
        assert!(slc > mlc);
        assert!(ber(0.05, CellMode::Slc, 150.0) < ber(0.05, CellMode::Mlc2, 150.0));
        // closed form for two levels: 0.5·Φ(−(1−1/150)/2/σ)
        assert!((slc - 0.3553).abs() < 1e-3, "{slc}");
    }

    #[test]
    fn unreachable_and_invalid_targets() {
        assert!(matches!(
            calibrate_sigma(0.45, CellMode::Slc, 150.0),
            Err(Error::CalibrationFailed(_))
        ));
        assert!(calibrate_sigma(0.6, CellMode::Slc, 150.0).is_err());
        assert!(calibrate_sigma(-0.1, CellMode::Slc, 150.0).is_err());
    }
}
