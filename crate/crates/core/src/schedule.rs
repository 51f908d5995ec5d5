//! Multi-resolution frame scheduling and the average per-frame compute cost.

use crate::error::{Error, Result};
use crate::geometry::Resolution;
use crate::scalar::Real;

/// One full-resolution frame followed by `p` low-resolution frames, repeated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolutionSchedule<T> {
    pub p: u32,
    pub full_res: Resolution,
    pub low_res: Resolution,
    /// Multiply-accumulate operations of one full-resolution inference.
    pub mac_full: T,
    pub mac_low: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacEstimate<T> {
    /// Average operations per frame.
    pub mean_mac: T,
    /// `1 - mean_mac / mac_full`.
    pub reduction: T,
}

impl<T: Real> ResolutionSchedule<T> {
    pub fn validate(&self) -> Result<()> {
        if self.full_res.is_zero() || self.low_res.is_zero() {
            return Err(Error::Config("schedule resolutions must be positive".into()));
        }
        if self.low_res.width > self.full_res.width || self.low_res.height > self.full_res.height {
            return Err(Error::Config(format!(
                "low resolution {} exceeds full resolution {}",
                self.low_res, self.full_res
            )));
        }
        if !(self.mac_full >= T::zero() && self.mac_low >= T::zero()) {
            return Err(Error::Config("MAC counts must be non-negative".into()));
        }
        Ok(())
    }

    /// Fraction of frames inferred at full resolution, `1 / (1 + p)`.
    pub fn full_fraction(&self) -> T {
        T::one() / T::lit(f64::from(self.p) + 1.0)
    }

    pub fn is_full_res(&self, t: u64) -> bool {
        is_full_res(t, self.p)
    }

    pub fn resolution_at(&self, t: u64) -> Resolution {
        if self.is_full_res(t) {
            self.full_res
        } else {
            self.low_res
        }
    }

    pub fn with_p(self, p: u32) -> Self {
        Self { p, ..self }
    }
}

/// Frame `t` is inferred at full resolution iff `t mod (p + 1) == 0`.
pub fn is_full_res(t: u64, p: u32) -> bool {
    t.is_multiple_of(u64::from(p) + 1)
}

/// Average MACs per frame and relative saving against full-resolution-only
/// inference.
pub fn mean_mac<T: Real>(s: &ResolutionSchedule<T>) -> Result<MacEstimate<T>> {
    if s.mac_full == T::zero() {
        return Err(Error::ZeroFullResMac);
    }
    let rho = s.full_fraction();
    let mean = rho * s.mac_full + (T::one() - rho) * s.mac_low;
    Ok(MacEstimate {
        mean_mac: mean,
        reduction: T::one() - mean / s.mac_full,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(p: u32, full: f64, low: f64) -> ResolutionSchedule<f64> {
        ResolutionSchedule {
            p,
            full_res: Resolution::new(320, 320),
            low_res: Resolution::new(192, 192),
            mac_full: full,
            mac_low: low,
        }
    }

    #[test]
    fn first_frame_is_full() {
        for p in 0..10 {
            assert!(is_full_res(0, p));
        }
    }

    #[test]
    fn p_zero_always_full() {
        assert!((0..100).all(|t| is_full_res(t, 0)));
    }

    #[test]
    fn p_five_pattern() {
        let full: Vec<u64> = (0..20).filter(|&t| is_full_res(t, 5)).collect();
        assert_eq!(full, vec![0, 6, 12, 18]);
    }

    #[test]
    fn one_full_frame_per_window() {
        for p in 0..8u32 {
            for start in 0..30u64 {
                let n = (start..start + u64::from(p) + 1).filter(|&t| is_full_res(t, p)).count();
                assert_eq!(n, 1);
            }
        }
    }

    #[test]
    fn mac_examples() {
        let m = mean_mac(&sched(0, 463.0, 167.0)).unwrap();
        assert_eq!((m.mean_mac, m.reduction), (463.0, 0.0));

        let m = mean_mac(&sched(5, 463.0, 167.0)).unwrap();
        assert!((m.mean_mac - 216.3).abs() < 0.05);
        assert!((m.reduction * 100.0 - 53.3).abs() < 0.05);

        let m = mean_mac(&sched(1, 316.0, 114.0)).unwrap();
        assert_eq!(m.mean_mac, 215.0);
        assert!((m.reduction * 100.0 - 32.0).abs() < 0.05);

        let m = mean_mac(&sched(1, 281.0, 101.0)).unwrap();
        assert_eq!(m.mean_mac, 191.0);
        assert!((m.reduction * 100.0 - 32.0).abs() < 0.05);
    }

    #[test]
    fn zero_full_mac_errors() {
        assert_eq!(mean_mac(&sched(3, 0.0, 0.0)), Err(Error::ZeroFullResMac));
    }

    #[test]
    fn validation() {
        assert!(sched(1, 1.0, 1.0).validate().is_ok());
        let mut s = sched(1, 1.0, 1.0);
        s.low_res = Resolution::new(640, 100);
        assert!(s.validate().is_err());
    }
}
