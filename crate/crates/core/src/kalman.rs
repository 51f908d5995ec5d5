//! Constant-velocity Kalman filter over `(cx, cy, a, h)` box parameters.
//!
//! The state is `(cx, cy, a, h, vcx, vcy, va, vh)`: box center, aspect ratio
//! `w / h`, height and their per-frame velocities. The first four components
//! are observed directly. Process and measurement noise scale with the box
//! height, following the SORT/ByteTrack convention.

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::scalar::Real;

pub const STATE_DIM: usize = 8;
pub const MEAS_DIM: usize = 4;

pub type Mat8<T> = [[T; STATE_DIM]; STATE_DIM];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams<T> {
    pub position_noise_scale: T,
    pub velocity_noise_scale: T,
}

impl<T: Real> Default for KalmanParams<T> {
    fn default() -> Self {
        Self {
            position_noise_scale: T::lit(1.0 / 20.0),
            velocity_noise_scale: T::lit(1.0 / 160.0),
        }
    }
}

impl<T: Real> KalmanParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.position_noise_scale > T::zero() && self.velocity_noise_scale > T::zero() {
            Ok(())
        } else {
            Err(Error::Config("Kalman noise scales must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState<T> {
    pub mean: [T; STATE_DIM],
    pub covariance: Mat8<T>,
    /// Set when the last accepted measurement had zero width.
    pub aspect_degenerate: bool,
}

impl<T: Real> KalmanState<T> {
    pub fn bbox(&self) -> BBox<T> {
        let m = &self.mean;
        BBox::from_xyah(m[0], m[1], m[2], m[3]).expect("finite Kalman mean")
    }

    pub fn trace(&self) -> T {
        (0..STATE_DIM).fold(T::zero(), |acc, i| acc + self.covariance[i][i])
    }

    /// Largest `|P[i][j] - P[j][i]|`.
    pub fn max_asymmetry(&self) -> T {
        let p = &self.covariance;
        let mut worst = T::zero();
        for i in 0..STATE_DIM {
            for j in 0..i {
                worst = worst.max((p[i][j] - p[j][i]).abs());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KalmanFilter<T> {
    pub params: KalmanParams<T>,
}

impl<T: Real> Default for KalmanFilter<T> {
    fn default() -> Self {
        Self::new(KalmanParams::default())
    }
}

impl<T: Real> KalmanFilter<T> {
    pub fn new(params: KalmanParams<T>) -> Self {
        Self { params }
    }

    /// Starts a track from an unassociated measurement.
    pub fn init(&self, measurement: &BBox<T>) -> Result<KalmanState<T>> {
        let z = measurement.to_xyah();
        let h = z[3];
        if !(h > T::zero()) {
            return Err(Error::DegenerateBox(h.to_f64_lossy()));
        }
        let two = T::lit(2.0);
        let ten = T::lit(10.0);
        let sp = self.params.position_noise_scale;
        let pos = [two * sp * h, two * sp * h, T::lit(1e-2), two * sp * h];
        // velocity std is ten times the matching position std
        let mut std = [T::zero(); STATE_DIM];
        for i in 0..MEAS_DIM {
            std[i] = pos[i];
            std[i + MEAS_DIM] = ten * pos[i];
        }
        let mut mean = [T::zero(); STATE_DIM];
        mean[..MEAS_DIM].copy_from_slice(&z);
        Ok(KalmanState {
            mean,
            covariance: diag(std.map(|s| s * s)),
            aspect_degenerate: z[2] <= T::zero(),
        })
    }

    /// Advances the state by one frame.
    pub fn predict(&self, s: &KalmanState<T>) -> KalmanState<T> {
        let h = s.mean[3];
        let sp = self.params.position_noise_scale;
        let sv = self.params.velocity_noise_scale;
        let q = [
            sp * h,
            sp * h,
            T::lit(1e-2),
            sp * h,
            sv * h,
            sv * h,
            T::lit(1e-5),
            sv * h,
        ]
        .map(|v| v * v);

        let mut mean = s.mean;
        for i in 0..MEAS_DIM {
            mean[i] += s.mean[i + MEAS_DIM];
        }

        // F P F^T with F = [[I, I], [0, I]]
        let p = &s.covariance;
        let mut fp = *p;
        for i in 0..MEAS_DIM {
            for j in 0..STATE_DIM {
                fp[i][j] = p[i][j] + p[i + MEAS_DIM][j];
            }
        }
        let mut cov = fp;
        for i in 0..STATE_DIM {
            for j in 0..MEAS_DIM {
                cov[i][j] = fp[i][j] + fp[i][j + MEAS_DIM];
            }
        }
        for (i, qi) in q.iter().enumerate() {
            cov[i][i] += *qi;
        }
        symmetrize(&mut cov);

        KalmanState {
            mean,
            covariance: cov,
            aspect_degenerate: s.aspect_degenerate,
        }
    }

    /// Corrects the state with an observed box.
    pub fn update(&self, s: &KalmanState<T>, measurement: &BBox<T>) -> Result<KalmanState<T>> {
        let z = measurement.to_xyah();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteMeasurement);
        }
        let h = s.mean[3].abs();
        let sp = self.params.position_noise_scale;
        let r = [sp * h, sp * h, T::lit(1e-1), sp * h].map(|v| v * v);

        let p = &s.covariance;
        // S = H P H^T + R
        let mut innov_cov = [[T::zero(); MEAS_DIM]; MEAS_DIM];
        for i in 0..MEAS_DIM {
            for j in 0..MEAS_DIM {
                innov_cov[i][j] = p[i][j];
            }
            innov_cov[i][i] += r[i];
        }
        let chol = cholesky4(&innov_cov).ok_or(Error::NonFiniteMeasurement)?;

        // K = P H^T S^-1, solved column-wise from S K^T = H P.
        let mut gain = [[T::zero(); MEAS_DIM]; STATE_DIM];
        for (row, g) in gain.iter_mut().enumerate() {
            let rhs = [p[0][row], p[1][row], p[2][row], p[3][row]];
            *g = cholesky4_solve(&chol, rhs);
        }

        let mut innovation = [T::zero(); MEAS_DIM];
        for i in 0..MEAS_DIM {
            innovation[i] = z[i] - s.mean[i];
        }
        let mut mean = s.mean;
        for (i, g) in gain.iter().enumerate() {
            for k in 0..MEAS_DIM {
                mean[i] += g[k] * innovation[k];
            }
        }

        // Joseph form: (I - K H) P (I - K H)^T + K R K^T
        let mut ikh = identity::<T>();
        for i in 0..STATE_DIM {
            for k in 0..MEAS_DIM {
                ikh[i][k] -= gain[i][k];
            }
        }
        let mut cov = matmul(&matmul(&ikh, p), &transpose(&ikh));
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let mut acc = T::zero();
                for k in 0..MEAS_DIM {
                    acc += gain[i][k] * r[k] * gain[j][k];
                }
                cov[i][j] += acc;
            }
        }
        symmetrize(&mut cov);

        Ok(KalmanState {
            mean,
            covariance: cov,
            aspect_degenerate: z[2] <= T::zero(),
        })
    }
}

pub fn kf_init<T: Real>(params: &KalmanParams<T>, measurement: &BBox<T>) -> Result<KalmanState<T>> {
    KalmanFilter::new(*params).init(measurement)
}

pub fn kf_predict<T: Real>(params: &KalmanParams<T>, s: &KalmanState<T>) -> KalmanState<T> {
    KalmanFilter::new(*params).predict(s)
}

pub fn kf_update<T: Real>(
    params: &KalmanParams<T>,
    s: &KalmanState<T>,
    measurement: &BBox<T>,
) -> Result<KalmanState<T>> {
    KalmanFilter::new(*params).update(s, measurement)
}

fn diag<T: Real>(d: [T; STATE_DIM]) -> Mat8<T> {
    let mut m = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        m[i][i] = d[i];
    }
    m
}

fn identity<T: Real>() -> Mat8<T> {
    diag([T::one(); STATE_DIM])
}

fn transpose<T: Real>(a: &Mat8<T>) -> Mat8<T> {
    let mut t = *a;
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            t[i][j] = a[j][i];
        }
    }
    t
}

fn matmul<T: Real>(a: &Mat8<T>, b: &Mat8<T>) -> Mat8<T> {
    let mut c = [[T::zero(); STATE_DIM]; STATE_DIM];
    for i in 0..STATE_DIM {
        for k in 0..STATE_DIM {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..STATE_DIM {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

fn symmetrize<T: Real>(m: &mut Mat8<T>) {
    let half = T::lit(0.5);
    for i in 0..STATE_DIM {
        for j in 0..i {
            let v = (m[i][j] + m[j][i]) * half;
            m[i][j] = v;
            m[j][i] = v;
        }
    }
}

/// Lower-triangular Cholesky factor of a 4x4 SPD matrix.
fn cholesky4<T: Real>(a: &[[T; MEAS_DIM]; MEAS_DIM]) -> Option<[[T; MEAS_DIM]; MEAS_DIM]> {
    let mut l = [[T::zero(); MEAS_DIM]; MEAS_DIM];
    for i in 0..MEAS_DIM {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i][i] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky4_solve<T: Real>(l: &[[T; MEAS_DIM]; MEAS_DIM], b: [T; MEAS_DIM]) -> [T; MEAS_DIM] {
    let mut y = [T::zero(); MEAS_DIM];
    for i in 0..MEAS_DIM {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [T::zero(); MEAS_DIM];
    for i in (0..MEAS_DIM).rev() {
        let mut s = y[i];
        for k in i + 1..MEAS_DIM {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}
