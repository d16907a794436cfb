//! Constant-velocity Kalman filter over the SORT box state
//! `(u, v, s, r, du, dv, ds)`: image center, box area, aspect ratio, and
//! their per-frame rates (the ratio is held constant).
//!
//! Noise magnitudes follow the usual SORT parameterization rescaled to
//! normalized image coordinates (the reference implementation works in
//! pixels).

use nalgebra::{SMatrix, SVector};

use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
pub type Measurement = SVector<f64, 4>;
type MeasCovariance = SMatrix<f64, 4, 4>;
type Observation = SMatrix<f64, 4, 7>;

/// Measurement noise: (u, v, s, r) variances.
pub const MEASUREMENT_NOISE: [f64; 4] = [1e-4, 1e-4, 1e-3, 1e-2];

/// Process noise diagonal.
pub const PROCESS_NOISE: [f64; 7] = [1e-6, 1e-6, 1e-5, 1e-9, 1e-7, 1e-7, 1e-8];

/// Initial covariance diagonal: velocities start effectively unknown.
pub const INITIAL_COVARIANCE: [f64; 7] = [1e-3, 1e-3, 1e-2, 1e-2, 1.0, 1.0, 1.0];

/// Floors keeping area and aspect ratio physical.
const MIN_SCALE: f64 = 1e-8;

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> Observation {
    let mut h = Observation::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

fn process_noise() -> StateCovariance {
    StateCovariance::from_diagonal(&SVector::from(PROCESS_NOISE))
}

fn measurement_noise() -> MeasCovariance {
    MeasCovariance::from_diagonal(&SVector::from(MEASUREMENT_NOISE))
}

/// Box -> measurement vector (u, v, s, r) with s the area and r = w/h.
pub fn measurement_from_box(b: &BoundingBox) -> Measurement {
    Measurement::new(b.cx, b.cy, b.area(), b.w / b.h)
}

/// State -> box; area and ratio are floored so a drifting estimate cannot
/// produce a degenerate box.
pub fn box_from_state(x: &StateVector) -> BoundingBox {
    let s = x[2].max(MIN_SCALE);
    let r = x[3].max(MIN_SCALE);
    let w = (s * r).sqrt();
    let h = (s / r).sqrt();
    BoundingBox::raw(x[0], x[1], w, h)
}

/// Initial state from a first detection.
pub fn initiate(b: &BoundingBox) -> (StateVector, StateCovariance) {
    let z = measurement_from_box(b);
    let mut x = StateVector::zeros();
    for i in 0..4 {
        x[i] = z[i];
    }
    let p = StateCovariance::from_diagonal(&SVector::from(INITIAL_COVARIANCE));
    (x, p)
}

/// Time update: x <- F x, P <- F P F' + Q.
pub fn predict(x: &StateVector, p: &StateCovariance) -> (StateVector, StateCovariance) {
    let f = transition();
    let mut x2 = f * x;
    x2[2] = x2[2].max(MIN_SCALE);
    let p2 = f * p * f.transpose() + process_noise();
    (x2, symmetrize(&p2))
}

/// Measurement update with the default measurement noise.
pub fn update(
    x: &StateVector,
    p: &StateCovariance,
    z: &Measurement,
) -> (StateVector, StateCovariance) {
    update_with_noise(x, p, z, &measurement_noise())
}

/// Measurement update in Joseph form, which keeps the covariance
/// symmetric positive-semidefinite under roundoff.
pub fn update_with_noise(
    x: &StateVector,
    p: &StateCovariance,
    z: &Measurement,
    r: &MeasCovariance,
) -> (StateVector, StateCovariance) {
    let h = observation();
    let innovation = z - h * x;
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance invertible");
    let k = p * h.transpose() * s_inv;
    let mut x2 = x + k * innovation;
    x2[2] = x2[2].max(MIN_SCALE);
    x2[3] = x2[3].max(MIN_SCALE);
    let ikh = StateCovariance::identity() - k * h;
    let p2 = ikh * p * ikh.transpose() + k * r * k.transpose();
    (x2, symmetrize(&p2))
}

fn symmetrize(p: &StateCovariance) -> StateCovariance {
    (p + p.transpose()) * 0.5
}

/// True when `P + jitter I` admits a Cholesky factorization.
pub fn is_psd(p: &StateCovariance, jitter: f64) -> bool {
    (p + StateCovariance::identity() * jitter).cholesky().is_some()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_velocity_keeps_position() {
        let b = BoundingBox::new(0.4, 0.6, 0.1, 0.1).unwrap();
        let (x, p) = initiate(&b);
        let (x2, _) = predict(&x, &p);
        assert_eq!(x2[0], 0.4);
        assert_eq!(x2[1], 0.6);
    }

    #[test]
    fn velocity_advances_position_linearly() {
        let b = BoundingBox::new(0.4, 0.6, 0.1, 0.1).unwrap();
        let (mut x, p) = initiate(&b);
        x[4] = 0.01;
        let (x2, _) = predict(&x, &p);
        assert_abs_diff_eq!(x2[0], 0.41, epsilon = 1e-15);
    }

    #[test]
    fn predict_matches_direct_matrix_arithmetic() {
        // Oracle: F P F' + Q by explicit triple loops on a random-ish PSD
        // matrix built as A A' + d I.
        let mut a = [[0.0f64; 7]; 7];
        let mut v = 0.123_456_789f64;
        for row in a.iter_mut() {
            for e in row.iter_mut() {
                v = (v * 997.0 + 0.618).fract();
                *e = v - 0.5;
            }
        }
        let mut p_arr = [[0.0f64; 7]; 7];
        for i in 0..7 {
            for j in 0..7 {
                let mut acc = 0.0;
                for (k, _) in a.iter().enumerate() {
                    acc += a[i][k] * a[j][k];
                }
                p_arr[i][j] = acc + if i == j { 0.1 } else { 0.0 };
            }
        }
        let p = StateCovariance::from_fn(|i, j| p_arr[i][j]);
        let x = StateVector::from([0.5, 0.5, 0.01, 1.0, 0.001, -0.001, 0.0001]);
        let (_, p2) = predict(&x, &p);

        // F has ones on the diagonal plus (0,4), (1,5), (2,6).
        let fp = |i: usize, j: usize| -> f64 {
            let fr =
                |r: usize, c: usize| p_arr[r][c] + if r < 3 { p_arr[r + 4][c] } else { 0.0 };
            fr(i, j) + if j < 3 { fr(i, j + 4) } else { 0.0 }
        };
        for i in 0..7 {
            for j in 0..7 {
                let q = if i == j { PROCESS_NOISE[i] } else { 0.0 };
                let expected = (fp(i, j) + fp(j, i)) / 2.0 + q;
                assert_abs_diff_eq!(p2[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn predict_grows_uncorrelated_covariance() {
        let b = BoundingBox::new(0.5, 0.5, 0.1, 0.1).unwrap();
        let (x, p) = initiate(&b);
        let (_, p2) = predict(&x, &p);
        assert!(p2.trace() >= p.trace());
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let b = BoundingBox::new(0.3, 0.7, 0.2, 0.1).unwrap();
        let (x, p) = initiate(&b);
        let z = measurement_from_box(&box_from_state(&x));
        let (x2, p2) = update(&x, &p, &z);
        for i in 0..4 {
            assert_abs_diff_eq!(x2[i], x[i], epsilon = 1e-12);
            // Posterior variance of measured components never exceeds the
            // prior.
            assert!(p2[(i, i)] <= p[(i, i)] + 1e-15);
        }
    }

    #[test]
    fn vanishing_noise_trusts_the_measurement() {
        let b = BoundingBox::new(0.3, 0.7, 0.2, 0.1).unwrap();
        let (x, p) = initiate(&b);
        let z = Measurement::new(0.35, 0.65, 0.025, 1.5);
        let r = MeasCovariance::from_diagonal_element(1e-14);
        let (x2, _) = update_with_noise(&x, &p, &z, &r);
        for i in 0..4 {
            assert_abs_diff_eq!(x2[i], z[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn scalar_reduction_matches_hand_computed_gain() {
        // With a diagonal covariance and an innovation only in u, the 7-D
        // update must reduce to the 1-D Kalman formula
        // u+ = u + p/(p + r) * du.
        let b = BoundingBox::new(0.5, 0.5, 0.1, 0.1).unwrap();
        let (x, p) = initiate(&b);
        let du = 0.02;
        let mut z = measurement_from_box(&b);
        z[0] += du;
        let (x2, _) = update(&x, &p, &z);
        let p_u = INITIAL_COVARIANCE[0];
        let r_u = MEASUREMENT_NOISE[0];
        let expected = 0.5 + p_u / (p_u + r_u) * du;
        assert_abs_diff_eq!(x2[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn covariance_stays_psd_over_many_cycles() {
        let b = BoundingBox::new(0.5, 0.5, 0.05, 0.05).unwrap();
        let (mut x, mut p) = initiate(&b);
        let mut wave = 0.0f64;
        for i in 0..2000 {
            let (xp, pp) = predict(&x, &p);
            x = xp;
            p = pp;
            wave += 0.01;
            if i % 3 != 0 {
                let z = Measurement::new(
                    0.5 + 0.2 * wave.sin(),
                    0.5 + 0.2 * wave.cos(),
                    0.0025 + 0.002 * (wave * 0.5).sin().abs(),
                    1.0,
                );
                let (xu, pu) = update(&x, &p, &z);
                x = xu;
                p = pu;
            }
            assert!(is_psd(&p, 1e-9), "covariance lost PSD at cycle {i}");
        }
    }
}
