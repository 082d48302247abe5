//! Outgoing Hankel function H0^(1) from the ascending series of J0 and Y0
//! for small arguments and the large-argument expansion otherwise.

use num_complex::Complex64;
use std::f64::consts::PI;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn series(x: f64) -> (f64, f64) {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut j0 = 1.0;
    let mut harmonic = 0.0;
    let mut y_sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        y_sum -= harmonic * term;
        if term.abs() < 1e-18 * j0.abs().max(1.0) && k > 5 {
            break;
        }
    }
    let y0 = 2.0 / PI * ((x / 2.0).ln() + EULER_GAMMA) * j0 + 2.0 / PI * y_sum;
    (j0, y0)
}

fn asymptotic(x: f64) -> Complex64 {
    let mut sum = Complex64::new(1.0, 0.0);
    let mut a = 1.0;
    let mut ik = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 1..30 {
        let odd = (2 * k - 1) as f64;
        a *= -(odd * odd) / (k as f64 * 8.0 * x);
        ik *= Complex64::new(0.0, 1.0);
        if a.abs() >= last {
            break;
        }
        last = a.abs();
        sum += ik * a;
    }
    let phase = Complex64::from_polar(1.0, x - PI / 4.0);
    phase * sum * (2.0 / (PI * x)).sqrt()
}

pub fn hankel1_0(x: f64) -> Complex64 {
    assert!(x > 0.0);
    if x <= 8.0 {
        let (j, y) = series(x);
        Complex64::new(j, y)
    } else {
        asymptotic(x)
    }
}

/// Free-space solution of `(Lap + k^2) G = delta` in 2D.
pub fn green_2d(k: f64, r: f64) -> Complex64 {
    Complex64::new(0.0, -0.25) * hankel1_0(k * r)
}
