//! FFT utilities shared by synthesis and analysis.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// Inverse FFT including the 1/n normalisation.
pub fn ifft(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let s = 1.0 / buf.len() as f64;
    for z in buf.iter_mut() {
        *z *= s;
    }
}

/// Signed frequency of FFT bin `k` for a length-`n` transform, in the units
/// of `sample_rate`.
pub fn bin_freq(k: usize, n: usize, sample_rate: f64) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k * sample_rate / n as f64
}

/// Smallest 2^a·3^b·5^c that is at least `n`.
pub fn fast_len(n: usize) -> usize {
    let mut best = n.next_power_of_two().max(1);
    let mut p5 = 1usize;
    while p5 < best {
        let mut p35 = p5;
        while p35 < best {
            let mut m = p35;
            while m < n {
                m *= 2;
            }
            best = best.min(m);
            p35 *= 3;
        }
        p5 *= 5;
    }
    best
}

/// Circularly delay a record by `tau` µs: out(t) = s(t − tau).
///
/// Band-limited interpolation through a linear phase ramp, exactly undone by
/// a shift of −tau.
pub fn delay(samples: &[Complex64], tau: f64, sample_rate: f64) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples.to_vec();
    if tau == 0.0 || n == 0 {
        return buf;
    }
    fft(&mut buf);
    for (k, z) in buf.iter_mut().enumerate() {
        let f = bin_freq(k, n, sample_rate);
        *z *= Complex64::from_polar(1.0, -2.0 * PI * f * tau);
    }
    ifft(&mut buf);
    buf
}

/// Linear cross-correlation c[m] = Σ_t x[t]·y[t − m] for m in −(ny−1)..nx.
/// Returned vector is indexed by m + (ny − 1).
pub fn cross_correlate(x: &[Complex64], y: &[Complex64]) -> Vec<Complex64> {
    let (nx, ny) = (x.len(), y.len());
    if nx == 0 || ny == 0 {
        return Vec::new();
    }
    let n = fast_len(nx + ny - 1);
    let mut a = vec![Complex64::default(); n];
    a[..nx].copy_from_slice(x);
    // Reverse y so the product of spectra is a correlation.
    let mut b = vec![Complex64::default(); n];
    for (j, v) in y.iter().enumerate() {
        b[ny - 1 - j] = *v;
    }
    fft(&mut a);
    fft(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    ifft(&mut a);
    a.truncate(nx + ny - 1);
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fast_len_smooth() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(1001), 1024);
        assert_eq!(fast_len(1321), 1350);
    }

    #[test]
    fn delay_round_trip() {
        let x: Vec<_> = (0..257).map(|k| c((k as f64 * 0.3).sin(), (k as f64 * 0.11).cos())).collect();
        let y = delay(&delay(&x, 0.0137, 100.0), -0.0137, 100.0);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
        // Whole-sample delay is a rotation.
        let z = delay(&x, 0.03, 100.0);
        for k in 0..x.len() {
            assert!((z[(k + 3) % x.len()] - x[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn cross_correlate_matches_direct() {
        let x = [c(1.0, 2.0), c(-0.5, 0.1), c(3.0, 0.0)];
        let y = [c(0.2, -1.0), c(1.5, 0.5)];
        let got = cross_correlate(&x, &y);
        for (idx, g) in got.iter().enumerate() {
            let m = idx as isize - (y.len() as isize - 1);
            let mut want = c(0.0, 0.0);
            for t in 0..x.len() as isize {
                let j = t - m;
                if (0..y.len() as isize).contains(&j) {
                    want += x[t as usize] * y[j as usize];
                }
            }
            assert!((g - want).norm() < 1e-12);
        }
    }
}
