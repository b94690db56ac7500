//! Iterative radix-2 FFT.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::DspError;

/// Forward transform in place, `X[k] = Σ x[n] e^{-2πikn/N}`. `N` must be a power of two.
pub fn fft_in_place(buf: &mut [Complex64]) -> Result<(), DspError> {
    let n = buf.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::NotPowerOfTwo(n));
    }
    if n == 1 {
        return Ok(());
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    // Twiddles from sin/cos of the exact angle rather than a running product.
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
    Ok(())
}

/// Zero-padded real-input spectrum, all `n_fft` complex bins.
pub fn fft_real(window: &[f64], n_fft: usize) -> Result<Vec<Complex64>, DspError> {
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(DspError::NotPowerOfTwo(n_fft));
    }
    if window.len() > n_fft {
        return Err(DspError::FftTooShort {
            n_fft,
            window: window.len(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, &x) in buf.iter_mut().zip(window) {
        b.re = x;
    }
    fft_in_place(&mut buf)?;
    Ok(buf)
}

/// `|X[k]|` for `k = 0..=n_fft/2` of the zero-padded window.
pub fn fft_magnitude(window: &[f64], n_fft: usize) -> Result<Vec<f64>, DspError> {
    let spec = fft_real(window, n_fft)?;
    Ok(spec[..=n_fft / 2].iter().map(|c| c.norm()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let phase = ((k * i) % n) as f64 / n as f64;
                        v * Complex64::from_polar(1.0, -2.0 * PI * phase)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn cosine_peaks_on_exact_bin() {
        let x: Vec<f64> = (0..768)
            .map(|n| (2.0 * PI * 9.25 * n as f64 / 256.0).cos())
            .collect();
        let mag = fft_magnitude(&x, 1024).unwrap();
        assert_eq!(mag.len(), 513);
        let argmax = (1..mag.len())
            .max_by(|&a, &b| mag[a].partial_cmp(&mag[b]).unwrap())
            .unwrap();
        assert_eq!(argmax, 37);
    }

    #[test]
    fn zeros_give_zeros() {
        let mag = fft_magnitude(&[0.0; 100], 128).unwrap();
        assert!(mag.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = SeededRng::new(17);
        let x: Vec<f64> = (0..1024).map(|_| rng.gaussian()).collect();
        let fast = fft_real(&x, 1024).unwrap();
        let slow = naive_dft(&x, 1024);
        let peak = slow.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let worst = fast
            .iter()
            .zip(&slow)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst / peak < 1e-9, "{}", worst / peak);
    }

    #[test]
    fn parseval() {
        let mut rng = SeededRng::new(5);
        let x: Vec<f64> = (0..512).map(|_| rng.gaussian()).collect();
        let spec = fft_real(&x, 512).unwrap();
        let time: f64 = x.iter().map(|v| v * v).sum();
        let freq: f64 = spec.iter().map(|c| c.norm_sqr()).sum::<f64>() / 512.0;
        assert!((time - freq).abs() / time < 1e-9);
    }

    #[test]
    fn size_errors() {
        assert!(matches!(
            fft_magnitude(&[1.0; 4], 6),
            Err(DspError::NotPowerOfTwo(6))
        ));
        assert!(matches!(
            fft_magnitude(&[1.0; 9], 8),
            Err(DspError::FftTooShort {
                n_fft: 8,
                window: 9
            })
        ));
    }
}
