//! Butterworth band-pass design and cascaded biquad evaluation.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::DspError;

/// One second-order section, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    /// `H(z)` evaluated at `z`.
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let zi2 = zi * zi;
        (self.b0 + self.b1 * zi + self.b2 * zi2) / (1.0 + self.a1 * zi + self.a2 * zi2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandpassFilter {
    pub fs_hz: f64,
    pub f_lo: f64,
    pub f_hi: f64,
    pub sections: Vec<Biquad>,
}

impl BandpassFilter {
    /// Complex response of the whole cascade at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * PI * freq_hz / self.fs_hz);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        20.0 * self.response_at(freq_hz).norm().log10()
    }

    /// Overall band-pass order (2 × number of sections).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Causal direct-form-II-transposed cascade with zero initial state.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, DspError> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFiniteInput(i));
        }
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b0 * input + z1;
                z1 = s.b1 * input - s.a1 * out + z2;
                z2 = s.b2 * input - s.a2 * out;
                *v = out;
            }
        }
        Ok(y)
    }

    /// Coefficient dump, one section per line, 17 significant digits.
    pub fn coefficients_text(&self) -> String {
        let mut out = format!(
            "# butterworth bandpass order={} fs={} band=[{}, {}]\n# b0 b1 b2 a1 a2\n",
            self.order(),
            self.fs_hz,
            self.f_lo,
            self.f_hi
        );
        for s in &self.sections {
            out.push_str(&format!(
                "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}\n",
                s.b0, s.b1, s.b2, s.a1, s.a2
            ));
        }
        out
    }
}

/// Butterworth band-pass as cascaded second-order sections.
///
/// Low-pass prototype of order `order / 2`, low-pass to band-pass transform
/// around the pre-warped edges, bilinear transform. Each section carries one
/// conjugate pole pair and the zero pair `{+1, -1}`, and is scaled to unit gain
/// at the digital image of the geometric center frequency.
pub fn design_bandpass(
    fs_hz: f64,
    f_lo: f64,
    f_hi: f64,
    order: usize,
) -> Result<BandpassFilter, DspError> {
    if !(fs_hz > 0.0 && f_lo > 0.0 && f_lo < f_hi && f_hi < fs_hz / 2.0) {
        return Err(DspError::InvalidBandEdges { f_lo, f_hi, fs_hz });
    }
    if !matches!(order, 2 | 4 | 8) {
        return Err(DspError::UnsupportedOrder(order));
    }
    let n = order / 2;
    let k = 2.0 * fs_hz;
    let w_lo = k * (PI * f_lo / fs_hz).tan();
    let w_hi = k * (PI * f_hi / fs_hz).tan();
    let bw = w_hi - w_lo;
    let w0_sq = w_lo * w_hi;
    let center = Complex64::from_polar(1.0, 2.0 * (w0_sq.sqrt() / k).atan());

    let bilinear = |s: Complex64| (k + s) / (k - s);
    let section = |p1: Complex64, p2: Complex64| -> Biquad {
        let (z1, z2) = (bilinear(p1), bilinear(p2));
        let mut s = Biquad {
            b0: 1.0,
            b1: 0.0,
            b2: -1.0,
            a1: -(z1 + z2).re,
            a2: (z1 * z2).re,
        };
        let g = 1.0 / s.response(center).norm();
        s.b0 *= g;
        s.b2 *= g;
        s
    };

    let mut sections = Vec::with_capacity(n);
    for idx in 0..n {
        let proto = Complex64::from_polar(1.0, PI * (2 * idx + n + 1) as f64 / (2 * n) as f64);
        if proto.im < -1e-12 {
            continue; // conjugate of an upper-half pole already handled
        }
        let half = proto * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        let (s1, s2) = (half + root, half - root);
        if proto.im.abs() <= 1e-12 {
            sections.push(section(s1, s2));
        } else {
            sections.push(section(s1, s1.conj()));
            sections.push(section(s2, s2.conj()));
        }
    }

    for (i, s) in sections.iter().enumerate() {
        let finite = [s.b0, s.b1, s.b2, s.a1, s.a2].iter().all(|v| v.is_finite());
        if !finite || !s.is_stable() {
            return Err(DspError::UnstableSection(i));
        }
    }
    Ok(BandpassFilter {
        fs_hz,
        f_lo,
        f_hi,
        sections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Analog Butterworth band-pass magnitude at the pre-warped frequency; the
    /// bilinear transform maps it exactly onto the digital response.
    fn analytic_gain(fs: f64, lo: f64, hi: f64, order: usize, f: f64) -> f64 {
        let warp = |x: f64| 2.0 * fs * (PI * x / fs).tan();
        let (w, w1, w2) = (warp(f), warp(lo), warp(hi));
        let q = (w * w - w1 * w2) / (w * (w2 - w1));
        (1.0 / (1.0 + q.powi(order as i32))).sqrt()
    }

    /// Direct polynomial evaluation of the cascade, written against raw coefficients.
    fn direct_gain(filter: &BandpassFilter, f: f64) -> f64 {
        let w = 2.0 * PI * f / filter.fs_hz;
        let mut g = 1.0;
        for s in &filter.sections {
            let num = Complex64::new(
                s.b0 + s.b1 * w.cos() + s.b2 * (2.0 * w).cos(),
                -(s.b1 * w.sin() + s.b2 * (2.0 * w).sin()),
            );
            let den = Complex64::new(
                1.0 + s.a1 * w.cos() + s.a2 * (2.0 * w).cos(),
                -(s.a1 * w.sin() + s.a2 * (2.0 * w).sin()),
            );
            g *= (num / den).norm();
        }
        g
    }

    #[test]
    fn passband_and_stopband_gains() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        assert_eq!(f.sections.len(), 2);
        let db = |x: f64| 20.0 * direct_gain(&f, x).log10();
        assert!(db(12.0).abs() <= 1.0, "12 Hz: {} dB", db(12.0));
        assert!(db(2.0) <= -20.0, "2 Hz: {} dB", db(2.0));
        assert!(db(64.0) <= -20.0, "64 Hz: {} dB", db(64.0));
    }

    #[test]
    fn matches_analytic_butterworth_magnitude() {
        for &order in &[2, 4, 8] {
            let f = design_bandpass(256.0, 8.0, 16.0, order).unwrap();
            assert_eq!(f.order(), order);
            for i in 1..1280 {
                let freq = i as f64 * 0.1;
                let want = analytic_gain(256.0, 8.0, 16.0, order, freq);
                let got = direct_gain(&f, freq);
                assert!(
                    (want - got).abs() < 1e-9,
                    "order {order} f {freq}: {want} vs {got}"
                );
            }
            // band edges sit at -3 dB
            assert!((f.gain_db_at(8.0) + 3.0103).abs() < 1e-3);
            assert!((f.gain_db_at(16.0) + 3.0103).abs() < 1e-3);
        }
    }

    #[test]
    fn monotone_outside_the_band() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        let g: Vec<f64> = (1..=127).map(|i| direct_gain(&f, i as f64)).collect();
        for w in g[..8].windows(2) {
            assert!(w[1] > w[0]);
        }
        for w in g[15..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn rejects_bad_edges_and_orders() {
        assert!(matches!(
            design_bandpass(256.0, 16.0, 8.0, 4),
            Err(DspError::InvalidBandEdges { .. })
        ));
        assert!(matches!(
            design_bandpass(256.0, 8.0, 130.0, 4),
            Err(DspError::InvalidBandEdges { .. })
        ));
        assert!(matches!(
            design_bandpass(256.0, 8.0, 16.0, 3),
            Err(DspError::UnsupportedOrder(3))
        ));
        let err = design_bandpass(256.0, 16.0, 8.0, 4).unwrap_err();
        assert!(err.to_string().contains("invalid band edges"));
    }

    #[test]
    fn sections_are_stable() {
        for &order in &[2, 4, 8] {
            let f = design_bandpass(256.0, 8.0, 16.0, order).unwrap();
            assert!(f.sections.iter().all(Biquad::is_stable));
        }
    }

    #[test]
    fn dc_is_rejected() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        let y = f.apply(&vec![1.0; 4096]).unwrap();
        let tail = y[4096 - 256..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(tail < 0.01, "tail {tail}");
        assert!(direct_gain(&f, 0.0) < 1e-12);
    }

    #[test]
    fn impulse_response_matches_transfer_function() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        let mut x = vec![0.0; 4096];
        x[0] = 1.0;
        let h = f.apply(&x).unwrap();
        for k in (0..2048).step_by(7) {
            let w = 2.0 * PI * k as f64 / 4096.0;
            let dft: Complex64 = h
                .iter()
                .enumerate()
                .map(|(n, &v)| v * Complex64::from_polar(1.0, -w * n as f64))
                .sum();
            let want = f.response_at(k as f64 * 256.0 / 4096.0);
            assert!((dft - want).norm() < 1e-6, "bin {k}");
        }
    }

    #[test]
    fn impulse_energy_decays() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        let mut x = vec![0.0; 8192];
        x[0] = 1.0;
        let h = f.apply(&x).unwrap();
        let total: f64 = h.iter().map(|v| v * v).sum();
        let tail: f64 = h[4096..].iter().map(|v| v * v).sum();
        assert!(tail < 1e-12 * total);
    }

    #[test]
    fn zeros_in_zeros_out_and_length_preserved() {
        let f = design_bandpass(256.0, 8.0, 16.0, 4).unwrap();
        let y = f.apply(&[0.0; 300]).unwrap();
        assert_eq!(y.len(), 300);
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(matches!(
            f.apply(&[0.0, f64::NAN]),
            Err(DspError::NonFiniteInput(1))
        ));
    }
}
