//! Gray-labeled unit-energy constellations and circular Gaussian likelihoods.
//!
//! Labels are integers whose bits are consumed MSB-first: the first coded bit
//! of a symbol is bit `s − 1` of its label.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    /// Also called 4-QAM.
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "qam16",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" | "4qam" | "qam4" => Ok(Modulation::Qpsk),
            "qam16" | "16qam" => Ok(Modulation::Qam16),
            _ => Err(Error::UnknownConstellation(s.to_string())),
        }
    }
}

/// A labeled constellation. `points[label]` is the symbol carrying `label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: Modulation,
    bits_per_symbol: usize,
    points: Vec<Complex64>,
}

// Per-axis Gray code for 16-QAM: two bits to amplitude level.
const PAM4_GRAY: [f64; 4] = [-3.0, -1.0, 3.0, 1.0];

impl Constellation {
    pub fn new(kind: Modulation) -> Self {
        let points = match kind {
            Modulation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Modulation::Qpsk => {
                // Gray order around the circle: 00, 01, 11, 10.
                let position = [0, 1, 3, 2];
                (0..4)
                    .map(|label| Complex64::from_polar(1.0, (2 * position[label] + 1) as f64 * PI / 4.0))
                    .collect()
            }
            Modulation::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                (0..16)
                    .map(|label| {
                        let i = PAM4_GRAY[label >> 2];
                        let q = PAM4_GRAY[label & 3];
                        Complex64::new(i, q) * scale
                    })
                    .collect()
            }
        };
        let bits_per_symbol = points.len().trailing_zeros() as usize;
        Self { kind, bits_per_symbol, points }
    }

    pub fn kind(&self) -> Modulation {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Label bits of `label`, MSB first.
    pub fn label_bits(&self, label: usize) -> Vec<u8> {
        let s = self.bits_per_symbol;
        (0..s).map(|i| ((label >> (s - 1 - i)) & 1) as u8).collect()
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Label of the point closest to `y`.
    pub fn nearest_label(&self, y: Complex64) -> usize {
        self.points
            .iter()
            .enumerate()
            .min_by(|a, b| (y - a.1).norm_sqr().total_cmp(&(y - b.1).norm_sqr()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Constellation::new(s.parse()?))
    }
}

impl From<Modulation> for Constellation {
    fn from(kind: Modulation) -> Self {
        Constellation::new(kind)
    }
}

impl Default for Constellation {
    fn default() -> Self {
        Constellation::new(Modulation::Bpsk)
    }
}

/// Maps bits to symbols, `s` bits per symbol, MSB first.
pub fn map_bits(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>> {
    let s = c.bits_per_symbol();
    if !bits.len().is_multiple_of(s) {
        return Err(Error::NotMultiple { len: bits.len(), multiple: s });
    }
    Ok(bits
        .chunks_exact(s)
        .map(|chunk| c.point(chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)))
        .collect())
}

/// Inverse of [`map_bits`] by nearest-point decisions.
pub fn hard_demap(symbols: &[Complex64], c: &Constellation) -> Vec<u8> {
    symbols
        .iter()
        .flat_map(|&y| c.label_bits(c.nearest_label(y)))
        .collect()
}

/// `ln p(y | x)` for `y = h·x + z`, `z` circular Gaussian of variance `σ²`.
pub fn log_symbol_likelihood(y: Complex64, h: Complex64, noise_var: f64, x: Complex64) -> Result<f64> {
    if noise_var <= 0.0 || noise_var.is_nan() {
        return Err(Error::NonPositiveVariance(noise_var));
    }
    Ok(log_gaussian(y, h, noise_var, x))
}

/// Unchecked [`log_symbol_likelihood`] for inner loops.
#[inline]
pub(crate) fn log_gaussian(y: Complex64, h: Complex64, noise_var: f64, x: Complex64) -> f64 {
    -(PI * noise_var).ln() - (y - h * x).norm_sqr() / noise_var
}

/// Per-label log-likelihoods of a received symbol against `h·x`, without
/// the `−ln(πσ²)` term shared by all labels.
#[inline]
pub(crate) fn symbol_log_likelihoods(
    y: Complex64,
    h: Complex64,
    noise_var: f64,
    c: &Constellation,
    out: &mut [f64],
) {
    let inv = 1.0 / noise_var;
    for (o, &x) in out.iter_mut().zip(c.points()) {
        *o = -(y - h * x).norm_sqr() * inv;
    }
}

/// Bit LLRs from per-label log-likelihoods via log-sum-exp over each
/// label-bit partition. Appends `s` values to `out`.
pub(crate) fn label_llrs(label_ll: &[f64], bits_per_symbol: usize, out: &mut Vec<f64>) {
    let max = label_ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sums = [[0.0f64; 2]; 16];
    for (label, &ll) in label_ll.iter().enumerate() {
        let e = (ll - max).exp();
        for (j, s) in sums.iter_mut().take(bits_per_symbol).enumerate() {
            s[(label >> (bits_per_symbol - 1 - j)) & 1] += e;
        }
    }
    for (j, s) in sums.iter().take(bits_per_symbol).enumerate() {
        if s[0] > 1e-200 && s[1] > 1e-200 {
            out.push((s[1] / s[0]).ln());
        } else {
            out.push(partition_llr(label_ll, bits_per_symbol - 1 - j));
        }
    }
}

// Log-ratio for one bit with each partition normalized by its own maximum.
fn partition_llr(label_ll: &[f64], shift: usize) -> f64 {
    let mut max = [f64::NEG_INFINITY; 2];
    for (label, &ll) in label_ll.iter().enumerate() {
        let side = (label >> shift) & 1;
        max[side] = max[side].max(ll);
    }
    let mut sum = [0.0f64; 2];
    for (label, &ll) in label_ll.iter().enumerate() {
        let side = (label >> shift) & 1;
        sum[side] += (ll - max[side]).exp();
    }
    (max[1] + sum[1].ln()) - (max[0] + sum[0].ln())
}

/// Single-branch soft demapper: bit LLRs `λ(b=1) − λ(b=0)` for received
/// symbols `y = h·x + z`.
pub fn demap_llrs(symbols: &[Complex64], h: Complex64, noise_var: f64, c: &Constellation) -> Result<Vec<f64>> {
    if noise_var <= 0.0 || noise_var.is_nan() {
        return Err(Error::NonPositiveVariance(noise_var));
    }
    let mut out = Vec::with_capacity(symbols.len() * c.bits_per_symbol());
    let hc = h.conj();
    match c.kind() {
        // Both Gray constellations factor over the I and Q axes, so the
        // marginal bit LLRs are linear in h*·y.
        Modulation::Bpsk => out.extend(symbols.iter().map(|&y| -4.0 * (hc * y).re / noise_var)),
        Modulation::Qpsk => {
            let scale = -2.0 * std::f64::consts::SQRT_2 / noise_var;
            for &y in symbols {
                let u = hc * y;
                out.push(scale * u.im);
                out.push(scale * u.re);
            }
        }
        Modulation::Qam16 => {
            let mut ll = vec![0.0; c.size()];
            for &y in symbols {
                symbol_log_likelihoods(y, h, noise_var, c, &mut ll);
                label_llrs(&ll, c.bits_per_symbol(), &mut out);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    const QPSK_FIRST: Complex64 = Complex64::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2);

    fn unit(theta: f64) -> Complex64 {
        Complex64::from_polar(1.0, theta)
    }

    const ALL: [Modulation; 3] = [Modulation::Bpsk, Modulation::Qpsk, Modulation::Qam16];

    #[test]
    fn unit_average_energy() {
        for m in ALL {
            assert!((Constellation::new(m).average_energy() - 1.0).abs() < 1e-12, "{m}");
        }
    }

    #[test]
    fn bpsk_mapping() {
        let c = Constellation::new(Modulation::Bpsk);
        let x = map_bits(&[0, 1], &c).unwrap();
        assert_eq!(x, vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn qpsk_zero_label_is_first_quadrant() {
        let c = Constellation::new(Modulation::Qpsk);
        let x = map_bits(&[0, 0], &c).unwrap()[0];
        assert!((x - QPSK_FIRST).norm() < 1e-15);
        assert!((x - unit(PI / 4.0)).norm() < 1e-15);
        for p in c.points() {
            assert!((p.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn qam16_energies() {
        let c = Constellation::new(Modulation::Qam16);
        for label in 0..16 {
            let x = map_bits(&c.label_bits(label), &c).unwrap()[0];
            let e = x.norm_sqr();
            assert!(
                [0.2, 1.0, 1.8].iter().any(|v| (e - v).abs() < 1e-12),
                "label {label} energy {e}"
            );
        }
    }

    #[test]
    fn map_rejects_partial_symbol() {
        let c = Constellation::new(Modulation::Qam16);
        assert!(matches!(map_bits(&[0; 6], &c), Err(Error::NotMultiple { len: 6, multiple: 4 })));
    }

    #[test]
    fn hard_demap_inverts_mapping() {
        for m in ALL {
            let c = Constellation::new(m);
            let bits: Vec<u8> = (0..c.size()).flat_map(|l| c.label_bits(l)).collect();
            assert_eq!(hard_demap(&map_bits(&bits, &c).unwrap(), &c), bits);
        }
    }

    #[test]
    fn gray_neighbors_differ_in_one_bit() {
        for m in [Modulation::Qpsk, Modulation::Qam16] {
            let c = Constellation::new(m);
            let pts = c.points();
            let dmin = pts
                .iter()
                .enumerate()
                .flat_map(|(i, a)| pts.iter().skip(i + 1).map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            for (i, a) in pts.iter().enumerate() {
                for (j, b) in pts.iter().enumerate() {
                    if i != j && ((a - b).norm() - dmin).abs() < 1e-9 {
                        assert_eq!((i ^ j).count_ones(), 1, "{m}: {i} vs {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn likelihood_values() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let h = Complex64::new(0.3, -0.7);
        let x = Complex64::new(0.6, 0.8);
        assert!((log_symbol_likelihood(h * x, h, 1.0, x).unwrap() + PI.ln()).abs() < 1e-15);
        assert!((log_symbol_likelihood(zero, one, 1.0, one).unwrap() + PI.ln() + 1.0).abs() < 1e-15);
        let doubled = log_symbol_likelihood(zero, one, 2.0, one).unwrap();
        assert!((doubled + (2.0 * PI).ln() + 0.5).abs() < 1e-15);
        assert!(matches!(log_symbol_likelihood(zero, one, 0.0, one), Err(Error::NonPositiveVariance(_))));
    }

    #[test]
    fn density_integrates_to_one() {
        let h = Complex64::new(0.8, 0.2);
        let x = Complex64::new(-0.5, 0.4);
        let (var, step, half) = (0.5, 0.02, 6.0);
        let n = (2.0 * half / step) as i64;
        let center = h * x;
        let mut total = 0.0;
        for i in 0..n {
            for k in 0..n {
                let y = center
                    + Complex64::new(-half + (i as f64 + 0.5) * step, -half + (k as f64 + 0.5) * step);
                total += log_symbol_likelihood(y, h, var, x).unwrap().exp() * step * step;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn bpsk_demapper_closed_form() {
        let c = Constellation::new(Modulation::Bpsk);
        let h = Complex64::new(0.4, 0.9);
        let y = Complex64::new(0.2, -0.3);
        let var = 0.7;
        let llr = demap_llrs(&[y], h, var, &c).unwrap()[0];
        // Bit 1 maps to −1.
        let expected = -4.0 * (h.conj() * y).re / var;
        assert!((llr - expected).abs() < 1e-12);
    }

    #[test]
    fn axis_demappers_match_full_marginalization() {
        use rand::Rng;
        let mut rng = crate::rng::stream(5, &[]);
        for kind in [Modulation::Bpsk, Modulation::Qpsk] {
            let c = Constellation::new(kind);
            for _ in 0..500 {
                let h = crate::channel::complex_gaussian(&mut rng, 1.0);
                let y = crate::channel::complex_gaussian(&mut rng, 2.0);
                let var = 0.05 + rng.random::<f64>();
                let fast = demap_llrs(&[y], h, var, &c).unwrap();
                let mut ll = vec![0.0; c.size()];
                let mut full = Vec::new();
                symbol_log_likelihoods(y, h, var, &c, &mut ll);
                label_llrs(&ll, c.bits_per_symbol(), &mut full);
                for (a, b) in fast.iter().zip(&full) {
                    assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{kind}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("bpsk".parse::<Modulation>().unwrap(), Modulation::Bpsk);
        assert_eq!("QPSK".parse::<Modulation>().unwrap(), Modulation::Qpsk);
        assert_eq!("qam16".parse::<Modulation>().unwrap(), Modulation::Qam16);
        assert!("8psk".parse::<Modulation>().is_err());
    }
}
