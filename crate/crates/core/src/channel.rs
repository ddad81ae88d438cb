//! Rayleigh block fading and AWGN for the source→destination,
//! source→relay and relay→destination links.
//!
//! Gains are normalized to `E|h|² = 1`, so an average SNR `γ` in dB fixes
//! the noise variance as `σ² = P / 10^(γ/10)`. Transmit power is applied in
//! [`awgn_transmit`]; constellations stay unit-energy.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// One draw of `h ~ CN(0, 1)`.
pub fn draw_block_fading<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    complex_gaussian(rng, 1.0)
}

/// Circular complex Gaussian with total variance `var`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let scale = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Noise variance giving average SNR `snr_db` at transmit power `power`.
/// `+∞` dB maps to zero noise.
pub fn snr_db_to_noise_var(snr_db: f64, power: f64) -> f64 {
    power / 10f64.powf(snr_db / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// `y(t) = h·√P·x(t) + z(t)`, with `z` drawn from `rng`.
pub fn awgn_transmit<R: Rng + ?Sized>(
    symbols: &[Complex64],
    h: Complex64,
    noise_var: f64,
    power: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if noise_var < 0.0 || noise_var.is_nan() {
        return Err(Error::NonPositiveVariance(noise_var));
    }
    let gain = h * power.sqrt();
    Ok(symbols
        .iter()
        .map(|&x| {
            let signal = gain * x;
            if noise_var == 0.0 {
                signal
            } else {
                signal + complex_gaussian(rng, noise_var)
            }
        })
        .collect())
}

/// Smallest noise variance handed to a likelihood computation. Noiseless
/// links are demodulated as if this much noise were present.
pub const MIN_NOISE_VAR: f64 = 1e-12;

/// Channel state of one data block on all three links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkRealization {
    /// Source → destination gain `h₀`.
    pub h_sd: Complex64,
    /// Relay → destination gain `h₁`.
    pub h_rd: Complex64,
    /// Source → relay gain `h₁′`.
    pub h_sr: Complex64,
    pub noise_sd: f64,
    pub noise_rd: f64,
    pub noise_sr: f64,
    pub power_source: f64,
    pub power_relay: f64,
}

impl LinkRealization {
    /// Noise variances from average SNRs (dB) with `E|h|² = 1`. The SNRs are
    /// all referred to the source power.
    pub fn from_snrs(
        gains: [Complex64; 3],
        gamma_sd_db: f64,
        gamma_rd_db: f64,
        gamma_sr_db: f64,
        power_source: f64,
        power_relay: f64,
    ) -> Self {
        let [h_sd, h_rd, h_sr] = gains;
        Self {
            h_sd,
            h_rd,
            h_sr,
            noise_sd: snr_db_to_noise_var(gamma_sd_db, power_source),
            noise_rd: snr_db_to_noise_var(gamma_rd_db, power_source),
            noise_sr: snr_db_to_noise_var(gamma_sr_db, power_source),
            power_source,
            power_relay,
        }
    }

    /// Instantaneous SNR `|h₀|²P₀/σ₀²` of the direct link.
    pub fn gamma_sd(&self) -> f64 {
        instantaneous_snr(self.h_sd, self.power_source, self.noise_sd)
    }

    /// Instantaneous SNR `|h₁|²P₀/σ₁²` of the relay → destination link.
    pub fn gamma_rd(&self) -> f64 {
        instantaneous_snr(self.h_rd, self.power_source, self.noise_rd)
    }

    /// Instantaneous SNR `|h₁′|²P₀/σ_sr²` of the source → relay link.
    pub fn gamma_sr(&self) -> f64 {
        instantaneous_snr(self.h_sr, self.power_source, self.noise_sr)
    }

    /// Effective direct-link gain `h₀·√P₀` seen by the destination.
    pub fn eff_sd(&self) -> Complex64 {
        self.h_sd * self.power_source.sqrt()
    }

    /// Effective relay-link gain `h₁·√P₁`.
    pub fn eff_rd(&self) -> Complex64 {
        self.h_rd * self.power_relay.sqrt()
    }

    pub fn eff_sr(&self) -> Complex64 {
        self.h_sr * self.power_source.sqrt()
    }
}

fn instantaneous_snr(h: Complex64, power: f64, noise_var: f64) -> f64 {
    if noise_var == 0.0 {
        f64::INFINITY
    } else {
        h.norm_sqr() * power / noise_var
    }
}

/// Receiver-side variance: zero noise becomes [`MIN_NOISE_VAR`].
#[inline]
pub fn receiver_noise_var(noise_var: f64) -> f64 {
    noise_var.max(MIN_NOISE_VAR)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn fading_moments() {
        let mut rng = stream(11, &[]);
        let n = 1_000_000;
        let (mut power, mut re2, mut im2) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let h = draw_block_fading(&mut rng);
            power += h.norm_sqr();
            re2 += h.re * h.re;
            im2 += h.im * h.im;
        }
        let n = n as f64;
        assert!((power / n - 1.0).abs() < 0.005, "{}", power / n);
        assert!((re2 / n - 0.5).abs() < 0.005);
        assert!((im2 / n - 0.5).abs() < 0.005);
    }

    #[test]
    fn fading_is_deterministic() {
        let a: Vec<_> = (0..5).scan(stream(3, &[1]), |r, _| Some(draw_block_fading(r))).collect();
        let b: Vec<_> = (0..5).scan(stream(3, &[1]), |r, _| Some(draw_block_fading(r))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn snr_conversion() {
        assert_eq!(snr_db_to_noise_var(0.0, 1.0), 1.0);
        assert!((snr_db_to_noise_var(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((snr_db_to_noise_var(3.0, 2.0) - 2.0 / 10f64.powf(0.3)).abs() < 1e-15);
        assert!((snr_db_to_noise_var(3.0, 2.0) - 1.0024).abs() < 1e-4);
        assert_eq!(snr_db_to_noise_var(f64::INFINITY, 1.0), 0.0);
    }

    #[test]
    fn noiseless_transmission_is_exact() {
        let mut rng = stream(0, &[]);
        let x = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -1.0)];
        let h = Complex64::new(0.5, 0.5);
        let y = awgn_transmit(&x, h, 0.0, 4.0, &mut rng).unwrap();
        assert_eq!(y, vec![h * 2.0 * x[0], h * 2.0 * x[1]]);
        assert!(awgn_transmit(&x, h, -1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn noise_variance_and_mean() {
        let mut rng = stream(5, &[]);
        let n = 1_000_000;
        let x = vec![Complex64::new(1.0, 0.0); n];
        let h = Complex64::new(0.0, 0.0);
        let y = awgn_transmit(&x, h, 0.3, 1.0, &mut rng).unwrap();
        let mean: Complex64 = y.iter().sum::<Complex64>() / n as f64;
        let var = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!(mean.norm() < 3e-3);
        assert!((var / 0.3 - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn realization_snrs() {
        let one = Complex64::new(1.0, 0.0);
        let link = LinkRealization::from_snrs([one, one * 2.0, one], 10.0, 0.0, f64::INFINITY, 1.0, 1.0);
        assert!((link.gamma_sd() - 10.0).abs() < 1e-12);
        assert!((link.gamma_rd() - 4.0).abs() < 1e-12);
        assert_eq!(link.gamma_sr(), f64::INFINITY);
        assert_eq!(receiver_noise_var(0.0), MIN_NOISE_VAR);
    }
}
