//! Destination-side combining of the direct and relayed observations into
//! coded-bit LLRs.
//!
//! The ML combiner works on sub-blocks of `k = lcm(s, r)` coded bits, the
//! smallest group carried by whole numbers of source symbols (`k_s = k/s`)
//! and relay symbols (`k_r = k/r`). For every bit pattern of the sub-block it
//! adds the source log-likelihoods and the relay log-likelihoods
//! marginalized over the relay error prior:
//!
//! ```text
//! ln p(y₁ | x̃₁) = ln Σ_{x₁} Pr[x₁ | x̃₁] · p(y₁ | x₁)
//! ```
//!
//! and reduces the `2^k` totals to per-bit LLRs with log-sum-exp. Linear
//! combiners (MRC, MMSE, C-MRC) need identical constellations and combine
//! symbol by symbol into an equivalent channel `y = h_eq·√P₀·x + z_eq`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{receiver_noise_var, LinkRealization};
use crate::math::log_add;
use crate::modem::{label_llrs, log_gaussian, symbol_log_likelihoods, Constellation};
use crate::relay::RelayErrorPrior;
use crate::{Error, Result};

/// Largest sub-block accepted by the ML combiner.
pub const MAX_SUBBLOCK_BITS: usize = 8;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Sizes of one ML sub-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubblockGeometry {
    pub source_bits: usize,
    pub relay_bits: usize,
    /// `k = lcm(s, r)`.
    pub bits: usize,
    /// `k_s = k / s`.
    pub source_symbols: usize,
    /// `k_r = k / r`.
    pub relay_symbols: usize,
}

impl SubblockGeometry {
    pub fn new(source_bits: usize, relay_bits: usize) -> Result<Self> {
        if source_bits == 0 || relay_bits == 0 {
            return Err(Error::Config("bits per symbol must be positive".into()));
        }
        let bits = source_bits / gcd(source_bits, relay_bits) * relay_bits;
        if bits > MAX_SUBBLOCK_BITS {
            return Err(Error::SubblockTooLarge(bits));
        }
        Ok(Self {
            source_bits,
            relay_bits,
            bits,
            source_symbols: bits / source_bits,
            relay_symbols: bits / relay_bits,
        })
    }

    pub fn for_constellations(source: &Constellation, relay: &Constellation) -> Result<Self> {
        Self::new(source.bits_per_symbol(), relay.bits_per_symbol())
    }

    #[inline]
    fn source_label(&self, pattern: usize, t: usize) -> usize {
        let shift = self.bits - (t + 1) * self.source_bits;
        (pattern >> shift) & ((1 << self.source_bits) - 1)
    }

    #[inline]
    fn relay_label(&self, pattern: usize, t: usize) -> usize {
        let shift = self.bits - (t + 1) * self.relay_bits;
        (pattern >> shift) & ((1 << self.relay_bits) - 1)
    }
}

/// Relay-branch log-likelihood of each intended relay label, with the
/// relay error symbol marginalized out.
///
/// The sum over sent symbols runs in the linear domain after factoring out
/// the largest likelihood; rows that underflow are redone in the log domain.
#[allow(clippy::too_many_arguments)]
fn relay_marginal_ll(
    y: Complex64,
    gain: Complex64,
    noise_var: f64,
    relay: &Constellation,
    prior: &[f64],
    log_prior: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    if log_prior.is_empty() {
        symbol_log_likelihoods(y, gain, noise_var, relay, out);
        return;
    }
    let m = relay.size();
    let (ll, weights) = scratch.split_at_mut(m);
    symbol_log_likelihoods(y, gain, noise_var, relay, ll);
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for (w, &l) in weights.iter_mut().zip(ll.iter()) {
        *w = (l - max).exp();
    }
    for (intended, o) in out.iter_mut().enumerate() {
        let row = &prior[intended * m..(intended + 1) * m];
        let acc: f64 = row.iter().zip(weights.iter()).map(|(p, w)| p * w).sum();
        *o = if acc > 1e-200 {
            max + acc.ln()
        } else {
            let log_row = &log_prior[intended * m..(intended + 1) * m];
            log_row
                .iter()
                .zip(ll.iter())
                .fold(f64::NEG_INFINITY, |acc, (lp, l)| log_add(acc, lp + l))
        };
    }
}

/// Everything the ML combiner needs besides the observations.
#[derive(Debug, Clone)]
pub struct MlCombiner<'a> {
    source: &'a Constellation,
    relay: &'a Constellation,
    geometry: SubblockGeometry,
    prior: Vec<f64>,
    log_prior: Vec<f64>,
}

impl<'a> MlCombiner<'a> {
    pub fn new(source: &'a Constellation, relay: &'a Constellation, prior: &RelayErrorPrior) -> Result<Self> {
        if prior.size() != relay.size() {
            return Err(Error::LengthMismatch { expected: relay.size(), actual: prior.size() });
        }
        let exact = prior.bit_error_probability() == 0.0;
        Ok(Self {
            source,
            relay,
            geometry: SubblockGeometry::for_constellations(source, relay)?,
            // An identity prior leaves the relay likelihoods unchanged.
            prior: if exact { Vec::new() } else { prior.probs().to_vec() },
            log_prior: if exact { Vec::new() } else { prior.log_probs() },
        })
    }

    pub fn geometry(&self) -> SubblockGeometry {
        self.geometry
    }

    /// Coded-bit LLRs (transmit order) for a whole block. `y_sd` carries
    /// `N/s` source symbols and `y_rd` carries `N/r` relay symbols.
    pub fn llrs(&self, y_sd: &[Complex64], y_rd: &[Complex64], link: &LinkRealization) -> Result<Vec<f64>> {
        let g = self.geometry;
        let n = y_sd.len() * g.source_bits;
        if !n.is_multiple_of(g.bits) {
            return Err(Error::NotMultiple { len: n, multiple: g.bits });
        }
        if y_rd.len() * g.relay_bits != n {
            return Err(Error::LengthMismatch { expected: n / g.relay_bits, actual: y_rd.len() });
        }
        let mut out = Vec::with_capacity(n);
        let mut ws = Workspace::new(self);
        for (y0, y1) in y_sd
            .chunks_exact(g.source_symbols)
            .zip(y_rd.chunks_exact(g.relay_symbols))
        {
            self.subblock(y0, y1, link, &mut ws, &mut out);
        }
        Ok(out)
    }

    /// LLRs of one sub-block of `k` bits.
    pub fn block_llrs(&self, y_sd: &[Complex64], y_rd: &[Complex64], link: &LinkRealization) -> Result<Vec<f64>> {
        let g = self.geometry;
        if y_sd.len() != g.source_symbols {
            return Err(Error::LengthMismatch { expected: g.source_symbols, actual: y_sd.len() });
        }
        if y_rd.len() != g.relay_symbols {
            return Err(Error::LengthMismatch { expected: g.relay_symbols, actual: y_rd.len() });
        }
        let mut out = Vec::with_capacity(g.bits);
        self.subblock(y_sd, y_rd, link, &mut Workspace::new(self), &mut out);
        Ok(out)
    }

    fn subblock(
        &self,
        y_sd: &[Complex64],
        y_rd: &[Complex64],
        link: &LinkRealization,
        ws: &mut Workspace,
        out: &mut Vec<f64>,
    ) {
        if !self.subblock_linear(y_sd, y_rd, link, ws, out) {
            self.subblock_log(y_sd, y_rd, link, ws, out);
        }
    }

    /// Linear-domain evaluation with every symbol's likelihoods scaled by
    /// their maximum. Returns `false`, writing nothing, when a partition sum
    /// underflows.
    fn subblock_linear(
        &self,
        y_sd: &[Complex64],
        y_rd: &[Complex64],
        link: &LinkRealization,
        ws: &mut Workspace,
        out: &mut Vec<f64>,
    ) -> bool {
        let g = self.geometry;
        let (ms, mr) = (self.source.size(), self.relay.size());
        let noise_sd = receiver_noise_var(link.noise_sd);
        let noise_rd = receiver_noise_var(link.noise_rd);

        for (t, &y) in y_sd.iter().enumerate() {
            let ll = &mut ws.scratch[..ms];
            symbol_log_likelihoods(y, link.eff_sd(), noise_sd, self.source, ll);
            let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (o, &l) in ws.source_ll[t * ms..(t + 1) * ms].iter_mut().zip(ll.iter()) {
                *o = (l - max).exp();
            }
        }
        for (t, &y) in y_rd.iter().enumerate() {
            let (ll, weights) = ws.scratch.split_at_mut(mr);
            symbol_log_likelihoods(y, link.eff_rd(), noise_rd, self.relay, ll);
            let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for (w, &l) in weights.iter_mut().zip(ll.iter()) {
                *w = (l - max).exp();
            }
            let lin = &mut ws.relay_ll[t * mr..(t + 1) * mr];
            if self.prior.is_empty() {
                lin.copy_from_slice(weights);
            } else {
                for (intended, o) in lin.iter_mut().enumerate() {
                    let row = &self.prior[intended * mr..(intended + 1) * mr];
                    *o = row.iter().zip(weights.iter()).map(|(p, w)| p * w).sum();
                }
            }
        }
        let mut sums = [[0.0f64; 2]; MAX_SUBBLOCK_BITS];
        for pattern in 0..1usize << g.bits {
            let src: f64 = (0..g.source_symbols)
                .map(|t| ws.source_ll[t * ms + g.source_label(pattern, t)])
                .product();
            let rel: f64 = (0..g.relay_symbols)
                .map(|t| ws.relay_ll[t * mr + g.relay_label(pattern, t)])
                .product();
            let v = src * rel;
            for (j, s) in sums.iter_mut().take(g.bits).enumerate() {
                s[(pattern >> (g.bits - 1 - j)) & 1] += v;
            }
        }
        let sums = &sums[..g.bits];
        if sums.iter().any(|s| s[0] <= 1e-200 || s[1] <= 1e-200) {
            return false;
        }
        out.extend(sums.iter().map(|s| (s[1] / s[0]).ln()));
        true
    }

    fn subblock_log(
        &self,
        y_sd: &[Complex64],
        y_rd: &[Complex64],
        link: &LinkRealization,
        ws: &mut Workspace,
        out: &mut Vec<f64>,
    ) {
        let g = self.geometry;
        let (ms, mr) = (self.source.size(), self.relay.size());
        let noise_sd = receiver_noise_var(link.noise_sd);
        let noise_rd = receiver_noise_var(link.noise_rd);

        for (t, &y) in y_sd.iter().enumerate() {
            symbol_log_likelihoods(y, link.eff_sd(), noise_sd, self.source, &mut ws.source_ll[t * ms..(t + 1) * ms]);
        }
        for (t, &y) in y_rd.iter().enumerate() {
            relay_marginal_ll(
                y,
                link.eff_rd(),
                noise_rd,
                self.relay,
                &self.prior,
                &self.log_prior,
                &mut ws.scratch,
                &mut ws.relay_ll[t * mr..(t + 1) * mr],
            );
        }
        for (pattern, total) in ws.totals.iter_mut().enumerate() {
            let src: f64 = (0..g.source_symbols)
                .map(|t| ws.source_ll[t * ms + g.source_label(pattern, t)])
                .sum();
            let rel: f64 = (0..g.relay_symbols)
                .map(|t| ws.relay_ll[t * mr + g.relay_label(pattern, t)])
                .sum();
            *total = src + rel;
        }
        label_llrs(&ws.totals, g.bits, out);
    }
}

struct Workspace {
    source_ll: Vec<f64>,
    relay_ll: Vec<f64>,
    scratch: Vec<f64>,
    totals: Vec<f64>,
}

impl Workspace {
    fn new(ml: &MlCombiner<'_>) -> Self {
        let g = ml.geometry;
        Self {
            source_ll: vec![0.0; g.source_symbols * ml.source.size()],
            relay_ll: vec![0.0; g.relay_symbols * ml.relay.size()],
            scratch: vec![0.0; 2 * ml.source.size().max(ml.relay.size())],
            totals: vec![0.0; 1 << g.bits],
        }
    }
}

/// ML LLRs of one sub-block: `k_s` source symbols and `k_r` relay symbols
/// covering the same `k` interleaved coded bits.
pub fn ml_block_llrs(
    y_sd: &[Complex64],
    y_rd: &[Complex64],
    link: &LinkRealization,
    prior: &RelayErrorPrior,
    source: &Constellation,
    relay: &Constellation,
) -> Result<Vec<f64>> {
    MlCombiner::new(source, relay, prior)?.block_llrs(y_sd, y_rd, link)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombinerKind {
    Ml,
    Mrc,
    Mmse,
    Cmrc,
}

impl CombinerKind {
    pub fn name(self) -> &'static str {
        match self {
            CombinerKind::Ml => "ml",
            CombinerKind::Mrc => "mrc",
            CombinerKind::Mmse => "mmse",
            CombinerKind::Cmrc => "cmrc",
        }
    }

    pub fn is_linear(self) -> bool {
        self != CombinerKind::Ml
    }
}

impl fmt::Display for CombinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CombinerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ml" => Ok(CombinerKind::Ml),
            "mrc" => Ok(CombinerKind::Mrc),
            "mmse" => Ok(CombinerKind::Mmse),
            "cmrc" | "c-mrc" => Ok(CombinerKind::Cmrc),
            _ => Err(Error::UnknownCombiner(s.to_string())),
        }
    }
}

/// Noise variance used for C-MRC soft demapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CmrcNoise {
    /// `a₀σ₀² + c·a₁σ₁²` with `c = min{γ₁′, γ₁}/γ₁`.
    #[default]
    Nominal,
    /// `|w₀|²σ₀² + |w₁|²σ₁² = a₀σ₀² + c²·a₁σ₁²`, the variance the weights
    /// actually produce.
    WeightConsistent,
}

/// Side information for the linear combiners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    /// Source→relay SNR `γ₁′` (linear).
    pub gamma_sr: f64,
    /// Relay→destination SNR `γ₁` (linear).
    pub gamma_rd: f64,
    /// Correlation `ρ₁` between relay and source symbols.
    pub rho: f64,
    /// Normalized relay symbol energy `α₁²`.
    pub alpha_sq: f64,
    pub cmrc_noise: CmrcNoise,
}

/// Combiner weights and the equivalent channel `y = h_eq·√P₀·x + z_eq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentChannel {
    pub w_sd: Complex64,
    pub w_rd: Complex64,
    pub h_eq: f64,
    pub noise_eq: f64,
    pub rho: f64,
    pub alpha_sq: f64,
}

/// Weights and equivalent channel of a linear combiner.
///
/// The relay gain is referred to the source power, `a₁ = |h₁|²·P₁/P₀`, so
/// the relayed symbol enters the equivalent model with the same `√P₀` as the
/// direct one.
pub fn combiner_weights(kind: CombinerKind, link: &LinkRealization, params: &LinearParams) -> Result<EquivalentChannel> {
    let s0 = receiver_noise_var(link.noise_sd);
    let s1 = receiver_noise_var(link.noise_rd);
    let p0 = link.power_source;
    let h0 = link.h_sd;
    let h1 = link.h_rd * (link.power_relay / p0).sqrt();
    let (a0, a1) = (h0.norm_sqr(), h1.norm_sqr());
    let (rho, alpha_sq) = (params.rho, params.alpha_sq);

    let (w_sd, w_rd, h_eq, noise_eq) = match kind {
        CombinerKind::Ml => {
            return Err(Error::Config("the ML combiner has no linear weights".into()));
        }
        CombinerKind::Mrc => {
            let g = a0 / s0 + a1 / s1;
            (h0.conj() / s0, h1.conj() / s1, g, g)
        }
        CombinerKind::Mmse => {
            let denom = s1 + a1 * p0 * (alpha_sq - rho * rho);
            let g = a0 / s0 + a1 * rho * rho / denom;
            (h0.conj() / s0, h1.conj() * rho / denom, g, g)
        }
        CombinerKind::Cmrc => {
            let c = cmrc_scale(params.gamma_sr, params.gamma_rd);
            let noise = match params.cmrc_noise {
                CmrcNoise::Nominal => a0 * s0 + c * a1 * s1,
                CmrcNoise::WeightConsistent => a0 * s0 + c * c * a1 * s1,
            };
            (h0.conj(), h1.conj() * c, a0 + c * a1, noise)
        }
    };
    if noise_eq.is_nan() || noise_eq <= 0.0 {
        return Err(Error::NonPositiveVariance(noise_eq));
    }
    Ok(EquivalentChannel { w_sd, w_rd, h_eq, noise_eq, rho, alpha_sq })
}

/// `min{γ₁′, γ₁} / γ₁`, taken as 1 when the relay link is at least as
/// reliable as the source→relay link and 0 when `γ₁ = 0`.
fn cmrc_scale(gamma_sr: f64, gamma_rd: f64) -> f64 {
    if gamma_rd <= 0.0 {
        0.0
    } else if gamma_sr >= gamma_rd {
        1.0
    } else {
        gamma_sr / gamma_rd
    }
}

/// `y = w₀·y₀ + w₁·y₁`.
#[inline]
pub fn linear_combine(y_sd: Complex64, y_rd: Complex64, eq: &EquivalentChannel) -> Complex64 {
    eq.w_sd * y_sd + eq.w_rd * y_rd
}

/// Bit LLRs of a combined symbol under `y = h_eq·√P₀·x + z_eq`.
pub fn equivalent_channel_llrs(
    y: Complex64,
    eq: &EquivalentChannel,
    c: &Constellation,
    power_source: f64,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(c.bits_per_symbol());
    equivalent_llrs_into(y, eq, c, power_source, &mut vec![0.0; c.size()], &mut out)?;
    Ok(out)
}

fn equivalent_llrs_into(
    y: Complex64,
    eq: &EquivalentChannel,
    c: &Constellation,
    power_source: f64,
    scratch: &mut [f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    if eq.noise_eq.is_nan() || eq.noise_eq <= 0.0 {
        return Err(Error::NonPositiveVariance(eq.noise_eq));
    }
    let gain = Complex64::new(eq.h_eq * power_source.sqrt(), 0.0);
    symbol_log_likelihoods(y, gain, eq.noise_eq, c, scratch);
    label_llrs(scratch, c.bits_per_symbol(), out);
    Ok(())
}

/// Coded-bit LLRs (transmit order) of a whole block through a linear
/// combiner. Source and relay constellations must match.
pub fn linear_llrs(
    kind: CombinerKind,
    y_sd: &[Complex64],
    y_rd: &[Complex64],
    link: &LinkRealization,
    params: &LinearParams,
    source: &Constellation,
    relay: &Constellation,
) -> Result<Vec<f64>> {
    if source.kind() != relay.kind() {
        return Err(Error::ModulationMismatch { source_const: source.name(), relay_const: relay.name() });
    }
    if y_sd.len() != y_rd.len() {
        return Err(Error::LengthMismatch { expected: y_sd.len(), actual: y_rd.len() });
    }
    let eq = combiner_weights(kind, link, params)?;
    let mut scratch = vec![0.0; source.size()];
    let mut out = Vec::with_capacity(y_sd.len() * source.bits_per_symbol());
    for (&a, &b) in y_sd.iter().zip(y_rd) {
        equivalent_llrs_into(linear_combine(a, b, &eq), &eq, source, link.power_source, &mut scratch, &mut out)?;
    }
    Ok(out)
}

/// Closed-form BPSK path metric of a candidate transmitted bit sequence
/// (lower is better):
///
/// ```text
/// μ = Σ_t |y₀ − h₀x|²/σ₀² − ln Σ_{e=±1} Pr[ε=e]·exp(−|y₁ − h₁·e·x|²/σ₁²)
/// ```
///
/// with `x = 1 − 2b` and `Pr[ε = −1] = p`.
pub fn bpsk_ml_path_metric(
    y_sd: &[Complex64],
    y_rd: &[Complex64],
    link: &LinkRealization,
    p: f64,
    candidate: &[u8],
) -> Result<f64> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    for len in [y_sd.len(), y_rd.len()] {
        if len != candidate.len() {
            return Err(Error::LengthMismatch { expected: candidate.len(), actual: len });
        }
    }
    let s0 = receiver_noise_var(link.noise_sd);
    let s1 = receiver_noise_var(link.noise_rd);
    let (g0, g1) = (link.eff_sd(), link.eff_rd());
    let (ln_keep, ln_flip) = ((1.0 - p).ln(), p.ln());
    Ok(candidate
        .iter()
        .zip(y_sd.iter().zip(y_rd))
        .map(|(&b, (&y0, &y1))| {
            let x = 1.0 - 2.0 * f64::from(b);
            let direct = (y0 - g0 * x).norm_sqr() / s0;
            let keep = ln_keep - (y1 - g1 * x).norm_sqr() / s1;
            let flip = ln_flip - (y1 + g1 * x).norm_sqr() / s1;
            direct - log_add(keep, flip)
        })
        .sum())
}

/// Joint log-likelihood of one source and one relay symbol hypothesis with
/// no relay errors; used to cross-check degenerate priors.
pub fn two_branch_log_likelihood(
    y_sd: Complex64,
    y_rd: Complex64,
    link: &LinkRealization,
    x_sd: Complex64,
    x_rd: Complex64,
) -> f64 {
    log_gaussian(y_sd, link.eff_sd(), receiver_noise_var(link.noise_sd), x_sd)
        + log_gaussian(y_rd, link.eff_rd(), receiver_noise_var(link.noise_rd), x_rd)
}
