//! Reference implementations shared by the integration tests. Nothing here
//! calls into the crate's demapping or combining code.

#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;

/// Gray labelled points, written out from the constellation definitions.
pub fn points(bits_per_symbol: usize) -> Vec<Complex64> {
    match bits_per_symbol {
        1 => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        2 => (0..4)
            .map(|l: usize| {
                let (b0, b1) = ((l >> 1) & 1, l & 1);
                Complex64::new(1.0 - 2.0 * b1 as f64, 1.0 - 2.0 * b0 as f64) / 2f64.sqrt()
            })
            .collect(),
        4 => {
            let pam = |two: usize| match two {
                0b00 => -3.0,
                0b01 => -1.0,
                0b11 => 1.0,
                _ => 3.0,
            };
            (0..16)
                .map(|l: usize| Complex64::new(pam(l >> 2), pam(l & 3)) / 10f64.sqrt())
                .collect()
        }
        _ => panic!("no reference constellation for {bits_per_symbol} bits"),
    }
}

pub fn log_density(y: Complex64, h: Complex64, var: f64, x: Complex64) -> f64 {
    -(y - h * x).norm_sqr() / var - (PI * var).ln()
}

pub fn lse(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Label of symbol `t` when `bits` MSB-first bits are cut into `per`-bit
/// groups.
fn label(pattern: usize, bits: usize, per: usize, t: usize) -> usize {
    (pattern >> (bits - (t + 1) * per)) & ((1 << per) - 1)
}

/// One sub-block observation for the brute-force marginalizer.
pub struct Draw {
    pub s: usize,
    pub r: usize,
    pub y_sd: Vec<Complex64>,
    pub y_rd: Vec<Complex64>,
    /// Effective gains including the transmit amplitude.
    pub g_sd: Complex64,
    pub g_rd: Complex64,
    pub var_sd: f64,
    pub var_rd: f64,
    pub p: f64,
}

/// Bit LLRs `ln Pr[y | b_j = 1] − ln Pr[y | b_j = 0]` by explicit
/// enumeration of every bit pattern and every relay bit-error pattern.
pub fn brute_force_llrs(d: &Draw) -> Vec<f64> {
    let k = d.s / gcd(d.s, d.r) * d.r;
    let (ps, pr) = (points(d.s), points(d.r));
    let mut joint = vec![Vec::new(); 1 << k];
    for (b, terms) in joint.iter_mut().enumerate() {
        let direct: f64 = (0..k / d.s)
            .map(|t| log_density(d.y_sd[t], d.g_sd, d.var_sd, ps[label(b, k, d.s, t)]))
            .sum();
        for e in 0..1usize << k {
            let flips = e.count_ones() as i32;
            let prior = d.p.powi(flips) * (1.0 - d.p).powi(k as i32 - flips);
            if prior == 0.0 {
                continue;
            }
            let sent = b ^ e;
            let relay: f64 = (0..k / d.r)
                .map(|t| log_density(d.y_rd[t], d.g_rd, d.var_rd, pr[label(sent, k, d.r, t)]))
                .sum();
            terms.push(direct + prior.ln() + relay);
        }
    }
    (0..k)
        .map(|j| {
            let side = |bit: usize| -> Vec<f64> {
                joint
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| (b >> (k - 1 - j)) & 1 == bit)
                    .flat_map(|(_, t)| t.iter().copied())
                    .collect()
            };
            lse(&side(1)) - lse(&side(0))
        })
        .collect()
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Feed-forward encoder from generator tap lists (tap 0 is the current
/// input), with `memory` zero tail bits.
pub fn reference_encode(info: &[u8], taps: &[Vec<u8>]) -> Vec<u8> {
    let memory = taps[0].len() - 1;
    let mut padded = info.to_vec();
    padded.extend(std::iter::repeat_n(0, memory));
    let mut out = Vec::new();
    for i in 0..padded.len() {
        for g in taps {
            let mut bit = 0;
            for (d, &tap) in g.iter().enumerate() {
                if tap == 1 && i >= d {
                    bit ^= padded[i - d];
                }
            }
            out.push(bit);
        }
    }
    out
}

/// Best `Σ Λ_j c_j` over all messages of `info_len` bits, and one message
/// attaining it.
pub fn brute_force_decode(llrs: &[f64], taps: &[Vec<u8>], info_len: usize) -> (f64, Vec<u8>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for m in 0..1usize << info_len {
        let info: Vec<u8> = (0..info_len).map(|i| ((m >> (info_len - 1 - i)) & 1) as u8).collect();
        let metric: f64 = reference_encode(&info, taps)
            .iter()
            .zip(llrs)
            .map(|(&c, l)| f64::from(c) * l)
            .sum();
        if metric > best.0 {
            best = (metric, info);
        }
    }
    best
}
