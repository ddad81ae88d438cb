//! Convolutional coding, bit interleaving and soft-input Viterbi decoding.
//!
//! Bits are `u8` values in `{0, 1}`. Soft inputs are per-coded-bit LLRs with
//! the convention `Λ = λ(b = 1) − λ(b = 0)`, so a decoder maximizes
//! `Σ Λⱼ·bⱼ` over the codewords.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Largest message length accepted by [`exhaustive_ml_decode`].
pub const MAX_EXHAUSTIVE_LEN: usize = 16;

/// Feedforward convolutional code of rate `1/q`, terminated with `ν` zero
/// tail bits.
///
/// Each generator is a mask over the `ν + 1` register bits. Bit `ν` taps the
/// current input and bit `0` the oldest one, so the usual octal notation
/// applies directly: `(5, 7)` is `101`, `111`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvCode {
    generators: Vec<u32>,
    memory: usize,
}

impl ConvCode {
    pub fn new(generators: Vec<u32>, memory: usize) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidCode("at least one generator is required".into()));
        }
        if memory > 16 {
            return Err(Error::InvalidCode(format!("memory {memory} too large")));
        }
        let limit = 1u32 << (memory + 1);
        for &g in &generators {
            if g == 0 || g >= limit {
                return Err(Error::InvalidCode(format!(
                    "generator {g:o} does not fit memory {memory}"
                )));
            }
        }
        Ok(Self { generators, memory })
    }

    /// Builds a code from tap vectors, one per output bit, each of length
    /// `ν + 1` with the current-input tap first.
    pub fn from_taps(taps: &[Vec<u8>]) -> Result<Self> {
        let len = taps.first().map(Vec::len).unwrap_or(0);
        if len == 0 || taps.iter().any(|t| t.len() != len) {
            return Err(Error::InvalidCode("tap vectors must share a non-zero length".into()));
        }
        let generators = taps
            .iter()
            .map(|t| t.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b & 1)))
            .collect();
        Self::new(generators, len - 1)
    }

    /// Parses a comma-separated octal generator list such as `"5,7"`.
    pub fn from_octal(text: &str, memory: usize) -> Result<Self> {
        let generators = text
            .split(',')
            .map(|g| {
                u32::from_str_radix(g.trim(), 8)
                    .map_err(|_| Error::InvalidCode(format!("bad octal generator {g:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(generators, memory)
    }

    /// The 4-state, free-distance-5 code with octal generators (5, 7).
    pub fn standard() -> Self {
        Self { generators: vec![0o5, 0o7], memory: 2 }
    }

    /// Number of coded bits per input bit.
    pub fn rate_denominator(&self) -> usize {
        self.generators.len()
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }

    /// Tap vectors with the current-input tap first.
    pub fn taps(&self) -> Vec<Vec<u8>> {
        self.generators
            .iter()
            .map(|&g| (0..=self.memory).rev().map(|i| ((g >> i) & 1) as u8).collect())
            .collect()
    }

    /// Coded length `q·(L + ν)` for an `L`-bit message.
    pub fn coded_len(&self, info_len: usize) -> usize {
        self.rate_denominator() * (info_len + self.memory)
    }

    /// Message length for a terminated codeword of `coded_len` bits.
    pub fn info_len(&self, coded_len: usize) -> Result<usize> {
        let q = self.rate_denominator();
        if !coded_len.is_multiple_of(q) {
            return Err(Error::NotMultiple { len: coded_len, multiple: q });
        }
        let steps = coded_len / q;
        if steps <= self.memory {
            return Err(Error::InvalidCode(format!(
                "coded length {coded_len} leaves no room for message bits"
            )));
        }
        Ok(steps - self.memory)
    }

    /// Output bits (generator order, first generator in the MSB of a `q`-bit
    /// word) and next state for one input bit.
    #[inline]
    fn step(&self, state: usize, input: u8) -> (u32, usize) {
        let reg = ((input as u32) << self.memory) | state as u32;
        let q = self.generators.len();
        let word = self.generators.iter().enumerate().fold(0u32, |acc, (i, &g)| {
            acc | (((reg & g).count_ones() & 1) << (q - 1 - i))
        });
        (word, (reg >> 1) as usize)
    }
}

impl Default for ConvCode {
    fn default() -> Self {
        Self::standard()
    }
}

/// Encodes `info` from the all-zero state and appends `ν` zero tail bits.
///
/// The output has `q·(L + ν)` bits grouped per input bit in generator order.
pub fn conv_encode(info: &[u8], code: &ConvCode) -> Vec<u8> {
    let q = code.rate_denominator();
    let mut out = Vec::with_capacity(code.coded_len(info.len()));
    let mut state = 0;
    let tail = std::iter::repeat_n(0u8, code.memory());
    for bit in info.iter().copied().chain(tail) {
        let (word, next) = code.step(state, bit & 1);
        out.extend((0..q).rev().map(|i| ((word >> i) & 1) as u8));
        state = next;
    }
    debug_assert_eq!(state, 0);
    out
}

/// Final encoder state after feeding `bits` (no tail) from the zero state.
pub fn final_state(bits: &[u8], code: &ConvCode) -> usize {
    bits.iter().fold(0, |s, &b| code.step(s, b & 1).1)
}

/// Correlation metric `Σ Λⱼ·cⱼ` of a codeword against bit LLRs.
pub fn codeword_metric(llrs: &[f64], codeword: &[u8]) -> f64 {
    llrs.iter()
        .zip(codeword)
        .filter(|(_, &c)| c == 1)
        .map(|(l, _)| l)
        .sum()
}

/// Maximum-likelihood sequence decoding of a zero-terminated codeword.
///
/// Returns the message whose codeword maximizes `Σ Λⱼ·cⱼ`. Equal metrics keep
/// the survivor whose dropped register bit (or, without memory, whose input)
/// is 0.
pub fn viterbi_decode(llrs: &[f64], code: &ConvCode) -> Result<Vec<u8>> {
    let info_len = code.info_len(llrs.len())?;
    let q = code.rate_denominator();
    let n_states = code.num_states();
    let steps = info_len + code.memory();

    // Branch outputs per (state, input), reused every step.
    let transitions: Vec<[(u32, usize); 2]> = (0..n_states)
        .map(|s| [code.step(s, 0), code.step(s, 1)])
        .collect();

    let mut metric = vec![f64::NEG_INFINITY; n_states];
    metric[0] = 0.0;
    let mut next_metric = vec![f64::NEG_INFINITY; n_states];
    // Per step and state: predecessor state << 1 | input bit.
    let mut survivors = vec![0u32; steps * n_states];
    let mut word_gain = vec![0.0; 1 << q];

    for t in 0..steps {
        let chunk = &llrs[t * q..(t + 1) * q];
        for (w, gain) in word_gain.iter_mut().enumerate() {
            *gain = chunk
                .iter()
                .enumerate()
                .filter(|(i, _)| (w >> (q - 1 - i)) & 1 == 1)
                .map(|(_, l)| l)
                .sum();
        }
        next_metric.fill(f64::NEG_INFINITY);
        let inputs: &[u8] = if t < info_len { &[0, 1] } else { &[0] };
        let row = &mut survivors[t * n_states..(t + 1) * n_states];
        for prev in 0..n_states {
            let m = metric[prev];
            if m == f64::NEG_INFINITY {
                continue;
            }
            for &u in inputs {
                let (word, next) = transitions[prev][u as usize];
                let candidate = m + word_gain[word as usize];
                if candidate > next_metric[next] {
                    next_metric[next] = candidate;
                    row[next] = ((prev as u32) << 1) | u as u32;
                }
            }
        }
        std::mem::swap(&mut metric, &mut next_metric);
    }

    let mut decoded = vec![0u8; steps];
    let mut state = 0usize;
    for t in (0..steps).rev() {
        let packed = survivors[t * n_states + state];
        decoded[t] = (packed & 1) as u8;
        state = (packed >> 1) as usize;
    }
    decoded.truncate(info_len);
    Ok(decoded)
}

/// Brute-force ML decoder: encodes all `2^L` messages and keeps the best.
///
/// Messages are visited in increasing binary order (first bit most
/// significant) and replaced only on a strictly larger metric, so ties
/// resolve toward zeros in the earliest positions.
pub fn exhaustive_ml_decode(llrs: &[f64], code: &ConvCode, info_len: usize) -> Result<Vec<u8>> {
    if info_len > MAX_EXHAUSTIVE_LEN {
        return Err(Error::EnumerationBound(info_len));
    }
    let expected = code.coded_len(info_len);
    if llrs.len() != expected {
        return Err(Error::LengthMismatch { expected, actual: llrs.len() });
    }
    let to_bits = |m: u32| -> Vec<u8> {
        (0..info_len).map(|i| ((m >> (info_len - 1 - i)) & 1) as u8).collect()
    };
    let mut best = (f64::NEG_INFINITY, 0u32);
    for m in 0..(1u32 << info_len) {
        let metric = codeword_metric(llrs, &conv_encode(&to_bits(m), code));
        if metric > best.0 {
            best = (metric, m);
        }
    }
    Ok(to_bits(best.1))
}

/// Seeded pseudo-random bit interleaver.
///
/// `interleave` reads `out[i] = in[perm[i]]`; `deinterleave` inverts it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
    seed: u64,
}

impl Interleaver {
    pub fn new(len: usize, seed: u64) -> Result<Self> {
        if len == 0 {
            return Err(Error::EmptyInterleaver);
        }
        let mut perm: Vec<usize> = (0..len).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self { perm, seed })
    }

    /// Wraps an explicit permutation. Fails unless it is a bijection on
    /// `0..len`.
    pub fn from_permutation(perm: Vec<usize>) -> Result<Self> {
        if perm.is_empty() {
            return Err(Error::EmptyInterleaver);
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Config("interleaver permutation is not a bijection".into()));
            }
        }
        Ok(Self { perm, seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.check(seq.len())?;
        Ok(self.perm.iter().map(|&p| seq[p]).collect())
    }

    pub fn deinterleave<T: Copy + Default>(&self, seq: &[T]) -> Result<Vec<T>> {
        self.check(seq.len())?;
        let mut out = vec![T::default(); seq.len()];
        for (&p, &v) in self.perm.iter().zip(seq) {
            out[p] = v;
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.perm.len() {
            return Err(Error::LengthMismatch { expected: self.perm.len(), actual: len });
        }
        Ok(())
    }
}
