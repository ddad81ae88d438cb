//! Decode-and-forward relaying and the residual BER model of the relay.
//!
//! The relay demodulates the source signal, decodes it, re-encodes the
//! estimate with the same code and interleaver, and maps the result onto its
//! own constellation. Decoding errors at the relay are seen by the
//! destination as independent flips of the relay's label bits with a
//! probability `p` that depends on the source→relay SNR. `p` comes from a
//! [`ResidualBerTable`] measured once by simulation.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn_transmit, draw_block_fading, receiver_noise_var, snr_db_to_noise_var, LinkRealization};
use crate::codec::{conv_encode, viterbi_decode, ConvCode, Interleaver};
use crate::modem::{demap_llrs, map_bits, Constellation};
use crate::rng::{stream, Stream};
use crate::{par, Error, Result};

/// Smallest calibration effort per grid point, in information bits.
pub const MIN_CALIBRATION_BITS: usize = 10_000;

/// Conditional distribution of the symbol the relay actually sends given the
/// symbol it would send after error-free decoding.
///
/// Under the independent bit-flip model,
/// `Pr[x₁ | x̃₁] = p^d (1 − p)^(r − d)` with `d` the Hamming distance of the
/// two labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayErrorPrior {
    size: usize,
    p: f64,
    // Row-major, [intended][sent].
    probs: Vec<f64>,
}

impl RelayErrorPrior {
    pub fn new(relay: &Constellation, p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        let size = relay.size();
        let r = relay.bits_per_symbol() as i32;
        let probs = (0..size * size)
            .map(|i| {
                let d = ((i / size) ^ (i % size)).count_ones() as i32;
                p.powi(d) * (1.0 - p).powi(r - d)
            })
            .collect();
        Ok(Self { size, p, probs })
    }

    pub fn bit_error_probability(&self) -> f64 {
        self.p
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn prob(&self, intended: usize, sent: usize) -> f64 {
        self.probs[intended * self.size + sent]
    }

    /// Row-major `[intended][sent]` probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, intended: usize) -> &[f64] {
        &self.probs[intended * self.size..(intended + 1) * self.size]
    }

    /// Element-wise natural log (`-inf` where the probability is zero).
    pub fn log_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.ln()).collect()
    }

    /// `|E[x₁ x̃₁*]|` for uniformly distributed intended symbols.
    pub fn correlation(&self, relay: &Constellation) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for intended in 0..self.size {
            let xi = relay.point(intended).conj();
            for sent in 0..self.size {
                acc += relay.point(sent) * xi * self.prob(intended, sent);
            }
        }
        (acc / self.size as f64).norm()
    }
}

/// Builds the relay error prior for bit error probability `p`.
pub fn error_prior(relay: &Constellation, p: f64) -> Result<RelayErrorPrior> {
    RelayErrorPrior::new(relay, p)
}

/// Output of one decode-and-forward pass.
#[derive(Debug, Clone)]
pub struct RelayForward {
    /// Re-encoded, re-interleaved coded bits (what the relay actually sends).
    pub coded: Vec<u8>,
    /// Relay symbols, `T₁ = sT/r` of them.
    pub symbols: Vec<Complex64>,
}

/// Checks that a coded block of `coded_len` bits fills whole symbols of both
/// constellations.
pub fn check_rate_compatible(coded_len: usize, source: &Constellation, relay: &Constellation) -> Result<()> {
    for bits_per_symbol in [source.bits_per_symbol(), relay.bits_per_symbol()] {
        if !coded_len.is_multiple_of(bits_per_symbol) {
            return Err(Error::RateIncompatible { coded: coded_len, bits_per_symbol });
        }
    }
    Ok(())
}

/// Demodulates, decodes, re-encodes, re-interleaves and re-modulates the
/// source block received at the relay.
pub fn relay_decode_forward(
    y_sr: &[Complex64],
    link: &LinkRealization,
    code: &ConvCode,
    interleaver: &Interleaver,
    source: &Constellation,
    relay: &Constellation,
) -> Result<RelayForward> {
    let coded_len = y_sr.len() * source.bits_per_symbol();
    if coded_len != interleaver.len() {
        return Err(Error::LengthMismatch { expected: interleaver.len(), actual: coded_len });
    }
    check_rate_compatible(coded_len, source, relay)?;
    let llrs = demap_llrs(y_sr, link.eff_sr(), receiver_noise_var(link.noise_sr), source)?;
    let estimate = viterbi_decode(&interleaver.deinterleave(&llrs)?, code)?;
    let coded = interleaver.interleave(&conv_encode(&estimate, code))?;
    let symbols = map_bits(&coded, relay)?;
    Ok(RelayForward { coded, symbols })
}

/// Relay output under error-free decoding.
pub fn relay_forward_exact(coded_interleaved: &[u8], relay: &Constellation) -> Result<RelayForward> {
    Ok(RelayForward {
        coded: coded_interleaved.to_vec(),
        symbols: map_bits(coded_interleaved, relay)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct TableRow {
    gamma_sr_db: f64,
    p: f64,
}

/// Lookup from source→relay SNR (dB) to the relay's residual coded-bit error
/// probability.
///
/// Rows are strictly increasing in SNR and non-increasing in `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBerTable {
    rows: Vec<(f64, f64)>,
}

impl ResidualBerTable {
    pub fn new(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Table("table is empty".into()));
        }
        for &(g, p) in &rows {
            if g.is_nan() || !(0.0..=0.5).contains(&p) {
                return Err(Error::Table(format!("invalid row ({g}, {p})")));
            }
        }
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Table("SNR grid must be strictly increasing".into()));
            }
            if w[1].1 > w[0].1 {
                return Err(Error::Table(format!(
                    "p increases between {} dB and {} dB",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(Self { rows })
    }

    /// Builds a table from raw measurements: sorts by SNR, clamps to
    /// `[0, 0.5]` and enforces monotonicity with a bit-weighted pool
    /// adjacent violators pass.
    pub fn from_measurements(points: &[CalibrationPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Table("no calibration points".into()));
        }
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.gamma_sr_db.total_cmp(&b.gamma_sr_db));
        let values: Vec<f64> = sorted.iter().map(|c| c.rate().clamp(0.0, 0.5)).collect();
        let weights: Vec<f64> = sorted.iter().map(|c| c.bits.max(1) as f64).collect();
        let fitted = isotonic_non_increasing(&values, &weights);
        Self::new(sorted.iter().map(|c| c.gamma_sr_db).zip(fitted).collect())
    }

    pub fn rows(&self) -> &[(f64, f64)] {
        &self.rows
    }

    /// Piecewise-linear interpolation in (dB, p), clamped to the end rows.
    pub fn lookup_p(&self, gamma_sr_db: f64) -> f64 {
        let rows = &self.rows;
        let (first, last) = (rows[0], rows[rows.len() - 1]);
        if gamma_sr_db.is_nan() || gamma_sr_db <= first.0 {
            return first.1;
        }
        if gamma_sr_db >= last.0 {
            return last.1;
        }
        let i = rows.partition_point(|&(g, _)| g <= gamma_sr_db);
        let (g0, p0) = rows[i - 1];
        let (g1, p1) = rows[i];
        if g1.is_infinite() {
            return p0;
        }
        p0 + (p1 - p0) * (gamma_sr_db - g0) / (g1 - g0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for &(gamma_sr_db, p) in &self.rows {
            w.serialize(TableRow { gamma_sr_db, p })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["gamma_sr_db", "p"] {
            return Err(Error::Table(format!("unexpected header {headers:?}")));
        }
        let rows = r
            .deserialize::<TableRow>()
            .map(|row| row.map(|t| (t.gamma_sr_db, t.p)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::new(rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Residual-BER lookup for a constant bit error probability.
impl From<f64> for ResidualBerTable {
    fn from(p: f64) -> Self {
        Self { rows: vec![(0.0, p.clamp(0.0, 0.5))] }
    }
}

fn isotonic_non_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks of (mean, weight, count), merged while the order is violated.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m1, w1, c1) = blocks[blocks.len() - 1];
            let (m0, w0, c0) = blocks[blocks.len() - 2];
            if m1 <= m0 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m0 * w0 + m1 * w1) / (w0 + w1), w0 + w1, c0 + c1));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

/// Raw result of simulating DF processing at one source→relay SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    pub gamma_sr_db: f64,
    /// Disagreeing coded bits between the relay's re-encoded stream and the
    /// source's coded stream.
    pub errors: u64,
    pub bits: u64,
}

impl CalibrationPoint {
    pub fn rate(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }
}

/// Calibration setup shared by every grid point.
#[derive(Debug, Clone)]
pub struct CalibrationSetup<'a> {
    pub code: &'a ConvCode,
    pub interleaver: &'a Interleaver,
    pub source: &'a Constellation,
    /// Draw a Rayleigh gain per block (average-SNR table) instead of a unit
    /// gain (instantaneous-SNR table).
    pub fading: bool,
}

/// Simulates DF processing on each grid SNR with at least `info_bits` message
/// bits per point. Grid points run in parallel on independent streams.
pub fn measure_residual_ber(
    grid_db: &[f64],
    info_bits: usize,
    seed: u64,
    setup: &CalibrationSetup<'_>,
) -> Result<Vec<CalibrationPoint>> {
    if grid_db.is_empty() {
        return Err(Error::Table("empty SNR grid".into()));
    }
    if info_bits < MIN_CALIBRATION_BITS {
        return Err(Error::Config(format!(
            "calibration needs at least {MIN_CALIBRATION_BITS} information bits per point"
        )));
    }
    let coded_len = setup.interleaver.len();
    let info_len = setup.code.info_len(coded_len)?;
    if !coded_len.is_multiple_of(setup.source.bits_per_symbol()) {
        return Err(Error::RateIncompatible {
            coded: coded_len,
            bits_per_symbol: setup.source.bits_per_symbol(),
        });
    }
    let blocks = info_bits.div_ceil(info_len) as u64;

    par::map_indices(0..grid_db.len() as u64, |i| {
        let gamma = grid_db[i as usize];
        let noise_var = snr_db_to_noise_var(gamma, 1.0);
        let mut errors = 0u64;
        for b in 0..blocks {
            let mut msg_rng = stream(seed, &[i, b, Stream::Message as u64]);
            let info: Vec<u8> = (0..info_len).map(|_| msg_rng.random_range(0..2u8)).collect();
            let coded = setup.interleaver.interleave(&conv_encode(&info, setup.code))?;
            let x = map_bits(&coded, setup.source)?;
            let h = if setup.fading {
                draw_block_fading(&mut stream(seed, &[i, b, Stream::SourceRelayFading as u64]))
            } else {
                Complex64::new(1.0, 0.0)
            };
            let mut noise_rng = stream(seed, &[i, b, Stream::SourceRelayNoise as u64]);
            let y = awgn_transmit(&x, h, noise_var, 1.0, &mut noise_rng)?;
            let link = LinkRealization {
                h_sd: Complex64::new(0.0, 0.0),
                h_rd: Complex64::new(0.0, 0.0),
                h_sr: h,
                noise_sd: 1.0,
                noise_rd: 1.0,
                noise_sr: noise_var,
                power_source: 1.0,
                power_relay: 1.0,
            };
            let fwd = relay_decode_forward(&y, &link, setup.code, setup.interleaver, setup.source, setup.source)?;
            errors += fwd.coded.iter().zip(&coded).filter(|(a, b)| a != b).count() as u64;
        }
        Ok(CalibrationPoint { gamma_sr_db: gamma, errors, bits: blocks * coded_len as u64 })
    })
    .into_iter()
    .collect()
}

/// Measures the residual BER on `grid_db` and returns the monotone table.
pub fn calibrate_residual_ber(
    grid_db: &[f64],
    info_bits: usize,
    seed: u64,
    setup: &CalibrationSetup<'_>,
) -> Result<ResidualBerTable> {
    ResidualBerTable::from_measurements(&measure_residual_ber(grid_db, info_bits, seed, setup)?)
}
