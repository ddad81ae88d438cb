//! Monte Carlo BER experiments over Rayleigh block-fading relay links.
//!
//! One block is: draw a message, encode, interleave, map; draw `h₀`, `h₁`,
//! `h₁′`; send over source→destination and source→relay; decode and forward
//! at the relay; send over relay→destination; combine into coded-bit LLRs;
//! de-interleave; Viterbi decode; count information-bit errors.
//!
//! Blocks are simulated in fixed-size batches. The stop rule is evaluated
//! only between batches and every block draws from its own stream, so a
//! sweep produces the same counts for any thread count.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{awgn_transmit, draw_block_fading, linear_to_db, receiver_noise_var, LinkRealization};
use crate::codec::{conv_encode, viterbi_decode, ConvCode, Interleaver};
use crate::combining::{linear_llrs, CmrcNoise, CombinerKind, LinearParams, MlCombiner, SubblockGeometry};
use crate::modem::{demap_llrs, map_bits, Constellation, Modulation};
use crate::relay::{check_rate_compatible, error_prior, relay_decode_forward, relay_forward_exact, ResidualBerTable};
use crate::rng::{stream, SimRng, Stream};
use crate::{par, Error, Result};

/// Header of the sweep CSV.
pub const CSV_HEADER: [&str; 7] = ["gamma0_db", "combiner", "mode", "ber", "ci95", "bits", "errors"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "relay")]
    Relay,
    /// Direct link only.
    #[serde(rename = "no-relay")]
    NoRelay,
    /// Error-free relay: the two-branch receive diversity bound.
    #[serde(rename = "mimo-1x2")]
    Mimo1x2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Relay => "relay",
            Mode::NoRelay => "no-relay",
            Mode::Mimo1x2 => "mimo-1x2",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relay" => Ok(Mode::Relay),
            "no-relay" | "none" => Ok(Mode::NoRelay),
            "mimo-1x2" | "mimo" => Ok(Mode::Mimo1x2),
            _ => Err(Error::Config(format!("unknown mode {s:?}"))),
        }
    }
}

/// Which source→relay SNR indexes the residual BER table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualBerMode {
    /// Per-block `|h₁′|²P₀/σ_sr²`; pair with a table calibrated without fading.
    #[default]
    Instantaneous,
    /// Average `γ₁′`; pair with a table calibrated under fading.
    Average,
}

/// One BER curve: a combiner and a link mode. Serialized as its
/// [`FromStr`] text form, e.g. `"ml"` or `"mrc@mimo-1x2"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Curve {
    pub combiner: CombinerKind,
    pub mode: Mode,
}

impl Curve {
    pub fn new(combiner: CombinerKind, mode: Mode) -> Self {
        Self { combiner, mode }
    }

    /// Curve label used in the `combiner` CSV column.
    pub fn combiner_label(&self) -> &'static str {
        match self.mode {
            Mode::NoRelay => "none",
            _ => self.combiner.name(),
        }
    }
}

impl FromStr for Curve {
    type Err = Error;

    /// Parses `ml`, `mrc`, `mmse`, `cmrc` (relay mode), `none` (no relay),
    /// `mimo` (error-free relay with ML combining) or `<combiner>@<mode>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((c, m)) = s.split_once('@') {
            return Ok(Curve::new(c.parse()?, m.parse()?));
        }
        match s {
            "none" | "no-relay" => Ok(Curve::new(CombinerKind::Ml, Mode::NoRelay)),
            "mimo" | "mimo-1x2" => Ok(Curve::new(CombinerKind::Ml, Mode::Mimo1x2)),
            _ => Ok(Curve::new(s.parse()?, Mode::Relay)),
        }
    }
}

impl TryFrom<String> for Curve {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Curve> for String {
    fn from(c: Curve) -> String {
        c.to_string()
    }
}

impl fmt::Display for Curve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.combiner.name(), self.mode)
    }
}

/// Simulation parameters. Field names match the JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Information bits per block `L`.
    pub info_len: usize,
    /// Octal generators, comma separated.
    pub code: String,
    pub code_memory: usize,
    pub source: Modulation,
    pub relay: Modulation,
    pub combiner: CombinerKind,
    pub mode: Mode,
    /// Extra curves; when non-empty they replace `combiner`/`mode`.
    pub curves: Vec<Curve>,
    pub gamma0_db: Vec<f64>,
    /// `γ₁ = γ₀ + gamma1_offset_db`.
    pub gamma1_offset_db: f64,
    /// `γ₁′ = γ₀ + gamma1p_offset_db`.
    pub gamma1p_offset_db: f64,
    /// Stop once this many information-bit errors are counted...
    pub target_errors: u64,
    /// ...spread over at least this many erroneous blocks.
    pub target_block_errors: u64,
    /// Hard cap on simulated blocks per point.
    pub max_blocks: u64,
    /// Blocks simulated between stop-rule checks.
    pub batch_blocks: u64,
    pub seed: u64,
    pub interleaver_seed: u64,
    pub power_source: f64,
    pub power_relay: f64,
    pub calibration_table: Option<PathBuf>,
    pub residual_ber: ResidualBerMode,
    pub cmrc_noise: CmrcNoise,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            info_len: 1024,
            code: "5,7".into(),
            code_memory: 2,
            source: Modulation::Qpsk,
            relay: Modulation::Qpsk,
            combiner: CombinerKind::Ml,
            mode: Mode::Relay,
            curves: Vec::new(),
            gamma0_db: vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0],
            gamma1_offset_db: 0.0,
            gamma1p_offset_db: 0.0,
            target_errors: 100,
            target_block_errors: 10,
            max_blocks: 20_000,
            batch_blocks: 32,
            seed: 1,
            interleaver_seed: 7,
            power_source: 1.0,
            power_relay: 1.0,
            calibration_table: None,
            residual_ber: ResidualBerMode::Instantaneous,
            cmrc_noise: CmrcNoise::Nominal,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn conv_code(&self) -> Result<ConvCode> {
        ConvCode::from_octal(&self.code, self.code_memory)
    }

    pub fn interleaver(&self) -> Result<Interleaver> {
        Interleaver::new(self.conv_code()?.coded_len(self.info_len), self.interleaver_seed)
    }

    /// Curves to simulate, in CSV order.
    pub fn curve_list(&self) -> Vec<Curve> {
        if self.curves.is_empty() {
            vec![Curve::new(self.combiner, self.mode)]
        } else {
            self.curves.clone()
        }
    }

    /// Reads the residual BER table named by `calibration_table`, if any.
    pub fn load_table(&self) -> Result<Option<ResidualBerTable>> {
        self.calibration_table.as_ref().map(ResidualBerTable::load).transpose()
    }
}

/// Outcome of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerResult {
    pub gamma0_db: f64,
    pub curve: Curve,
    pub errors: u64,
    pub bits: u64,
    pub blocks: u64,
    /// Blocks with at least one information-bit error.
    pub block_errors: u64,
    pub wall_time: Duration,
}

impl BerResult {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Half-width of the normal-approximation 95% binomial interval.
    pub fn ci95(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        1.96 * (p * (1.0 - p) / self.bits as f64).sqrt()
    }
}

/// A validated experiment: code, interleaver, constellations and table.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    code: ConvCode,
    interleaver: Interleaver,
    source: Constellation,
    relay: Constellation,
    table: Option<ResidualBerTable>,
}

impl Simulation {
    pub fn new(cfg: SimConfig, table: Option<ResidualBerTable>) -> Result<Self> {
        if cfg.info_len == 0 {
            return Err(Error::Config("info_len must be positive".into()));
        }
        if cfg.batch_blocks == 0 || cfg.max_blocks == 0 {
            return Err(Error::Config("batch_blocks and max_blocks must be positive".into()));
        }
        if !cfg.gamma1_offset_db.is_finite() || !cfg.gamma1p_offset_db.is_finite() {
            return Err(Error::Config("SNR offsets must be finite".into()));
        }
        if !(cfg.power_source > 0.0 && cfg.power_relay > 0.0) {
            return Err(Error::Config("transmit powers must be positive".into()));
        }
        let code = cfg.conv_code()?;
        let interleaver = cfg.interleaver()?;
        let source = Constellation::new(cfg.source);
        let relay = Constellation::new(cfg.relay);
        let coded_len = interleaver.len();
        check_rate_compatible(coded_len, &source, &relay)?;
        let geometry = SubblockGeometry::for_constellations(&source, &relay)?;
        if coded_len % geometry.bits != 0 {
            return Err(Error::RateIncompatible { coded: coded_len, bits_per_symbol: geometry.bits });
        }
        for curve in cfg.curve_list() {
            if curve.mode == Mode::NoRelay {
                continue;
            }
            if curve.combiner.is_linear() && source.kind() != relay.kind() {
                return Err(Error::ModulationMismatch { source_const: source.name(), relay_const: relay.name() });
            }
            let needs_table = matches!(curve.combiner, CombinerKind::Ml | CombinerKind::Mmse);
            if curve.mode == Mode::Relay && needs_table && table.is_none() {
                return Err(Error::MissingTable(curve.combiner.name()));
            }
        }
        Ok(Self { cfg, code, interleaver, source, relay, table })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Runs one curve at one `γ₀`. `point` selects the random streams.
    ///
    /// Stops at the first batch boundary where both error targets are met,
    /// or at the block cap.
    pub fn run_point(&self, curve: Curve, point: u64, gamma0_db: f64) -> Result<BerResult> {
        let cfg = &self.cfg;
        self.run_until(curve, point, gamma0_db, cfg.max_blocks, |errors, block_errors| {
            errors >= cfg.target_errors && block_errors >= cfg.target_block_errors
        })
    }

    /// Runs exactly `blocks` blocks. Two curves run with the same `point`
    /// and block count see identical messages, fading and noise.
    pub fn run_blocks(&self, curve: Curve, point: u64, gamma0_db: f64, blocks: u64) -> Result<BerResult> {
        self.run_until(curve, point, gamma0_db, blocks, |_, _| false)
    }

    fn run_until(
        &self,
        curve: Curve,
        point: u64,
        gamma0_db: f64,
        cap: u64,
        done: impl Fn(u64, u64) -> bool,
    ) -> Result<BerResult> {
        let start = Instant::now();
        let (mut errors, mut block_errors, mut blocks) = (0u64, 0u64, 0u64);
        while blocks < cap && !done(errors, block_errors) {
            let batch = self.cfg.batch_blocks.min(cap - blocks);
            let counts = par::map_indices(blocks..blocks + batch, |b| self.simulate_block(curve, point, b, gamma0_db));
            for c in counts {
                let c = c?;
                errors += c;
                block_errors += u64::from(c > 0);
            }
            blocks += batch;
        }
        Ok(BerResult {
            gamma0_db,
            curve,
            errors,
            bits: blocks * self.cfg.info_len as u64,
            blocks,
            block_errors,
            wall_time: start.elapsed(),
        })
    }

    /// Runs every curve over the whole `γ₀` list, curve-major.
    pub fn run_sweep(&self) -> Result<Vec<BerResult>> {
        if self.cfg.gamma0_db.is_empty() {
            return Err(Error::Config("empty gamma0_db sweep".into()));
        }
        let mut out = Vec::new();
        for curve in self.cfg.curve_list() {
            for (i, &g) in self.cfg.gamma0_db.iter().enumerate() {
                out.push(self.run_point(curve, i as u64, g)?);
            }
        }
        Ok(out)
    }

    fn link(&self, point: u64, block: u64, gamma0_db: f64) -> LinkRealization {
        let gain = |s: Stream| draw_block_fading(&mut stream(self.cfg.seed, &[point, block, s as u64]));
        LinkRealization::from_snrs(
            [gain(Stream::SourceDestFading), gain(Stream::RelayDestFading), gain(Stream::SourceRelayFading)],
            gamma0_db,
            gamma0_db + self.cfg.gamma1_offset_db,
            gamma0_db + self.cfg.gamma1p_offset_db,
            self.cfg.power_source,
            self.cfg.power_relay,
        )
    }

    /// Relay bit error probability assumed by the destination for this block.
    fn residual_p(&self, link: &LinkRealization, gamma0_db: f64) -> f64 {
        let Some(table) = &self.table else { return 0.0 };
        let gamma_db = match self.cfg.residual_ber {
            ResidualBerMode::Instantaneous => linear_to_db(link.gamma_sr()),
            ResidualBerMode::Average => gamma0_db + self.cfg.gamma1p_offset_db,
        };
        table.lookup_p(gamma_db).clamp(0.0, 0.5)
    }

    /// Simulates one block and returns its information-bit error count.
    pub fn simulate_block(&self, curve: Curve, point: u64, block: u64, gamma0_db: f64) -> Result<u64> {
        let seed = self.cfg.seed;
        let rng = |s: Stream| -> SimRng { stream(seed, &[point, block, s as u64]) };

        let mut msg_rng = rng(Stream::Message);
        let info: Vec<u8> = (0..self.cfg.info_len).map(|_| msg_rng.random_range(0..2u8)).collect();
        let coded = self.interleaver.interleave(&conv_encode(&info, &self.code))?;
        let x = map_bits(&coded, &self.source)?;
        let link = self.link(point, block, gamma0_db);
        let y_sd = awgn_transmit(&x, link.h_sd, link.noise_sd, link.power_source, &mut rng(Stream::SourceDestNoise))?;

        let llrs = if curve.mode == Mode::NoRelay {
            demap_llrs(&y_sd, link.eff_sd(), receiver_noise_var(link.noise_sd), &self.source)?
        } else {
            let (forward, p) = if curve.mode == Mode::Mimo1x2 {
                (relay_forward_exact(&coded, &self.relay)?, 0.0)
            } else {
                let y_sr = awgn_transmit(&x, link.h_sr, link.noise_sr, link.power_source, &mut rng(Stream::SourceRelayNoise))?;
                let fwd = relay_decode_forward(&y_sr, &link, &self.code, &self.interleaver, &self.source, &self.relay)?;
                (fwd, self.residual_p(&link, gamma0_db))
            };
            let y_rd = awgn_transmit(
                &forward.symbols,
                link.h_rd,
                link.noise_rd,
                link.power_relay,
                &mut rng(Stream::RelayDestNoise),
            )?;
            let prior = error_prior(&self.relay, p)?;
            match curve.combiner {
                CombinerKind::Ml => MlCombiner::new(&self.source, &self.relay, &prior)?.llrs(&y_sd, &y_rd, &link)?,
                kind => {
                    let gamma_sr = if curve.mode == Mode::Mimo1x2 { f64::INFINITY } else { link.gamma_sr() };
                    let params = LinearParams {
                        gamma_sr,
                        gamma_rd: link.gamma_rd(),
                        rho: prior.correlation(&self.relay),
                        alpha_sq: 1.0,
                        cmrc_noise: self.cfg.cmrc_noise,
                    };
                    linear_llrs(kind, &y_sd, &y_rd, &link, &params, &self.source, &self.relay)?
                }
            }
        };
        let decoded = viterbi_decode(&self.interleaver.deinterleave(&llrs)?, &self.code)?;
        Ok(decoded.iter().zip(&info).filter(|(a, b)| a != b).count() as u64)
    }
}

/// Runs a single point for the configuration's first curve.
pub fn run_ber_point(
    cfg: &SimConfig,
    table: Option<&ResidualBerTable>,
    point: u64,
    gamma0_db: f64,
) -> Result<BerResult> {
    let sim = Simulation::new(cfg.clone(), table.cloned())?;
    let curve = cfg.curve_list()[0];
    sim.run_point(curve, point, gamma0_db)
}

/// Runs the full sweep described by `cfg`.
pub fn run_sweep(cfg: &SimConfig, table: Option<&ResidualBerTable>) -> Result<Vec<BerResult>> {
    Simulation::new(cfg.clone(), table.cloned())?.run_sweep()
}

/// Writes results with the [`CSV_HEADER`] columns. Wall time is left out so
/// that equal seeds give byte-identical files.
pub fn write_results_csv<W: Write>(results: &[BerResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.gamma0_db.to_string(),
            r.curve.combiner_label().to_string(),
            r.curve.mode.name().to_string(),
            r.ber().to_string(),
            r.ci95().to_string(),
            r.bits.to_string(),
            r.errors.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_results_csv(results: &[BerResult], path: impl AsRef<Path>) -> Result<()> {
    write_results_csv(results, std::fs::File::create(path)?)
}
