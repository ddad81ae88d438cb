use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dfrelay::codec::{ConvCode, Interleaver};
use dfrelay::harness::{save_results_csv, write_results_csv, Curve, SimConfig, Simulation};
use dfrelay::modem::Constellation;
use dfrelay::relay::{calibrate_residual_ber, CalibrationSetup};

#[derive(Parser)]
#[command(name = "dfrelay", version, about = "Decode-and-forward relay channel BER simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a BER sweep and write the results CSV.
    Simulate {
        /// JSON configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated curves: ml, mrc, mmse, cmrc, none, mimo or <combiner>@<mode>.
        #[arg(long)]
        combiner: Option<String>,
        /// Comma-separated γ₀ values in dB.
        #[arg(long, allow_hyphen_values = true)]
        gamma0: Option<String>,
        /// Block cap per point.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Residual BER table (overrides the config path).
        #[arg(long)]
        table: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the relay's residual BER versus source→relay SNR.
    Calibrate {
        /// Octal generators.
        #[arg(long, default_value = "5,7")]
        code: String,
        #[arg(long, default_value_t = 2)]
        memory: usize,
        /// Source constellation: bpsk, qpsk or qam16.
        #[arg(long = "mod", default_value = "bpsk")]
        modulation: String,
        /// SNR grid in dB: comma list or start:stop:step.
        #[arg(long, allow_hyphen_values = true, default_value = "-10:30:1")]
        grid: String,
        /// Information bits per block.
        #[arg(long, default_value_t = 1024)]
        info_len: usize,
        #[arg(long, default_value_t = 7)]
        interleaver_seed: u64,
        /// Information bits simulated per grid point.
        #[arg(long, default_value_t = 200_000)]
        bits: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Rayleigh fading per block (table indexed by average SNR).
        #[arg(long)]
        fading: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad number {v:?}")))
        .collect()
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) = (start.parse()?, stop.parse()?, step.parse()?);
            if step <= 0.0 {
                bail!("grid step must be positive");
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [_] => parse_list(text),
        _ => bail!("grid must be a comma list or start:stop:step"),
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, combiner, gamma0, trials, seed, table, out } => {
            let mut cfg = match config {
                Some(path) => SimConfig::load(&path).with_context(|| format!("reading {}", path.display()))?,
                None => SimConfig::default(),
            };
            if let Some(list) = combiner {
                cfg.curves = list.split(',').map(str::parse::<Curve>).collect::<Result<_, _>>()?;
            }
            if let Some(g) = gamma0 {
                cfg.gamma0_db = parse_list(&g)?;
            }
            if let Some(t) = trials {
                cfg.max_blocks = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if table.is_some() {
                cfg.calibration_table = table;
            }
            let table = cfg.load_table().context("loading residual BER table")?;
            let sim = Simulation::new(cfg, table)?;
            let results = sim.run_sweep()?;
            for r in &results {
                eprintln!(
                    "{:>6.2} dB  {:<5} {:<9} ber={:.3e} ±{:.1e}  errors={} blocks={}/{} ({:.2?})",
                    r.gamma0_db,
                    r.curve.combiner_label(),
                    r.curve.mode,
                    r.ber(),
                    r.ci95(),
                    r.errors,
                    r.block_errors,
                    r.blocks,
                    r.wall_time
                );
            }
            match out {
                Some(path) => save_results_csv(&results, &path).with_context(|| format!("writing {}", path.display()))?,
                None => write_results_csv(&results, std::io::stdout().lock())?,
            }
        }
        Command::Calibrate { code, memory, modulation, grid, info_len, interleaver_seed, bits, seed, fading, out } => {
            let code = ConvCode::from_octal(&code, memory)?;
            let source: Constellation = modulation.parse()?;
            let interleaver = Interleaver::new(code.coded_len(info_len), interleaver_seed)?;
            let grid = parse_grid(&grid)?;
            let setup = CalibrationSetup { code: &code, interleaver: &interleaver, source: &source, fading };
            let table = calibrate_residual_ber(&grid, bits, seed, &setup)?;
            table.save(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} rows to {}", table.rows().len(), out.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("-2:2:1").unwrap(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(parse_grid("1, 3.5").unwrap(), vec![1.0, 3.5]);
        assert!(parse_grid("0:1:0").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
