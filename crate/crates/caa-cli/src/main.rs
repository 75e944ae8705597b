//! `caa` — kernels, verification suites, benchmarks, and fixtures for
//! channelized axial attention.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::ensure;
use caa_cli::bench::{self, BenchConfig};
use caa_cli::fixtures;
use caa_cli::report::{self, FlopsConfig};
use caa_cli::verify::{self, VerifyConfig};
use caa_core::attention::AttnDims;
use caa_core::flops::GateConfig;
use caa_core::oracle::OracleCaps;
use caa_core::tensor::Dtype;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "caa",
    version,
    about = "Channelized axial attention: kernels, verification, and benchmarks"
)]
struct Cli {
    /// Master seed for every randomized tensor.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    F32,
    F64,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::F32 => Dtype::F32,
            DtypeArg::F64 => Dtype::F64,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every verification suite; exits nonzero if any suite fails.
    Verify {
        /// Nudge one gate weight on the efficient path so the oracle
        /// comparison must fail (proves the suites watch the real kernels).
        #[arg(long)]
        mutate: bool,
        /// Directory holding the committed fixture sets.
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
    },
    /// Sweep the grouped executor and emit CSV timings.
    Bench {
        /// Input heights; paired positionally with --widths.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![16, 24, 32])]
        heights: Vec<usize>,
        /// Input widths; a short list is extended with its last entry.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![16, 24, 32])]
        widths: Vec<usize>,
        /// Channel counts (C = Cq = Cv).
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![8])]
        channels: Vec<usize>,
        /// Group counts to sweep at each geometry.
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = vec![1, 2, 4, 8, 16])]
        groups: Vec<usize>,
        /// Timing repeats per row (minimum wall time is reported).
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = DtypeArg::F32)]
        dtype: DtypeArg,
        #[arg(long, default_value_t = 1)]
        gate_depth: usize,
        #[arg(long, default_value_t = 16)]
        gate_width: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the analytic cost model for all attention variants.
    Flops {
        #[arg(long, default_value_t = 33)]
        height: usize,
        #[arg(long, default_value_t = 33)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        channels: usize,
        /// Query channels; defaults to --channels.
        #[arg(long)]
        cq: Option<usize>,
        /// Value channels; defaults to --channels.
        #[arg(long)]
        cv: Option<usize>,
        #[arg(long, default_value_t = 5)]
        gate_depth: usize,
        #[arg(long, default_value_t = 128)]
        gate_width: usize,
    },
    /// Write the reference fixture sets (inputs, parameters, loop-reference
    /// outputs) as container tensors.
    Fixtures {
        /// Directory to write the sets under.
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Verify { mutate, fixtures } => {
            let cfg = VerifyConfig {
                seed: cli.seed,
                mutate,
                fixtures_dir: fixtures,
                oracle_caps: OracleCaps::from_env(),
            };
            let outcomes = verify::run(&cfg);
            print!("{}", verify::render_table(&outcomes));
            Ok(if verify::all_passed(&outcomes) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Bench {
            heights,
            widths,
            channels,
            groups,
            repeats,
            dtype,
            gate_depth,
            gate_width,
            out,
        } => {
            ensure!(
                heights.iter().chain(&widths).chain(&channels).all(|&v| v >= 1),
                "heights, widths, and channels must be at least 1"
            );
            ensure!(repeats >= 1, "--repeats must be at least 1");
            ensure!(gate_depth >= 1, "--gate-depth must be at least 1");
            ensure!(gate_width >= 1, "--gate-width must be at least 1");
            let cfg = BenchConfig {
                heights,
                widths,
                channels,
                groups,
                repeats,
                seed: cli.seed,
                dtype: dtype.into(),
                gate_depth,
                gate_width,
            };
            let csv = bench::run(&cfg)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &csv)?;
                    eprintln!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Flops {
            height,
            width,
            channels,
            cq,
            cv,
            gate_depth,
            gate_width,
        } => {
            ensure!(
                height >= 1 && width >= 1 && channels >= 1,
                "dimensions must be at least 1"
            );
            let cq = cq.unwrap_or(channels);
            let cv = cv.unwrap_or(channels);
            ensure!(cq >= 1 && cv >= 1, "channel counts must be at least 1");
            ensure!(gate_depth >= 1, "--gate-depth must be at least 1");
            ensure!(gate_width >= 1, "--gate-width must be at least 1");
            let cfg = FlopsConfig {
                dims: AttnDims { h: height, w: width, c: channels, cq, cv },
                gate: GateConfig {
                    hidden_layers: gate_depth,
                    hidden_width: gate_width,
                },
            };
            print!("{}", report::render(&cfg));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Fixtures { out } => {
            let names = fixtures::write(&out, cli.seed, &OracleCaps::from_env())?;
            for name in &names {
                println!("wrote {}", out.join(name).display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
