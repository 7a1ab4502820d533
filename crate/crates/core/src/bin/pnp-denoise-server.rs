//! Reference external denoiser speaking the `PNPD`/`PNPR` framing on stdin/stdout.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use pnp_core::denoiser::protocol::{read_request, write_response};
use pnp_core::denoiser::{Denoiser, GaussianMmse, PriorMean};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    /// Return the input unchanged.
    Echo,
    /// Closed-form MMSE denoiser for a constant-mean Gaussian prior.
    Gaussian,
    /// Reply with a corrupted header, then exit.
    Malformed,
    /// Exit with a nonzero status after printing a diagnostic.
    Crash,
    /// Never answer.
    Hang,
}

#[derive(Parser, Debug)]
#[command(about = "Sample denoiser process for the external adapter")]
struct Args {
    #[arg(value_enum, default_value = "echo")]
    mode: Mode,
    #[arg(long, default_value_t = 0.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    loop {
        let (x, eps) = match read_request(&mut input) {
            Ok(Some(req)) => req,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("pnp-denoise-server: {e}");
                return ExitCode::from(2);
            }
        };
        let y = match args.mode {
            Mode::Echo => x,
            Mode::Gaussian => {
                let d = match GaussianMmse::new(PriorMean::Constant(args.mean), args.variance, eps) {
                    Ok(d) => d,
                    Err(e) => {
                        eprintln!("pnp-denoise-server: {e}");
                        return ExitCode::from(2);
                    }
                };
                match d.denoise(&x) {
                    Ok(y) => y,
                    Err(e) => {
                        eprintln!("pnp-denoise-server: {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            Mode::Malformed => {
                eprintln!("pnp-denoise-server: sending malformed header");
                let _ = output.write_all(b"PNPX\x01\x00\x00\x00garbage");
                let _ = output.flush();
                return ExitCode::SUCCESS;
            }
            Mode::Crash => {
                eprintln!("pnp-denoise-server: simulated failure");
                return ExitCode::from(3);
            }
            Mode::Hang => loop {
                std::thread::park();
            },
        };
        if let Err(e) = write_response(&mut output, &y) {
            eprintln!("pnp-denoise-server: {e}");
            return ExitCode::from(2);
        }
    }
}
