//! `sas`: command-line front end for the photon-pair model.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{BellArgs, FitArgs, G2Args, MapArgs, SpectrumArgs, StateArgs, SynthArgs};

#[derive(Debug, Parser)]
#[command(name = "sas", version, about = "Stokes/anti-Stokes photon-pair model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Two-photon polarization state at one crystal angle and Raman shift.
    State(StateArgs),
    /// Predicted coincidence spectra.
    Spectrum(SpectrumArgs),
    /// Second-order correlation from correlated and accidental counts.
    G2(G2Args),
    /// Fit tensor factors to measured spectra.
    Fit(FitArgs),
    /// Entanglement map over Raman shift and crystal angle or laser width.
    Map(MapArgs),
    /// Optimal CHSH settings and value.
    Bell(BellArgs),
    /// Synthetic (optionally noisy) spectra in the measured-file format.
    Synth(SynthArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::State(a) => commands::state(a),
        Command::Spectrum(a) => commands::spectrum(a),
        Command::G2(a) => commands::g2(a),
        Command::Fit(a) => commands::fit(a),
        Command::Map(a) => commands::map(a),
        Command::Bell(a) => commands::bell(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
