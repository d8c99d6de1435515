use std::path::PathBuf;
use std::process::ExitCode;

use catgeom_cli::{read_config, resolve, run, CliError, Request};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catgeom", version, about = "Information geometry of category learning: scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// 1-D Gaussian pair: densities, posteriors, F_cat, boundaries and maxima
    Gauss1d(Args),
    /// 2-D circular pair: boundary, maxima locus and discriminant curves
    Pdc2d(Args),
    /// Categorical Fisher information on a grid
    FcatField(Args),
    /// Neural Fisher information of a population code or trained net on a grid
    FcodeField(Args),
    /// Three-category net: training, Fisher matching, eigenvalue suppression
    Train2d(Args),
    /// Embedded two-category continuum: path Fisher, cosine proxy, tuning curves
    Continuum(Args),
    /// Measured coding cost against its large-population asymptote
    MiValidate(Args),
    /// Optimal Fisher allocation under resource constraints
    Allocate(Args),
    /// Coding/decoding and manifold/bias/variance cost decompositions
    Biasvar(Args),
}

#[derive(clap::Args)]
struct Args {
    /// JSON config; omitted fields take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<subcommand>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config and exit
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (&'static str, Args) {
        match self {
            Command::Gauss1d(a) => ("gauss1d", a),
            Command::Pdc2d(a) => ("pdc2d", a),
            Command::FcatField(a) => ("fcat-field", a),
            Command::FcodeField(a) => ("fcode-field", a),
            Command::Train2d(a) => ("train2d", a),
            Command::Continuum(a) => ("continuum", a),
            Command::MiValidate(a) => ("mi-validate", a),
            Command::Allocate(a) => ("allocate", a),
            Command::Biasvar(a) => ("biasvar", a),
        }
    }
}

fn main_inner(name: &str, args: Args) -> Result<(), CliError> {
    let config = args.config.as_deref().map(read_config).transpose()?;
    if args.print_config {
        let v = resolve(name, config.as_ref(), args.seed)?;
        println!("{}", serde_json::to_string_pretty(&v).expect("json value"));
        return Ok(());
    }
    let out = args.out.unwrap_or_else(|| PathBuf::from("out").join(name));
    let req = Request { subcommand: name.into(), config, seed: args.seed, out: out.clone(), threads: args.threads };
    let report = run(&req)?;
    println!("{}", serde_json::to_string_pretty(&report.summary).expect("json value"));
    eprintln!("wrote {} artifacts to {}", report.manifest.artifacts.len() + 1, out.display());
    Ok(())
}

fn main() -> ExitCode {
    let (name, args) = Cli::parse().command.split();
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out").join(name));
    match main_inner(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let rec = e.record();
            eprintln!("{rec}");
            if out.is_dir() {
                let _ = std::fs::write(out.join("error.json"), format!("{rec:#}\n"));
            }
            ExitCode::from(e.exit_code as u8)
        }
    }
}
