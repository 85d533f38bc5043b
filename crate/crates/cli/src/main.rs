use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use etgeom::spectral::{critical_curve, divergence_report, lambda1_radial, parse_radial, RadialModel};
use etgeom_cli::{corpus_table, load_scenario, run_scenario, RunOptions};

#[derive(Parser)]
#[command(name = "etgeom", version, about = "Numerical checks for Einstein-type structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks declared in a scenario file.
    Run {
        file: PathBuf,
        /// Write the JSON report here (`-` for stdout).
        #[arg(long)]
        json: Option<String>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
        /// Comma-separated groups or check names.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Radial spectral quantities; prints JSON.
    #[command(subcommand)]
    Spectral(Spectral),
    /// List the built-in corpus.
    List,
}

#[derive(Subcommand)]
enum Spectral {
    /// Critical curve chi(r) for a volume function v(r).
    Chi {
        #[arg(long)]
        v: String,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
    },
    /// First Dirichlet eigenvalue of -(1/v)(v u')' + q u on a ball.
    Lambda1 {
        /// Boundary-area function v(r); defaults to r^(m-1).
        #[arg(long)]
        v: Option<String>,
        /// Dimension for the flat default of v.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        radius: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
    },
    /// Partial integrals of sqrt|q| - sqrt(chi) up to a finite horizon.
    Divergence {
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        v: String,
        #[arg(long)]
        r0: f64,
        #[arg(long)]
        r_max: f64,
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
}

fn spectral(cmd: Spectral) -> Result<serde_json::Value, String> {
    let e = |e: etgeom::spectral::SpectralError| e.to_string();
    Ok(match cmd {
        Spectral::Chi { v, r } => {
            let v = parse_radial(&v).map_err(e)?;
            let chi = r.iter().map(|&r| critical_curve(&v, r)).collect::<Result<Vec<_>, _>>().map_err(e)?;
            json!({ "r": r, "chi": chi })
        }
        Spectral::Lambda1 { v, dim, q, radius, n } => {
            let q = parse_radial(&q).map_err(e)?;
            let model = match v {
                Some(v) => RadialModel { v: parse_radial(&v).map_err(e)?, q },
                None => RadialModel::flat(dim).with_potential(q),
            };
            let l = lambda1_radial(&model, radius, n).map_err(e)?;
            json!({ "radius": radius, "n": n, "lambda1": l })
        }
        Spectral::Divergence { q, v, r0, r_max, n } => {
            let q = parse_radial(&q).map_err(e)?;
            let v = parse_radial(&v).map_err(e)?;
            serde_json::to_value(divergence_report(&q, &v, r0, r_max, n).map_err(e)?).map_err(|e| e.to_string())?
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            print!("{}", corpus_table());
            ExitCode::SUCCESS
        }
        Command::Spectral(cmd) => match spectral(cmd) {
            Ok(v) => {
                println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            file,
            json,
            points,
            seed,
            tol_scale,
            checks,
        } => {
            let opts = RunOptions {
                points,
                seed,
                tol_scale,
                checks,
            };
            let report = match load_scenario(&file).map_err(Into::into).and_then(|sc| run_scenario(&sc, &opts)) {
                Ok(r) => r,
                Err(err) => {
                    eprintln!("error: {err}");
                    return ExitCode::from(2);
                }
            };
            let text = serde_json::to_string_pretty(&report).expect("serializable");
            match json.as_deref() {
                Some("-") => println!("{text}"),
                Some(path) => {
                    if let Err(err) = std::fs::write(path, format!("{text}\n")) {
                        eprintln!("error: {path}: {err}");
                        return ExitCode::from(2);
                    }
                    print!("{}", report.to_text());
                }
                None => print!("{}", report.to_text()),
            }
            ExitCode::from(report.exit_code() as u8)
        }
    }
}
