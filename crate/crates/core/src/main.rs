use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use graphnls::io::{
    line_constant_report, parse_graph_file, run_minimize, run_phase_portrait, run_reproduce,
    run_solve, Figure, MinimizeRequest, SolveRequest,
};
use graphnls::kirchhoff::SolveOptions;
use graphnls::variational::MinimizeOptions;

/// Nonlinear ground states and best constants on metric graphs.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the line reference values for an exponent.
    LineConstant {
        #[arg(long, default_value_t = 3.0)]
        p: f64,
    },
    /// Sample phase-plane orbits into a CSV file.
    PhasePortrait {
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Find Kirchhoff solutions on a star-like graph.
    Solve {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_bumps: usize,
        /// Upper end of the vertex-value scan.
        #[arg(long)]
        a_cap: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimise the discretised quotient.
    Minimize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        h: f64,
        /// Truncation length for rays.
        #[arg(long = "L", default_value_t = 40.0)]
        truncation: f64,
        #[arg(long, default_value_t = 8)]
        starts: usize,
        #[arg(long, default_value_t = 20_160_101)]
        seed: u64,
        /// Comma-separated truncation lengths for a convergence study.
        #[arg(long, value_delimiter = ',')]
        study: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regenerate the data behind a reference figure.
    Reproduce {
        #[arg(value_parser = parse_figure)]
        figure: Figure,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_figure(s: &str) -> Result<Figure, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = Figure::ALL.iter().map(|f| f.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn run(cli: Cli) -> graphnls::Result<String> {
    match cli.command {
        Command::LineConstant { p } => line_constant_report(p),
        Command::PhasePortrait { p, out } => run_phase_portrait(p, &out),
        Command::Solve {
            graph,
            max_bumps,
            a_cap,
            out,
        } => {
            let g = parse_graph_file(&graph)?;
            let options = SolveOptions {
                max_bumps,
                a_cap,
                ..SolveOptions::default()
            };
            run_solve(&g, &SolveRequest { options }, &out)
        }
        Command::Minimize {
            graph,
            h,
            truncation,
            starts,
            seed,
            study,
            out,
        } => {
            let g = parse_graph_file(&graph)?;
            let req = MinimizeRequest {
                h,
                truncation: Some(truncation),
                options: MinimizeOptions {
                    starts,
                    seed,
                    ..MinimizeOptions::default()
                },
                study,
            };
            run_minimize(&g, &req, &out)
        }
        Command::Reproduce { figure, out } => {
            let (dir, report) = run_reproduce(figure, &out)?;
            Ok(format!("{report}written to {}\n", dir.display()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("GRAPHNLS_THREADS").ok().and_then(|s| s.parse().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
