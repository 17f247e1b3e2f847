//! Command-line front end: the session server and the batch studies.

use std::fs::File;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use optwin::experiments::consistency::{run_consistency_study, ConsistencyConfig, SweepMode};
use optwin::experiments::delivery::{default_policies, run_delivery_study, write_delivery_outputs};
use optwin::experiments::rotation::{run_rotation_study, RotationStudyConfig, Strategy};
use optwin::experiments::{default_delivery_scenario, write_csv, write_json};
use optwin::force_model::{
    fit_piecewise, read_params_json, read_samples_csv, sample_reference_force, write_params_json,
    BeamProfile,
};
use optwin::session::server::{load_scenarios, Server, ServerConfig, DEFAULT_PORT, PORT_ENV};
use optwin::session::{default_force_params, load_scenario_file, Scenario};
use optwin::stats::spearman;
use optwin::{Error, Result};

#[derive(Parser)]
#[command(name = "optwin", version, about = "Optical microrobot digital twin")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    A,
    B,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Settled,
    Continuous,
}

#[derive(Subcommand)]
enum Cmd {
    /// Serve sessions over TCP (newline-delimited JSON).
    Serve {
        #[arg(long, env = PORT_ENV, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Scenario file or directory of scenario files; defaults to the
        /// bundled delivery scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Advance physics only as client input arrives (no wall clock).
        #[arg(long)]
        headless: bool,
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Fit the piecewise force model to sampled (r, F) pairs.
    Fit {
        /// CSV with columns r_um,force_pN; defaults to the reference beam profile.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady rotation angle versus trap spacing.
    Rotation {
        #[arg(long, value_enum, default_value = "a")]
        strategy: StrategyArg,
        /// Trap spacings, µm; defaults to an eight-point grid.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        dstar: Vec<f64>,
        /// Power ratio for strategy B.
        #[arg(long, default_value_t = 1.5)]
        m: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rendered force versus model along axial and radial sweeps.
    Consistency {
        /// Force parameters JSON; defaults to the fitted reference model.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "settled")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired scripted delivery trials, force-blind versus force-aware.
    Delivery {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

#[derive(Serialize)]
struct RotationSummary {
    strategy: Strategy,
    power_ratio_m: f64,
    spearman: Option<f64>,
    all_converged: bool,
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Serve {
            port,
            host,
            scenario,
            headless,
            log_dir,
        } => {
            let scenarios = match scenario {
                Some(p) => load_scenarios(&p)?,
                None => vec![default_delivery_scenario()],
            };
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::param("host", format!("{e}")))?;
            let server = Server::bind(
                addr,
                ServerConfig {
                    scenarios,
                    headless,
                    log_dir,
                },
            )?;
            eprintln!("listening on {}", server.local_addr()?);
            server.serve()
        }
        Cmd::Fit { samples, out } => {
            let data = match samples {
                Some(p) => read_samples_csv(File::open(&p).map_err(|e| Error::io(&p, e))?)?,
                None => {
                    let prof = BeamProfile::default();
                    let r: Vec<f64> = (0..200)
                        .map(|i| 4.0 * prof.beam_waist_w * i as f64 / 199.0)
                        .collect();
                    sample_reference_force(&prof, &r)?
                }
            };
            let params = fit_piecewise(&data)?;
            match out {
                Some(p) => write_params_json(&p, &params)?,
                None => println!("{}", serde_json::to_string_pretty(&params)?),
            }
            Ok(())
        }
        Cmd::Rotation {
            strategy,
            dstar,
            m,
            out,
        } => {
            let strategy = match strategy {
                StrategyArg::A => Strategy::A,
                StrategyArg::B => Strategy::B,
            };
            let mut cfg = RotationStudyConfig::default_grid(strategy);
            if !dstar.is_empty() {
                cfg.d_star_values = dstar;
            }
            cfg.power_ratio_m = m;
            let rows = run_rotation_study(&cfg)?;
            write_csv(&out, &rows)?;
            let d: Vec<f64> = rows.iter().map(|r| r.d_star).collect();
            let th: Vec<f64> = rows.iter().map(|r| r.theta_deg).collect();
            write_json(
                &summary_path(&out),
                &RotationSummary {
                    strategy,
                    power_ratio_m: m,
                    spearman: spearman(&d, &th),
                    all_converged: rows.iter().all(|r| r.converged),
                },
            )
        }
        Cmd::Consistency { params, mode, out } => {
            let params = match params {
                Some(p) => read_params_json(&p)?,
                None => default_force_params(),
            };
            let mode = match mode {
                ModeArg::Settled => SweepMode::Settled,
                ModeArg::Continuous => SweepMode::Continuous,
            };
            let report = run_consistency_study(&params, &ConsistencyConfig::new(mode))?;
            write_csv(&out, &report.samples)?;
            write_json(&summary_path(&out), &report)
        }
        Cmd::Delivery {
            scenario,
            trials,
            seed,
            out,
        } => {
            let sc: Scenario = match scenario {
                Some(p) => load_scenario_file(&p)?,
                None => default_delivery_scenario(),
            };
            let study = run_delivery_study(&sc, &default_policies(), trials, seed)?;
            write_delivery_outputs(&out, &sc, seed, &study)?;
            for c in &study.summary {
                println!(
                    "{}: {}/{} delivered, contact {:.3} ± {:.3} pN, distance {:.3} ± {:.3} µm",
                    c.condition,
                    c.successes,
                    c.trials,
                    c.contact_force_mean,
                    c.contact_force_sd,
                    c.distance_mean,
                    c.distance_sd
                );
            }
            Ok(())
        }
    }
}
