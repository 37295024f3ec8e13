use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metricquad::models::{bundled, BUNDLED};
use metricquad::pipeline::{Length, Pipeline, PipelineConfig, PrescriptionSource, Stage};
use metricquad_cli::server::{self, ServiceConfig};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "metricquad",
    version,
    about = "Quad meshes from flat cone metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Last stage to run.
        #[arg(long)]
        stage: Option<Stage>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the run report as JSON on stdout.
        #[arg(long)]
        report: bool,
        /// Absolute target quad edge length.
        #[arg(long, conflicts_with = "h_relative")]
        h: Option<f64>,
        /// Target quad edge length as a fraction of the bounding-box diagonal.
        #[arg(long)]
        h_relative: Option<f64>,
        #[arg(long)]
        tol_snap: Option<f64>,
        #[arg(long)]
        ricci_tol: Option<f64>,
    },
    /// Report the holonomy of the flat metric against the snap tolerance.
    CheckHolonomy {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        tol_snap: Option<f64>,
    },
    /// Serve the session API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long, default_value_t = 64)]
        max_sessions: usize,
    },
    /// Write a bundled model and a config for it.
    Example {
        /// One of the bundled model names.
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(BUNDLED))]
        name: String,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            stage,
            out,
            report,
            h,
            h_relative,
            tol_snap,
            ricci_tol,
        } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(s) = stage {
                cfg.through = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Some(x) = h {
                cfg.params.h = Length::Absolute(x);
            }
            if let Some(x) = h_relative {
                cfg.params.h = Length::Relative(x);
            }
            if let Some(x) = tol_snap {
                cfg.params.tol_snap = x;
            }
            if let Some(x) = ricci_tol {
                cfg.params.ricci_tol = x;
            }
            let mut p = Pipeline::from_config(&cfg)?;
            let res = p.run(cfg.through);
            p.write_artifacts(&cfg.out)?;
            let rep = p.report();
            for s in &rep.stages {
                eprintln!("{:>13}  {:>10.1} ms", s.stage.name(), s.millis);
            }
            if report {
                println!("{}", serde_json::to_string_pretty(&rep)?);
            }
            match res {
                Ok(_) => {
                    eprintln!("artifacts written to {}", cfg.out.display());
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::CheckHolonomy { config, tol_snap } => {
            let mut cfg = PipelineConfig::load(&config)?;
            if let Some(x) = tol_snap {
                cfg.params.tol_snap = x;
            }
            let mut p = Pipeline::from_config(&cfg)?;
            p.run(Stage::Immerse)?;
            let (sig, check) = p.holonomy().expect("immerse stage ran")?;
            println!(
                "{}",
                serde_json::to_string_pretty(&json!({ "signature": sig, "check": check }))?
            );
            Ok(if check.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Serve { bind, max_sessions } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(server::serve(bind, ServiceConfig { max_sessions }))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Example {
            name,
            dir,
            resolution,
        } => {
            let model = bundled(&name, resolution).expect("name checked by clap");
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("mesh.obj"), model.mesh.to_obj(None))?;
            let mut cfg = PipelineConfig::from_json(r#"{"mesh": "mesh.obj"}"#)?;
            cfg.singularities = PrescriptionSource::Inline(model.prescription.iter().collect());
            let path = dir.join("config.json");
            std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n")?;
            eprintln!("wrote {} and mesh.obj", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
