//! `convlab`: run the convergence, contraction, control and irreducibility
//! studies from JSON configs and write CSV / JSON / plot-script outputs with a
//! run manifest.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use convlab::experiments::{self as ex, StudyConfig, SystemChoice};
use convlab::report::{load_config, parse_config, RunManifest};
use convlab::spectral::dimensionless_from_physical;
use convlab::{Error, Result};

#[derive(Parser)]
#[command(name = "convlab", version, about = "Large-Prandtl convection studies")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Study configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; CONVLAB_OUT takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the manifest only.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand, Clone)]
enum Cmd {
    /// Finite-time eps-convergence of the toy model.
    ToyConverge,
    /// Finite-time eps-convergence of the 2D SPDE.
    SpdeConverge,
    /// Distances between stationary clouds.
    Invariant,
    /// Coupled contraction ratios of the limit system.
    Contraction,
    /// Low-mode control of the linearized SPDE.
    Control,
    /// Hitting fractions of a small ball.
    Irreducible,
    /// Exponential moment tails of the toy limit.
    Moments,
    /// Dimensionless numbers from physical parameters.
    Params {
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        g: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        h: f64,
        #[arg(long)]
        t1: f64,
    },
    /// Parse a configuration and print its resolved form.
    ValidateConfig,
    /// Repeat a run from its manifest and compare the CSV outputs.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::ToyConverge => "toy-converge",
            Cmd::SpdeConverge => "spde-converge",
            Cmd::Invariant => "invariant",
            Cmd::Contraction => "contraction",
            Cmd::Control => "control",
            Cmd::Irreducible => "irreducible",
            Cmd::Moments => "moments",
            Cmd::Params { .. } => "params",
            Cmd::ValidateConfig => "validate-config",
            Cmd::Rerun { .. } => "rerun",
        }
    }

    fn from_name(name: &str) -> Option<Cmd> {
        Some(match name {
            "toy-converge" => Cmd::ToyConverge,
            "spde-converge" => Cmd::SpdeConverge,
            "invariant" => Cmd::Invariant,
            "contraction" => Cmd::Contraction,
            "control" => Cmd::Control,
            "irreducible" => Cmd::Irreducible,
            "moments" => Cmd::Moments,
            _ => return None,
        })
    }

    /// Configuration used when `--config` is absent.
    fn builtin(&self) -> Option<&'static str> {
        Some(match self {
            Cmd::ToyConverge => include_str!("../examples/toy.json"),
            Cmd::SpdeConverge | Cmd::Control | Cmd::Irreducible => {
                include_str!("../examples/spde.json")
            }
            Cmd::Invariant => include_str!("../examples/invariant.json"),
            Cmd::Contraction => include_str!("../examples/contraction.json"),
            Cmd::Moments => include_str!("../examples/moments.json"),
            _ => return None,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0
            || rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .is_err()
        {
            eprintln!("error: cannot start {n} worker threads");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn out_dir(cli: &Cli, cfg: &StudyConfig) -> PathBuf {
    if let Some(env) = std::env::var_os("CONVLAB_OUT").filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    cli.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.cmd {
        Cmd::Params {
            nu,
            kappa,
            g,
            alpha,
            gamma,
            h,
            t1,
        } => {
            let (pr, ra, rat) =
                dimensionless_from_physical(*nu, *kappa, *g, *alpha, *gamma, *h, *t1)?;
            println!(
                "{}",
                serde_json::json!({ "Pr": pr, "eps": 1.0 / pr, "Ra": ra, "Ra_tilde": rat })
            );
            Ok(0)
        }
        Cmd::ValidateConfig => {
            let path = cli
                .config
                .as_ref()
                .ok_or_else(|| Error::Config("validate-config needs --config <file>".into()))?;
            let cfg = load_config(path)?;
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(0)
        }
        Cmd::Rerun { manifest } => rerun(cli, manifest),
        cmd => {
            let (mut cfg, input) = match &cli.config {
                Some(p) => {
                    let bytes = std::fs::read(p)
                        .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                    (load_config(p)?, bytes)
                }
                None => {
                    let text = cmd.builtin().unwrap_or_default();
                    (parse_config(text)?, text.as_bytes().to_vec())
                }
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = out_dir(cli, &cfg);
            let path = execute(cmd, &cfg, Some(&input), &dir, cli.dry_run)?;
            println!("manifest {}", path.display());
            Ok(0)
        }
    }
}

fn rerun(cli: &Cli, manifest: &Path) -> Result<u8> {
    let old = RunManifest::read(manifest)?;
    let cmd = Cmd::from_name(&old.command).ok_or_else(|| {
        Error::Config(format!(
            "manifest command {:?} cannot be rerun",
            old.command
        ))
    })?;
    old.config.validate()?;
    let dir = out_dir(cli, &old.config);
    let new_path = execute(&cmd, &old.config, None, &dir, old.dry_run)?;
    let new = RunManifest::read(&new_path)?;
    let mut same = true;
    for o in old.outputs.iter().filter(|o| o.path.ends_with(".csv")) {
        let ok = new
            .outputs
            .iter()
            .any(|n| n.path == o.path && n.sha256 == o.sha256);
        println!("{} {}", if ok { "identical" } else { "DIFFERS" }, o.path);
        same &= ok;
    }
    Ok(if same { 0 } else { 1 })
}

fn stem(cmd: &Cmd) -> String {
    cmd.name().replace('-', "_")
}

fn execute(
    cmd: &Cmd,
    cfg: &StudyConfig,
    input: Option<&[u8]>,
    dir: &Path,
    dry_run: bool,
) -> Result<PathBuf> {
    let mut m = RunManifest::begin(cmd.name(), cfg, input)?;
    m.dry_run = dry_run;
    m.seeds.push(ex::SeedEntry {
        purpose: "configuration seed".into(),
        root_seed: cfg.seed,
        stream_id: 0,
    });
    let stem = stem(cmd);
    if !dry_run {
        match cmd {
            Cmd::ToyConverge | Cmd::SpdeConverge => {
                let want = if matches!(cmd, Cmd::ToyConverge) {
                    SystemChoice::Toy
                } else {
                    SystemChoice::Spde
                };
                cfg.require(want)?;
                let r = ex::run_finite_time_study(cfg)?;
                for (metric, fit) in &r.fits {
                    if let Some(f) = fit {
                        println!(
                            "{metric}: q = {:.4} +- {:.4}, C = {:.4e}",
                            f.q, f.q_halfwidth3s, f.c
                        );
                    } else {
                        println!("{metric}: censored");
                    }
                }
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Invariant => {
                let r = ex::run_invariant_study(cfg)?;
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Contraction => {
                let pairs = ex::random_pairs(cfg)?;
                let r = ex::run_contraction_study(cfg, &pairs, &cfg.contraction.t_grid)?;
                let certified = r.pairs.iter().filter(|p| p.certificate_t.is_some()).count();
                println!("{certified} of {} pairs certified below 1", r.pairs.len());
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Control => {
                let c = &cfg.control;
                let r = ex::run_control_study(cfg, &c.lambda_grid, &c.n_proj_grid)?;
                for cell in &r.cells {
                    println!(
                        "n_proj {} lambda {:.3}: rate {:.3} +- {:.3}, decayed {:.3}, cost {:.4e}",
                        cell.n_proj,
                        cell.lambda,
                        cell.rate,
                        cell.rate_halfwidth3s,
                        cell.fraction_decayed,
                        cell.cost
                    );
                }
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Irreducible => {
                let i = &cfg.irreducibility;
                let r = ex::run_irreducibility_study(cfg, i.m, i.delta, i.t, i.n_paths)?;
                println!(
                    "undamped {}/{}, damped {}/{} (N = {}, lambda = {:.3})",
                    r.undamped.hits,
                    r.undamped.n,
                    r.damped.hits,
                    r.damped.n,
                    r.n_proj,
                    r.lambda_damp
                );
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Moments => {
                let r = ex::run_moment_study(cfg)?;
                println!("all tails within bound: {}", r.all_within());
                m.seeds.extend(r.seeds.iter().cloned());
                m.write_study(dir, &stem, &r.table(), &r)?;
            }
            Cmd::Params { .. } | Cmd::ValidateConfig | Cmd::Rerun { .. } => {
                unreachable!("handled by run")
            }
        }
    }
    m.finish(dir, &format!("{stem}_manifest.json"))
}
