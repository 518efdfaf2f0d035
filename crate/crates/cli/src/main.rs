use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use twistor_cli::run::{self, RunOptions};
use twistor_cli::scene::{parse_branch, parse_size, SceneConfig};
use twistor_cli::verify;

#[derive(Parser)]
#[command(name = "twistor", version, about = "Reflect wavefronts off analytic mirrors via oriented-line coordinates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the reflected congruence of a scene as CSV.
    Reflect(SceneArgs),
    /// Reconstruct reflected wavefronts and export one point cloud per offset.
    Wavefront(SceneArgs),
    /// Run the numerical checks, for one scene or `all`.
    Verify {
        /// `all` for the full suite.
        target: Option<String>,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// List the built-in surfaces, or write example scenes with --out.
    Gallery {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Output directory, overriding the scene.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution as NxM.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated wavefront offsets.
    #[arg(long, allow_hyphen_values = true)]
    offsets: Option<String>,
    /// Orientation of exported lines: + outgoing, - reversed.
    #[arg(long, allow_hyphen_values = true)]
    branch: Option<String>,
    /// Fail on any node error other than a miss or a masked hit.
    #[arg(long)]
    strict: bool,
}

impl SceneArgs {
    fn load(&self) -> anyhow::Result<SceneConfig> {
        let Some(path) = &self.scene else { bail!("--scene is required") };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = twistor_cli::parse_scene(&text).with_context(|| format!("in {}", path.display()))?;
        if let Some(out) = &self.out {
            cfg.output.path = out.clone();
        }
        if let Some(g) = &self.grid {
            let size = parse_size(g).filter(|&(n, m)| n >= 2 && m >= 2).with_context(|| format!("--grid '{g}': expected NxM"))?;
            cfg.grid.size = size;
        }
        if let Some(o) = &self.offsets {
            cfg.output.offsets = o
                .split(',')
                .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<_>>>()
                .with_context(|| format!("--offsets '{o}': expected numbers"))?;
        }
        if let Some(b) = &self.branch {
            cfg.output.branch = parse_branch(b).with_context(|| format!("--branch '{b}': expected + or -"))?;
        }
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions { strict: self.strict }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("TWISTOR_THREADS") {
        let n: usize = v.trim().parse().with_context(|| format!("TWISTOR_THREADS='{v}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn print_report<'a>(checks: impl Iterator<Item = &'a verify::Check>) -> bool {
    let mut ok = true;
    for c in checks {
        println!("{c}");
        ok &= c.pass;
    }
    ok
}

fn real_main() -> anyhow::Result<bool> {
    let cli = Cli::parse();
    configure_threads()?;
    match cli.command {
        Command::Reflect(args) => {
            for p in run::run_reflect(&args.load()?, args.options())? {
                println!("{}", p.display());
            }
        }
        Command::Wavefront(args) => {
            for p in run::run_wavefront(&args.load()?, args.options())? {
                println!("{}", p.display());
            }
        }
        Command::Verify { target, scene } => {
            return Ok(match target.as_deref() {
                Some("all") => print_report(verify::full_suite(verify::SuiteSizes::default()).checks()),
                Some(other) => bail!("unknown verify target '{other}'; use 'all' or --scene"),
                None => print_report(verify::scene_checks(&scene.load()?).iter()),
            });
        }
        Command::Gallery { out: Some(dir) } => {
            for p in run::write_gallery(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Gallery { out: None } => {
            println!("plane   params: [] or [height]             z = height, normal up");
            println!("sphere  params: [], [radius], [x, y, z, radius]");
            println!("torus   params: [], [a, b] with a > b > 0  mask = 0.01 by default");
            println!();
            println!("example scenes (write them with --out DIR):");
            for (name, _) in run::gallery_scenes() {
                println!("  {name}");
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
