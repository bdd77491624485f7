use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hmat_core::geometry::make_cube_mesh;
use hmat_core::parallel::write_load_csv;
use hmat_core::studies::{benchmark, convergence_aca, convergence_h, fit_rate, RunConfig, StudyRow};
use hmat_core::{BlockStructure, BlockTreeConfig, QuadratureConfig};

#[derive(Parser)]
#[command(name = "hmat", version, about = "H-matrix BEM studies on the unit cube")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh utilities.
    Mesh {
        #[command(subcommand)]
        action: MeshCommand,
    },
    /// Worst-case error over a sequence of refinement levels.
    ConvergenceH {
        #[arg(long, value_delimiter = ',', default_values_t = [1u32, 2, 3])]
        levels: Vec<u32>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Worst-case error over increasing ACA ranks at a fixed level.
    ConvergenceAca {
        #[arg(long, default_value_t = 3)]
        level: u32,
        #[arg(long = "ks", value_delimiter = ',', default_values_t = [4usize, 8, 16, 32])]
        ks: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Setup and CG timings for several worker counts.
    Benchmark {
        #[arg(long, default_value_t = 3)]
        level: u32,
        #[arg(long = "workers-list", value_delimiter = ',', default_values_t = [1usize])]
        workers_list: Vec<usize>,
        /// Directory for per-worker load CSVs, one `load_p<p>.csv` per worker count.
        #[arg(long)]
        load_dir: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Print the cluster tree of a cube mesh.
    DumpTree {
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[arg(long, default_value_t = 32)]
        leaf_size: usize,
    },
    /// Print the leaf blocks of a cube mesh.
    DumpBlocks {
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 32)]
        leaf_size: usize,
    },
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Write the cube mesh as plain text.
    Export {
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "cube")]
    geometry: String,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 32)]
    leaf_size: usize,
    #[arg(long, default_value_t = 32)]
    k_max: usize,
    /// Relative ACA stopping tolerance; 0 runs to `k_max`.
    #[arg(long, default_value_t = 0.0)]
    aca_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    cg_tol: f64,
    #[arg(long)]
    cg_max_iters: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = QuadratureConfig::default().far_order)]
    far_order: usize,
    #[arg(long, default_value_t = QuadratureConfig::default().sing_order)]
    sing_order: usize,
    #[arg(long, default_value_t = QuadratureConfig::default().near_threshold)]
    near_threshold: f64,
    #[arg(long, default_value_t = 5)]
    grid_n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
}

impl RunArgs {
    fn config(&self, level: u32) -> RunConfig {
        RunConfig {
            geometry: self.geometry.clone(),
            level,
            eta: self.eta,
            leaf_size: self.leaf_size,
            k_max: self.k_max,
            aca_rel_tol: self.aca_tol,
            cg_tol: self.cg_tol,
            cg_max_iters: self.cg_max_iters,
            workers: self.workers,
            quadrature: QuadratureConfig {
                far_order: self.far_order,
                sing_order: self.sing_order,
                near_threshold: self.near_threshold,
            },
            grid_n: self.grid_n,
            seed: self.seed,
            repeats: self.repeats,
        }
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// CSV destination; stdout when omitted.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Write storage statistics as JSON lines.
    #[arg(long)]
    stats: Option<PathBuf>,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_study(
    rows: &[StudyRow],
    param: &str,
    cfg: &RunConfig,
    extra_header: &str,
    footer: &str,
    out: &OutputArgs,
) -> Result<usize> {
    let mut w = open_output(out.output.as_deref())?;
    write!(w, "{}{}", cfg.metadata_header(), extra_header)?;
    writeln!(w, "{param},error")?;
    let mut failures = 0;
    for row in rows {
        match row {
            Ok(r) => writeln!(w, "{},{:e}", r.param, r.error)?,
            Err((p, e)) => {
                failures += 1;
                writeln!(w, "# {param}={p} failed: {e}")?;
                writeln!(w, "{p},NaN")?;
            }
        }
    }
    write!(w, "{footer}")?;
    w.flush()?;
    if let Some(path) = &out.stats {
        let mut s = open_output(Some(path))?;
        for r in rows.iter().flatten() {
            let mut v = serde_json::to_value(r.storage)?;
            v[param] = r.param.into();
            writeln!(s, "{v}")?;
        }
        s.flush()?;
    }
    Ok(failures)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Mesh { action: MeshCommand::Export { level, output } } => {
            let mesh = make_cube_mesh(level)?;
            let mut w = open_output(output.as_deref())?;
            mesh.write_text(&mut w)?;
            w.flush()?;
            Ok(0)
        }
        Command::ConvergenceH { levels, run, out } => {
            let cfg = run.config(levels.first().copied().unwrap_or(0));
            let rows = convergence_h(&cfg, &levels);
            let points: Vec<(usize, f64)> = rows.iter().flatten().map(|r| (r.param, r.error)).collect();
            let rate = fit_rate(&points);
            let header = format!("# levels={levels:?}\n");
            let rate = rate.map_or_else(|| "unavailable".to_string(), |r| format!("{r:.4}"));
            let failures = write_study(&rows, "N", &cfg, &header, &format!("# fitted_rate={rate}\n"), &out)?;
            eprintln!("fitted rate: {rate}");
            Ok(i32::from(failures > 0))
        }
        Command::ConvergenceAca { level, ks, run, out } => {
            let cfg = run.config(level);
            let rows = convergence_aca(&cfg, &ks);
            let failures = write_study(&rows, "k", &cfg, "", "", &out)?;
            Ok(i32::from(failures > 0))
        }
        Command::Benchmark { level, workers_list, load_dir, run, out } => {
            if workers_list.is_empty() {
                bail!("--workers-list must not be empty");
            }
            let cfg = run.config(level);
            let rows = benchmark(&cfg, &workers_list)?;
            let mut w = open_output(out.output.as_deref())?;
            write!(w, "{}", cfg.metadata_header())?;
            writeln!(w, "N,k,p,setup_seconds,cg_seconds_per_iter,iters")?;
            for r in &rows {
                writeln!(w, "{},{},{},{:.6},{:.6},{}", r.n, r.k, r.p, r.setup_seconds, r.cg_seconds_per_iter, r.iters)?;
            }
            w.flush()?;
            if let Some(dir) = load_dir {
                std::fs::create_dir_all(&dir)?;
                for r in &rows {
                    let path = dir.join(format!("load_p{}.csv", r.p));
                    write_load_csv(&r.loads, BufWriter::new(File::create(&path)?))?;
                }
            }
            if let Some(path) = &out.stats {
                let mut s = open_output(Some(path))?;
                for r in &rows {
                    let mut v = serde_json::to_value(r.storage)?;
                    v["p"] = r.p.into();
                    writeln!(s, "{v}")?;
                }
                s.flush()?;
            }
            let worst = rows.iter().map(|r| r.matvec_rel_diff).fold(0.0, f64::max);
            eprintln!("max matvec deviation across worker counts: {worst:e}");
            Ok(i32::from(worst > 1e-12))
        }
        Command::DumpTree { level, leaf_size } => {
            let mesh = make_cube_mesh(level)?;
            let tree = hmat_core::ClusterTree::build(&mesh.centers, leaf_size)?;
            print!("{}", tree.dump());
            Ok(0)
        }
        Command::DumpBlocks { level, eta, leaf_size } => {
            let mesh = make_cube_mesh(level)?;
            let s = BlockStructure::build(&mesh.centers, &mesh.centers, BlockTreeConfig { eta, leaf_size })?;
            print!("{}", s.tasks.dump());
            Ok(0)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
