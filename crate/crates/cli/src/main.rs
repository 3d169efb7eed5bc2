use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mpo_sim::harness::{
    build, churn_experiment, emit_report, read_report, resolve, run_experiment, ExperimentConfig, World,
};
use mpo_sim::overlay::{check_snapshot, OverlaySnapshot};
use mpo_sim::search::Algorithm;
use mpo_sim::topology::{degree_histogram, TopologyKind};

#[derive(Parser)]
#[command(name = "mpo", version, about = "Overlay and baseline-topology search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one topology and write its edge list and degree table.
    Generate(Common),
    /// Run the full experiment and write report.json plus figure CSVs.
    Run(Common),
    /// Run only the churn sweep.
    Churn(Common),
    /// Verify the structure of an overlay snapshot (exit 2 on violations).
    Check {
        /// Overlay snapshot JSON, as written by `generate`.
        snapshot: PathBuf,
    },
    /// Re-emit the figure CSVs from a saved report.json.
    Report {
        report: PathBuf,
        /// Directory for the CSVs; defaults to the report's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Flat TOML experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// mpo, rtpl, supernode or squareroot.
    #[arg(long)]
    topology: Option<TopologyKind>,
    /// Hop budget; also used for the load and churn searches.
    #[arg(long)]
    ttl: Option<u32>,
    /// flood_repeated, flood_unrepeated or random_walk.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Network size.
    #[arg(long)]
    n: Option<usize>,
}

enum Failure {
    /// Bad input: usage, config, unreadable files.
    Usage(String),
    /// Structure check found violations.
    Invariant,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(t) = self.topology {
            cfg.topologies = vec![t];
        }
        if let Some(t) = self.ttl {
            cfg.ttls = vec![t];
            cfg.disturbance_ttl = t;
            cfg.churn_ttl = t;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithms = vec![a];
            cfg.disturbance_algorithm = a;
            cfg.churn_algorithm = a;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn generate(c: &Common) -> Result<(), Failure> {
    let mut cfg = c.config()?;
    let kind = c.topology.unwrap_or(TopologyKind::Mpo);
    cfg.topologies = vec![kind];
    let seed = cfg.seeds[0];
    let res = resolve(&cfg)?;
    let world = World::new(&cfg, seed)?;
    let built = build(kind, &cfg, &res, &world, seed)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Failure::Usage(format!("{}: {e}", cfg.out.display())))?;
    let edges = cfg.out.join(format!("{kind}_edges.txt"));
    write(&edges, &built.graph.to_edge_list())?;
    let degrees = cfg.out.join(format!("{kind}_degrees.csv"));
    let mut w = csv::Writer::from_path(&degrees)?;
    w.write_record(["rank", "node", "degree"])?;
    for (i, e) in degree_histogram(&built.graph).iter().enumerate() {
        w.write_record([(i + 1).to_string(), e.node.to_string(), e.degree.to_string()])?;
    }
    w.flush()?;
    println!("wrote {}", edges.display());
    println!("wrote {}", degrees.display());
    if let Some(ov) = &built.overlay {
        let snap = cfg.out.join("mpo_snapshot.json");
        write(&snap, &OverlaySnapshot::capture(ov).to_json())?;
        println!("wrote {}", snap.display());
    }
    for n in &res.notes {
        println!(
            "{}: {} = {} (max degree {} for reference {})",
            n.topology, n.parameter, n.value, n.realized_max_degree, n.target_max_degree
        );
    }
    Ok(())
}

fn experiment(c: &Common, churn_only: bool) -> Result<(), Failure> {
    let cfg = c.config()?;
    let report = if churn_only {
        churn_experiment(&cfg)?
    } else {
        run_experiment(&cfg)?
    };
    for p in emit_report(&report, &cfg.out, true)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let snap = OverlaySnapshot::from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let rep = check_snapshot(&snap);
    println!(
        "d = {}, max degree {} (bound {}), {} ASs, {} layers, levels per layer {:?}",
        rep.d,
        rep.max_degree,
        rep.d + 4,
        rep.as_count,
        rep.layer_count,
        rep.levels_per_layer
    );
    if rep.is_clean() {
        println!("ok");
        Ok(())
    } else {
        for v in &rep.violations {
            println!("violation: {v}");
        }
        Err(Failure::Invariant)
    }
}

fn report(path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let r = read_report(path)?;
    let dir = out.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")));
    for p in emit_report(&r, dir, false)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => experiment(c, false),
        Command::Churn(c) => experiment(c, true),
        Command::Check { snapshot } => check(snapshot),
        Command::Report { report: r, out } => report(r, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant) => ExitCode::from(2),
    }
}
