use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Parser, Subcommand};
use mathrev::bench::{load_dataset, run_dataset, write_dataset, BenchOptions, GridSpec};
use mathrev::isa::{assemble, disassemble, encode};
use mathrev::svc::{AnalyzeOptions, Session};
use mathrev_cli::load_image;

#[derive(Parser)]
#[command(name = "mathrev", version, about = "Recover math equations from float ISA images")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a source file into an image file.
    Asm {
        src: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print an image as assembly.
    Disasm { image: PathBuf },
    /// Print the callgraph of an image.
    Callgraph {
        image: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Recover the equation of one function, analyzing its callees first.
    Analyze {
        image: PathBuf,
        function: String,
        /// Expand calls to analyzed functions into their equations.
        #[arg(long)]
        inline: bool,
        /// Show constants as their values.
        #[arg(long)]
        subst_consts: bool,
        /// Omit outputs flagged as register spills.
        #[arg(long)]
        hide_spills: bool,
        /// Fail instead of analyzing unanalyzed callees.
        #[arg(long)]
        strict: bool,
        /// Do not report immediate operands as constants.
        #[arg(long)]
        no_immediates: bool,
        #[arg(long)]
        json: bool,
    },
    /// Generate benchmark datasets.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Score recovery on a dataset.
    Bench {
        #[command(subcommand)]
        cmd: BenchCmd,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate and compile models over a grid given as JSON.
    Gen {
        grid: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Recover and score a generated dataset. Writes `<output>.json`,
    /// `<output>.txt` and `<output>_hist.csv`.
    Run {
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Parallel workers; stage timings are reported only with 1.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Do not report immediate operands as constants.
        #[arg(long)]
        no_immediates: bool,
    },
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Asm { src, output } => {
            let text = std::fs::read_to_string(&src).with_context(|| src.display().to_string())?;
            let img = assemble(&text)?;
            std::fs::write(&output, encode(&img)).with_context(|| output.display().to_string())?;
        }
        Cmd::Disasm { image } => print!("{}", disassemble(&load_image(&image)?)),
        Cmd::Callgraph { image, json } => {
            let s = Session::new("cli", load_image(&image)?)?;
            let g = s.callgraph();
            if json {
                println!("{}", serde_json::to_string_pretty(g)?);
            } else {
                for n in &g.nodes {
                    let tag = if n.intrinsic { " (intrinsic)" } else { "" };
                    let callees: Vec<&str> = g.callees(&n.name).collect();
                    println!("{}{tag} -> [{}]", n.name, callees.join(", "));
                }
            }
        }
        Cmd::Analyze { image, function, inline, subst_consts, hide_spills, strict, no_immediates, json } => {
            let mut s = Session::new("cli", load_image(&image)?)?;
            let opts = AnalyzeOptions {
                inline,
                substitute_constants: subst_consts,
                hide_spills,
                strict,
                detect_immediates: !no_immediates,
            };
            let v = s.analyze(&function, opts)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                for r in &v.metadata {
                    println!("{:<9} {:<5} {:<10} {:<12} {}", r.role, r.name, r.kind, r.location, r.note);
                }
                println!();
                for o in &v.outputs {
                    let flag = if o.suspected_spill { "  (spill?)" } else { "" };
                    println!("{} = {}{flag}", o.name, o.pretty);
                }
            }
        }
        Cmd::Dataset { cmd: DatasetCmd::Gen { grid, seed, output } } => {
            let text = std::fs::read_to_string(&grid).with_context(|| grid.display().to_string())?;
            let spec: GridSpec = serde_json::from_str(&text).context("grid file")?;
            let m = write_dataset(&output, &spec, seed)?;
            println!("{} models written to {}", m.records.len(), output.display());
        }
        Cmd::Bench { cmd: BenchCmd::Run { dataset, output, workers, no_immediates } } => {
            let data = load_dataset(&dataset)?;
            let opts = BenchOptions {
                const_mode: data.manifest.grid.const_mode,
                conventions: data.manifest.grid.conventions.clone(),
                detect_immediates: !no_immediates,
                workers,
                ..Default::default()
            };
            let report = run_dataset(&data, &opts);
            let text = report.render_text();
            std::fs::write(with_suffix(&output, ".json"), serde_json::to_vec_pretty(&report)?)?;
            std::fs::write(with_suffix(&output, ".txt"), &text)?;
            std::fs::write(with_suffix(&output, "_hist.csv"), report.histogram_csv())?;
            print!("{text}");
        }
        Cmd::Serve { port } => {
            tokio::runtime::Runtime::new()?.block_on(mathrev_cli::serve(port))?;
        }
    }
    Ok(())
}
