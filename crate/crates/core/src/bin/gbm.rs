use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use gbm_core::capabilities::audit::{read_new_lines, AuditKind, AuditRecord};
use gbm_core::hierarchy::{build_ensemble, load_sources, write_ensemble};
use gbm_core::lang::{hash_law, parse_syntax, render};
use gbm_core::runtime::CertAuthority;
use gbm_core::sim::{laws, run_scenario, verify_trace, MisbehaviorScript, ScenarioConfig, Trace};
use gbm_core::transport::{serve_cos, CosConfig};

#[derive(Parser)]
#[command(name = "gbm", version, about = "Law-governed management middleware")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Work with laws and ensembles.
    #[command(subcommand)]
    Law(LawCmd),
    /// The supermarket chain simulation.
    #[command(subcommand)]
    Acme(AcmeCmd),
    /// The controller service.
    #[command(subcommand)]
    Cos(CosCmd),
    /// Read audit trails.
    #[command(subcommand)]
    Audit(AuditCmd),
}

#[derive(Subcommand)]
enum LawCmd {
    /// Parse, validate and check conformance of an ensemble manifest.
    Check { manifest: PathBuf },
    /// Print the hex SHA-256 of a law's canonical text.
    Hash { file: PathBuf },
}

#[derive(Subcommand)]
enum AcmeCmd {
    /// Run the scenario and write its trace.
    Run(RunArgs),
    /// Check a trace against the independent oracle.
    Verify {
        #[arg(long)]
        trace: PathBuf,
        /// Script to check against instead of the one recorded in the trace.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Write the ensemble the scenario runs under as a manifest directory.
    Laws {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Time per-event mediation under the scenario's laws and print a JSON report.
    Bench {
        #[arg(long, default_value_t = 100_000)]
        events: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 500.0)]
    until: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    trace: PathBuf,
}

#[derive(Subcommand)]
enum CosCmd {
    /// Serve frames and the gateway until interrupted.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum AuditCmd {
    /// Print the last records of an audit file, optionally following it.
    Tail {
        #[arg(long)]
        file: PathBuf,
        #[arg(long, default_value_t = 20)]
        lines: usize,
        #[arg(long)]
        follow: bool,
        #[arg(long)]
        kind: Option<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.cmd {
        Cmd::Law(LawCmd::Check { manifest }) => law_check(&manifest),
        Cmd::Law(LawCmd::Hash { file }) => {
            let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            match parse_syntax(&text) {
                Ok(ast) => {
                    println!("{}", hash_law(&ast).to_hex());
                    Ok(ExitCode::SUCCESS)
                }
                Err(d) => {
                    eprint!("{}", render(&[d]));
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Cmd::Acme(AcmeCmd::Run(a)) => acme_run(a),
        Cmd::Acme(AcmeCmd::Verify { trace, script }) => {
            let t = Trace::load(&trace)?;
            let script = match script {
                Some(p) => MisbehaviorScript::load(&p)?,
                None => t.header.script.clone(),
            };
            let v = verify_trace(&t, &script);
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(if v.ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Acme(AcmeCmd::Laws { out, config }) => {
            let cfg = load_scenario(config.as_deref())?;
            let ca = CertAuthority::deterministic(&cfg.ca_label);
            std::fs::create_dir_all(&out)?;
            let manifest = write_ensemble(&out, &laws::ensemble(&cfg.law_params(&ca.public_hex())))?;
            println!("{}", manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Acme(AcmeCmd::Bench { events }) => {
            let report = gbm_core::sim::bench::mediation_latency(events)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Cos(CosCmd::Run { config }) => {
            let cfg = CosConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = serve_cos(&cfg).await?;
                eprintln!("controller service listening on {}", handle.addr);
                if let Some(g) = handle.gateway_addr {
                    eprintln!("gateway listening on http://{g}");
                }
                tokio::signal::ctrl_c().await?;
                handle.shutdown();
                anyhow::Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Audit(AuditCmd::Tail { file, lines, follow, kind }) => audit_tail(&file, lines, follow, kind.as_deref()),
    }
}

fn law_check(manifest: &Path) -> anyhow::Result<ExitCode> {
    let sources = load_sources(manifest)?;
    match build_ensemble(&sources) {
        Ok(tree) => {
            for w in &tree.warnings {
                eprint!("{}", render(std::slice::from_ref(w)));
            }
            for node in tree.nodes() {
                let depth = node.lineage.len().saturating_sub(1);
                println!("{}{} {}", "  ".repeat(depth), node.name, node.hash.to_hex());
            }
            println!("ok: {} laws, {} warnings", tree.len(), tree.warnings.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(diags) => {
            eprint!("{}", render(&diags));
            Ok(ExitCode::FAILURE)
        }
    }
}

fn load_scenario(path: Option<&Path>) -> anyhow::Result<ScenarioConfig> {
    Ok(match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::demo(),
    })
}

fn acme_run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let cfg = load_scenario(a.config.as_deref())?;
    let script = match &a.script {
        Some(p) => MisbehaviorScript::load(p)?,
        None => MisbehaviorScript::default(),
    };
    let trace = run_scenario(&cfg, a.seed, a.until, &script)?;
    trace.save(&a.trace).with_context(|| format!("writing {}", a.trace.display()))?;
    println!("{} records, sha256 {}", trace.records.len(), trace.digest());
    Ok(ExitCode::SUCCESS)
}

fn print_matching(lines: &[String], kind: Option<AuditKind>) {
    for l in lines {
        if let Some(k) = kind {
            match serde_json::from_str::<AuditRecord>(l) {
                Ok(r) if r.kind == k => {}
                _ => continue,
            }
        }
        println!("{l}");
    }
}

fn audit_tail(file: &Path, n: usize, follow: bool, kind: Option<&str>) -> anyhow::Result<ExitCode> {
    let kind = match kind {
        Some(k) => Some(AuditKind::parse(k).ok_or_else(|| anyhow::anyhow!("unknown audit kind {k}"))?),
        None => None,
    };
    let (lines, mut offset) = read_new_lines(file, 0).with_context(|| format!("reading {}", file.display()))?;
    let lines: Vec<String> = match kind {
        Some(k) => lines.into_iter().filter(|l| serde_json::from_str::<AuditRecord>(l).is_ok_and(|r| r.kind == k)).collect(),
        None => lines,
    };
    print_matching(&lines[lines.len().saturating_sub(n)..], None);
    if !follow {
        return Ok(ExitCode::SUCCESS);
    }
    loop {
        std::thread::sleep(Duration::from_millis(200));
        let (new, next) = read_new_lines(file, offset)?;
        offset = next;
        print_matching(&new, kind);
    }
}
