//! `tosca`: parse, print, synthesize, compose, simulate and verify.
//!
//! Exit codes: 0 success, 1 bad input, 2 a property fails, 3 a search
//! bound was exceeded.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tosca::commitment::{print_commitments, CommitmentSpec};
use tosca::enactment::Delivery;
use tosca::protocol::{print_protocol, Protocol, Registry};
use tosca::sim::{
    load_commitments, load_protocols, prepare, simulate, Policy, Scenario, SimulationReport,
};
use tosca::synthesis::{compose_operationalization, synthesize_alignment_protocol, SynthesisMode};
use tosca::verify::{
    check_alignment_reachability, check_embedding, check_safety_liveness, check_theorem1, Bound,
    Outcome, Subject, VerificationReport,
};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "tosca",
    version,
    about = "Commitment alignment over information protocols"
)]
struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that protocol (.bspl) and commitment (.cupid) files parse.
    Parse { files: Vec<PathBuf> },
    /// Print files in canonical form.
    Print { files: Vec<PathBuf> },
    /// Synthesize one alignment protocol per commitment.
    Synthesize(SynthArgs),
    /// Synthesize alignment protocols and compose them with the protocol.
    Compose {
        #[command(flatten)]
        synth: SynthArgs,
        /// Name of the composite protocol.
        #[arg(long)]
        name: Option<String>,
    },
    /// Run a scenario file.
    Simulate(SimArgs),
    /// Check properties by bounded enumeration.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Protocol and commitment files.
    files: Vec<PathBuf>,
    #[arg(long, default_value = "complete")]
    mode: SynthesisMode,
    /// Protocol to align; defaults to the first one read.
    #[arg(long)]
    protocol: Option<String>,
    /// Write each protocol to DIR/NAME.bspl instead of stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    scenario: PathBuf,
    /// Replace the seed of a random or aligner policy.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    delivery: Option<Delivery>,
    /// Write the JSON-lines trace here.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Timing {
    Punctual,
    Free,
    Both,
}

#[derive(Args)]
struct VerifyArgs {
    /// Protocol and commitment files.
    files: Vec<PathBuf>,
    #[arg(long)]
    protocol: Option<String>,
    #[arg(long)]
    safety: bool,
    #[arg(long)]
    liveness: bool,
    /// Compare safety and liveness with the synthesized composition.
    #[arg(long)]
    theorem1: bool,
    /// Alignment reachability of the protocol for every commitment.
    #[arg(long)]
    theorem2: bool,
    /// Replay complete enactments in the synthesized composition.
    #[arg(long)]
    embedding: bool,
    #[arg(long, default_value = "complete")]
    mode: SynthesisMode,
    /// Number of key values.
    #[arg(long, default_value_t = 1)]
    bound_keys: usize,
    #[arg(long, default_value = "any")]
    delivery: Delivery,
    #[arg(long)]
    max_states: Option<usize>,
    /// Timing assumptions for alignment reachability.
    #[arg(long, value_enum, default_value = "both")]
    timing: Timing,
}

fn init_tracing() {
    let filter = EnvFilter::try_from_env("TOSCA_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn is_commitment_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "cupid")
}

struct Inputs {
    protocols: Vec<Protocol>,
    commitments: Vec<CommitmentSpec>,
}

impl Inputs {
    fn load(files: &[PathBuf]) -> Result<Self> {
        let (cs, ps): (Vec<PathBuf>, Vec<PathBuf>) =
            files.iter().cloned().partition(|p| is_commitment_file(p));
        Ok(Inputs {
            protocols: load_protocols(&ps)?,
            commitments: load_commitments(&cs)?,
        })
    }

    fn registry(&self) -> Registry {
        self.protocols.iter().cloned().collect()
    }

    fn select(&self, name: Option<&str>) -> Result<Protocol> {
        match name {
            Some(n) => self
                .protocols
                .iter()
                .find(|p| p.name == n)
                .cloned()
                .with_context(|| format!("no protocol named `{n}`")),
            None => self
                .protocols
                .first()
                .cloned()
                .context("no protocol file given"),
        }
    }

    fn aligners(&self, input: &Protocol, mode: SynthesisMode) -> Result<Vec<Protocol>> {
        let registry = self.registry();
        let mut out = Vec::new();
        for c in &self.commitments {
            let al = synthesize_alignment_protocol(c, input, &registry, mode)?;
            if al.references.is_empty() {
                eprintln!("warning: {}: no forwarding required", c.name);
            }
            out.push(al);
        }
        Ok(out)
    }
}

fn emit_protocols(ps: &[Protocol], out: Option<&Path>) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    for p in ps {
        let text = print_protocol(p);
        match out {
            Some(dir) => {
                let path = dir.join(format!("{}.bspl", p.name));
                std::fs::write(&path, format!("{text}\n"))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            None => println!("{text}\n"),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Parse { files } => {
            let inputs = Inputs::load(&files)?;
            if cli.json {
                let value = serde_json::json!({
                    "protocols": inputs.protocols,
                    "commitments": inputs.commitments,
                });
                println!("{}", serde_json::to_string_pretty(&value)?);
            } else {
                println!(
                    "ok: {} protocols, {} commitments",
                    inputs.protocols.len(),
                    inputs.commitments.len()
                );
            }
        }
        Command::Print { files } => {
            let inputs = Inputs::load(&files)?;
            for p in &inputs.protocols {
                println!("{}\n", print_protocol(p));
            }
            if !inputs.commitments.is_empty() {
                print!("{}", print_commitments(&inputs.commitments));
            }
        }
        Command::Synthesize(args) => {
            let inputs = Inputs::load(&args.files)?;
            let input = inputs.select(args.protocol.as_deref())?;
            let aligners: Vec<Protocol> = inputs
                .aligners(&input, args.mode)?
                .into_iter()
                .filter(|a| !a.references.is_empty())
                .collect();
            emit_protocols(&aligners, args.out.as_deref())?;
        }
        Command::Compose { synth, name } => {
            let inputs = Inputs::load(&synth.files)?;
            let input = inputs.select(synth.protocol.as_deref())?;
            let aligners = inputs.aligners(&input, synth.mode)?;
            let composite = compose_operationalization(&input, &aligners, name.as_deref())?;
            let mut all: Vec<Protocol> = aligners
                .into_iter()
                .filter(|a| !a.references.is_empty())
                .collect();
            all.push(composite);
            emit_protocols(&all, synth.out.as_deref())?;
        }
        Command::Simulate(args) => return simulate_cmd(args, cli.json),
        Command::Verify(args) => return verify_cmd(args, cli.json),
    }
    Ok(ExitCode::SUCCESS)
}

fn simulate_cmd(args: SimArgs, json: bool) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let mut scenario: Scenario = serde_json::from_str(&text).context("parsing scenario")?;
    if let Some(seed) = args.seed {
        match &mut scenario.policy {
            Policy::Random { seed: s } | Policy::Aligner { seed: s } => *s = seed,
            Policy::Scripted { .. } => bail!("--seed does not apply to a scripted scenario"),
        }
    }
    if args.horizon.is_some() {
        scenario.horizon = args.horizon;
    }
    if let Some(d) = args.delivery {
        scenario.delivery = d;
    }
    let base = args.scenario.parent().unwrap_or(Path::new("."));
    let setup = prepare(&scenario, base)?;
    let report = simulate(&setup, &scenario)?;
    if let Some(path) = &args.trace {
        std::fs::write(path, report.trace_jsonl())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", table(&report));
    }
    Ok(ExitCode::SUCCESS)
}

fn names(state: &tosca::semantics::LifecycleState) -> String {
    let kinds: Vec<String> = state
        .iter()
        .filter(|(_, keys)| !keys.is_empty())
        .map(|(kind, keys)| {
            format!(
                "{kind}{}",
                if keys.len() > 1 {
                    format!("x{}", keys.len())
                } else {
                    String::new()
                }
            )
        })
        .collect();
    if kinds.is_empty() {
        "-".to_string()
    } else {
        kinds.join(",")
    }
}

fn table(r: &SimulationReport) -> String {
    let mut out = format!("protocol {}\n", r.protocol);
    for t in &r.trace {
        out.push_str(&format!(
            "  {:>4} {} {:?} {}\n",
            t.tick, t.role, t.dir, t.schema
        ));
    }
    out.push_str("tick  label  commitment  debtor  creditor  verdict\n");
    for row in &r.rows {
        for c in &row.commitments {
            out.push_str(&format!(
                "{:>4}  {:>5}  {}  {}  {}  {}\n",
                row.tick,
                row.label.as_deref().unwrap_or(""),
                c.commitment,
                names(&c.debtor),
                names(&c.creditor),
                if c.aligned() { "aligned" } else { "MISALIGNED" },
            ));
        }
    }
    out
}

fn verify_cmd(args: VerifyArgs, json: bool) -> Result<ExitCode> {
    let inputs = Inputs::load(&args.files)?;
    let input = inputs.select(args.protocol.as_deref())?;
    let registry = inputs.registry();
    let mut bound = Bound {
        key_values: (1..=args.bound_keys.max(1))
            .map(|i| i.to_string())
            .collect(),
        delivery: args.delivery,
        ..Bound::default()
    };
    if let Some(m) = args.max_states {
        bound.max_states = m;
    }
    let subject = Subject::new(&input, &registry)?;
    let composed = if args.theorem1 || args.embedding {
        let aligners = inputs.aligners(&input, args.mode)?;
        let composite = compose_operationalization(&input, &aligners, None)?;
        let mut reg = registry.clone();
        for a in aligners {
            reg.insert(a);
        }
        Some(Subject::new(&composite, &reg)?)
    } else {
        None
    };

    // Reports that decide the exit code, and informational ones.
    let mut decisive: Vec<VerificationReport> = Vec::new();
    let mut extra: Vec<VerificationReport> = Vec::new();
    if args.safety || args.liveness {
        let (s, l) = check_safety_liveness(&subject, &bound);
        if args.safety {
            decisive.push(s);
        }
        if args.liveness {
            decisive.push(l);
        }
    }
    if let Some(composed) = &composed {
        if args.theorem1 {
            let t = check_theorem1(&subject, composed, &bound);
            if !json {
                println!(
                    "theorem1: safety preserved {} liveness preserved {}",
                    t.safety.preserved, t.liveness.preserved
                );
            }
            for p in [t.safety, t.liveness] {
                let mut summary = p.composed.clone();
                summary.detail = format!("input {:?}; {}", p.input.outcome, summary.detail);
                if !p.preserved {
                    summary.outcome = Outcome::Fails;
                } else if p.conclusive() {
                    summary.outcome = Outcome::Holds;
                }
                extra.push(p.input);
                decisive.push(summary);
            }
        }
        if args.embedding {
            decisive.push(check_embedding(&subject, composed, &bound));
        }
    }
    if args.theorem2 {
        if inputs.commitments.is_empty() {
            bail!("--theorem2 needs at least one commitment file");
        }
        if matches!(args.timing, Timing::Punctual | Timing::Both) {
            decisive.extend(check_alignment_reachability(
                &subject,
                &inputs.commitments,
                &bound,
            )?);
        }
        if matches!(args.timing, Timing::Free | Timing::Both) {
            let free = Bound {
                punctual: false,
                ..bound.clone()
            };
            let reports = check_alignment_reachability(&subject, &inputs.commitments, &free)?;
            if args.timing == Timing::Free {
                decisive.extend(reports);
            } else {
                extra.extend(reports);
            }
        }
    }
    if decisive.is_empty() {
        bail!(
            "nothing to verify: pass --safety, --liveness, --theorem1, --theorem2 or --embedding"
        );
    }

    if json {
        let value = serde_json::json!({ "reports": decisive, "informational": extra });
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        for r in &decisive {
            print_report(r, "");
        }
        for r in &extra {
            print_report(r, "(informational) ");
        }
    }
    let code = if decisive.iter().any(|r| r.outcome == Outcome::Fails) {
        2
    } else if decisive.iter().any(|r| r.outcome == Outcome::BoundExceeded) {
        3
    } else {
        0
    };
    Ok(ExitCode::from(code))
}

fn print_report(r: &VerificationReport, prefix: &str) {
    let timing = match r.punctual {
        Some(true) => " [punctual]",
        Some(false) => " [free timing]",
        None => "",
    };
    println!(
        "{prefix}{:?} of {}: {:?}{timing} ({} states) {}",
        r.property, r.subject, r.outcome, r.states_explored, r.detail
    );
    if let Some(w) = &r.witness {
        println!("  witness: {}", w.description);
        for t in &w.trace {
            println!(
                "    {:>6} {} {:?} {} {:?}",
                t.tick, t.role, t.dir, t.schema, t.bindings
            );
        }
        if !w.lapses.is_empty() {
            println!("    time passed to {:?}", w.lapses);
        }
        for t in &w.extension {
            println!(
                "  + {:>6} {} {:?} {} {:?}",
                t.tick, t.role, t.dir, t.schema, t.bindings
            );
        }
    }
}

fn main() -> ExitCode {
    init_tracing();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
