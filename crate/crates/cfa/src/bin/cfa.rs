//! Command-line front end over the library: static analysis, enumeration,
//! profiling, attested runs, the TCP verifier/prover pair, and the attack
//! scenarios.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfa::attacklab;
use cfa::cfg::{enumerate_measurements, enumerate_region, AnalyzedProgram, EnumBounds};
use cfa::isa::{parse_asm, Fault, FaultInjection};
use cfa::prover::run_attested;
use cfa::verifier::{profile_db, Challenge, CountPredicate, Policy, REGION_END_HALT};
use cfa::wire;

#[derive(Parser)]
#[command(name = "cfa", about = "Control-flow attestation for a toy ISA", version)]
struct Cli {
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Clone)]
struct ProgramArg {
    /// Path to an assembly file, or `corpus:<name>` for a bundled program
    /// (pump, branch, while, breakloop, twocalls, recursion, loopcall).
    program: String,
}

impl ProgramArg {
    fn load(&self) -> Result<(String, AnalyzedProgram), String> {
        let (name, source) = match self.program.strip_prefix("corpus:") {
            Some(name) => {
                let src = attacklab::corpus_source(name)
                    .ok_or_else(|| format!("unknown corpus program {name:?}"))?;
                (name.to_string(), src.to_string())
            }
            None => {
                let path = PathBuf::from(&self.program);
                let src = std::fs::read_to_string(&path).map_err(|e| format!("{path:?}: {e}"))?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "program".into());
                (name, src)
            }
        };
        let p = parse_asm(&source, &name).map_err(|e| e.to_string())?;
        let a = AnalyzedProgram::analyze(p).map_err(|e| e.to_string())?;
        Ok((name, a))
    }
}

#[derive(Args, Clone)]
struct RunOpts {
    /// Comma-separated input words for the program's IN instructions.
    #[arg(long, default_value = "")]
    input: String,
    /// Return hijack fault: `ret_pc:occurrence:target`.
    #[arg(long)]
    hijack: Option<String>,
    /// Data write fault: `pc:addr:value`.
    #[arg(long)]
    write: Option<String>,
}

impl RunOpts {
    fn input(&self) -> Result<Vec<i32>, String> {
        parse_list(&self.input)
    }

    fn fault(&self) -> Result<Option<FaultInjection>, String> {
        let mut faults = Vec::new();
        if let Some(s) = &self.hijack {
            let v: Vec<u32> = parse_list(s.replace(':', ",").as_str())?
                .into_iter()
                .map(|x| x as u32)
                .collect();
            let [ret_pc, occurrence, target] = v[..] else {
                return Err("--hijack wants ret_pc:occurrence:target".into());
            };
            faults.push(Fault::HijackReturn {
                ret_pc,
                occurrence,
                target,
            });
        }
        if let Some(s) = &self.write {
            let v: Vec<i32> = parse_list(s.replace(':', ",").as_str())?;
            let [pc, addr, value] = v[..] else {
                return Err("--write wants pc:addr:value".into());
            };
            faults.push(Fault::WriteData {
                pc: pc as u32,
                addr: addr as u32,
                value,
            });
        }
        Ok((!faults.is_empty()).then_some(FaultInjection { faults }))
    }
}

#[derive(Args, Clone)]
struct ChallengeOpts {
    /// Attested region as `begin:end`; default is the whole program.
    #[arg(long)]
    region: Option<String>,
    /// Challenge IV as 64 hex digits; default is the zero IV.
    #[arg(long)]
    iv: Option<String>,
}

impl ChallengeOpts {
    fn region(&self) -> Result<(u32, u32), String> {
        match &self.region {
            None => Ok((0, REGION_END_HALT)),
            Some(s) => {
                let v: Vec<i32> = parse_list(s.replace(':', ",").as_str())?;
                let [b, e] = v[..] else {
                    return Err("--region wants begin:end".into());
                };
                Ok((b as u32, e as u32))
            }
        }
    }

    fn iv(&self) -> Result<Option<[u8; 32]>, String> {
        match &self.iv {
            None => Ok(None),
            Some(s) => {
                let bytes = hex::decode(s).map_err(|e| e.to_string())?;
                bytes
                    .try_into()
                    .map(Some)
                    .map_err(|_| "--iv wants 64 hex digits".into())
            }
        }
    }

    fn challenge(&self, digest: [u8; 32]) -> Result<Challenge, String> {
        let (begin, end) = self.region()?;
        let mut c = Challenge::fresh(digest).with_region(begin, end);
        if let Some(iv) = self.iv()? {
            c = c.with_iv(iv);
        }
        Ok(c)
    }
}

#[derive(Args, Clone)]
struct PolicyOpts {
    /// Pin a loop counter: `header=count` (exact) or `header=min..max`.
    #[arg(long = "expect")]
    expect: Vec<String>,
}

impl PolicyOpts {
    fn policy(&self) -> Result<Policy, String> {
        let mut policy = Policy::default();
        for pin in &self.expect {
            let (header, counts) = pin
                .split_once('=')
                .ok_or_else(|| format!("bad --expect {pin:?}, want header=count"))?;
            let header: u32 = header.parse().map_err(|_| format!("bad header {header:?}"))?;
            let pred = match counts.split_once("..") {
                Some((min, max)) => CountPredicate::Range {
                    min: min.parse().map_err(|_| format!("bad min {min:?}"))?,
                    max: max.parse().map_err(|_| format!("bad max {max:?}"))?,
                },
                None => CountPredicate::Exact(
                    counts.parse().map_err(|_| format!("bad count {counts:?}"))?,
                ),
            };
            policy.loops.insert(header, pred);
        }
        Ok(policy)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and statically analyze a program: CFG, loops, call pairing.
    Analyze(ProgramArg),
    /// Enumerate the legal measurement database.
    Enumerate {
        #[command(flatten)]
        program: ProgramArg,
        #[command(flatten)]
        challenge: ChallengeOpts,
        #[arg(long, default_value_t = EnumBounds::default().max_paths)]
        max_paths: usize,
    },
    /// Build a measurement database by running the program over inputs.
    Profile {
        #[command(flatten)]
        program: ProgramArg,
        /// Comma-separated input words; repeat for several runs.
        #[arg(long = "input")]
        inputs: Vec<String>,
    },
    /// Run the program under measurement and print the attestation report.
    Run {
        #[command(flatten)]
        program: ProgramArg,
        #[command(flatten)]
        run: RunOpts,
        #[command(flatten)]
        challenge: ChallengeOpts,
    },
    /// Verifier: listen for provers, challenge each, print verdicts.
    Serve {
        #[command(flatten)]
        program: ProgramArg,
        #[command(flatten)]
        challenge: ChallengeOpts,
        #[command(flatten)]
        policy: PolicyOpts,
        #[arg(long, default_value = "127.0.0.1:9441")]
        listen: String,
        /// Stop after this many sessions (serves forever when omitted).
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Prover: connect to a verifier, run under its challenge, report.
    Attest {
        #[command(flatten)]
        program: ProgramArg,
        #[command(flatten)]
        run: RunOpts,
        #[arg(long, default_value = "127.0.0.1:9441")]
        connect: String,
    },
    /// Run the canned attack scenarios (all by default).
    Attack {
        /// One of: hijack-return, loop-count, keymap.
        scenario: Option<String>,
    },
}

fn parse_list(s: &str) -> Result<Vec<i32>, String> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<i32>().map_err(|_| format!("bad number {t:?}")))
        .collect()
}

fn emit<T: serde::Serialize>(format: Format, value: &T, text: impl FnOnce() -> String) {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(value).unwrap()),
        Format::Text => println!("{}", text()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let key = wire::load_key().map_err(|e| e.to_string())?;
    match cli.cmd {
        Cmd::Analyze(prog) => {
            let (name, a) = prog.load()?;
            emit(cli.format, &a, || {
                let mut out = format!(
                    "{name}: {} instructions, digest {}\n",
                    a.program.len(),
                    hex::encode(a.cfg.program_digest)
                );
                out.push_str(&format!(
                    "nodes: {}\n",
                    a.cfg
                        .nodes
                        .iter()
                        .map(|n| format!("({},{})", n.entry, n.exit))
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
                out.push_str(&format!("edges: {}\n", a.cfg.edges.len()));
                for l in &a.loops.loops {
                    out.push_str(&format!(
                        "loop header {} ({:?}), {} body nodes, {} exits\n",
                        l.header_entry,
                        l.kind,
                        l.body.len(),
                        l.exits.len()
                    ));
                }
                out.push_str(&format!(
                    "functions: {:?}",
                    a.cfg.function_entries
                ));
                out
            });
        }
        Cmd::Enumerate {
            program,
            challenge,
            max_paths,
        } => {
            let (_, a) = program.load()?;
            let bounds = EnumBounds {
                max_paths,
                ..EnumBounds::default()
            };
            let (begin, end) = challenge.region()?;
            let db = if (begin, end) == (0, REGION_END_HALT) {
                enumerate_measurements(&a, &bounds)
            } else {
                enumerate_region(&a, &bounds, begin, end)
            };
            emit(cli.format, &db, || {
                let mut out = format!(
                    "{} main-chain paths, complete: {}\n",
                    db.entries.len(),
                    db.complete
                );
                for e in &db.entries {
                    out.push_str(&format!("  {}\n", e.description));
                }
                for (h, set) in &db.loop_paths {
                    out.push_str(&format!(
                        "loop {}: {} iteration paths, {} fixed contexts\n",
                        h,
                        set.paths.len(),
                        set.fixed_contexts.len()
                    ));
                }
                out
            });
        }
        Cmd::Profile { program, inputs } => {
            let (_, a) = program.load()?;
            let inputs: Vec<Vec<i32>> = inputs
                .iter()
                .map(|s| parse_list(s))
                .collect::<Result<_, _>>()?;
            let db = profile_db(&a, &inputs, &key);
            emit(cli.format, &db, || {
                format!(
                    "{} enumerated paths, {} profiled runs, complete: {}",
                    db.entries.len(),
                    db.profiled.len(),
                    db.complete
                )
            });
        }
        Cmd::Run {
            program,
            run,
            challenge,
        } => {
            let (_, a) = program.load()?;
            let c = challenge.challenge(a.cfg.program_digest)?;
            let (res, report) = run_attested(&a, run.input()?, &c, &key, run.fault()?)
                .map_err(|e| e.to_string())?;
            emit(cli.format, &report, || {
                let mut out = format!(
                    "output {:?} in {} steps, {} events\nfinal hash {}\n",
                    res.output,
                    res.steps,
                    res.events,
                    hex::encode(report.auth.final_hash)
                );
                for r in &report.auth.records {
                    out.push_str(&format!(
                        "loop {}: context {}, {:?}, paths {:?}\n",
                        r.header_entry,
                        hex::encode(r.context_hash),
                        r.exit_kind,
                        r.paths
                            .iter()
                            .map(|(h, c)| format!("{}×{}", &hex::encode(h)[..8], c))
                            .collect::<Vec<_>>()
                    ));
                }
                out.push_str(&format!("tag {}", hex::encode(report.tag)));
                out
            });
        }
        Cmd::Serve {
            program,
            challenge,
            policy,
            listen,
            sessions,
        } => {
            let (_, a) = program.load()?;
            let c = challenge.challenge(a.cfg.program_digest)?;
            let (begin, end) = challenge.region()?;
            let db = if (begin, end) == (0, REGION_END_HALT) {
                enumerate_measurements(&a, &EnumBounds::default())
            } else {
                enumerate_region(&a, &EnumBounds::default(), begin, end)
            };
            let policy = policy.policy()?;
            eprintln!("listening on {listen}");
            wire::serve(&listen, &c, &db, &policy, &key, sessions, |v| {
                emit(cli.format, v, || format!("verdict: {v:?}"));
            })
            .map_err(|e| e.to_string())?;
        }
        Cmd::Attest {
            program,
            run,
            connect,
        } => {
            let (_, a) = program.load()?;
            let (c, res, report, verdict) =
                wire::attest(&connect, &a, run.input()?, &key, run.fault()?)
                    .map_err(|e| e.to_string())?;
            emit(cli.format, &verdict, || {
                format!(
                    "challenge nonce {}, region {}..{}\noutput {:?}, {} events\nfinal {}\nverdict: {:?}",
                    hex::encode(c.nonce),
                    c.region_begin,
                    c.region_end,
                    res.output,
                    res.events,
                    hex::encode(report.auth.final_hash),
                    verdict
                )
            });
            if !verdict.is_valid() {
                return Err(format!("attestation rejected: {verdict:?}"));
            }
        }
        Cmd::Attack { scenario } => {
            let outcomes = match scenario.as_deref() {
                None => attacklab::all_scenarios(),
                Some("hijack-return") => vec![attacklab::scenario_hijack_return()],
                Some("loop-count") => vec![attacklab::scenario_loop_count()],
                Some("keymap") => vec![attacklab::scenario_keymap()],
                Some(other) => return Err(format!("unknown scenario {other:?}")),
            };
            for s in &outcomes {
                emit(cli.format, s, || {
                    format!(
                        "{} on {}: {}\n  baseline output {:?} → {:?}\n  attacked output {:?} → {:?}\n  detected: {}",
                        s.name,
                        s.program,
                        s.description,
                        s.baseline_output,
                        s.baseline_verdict,
                        s.attacked_output,
                        s.attacked_verdict,
                        s.detected()
                    )
                });
            }
            if !outcomes.iter().all(|s| s.detected()) {
                return Err("a scenario went undetected".into());
            }
        }
    }
    Ok(())
}