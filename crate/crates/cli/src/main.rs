//! `tdmh`: configuration checks, scheduling and simulation from the command line.
//!
//! Exit codes: 0 success, 2 validation or verification violations, 1 I/O or
//! parse errors, 64 usage errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tdmh_core::formats::{self, metrics_header, metrics_row, stream_columns};
use tdmh_core::netconfig::{self, control_overhead};
use tdmh_core::scheduler::{
    decode_schedule, dump_schedule, encode_schedule, latency_bounds, schedule_streams,
    verify_schedule,
};
use tdmh_core::sim::power::{estimate_power, CurrentModel, DataLoad};
use tdmh_core::sim::{run_scenario, Metrics};
use tdmh_core::NetworkConfiguration;

#[derive(Parser)]
#[command(
    name = "tdmh",
    version,
    about = "Scheduler, verifier and simulator for a centralized TDMA mesh MAC"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a configuration file and print its derived timing.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Control overhead as CSV, optionally swept over configuration keys.
    Overhead {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `key=v1,v2,...`; repeat for a cartesian product.
        #[arg(long)]
        sweep: Vec<String>,
    },
    /// Route and schedule streams; prints the schedule dump.
    Schedule {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        streams: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the binary schedule here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a binary schedule against the scheduling propositions.
    Verify {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Configuration the schedule was built with.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a scenario; prints or writes the metrics CSV.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for metrics.csv, links.csv, nodes.csv and traces.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record per-slot events and write the trace.
        #[arg(long)]
        trace: bool,
        /// `key=v1,v2,...` over run or configuration keys; repeatable.
        #[arg(long)]
        sweep: Vec<String>,
    },
    /// Estimated average node current as CSV.
    Power {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fractions of data slots in use.
        #[arg(long, default_value = "0,0.1,0.25,0.5,1")]
        load: String,
        /// Fractions of other nodes' uplink slots overheard.
        #[arg(long, default_value = "0.2")]
        connectivity: String,
        /// Share of active data slots spent transmitting.
        #[arg(long, default_value_t = 0.5)]
        tx_share: f64,
    },
}

enum Outcome {
    Ok,
    Violations,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(64);
        }
    };
    match run(cli.cmd) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Violations) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<NetworkConfiguration> {
    match path {
        Some(p) => {
            formats::parse_config(&read(p)?).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(NetworkConfiguration::default()),
    }
}

type Sweep = Vec<(String, Vec<String>)>;

fn parse_sweeps(specs: &[String]) -> Result<Sweep> {
    specs
        .iter()
        .map(|s| {
            let Some((k, vs)) = s.split_once('=') else {
                bail!("sweep `{s}` is not key=v1,v2,...");
            };
            let vals: Vec<String> = vs
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if k.trim().is_empty() || vals.is_empty() {
                bail!("sweep `{s}` is not key=v1,v2,...");
            }
            Ok((k.trim().to_string(), vals))
        })
        .collect()
}

/// Every combination of sweep values, first key varying slowest.
fn combinations(sweep: &Sweep) -> Vec<Vec<(String, String)>> {
    let mut out = vec![Vec::new()];
    for (k, vals) in sweep {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push((k.clone(), v.clone()));
                    p
                })
            })
            .collect();
    }
    out
}

fn as_refs(v: &[(String, String)]) -> Vec<(&str, &str)> {
    v.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect()
}

fn print_violations(v: &[impl std::fmt::Display]) {
    for x in v {
        println!("{x}");
    }
}

fn run(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Validate { config } => {
            let cfg = load_config(Some(&config))?;
            let v = netconfig::validate(&cfg);
            if !v.is_empty() {
                print_violations(&v);
                return Ok(Outcome::Violations);
            }
            println!("ok");
            println!("control_superframe_ms {}", cfg.control_superframe_ms());
            println!("uplink_slot_ms {}", cfg.uplink_slot_duration_ms());
            println!("round_ms {}", cfg.round_duration_ms());
            println!("overhead {:.6}", control_overhead(&cfg));
            Ok(Outcome::Ok)
        }
        Cmd::Overhead { config, sweep } => {
            let text = match &config {
                Some(p) => read(p)?,
                None => String::new(),
            };
            let sweep = parse_sweeps(&sweep)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            let mut header: Vec<String> = sweep.iter().map(|(k, _)| k.clone()).collect();
            header.extend(["control_overhead", "usable_fraction"].map(String::from));
            w.write_record(&header)?;
            for combo in combinations(&sweep) {
                let cfg = formats::parse_config_with(&text, &as_refs(&combo))?;
                if let Some(first) = netconfig::validate(&cfg).first() {
                    bail!("configuration {combo:?}: {first}");
                }
                let o = control_overhead(&cfg);
                let mut row: Vec<String> = combo.iter().map(|(_, v)| v.clone()).collect();
                row.push(format!("{o:.6}"));
                row.push(format!("{:.6}", 1.0 - o));
                w.write_record(&row)?;
            }
            w.flush()?;
            Ok(Outcome::Ok)
        }
        Cmd::Schedule {
            graph,
            streams,
            config,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let v = netconfig::validate(&cfg);
            if !v.is_empty() {
                print_violations(&v);
                return Ok(Outcome::Violations);
            }
            let g = formats::parse_graph(&read(&graph)?)
                .with_context(|| format!("parsing {}", graph.display()))?;
            let st = formats::parse_streams(&read(&streams)?)
                .with_context(|| format!("parsing {}", streams.display()))?;
            let outcome = schedule_streams(&g, &st, &cfg);
            for r in &outcome.rejections {
                let s = st.iter().find(|s| s.id == r.stream_id);
                match s {
                    Some(s) => eprintln!(
                        "rejected stream {} {}->{}: {}",
                        r.stream_id, s.src, s.dst, r.reason
                    ),
                    None => eprintln!("rejected stream {}: {}", r.stream_id, r.reason),
                }
            }
            let mut text = dump_schedule(&outcome.schedule);
            for (id, ms) in latency_bounds(&outcome.schedule) {
                text.push_str(&format!("# latency {id} {ms}\n"));
            }
            print!("{text}");
            if let Some(p) = out {
                let bytes = encode_schedule(&outcome.schedule)?;
                fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(Outcome::Ok)
        }
        Cmd::Verify {
            schedule,
            graph,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let bytes =
                fs::read(&schedule).with_context(|| format!("reading {}", schedule.display()))?;
            let s = decode_schedule(&bytes, &cfg)
                .with_context(|| format!("decoding {}", schedule.display()))?;
            let g = formats::parse_graph(&read(&graph)?)
                .with_context(|| format!("parsing {}", graph.display()))?;
            let v = verify_schedule(&s, &g);
            if v.is_empty() {
                println!("ok");
                Ok(Outcome::Ok)
            } else {
                print_violations(&v);
                Ok(Outcome::Violations)
            }
        }
        Cmd::Simulate {
            scenario,
            seed,
            out,
            trace,
            sweep,
        } => simulate(&scenario, seed, out.as_deref(), trace, &sweep),
        Cmd::Power {
            config,
            load,
            connectivity,
            tx_share,
        } => {
            let cfg = load_config(config.as_deref())?;
            if let Some(first) = netconfig::validate(&cfg).first() {
                println!("{first}");
                return Ok(Outcome::Violations);
            }
            let parse = |s: &str, what: &str| -> Result<Vec<f64>> {
                s.split(',')
                    .map(|x| {
                        x.trim()
                            .parse::<f64>()
                            .with_context(|| format!("bad {what} value `{x}`"))
                    })
                    .collect()
            };
            let loads = parse(&load, "load")?;
            let conns = parse(&connectivity, "connectivity")?;
            let model = CurrentModel::default();
            let mut w = csv::Writer::from_writer(std::io::stdout());
            w.write_record(["load", "connectivity", "current_ma"])?;
            for &c in &conns {
                for &l in &loads {
                    let i = estimate_power(&cfg, &DataLoad::fraction(&cfg, l, tx_share), c, &model);
                    w.write_record([l.to_string(), c.to_string(), format!("{i:.6}")])?;
                }
            }
            w.flush()?;
            Ok(Outcome::Ok)
        }
    }
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    trace: bool,
    sweep: &[String],
) -> Result<Outcome> {
    let text = read(path)?;
    let sweep = parse_sweeps(sweep)?;
    let mut scenarios = Vec::new();
    for mut combo in combinations(&sweep) {
        if let Some(s) = seed {
            if !combo.iter().any(|(k, _)| k == "seed") {
                combo.push(("seed".into(), s.to_string()));
            }
        }
        let mut sc = formats::parse_scenario_with(&text, &as_refs(&combo))
            .with_context(|| format!("parsing {}", path.display()))?;
        let label: Vec<String> = combo
            .iter()
            .filter(|(k, _)| k != "seed" || sweep.iter().any(|(s, _)| s == "seed"))
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        if !label.is_empty() {
            sc.name = format!("{}[{}]", sc.name, label.join(";"));
        }
        sc.verbose_trace |= trace;
        sc.validate()?;
        scenarios.push(sc);
    }

    // Independent runs in parallel; results keep scenario order.
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(scenarios.len().max(1));
    let mut results: Vec<Option<Result<Metrics>>> = (0..scenarios.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = results
            .chunks_mut(scenarios.len().div_ceil(workers).max(1))
            .collect();
        let mut start = 0;
        for chunk in chunks {
            let mine = &scenarios[start..start + chunk.len()];
            start += chunk.len();
            s.spawn(move || {
                for (slot, sc) in chunk.iter_mut().zip(mine) {
                    *slot = Some(run_scenario(sc).map_err(anyhow::Error::from));
                }
            });
        }
    });
    let metrics: Vec<Metrics> = results
        .into_iter()
        .map(|r| r.expect("every run finishes"))
        .collect::<Result<_>>()?;

    let columns = stream_columns(&metrics);
    let csv_bytes = {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(metrics_header(&columns))?;
        for m in &metrics {
            w.write_record(metrics_row(m, &columns))?;
        }
        w.into_inner()?
    };
    match out {
        None => {
            std::io::stdout().write_all(&csv_bytes)?;
            if trace {
                for m in &metrics {
                    eprint!("{}", m.trace_text());
                }
            }
        }
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let write = |name: &str, bytes: &[u8]| -> Result<()> {
                let p = dir.join(name);
                fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
            };
            write("metrics.csv", &csv_bytes)?;
            let mut links = csv::Writer::from_writer(Vec::new());
            links.write_record(["scenario", "seed", "u", "v", "reliability", "uptime"])?;
            let mut nodes = csv::Writer::from_writer(Vec::new());
            nodes.write_record(["scenario", "seed", "node", "current_ma"])?;
            for m in &metrics {
                for l in &m.link_uptime {
                    links.write_record([
                        m.scenario.clone(),
                        m.seed.to_string(),
                        l.u.to_string(),
                        l.v.to_string(),
                        format!("{:.4}", l.reliability),
                        format!("{:.6}", l.uptime),
                    ])?;
                }
                for (n, ma) in &m.node_current_ma {
                    nodes.write_record([
                        m.scenario.clone(),
                        m.seed.to_string(),
                        n.to_string(),
                        format!("{ma:.6}"),
                    ])?;
                }
            }
            write("links.csv", &links.into_inner()?)?;
            write("nodes.csv", &nodes.into_inner()?)?;
            if trace {
                if metrics.len() == 1 {
                    write("trace.log", metrics[0].trace_text().as_bytes())?;
                } else {
                    for (i, m) in metrics.iter().enumerate() {
                        write(&format!("trace_{i}.log"), m.trace_text().as_bytes())?;
                    }
                }
            }
        }
    }
    Ok(Outcome::Ok)
}
