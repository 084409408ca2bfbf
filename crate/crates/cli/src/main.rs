use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use petriflow::sim::{cov_sweep, sweep_csv, SweepAxis};
use petriflow::structural::{
    classify, is_conservative, liveness_marked_graph, minimal_p_semiflows, minimal_t_invariants, synchronic_lead,
};
use petriflow::{
    dsl, econ, gspn, pnml, CostParams, Family, Horizon, Mapping, Rates, SimConfig, SolverMethod,
    SolverOptions, TimedNet, WavefrontSpec,
};

#[derive(Parser, Debug)]
#[command(name = "petriflow", version, about = "Petri-net models of data-flow programs: build, analyze, bound, solve and simulate")]
struct Cli {
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Worker threads for parallel replications
    #[arg(long, global = true, env = "PETRIFLOW_THREADS")]
    threads: Option<usize>,
    /// Also write the run manifest (JSON) to this path
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Parse and flatten a component-language source
    Parse(ParseArgs),
    /// Structural analysis: class, invariants, liveness
    Analyze(AnalyzeArgs),
    /// Cycle-time bounds
    Bounds(ModelArg),
    /// Exact steady state of the underlying Markov chain
    Gspn(GspnArgs),
    /// Discrete-event simulation
    Simulate(SimArgs),
    /// CoV sweep over injection and service distributions (CSV)
    Sweep(SweepArgs),
    /// Functional and operational cost
    Cost(CostArgs),
    /// Built-in model generators
    Generate {
        #[command(subcommand)]
        what: Generate,
    },
}

#[derive(Args, Debug, Serialize)]
struct ModelArg {
    /// Model: `.lang` source, `.pnml` file, or `wavefront:<mapping>:<n>[:decoupled]`
    model: String,
    /// Root component of a `.lang` source (default: the last one)
    #[arg(long)]
    root: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct ParseArgs {
    source: PathBuf,
    #[arg(long)]
    root: Option<String>,
    /// Write the flattened net as PNML (timing goes to `<out>.timing.json`)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print the canonical form of the source instead of a summary
    #[arg(long)]
    canonical: bool,
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    model: ModelArg,
    /// Synchronic lead of A over B (repeatable), as `A,B`
    #[arg(long = "lead", value_name = "A,B")]
    leads: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct GspnArgs {
    #[command(flatten)]
    model: ModelArg,
    #[arg(long, default_value_t = 5_000_000)]
    state_cap: usize,
    #[arg(long, value_enum, default_value_t = Solver::GaussSeidel)]
    solver: Solver,
    #[arg(long, default_value_t = 1e-12)]
    tolerance: f64,
    /// Transition whose throughput is reported first
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Solver {
    Dense,
    GaussSeidel,
    Power,
}

#[derive(Args, Debug, Serialize)]
struct SimOpts {
    /// Stop after this many firings of the reference transition
    #[arg(long, default_value_t = 100_000, conflicts_with = "time")]
    firings: u64,
    /// Stop at this simulated time instead
    #[arg(long)]
    time: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    warmup: f64,
    #[arg(long, default_value_t = 10)]
    replications: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    reference: Option<String>,
    /// Check P-semiflow conservation during the run
    #[arg(long)]
    check_invariants: bool,
}

impl SimOpts {
    fn config(&self) -> SimConfig {
        SimConfig {
            horizon: match self.time {
                Some(t) => Horizon::Time(t),
                None => Horizon::Firings(self.firings),
            },
            warmup: self.warmup,
            replications: self.replications,
            seed: self.seed,
            reference: self.reference.clone(),
            check_invariants: self.check_invariants,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct SimArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    sim: SimOpts,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArg,
    #[command(flatten)]
    sim: SimOpts,
    #[arg(long, default_value = "exponential")]
    inj_family: String,
    #[arg(long, value_delimiter = ',', default_value = "1")]
    inj_covs: Vec<f64>,
    /// Injection transitions; `PREFIX*` matches by prefix
    #[arg(long, value_delimiter = ',', default_value = "IX_*,IY_*")]
    inj_transitions: Vec<String>,
    #[arg(long, default_value = "uniform")]
    srv_family: String,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    srv_covs: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "End_*")]
    srv_transitions: Vec<String>,
    /// CSV destination (default: stdout)
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CostArgs {
    /// Mean operation time (s)
    #[arg(long)]
    alpha: f64,
    /// Mean transmission time (s)
    #[arg(long)]
    beta: f64,
    /// Mean injection interval (s)
    #[arg(long)]
    gamma: f64,
    /// Stream length
    #[arg(long)]
    n: f64,
    /// Price per CPU-second
    #[arg(long)]
    p: f64,
    #[arg(long)]
    cpus: u32,
    /// Measured throughput (items/s)
    #[arg(long)]
    measured: Option<f64>,
    /// Throughput bound (default: 1 / max(alpha, beta, gamma))
    #[arg(long)]
    bound: Option<f64>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
enum Generate {
    /// n x n wavefront array
    Wavefront {
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// functional, grid or pipeline
        #[arg(long, default_value = "grid")]
        variant: String,
        #[arg(long)]
        decoupled: bool,
        /// injection,operation,transmission mean times (s)
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.1,0.1,0.001")]
        rates: Vec<f64>,
        /// Pipeline stage resources (default: n)
        #[arg(long)]
        stage_resources: Option<u32>,
        /// PNML destination (default: stdout)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    seed: Option<u64>,
    threads: usize,
    inputs: Vec<InputDigest>,
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Res<T> = Result<T, Failure>;

fn digest(path: &Path) -> Option<InputDigest> {
    let bytes = std::fs::read(path).ok()?;
    Some(InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_model(m: &ModelArg, inputs: &mut Vec<InputDigest>) -> Res<TimedNet> {
    if let Some(rest) = m.model.strip_prefix("wavefront:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let (mapping, n) = match parts.as_slice() {
            [mapping, n] | [mapping, n, "decoupled"] => (mapping.parse::<Mapping>()?, n.parse::<usize>()?),
            _ => return Err(Failure(format!("bad generator spec `{}`", m.model))),
        };
        let spec = WavefrontSpec {
            n,
            decoupled: parts.len() == 3,
            mapping,
            rates: Rates::default(),
            stage_resources: None,
        };
        return Ok(spec.generate()?);
    }
    let path = Path::new(&m.model);
    inputs.extend(digest(path));
    let pnml_file = path.extension().is_some_and(|e| e == "pnml" || e == "xml");
    if pnml_file {
        inputs.extend(digest(&pnml::sidecar_path(path)));
        Ok(pnml::read_files(path)?)
    } else {
        let src = read(path)?;
        dsl::load(&src, m.root.as_deref()).map_err(|e| Failure(e.diagnostic(&m.model)))
    }
}

fn expand(net: &TimedNet, patterns: &[String]) -> Res<Vec<String>> {
    let mut out = Vec::new();
    for p in patterns {
        if let Some(prefix) = p.strip_suffix('*') {
            let hits: Vec<String> = net.net.transitions().iter().filter(|t| t.starts_with(prefix)).cloned().collect();
            if hits.is_empty() {
                return Err(Failure(format!("no transition matches `{p}`")));
            }
            out.extend(hits);
        } else {
            net.net.transition(p)?;
            out.push(p.clone());
        }
    }
    Ok(out)
}

struct Output {
    text: String,
    json: Value,
    seed: Option<u64>,
}

fn run(cli: &Cli, inputs: &mut Vec<InputDigest>) -> Res<Output> {
    match &cli.command {
        Command::Parse(a) => {
            inputs.extend(digest(&a.source));
            let src = read(&a.source)?;
            let diag = |e: dsl::DslError| Failure(e.diagnostic(&a.source.display().to_string()));
            let comps = dsl::parse(&src).map_err(diag)?;
            if a.canonical {
                let text = dsl::print(&comps);
                return Ok(Output {
                    json: json!({ "canonical": text }),
                    text,
                    seed: None,
                });
            }
            let root = a.root.clone().or_else(|| comps.last().map(|c| c.name.clone())).ok_or_else(|| Failure("source has no components".into()))?;
            let net = dsl::flatten(&comps, &root, &Default::default()).map_err(diag)?;
            if let Some(out) = &a.output {
                pnml::write_files(&net, out)?;
            }
            let text = format!(
                "components: {}\nroot: {root}\nplaces: {}\ntransitions: {}\ntimed transitions: {}\n",
                comps.len(),
                net.net.num_places(),
                net.net.num_transitions(),
                net.timing.len()
            );
            Ok(Output {
                json: json!({
                    "components": comps.iter().map(|c| &c.name).collect::<Vec<_>>(),
                    "root": root,
                    "places": net.net.places(),
                    "transitions": net.net.transitions(),
                }),
                text,
                seed: None,
            })
        }
        Command::Analyze(a) => {
            let net = load_model(&a.model, inputs)?.net;
            let class = classify(&net);
            let ps = minimal_p_semiflows(&net);
            let ts = minimal_t_invariants(&net);
            let live = if class.is_marked_graph { Some(liveness_marked_graph(&net)?) } else { None };
            let mut leads = Vec::new();
            for l in &a.leads {
                let (x, y) = l.split_once(',').ok_or_else(|| Failure(format!("--lead expects `A,B`, got `{l}`")))?;
                leads.push(json!({ "a": x, "b": y, "lead": synchronic_lead(&net, x, y)? }));
            }
            let fmt_vec = |v: &petriflow::AnnullerVector| {
                v.support()
                    .iter()
                    .map(|&i| {
                        let name = match v.kind {
                            petriflow::AnnullerKind::PSemiflow => net.place_name(i),
                            petriflow::AnnullerKind::TInvariant => net.transition_name(i),
                        };
                        match v.coefficients[i] {
                            1 => name.to_string(),
                            k => format!("{k}*{name}"),
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" + ")
            };
            let mut text = format!(
                "places: {}\ntransitions: {}\nmarked graph: {}\nstrongly connected: {}\nconservative: {}\n",
                net.num_places(),
                net.num_transitions(),
                class.is_marked_graph,
                class.is_strongly_connected,
                is_conservative(&net)
            );
            if let Some(l) = &live {
                text.push_str(&format!("live: {}\n", l.live));
            }
            text.push_str(&format!("minimal P-semiflows: {}\n", ps.len()));
            for v in &ps {
                text.push_str(&format!("  {}\n", fmt_vec(v)));
            }
            text.push_str(&format!("minimal T-invariants: {}\n", ts.len()));
            for v in &ts {
                text.push_str(&format!("  {}\n", fmt_vec(v)));
            }
            for l in &leads {
                text.push_str(&format!("lead({} over {}): {}\n", l["a"].as_str().unwrap_or(""), l["b"].as_str().unwrap_or(""), l["lead"]));
            }
            Ok(Output {
                json: json!({
                    "classification": class,
                    "conservative": is_conservative(&net),
                    "liveness": live,
                    "p_semiflows": ps.iter().map(|v| fmt_vec(v)).collect::<Vec<_>>(),
                    "t_invariants": ts.iter().map(|v| fmt_vec(v)).collect::<Vec<_>>(),
                    "leads": leads,
                }),
                text,
                seed: None,
            })
        }
        Command::Bounds(m) => {
            let net = load_model(m, inputs)?;
            let b = petriflow::bounds(&net.net, &net.timing)?;
            let mut text = format!(
                "gamma_min: {:.9} s\ngamma_max: {:.9} s\nthroughput upper: {:.6} /s\nthroughput lower: {:.6} /s\n",
                b.gamma_min, b.gamma_max, b.throughput_upper, b.throughput_lower
            );
            if let Some(c) = &b.critical_circuit {
                text.push_str(&format!("critical circuit: {}\n", c.transitions.join(" ")));
            }
            Ok(Output {
                json: serde_json::to_value(&b)?,
                text,
                seed: None,
            })
        }
        Command::Gspn(a) => {
            let net = load_model(&a.model, inputs)?;
            let opts = SolverOptions {
                method: match a.solver {
                    Solver::Dense => SolverMethod::Dense,
                    Solver::GaussSeidel => SolverMethod::GaussSeidel,
                    Solver::Power => SolverMethod::Power,
                },
                tolerance: a.tolerance,
                ..SolverOptions::default()
            };
            let r = gspn::analyze(&net.net, &net.timing, a.state_cap, &opts)?;
            let reference = match &a.reference {
                Some(t) => net.net.transition(t)?,
                None => 0,
            };
            let mut text = format!(
                "states: {}\ntangible: {}\nresidual: {:.3e}\nthroughput({}): {:.6} /s\n",
                r.num_states,
                r.num_tangible,
                r.residual,
                net.net.transition_name(reference),
                r.throughput[reference]
            );
            for (t, x) in net.net.transitions().iter().zip(&r.throughput) {
                text.push_str(&format!("  {t}: {x:.6}\n"));
            }
            let tp: serde_json::Map<String, Value> = net.net.transitions().iter().cloned().zip(r.throughput.iter().map(|&x| json!(x))).collect();
            Ok(Output {
                json: json!({
                    "states": r.num_states,
                    "tangible": r.num_tangible,
                    "residual": r.residual,
                    "reference": net.net.transition_name(reference),
                    "throughput": tp,
                }),
                text,
                seed: None,
            })
        }
        Command::Simulate(a) => {
            let net = load_model(&a.model, inputs)?;
            let cfg = a.sim.config();
            let r = petriflow::simulate(&net.net, &net.timing, &cfg)?;
            let mut text = format!("replications: {}\nevents: {}\n", cfg.replications, r.events);
            for (k, t) in r.transitions.iter().enumerate() {
                text.push_str(&format!("  {t}: {:.6} +- {:.6}\n", r.throughput[k], r.ci_halfwidth[k]));
            }
            Ok(Output {
                json: json!({
                    "transitions": r.transitions,
                    "throughput": r.throughput,
                    "ci_halfwidth": r.ci_halfwidth,
                    "events": r.events,
                    "config": r.config,
                }),
                text,
                seed: Some(cfg.seed),
            })
        }
        Command::Sweep(a) => {
            let net = load_model(&a.model, inputs)?;
            let family = |s: &str| s.parse::<Family>().map_err(Failure);
            let inj = SweepAxis {
                family: family(&a.inj_family)?,
                covs: a.inj_covs.clone(),
                transitions: expand(&net, &a.inj_transitions)?,
            };
            let srv = SweepAxis {
                family: family(&a.srv_family)?,
                covs: a.srv_covs.clone(),
                transitions: expand(&net, &a.srv_transitions)?,
            };
            let mut cfg = a.sim.config();
            if cfg.reference.is_none() {
                cfg.reference = srv.transitions.first().cloned();
            }
            let rows = cov_sweep(&net.net, &net.timing, &inj, &srv, &cfg)?;
            let csv = sweep_csv(&rows, &cfg, &[("model", a.model.model.clone()), ("reference", cfg.reference.clone().unwrap_or_default())]);
            if let Some(out) = &a.output {
                std::fs::write(out, &csv).map_err(|e| Failure(format!("{}: {e}", out.display())))?;
            }
            Ok(Output {
                json: json!({ "rows": rows }),
                text: if a.output.is_some() { String::new() } else { csv },
                seed: Some(cfg.seed),
            })
        }
        Command::Cost(a) => {
            let params = CostParams {
                alpha: a.alpha,
                beta: a.beta,
                gamma: a.gamma,
                n: a.n,
                p: a.p,
                cpu_count: a.cpus,
            };
            let r = econ::report(&params, a.measured, a.bound)?;
            let mut text = format!("functional cost: {:.6}\n", r.functional);
            if let (Some(k), Some(op)) = (r.multiplier, r.operational) {
                text.push_str(&format!("dilation: {k:.6}\noperational cost: {op:.6}\nperformance loss: {:.2} %\n", 100.0 * (1.0 - 1.0 / k)));
            }
            Ok(Output {
                json: serde_json::to_value(&r)?,
                text,
                seed: None,
            })
        }
        Command::Generate {
            what:
                Generate::Wavefront {
                    n,
                    variant,
                    decoupled,
                    rates,
                    stage_resources,
                    output,
                },
        } => {
            let spec = WavefrontSpec {
                n: *n,
                decoupled: *decoupled,
                mapping: variant.parse::<Mapping>()?,
                rates: Rates {
                    injection: rates[0],
                    operation: rates[1],
                    transmission: rates[2],
                },
                stage_resources: *stage_resources,
            };
            let net = spec.generate()?;
            let counts = json!({ "places": net.net.num_places(), "transitions": net.net.num_transitions() });
            match output {
                Some(out) => {
                    pnml::write_files(&net, out)?;
                    Ok(Output {
                        text: format!("wrote {} ({} places, {} transitions)\n", out.display(), net.net.num_places(), net.net.num_transitions()),
                        json: counts,
                        seed: None,
                    })
                }
                None => Ok(Output {
                    text: pnml::to_pnml(&net.net),
                    json: counts,
                    seed: None,
                }),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: thread count must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let mut inputs = Vec::new();
    let out = match run(&cli, &mut inputs) {
        Ok(o) => o,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let manifest = RunManifest {
        tool: "petriflow",
        version: env!("CARGO_PKG_VERSION"),
        command: &cli.command,
        seed: out.seed,
        threads: rayon::current_num_threads(),
        inputs,
    };
    if let Some(path) = &cli.manifest {
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        if let Err(e) = std::fs::write(path, body + "\n") {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    match cli.format {
        Format::Text => print!("{}", out.text),
        Format::Json => {
            let doc = json!({ "manifest": manifest, "result": out.json });
            println!("{}", serde_json::to_string_pretty(&doc).expect("result serializes"));
        }
    }
    ExitCode::SUCCESS
}
