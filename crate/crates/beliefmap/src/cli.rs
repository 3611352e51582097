//! Command-line front end. Every subcommand validates its options, writes its
//! outputs to the declared paths only, and leaves a manifest JSON next to them.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::dataio::{
    read_activation_set, read_head_params, write_activation_set, write_head_params, DistSpec, ProbVec,
};
use crate::embedding::{inpca, pca};
use crate::experiments::{self, Lab};
use crate::geometry::{eval_curve, field_embed, fit_curve, FieldGeometry};
use crate::metrics::{discretized_normal, fmt_num, BeliefTrajectory};
use crate::observer::{observer_trajectory, ObserverPrior};
use crate::probes::{
    accuracy, interp_kernel, interp_linear, interp_slerp, probe_gram, read_probe, train_multiclass, train_ovr,
    transfer_curve, write_probe, ProbeField, ProbeHyper,
};
use crate::seriesgen::{format_prompt, gen_meta_series, gen_series, parse_segments, SegmentedSeries};
use crate::steering::{
    calibrate_field_gain, centroid_curve, diff_means, evaluate_steering, probe_dir, FieldSteerer, Scheme, RIDGE,
};
use crate::synth::{make_world, sample_set, SynthConfig};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "beliefmap", version, about = "Belief-manifold probing and steering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a segmented integer series.
    Gen(GenArgs),
    /// Build a synthetic world and write its activations and head.
    Synth(SynthArgs),
    /// Belief-trajectory metrics of a sequence of probability vectors.
    Metrics(MetricsArgs),
    /// PCA of activations or inPCA of probability vectors.
    Embed(EmbedArgs),
    /// Train, evaluate and compare class probes.
    #[command(subcommand)]
    Probe(ProbeCmd),
    /// Geometry of a probe field.
    #[command(subcommand)]
    Geom(GeomCmd),
    /// Sweep a steering scheme and report induced moments.
    Steer(SteerArgs),
    /// Ideal-observer trajectory on a series.
    Observer(ObserverArgs),
    /// Regenerate an experiment bundle.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// `mu:sigma:length` triples, comma separated.
    #[arg(long, conflicts_with = "meta")]
    segments: Option<String>,
    /// Alternating series `m:len:muA:sigmaA:muB:sigmaB`.
    #[arg(long)]
    meta: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the comma-joined prompt text here.
    #[arg(long)]
    prompt: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// `default`, `mixture`, `mixture-cross` or a JSON config path.
    #[arg(long, default_value = "default")]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for acts.bma, head.bmh and config.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// CSV with one row of 1000 probabilities per step.
    #[arg(long)]
    probs: PathBuf,
    /// Reference `mu:sigma` for kl_to_ref.
    #[arg(long = "ref", default_value = "500:100")]
    reference: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmbedMethod {
    Pca,
    Inpca,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long, value_enum)]
    method: EmbedMethod,
    /// Activation container (pca).
    #[arg(long)]
    acts: Option<PathBuf>,
    /// Probability CSV (inpca).
    #[arg(long)]
    probs: Option<PathBuf>,
    /// Discretized normals `mu:sigma,...` (inpca).
    #[arg(long)]
    family: Option<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum ProbeCmd {
    /// Train a probe field on an activation set.
    Train(ProbeTrainArgs),
    /// Accuracy of a probe field on an activation set.
    Eval {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        acts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gram matrix of the probe rows.
    Gram {
        #[arg(long)]
        probe: PathBuf,
        /// Remove the across-class mean row first.
        #[arg(long)]
        centered: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot transfer of a pair probe to shifted pairs.
    Transfer {
        #[arg(long)]
        acts: PathBuf,
        /// `low:high`.
        #[arg(long)]
        pair: String,
        /// Comma-separated shifts.
        #[arg(long, default_value = "0,50,100,150,200,250,300,350")]
        shifts: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate between the probes of two classes.
    Interp {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = InterpMethod::Kernel)]
        method: InterpMethod,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InterpMethod {
    Linear,
    Slerp,
    Kernel,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Variant {
    Multiclass,
    Ovr,
}

#[derive(Args, Debug)]
struct ProbeTrainArgs {
    #[arg(long)]
    acts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Variant::Multiclass)]
    variant: Variant,
    #[arg(long, default_value_t = 1e-3)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    max_epochs: usize,
    #[arg(long)]
    center_rows: bool,
}

#[derive(Subcommand, Debug)]
enum GeomCmd {
    /// Eigen-spectrum and cumulative variance of the probe Gram matrix.
    Eig {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank-r kernel-PCA coordinates of the classes.
    Embed {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Natural spline through the rank-r embedding, sampled every `step`.
    Spline {
        #[arg(long)]
        probe: PathBuf,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 10.0)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Additive mixture-of-manifolds prediction on a synthetic world.
    Mixture {
        #[arg(long, default_value = "mixture")]
        synth: String,
        /// Anchor `mu:sigma`.
        #[arg(long, default_value = "500:110")]
        anchor: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum SteerMode {
    Linear,
    Spline,
    Probe,
    Field,
}

#[derive(Args, Debug)]
struct SteerArgs {
    #[arg(long, value_enum)]
    mode: SteerMode,
    /// Synthetic world to steer in, used when --acts/--head are absent.
    #[arg(long, default_value = "default")]
    synth: String,
    #[arg(long, requires = "head")]
    acts: Option<PathBuf>,
    #[arg(long, requires = "acts")]
    head: Option<PathBuf>,
    /// Probe field for probe and field modes; trained when absent.
    #[arg(long)]
    probe: Option<PathBuf>,
    #[arg(long, default_value_t = 300.0)]
    from: f64,
    #[arg(long, default_value_t = 500.0)]
    to: f64,
    /// Largest gain for linear and probe sweeps; defaults to 1 for linear and
    /// `2 |w_to - w_from|` for probe.
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ObserverArgs {
    /// Series JSON written by `gen`.
    #[arg(long)]
    series: PathBuf,
    /// `mu0:kappa0:alpha0:beta0`.
    #[arg(long, default_value = "500:1e-6:1e-3:1e-3")]
    prior: String,
    /// Reference `mu:sigma` for kl_to_ref.
    #[arg(long = "ref", default_value = "500:100")]
    reference: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    /// Experiment id or a unique prefix of one.
    id: String,
    #[arg(long, default_value = "default")]
    synth: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "figs")]
    out: PathBuf,
}

pub const EXPERIMENTS: [&str; 9] = [
    "fig2_dynamics",
    "fig3_lfp",
    "fig4_geometry",
    "fig5_primal_steer",
    "fig6_field_steer",
    "figA_convergence",
    "figB_observer",
    "figC_meta",
    "fig_mixture",
];

/// Resolves an exact id or a unique prefix.
pub fn resolve_experiment(id: &str) -> Result<&'static str> {
    if let Some(e) = EXPERIMENTS.iter().find(|e| **e == id) {
        return Ok(e);
    }
    let hits: Vec<&&str> = EXPERIMENTS.iter().filter(|e| e.starts_with(id)).collect();
    match hits.as_slice() {
        [one] => Ok(one),
        [] => Err(Error::invalid(format!("unknown experiment '{id}'"))),
        _ => Err(Error::invalid(format!("ambiguous experiment '{id}'"))),
    }
}

/// Parses argv (program name first), runs, and returns the exit code.
pub fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let argv: Vec<String> = argv.into_iter().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command, &argv[1..]) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("BMA_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Invalid(format!("BMA_THREADS must be a positive integer, got '{v}'")))?;
    // A second build in the same process fails harmlessly.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn to_json(v: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(v).map(|s| s + "\n").map_err(|e| Error::Format(e.to_string()))
}

/// `<out>.manifest.json` for file outputs, `<dir>/manifest.json` for directories.
fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }
}

fn write_manifest(
    out: &Path,
    is_dir: bool,
    command: &str,
    args: &[String],
    seed: Option<u64>,
    results: Value,
) -> Result<()> {
    let m = json!({
        "command": command,
        "args": args,
        "seed": seed,
        "versions": { "beliefmap": env!("CARGO_PKG_VERSION"), "container": 1 },
        "results": results,
    });
    write_text(&manifest_path(out, is_dir), &to_json(&m)?)
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::Invalid(format!("{what} must be a:b, got '{s}'")));
    }
    let num = |p: &str| p.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad number '{p}' in {what}")));
    Ok((num(parts[0])?, num(parts[1])?))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad number '{p}'"))))
        .collect()
}

fn parse_spec(s: &str) -> Result<DistSpec> {
    let (mu, sigma) = parse_pair(s, "distribution")?;
    DistSpec::new(mu, sigma)
}

fn parse_prior(s: &str) -> Result<ObserverPrior> {
    let v: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Invalid(format!("bad prior field '{p}'"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 {
        return Err(Error::Invalid("prior must be mu0:kappa0:alpha0:beta0".into()));
    }
    let p = ObserverPrior { mu0: v[0], kappa0: v[1], alpha0: v[2], beta0: v[3] };
    p.validate()?;
    Ok(p)
}

/// Rows of 1000 comma-separated probabilities; a non-numeric first line is a header.
fn read_probs_csv(path: &Path) -> Result<Vec<ProbVec>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        match cells {
            Ok(v) => out.push(ProbVec::new(v).map_err(|e| Error::Format(format!("row {}: {e}", i + 1)))?),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::Format(format!("row {}: non-numeric cell", i + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::Format("no probability rows".into()));
    }
    Ok(out)
}

fn matrix_csv(labels: &[f64], rows: &[Vec<f64>]) -> String {
    let mut out = String::from("mu");
    labels.iter().for_each(|l| out.push_str(&format!(",{}", fmt_num(*l))));
    out.push('\n');
    for (l, row) in labels.iter().zip(rows) {
        out.push_str(&fmt_num(*l));
        row.iter().for_each(|v| out.push_str(&format!(",{}", fmt_num(*v))));
        out.push('\n');
    }
    out
}

fn synth_config(name: &str, seed: Option<u64>) -> Result<SynthConfig> {
    let mut cfg = SynthConfig::named(name)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn dispatch(cmd: Command, args: &[String]) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a, args),
        Command::Synth(a) => cmd_synth(a, args),
        Command::Metrics(a) => {
            let probs = read_probs_csv(&a.probs)?;
            let reference = discretized_normal(parse_spec(&a.reference)?)?;
            write_text(&a.out, &BeliefTrajectory::from_probs(probs).to_csv(&reference))?;
            write_manifest(&a.out, false, "metrics", args, None, Value::Null)
        }
        Command::Embed(a) => cmd_embed(a, args),
        Command::Probe(p) => cmd_probe(p, args),
        Command::Geom(g) => cmd_geom(g, args),
        Command::Steer(a) => cmd_steer(a, args),
        Command::Observer(a) => {
            let series: SegmentedSeries = serde_json::from_str(&read_text(&a.series)?)
                .map_err(|e| Error::Format(format!("bad series file: {e}")))?;
            let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
            let traj = observer_trajectory(&values, parse_prior(&a.prior)?)?;
            let reference = discretized_normal(parse_spec(&a.reference)?)?;
            write_text(&a.out, &traj.to_csv(&reference))?;
            write_manifest(&a.out, false, "observer", args, Some(series.seed), Value::Null)
        }
        Command::Reproduce(a) => {
            let id = resolve_experiment(&a.id)?;
            let cfg = synth_config(&a.synth, a.seed)?;
            let bundle = reproduce(id, &cfg)?;
            for (name, text) in &bundle {
                write_text(&a.out.join(name), text)?;
            }
            let files: Vec<&String> = bundle.iter().map(|(n, _)| n).collect();
            // The output directory is left out so bundles compare byte for byte.
            let m = json!({
                "command": "reproduce",
                "experiment": id,
                "synth": a.synth,
                "seed": cfg.seed,
                "config": cfg,
                "versions": { "beliefmap": env!("CARGO_PKG_VERSION"), "container": 1 },
                "files": files,
            });
            write_text(&a.out.join("manifest.json"), &to_json(&m)?)
        }
    }
}

fn cmd_gen(a: GenArgs, args: &[String]) -> Result<()> {
    let series = match (&a.segments, &a.meta) {
        (Some(s), None) => gen_series(&parse_segments(s)?, a.seed)?,
        (None, Some(m)) => {
            let f: Vec<&str> = m.split(':').collect();
            if f.len() != 6 {
                return Err(Error::Invalid("meta must be m:len:muA:sigmaA:muB:sigmaB".into()));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Invalid(format!("bad integer '{s}'")));
            let da = parse_spec(&format!("{}:{}", f[2], f[3]))?;
            let db = parse_spec(&format!("{}:{}", f[4], f[5]))?;
            gen_meta_series(int(f[0])?, int(f[1])?, da, db, a.seed)?
        }
        _ => return Err(Error::Invalid("one of --segments or --meta is required".into())),
    };
    write_text(&a.out, &to_json(&series)?)?;
    if let Some(p) = &a.prompt {
        write_text(p, &format_prompt(&series))?;
    }
    write_manifest(&a.out, false, "gen", args, Some(a.seed), json!({ "length": series.len() }))
}

fn cmd_synth(a: SynthArgs, args: &[String]) -> Result<()> {
    let cfg = synth_config(&a.config, a.seed)?;
    let world = make_world(&cfg)?;
    let set = sample_set(&world, &cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    write_activation_set(&set, a.out.join("acts.bma"))?;
    write_head_params(&world.head, a.out.join("head.bmh"))?;
    write_text(&a.out.join("config.json"), &to_json(&cfg)?)?;
    write_manifest(
        &a.out,
        true,
        "synth",
        args,
        Some(cfg.seed),
        json!({ "head_residual": world.head_residual, "count": set.len() }),
    )
}

fn cmd_embed(a: EmbedArgs, args: &[String]) -> Result<()> {
    let csv = match a.method {
        EmbedMethod::Pca => {
            let acts = a.acts.as_ref().ok_or_else(|| Error::Invalid("pca needs --acts".into()))?;
            let set = read_activation_set(acts)?;
            let emb = pca(&set.rows(), a.k)?;
            let col =
                |f: &dyn Fn(&crate::dataio::ActivationRecord) -> f64| set.records.iter().map(f).collect::<Vec<_>>();
            emb.to_csv(&[
                ("mu", col(&|r| r.mu)),
                ("sigma", col(&|r| r.sigma)),
                ("t", col(&|r| r.t as f64)),
                ("layer", col(&|r| r.layer as f64)),
            ])
        }
        EmbedMethod::Inpca => {
            let (ps, labels) = match (&a.probs, &a.family) {
                (Some(p), None) => {
                    let ps = read_probs_csv(p)?;
                    let idx = (0..ps.len()).map(|i| i as f64).collect();
                    (ps, vec![("index", idx)])
                }
                (None, Some(f)) => {
                    let specs = f.split(',').map(parse_spec).collect::<Result<Vec<_>>>()?;
                    let ps = specs.iter().map(|s| discretized_normal(*s)).collect::<Result<Vec<_>>>()?;
                    (
                        ps,
                        vec![
                            ("mu", specs.iter().map(|s| s.mu).collect()),
                            ("sigma", specs.iter().map(|s| s.sigma).collect()),
                        ],
                    )
                }
                _ => return Err(Error::Invalid("inpca needs exactly one of --probs or --family".into())),
            };
            inpca(&ps, a.k)?.to_csv(&labels)
        }
    };
    write_text(&a.out, &csv)?;
    write_manifest(&a.out, false, "embed", args, None, Value::Null)
}

fn cmd_probe(cmd: ProbeCmd, args: &[String]) -> Result<()> {
    match cmd {
        ProbeCmd::Train(a) => {
            let set = read_activation_set(&a.acts)?;
            let hyper = ProbeHyper {
                weight_decay: a.weight_decay,
                split_fraction: a.split,
                seed: a.seed,
                max_epochs: a.max_epochs,
                center_rows: a.center_rows,
                ..ProbeHyper::default()
            };
            let (field, acc) = match a.variant {
                Variant::Multiclass => train_multiclass(&set, &hyper)?,
                Variant::Ovr => train_ovr(&set, &hyper)?,
            };
            write_probe(&field, &a.out)?;
            write_manifest(
                &a.out,
                false,
                "probe train",
                args,
                Some(a.seed),
                json!({ "test_accuracy": acc, "epochs": field.train_meta.epochs }),
            )
        }
        ProbeCmd::Eval { probe, acts, out } => {
            let acc = accuracy(&read_probe(&probe)?, &read_activation_set(&acts)?)?;
            write_text(&out, &to_json(&json!({ "accuracy": acc }))?)?;
            write_manifest(&out, false, "probe eval", args, None, Value::Null)
        }
        ProbeCmd::Gram { probe, centered, out } => {
            let field = read_probe(&probe)?;
            let k = gram(&field, centered)?;
            write_text(&out, &matrix_csv(&field.class_values, &k))?;
            write_manifest(&out, false, "probe gram", args, None, Value::Null)
        }
        ProbeCmd::Transfer { acts, pair, shifts, seed, out } => {
            let set = read_activation_set(&acts)?;
            let hyper = ProbeHyper { seed, ..ProbeHyper::default() };
            let pts = transfer_curve(&set, parse_pair(&pair, "pair")?, &parse_list(&shifts)?, &hyper)?;
            let mut csv = String::from("shift,accuracy\n");
            pts.iter().for_each(|p| csv.push_str(&format!("{},{}\n", fmt_num(p.shift), fmt_num(p.accuracy))));
            write_text(&out, &csv)?;
            write_manifest(&out, false, "probe transfer", args, Some(seed), Value::Null)
        }
        ProbeCmd::Interp { probe, from, to, alpha, method, out } => {
            let field = read_probe(&probe)?;
            let units = field.unit_rows()?;
            let (ia, ib) = (field.class_index(from)?, field.class_index(to)?);
            let w = match method {
                InterpMethod::Linear => interp_linear(&units[ia], &units[ib], alpha)?,
                InterpMethod::Slerp => interp_slerp(&units[ia], &units[ib], alpha)?,
                InterpMethod::Kernel => interp_kernel(&field, from, to, alpha, RIDGE)?,
            };
            let csv = w.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(",") + "\n";
            write_text(&out, &format!("w\n{csv}"))?;
            write_manifest(&out, false, "probe interp", args, None, Value::Null)
        }
    }
}

fn gram(field: &ProbeField, centered: bool) -> Result<Vec<Vec<f64>>> {
    let k = probe_gram(field, centered)?;
    Ok((0..k.nrows()).map(|i| (0..k.ncols()).map(|j| k[(i, j)]).collect()).collect())
}

fn field_geometry(probe: &Path) -> Result<(ProbeField, FieldGeometry)> {
    let field = read_probe(probe)?;
    let geom = FieldGeometry::new(probe_gram(&field, false)?, field.class_values.clone())?;
    Ok((field, geom))
}

fn cmd_geom(cmd: GeomCmd, args: &[String]) -> Result<()> {
    match cmd {
        GeomCmd::Eig { probe, out } => {
            let (_, geom) = field_geometry(&probe)?;
            write_text(&out, &experiments::spectrum_csv(&geom)?)?;
            write_manifest(&out, false, "geom eig", args, None, json!({ "positive_modes": geom.positive_modes() }))
        }
        GeomCmd::Embed { probe, rank, out } => {
            let (_, geom) = field_geometry(&probe)?;
            write_text(&out, &experiments::field_embedding_csv(&geom, rank)?)?;
            write_manifest(&out, false, "geom embed", args, None, Value::Null)
        }
        GeomCmd::Spline { probe, rank, step, out } => {
            if !(step > 0.0) {
                return Err(Error::Invalid("step must be positive".into()));
            }
            let (field, geom) = field_geometry(&probe)?;
            let curve = fit_curve(&field.class_values, &field_embed(&geom, rank)?)?;
            let (lo, hi) = curve.domain();
            let n = ((hi - lo) / step).floor() as usize;
            let mut csv = String::from("mu");
            (0..rank).for_each(|b| csv.push_str(&format!(",c{b}")));
            csv.push('\n');
            for i in 0..=n {
                let mu = (lo + step * i as f64).min(hi);
                csv.push_str(&fmt_num(mu));
                eval_curve(&curve, mu)?.iter().for_each(|v| csv.push_str(&format!(",{}", fmt_num(*v))));
                csv.push('\n');
            }
            write_text(&out, &csv)?;
            write_manifest(&out, false, "geom spline", args, None, Value::Null)
        }
        GeomCmd::Mixture { synth, anchor, out } => {
            let cfg = SynthConfig::named(&synth)?;
            let report = experiments::mixture_experiment(&cfg, parse_pair(&anchor, "anchor")?)?;
            write_text(&out, &to_json(&report)?)?;
            write_manifest(&out, false, "geom mixture", args, Some(cfg.seed), Value::Null)
        }
    }
}

fn cmd_steer(a: SteerArgs, args: &[String]) -> Result<()> {
    let (set, head, sigma0, seed) = match (&a.acts, &a.head) {
        (Some(acts), Some(head)) => {
            let set = read_activation_set(acts)?;
            let sigma0 = set.records[0].sigma;
            (set, read_head_params(head)?, sigma0, None)
        }
        _ => {
            let cfg = SynthConfig::named(&a.synth)?;
            let lab = Lab::new(&cfg)?;
            (lab.set, lab.world.head, cfg.sigma_grid[0], Some(cfg.seed))
        }
    };
    let slice: Vec<(f64, Vec<f64>)> =
        set.class_centroids().into_iter().filter(|c| c.1 == sigma0).map(|c| (c.0, c.2)).collect();
    let x0 = slice
        .iter()
        .find(|c| c.0 == a.from)
        .map(|c| c.1.clone())
        .ok_or_else(|| Error::Invalid(format!("no class at mu={} sigma={sigma0}", a.from)))?;
    if a.steps == 0 {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    let grid =
        |lo: f64, hi: f64| -> Vec<f64> { (0..=a.steps).map(|i| lo + (hi - lo) * i as f64 / a.steps as f64).collect() };
    let field = || -> Result<ProbeField> {
        match &a.probe {
            Some(p) => read_probe(p),
            None => Ok(train_multiclass(&set, &ProbeHyper::default())?.0),
        }
    };
    let mut results = Value::Null;
    let report = match a.mode {
        SteerMode::Linear => {
            let rows = |mu: f64| -> Vec<Vec<f64>> {
                set.select_mu(mu).iter().filter(|r| r.sigma == sigma0).map(|r| r.vector_f64()).collect()
            };
            let s = diff_means(&rows(a.from), &rows(a.to), a.from, a.to)?;
            evaluate_steering(&[x0], &Scheme::Linear(&s), &grid(0.0, a.alpha_max.unwrap_or(1.0)), &head, sigma0)?
        }
        SteerMode::Spline => {
            let curve = centroid_curve(&slice)?;
            evaluate_steering(
                &[x0],
                &Scheme::Spline { curve: &curve, mu_from: a.from },
                &grid(a.from, a.to),
                &head,
                sigma0,
            )?
        }
        SteerMode::Probe => {
            let f = field()?;
            let s = probe_dir(&f, a.from, a.to)?;
            let span =
                crate::linalg::norm(&crate::linalg::sub(&f.w[f.class_index(a.to)?], &f.w[f.class_index(a.from)?]));
            evaluate_steering(&[x0], &Scheme::Linear(&s), &grid(0.0, a.alpha_max.unwrap_or(2.0 * span)), &head, sigma0)?
        }
        SteerMode::Field => {
            let f = field()?;
            let geom = FieldGeometry::new(probe_gram(&f, false)?, f.class_values.clone())?;
            let st = FieldSteerer::new(&f, &geom, a.rank, RIDGE)?;
            let gain = calibrate_field_gain(&x0, &st, a.from, a.to, &head, a.to, 100.0)?;
            results = json!({ "gain": gain });
            evaluate_steering(
                &[x0],
                &Scheme::Field { steerer: &st, mu_from: a.from, gain },
                &grid(a.from, a.to),
                &head,
                sigma0,
            )?
        }
    };
    write_text(&a.out, &report.to_csv())?;
    write_manifest(&a.out, false, "steer", args, seed, results)
}

/// Files of one experiment bundle, as `(relative name, contents)`.
pub fn reproduce(id: &str, cfg: &SynthConfig) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    let d = |mu: f64, s: f64| DistSpec::new(mu, s);
    match id {
        "fig2_dynamics" => {
            let series = gen_series(&parse_segments("300:100:1000,700:100:1000")?, cfg.seed)?;
            let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
            let traj = observer_trajectory(&values, ObserverPrior::default())?;
            files.push(("series.json".into(), to_json(&series)?));
            files.push(("observer_trajectory.csv".into(), traj.to_csv(&discretized_normal(d(700.0, 100.0)?)?)));
        }
        "fig3_lfp" => {
            let lab = Lab::new(cfg)?;
            let r =
                experiments::lfp_suite(&lab, (300.0, 350.0), &[0.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0])?;
            files.push(("gram.csv".into(), matrix_csv(&r.class_values, &r.gram)));
            let mut t = String::from("shift,accuracy\n");
            r.transfer.iter().for_each(|p| t.push_str(&format!("{},{}\n", fmt_num(p.shift), fmt_num(p.accuracy))));
            files.push(("transfer.csv".into(), t));
            let mut l = String::from("mu,cosine\n");
            r.leave_one_out.iter().for_each(|(m, c)| l.push_str(&format!("{},{}\n", fmt_num(*m), fmt_num(*c))));
            files.push(("leave_one_out.csv".into(), l));
            files.push((
                "summary.json".into(),
                to_json(&json!({
                    "accuracy": r.accuracy,
                    "epochs": r.epochs,
                    "random_probe": r.random_probe,
                    "noise_floor": r.noise_floor,
                }))?,
            ));
        }
        "fig4_geometry" => {
            let lab = Lab::new(cfg)?;
            let (_, geom) = experiments::field_geometry(&lab)?;
            files.push(("spectrum.csv".into(), experiments::spectrum_csv(&geom)?));
            let r = geom.positive_modes().min(3);
            files.push(("field_embedding.csv".into(), experiments::field_embedding_csv(&geom, r)?));
            let mus: Vec<f64> = (0..9).map(|i| 300.0 + 50.0 * i as f64).collect();
            let (arc, stress) = experiments::gaussian_arc(&mus, 100.0, 2)?;
            files.push(("inpca_arc.csv".into(), arc));
            files.push((
                "summary.json".into(),
                to_json(&json!({ "inpca_stress": stress, "positive_modes": geom.positive_modes() }))?,
            ));
        }
        "fig5_primal_steer" => {
            let lab = Lab::new(cfg)?;
            let p = experiments::primal_steering(&lab, 300.0, 700.0, 500.0, 20)?;
            files.push(("steer_linear.csv".into(), p.linear.to_csv()));
            files.push(("steer_spline.csv".into(), p.spline.to_csv()));
            files.push((
                "summary.json".into(),
                to_json(&json!({
                    "alpha": p.alpha,
                    "spline_mu_to": p.spline_mu_to,
                    "linear_off_manifold": p.linear_end().2,
                    "spline_off_manifold": p.spline_end().2,
                }))?,
            ));
        }
        "fig6_field_steer" => {
            let lab = Lab::new(cfg)?;
            let f = experiments::field_steering(&lab, 300.0, 500.0, 700.0, 2, 20)?;
            files.push(("steer_probe.csv".into(), f.probe.to_csv()));
            files.push(("steer_field_unit_gain.csv".into(), f.unit_gain.to_csv()));
            let status = match &f.field {
                Ok((gain, rep)) => {
                    files.push(("steer_field.csv".into(), rep.to_csv()));
                    json!({ "gain": gain, "error": null })
                }
                Err(e) => json!({ "gain": null, "error": e }),
            };
            files.push(("summary.json".into(), to_json(&json!({ "probe_accuracy": f.accuracy, "field": status }))?));
        }
        "figA_convergence" => {
            let series = gen_series(&parse_segments("500:100:500")?, cfg.seed)?;
            let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
            let traj = observer_trajectory(&values, ObserverPrior::default())?;
            files.push(("observer_convergence.csv".into(), traj.to_csv(&discretized_normal(d(500.0, 100.0)?)?)));
        }
        "figB_observer" => {
            let seeds: Vec<u64> = (0..10).map(|i| cfg.seed.wrapping_add(i)).collect();
            let check = experiments::observer_check(
                d(300.0, 100.0)?,
                d(700.0, 100.0)?,
                1000,
                &seeds,
                ObserverPrior::default(),
            )?;
            files.push(("closed_vs_simulated.csv".into(), check.to_csv()));
        }
        "figC_meta" => {
            let series = gen_meta_series(10, 200, d(300.0, 100.0)?, d(700.0, 100.0)?, cfg.seed)?;
            let values: Vec<f64> = series.values.iter().map(|&v| v as f64).collect();
            let (m, s) = crate::observer::observer_moments(&values, ObserverPrior::default())?;
            let mut csv = String::from("t,value,mean,std\n");
            for t in 0..values.len() {
                csv.push_str(&format!("{t},{},{},{}\n", series.values[t], fmt_num(m[t]), fmt_num(s[t])));
            }
            files.push(("meta_observer.csv".into(), csv));
        }
        "fig_mixture" => {
            for (name, cross) in [("additive", 0.0), ("cross", SynthConfig::MIXTURE_CROSS_TERM)] {
                let mcfg = SynthConfig { seed: cfg.seed, ..SynthConfig::mixture(cross) };
                let r = experiments::mixture_experiment(&mcfg, (500.0, 110.0))?;
                let mut csv = String::from("mu,sigma,error\n");
                r.points
                    .iter()
                    .for_each(|p| csv.push_str(&format!("{},{},{}\n", fmt_num(p.0), fmt_num(p.1), fmt_num(p.2))));
                files.push((format!("mixture_{name}.csv"), csv));
                files.push((
                    format!("mixture_{name}.json"),
                    to_json(&json!({
                        "cross_term": r.cross_term,
                        "rms_error": r.rms_error,
                        "noise_floor": r.noise_floor,
                    }))?,
                ));
            }
        }
        other => return Err(Error::Invalid(format!("unknown experiment '{other}'"))),
    }
    Ok(files)
}
