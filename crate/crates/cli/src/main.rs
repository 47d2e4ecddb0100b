use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cast_core::assignment::Coreset;
use cast_core::harness::{
    baseline_select, fidelity, gen_synthetic, read_labels, write_labels, Baseline, FidelityReport,
    SyntheticSpec,
};
use cast_core::optimizer::StepRecord;
use cast_core::{prepare, read_feature_file, write_feature_file, Manifest, Prepared, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cast", version, about = "Bimodal coreset selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic bimodal dataset as two CFM files and a label file.
    Gen(GenArgs),
    /// Select a coreset and write its manifest and loss history.
    Select(SelectArgs),
    /// Score one or more manifests against the full dataset.
    Eval(EvalArgs),
    /// Select a coreset with a reference method.
    Baseline(BaselineArgs),
    /// Write one of the intermediate graphs as an edge list.
    DumpGraph(DumpArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    modes: usize,
    #[arg(long, default_value_t = 60)]
    per_mode: usize,
    #[arg(long, default_value_t = 16)]
    dim_img: usize,
    #[arg(long, default_value_t = 16)]
    dim_txt: usize,
    /// Distance between mode centres in units of the noise level.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    collapse_img: f64,
    #[arg(long, default_value_t = 0.0)]
    collapse_txt: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix; writes `<prefix>.img.cfm`, `<prefix>.txt.cfm`, `<prefix>.labels`.
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    img: PathBuf,
    #[arg(long)]
    txt: PathBuf,
    /// `key = value` run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Coreset size.
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Also write the unified graph to this path.
    #[arg(long)]
    dump_graph: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long = "manifest", required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Pair distance below which two selections count as redundant;
    /// defaults to the relation graph bandwidth.
    #[arg(long)]
    tau_red: Option<f64>,
    #[arg(long, default_value_t = 64)]
    n_proj: usize,
    /// CSV output; the table goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Random,
    Herding,
    Kcenter,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    Img,
    Txt,
    ImgRefined,
    TxtRefined,
    Unified,
    Relation,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value = "unified")]
    which: Which,
    #[arg(long)]
    out: PathBuf,
}

fn load_config(inputs: &Inputs) -> Result<RunConfig> {
    let mut cfg = match &inputs.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &inputs.overrides {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = inputs.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_inputs(inputs: &Inputs) -> Result<Prepared> {
    let cfg = load_config(inputs)?;
    let img = read_feature_file(&inputs.img)?;
    let txt = read_feature_file(&inputs.txt)?;
    Ok(prepare(&img, &txt, &cfg)?)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gen(a: GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        n_modes: a.modes,
        n_per_mode: a.per_mode,
        mode_sizes: None,
        dim_img: a.dim_img,
        dim_txt: a.dim_txt,
        separation: a.separation,
        collapse_img: a.collapse_img,
        collapse_txt: a.collapse_txt,
        noise_sigma: a.noise,
        seed: a.seed,
    };
    let data = gen_synthetic(&spec)?;
    write_feature_file(with_suffix(&a.out, ".img.cfm"), &data.img)?;
    write_feature_file(with_suffix(&a.out, ".txt.cfm"), &data.txt)?;
    write_labels(with_suffix(&a.out, ".labels"), &data.labels)?;
    println!(
        "wrote {} samples to {}.*",
        data.labels.len(),
        a.out.display()
    );
    Ok(())
}

fn select(a: SelectArgs) -> Result<()> {
    let prep = prepare_inputs(&a.inputs)?;
    if let Some(p) = &a.dump_graph {
        write(p, &prep.fusion.unified.to_edge_list())?;
    }
    let sel = prep.select(a.k)?;
    write(&a.out, &sel.coreset.manifest(prep.n(), prep.config.seed))?;
    let mut csv = String::from(StepRecord::CSV_HEADER);
    csv.push('\n');
    for r in &sel.state.history {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    let history = a
        .history
        .unwrap_or_else(|| with_suffix(&a.out, ".loss.csv"));
    write(&history, &csv)?;
    let first = sel.state.history.first().map_or(f64::NAN, |r| r.total);
    let last = sel.state.history.last().map_or(f64::NAN, |r| r.total);
    println!(
        "selected {} of {} samples; loss {first:.6} -> {last:.6}; assignment cost {:.6}",
        sel.coreset.len(),
        prep.n(),
        sel.coreset.total_cost
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let prep = prepare_inputs(&a.inputs)?;
    let labels = a.labels.as_ref().map(read_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != prep.n() {
            bail!("{} labels for {} samples", l.len(), prep.n());
        }
    }
    let tau_red = a.tau_red.unwrap_or(prep.relation.sigma_r);
    let mut csv = format!("{}\n", FidelityReport::CSV_HEADER);
    let mut summary = Vec::new();
    for path in &a.manifests {
        let m = Manifest::read(path)?;
        if m.n != prep.n() {
            bail!(
                "{} was selected from {} samples, data has {}",
                path.display(),
                m.n,
                prep.n()
            );
        }
        let r = fidelity(
            &prep.z.z,
            &m.indices,
            labels.as_deref(),
            tau_red,
            a.n_proj,
            prep.config.seed,
        )?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        csv.push_str(&r.csv_row(&name, m.indices.len()));
        csv.push('\n');
        summary.push(format!(
            "{name}: K={} swd_to_full={:.6} modes_covered={} redundancy_rate={:.4}",
            m.indices.len(),
            r.swd_to_full,
            r.modes_covered,
            r.redundancy_rate
        ));
    }
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    for line in summary {
        eprintln!("{line}");
    }
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<()> {
    let prep = prepare_inputs(&a.inputs)?;
    let method = match a.method {
        Method::Random => Baseline::Random,
        Method::Herding => Baseline::Herding,
        Method::Kcenter => Baseline::KCenter,
    };
    let idx = baseline_select(method, &prep.z.z, a.k, prep.config.seed)?;
    let coreset = Coreset::from_assignment(&idx, vec![0.0; idx.len()], &prep.ids);
    write(&a.out, &coreset.manifest(prep.n(), prep.config.seed))?;
    println!(
        "{} selected {} of {} samples",
        method.name(),
        idx.len(),
        prep.n()
    );
    Ok(())
}

fn dump_graph(a: DumpArgs) -> Result<()> {
    let prep = prepare_inputs(&a.inputs)?;
    let g = match a.which {
        Which::Img => &prep.img_topology.graph,
        Which::Txt => &prep.txt_topology.graph,
        Which::ImgRefined => &prep.refined.img,
        Which::TxtRefined => &prep.refined.txt,
        Which::Unified => &prep.fusion.unified,
        Which::Relation => &prep.relation.graph,
    };
    write(&a.out, &g.to_edge_list())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Select(a) => select(a),
        Command::Eval(a) => eval(a),
        Command::Baseline(a) => baseline(a),
        Command::DumpGraph(a) => dump_graph(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
