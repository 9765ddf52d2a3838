//! Command-line front end: flat TOML experiment configs, command dispatch and
//! CSV emission.
//!
//! Every output file starts with one comment line of the form
//! `# ltcds <version> config=<sha256 prefix> seed=<master seed>` and contains
//! no timestamps, so reruns with the same config and seed are byte-identical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiment::{realize, CellSpec, Realization};
use crate::ltcodec::DEFAULT_PAYLOAD_LEN;
use crate::query::{cell_seed, sweep, SourceCount, SweepGrid, SweepTable, DEFAULT_TRIALS};
use crate::soliton::{storage_degree_pmf, DistributionKind};
use crate::walksim::{Algorithm, Phase};

pub const DEFAULT_C1: f64 = 3.0;
pub const DEFAULT_C2: usize = 50;
pub const DEFAULT_C3: f64 = 10.0;
pub const DEFAULT_C0: f64 = 0.1;
pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_SEEDS: usize = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;

pub const SWEEP_HEADER: &str = "algorithm,n,k,L,dist,c1,c2,c3,eta,h,trials,successes,ps,ci95,seed_group";
pub const ESTIMATE_HEADER: &str = "node_id,dn_u,n_hat,k_hat";

#[derive(Debug, Parser)]
#[command(name = "ltcds", version, about = "LT-coded distributed storage experiments on random geometric graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (flat TOML key/value file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One storage run; writes a run summary.
    Run,
    /// Decoding-probability sweep over a parameter grid.
    Sweep,
    /// Per-node size and source-count estimates of one inferred-size run.
    Estimate,
    /// A code-degree or storage-degree pmf as `degree,probability`.
    DumpDist,
}

/// A config value given either once or as a list.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

/// TOML number that accepts both `5` and `5.0`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Real {
    Int(i64),
    Float(f64),
}

impl Real {
    fn get(self) -> f64 {
        match self {
            Real::Int(v) => v as f64,
            Real::Float(v) => v,
        }
    }
}

/// Which pmf `dump-dist` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PmfKind {
    /// The code-degree distribution itself.
    Soliton,
    /// The storage-degree law induced by the code-degree distribution.
    Storage,
}

/// Experiment config as written in the file. `algorithm`, `n`, `L` and one of
/// `k` / `k_fraction` are required; everything else has a default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Option<OneOrMany<String>>,
    pub n: Option<OneOrMany<usize>>,
    pub k: Option<OneOrMany<usize>>,
    pub k_fraction: Option<OneOrMany<Real>>,
    #[serde(rename = "L")]
    pub side_length: Option<OneOrMany<Real>>,
    /// `ideal` or `robust`.
    pub distribution: Option<OneOrMany<String>>,
    pub c0: Option<Real>,
    pub delta: Option<Real>,
    pub c1: Option<OneOrMany<Real>>,
    pub c2: Option<OneOrMany<usize>>,
    pub c3: Option<OneOrMany<Real>>,
    pub eta: Option<OneOrMany<Real>>,
    pub trials: Option<usize>,
    pub seeds: Option<usize>,
    pub payload_len: Option<usize>,
    pub seed: Option<u64>,
    pub per_seed_rows: Option<bool>,
    /// Per-node CSV written by `run` next to the summary.
    pub nodes_out: Option<PathBuf>,
    pub pmf: Option<PmfKind>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value
            .as_ref()
            .ok_or_else(|| Error::Config(format!("missing required field `{name}`")))
    }

    fn algorithms(&self) -> Result<Vec<Algorithm>> {
        Self::required(&self.algorithm, "algorithm")?
            .to_vec()
            .iter()
            .map(|a| {
                a.parse()
                    .map_err(|_| Error::Config(format!("field `algorithm`: unknown value `{a}`")))
            })
            .collect()
    }

    fn source_counts(&self) -> Result<Vec<SourceCount>> {
        match (&self.k, &self.k_fraction) {
            (Some(_), Some(_)) => Err(Error::Config("give only one of `k` and `k_fraction`".into())),
            (Some(k), None) => Ok(k.to_vec().into_iter().map(SourceCount::Exact).collect()),
            (None, Some(f)) => Ok(f.to_vec().into_iter().map(|f| SourceCount::Fraction(f.get())).collect()),
            (None, None) => Err(Error::Config("missing required field `k` (or `k_fraction`)".into())),
        }
    }

    fn distributions(&self) -> Result<Vec<DistributionKind>> {
        let names = self
            .distribution
            .as_ref()
            .map_or_else(|| vec!["ideal".to_string()], OneOrMany::to_vec);
        let c0 = self.c0.map_or(DEFAULT_C0, Real::get);
        let delta = self.delta.map_or(DEFAULT_DELTA, Real::get);
        names
            .iter()
            .map(|name| match name.as_str() {
                "ideal" => Ok(DistributionKind::Ideal),
                "robust" => Ok(DistributionKind::Robust { c0, delta }),
                other => Err(Error::Config(format!("field `distribution`: unknown value `{other}`"))),
            })
            .collect()
    }

    fn reals(value: &Option<OneOrMany<Real>>, default: f64) -> Vec<f64> {
        value
            .as_ref()
            .map_or_else(|| vec![default], |v| v.to_vec().into_iter().map(Real::get).collect())
    }

    /// The full grid described by this config.
    pub fn grid(&self, master_seed: u64) -> Result<SweepGrid> {
        let grid = SweepGrid {
            algorithms: self.algorithms()?,
            ns: Self::required(&self.n, "n")?.to_vec(),
            source_counts: self.source_counts()?,
            side_lengths: Self::required(&self.side_length, "L")?
                .to_vec()
                .into_iter()
                .map(Real::get)
                .collect(),
            distributions: self.distributions()?,
            c1s: Self::reals(&self.c1, DEFAULT_C1),
            c2s: self.c2.as_ref().map_or_else(|| vec![DEFAULT_C2], OneOrMany::to_vec),
            c3s: Self::reals(&self.c3, DEFAULT_C3),
            etas: self
                .eta
                .as_ref()
                .map_or_else(Vec::new, |v| v.to_vec().into_iter().map(Real::get).collect()),
            trials: self.trials.unwrap_or(DEFAULT_TRIALS),
            seeds: self.seeds.unwrap_or(DEFAULT_SEEDS),
            payload_len: self.payload_len.unwrap_or(DEFAULT_PAYLOAD_LEN),
            master_seed,
            per_seed_rows: self.per_seed_rows.unwrap_or(false),
        };
        Ok(grid)
    }

    /// The single cell of a `run` or `estimate` config. List-valued fields
    /// must hold exactly one value.
    pub fn single_cell(&self, master_seed: u64) -> Result<CellSpec> {
        let grid = self.grid(master_seed)?;
        let lens = [
            ("algorithm", grid.algorithms.len()),
            ("n", grid.ns.len()),
            ("k", grid.source_counts.len()),
            ("L", grid.side_lengths.len()),
            ("distribution", grid.distributions.len()),
            ("c1", grid.c1s.len()),
            ("c2", grid.c2s.len()),
            ("c3", grid.c3s.len()),
        ];
        if let Some((name, _)) = lens.iter().find(|(_, len)| *len != 1) {
            return Err(Error::Config(format!("field `{name}` must hold exactly one value for this command")));
        }
        let cell = grid.cells()[0];
        cell.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cell)
    }

    /// Rejects grid points that can never run, before any simulation starts.
    fn check_grid(&self, grid: &SweepGrid) -> Result<()> {
        if grid.etas.is_empty() {
            return Err(Error::Config("missing required field `eta`".into()));
        }
        if let Some(eta) = grid.etas.iter().find(|e| !(**e > 0.0)) {
            return Err(Error::Config(format!("field `eta`: values must be positive, got {eta}")));
        }
        for cell in grid.cells() {
            if cell.k > cell.n {
                continue;
            }
            cell.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// Everything a command needs besides the config itself.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    /// Raw config text, hashed into the provenance line.
    pub config_text: String,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Invocation {
    pub fn master_seed(&self) -> u64 {
        self.seed.or(self.config.seed).unwrap_or(0)
    }

    fn provenance(&self) -> String {
        let digest = Sha256::digest(self.config_text.as_bytes());
        let hash: String = digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        format!(
            "# ltcds {} config={hash} seed={}\n",
            env!("CARGO_PKG_VERSION"),
            self.master_seed()
        )
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Main output, provenance line included.
    pub output: String,
    /// Extra files to write, provenance line included.
    pub side_files: Vec<(PathBuf, String)>,
    pub exit_code: i32,
}

fn dist_label(kind: DistributionKind) -> String {
    match kind {
        DistributionKind::Ideal => "ideal".into(),
        DistributionKind::Robust { c0, delta } => format!("robust:{c0}:{delta}"),
    }
}

fn csv_body<S: Serialize>(rows: impl IntoIterator<Item = S>) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        writer.serialize(row)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Serializes through `Display`, which never uses exponent notation.
fn plain<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn plain_opt<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

#[derive(Serialize)]
struct SweepRecord {
    algorithm: &'static str,
    n: usize,
    k: usize,
    #[serde(rename = "L")]
    #[serde(serialize_with = "plain")]
    side_length: f64,
    dist: String,
    #[serde(serialize_with = "plain")]
    c1: f64,
    c2: usize,
    #[serde(serialize_with = "plain")]
    c3: f64,
    #[serde(serialize_with = "plain")]
    eta: f64,
    h: usize,
    trials: usize,
    successes: usize,
    #[serde(serialize_with = "plain_opt")]
    ps: Option<f64>,
    #[serde(serialize_with = "plain_opt")]
    ci95: Option<f64>,
    seed_group: String,
}

pub fn sweep_csv(table: &SweepTable) -> Result<String> {
    csv_body(table.rows.iter().map(|r| SweepRecord {
        algorithm: r.cell.algorithm.name(),
        n: r.cell.n,
        k: r.cell.k,
        side_length: r.cell.side_length,
        dist: dist_label(r.cell.distribution),
        c1: r.cell.c1,
        c2: r.cell.c2,
        c3: r.cell.c3,
        eta: r.eta,
        h: r.h,
        trials: r.trials,
        successes: r.successes,
        ps: r.feasible.then_some(r.p_s),
        ci95: r.feasible.then_some(r.ci95),
        seed_group: r.seed_group.clone(),
    }))
}

#[derive(Serialize)]
struct RunRecord {
    algorithm: &'static str,
    n: usize,
    k: usize,
    #[serde(rename = "L")]
    #[serde(serialize_with = "plain")]
    side_length: f64,
    dist: String,
    #[serde(serialize_with = "plain")]
    c1: f64,
    c2: usize,
    #[serde(serialize_with = "plain")]
    c3: f64,
    seed: u64,
    graph_attempts: u32,
    transmissions: u64,
    rounds: u64,
    #[serde(serialize_with = "plain")]
    mean_storage_degree: f64,
    nodes_in_inference: usize,
}

#[derive(Serialize)]
struct NodeRecord {
    node_id: usize,
    dn_u: usize,
    phase: &'static str,
    code_degree: Option<usize>,
    storage_degree: usize,
    decided: usize,
    #[serde(serialize_with = "plain_opt")]
    n_hat: Option<f64>,
    k_hat: Option<usize>,
    storage_ids: String,
    payload: String,
}

#[derive(Serialize)]
struct EstimateRecord {
    node_id: usize,
    dn_u: usize,
    #[serde(serialize_with = "plain_opt")]
    n_hat: Option<f64>,
    k_hat: Option<usize>,
}

#[derive(Serialize)]
struct PmfRecord {
    degree: usize,
    #[serde(serialize_with = "plain")]
    probability: f64,
}

fn phase_name(phase: Phase) -> &'static str {
    match phase {
        Phase::Inference => "inference",
        Phase::Encoding => "encoding",
        Phase::Done => "done",
    }
}

fn run_csv(cell: &CellSpec, seed: u64, real: &Realization) -> Result<String> {
    let snap = &real.snapshot;
    let degrees = snap.storage_degrees();
    csv_body([RunRecord {
        algorithm: cell.algorithm.name(),
        n: cell.n,
        k: cell.k,
        side_length: cell.side_length,
        dist: dist_label(cell.distribution),
        c1: cell.c1,
        c2: cell.c2,
        c3: cell.c3,
        seed,
        graph_attempts: real.graph_attempts,
        transmissions: snap.transmissions,
        rounds: snap.rounds,
        mean_storage_degree: degrees.iter().sum::<usize>() as f64 / degrees.len() as f64,
        nodes_in_inference: snap.phases.iter().filter(|&&p| p == Phase::Inference).count(),
    }])
}

fn nodes_csv(real: &Realization) -> Result<String> {
    let snap = &real.snapshot;
    csv_body((0..snap.node_count()).map(|u| {
        let packet = &snap.packets[u];
        NodeRecord {
            node_id: u,
            dn_u: real.graph.degree(u),
            phase: phase_name(snap.phases[u]),
            code_degree: snap.code_degrees[u],
            storage_degree: packet.degree(),
            decided: snap.decided[u],
            n_hat: snap.estimates[u].map(|e| e.n_hat),
            k_hat: snap.estimates[u].map(|e| e.k_hat),
            storage_ids: packet.ids().iter().map(usize::to_string).collect::<Vec<_>>().join(" "),
            payload: packet.payload().to_hex(),
        }
    }))
}

fn estimate_csv(real: &Realization) -> Result<String> {
    let snap = &real.snapshot;
    csv_body((0..snap.node_count()).map(|u| EstimateRecord {
        node_id: u,
        dn_u: real.graph.degree(u),
        n_hat: snap.estimates[u].map(|e| e.n_hat),
        k_hat: snap.estimates[u].map(|e| e.k_hat),
    }))
}

fn pmf_csv(config: &ExperimentConfig) -> Result<String> {
    let k = match ExperimentConfig::required(&config.k, "k")? {
        OneOrMany::One(k) => *k,
        OneOrMany::Many(_) => return Err(Error::Config("field `k` must hold exactly one value".into())),
    };
    let kinds = config.distributions()?;
    let [kind] = kinds.as_slice() else {
        return Err(Error::Config("field `distribution` must hold exactly one value".into()));
    };
    let dist = kind.build(k).map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<PmfRecord> = match config.pmf.unwrap_or(PmfKind::Soliton) {
        PmfKind::Soliton => (1..=k)
            .map(|d| PmfRecord {
                degree: d,
                probability: dist.prob(d),
            })
            .collect(),
        PmfKind::Storage => storage_degree_pmf(&dist)
            .pmf()
            .iter()
            .enumerate()
            .map(|(i, &p)| PmfRecord {
                degree: i,
                probability: p,
            })
            .collect(),
    };
    csv_body(records)
}

/// Runs one command without touching the filesystem.
pub fn execute(inv: &Invocation) -> Result<Outcome> {
    let seed = inv.master_seed();
    let header = inv.provenance();
    let mut side_files = Vec::new();
    let mut exit_code = EXIT_OK;
    let body = match inv.command {
        Command::Run => {
            let cell = inv.config.single_cell(seed)?;
            let real = realize(&cell, cell_seed(seed, &cell, 0))?;
            if let Some(path) = &inv.config.nodes_out {
                side_files.push((path.clone(), format!("{header}{}", nodes_csv(&real)?)));
            }
            run_csv(&cell, seed, &real)?
        }
        Command::Estimate => {
            let cell = inv.config.single_cell(seed)?;
            if cell.algorithm != Algorithm::LtcdsII {
                return Err(Error::Config("field `algorithm`: `estimate` needs ltcds2".into()));
            }
            let real = realize(&cell, cell_seed(seed, &cell, 0))?;
            estimate_csv(&real)?
        }
        Command::Sweep => {
            let grid = inv.config.grid(seed)?;
            inv.config.check_grid(&grid)?;
            let table = sweep(&grid)?;
            if table.all_infeasible() {
                exit_code = EXIT_INFEASIBLE;
            }
            sweep_csv(&table)?
        }
        Command::DumpDist => pmf_csv(&inv.config)?,
    };
    Ok(Outcome {
        output: format!("{header}{body}"),
        side_files,
        exit_code,
    })
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parameter(_) => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

fn read_config(path: Option<&Path>) -> Result<(ExperimentConfig, String)> {
    let path = path.ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok((ExperimentConfig::parse(&text)?, text))
}

fn dispatch(cli: Cli) -> Result<i32> {
    let (config, config_text) = read_config(cli.config.as_deref())?;
    let inv = Invocation {
        command: cli.command,
        config,
        config_text,
        seed: cli.seed,
        out: cli.out,
    };
    let outcome = match cli.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("--jobs: {e}")))?
            .install(|| execute(&inv))?,
        None => execute(&inv)?,
    };
    match &inv.out {
        Some(path) => fs::write(path, &outcome.output)?,
        None => print!("{}", outcome.output),
    }
    for (path, text) in &outcome.side_files {
        fs::write(path, text)?;
    }
    Ok(outcome.exit_code)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ltcds: {e}");
            exit_code_for(&e)
        }
    }
}
