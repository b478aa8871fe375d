//! Command-line interface.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::adjust::{adjust, undo, AdjustMode};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, partition, pollute, sweep, Dataset, SweepRow, Variant};
use crate::io::{group_by_gold, read_kb, read_mentions, write_kb, write_mentions, LinkLine};
use crate::link::Linker;
use crate::model::{EvalReport, KnowledgeBase, MentionRecord};
use crate::synth::synth_namesakes;

/// Environment variable naming a config file, used when `--config` is absent.
pub const CONFIG_ENV: &str = "NAMELINK_CONFIG";

#[derive(Debug, Parser)]
#[command(
    name = "namelink",
    version,
    about = "Entity linking with self-adjusting knowledge bases"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Thresholds,
    Rotation,
}

impl From<ModeArg> for AdjustMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Thresholds => AdjustMode::Thresholds,
            ModeArg::Rotation => AdjustMode::Rotation,
        }
    }
}

/// Flags shared by all subcommands. Each overrides the config file.
#[derive(Debug, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Minimum mentions for an entity to enter the KB (M).
    #[arg(long, global = true)]
    pub min_mentions: Option<usize>,
    /// Maximum embeddings kept per entity (N_E).
    #[arg(long, global = true)]
    pub max_embeddings: Option<usize>,
    /// Link threshold (T_L).
    #[arg(long, global = true)]
    pub link_threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub adjust_mode: Option<ModeArg>,
    /// Adjustment margin, must exceed 1.
    #[arg(long, global = true)]
    pub adjust_c: Option<f64>,
    /// Repeat adjustment passes until they stop changing the KB.
    #[arg(long, global = true)]
    pub iterative: bool,
    #[arg(long, global = true)]
    pub pollute_entity_frac: Option<f64>,
    #[arg(long, global = true)]
    pub pollute_mention_frac: Option<f64>,
    /// Lower bound on the similarity denominator.
    #[arg(long, global = true)]
    pub denom_floor: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a KB from a mention file, grouping mentions by gold entity id.
    Build { mentions: PathBuf },
    /// Adjust a KB so namesakes cannot link to each other.
    Adjust {
        kb: PathBuf,
        /// Restore the pre-adjustment KB instead.
        #[arg(long)]
        undo: bool,
    },
    /// Link mentions against a KB, writing one JSON line per mention.
    Link { kb: PathBuf, mentions: PathBuf },
    /// Count linking errors of a KB on labelled mentions.
    Evaluate { kb: PathBuf, mentions: PathBuf },
    /// Evaluate a grid of build parameters and link thresholds.
    Sweep(SweepArgs),
    /// Add wrong mentions to a seeded subset of entities.
    ///
    /// Wrong-pool mention ids are `<host entity id>/<anything>`.
    Pollute { mentions: PathBuf, wrong_pool: PathBuf },
    /// Write a synthetic namesake benchmark to the `--out` directory.
    Synth,
}

#[derive(Debug, Default, Args)]
pub struct SweepArgs {
    /// Mentions for building KBs; without it a synthetic benchmark is used.
    #[arg(long, requires = "eval_mentions")]
    pub kb_mentions: Option<PathBuf>,
    #[arg(long, requires = "kb_mentions")]
    pub eval_mentions: Option<PathBuf>,
    #[arg(long, requires = "kb_mentions")]
    pub wrong_pool: Option<PathBuf>,
    /// Also evaluate a polluted KB.
    #[arg(long)]
    pub pollute: bool,
    /// Also evaluate an adjusted KB.
    #[arg(long)]
    pub adjust: bool,
}

impl GlobalArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.min_mentions {
            cfg.min_mentions = v;
        }
        if let Some(v) = self.max_embeddings {
            cfg.max_embeddings = v;
        }
        if let Some(v) = self.link_threshold {
            cfg.link_threshold = v;
        }
        if let Some(v) = self.adjust_mode {
            cfg.adjust.mode = v.into();
        }
        if let Some(v) = self.adjust_c {
            cfg.adjust.c = v;
        }
        if self.iterative {
            cfg.adjust.iterative = true;
        }
        if let Some(v) = self.pollute_entity_frac {
            cfg.pollution.entity_fraction = v;
        }
        if let Some(v) = self.pollute_mention_frac {
            cfg.pollution.mention_fraction = v;
        }
        if let Some(v) = self.denom_floor {
            cfg.denom_floor = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn require_out(out: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    out.clone()
        .ok_or_else(|| Error::InvalidParam(format!("--out is required for {what}")))
}

fn load_mentions(path: &Path) -> Result<Vec<MentionRecord>> {
    read_mentions(BufReader::new(File::open(path)?))
}

fn load_kb(path: &Path) -> Result<KnowledgeBase> {
    read_kb(BufReader::new(File::open(path)?))
}

fn save_kb(path: &Path, kb: &KnowledgeBase) -> Result<()> {
    write_kb(BufWriter::new(File::create(path)?), kb)
}

/// Output sink: the `--out` file if given, else stdout.
fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

/// One row of an evaluation or sweep CSV report.
#[derive(Debug, Serialize)]
pub struct CsvRow {
    pub variant: String,
    pub min_mentions: usize,
    pub max_embeddings: usize,
    pub link_threshold: f64,
    pub kb_size: usize,
    pub n_familiar: usize,
    pub n_stranger: usize,
    pub n_familiar_wrong: usize,
    pub n_familiar_unlinked: usize,
    pub n_stranger_linked: usize,
    pub f_fw: Option<f64>,
    pub f_fn: Option<f64>,
    pub f_sl: Option<f64>,
}

impl CsvRow {
    fn new(variant: String, m: usize, ne: usize, tl: f64, kb_size: usize, r: &EvalReport) -> Self {
        Self {
            variant,
            min_mentions: m,
            max_embeddings: ne,
            link_threshold: tl,
            kb_size,
            n_familiar: r.n_familiar,
            n_stranger: r.n_stranger,
            n_familiar_wrong: r.n_familiar_wrong,
            n_familiar_unlinked: r.n_familiar_unlinked,
            n_stranger_linked: r.n_stranger_linked,
            f_fw: r.f_fw,
            f_fn: r.f_fn,
            f_sl: r.f_sl,
        }
    }
}

impl From<&SweepRow> for CsvRow {
    fn from(r: &SweepRow) -> Self {
        Self::new(
            r.variant.to_string(),
            r.min_mentions,
            r.max_embeddings,
            r.link_threshold,
            r.kb_size,
            &r.report,
        )
    }
}

pub fn write_csv<W: Write>(writer: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.json` into `--out`, or the CSV to stdout.
fn emit_report<T: Serialize>(out: &Option<PathBuf>, stem: &str, rows: &[CsvRow], json: &T) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_csv(BufWriter::new(File::create(dir.join(format!("{stem}.csv")))?), rows)?;
            let mut f = BufWriter::new(File::create(dir.join(format!("{stem}.json")))?);
            serde_json::to_writer_pretty(&mut f, json)?;
            f.write_all(b"\n")?;
            f.flush()?;
            Ok(())
        }
        None => write_csv(std::io::stdout().lock(), rows),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.resolve()?;
    let out = &cli.global.out;
    match cli.command {
        Command::Build { mentions } => cmd_build(&cfg, &mentions, &require_out(out, "build")?),
        Command::Adjust { kb, undo } => cmd_adjust(&cfg, &kb, &require_out(out, "adjust")?, undo),
        Command::Link { kb, mentions } => cmd_link(&cfg, &kb, &mentions, out),
        Command::Evaluate { kb, mentions } => cmd_evaluate(&cfg, &kb, &mentions, out),
        Command::Sweep(args) => cmd_sweep(&cfg, &args, out),
        Command::Pollute { mentions, wrong_pool } => cmd_pollute(&cfg, &mentions, &wrong_pool, out),
        Command::Synth => cmd_synth(&cfg, &require_out(out, "synth")?),
    }
}

fn cmd_build(cfg: &RunConfig, mentions: &Path, out: &Path) -> Result<()> {
    let records = load_mentions(mentions)?;
    if records.is_empty() {
        eprintln!("warning: {} holds no mentions; writing an empty KB", mentions.display());
    }
    let (groups, skipped) = group_by_gold(records);
    if !skipped.is_empty() {
        eprintln!("skipped {} mentions without a gold entity id", skipped.len());
    }
    let (kb, summary) = KnowledgeBase::build(&groups, cfg.build_params())?;
    save_kb(out, &kb)?;

    eprintln!("entities: {}", summary.built);
    eprintln!("rejected groups: {}", summary.rejected.len());
    let mut ts: Vec<f64> = kb.entities.values().map(|e| e.entity_threshold).collect();
    if !ts.is_empty() {
        ts.sort_by(f64::total_cmp);
        eprintln!(
            "entity threshold T: min {:.4} median {:.4} max {:.4}",
            ts[0],
            ts[ts.len() / 2],
            ts[ts.len() - 1]
        );
    }
    if !summary.nonpositive_threshold.is_empty() {
        eprintln!(
            "entities with T <= 0 (similarity uses the floor): {}",
            summary.nonpositive_threshold.len()
        );
    }
    Ok(())
}

fn cmd_adjust(cfg: &RunConfig, kb_path: &Path, out: &Path, restore: bool) -> Result<()> {
    let mut kb = load_kb(kb_path)?;
    if restore {
        undo(&mut kb);
        eprintln!("restored pre-adjustment KB");
    } else {
        let report = adjust(&mut kb, &cfg.adjust)?;
        for (i, pass) in report.passes.iter().enumerate() {
            eprintln!("pass {}: {} changes", i + 1, pass.changes);
            if pass.degenerate > 0 {
                eprintln!("pass {}: {} parallel pairs skipped", i + 1, pass.degenerate);
            }
        }
    }
    save_kb(out, &kb)
}

fn cmd_link(cfg: &RunConfig, kb_path: &Path, mentions: &Path, out: &Option<PathBuf>) -> Result<()> {
    let kb = load_kb(kb_path)?;
    let records = load_mentions(mentions)?;
    let linker = Linker::with_floor(&kb, cfg.denom_floor);
    let mut w = sink(out)?;
    for m in &records {
        serde_json::to_writer(&mut w, &LinkLine::from(&linker.link(m, cfg.link_threshold)))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, kb_path: &Path, mentions: &Path, out: &Option<PathBuf>) -> Result<()> {
    let kb = load_kb(kb_path)?;
    let records = load_mentions(mentions)?;
    let (familiar, stranger) = partition(&kb, &records)?;
    let report = evaluate(&kb, &familiar, &stranger, cfg.link_threshold, cfg.denom_floor);
    let variant = if kb.adjusted { Variant::Adjusted } else { Variant::Clean };
    let row = CsvRow::new(
        variant.to_string(),
        kb.params.min_mentions,
        kb.params.max_embeddings,
        cfg.link_threshold,
        kb.len(),
        &report,
    );
    emit_report(out, "evaluate", std::slice::from_ref(&row), &row)
}

/// Groups wrong-pool mentions by the host id before the first `/` of their
/// mention id.
fn group_wrong_pool(records: Vec<MentionRecord>) -> Result<BTreeMap<String, Vec<MentionRecord>>> {
    let mut pools: BTreeMap<String, Vec<MentionRecord>> = BTreeMap::new();
    for m in records {
        let host = match m.mention_id.split_once('/') {
            Some((host, _)) if !host.is_empty() => host.to_string(),
            _ => {
                return Err(Error::InvalidParam(format!(
                    "wrong-pool mention id `{}` lacks a `<host>/` prefix",
                    m.mention_id
                )))
            }
        };
        pools.entry(host).or_default().push(m);
    }
    Ok(pools)
}

#[derive(Serialize)]
struct SweepJson<'a> {
    seed: u64,
    spec: &'a crate::eval::SweepSpec,
    rows: &'a [SweepRow],
}

fn cmd_sweep(cfg: &RunConfig, args: &SweepArgs, out: &Option<PathBuf>) -> Result<()> {
    let mut cfg = cfg.clone();
    cfg.sweep.pollute |= args.pollute;
    cfg.sweep.adjust |= args.adjust;
    let spec = cfg.sweep_spec();

    let dataset = match (&args.kb_mentions, &args.eval_mentions) {
        (Some(kb_path), Some(eval_path)) => {
            let (kb_groups, _) = group_by_gold(load_mentions(kb_path)?);
            let wrong_pools = match &args.wrong_pool {
                Some(p) => group_wrong_pool(load_mentions(p)?)?,
                None if spec.pollution.is_some() => {
                    return Err(Error::InvalidParam(
                        "--pollute with --kb-mentions needs --wrong-pool".into(),
                    ))
                }
                None => BTreeMap::new(),
            };
            Dataset {
                kb_groups,
                eval_mentions: load_mentions(eval_path)?,
                wrong_pools,
            }
        }
        _ => synth_namesakes(&cfg.synth())?.into_dataset(),
    };

    let rows = sweep(&dataset, &spec)?;
    let csv_rows: Vec<CsvRow> = rows.iter().map(CsvRow::from).collect();
    let json = SweepJson {
        seed: cfg.seed,
        spec: &spec,
        rows: &rows,
    };
    emit_report(out, "sweep", &csv_rows, &json)
}

fn cmd_pollute(cfg: &RunConfig, mentions: &Path, wrong_pool: &Path, out: &Option<PathBuf>) -> Result<()> {
    let (groups, skipped) = group_by_gold(load_mentions(mentions)?);
    let pools = group_wrong_pool(load_mentions(wrong_pool)?)?;
    let polluted = pollute(&groups, &pools, &cfg.pollution());
    let mut added = 0;
    let mut records = Vec::new();
    for (id, ms) in polluted {
        let genuine = groups[&id].len();
        for (k, mut m) in ms.into_iter().enumerate() {
            if k >= genuine {
                m.gold_entity_id = Some(id.clone());
                m.source = "polluted".into();
                added += 1;
            }
            records.push(m);
        }
    }
    records.extend(skipped);
    eprintln!("added {added} wrong mentions");
    write_mentions(sink(out)?, &records)
}

fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let data = synth_namesakes(&cfg.synth())?;
    std::fs::create_dir_all(dir)?;
    let save = |name: &str, records: &[MentionRecord]| -> Result<()> {
        write_mentions(BufWriter::new(File::create(dir.join(name))?), records)
    };
    let kb: Vec<MentionRecord> = data.kb_groups.values().flatten().cloned().collect();
    save("kb_mentions.jsonl", &kb)?;
    let mut eval = data.familiar.clone();
    eval.extend(data.stranger.iter().cloned());
    save("eval_mentions.jsonl", &eval)?;
    let wrong: Vec<MentionRecord> = data
        .wrong_pools
        .iter()
        .flat_map(|(host, ms)| {
            ms.iter().map(move |m| MentionRecord {
                mention_id: format!("{host}/{}", m.mention_id),
                ..m.clone()
            })
        })
        .collect();
    save("wrong_pool.jsonl", &wrong)?;
    eprintln!(
        "wrote {} KB mentions over {} entities, {} evaluation mentions, {} wrong-pool mentions",
        kb.len(),
        data.kb_groups.len(),
        eval.len(),
        wrong.len()
    );
    Ok(())
}
