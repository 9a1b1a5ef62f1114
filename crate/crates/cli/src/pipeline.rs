//! The five commands. Each reads its inputs from the output directory,
//! checks their hashes against the manifests and rewrites its own outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use factprobe::corpus::{
    content_hash, convert_multifc, filter_nonveracity, generate_leakage_corpus, load_corpus, normalize_record,
    stratified_split, write_corpus, ClaimRecord, LabelScheme, SplitBundle,
};
use factprobe::eval::{
    ablation_csv, ablation_curve, evaluate, metrics_csv, metrics_markdown, AblationCurve, Direction, EvalMode,
    MetricReport,
};
use factprobe::probes::{
    fit_probe, probe_name, Checkpoint, Family, FeatureAssets, FitReport, Hyper, InputRegime, Probe,
};
use factprobe::seed;
use rayon::prelude::*;

use crate::artifacts::{
    corpus_bytes, file_sha256, read_json, sha256_hex, write_file, write_json, CheckpointEntry, CheckpointManifest,
    Layout, PreparedManifest, SplitEntry, MANIFEST, MANIFEST_VERSION,
};
use crate::config::{DatasetConfig, DatasetSource, ExperimentConfig};
use crate::error::{CliError, CliResult};

const SPLITS: [&str; 3] = ["train", "val", "test"];

fn log(msg: impl AsRef<str>) {
    eprintln!("[factprobe] {}", msg.as_ref());
}

/// Reads a dataset from its source, validates it and drops non-veracity
/// labels. Returns the kept records and the raw count.
pub fn ingest(ds: &DatasetConfig) -> CliResult<(Vec<ClaimRecord>, usize)> {
    let raw = match &ds.source {
        DatasetSource::Jsonl(path) => load_corpus(path, &ds.scheme)?,
        DatasetSource::MultiFc { tsv, snippets, prefix } => convert_multifc(tsv, snippets, prefix)?
            .into_iter()
            .map(|r| normalize_record(r, &ds.scheme))
            .collect::<factprobe::Result<Vec<_>>>()?,
        DatasetSource::Synthetic { spec, seed } => generate_leakage_corpus(spec, *seed)?,
    };
    let n_raw = raw.len();
    if n_raw == 0 {
        return Err(factprobe::Error::Empty(format!("dataset {} has no records", ds.name)).into());
    }
    let kept = filter_nonveracity(raw, &ds.scheme);
    if kept.is_empty() {
        return Err(factprobe::Error::Empty(format!("dataset {} has no veracity-labelled records", ds.name)).into());
    }
    Ok((kept, n_raw))
}

fn split_seed(cfg: &ExperimentConfig, dataset: &str) -> u64 {
    seed::derive(cfg.seed, &[seed::tag("split"), seed::tag(dataset)])
}

fn label_counts(records: &[ClaimRecord], scheme: &LabelScheme) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = scheme.labels.iter().map(|l| (l.clone(), 0)).collect();
    for r in records {
        *counts.entry(r.label.clone()).or_default() += 1;
    }
    counts
}

/// `prepare`: filter, split and write every dataset. Nothing is written
/// unless every dataset reads cleanly.
pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Vec<PreparedManifest>> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Usage("the configuration lists no datasets".into()));
    }
    let mut staged = Vec::new();
    for ds in &cfg.datasets {
        let (records, n_raw) = ingest(ds)?;
        let seed = split_seed(cfg, &ds.name);
        let splits = stratified_split(&records, seed, cfg.split)?;
        staged.push((ds, splits, n_raw, records.len(), seed));
    }
    let layout = Layout::new(&cfg.out);
    let mut manifests = Vec::new();
    for (ds, splits, n_raw, total, seed) in staged {
        let dir = layout.prepared(&ds.name);
        let scheme_text = ds.scheme.to_toml_string();
        let scheme_sha256 = write_file(&dir.join("scheme.toml"), scheme_text.as_bytes())?;
        let mut entries = Vec::new();
        for (name, part) in splits.parts() {
            let file = format!("{name}.jsonl");
            write_corpus(&dir.join(&file), part)?;
            entries.push(SplitEntry {
                split: name.to_string(),
                file,
                records: part.len(),
                content_hash: content_hash(part),
                sha256: sha256_hex(&corpus_bytes(part)),
                counts: label_counts(part, &ds.scheme),
            });
        }
        let manifest = PreparedManifest {
            version: MANIFEST_VERSION,
            dataset: ds.name.clone(),
            source: ds.source.describe(),
            scheme: ds.scheme.name.clone(),
            scheme_fingerprint: ds.scheme.fingerprint(),
            scheme_sha256,
            seed,
            ratios: splits.ratios,
            input_records: n_raw,
            excluded_records: n_raw - total,
            total,
            splits: entries,
        };
        write_json(&dir.join(MANIFEST), &manifest)?;
        log(format!(
            "prepared {}: {} records ({} excluded) -> {}/{}/{}",
            ds.name,
            total,
            n_raw - total,
            splits.train.len(),
            splits.val.len(),
            splits.test.len()
        ));
        manifests.push(manifest);
    }
    Ok(manifests)
}

/// A prepared dataset read back and checked against its manifest.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: String,
    pub scheme: LabelScheme,
    pub splits: SplitBundle,
    pub manifest: PreparedManifest,
}

pub fn load_prepared(cfg: &ExperimentConfig, ds: &DatasetConfig) -> CliResult<Prepared> {
    let dir = Layout::new(&cfg.out).prepared(&ds.name);
    let manifest: PreparedManifest = read_json(
        &dir.join(MANIFEST),
        &format!("prepared dataset {}; run `prepare` first", ds.name),
    )?;
    if manifest.version != MANIFEST_VERSION {
        return Err(CliError::Stale(format!(
            "manifest version {} for {}",
            manifest.version, ds.name
        )));
    }
    let scheme_path = dir.join("scheme.toml");
    if file_sha256(&scheme_path)? != manifest.scheme_sha256 {
        return Err(CliError::Stale(format!(
            "{} changed after prepare",
            scheme_path.display()
        )));
    }
    let scheme = LabelScheme::load(&scheme_path)?;
    if scheme.fingerprint() != manifest.scheme_fingerprint || scheme.fingerprint() != ds.scheme.fingerprint() {
        return Err(CliError::Stale(format!(
            "label scheme of {} differs from the one it was prepared with",
            ds.name
        )));
    }
    let mut parts: Vec<Vec<ClaimRecord>> = Vec::new();
    for name in SPLITS {
        let entry = manifest
            .split(name)
            .ok_or_else(|| CliError::Stale(format!("manifest of {} has no {name} split", ds.name)))?;
        let path = dir.join(&entry.file);
        if file_sha256(&path)? != entry.sha256 {
            return Err(CliError::Stale(format!("{} changed after prepare", path.display())));
        }
        let records = load_corpus(&path, &scheme)?;
        if content_hash(&records) != entry.content_hash {
            return Err(CliError::Stale(format!(
                "records in {} do not match the manifest",
                path.display()
            )));
        }
        parts.push(records);
    }
    let test = parts.pop().unwrap();
    let val = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    Ok(Prepared {
        name: ds.name.clone(),
        scheme,
        splits: SplitBundle {
            train,
            val,
            test,
            ratios: manifest.ratios,
            seed: manifest.seed,
        },
        manifest,
    })
}

/// One fitted grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub dataset: String,
    pub family: Family,
    pub regime: InputRegime,
    pub cell: usize,
    pub hyper: Hyper,
    pub epochs: Option<usize>,
    pub fit: FitReport,
    pub selected: bool,
}

pub const GRID_HEADER: &str = "dataset,family,regime,cell,config,epochs,val_micro_f1,val_macro_f1,val_score,selected";

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut out = String::from(GRID_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
            r.dataset,
            r.family,
            r.regime,
            r.cell,
            r.hyper.describe(),
            r.epochs.map(|e| e.to_string()).unwrap_or_default(),
            r.fit.val_micro_f1,
            r.fit.val_macro_f1,
            r.fit.val_score,
            r.selected
        );
    }
    out
}

fn seeded(hyper: &Hyper, seed: u64) -> Hyper {
    match hyper {
        Hyper::Forest(c) => Hyper::Forest(factprobe::forest::ForestConfig { seed, ..c.clone() }),
        Hyper::Neural(c) => Hyper::Neural(factprobe::neural::TrainConfig { seed, ..c.clone() }),
    }
}

/// Seed shared by every grid cell of one (dataset, family, regime), so the
/// grid compares hyperparameters under the same initialization stream.
fn cell_seed(cfg: &ExperimentConfig, dataset: &str, family: Family, regime: InputRegime) -> u64 {
    seed::derive(
        cfg.seed,
        &[
            seed::tag(dataset),
            seed::tag(family.as_str()),
            seed::tag(regime.as_str()),
        ],
    )
}

/// Summary of one trained (dataset, family, regime).
#[derive(Clone, Debug)]
pub struct TrainedProbe {
    pub dataset: String,
    pub probe: Probe,
    pub fit: FitReport,
    pub grid: Vec<GridRow>,
    pub checkpoint: PathBuf,
}

/// `train`: grid search per (dataset, family, regime) and checkpoint the
/// best cell. Ties on the selection score go to the earlier cell.
pub fn train(cfg: &ExperimentConfig) -> CliResult<Vec<TrainedProbe>> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Usage("the configuration lists no datasets".into()));
    }
    let layout = Layout::new(&cfg.out);
    let mut out = Vec::new();
    for ds in &cfg.datasets {
        let prepared = load_prepared(cfg, ds)?;
        let settings = factprobe::probes::FeatureSettings {
            seed: seed::derive(cfg.seed, &[seed::tag("features"), seed::tag(&ds.name)]),
            ..cfg.features.clone()
        };
        let assets = FeatureAssets::build(&prepared.splits.train, &settings)?;
        let train_hash = prepared
            .manifest
            .split("train")
            .map(|e| e.content_hash.clone())
            .unwrap_or_default();
        let mut entries = Vec::new();
        for &family in &cfg.families {
            for &regime in &cfg.regimes {
                let name = probe_name(family, regime);
                let s = cell_seed(cfg, &ds.name, family, regime);
                let hypers: Vec<Hyper> = cfg.candidates(family).iter().map(|h| seeded(h, s)).collect();
                let fit_one = |h: &Hyper| {
                    fit_probe(
                        family,
                        regime,
                        &prepared.splits,
                        &prepared.scheme,
                        &assets,
                        &cfg.transformer,
                        h,
                    )
                };
                let fitted: Vec<(Probe, FitReport)> = if cfg.parallel {
                    hypers.par_iter().map(fit_one).collect::<factprobe::Result<_>>()?
                } else {
                    hypers.iter().map(fit_one).collect::<factprobe::Result<_>>()?
                };
                let mut best = 0;
                for (i, (_, f)) in fitted.iter().enumerate() {
                    if f.val_score > fitted[best].1.val_score {
                        best = i;
                    }
                }
                let grid: Vec<GridRow> = fitted
                    .iter()
                    .enumerate()
                    .map(|(i, (p, f))| GridRow {
                        dataset: ds.name.clone(),
                        family,
                        regime,
                        cell: i,
                        hyper: hypers[i].clone(),
                        epochs: p.history.as_ref().map(|h| h.epochs.len()),
                        fit: f.clone(),
                        selected: i == best,
                    })
                    .collect();
                write_file(&layout.grid_csv(&ds.name, &name), grid_csv(&grid).as_bytes())?;
                let (probe, fit) = fitted.into_iter().nth(best).expect("grid is not empty");
                let path = layout.checkpoint(&ds.name, &name);
                Checkpoint::new(probe.clone()).save(&path)?;
                entries.push(CheckpointEntry {
                    probe: name.clone(),
                    family: family.to_string(),
                    regime: regime.to_string(),
                    file: format!("{name}.json"),
                    sha256: file_sha256(&path)?,
                    hyper: probe.hyper.describe(),
                    val_score: fit.val_score,
                });
                log(format!(
                    "trained {}/{name}: {} cells, best {} (val micro {:.3}, macro {:.3})",
                    ds.name,
                    grid.len(),
                    probe.hyper.describe(),
                    fit.val_micro_f1,
                    fit.val_macro_f1
                ));
                out.push(TrainedProbe {
                    dataset: ds.name.clone(),
                    probe,
                    fit,
                    grid,
                    checkpoint: path,
                });
            }
        }
        update_checkpoint_manifest(&layout, &ds.name, &train_hash, entries)?;
    }
    Ok(out)
}

/// Merges new entries into the dataset's checkpoint manifest, dropping
/// entries from an older training split.
fn update_checkpoint_manifest(
    layout: &Layout,
    dataset: &str,
    train_hash: &str,
    entries: Vec<CheckpointEntry>,
) -> CliResult<()> {
    let path = layout.checkpoints(dataset).join(MANIFEST);
    let mut manifest = match read_json::<CheckpointManifest>(&path, "checkpoint manifest") {
        Ok(m) if m.train_hash == train_hash && m.version == MANIFEST_VERSION => m,
        _ => CheckpointManifest {
            version: MANIFEST_VERSION,
            dataset: dataset.to_string(),
            train_hash: train_hash.to_string(),
            checkpoints: Vec::new(),
        },
    };
    for e in entries {
        manifest.checkpoints.retain(|c| c.probe != e.probe);
        manifest.checkpoints.push(e);
    }
    let order = |c: &CheckpointEntry| {
        let f = c.family.parse::<Family>().ok();
        let r = c.regime.parse::<InputRegime>().ok();
        (f, r)
    };
    manifest.checkpoints.sort_by_key(order);
    write_json(&path, &manifest)?;
    Ok(())
}

/// Loads the checkpoint of (dataset, family, regime) and checks it against
/// the prepared data and the checkpoint manifest.
pub fn load_probe(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    family: Family,
    regime: InputRegime,
) -> CliResult<Probe> {
    let layout = Layout::new(&cfg.out);
    let name = probe_name(family, regime);
    let path = layout.checkpoint(&prepared.name, &name);
    if !path.exists() {
        return Err(CliError::Missing(format!(
            "no checkpoint for family {family}, regime {regime} on {} ({}); run `train` first",
            prepared.name,
            path.display()
        )));
    }
    let manifest: CheckpointManifest = read_json(
        &layout.checkpoints(&prepared.name).join(MANIFEST),
        "checkpoint manifest",
    )?;
    let entry = manifest.checkpoints.iter().find(|c| c.probe == name).ok_or_else(|| {
        CliError::Stale(format!(
            "{name} is not listed in the checkpoint manifest of {}",
            prepared.name
        ))
    })?;
    if file_sha256(&path)? != entry.sha256 {
        return Err(CliError::Stale(format!("{} changed after training", path.display())));
    }
    let ckpt = Checkpoint::load(&path)?;
    let train_hash = prepared
        .manifest
        .split("train")
        .map(|e| e.content_hash.as_str())
        .unwrap_or_default();
    if ckpt.train_hash != train_hash || manifest.train_hash != train_hash {
        return Err(CliError::Stale(format!(
            "checkpoint {name} was trained on a different {} train split; rerun `train`",
            prepared.name
        )));
    }
    if ckpt.scheme_fingerprint != prepared.scheme.fingerprint() {
        return Err(CliError::Stale(format!("checkpoint {name} uses another label scheme")));
    }
    Ok(ckpt.probe)
}

fn qualified(dataset: &str, probe: &Probe) -> String {
    format!("{dataset}/{}", probe.name())
}

/// `evaluate`: every probe on its own test split (within) and on the test
/// split of every other dataset whose labels can be merged (cross).
pub fn evaluate_all(cfg: &ExperimentConfig) -> CliResult<Vec<MetricReport>> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Usage("the configuration lists no datasets".into()));
    }
    let prepared: Vec<Prepared> = cfg
        .datasets
        .iter()
        .map(|d| load_prepared(cfg, d))
        .collect::<CliResult<_>>()?;
    let mut reports = Vec::new();
    for home in &prepared {
        for &family in &cfg.families {
            for &regime in &cfg.regimes {
                let probe = load_probe(cfg, home, family, regime)?;
                for target in &prepared {
                    let mode = if target.name == home.name {
                        EvalMode::Within
                    } else if home.scheme.has_merge_map() && target.scheme.has_merge_map() {
                        EvalMode::Cross
                    } else {
                        continue;
                    };
                    let mut r = evaluate(&probe, &target.splits.test, &target.scheme, &target.name, mode)?;
                    r.probe = qualified(&home.name, &probe);
                    reports.push(r);
                }
            }
        }
    }
    let dir = Layout::new(&cfg.out).reports();
    write_file(&dir.join("metrics.csv"), metrics_csv(&reports).as_bytes())?;
    write_file(&dir.join("metrics.md"), metrics_markdown(&reports).as_bytes())?;
    write_json(&dir.join("metrics.json"), &reports)?;
    log(format!("wrote {} report rows to {}", reports.len(), dir.display()));
    Ok(reports)
}

/// `ablate`: top-down and bottom-up evidence removal for every probe that
/// reads evidence, on its own test split.
pub fn ablate_all(cfg: &ExperimentConfig) -> CliResult<Vec<AblationCurve>> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Usage("the configuration lists no datasets".into()));
    }
    let mut curves = Vec::new();
    for ds in &cfg.datasets {
        let prepared = load_prepared(cfg, ds)?;
        for &family in &cfg.families {
            for &regime in cfg.regimes.iter().filter(|r| r.uses_evidence()) {
                let probe = load_probe(cfg, &prepared, family, regime)?;
                for direction in [Direction::TopDown, Direction::BottomUp] {
                    let mut c = ablation_curve(&probe, &prepared.splits.test, &prepared.scheme, direction)?;
                    c.probe = qualified(&ds.name, &probe);
                    curves.push(c);
                }
            }
        }
    }
    if curves.is_empty() {
        return Err(CliError::Usage(
            "no selected regime reads evidence; nothing to ablate".into(),
        ));
    }
    let path = Layout::new(&cfg.out).reports().join("ablation.csv");
    write_file(&path, ablation_csv(&curves).as_bytes())?;
    log(format!("wrote {} ablation curves to {}", curves.len(), path.display()));
    Ok(curves)
}

/// `synth`: writes the `[synth]` corpus and its label scheme.
pub fn synth(cfg: &ExperimentConfig, name: &str) -> CliResult<PathBuf> {
    let records = generate_leakage_corpus(&cfg.synth, cfg.seed)?;
    let dir = Layout::new(&cfg.out).synth();
    let path = dir.join(format!("{name}.jsonl"));
    write_corpus(&path, &records)?;
    write_file(
        &dir.join(format!("{name}.scheme.toml")),
        cfg.synth.scheme().to_toml_string().as_bytes(),
    )?;
    log(format!(
        "wrote {} synthetic records to {}",
        records.len(),
        path.display()
    ));
    Ok(path)
}

/// `prepare`, `train`, `evaluate` and `ablate` in order.
pub fn run_all(cfg: &ExperimentConfig) -> CliResult<(Vec<MetricReport>, Vec<AblationCurve>)> {
    prepare(cfg)?;
    train(cfg)?;
    let reports = evaluate_all(cfg)?;
    let curves = if cfg.regimes.iter().any(|r| r.uses_evidence()) {
        ablate_all(cfg)?
    } else {
        Vec::new()
    };
    Ok((reports, curves))
}
