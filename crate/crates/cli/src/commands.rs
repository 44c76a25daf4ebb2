use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;
use bort_core::corpus::{generate_corpus, Split, SplitCounts};
use bort_core::dialog::Database;
use bort_core::eval::{evaluate, round1, sweep_csv, EvalReport, NoiseSweep};
use bort_core::inference::{Mode, Predictor, RunArtifact, RunMeta};
use bort_core::model::checkpoint::{checkpoint_hash, save_params};
use bort_core::model::{ModelConfig, ModelParams, Vocab};
use bort_core::training::{grad_check as run_grad_check, micro_config, EpochLog, TrainConfig, TrainData, Trainer, TrainingSummary};
use serde::Serialize;

use crate::data::{load_model, load_schema, sessions_hash, DataDir, LoadedModel, CHECKPOINT_FILE, DB_FILE, SCHEMA_FILE, VOCAB_FILE};
use crate::{usage, AblateArgs, CliError, CliResult, EvalArgs, GenDataArgs, GradCheckArgs, NoiseSweepArgs, TrainArgs, TrainOverrides, SEED_ENV};

/// Seed from the environment, if set.
pub fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).or_else(|_| usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(dir: &Path) -> CliResult<DataDir> {
    if !dir.is_dir() {
        return usage(format!("data directory {} does not exist", dir.display()));
    }
    Ok(DataDir::load(dir)?)
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<()> {
    if a.train == 0 || a.dev == 0 || a.test == 0 {
        return usage("split counts must be positive");
    }
    if a.entities_per_domain == 0 {
        return usage("--entities-per-domain must be positive");
    }
    let seed = env_seed()?.unwrap_or(a.seed);
    let schema = load_schema(a.schema.as_deref())?;
    let db = Database::generate(&schema, a.entities_per_domain, seed);
    let corpus = generate_corpus(&schema, &db, SplitCounts { train: a.train, dev: a.dev, test: a.test }, seed).context("generating corpus")?;
    corpus.write_dir(&a.out_dir).context("writing corpus")?;
    write(&a.out_dir.join(SCHEMA_FILE), schema.to_json() + "\n")?;
    write(&a.out_dir.join(DB_FILE), db.to_json() + "\n")?;
    println!("wrote {} train / {} dev / {} test sessions to {}", a.train, a.dev, a.test, a.out_dir.display());
    Ok(())
}

/// Config file, then the seed environment variable, then flags.
pub fn build_config(o: &TrainOverrides) -> CliResult<TrainConfig> {
    let mut c = match &o.config {
        Some(p) => TrainConfig::from_file(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = env_seed()? {
        c.seed = s;
    }
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = o.$f { c.$f = v; })* };
    }
    take!(lambda1, lambda2, alpha, learning_rate, weight_decay, batch_size, max_epochs, patience, seed);
    c.use_br &= !o.no_br;
    c.use_dr &= !o.no_dr;
    c.use_user_delex &= !o.no_user_delex;
    c.br_enc_only |= o.br_enc_only;
    c.br_dec_only |= o.br_dec_only;
    c.dr_state_only |= o.dr_state_only;
    c.dr_resp_only |= o.dr_resp_only;
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if o.hidden_size == Some(0) {
        return usage("--hidden-size must be positive");
    }
    Ok(c)
}

pub fn model_config(vocab: &Vocab, config: &TrainConfig, hidden: Option<usize>) -> ModelConfig {
    let mut m = ModelConfig::new(vocab.len(), config.seed);
    if let Some(h) = hidden {
        m.hidden_size = h;
        m.embed_size = h;
        m.attention_size = h;
    }
    m.user_delex = config.use_user_delex;
    m
}

fn epoch_line(e: &EpochLog) -> String {
    format!(
        "epoch {:>3}  loss {:.4} (b {:.4} r {:.4})  dev combined {:.1} inform {:.1} success {:.1} bleu {:.1} jga {:.1}  lr {:.5}  {:.1}s{}",
        e.epoch,
        e.train.l_total,
        e.train.l_b,
        e.train.l_r,
        e.dev.combined,
        e.dev.inform,
        e.dev.success,
        e.dev.bleu,
        e.dev.joint_goal_accuracy,
        e.learning_rate,
        e.wall_secs,
        if e.best { "  *" } else { "" }
    )
}

/// Trains on `data` into `out_dir`: `model.ckpt` (best dev epoch),
/// `vocab.json`, `train_config.txt`, `training_log.jsonl`, `summary.json` and
/// the `resume/` state.
pub fn train_model(data: &DataDir, config: &TrainConfig, hidden: Option<usize>, out_dir: &Path, resume: bool, verbose: bool) -> anyhow::Result<TrainingSummary> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let vocab = Vocab::build(&data.schema, &data.corpus.train);
    let td = TrainData { schema: &data.schema, db: &data.db, vocab: &vocab, train: &data.corpus.train, dev: &data.corpus.dev };
    let resume_dir = out_dir.join("resume");
    let mut trainer = if resume {
        Trainer::resume(td, config.clone(), &resume_dir)?
    } else {
        let params = ModelParams::<f32>::init(model_config(&vocab, config, hidden))?;
        Trainer::new(td, config.clone(), params)?
    };
    write(&out_dir.join(VOCAB_FILE), vocab.to_json() + "\n")?;
    write(&out_dir.join("train_config.txt"), config.to_text())?;
    let mut failure = None;
    trainer.run(|e, t| {
        if verbose {
            eprintln!("{}", epoch_line(e));
        }
        let saved = (|| -> anyhow::Result<()> {
            write(&out_dir.join("training_log.jsonl"), t.state.log.to_jsonl())?;
            save_params(&out_dir.join(CHECKPOINT_FILE), &t.state.best_params)?;
            t.save_resume(&resume_dir)?;
            Ok(())
        })();
        if let Err(err) = saved {
            failure.get_or_insert(err);
        }
    })?;
    if let Some(err) = failure {
        return Err(err);
    }
    let summary = trainer.summary();
    save_params(&out_dir.join(CHECKPOINT_FILE), &trainer.state.best_params)?;
    write(&out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let config = build_config(&a.overrides)?;
    let data = load_data(&a.data_dir)?;
    if a.resume && !a.out_dir.join("resume").join("state.json").is_file() {
        return usage(format!("no resume state under {}", a.out_dir.display()));
    }
    let summary = train_model(&data, &config, a.overrides.hidden_size, &a.out_dir, a.resume, true)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn parse_split(s: &str) -> CliResult<Split> {
    s.parse().map_err(CliError::Usage)
}

/// Rolls out `split` with the given protocol and scores it.
pub fn evaluate_model(model: &LoadedModel, data: &DataDir, split: Split, mode: Mode, p: Option<f64>, seed: u64) -> anyhow::Result<(RunArtifact, EvalReport)> {
    let (schema, db) = (&data.schema, &data.db);
    let sessions = data.corpus.split(split);
    let predictor = Predictor::new(&model.params, &model.vocab, schema, db);
    let runs = predictor.run_sessions(sessions, mode, p.unwrap_or(0.0), seed);
    let report = evaluate(schema, db, &runs, sessions)?;
    let meta = RunMeta { checkpoint_hash: checkpoint_hash(&model.params), corpus_hash: sessions_hash(sessions), mode, p, seed };
    Ok((RunArtifact::new(meta, runs)?, report))
}

fn check_mode(mode: &str, p: Option<f64>) -> CliResult<(Mode, Option<f64>)> {
    let mode: Mode = mode.parse().map_err(CliError::Usage)?;
    match (mode, p) {
        (Mode::EndToEnd, Some(_)) => usage("--p applies to policy_opt only"),
        (Mode::PolicyOpt, None) => Ok((mode, Some(0.0))),
        (Mode::PolicyOpt, Some(p)) if !(0.0..=1.0).contains(&p) => usage("--p must lie in [0, 1]"),
        _ => Ok((mode, p)),
    }
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let split = parse_split(&a.split)?;
    let (mode, p) = check_mode(&a.mode, a.p)?;
    let seed = env_seed()?.unwrap_or(a.seed);
    let data = load_data(&a.data_dir)?;
    let model = load_model(&a.checkpoint)?;
    let (run, report) = evaluate_model(&model, &data, split, mode, p, seed)?;
    let out = a.out_dir.clone().unwrap_or_else(|| {
        let base = crate::data::checkpoint_path(&a.checkpoint);
        let dir = base.parent().map(Path::to_path_buf).unwrap_or_default();
        let suffix = p.filter(|_| mode == Mode::PolicyOpt).map(|p| format!("-p{p}")).unwrap_or_default();
        dir.join(format!("eval-{}-{mode}{suffix}", a.split))
    });
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    run.write(&out.join("run.jsonl")).context("writing run artifact")?;
    write(&out.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    let table = report.to_table();
    write(&out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn grad_check(a: &GradCheckArgs) -> CliResult<()> {
    if a.hidden == 0 || a.hidden > 8 || a.vocab < 12 || a.vocab > 40 {
        return usage("micro model needs hidden in 1..=8 and vocab in 12..=40");
    }
    let config = micro_config(a.vocab, a.hidden, a.seed);
    let report = run_grad_check(&config, a.lambda1, a.lambda2).map_err(|e| CliError::Runtime(e.into()))?;
    for t in &report.terms {
        println!("{:<12} max rel error {:.3e}  ({} entries, worst {}[{}])", t.term, t.max_rel_error, t.checked, t.worst_tensor, t.worst_index);
    }
    println!("unused embedding row gradient {:.1e}", report.unused_row_grad_max);
    println!("max rel error {:.3e}", report.max_rel_error);
    if report.max_rel_error < 1e-4 && report.unused_row_grad_max == 0.0 {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::Runtime(anyhow::anyhow!("gradient check failed")))
    }
}

/// Policy-optimization combined score of each model at each proportion.
pub fn sweep_models(models: &[(String, LoadedModel)], data: &DataDir, split: Split, proportions: &[f64], seed: u64) -> anyhow::Result<Vec<NoiseSweep>> {
    let mut out = Vec::new();
    for (label, model) in models {
        let mut points = Vec::new();
        for &p in proportions {
            let (_, report) = evaluate_model(model, data, split, Mode::PolicyOpt, Some(p), seed)?;
            points.push((p, report.combined));
        }
        out.push(NoiseSweep::new(label, points).map_err(anyhow::Error::msg)?);
    }
    Ok(out)
}

pub fn noise_sweep(a: &NoiseSweepArgs) -> CliResult<()> {
    let split = parse_split(&a.split)?;
    if a.proportions.iter().any(|p| !(0.0..=1.0).contains(p)) || a.proportions.windows(2).any(|w| w[1] <= w[0]) {
        return usage("--proportions must be strictly increasing values in [0, 1]");
    }
    let mut specs = Vec::new();
    for m in &a.models {
        let Some((label, path)) = m.split_once('=') else {
            return usage(format!("--model expects label=checkpoint, got {m:?}"));
        };
        specs.push((label.to_string(), path.to_string()));
    }
    let seed = env_seed()?.unwrap_or(a.seed);
    let data = load_data(&a.data_dir)?;
    let mut models = Vec::new();
    for (label, path) in specs {
        models.push((label, load_model(Path::new(&path))?));
    }
    let sweeps = sweep_models(&models, &data, split, &a.proportions, seed)?;
    let csv = sweep_csv(&sweeps);
    match &a.out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

/// The five component ablations, each with its reference combined score.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(&'static str, TrainConfig, f64)> {
    let with = |br: bool, dr: bool, ud: bool| TrainConfig { use_br: br, use_dr: dr, use_user_delex: ud, ..base.clone() };
    vec![
        ("bort", with(true, true, true), 108.3),
        ("w/o DR", with(true, false, true), 107.3),
        ("w/o BR", with(false, true, true), 106.3),
        ("w/o BR & DR", with(false, false, true), 103.7),
        ("w/o BR & DR & UD", with(false, false, false), 101.8),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub config: String,
    pub inform: f64,
    pub success: f64,
    pub bleu: f64,
    pub combined: f64,
    pub reference_combined: f64,
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<20}{:>8}{:>9}{:>7}{:>10}{:>11}", "config", "inform", "success", "bleu", "combined", "reference");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20}{:>8.1}{:>9.1}{:>7.1}{:>10.1}{:>11.1}",
            r.config,
            round1(r.inform),
            round1(r.success),
            round1(r.bleu),
            round1(r.combined),
            r.reference_combined
        );
    }
    out
}

fn dir_name(label: &str) -> String {
    label.replace("w/o ", "no-").replace(" & ", "-").replace(' ', "-")
}

pub fn ablate(a: &AblateArgs) -> CliResult<()> {
    let split = parse_split(&a.split)?;
    let base = build_config(&a.overrides)?;
    let data = load_data(&a.data_dir)?;
    let mut rows = Vec::new();
    for (label, config, reference) in ablation_configs(&base) {
        let dir = a.out_dir.join(dir_name(label));
        eprintln!("== {label}");
        train_model(&data, &config, a.overrides.hidden_size, &dir, false, true)?;
        let model = load_model(&dir)?;
        let (_, report) = evaluate_model(&model, &data, split, Mode::EndToEnd, None, config.seed)?;
        rows.push(AblationRow {
            config: label.into(),
            inform: report.inform,
            success: report.success,
            bleu: report.bleu,
            combined: report.combined,
            reference_combined: reference,
        });
    }
    let table = ablation_table(&rows);
    write(&a.out_dir.join("ablation.txt"), &table)?;
    write(&a.out_dir.join("ablation.json"), serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n")?;
    print!("{table}");
    Ok(())
}
