//! `report`: CSV tables from one or more run directories.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use polyprompt::corpus::{load_corpus, load_prompts};
use polyprompt::metrics::MetricRecord;
use polyprompt::optimizer::TrajectoryRecord;
use polyprompt::stats::{
    category_design, compare_populations, ols_regress, pca_2d, regression_csv, results_csv, with_mean_rows,
    FeatureEncoding, ResultsRow,
};
use polyprompt::trace::{behavior_vector, language_mix, prompt_vector, BehaviorCategory};
use polyprompt::{BehaviorVector, MetricVector};
use serde::Serialize;
use serde_json::{json, Value};

use super::in_run;
use super::optimize::TRAJECTORY;
use crate::error::{CliError, CliResult};
use crate::rundir::{read_manifest, verify, RunDir, MANIFEST};
use crate::store::{read_store, write_text, UnitRow};
use crate::Ctx;

/// A per-cell store named `{prefix}{model}__{benchmark}__{set}.jsonl`.
#[derive(Debug, Clone)]
struct CellStore {
    root: PathBuf,
    model: String,
    benchmark: String,
    set: String,
    path: PathBuf,
}

/// Units of one response, keyed by question and task language.
type ResponseUnits<'a> = (String, Vec<&'a UnitRow>);

#[derive(Debug, Clone, Serialize)]
pub struct Skipped {
    pub table: String,
    pub reason: String,
}

fn cell_stores(root: &Path, sub: &str, prefix: &str) -> CliResult<Vec<CellStore>> {
    let dir = root.join(sub);
    let mut out = Vec::new();
    let Ok(entries) = std::fs::read_dir(&dir) else { return Ok(out) };
    let mut names: Vec<String> = entries.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    for name in names {
        let Some(stem) = name.strip_suffix(".jsonl").and_then(|s| s.strip_prefix(prefix)) else { continue };
        let parts: Vec<&str> = stem.split("__").collect();
        if let [model, benchmark, set] = parts[..] {
            out.push(CellStore {
                root: root.to_path_buf(),
                model: model.into(),
                benchmark: benchmark.into(),
                set: set.into(),
                path: dir.join(&name),
            });
        }
    }
    Ok(out)
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn setting_label(set: &str) -> String {
    let mut c = set.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn behavior_header(first: &str) -> String {
    let labels: Vec<&str> = BehaviorCategory::ALL.iter().map(|c| c.label()).collect();
    format!("model,benchmark,set,prompt_id,{first},{}\n", labels.join(","))
}

/// Behavior, language-mix and PCA tables from every unit store under `roots`.
pub fn write_trace_tables(roots: &[PathBuf], out: &Path) -> CliResult<(Vec<String>, Vec<Skipped>)> {
    let mut stores = Vec::new();
    for r in roots {
        stores.extend(cell_stores(r, "traces", "units__")?);
    }
    let (mut written, mut skipped) = (Vec::new(), Vec::new());
    if stores.is_empty() {
        return Ok((written, skipped));
    }
    let mut vectors = behavior_header("responses");
    let mut counts = behavior_header("units");
    let mut mix = String::from("model,benchmark,set,task_language,question_language,english,other,tagged_units,untagged_units\n");
    let mut pca = String::from("model,benchmark,set,prompt_id,pc1,pc2\n");
    let mut pca_var = String::from("model,benchmark,set,component,explained_variance_ratio\n");
    for s in &stores {
        let rows: Vec<UnitRow> = read_store(&s.path)?;
        let cell = format!("{},{},{}", s.model, s.benchmark, s.set);
        let mut prompts: Vec<(&str, Vec<ResponseUnits>)> = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for r in &rows {
            let i = *index.entry(&r.prompt_id).or_insert_with(|| {
                prompts.push((&r.prompt_id, Vec::new()));
                prompts.len() - 1
            });
            let key = format!("{}\u{1}{}", r.question_id, r.task_language);
            let responses = &mut prompts[i].1;
            match responses.iter_mut().find(|(k, _)| *k == key) {
                Some((_, units)) => units.push(r),
                None => responses.push((key, vec![r])),
            }
        }
        let mut points = Vec::new();
        for (pid, responses) in &prompts {
            let per_response: Vec<BehaviorVector> = responses
                .iter()
                .map(|(_, units)| behavior_vector(&units.iter().map(|u| u.unit.clone()).collect::<Vec<_>>()))
                .collect();
            let mean = prompt_vector(&per_response).expect("a prompt has responses");
            let mut total = BehaviorVector::zeros();
            for v in &per_response {
                for (a, x) in total.0.iter_mut().zip(v.0) {
                    *a += x;
                }
            }
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            let _ = writeln!(vectors, "{cell},{},{},{}", field(pid), per_response.len(), join(&mean.0));
            let _ = writeln!(counts, "{cell},{},{},{}", field(pid), total.total(), join(&total.0));
            points.push(mean.0.to_vec());
        }
        let summary = language_mix(rows.iter().map(|r| (r.task_language.as_str(), &r.unit.language_tags)));
        for m in &summary.rows {
            let _ = writeln!(
                mix,
                "{cell},{},{},{},{},{},{}",
                m.task_language, m.question_language, m.english, m.other, m.tagged_units, m.untagged_units
            );
        }
        match pca_2d(&points) {
            Ok(r) => {
                for ((pid, _), p) in prompts.iter().zip(&r.points) {
                    let _ = writeln!(pca, "{cell},{},{},{}", field(pid), p[0], p[1]);
                }
                for (k, ratio) in r.explained_variance_ratio.iter().enumerate() {
                    let _ = writeln!(pca_var, "{cell},pc{},{ratio}", k + 1);
                }
            }
            Err(e) => skipped.push(Skipped { table: format!("pca {cell}"), reason: e.to_string() }),
        }
    }
    for (name, text) in [
        ("behavior_vectors.csv", vectors),
        ("behavior_counts.csv", counts),
        ("language_mix.csv", mix),
        ("pca.csv", pca),
        ("pca_variance.csv", pca_var),
    ] {
        write_text(&out.join(name), &text)?;
        written.push(name.to_string());
    }
    Ok((written, skipped))
}

fn mean_raw(rows: &[MetricRecord]) -> Option<MetricVector> {
    let raws: Vec<MetricVector> = rows.iter().map(|r| r.raw).collect();
    MetricVector::mean_of(&raws).ok()
}

fn regression_table(stores: &[(CellStore, Vec<MetricRecord>)], skipped: &mut Vec<Skipped>) -> CliResult<Option<String>> {
    let mut results = Vec::new();
    for (s, rows) in stores.iter().filter(|(s, _)| s.set == "random") {
        let cell = format!("{}/{}", s.model, s.benchmark);
        let corpus_path = s.root.join("records/corpus.jsonl");
        let prompts_path = s.root.join("records/prompts__random.jsonl");
        if !corpus_path.exists() || !prompts_path.exists() {
            skipped.push(Skipped { table: format!("regression {cell}"), reason: "corpus or prompt records missing".into() });
            continue;
        }
        let corpus = load_corpus(&corpus_path).map_err(|e| CliError::validation("store", e.to_string()))?;
        let prompts = load_prompts(&prompts_path).map_err(|e| CliError::validation("store", e.to_string()))?;
        let by_id: HashMap<&str, &MetricRecord> = rows.iter().map(|r| (r.prompt_id.as_str(), r)).collect();
        let present: Vec<_> = prompts.into_iter().filter(|p| by_id.contains_key(p.id.as_str())).collect();
        let design = match category_design::<f64>(&present, &corpus, FeatureEncoding::Presence) {
            Ok(d) => d,
            Err(e) => {
                skipped.push(Skipped { table: format!("regression {cell}"), reason: e.to_string() });
                continue;
            }
        };
        for (d, metric) in MetricVector::NAMES.iter().enumerate() {
            let y: Vec<f64> = present.iter().map(|p| by_id[p.id.as_str()].raw.to_array()[d]).collect();
            match ols_regress(&design, &y) {
                Ok(r) => results.push((format!("{cell}/{metric}"), r)),
                Err(e) => skipped.push(Skipped { table: format!("regression {cell}/{metric}"), reason: e.to_string() }),
            }
        }
    }
    Ok((!results.is_empty()).then(|| regression_csv(&results)))
}

fn trajectory_table(root: &Path) -> CliResult<Option<String>> {
    let path = root.join("records").join(TRAJECTORY);
    if !path.exists() {
        return Ok(None);
    }
    let records: Vec<TrajectoryRecord<f64>> = read_store(&path)?;
    let mut out = String::from("step,best_predicted_overall,population_best_predicted_overall,harvested,best_dev_acc_mean\n");
    for r in &records {
        let pop_best = r.predicted_overall.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let dev = r.best_dev_acc_mean().map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{dev}", r.step, r.best_predicted_overall, pop_best, r.harvested.len());
    }
    Ok(Some(out))
}

fn check_dirs(roots: &[PathBuf]) -> CliResult<()> {
    let mut missing = Vec::new();
    for r in roots {
        if !r.join(MANIFEST).exists() {
            missing.push(format!("{}: {MANIFEST}", r.display()));
        }
        if cell_stores(r, "metrics", "")?.is_empty() {
            missing.push(format!("{}: metrics/<model>__<benchmark>__<set>.jsonl", r.display()));
        }
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::validation("missing_stores", "run directories lack the stores a report needs").with_details(missing))
    }
}

pub fn run(ctx: &Ctx, run_dirs: &[PathBuf], out: Option<&Path>) -> CliResult<Value> {
    let roots: Vec<PathBuf> = if run_dirs.is_empty() { vec![ctx.config()?.run_dir()?] } else { run_dirs.to_vec() };
    check_dirs(&roots)?;
    for r in &roots {
        let m = read_manifest(r)?.expect("checked above");
        if m.active_command.is_none() {
            verify(r, &m)?;
        }
    }
    match out {
        Some(dir) => build(&roots, dir),
        None => {
            let run = RunDir::open_existing(&roots[0], "report")?;
            let dir = run.root.join("reports");
            in_run(run, |_| build(&roots, &dir))
        }
    }
}

fn build(roots: &[PathBuf], out: &Path) -> CliResult<Value> {
    let mut stores = Vec::new();
    for r in roots {
        for s in cell_stores(r, "metrics", "")? {
            let rows: Vec<MetricRecord> = read_store(&s.path)?;
            stores.push((s, rows));
        }
    }
    let mut written = Vec::new();
    let mut skipped = Vec::new();

    let rank = |set: &str| match set {
        "random" => 0,
        "optimized" => 1,
        _ => 2,
    };
    let mut ordered: Vec<&(CellStore, Vec<MetricRecord>)> = stores.iter().collect();
    ordered.sort_by(|(a, _), (b, _)| {
        (&a.model, rank(&a.set), &a.set, &a.benchmark).cmp(&(&b.model, rank(&b.set), &b.set, &b.benchmark))
    });
    let mut rows = Vec::new();
    for (s, records) in ordered {
        match mean_raw(records) {
            Some(metrics) => rows.push(ResultsRow {
                model: s.model.clone(),
                benchmark: s.benchmark.clone(),
                setting: setting_label(&s.set),
                metrics,
            }),
            None => skipped.push(Skipped { table: format!("comparison {}/{}/{}", s.model, s.benchmark, s.set), reason: "empty store".into() }),
        }
    }
    write_text(&out.join("comparison.csv"), &results_csv(&with_mean_rows(&rows)))?;
    written.push("comparison.csv".to_string());

    let mut pairs: BTreeMap<(String, String), [Option<Vec<MetricVector>>; 2]> = BTreeMap::new();
    for (s, records) in &stores {
        let slot = match s.set.as_str() {
            "random" => 0,
            "optimized" => 1,
            _ => continue,
        };
        let entry = pairs.entry((s.model.clone(), s.benchmark.clone())).or_default();
        entry[slot].get_or_insert_with(Vec::new).extend(records.iter().map(|r| r.raw));
    }
    for ((model, bench), [random, optimized]) in &pairs {
        let name = format!("population__{model}__{bench}.csv");
        match (random, optimized) {
            (Some(r), Some(o)) => match compare_populations(r, o) {
                Ok(t) => {
                    write_text(&out.join(&name), &t.to_csv())?;
                    written.push(name);
                }
                Err(e) => skipped.push(Skipped { table: name, reason: e.to_string() }),
            },
            _ => skipped.push(Skipped { table: name, reason: "needs both random and optimized metrics".into() }),
        }
    }

    match regression_table(&stores, &mut skipped)? {
        Some(csv) => {
            write_text(&out.join("regression.csv"), &csv)?;
            written.push("regression.csv".into());
        }
        None => skipped.push(Skipped { table: "regression.csv".into(), reason: "no random-set regression could be fit".into() }),
    }
    if let Some(csv) = trajectory_table(&roots[0])? {
        write_text(&out.join("trajectory.csv"), &csv)?;
        written.push("trajectory.csv".into());
    }
    let (trace_written, trace_skipped) = write_trace_tables(roots, out)?;
    written.extend(trace_written);
    skipped.extend(trace_skipped);
    Ok(json!({ "command": "report", "out": out, "written": written, "skipped": skipped }))
}
