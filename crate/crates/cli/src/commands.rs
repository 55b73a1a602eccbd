use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use countlab::constructions::{self, binary};
use countlab::eval::{self, SweepReport};
use countlab::langdata::{self, DatasetConfig, Sample};
use countlab::skcm::{self, SkcmDef};
use countlab::training::{self, TrainConfig};
use countlab::{numerics, Language, LstmOutput, Precision, Recognizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::{Command, Common};

/// A flag combination rejected before any computation; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Text or pretty JSON, always newline-terminated.
fn render(common: &Common, value: Value, text: String) -> String {
    if common.json {
        let mut s = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        s.push('\n');
        s
    } else {
        text
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn load_model(path: &Path) -> Result<Recognizer> {
    Recognizer::from_json(&read(path)?).with_context(|| format!("invalid model file {}", path.display()))
}

fn load_samples(path: &Path) -> Result<Vec<Sample>> {
    langdata::read_samples(&read(path)?).with_context(|| format!("invalid sample file {}", path.display()))
}

/// Builder name (`anbn`, `anbncn`, `blocks:<m>`) or a JSON machine file.
fn load_machine(spec: &str) -> Result<(SkcmDef, Option<Language>)> {
    match spec.parse::<Language>() {
        Ok(Language::AnBn) => Ok((skcm::build_anbn(), Some(Language::AnBn))),
        Ok(Language::AnBnCn) => Ok((skcm::build_anbncn(), Some(Language::AnBnCn))),
        Ok(Language::Blocks(m)) => Ok((skcm::build_a1_to_am(m)?, Some(Language::Blocks(m)))),
        Ok(Language::Palindrome) => Err(usage("palindromes are not recognized by a counter machine")),
        Err(_) => {
            let path = Path::new(spec);
            if !path.exists() {
                return Err(usage(format!("`{spec}` is neither a machine name (anbn|anbncn|blocks:<m>) nor a file")));
            }
            let m = SkcmDef::from_json(&read(path)?).with_context(|| format!("invalid machine file {spec}"))?;
            Ok((m, None))
        }
    }
}

fn word_arg(spec: &str) -> Result<Vec<char>> {
    langdata::expand_shorthand(spec).map_err(usage)
}

fn word_string(w: &[char]) -> String {
    w.iter().collect()
}

pub fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::GenData { data, seed, eval, out, common } => {
            let cfg = DatasetConfig {
                n_min: data.n_min,
                n_max: data.n_max,
                count: data.count,
                dev_fraction: data.dev_fraction,
                seed,
            };
            let mut files = Vec::new();
            if eval {
                if data.count == 0 {
                    return Err(usage("--count must be positive"));
                }
                let set = langdata::generate_eval_set(data.lang, data.count, seed)?;
                files.push(("eval", out.join("eval.tsv"), set));
            } else {
                let (train, dev) = langdata::generate_training_set(data.lang, &cfg)?;
                files.push(("train", out.join("train.tsv"), train));
                files.push(("dev", out.join("dev.tsv"), dev));
            }
            let mut text = String::new();
            let mut report = serde_json::Map::new();
            for (name, path, set) in &files {
                write(path, &langdata::write_samples(set))?;
                let positives = set.iter().filter(|s| s.label).count();
                writeln!(text, "{name}: {} samples ({positives} positive) -> {}", set.len(), path.display())?;
                report.insert(
                    name.to_string(),
                    json!({"path": path.display().to_string(), "samples": set.len(), "positives": positives}),
                );
            }
            report.insert("lang".into(), json!(data.lang.to_string()));
            report.insert("seed".into(), json!(seed));
            Ok(render(&common, Value::Object(report), text))
        }

        Command::Train {
            cell,
            hidden,
            data,
            train_file,
            dev_file,
            lr,
            epochs,
            init_scale,
            clip_norm,
            readout_hidden,
            seed,
            precision,
            out,
            common,
        } => {
            let p = precision.precision()?;
            let cfg =
                TrainConfig { learning_rate: lr, max_epochs: epochs, seed, init_scale, precision: p, clip_norm, readout_hidden };
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            if hidden == 0 {
                return Err(usage("--hidden must be positive"));
            }
            let (train_set, dev_set, data_meta) = match (train_file, dev_file) {
                (Some(t), Some(d)) => (
                    load_samples(&t)?,
                    load_samples(&d)?,
                    json!({"train_file": t.display().to_string(), "dev_file": d.display().to_string()}),
                ),
                _ => {
                    let dc = DatasetConfig {
                        n_min: data.n_min,
                        n_max: data.n_max,
                        count: data.count,
                        dev_fraction: data.dev_fraction,
                        seed,
                    };
                    let (t, d) = langdata::generate_training_set(data.lang, &dc)?;
                    (t, d, json!({"lang": data.lang.to_string(), "dataset": dc}))
                }
            };
            let alphabet = data.lang.alphabet();
            let report = training::train(cell, hidden, &alphabet, &train_set, &dev_set, &cfg)?;
            if let Some(path) = &out {
                write(path, &training::checkpoint_json(&report, &cfg, data_meta))?;
            }
            let mut text = format!(
                "cell {} hidden {hidden}: {} epochs, best dev accuracy {:.4} at epoch {}{}\n",
                cell.name(),
                report.epochs_run,
                report.best_dev_accuracy(),
                report.best_epoch,
                if report.reached_full_dev { " (reached 100%)" } else { "" },
            );
            if let Some(path) = &out {
                writeln!(text, "model -> {}", path.display())?;
            }
            let value = json!({
                "cell": cell.name(),
                "hidden": hidden,
                "seed": seed,
                "epochs_run": report.epochs_run,
                "reached_full_dev": report.reached_full_dev,
                "best_epoch": report.best_epoch,
                "best_dev_accuracy": report.best_dev_accuracy(),
                "dev_accuracy_history": report.dev_accuracy_history,
                "loss_history": report.loss_history,
                "model": out.map(|p| p.display().to_string()),
            });
            Ok(render(&common, value, text))
        }

        Command::Eval { model, testset, lang, count, seed, precision, common } => {
            let p = precision.precision()?;
            let samples = match (&testset, seed) {
                (Some(path), _) => load_samples(path)?,
                (None, Some(seed)) => {
                    if count == 0 {
                        return Err(usage("--count must be positive"));
                    }
                    langdata::generate_eval_set(lang, count, seed)?
                }
                (None, None) => return Err(usage("eval needs --testset or --seed")),
            };
            if samples.is_empty() {
                return Err(usage("the test set is empty"));
            }
            let r = load_model(&model)?;
            let acc = eval::accuracy_at(&r, &samples, p)?;
            let text = format!("accuracy {acc:.4} on {} samples\n", samples.len());
            Ok(render(&common, json!({"accuracy": acc, "samples": samples.len()}), text))
        }

        Command::Sweep { model, lang, limit, show, precision, common } => {
            let p = precision.precision()?;
            if limit == 0 {
                return Err(usage("--limit must be at least 1"));
            }
            let r = load_model(&model)?;
            let report = eval::sweep_recognizer(&r, lang, limit, p)?;
            let text = sweep_text(&report, show);
            Ok(render(&common, serde_json::to_value(&report)?, text))
        }

        Command::Trace { model, word, csv, svg, theta, precision, common } => {
            let p = precision.precision()?;
            if !(theta >= 0.0) {
                return Err(usage("--theta must be non-negative"));
            }
            let w = word_arg(&word)?;
            let r = load_model(&model)?;
            let tr = eval::trace(&r, &w, p)?;
            if let Some(path) = &csv {
                write(path, &eval::trace_csv(&tr))?;
            }
            if let Some(path) = &svg {
                write(path, &eval::trace_svg(&tr))?;
            }
            // Counting dimensions are only defined for block words.
            let dims = eval::detect_counting_dims(&tr, &w, theta).ok();
            let mut text = format!("{} steps, {} dimensions\n", tr.len(), r.cell.hidden_dim());
            match &dims {
                Some(d) => writeln!(text, "counting dimensions: {d:?}")?,
                None => writeln!(text, "counting dimensions: n/a (not a block word)")?,
            }
            let value = json!({
                "steps": tr.len(),
                "hidden_dim": r.cell.hidden_dim(),
                "counting_dims": dims,
                "csv": csv.map(|p| p.display().to_string()),
                "svg": svg.map(|p| p.display().to_string()),
                "final_state": tr.last().map(|t| t.state.clone()),
            });
            Ok(render(&common, value, text))
        }

        Command::Construct { kind, lang, machine, weight, k, max_n, verify, precision, out, common } => {
            let p = precision.precision()?;
            let (model, summary) = match kind.as_str() {
                "lstm" | "lstm-id" | "irnn" => {
                    let (m, verify_lang) = match &machine {
                        Some(spec) => load_machine(spec)?,
                        None => match lang {
                            Language::Palindrome => return Err(usage("palindromes have no counting construction")),
                            l => (machine_for(l)?, Some(l)),
                        },
                    };
                    let r = match kind.as_str() {
                        "lstm" => constructions::counting_lstm(&m, LstmOutput::Tanh)?,
                        "lstm-id" => constructions::counting_lstm(&m, LstmOutput::Identity)?,
                        _ => constructions::counting_irnn(&m)?,
                    };
                    let summary = match (verify, verify_lang) {
                        (0, _) | (_, None) => Value::Null,
                        (limit, Some(l)) => {
                            let s = eval::sweep_recognizer(&r, l, limit, p)?;
                            let first = s.anomalies.first();
                            json!({
                                "verified_up_to": s.max_correct_n,
                                "first_failure": first.map(|a| a.n),
                                "failure_mode": first.map_or("none within the sweep limit".to_string(), |a| a.description.clone()),
                            })
                        }
                    };
                    (r, summary)
                }
                "srnn" => {
                    let rep = constructions::saturating_srnn(weight, p, max_n)?;
                    (rep.params.clone(), serde_json::to_value(rep.summary())?)
                }
                "gru" => {
                    let rep = constructions::dividing_gru(k, p, max_n)?;
                    (rep.params.clone(), serde_json::to_value(rep.summary())?)
                }
                other => return Err(usage(format!("unknown construction `{other}` (lstm|lstm-id|irnn|srnn|gru)"))),
            };
            if let Some(path) = &out {
                write(path, &model.to_json())?;
            }
            let mut text = format!("{} construction, hidden dimension {}\n", kind, model.cell.hidden_dim());
            if let Some(obj) = summary.as_object() {
                writeln!(text, "verified up to {}", obj["verified_up_to"])?;
                match obj["first_failure"].as_u64() {
                    Some(n) => writeln!(text, "first failure at {n}: {}", obj["failure_mode"].as_str().unwrap_or(""))?,
                    None => writeln!(text, "no failure found")?,
                }
            }
            if let Some(path) = &out {
                writeln!(text, "model -> {}", path.display())?;
            }
            let value = json!({
                "kind": kind,
                "hidden_dim": model.cell.hidden_dim(),
                "report": summary,
                "model": out.map(|p| p.display().to_string()),
            });
            Ok(render(&common, value, text))
        }

        Command::SkcmRun { machine, word, common } => {
            let (m, _) = load_machine(&machine)?;
            let w = word_arg(&word)?;
            let config = m.run(&w)?;
            let accept = m.is_accepting(&config);
            let verdict = if accept { "accept" } else { "reject" };
            let value = json!({
                "word": word_string(&w),
                "accept": accept,
                "state": m.states()[config.state],
                "counters": config.counters,
            });
            Ok(render(&common, value, format!("{verdict}\n")))
        }

        Command::SkcmCollide { machine, m: len, letters, cap, suffixes, suffix_len, seed, common } => {
            if suffixes > 0 && seed.is_none() {
                return Err(usage("--suffixes needs --seed"));
            }
            let (m, _) = load_machine(&machine)?;
            let letters: Vec<char> = match letters {
                Some(l) => l.chars().collect(),
                None => m.alphabet().iter().take(2).copied().collect(),
            };
            let bound = skcm::config_count_bound(&m, len as u64)?;
            let words = (letters.len() as u128).checked_pow(len as u32);
            let pair = skcm::pigeonhole_collision(&m, &letters, len, cap)?;
            let mut text = format!(
                "{} words of length {len} over {:?}; at most {bound} configurations\n",
                words.map_or("too many".to_string(), |w| w.to_string()),
                word_string(&letters)
            );
            let mut checked = Value::Null;
            match &pair {
                Some((w1, w2)) => {
                    writeln!(text, "collision: {} and {}", word_string(w1), word_string(w2))?;
                    if let Some(seed) = seed.filter(|_| suffixes > 0) {
                        let agree = suffix_agreement(&m, w1, w2, suffixes, suffix_len, seed)?;
                        writeln!(text, "suffixes agreeing: {agree}/{suffixes}")?;
                        checked = json!({"suffixes": suffixes, "agreeing": agree});
                    }
                }
                None => writeln!(text, "no collision")?,
            }
            let value = json!({
                "length": len,
                "letters": word_string(&letters),
                "words": words.map(|w| w.to_string()),
                "config_bound": bound.to_string(),
                "pair": pair.as_ref().map(|(a, b)| [word_string(a), word_string(b)]),
                "suffix_check": checked,
            });
            Ok(render(&common, value, text))
        }

        Command::Gradcheck { cell, hidden, readout_hidden, length, instances, fd_step, init_scale, tolerance, seed, common } => {
            if hidden == 0 || instances == 0 {
                return Err(usage("--hidden and --instances must be positive"));
            }
            if !(fd_step > 0.0) || !(init_scale > 0.0) {
                return Err(usage("--fd-step and --init-scale must be positive"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst: f64 = 0.0;
            let mut rows = Vec::new();
            for _ in 0..instances {
                let r = training::init_recognizer(cell, vec!['a', 'b'], hidden, readout_hidden, init_scale, &mut rng)?;
                let word: Vec<char> = (0..length).map(|_| if rng.gen_bool(0.5) { 'a' } else { 'b' }).collect();
                let sample = Sample { word, label: rng.gen_bool(0.5) };
                let rep = training::grad_check(&r, &sample, fd_step)?;
                worst = worst.max(rep.max_rel_error);
                rows.push(json!({
                    "word": sample.word_string(),
                    "max_rel_error": rep.max_rel_error,
                    "checked": rep.checked,
                    "skipped_at_kinks": rep.skipped_at_kinks,
                }));
            }
            let pass = worst < tolerance;
            let text = format!(
                "{} instances of {}: max relative error {worst:.3e} ({})\n",
                instances,
                cell.name(),
                if pass { "ok" } else { "FAILED" }
            );
            let value = json!({"cell": cell.name(), "max_rel_error": worst, "pass": pass, "instances": rows});
            let out = render(&common, value, text);
            if pass {
                Ok(out)
            } else {
                print!("{out}");
                Err(anyhow::anyhow!("max relative error {worst:.3e} exceeds {tolerance:e}"))
            }
        }

        Command::Infeasibility { scenario, bits, samples, seed, common } => {
            let rep = binary::binary_counter_infeasibility(scenario, bits, samples, seed)?;
            let mut text = format!(
                "{bits}-bit counter, {} scenario: {} of {} sign assignments consistent -> {}\n",
                match scenario {
                    binary::CounterScenario::ConsistentlyIncreasing => "increasing",
                    binary::CounterScenario::BiDirectional => "bidirectional",
                },
                rep.consistent_assignments,
                rep.assignments_checked,
                if rep.infeasible { "infeasible" } else { "not refuted" }
            );
            if let Some(w) = &rep.witness {
                writeln!(
                    text,
                    "coordinate {} forced positive by {} and negative by {}",
                    w.coordinate, w.positive_from, w.negative_from
                )?;
            }
            if let Some(s) = &rep.random_search {
                writeln!(
                    text,
                    "random search: {} networks, {} counters found, longest prefix {}",
                    s.samples, s.counters_found, s.best_prefix
                )?;
            }
            Ok(render(&common, serde_json::to_value(&rep)?, text))
        }

        Command::StackDemo { mantissa_bits, common } => {
            let p = Precision::state(mantissa_bits).map_err(|e| usage(e.to_string()))?;
            let capacity = numerics::stack_push_capacity(p);
            let value = json!({"mantissa_bits": mantissa_bits, "capacity": capacity});
            Ok(render(&common, value, format!("{capacity}\n")))
        }
    }
}

fn machine_for(lang: Language) -> Result<SkcmDef> {
    Ok(match lang {
        Language::AnBn => skcm::build_anbn(),
        Language::AnBnCn => skcm::build_anbncn(),
        Language::Blocks(m) => skcm::build_a1_to_am(m)?,
        Language::Palindrome => return Err(usage("palindromes have no counter machine")),
    })
}

/// Number of random suffixes after which both words reach the same
/// configuration and verdict.
fn suffix_agreement(m: &SkcmDef, w1: &[char], w2: &[char], count: usize, max_len: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agree = 0;
    for _ in 0..count {
        let len = rng.gen_range(0..=max_len);
        let suffix: Vec<char> = (0..len).map(|_| m.alphabet()[rng.gen_range(0..m.alphabet().len())]).collect();
        let a = m.run(&[w1, &suffix].concat())?;
        let b = m.run(&[w2, &suffix].concat())?;
        if a == b && m.is_accepting(&a) == m.is_accepting(&b) {
            agree += 1;
        }
    }
    Ok(agree)
}

fn sweep_text(report: &SweepReport, show: usize) -> String {
    let mut text = format!(
        "{} up to n = {}: max_correct_n = {}, {} anomalies\n",
        report.lang,
        report.n_limit,
        report.max_correct_n,
        report.anomalies.len()
    );
    for a in report.anomalies.iter().take(show) {
        let _ = writeln!(text, "  n = {}: {}", a.n, a.description);
    }
    if report.anomalies.len() > show {
        let _ = writeln!(text, "  ... {} more", report.anomalies.len() - show);
    }
    text
}
