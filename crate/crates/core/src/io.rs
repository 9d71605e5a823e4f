//! Experiment configuration files and on-disk outputs.
//!
//! An experiment is a JSON object:
//!
//! ```json
//! {
//!   "conditions": ["SH_g", {"name": "custom", "config": { "n_agents": 2, "base_game": "Ch" }}],
//!   "trials_per_condition": 20,
//!   "master_seed": 7,
//!   "output_dir": "out",
//!   "emit": {"trace_csv": true, "ensemble_csv": true, "summary_json": true, "final_counts": false}
//! }
//! ```
//!
//! Each condition writes into `<output_dir>/<name>/`:
//! `trace_trial_NNNN.csv`, `ensemble.csv` and `summary.json`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::game::N_ACTIONS;
use crate::harness::{
    builtin_condition, builtin_conditions, run_condition, transition_timeseries_condition, ConditionRun,
    ConditionSummary, ConditionTemplate, TrialRecord,
};
use crate::model::TransitionModel;
use crate::Action;

pub const PAPER_FIG2: &str = "paper-fig2";
pub const PAPER_FIG3: &str = "paper-fig3";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmitFlags {
    pub trace_csv: bool,
    pub ensemble_csv: bool,
    pub summary_json: bool,
    /// Adds every agent's final transition counts to the summary.
    pub final_counts: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        Self { trace_csv: true, ensemble_csv: true, summary_json: true, final_counts: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin condition names are expanded to their full templates while
    /// parsing, so serialising the config always yields the effective one.
    #[serde(deserialize_with = "deserialize_conditions")]
    pub conditions: Vec<ConditionTemplate>,
    pub trials_per_condition: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit: EmitFlags,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

struct ConditionEntry(ConditionTemplate);

impl<'de> Deserialize<'de> for ConditionEntry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntryVisitor;

        impl<'de> Visitor<'de> for EntryVisitor {
            type Value = ConditionEntry;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a builtin condition name or an object with `name` and `config`")
            }

            fn visit_str<E: de::Error>(self, name: &str) -> std::result::Result<ConditionEntry, E> {
                builtin_condition(name).map(ConditionEntry).ok_or_else(|| {
                    let known: Vec<String> = builtin_names();
                    E::custom(format!("unknown condition `{name}` (builtin conditions: {})", known.join(", ")))
                })
            }

            fn visit_map<A: MapAccess<'de>>(self, map: A) -> std::result::Result<ConditionEntry, A::Error> {
                ConditionTemplate::deserialize(de::value::MapAccessDeserializer::new(map)).map(ConditionEntry)
            }
        }

        deserializer.deserialize_any(EntryVisitor)
    }
}

fn deserialize_conditions<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Vec<ConditionTemplate>, D::Error> {
    struct ListVisitor;

    impl<'de> Visitor<'de> for ListVisitor {
        type Value = Vec<ConditionTemplate>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a list of conditions")
        }

        fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out = Vec::new();
            while let Some(ConditionEntry(template)) = seq.next_element()? {
                out.push(template);
            }
            Ok(out)
        }
    }

    deserializer.deserialize_seq(ListVisitor)
}

fn builtin_names() -> Vec<String> {
    builtin_conditions()
        .into_iter()
        .chain(std::iter::once(transition_timeseries_condition()))
        .map(|c| c.name)
        .collect()
}

impl ExperimentConfig {
    /// Parses and validates a config, reporting schema errors with the
    /// offending key path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::ConfigSchema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_condition == 0 {
            return Err(Error::ConfigSchema {
                path: "trials_per_condition".into(),
                message: "at least one trial is required".into(),
            });
        }
        if self.conditions.is_empty() {
            return Err(Error::ConfigSchema { path: "conditions".into(), message: "no conditions given".into() });
        }
        for (i, c) in self.conditions.iter().enumerate() {
            let path = format!("conditions[{i}]");
            let valid_name = !c.name.is_empty()
                && c.name.chars().all(|ch| ch.is_ascii_alphanumeric() || matches!(ch, '-' | '_' | '.'))
                && !c.name.starts_with('.');
            if !valid_name {
                return Err(Error::ConfigSchema {
                    path: format!("{path}.name"),
                    message: format!("`{}` is not usable as a directory name", c.name),
                });
            }
            if self.conditions[..i].iter().any(|other| other.name == c.name) {
                return Err(Error::ConfigSchema { path, message: format!("duplicate condition `{}`", c.name) });
            }
            c.config.validate().map_err(|e| Error::ConfigSchema { path: format!("{path}.config"), message: e.to_string() })?;
        }
        Ok(())
    }
}

/// Ready-made experiments: the two-agent transition run and the
/// five-condition ensemble study.
pub fn builtin_experiment(name: &str) -> Option<ExperimentConfig> {
    let (conditions, trials) = match name {
        PAPER_FIG2 => (vec![transition_timeseries_condition()], 20),
        PAPER_FIG3 => (builtin_conditions(), 50),
        _ => return None,
    };
    Some(ExperimentConfig {
        conditions,
        trials_per_condition: trials,
        master_seed: 1,
        output_dir: default_output_dir(),
        emit: EmitFlags::default(),
    })
}

pub fn builtin_experiment_names() -> [&'static str; 2] {
    [PAPER_FIG2, PAPER_FIG3]
}

/// Scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn trace_header(n_factors: usize) -> Vec<String> {
    let mut h: Vec<String> = ["condition", "trial", "t", "agent", "F_total"].map(String::from).to_vec();
    h.extend((0..n_factors).map(|n| format!("F_factor_{n}")));
    h.extend(
        [
            "rho_c", "rho_d", "sigma_c", "sigma_d", "eta_c", "eta_d", "G_c", "G_d", "gamma", "expected_G", "policy_c",
            "action", "ensemble_G",
        ]
        .map(String::from),
    );
    h
}

/// One row per agent per step.
pub fn write_trace_csv<W: Write>(w: W, condition: &str, trial: usize, record: &TrialRecord) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(trace_header(record.n_agents()))?;
    for (t, row) in record.steps.iter().enumerate() {
        let ensemble = format_float(record.ensemble[t]);
        for m in row {
            let c = m.efe.get(Action::Cooperate);
            let d = m.efe.get(Action::Defect);
            let mut fields = vec![condition.to_owned(), trial.to_string(), t.to_string(), m.agent.to_string()];
            fields.push(format_float(m.free_energy_total()));
            fields.extend(m.free_energy.iter().map(|f| format_float(*f)));
            fields.extend(
                [
                    c.pragmatic,
                    d.pragmatic,
                    c.salience,
                    d.salience,
                    c.novelty,
                    d.novelty,
                    c.total,
                    d.total,
                    m.gamma,
                    m.expected_efe,
                    m.cooperate_probability(),
                ]
                .map(format_float),
            );
            fields.push(m.action.index().to_string());
            fields.push(ensemble.clone());
            out.write_record(&fields)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Ensemble series of every successful trial in `run`, in trial order.
pub fn write_ensemble_csv<W: Write>(w: W, run: &ConditionRun) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["condition", "trial", "t", "ensemble_G"])?;
    for (trial, record) in run.records() {
        for (t, g) in record.ensemble.iter().enumerate() {
            out.write_record([run.template.name.clone(), trial.to_string(), t.to_string(), format_float(*g)])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub trials_per_condition: usize,
    pub master_seed: u64,
    pub condition: ConditionTemplate,
}

/// Counts of one agent, as `[action][factor]` matrices written row by row
/// (row = next state, column = previous state).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCounts {
    pub agent: usize,
    pub c: Vec<Vec<Vec<f64>>>,
    pub d: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub trial: usize,
    pub agents: Vec<AgentCounts>,
}

fn agent_counts(agent: usize, model: &TransitionModel) -> AgentCounts {
    let slices = |action| {
        (0..model.n_factors())
            .map(|f| {
                let m = model.counts(action, f);
                (0..N_ACTIONS).map(|r| (0..N_ACTIONS).map(|c| m.get(r, c)).collect()).collect()
            })
            .collect()
    };
    AgentCounts { agent, c: slices(Action::Cooperate), d: slices(Action::Defect) }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub config: ConfigEcho,
    #[serde(flatten)]
    pub summary: ConditionSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_counts: Option<Vec<TrialCounts>>,
}

pub fn summary_document(run: &ConditionRun, trials_per_condition: usize, with_counts: bool) -> SummaryDocument {
    let final_counts = with_counts.then(|| {
        run.records()
            .map(|(trial, r)| TrialCounts {
                trial,
                agents: r.final_counts.iter().enumerate().map(|(a, m)| agent_counts(a, m)).collect(),
            })
            .collect()
    });
    SummaryDocument {
        config: ConfigEcho { trials_per_condition, master_seed: run.master_seed, condition: run.template.clone() },
        summary: run.summary(),
        final_counts,
    }
}

pub fn trace_file_name(trial: usize) -> String {
    format!("trace_trial_{trial:04}.csv")
}

#[derive(Clone, Debug)]
pub struct ConditionReport {
    pub summary: ConditionSummary,
    pub directory: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Runs every condition of `config` and writes the requested outputs.
/// Trial failures are recorded in the summaries rather than aborting.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<Vec<ConditionReport>> {
    config.validate()?;
    config
        .conditions
        .iter()
        .map(|template| {
            let run = run_condition(template, config.trials_per_condition, config.master_seed, threads)?;
            write_condition(&run, config)
        })
        .collect()
}

fn write_condition(run: &ConditionRun, config: &ExperimentConfig) -> Result<ConditionReport> {
    let dir = config.output_dir.join(&run.template.name);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    let mut create = |name: String| -> Result<BufWriter<File>> {
        let path = dir.join(name);
        let file = File::create(&path)?;
        files.push(path);
        Ok(BufWriter::new(file))
    };
    if config.emit.trace_csv {
        for (trial, record) in run.records() {
            write_trace_csv(create(trace_file_name(trial))?, &run.template.name, trial, record)?;
        }
    }
    if config.emit.ensemble_csv {
        write_ensemble_csv(create("ensemble.csv".into())?, run)?;
    }
    let doc = summary_document(run, config.trials_per_condition, config.emit.final_counts);
    if config.emit.summary_json {
        let mut w = create("summary.json".into())?;
        serde_json::to_writer_pretty(&mut w, &doc)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(ConditionReport { summary: doc.summary, directory: dir, files })
}
