use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::experiment::{generate_world, run_experiment_with};
use super::EvalReport;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result, Stage, StageExt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Weeks,
    AgeBracket,
    InputLength,
    EmbeddingKind,
    Constraint,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Weeks => "weeks",
            SweepAxis::AgeBracket => "age_bracket",
            SweepAxis::InputLength => "input_length",
            SweepAxis::EmbeddingKind => "embedding_kind",
            SweepAxis::Constraint => "constraint",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut c = base.clone();
        let bad = || Error::config(format!("invalid {} value {value:?}", self.name()));
        match self {
            SweepAxis::Weeks => {
                c.curation.weeks = match value {
                    "all" => None,
                    v => Some(v.parse().map_err(|_| bad())?),
                }
            }
            SweepAxis::AgeBracket => c.curation.age_bracket = value.to_string(),
            SweepAxis::InputLength => c.curation.k = value.parse().map_err(|_| bad())?,
            SweepAxis::EmbeddingKind => c.embedding.kind = value.parse()?,
            SweepAxis::Constraint => c.curation.constraint = value.parse()?,
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum AxisValue {
    Int(i64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    axis: SweepAxis,
    values: Vec<AxisValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub base_config: ExperimentConfig,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<String>, base_config: ExperimentConfig) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("sweep needs at least one value"));
        }
        Ok(SweepSpec { axis, values, base_config })
    }

    /// A spec file is an experiment config plus a `sweep` table:
    /// `sweep.axis = "weeks"` and `sweep.values = [1, 2, 4, 6]`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        let section = table.remove("sweep").ok_or_else(|| Error::config("sweep spec has no [sweep] table"))?;
        let section: SweepSection = section
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("sweep: {}", e.message())))?;
        let values = section
            .values
            .into_iter()
            .map(|v| match v {
                AxisValue::Int(i) => i.to_string(),
                AxisValue::Text(s) => s,
            })
            .collect();
        Self::new(section.axis, values, ExperimentConfig::from_table(table)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read sweep spec {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: String,
    pub outcome: std::result::Result<EvalReport, CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub message: String,
    pub exit_code: i32,
}

impl From<&Error> for CellFailure {
    fn from(e: &Error) -> Self {
        CellFailure { message: e.to_string(), exit_code: e.exit_code() }
    }
}

/// One experiment per axis value, everything else held at the base config.
/// Failed cells are recorded and the sweep carries on. With `parallel > 1`
/// cells run on that many threads; results do not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, parallel: usize) -> Result<Vec<SweepCell>> {
    if spec.values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    // No axis touches the generator, so every cell shares one world.
    let world = generate_world(&spec.base_config).stage(Stage::Generate)?;
    let run_cell = |value: &str| -> SweepCell {
        let outcome = spec
            .axis
            .apply(&spec.base_config, value)
            .and_then(|config| run_experiment_with(&config, &world))
            .map_err(|e| CellFailure::from(&e));
        SweepCell { value: value.to_string(), outcome }
    };

    let workers = parallel.clamp(1, spec.values.len());
    if workers == 1 {
        return Ok(spec.values.iter().map(|v| run_cell(v)).collect());
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<SweepCell>>> = spec.values.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(value) = spec.values.get(i) else { break };
                *slots[i].lock().expect("slot lock") = Some(run_cell(value));
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|s| s.into_inner().expect("slot lock").expect("every cell ran"))
        .collect())
}

/// Columns: axis_value, n, mrr, success_at_20, evaluable_fraction, status.
/// Failed cells keep their row with empty metrics and status "failed".
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(["axis_value", "n", "mrr", "success_at_20", "evaluable_fraction", "status"])?;
    for cell in cells {
        match &cell.outcome {
            Ok(r) => writer.write_record([
                cell.value.clone(),
                r.n.to_string(),
                r.mrr.to_string(),
                r.success_at_k.to_string(),
                r.evaluable_fraction.to_string(),
                "ok".into(),
            ])?,
            Err(_) => writer.write_record([cell.value.as_str(), "", "", "", "", "failed"])?,
        }
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_file_parses() {
        let spec = SweepSpec::from_toml_str("seed = 3\nsweep.axis = \"weeks\"\nsweep.values = [1, 2, \"all\"]\n").unwrap();
        assert_eq!(spec.axis, SweepAxis::Weeks);
        assert_eq!(spec.values, vec!["1", "2", "all"]);
        assert_eq!(spec.base_config.seed, 3);
        assert!(SweepSpec::from_toml_str("sweep.axis = \"weeks\"\nsweep.values = []\n").is_err());
        assert!(SweepSpec::from_toml_str("sweep.axis = \"colour\"\nsweep.values = [1]\n").is_err());
        assert!(SweepSpec::from_toml_str("seed = 3\n").is_err());
    }

    #[test]
    fn axes_set_their_field() {
        let base = ExperimentConfig::default();
        assert_eq!(SweepAxis::Weeks.apply(&base, "4").unwrap().curation.weeks, Some(4));
        assert_eq!(SweepAxis::Weeks.apply(&base, "all").unwrap().curation.weeks, None);
        assert_eq!(SweepAxis::InputLength.apply(&base, "5").unwrap().curation.k, 5);
        assert_eq!(SweepAxis::AgeBracket.apply(&base, "60+").unwrap().curation.age_bracket, "60+");
        assert!(SweepAxis::InputLength.apply(&base, "0").is_err());
        assert!(SweepAxis::AgeBracket.apply(&base, "old").is_err());
    }
}
