//! Call-trajectory files, dataset manifests and the minibatch feed.
//!
//! A call file is a JSON object with columnar arrays, one entry per step:
//!
//! ```text
//! call_id, policy_id            strings
//! observations                  [[f64; 150]; n]
//! bandwidth_predictions         [f64; n]   bps, > 0
//! audio_quality_reward          [f64; n]   in [0, 5]
//! video_quality_reward          [f64; n]   in [0, 5]
//! true_capacity                 [f64; n]   optional, bps, > 0
//! true_loss_rate                [f64; n]   optional, in [0, 1]
//! ```

mod batches;

pub use batches::{BatchStream, TransitionBatch, TransitionSet};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::features::OBS_DIM;

pub const MOS_MAX: f64 = 5.0;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("{path}: value {value} out of range {range}")]
    Range {
        path: String,
        value: f64,
        range: &'static str,
    },
    #[error("batch size {batch} invalid for {available} transitions")]
    BatchSize { batch: usize, available: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn schema(path: impl Into<String>, msg: impl Into<String>) -> DataError {
    DataError::Schema {
        path: path.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub bandwidth_prediction_bps: f64,
    pub r_audio: f64,
    pub r_video: f64,
    pub true_capacity_bps: Option<f64>,
    pub true_loss_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallTrajectory {
    pub call_id: String,
    pub policy_id: String,
    pub steps: Vec<Step>,
}

/// JSON key names; swap these to ingest files that use a different naming.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMap {
    pub call_id: String,
    pub policy_id: String,
    pub observations: String,
    pub bandwidth_predictions: String,
    pub audio_reward: String,
    pub video_reward: String,
    pub true_capacity: String,
    pub true_loss_rate: String,
}

impl Default for KeyMap {
    fn default() -> Self {
        Self {
            call_id: "call_id".into(),
            policy_id: "policy_id".into(),
            observations: "observations".into(),
            bandwidth_predictions: "bandwidth_predictions".into(),
            audio_reward: "audio_quality_reward".into(),
            video_reward: "video_quality_reward".into(),
            true_capacity: "true_capacity".into(),
            true_loss_rate: "true_loss_rate".into(),
        }
    }
}

#[derive(Serialize)]
struct CallFileOut<'a> {
    call_id: &'a str,
    policy_id: &'a str,
    observations: Vec<&'a [f64]>,
    bandwidth_predictions: Vec<f64>,
    audio_quality_reward: Vec<f64>,
    video_quality_reward: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_capacity: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    true_loss_rate: Option<Vec<f64>>,
}

fn check_number(
    path: String,
    v: f64,
    lo: f64,
    hi: f64,
    lo_open: bool,
    range: &'static str,
) -> Result<f64, DataError> {
    let ok = v.is_finite() && if lo_open { v > lo } else { v >= lo } && v <= hi;
    if ok {
        Ok(v)
    } else {
        Err(DataError::Range {
            path,
            value: v,
            range,
        })
    }
}

impl CallTrajectory {
    /// Check every invariant; the error names the offending field.
    pub fn validate(&self) -> Result<(), DataError> {
        let k = KeyMap::default();
        if self.steps.is_empty() {
            return Err(schema(&k.observations, "no steps"));
        }
        let has_cap = self.steps[0].true_capacity_bps.is_some();
        let has_loss = self.steps[0].true_loss_rate.is_some();
        for (i, s) in self.steps.iter().enumerate() {
            if s.observation.len() != OBS_DIM {
                return Err(schema(
                    format!("{}[{i}]", k.observations),
                    format!("expected {OBS_DIM} values, got {}", s.observation.len()),
                ));
            }
            if let Some(j) = s.observation.iter().position(|v| !v.is_finite()) {
                return Err(schema(
                    format!("{}[{i}][{j}]", k.observations),
                    "non-finite value",
                ));
            }
            check_number(
                format!("{}[{i}]", k.bandwidth_predictions),
                s.bandwidth_prediction_bps,
                0.0,
                f64::MAX,
                true,
                "(0, inf)",
            )?;
            check_number(
                format!("{}[{i}]", k.audio_reward),
                s.r_audio,
                0.0,
                MOS_MAX,
                false,
                "[0, 5]",
            )?;
            check_number(
                format!("{}[{i}]", k.video_reward),
                s.r_video,
                0.0,
                MOS_MAX,
                false,
                "[0, 5]",
            )?;
            match (has_cap, s.true_capacity_bps) {
                (true, Some(c)) => {
                    check_number(
                        format!("{}[{i}]", k.true_capacity),
                        c,
                        0.0,
                        f64::MAX,
                        true,
                        "(0, inf)",
                    )?;
                }
                (false, None) => {}
                _ => {
                    return Err(schema(
                        format!("{}[{i}]", k.true_capacity),
                        "present for some steps only",
                    ))
                }
            }
            match (has_loss, s.true_loss_rate) {
                (true, Some(l)) => {
                    check_number(
                        format!("{}[{i}]", k.true_loss_rate),
                        l,
                        0.0,
                        1.0,
                        false,
                        "[0, 1]",
                    )?;
                }
                (false, None) => {}
                _ => {
                    return Err(schema(
                        format!("{}[{i}]", k.true_loss_rate),
                        "present for some steps only",
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        self.validate()?;
        let out = CallFileOut {
            call_id: &self.call_id,
            policy_id: &self.policy_id,
            observations: self
                .steps
                .iter()
                .map(|s| s.observation.as_slice())
                .collect(),
            bandwidth_predictions: self
                .steps
                .iter()
                .map(|s| s.bandwidth_prediction_bps)
                .collect(),
            audio_quality_reward: self.steps.iter().map(|s| s.r_audio).collect(),
            video_quality_reward: self.steps.iter().map(|s| s.r_video).collect(),
            true_capacity: self.steps[0].true_capacity_bps.map(|_| {
                self.steps
                    .iter()
                    .filter_map(|s| s.true_capacity_bps)
                    .collect()
            }),
            true_loss_rate: self.steps[0]
                .true_loss_rate
                .map(|_| self.steps.iter().filter_map(|s| s.true_loss_rate).collect()),
        };
        Ok(serde_json::to_string(&out).expect("serializing plain numbers cannot fail"))
    }

    pub fn from_json(text: &str, keys: &KeyMap) -> Result<Self, DataError> {
        let value: Value = serde_json::from_str(text).map_err(|source| DataError::Json {
            path: PathBuf::new(),
            source,
        })?;
        Self::from_value(&value, keys)
    }

    fn from_value(value: &Value, keys: &KeyMap) -> Result<Self, DataError> {
        let obj = value
            .as_object()
            .ok_or_else(|| schema("$", "expected an object"))?;
        let string = |key: &str| -> Result<String, DataError> {
            match obj.get(key) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(schema(key, "expected a string")),
                None => Err(schema(key, "missing")),
            }
        };
        let call_id = string(&keys.call_id)?;
        let policy_id = string(&keys.policy_id)?;

        let obs_rows =
            array(obj, &keys.observations)?.ok_or_else(|| schema(&keys.observations, "missing"))?;
        let n = obs_rows.len();
        let mut observations = Vec::with_capacity(n);
        for (i, row) in obs_rows.iter().enumerate() {
            let path = format!("{}[{i}]", keys.observations);
            let row = row
                .as_array()
                .ok_or_else(|| schema(&path, "expected an array"))?;
            if row.len() != OBS_DIM {
                return Err(schema(
                    &path,
                    format!("expected {OBS_DIM} values, got {}", row.len()),
                ));
            }
            let vals = row
                .iter()
                .enumerate()
                .map(|(j, v)| number(v, || format!("{path}[{j}]")))
                .collect::<Result<Vec<_>, _>>()?;
            observations.push(vals);
        }

        let column = |key: &str, required: bool| -> Result<Option<Vec<f64>>, DataError> {
            let Some(arr) = array(obj, key)? else {
                return if required {
                    Err(schema(key, "missing"))
                } else {
                    Ok(None)
                };
            };
            if arr.len() != n {
                return Err(schema(
                    key,
                    format!("length {} does not match {n} observations", arr.len()),
                ));
            }
            arr.iter()
                .enumerate()
                .map(|(i, v)| number(v, || format!("{key}[{i}]")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        };
        let bw = column(&keys.bandwidth_predictions, true)?.unwrap_or_default();
        let ra = column(&keys.audio_reward, true)?.unwrap_or_default();
        let rv = column(&keys.video_reward, true)?.unwrap_or_default();
        let cap = column(&keys.true_capacity, false)?;
        let loss = column(&keys.true_loss_rate, false)?;

        let steps = observations
            .into_iter()
            .enumerate()
            .map(|(i, observation)| Step {
                observation,
                bandwidth_prediction_bps: bw[i],
                r_audio: ra[i],
                r_video: rv[i],
                true_capacity_bps: cap.as_ref().map(|c| c[i]),
                true_loss_rate: loss.as_ref().map(|l| l[i]),
            })
            .collect();
        let traj = CallTrajectory {
            call_id,
            policy_id,
            steps,
        };
        traj.validate_with(keys)?;
        Ok(traj)
    }

    fn validate_with(&self, keys: &KeyMap) -> Result<(), DataError> {
        // error paths use the default names; rewrite them for custom maps
        self.validate().map_err(|e| rename_path(e, keys))
    }
}

fn rename_path(e: DataError, keys: &KeyMap) -> DataError {
    let def = KeyMap::default();
    let pairs = [
        (&def.observations, &keys.observations),
        (&def.bandwidth_predictions, &keys.bandwidth_predictions),
        (&def.audio_reward, &keys.audio_reward),
        (&def.video_reward, &keys.video_reward),
        (&def.true_capacity, &keys.true_capacity),
        (&def.true_loss_rate, &keys.true_loss_rate),
    ];
    let fix = |path: String| {
        for (from, to) in pairs {
            if let Some(rest) = path.strip_prefix(from.as_str()) {
                return format!("{to}{rest}");
            }
        }
        path
    };
    match e {
        DataError::Schema { path, msg } => DataError::Schema {
            path: fix(path),
            msg,
        },
        DataError::Range { path, value, range } => DataError::Range {
            path: fix(path),
            value,
            range,
        },
        other => other,
    }
}

fn array<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<Option<&'a Vec<Value>>, DataError> {
    match obj.get(key) {
        None => Ok(None),
        Some(Value::Array(a)) => Ok(Some(a)),
        Some(_) => Err(schema(key, "expected an array")),
    }
}

fn number(v: &Value, path: impl FnOnce() -> String) -> Result<f64, DataError> {
    match v.as_f64() {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(schema(path(), "expected a finite number")),
    }
}

pub fn write_call(traj: &CallTrajectory, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    let text = traj.to_json()?;
    std::fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_call(path: impl AsRef<Path>) -> Result<CallTrajectory, DataError> {
    read_call_with(path, &KeyMap::default())
}

pub fn read_call_with(path: impl AsRef<Path>, keys: &KeyMap) -> Result<CallTrajectory, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|source| DataError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    CallTrajectory::from_value(&value, keys).map_err(|e| match e {
        DataError::Schema { path: p, msg } => DataError::Schema {
            path: format!("{}: {p}", path.display()),
            msg,
        },
        DataError::Range {
            path: p,
            value,
            range,
        } => DataError::Range {
            path: format!("{}: {p}", path.display()),
            value,
            range,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub call_id: String,
    pub policy_id: String,
}

/// Lists the call files of a dataset directory, paths relative to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub calls: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), DataError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|source| DataError::Io { path, source })
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| DataError::Json { path, source })
    }
}

/// Load every call listed in `dir/manifest.json`.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<CallTrajectory>, DataError> {
    let dir = dir.as_ref();
    let manifest = Manifest::read(dir)?;
    if manifest.calls.is_empty() {
        return Err(DataError::Empty);
    }
    manifest
        .calls
        .iter()
        .map(|e| {
            let mut t = read_call(dir.join(&e.file))?;
            t.policy_id.clone_from(&e.policy_id);
            Ok(t)
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample_call(n: usize, ground_truth: bool) -> CallTrajectory {
        CallTrajectory {
            call_id: "c1".into(),
            policy_id: "v1".into(),
            steps: (0..n)
                .map(|i| Step {
                    observation: (0..OBS_DIM)
                        .map(|j| (i * OBS_DIM + j) as f64 * 0.1 + 1.0 / 3.0)
                        .collect(),
                    bandwidth_prediction_bps: 1e5 + i as f64 * 1234.567,
                    r_audio: 4.0 + i as f64 * 0.01,
                    r_video: 3.5,
                    true_capacity_bps: ground_truth.then_some(1e6 / 7.0),
                    true_loss_rate: ground_truth.then_some(0.01),
                })
                .collect(),
        }
    }

    #[test]
    fn minimal_file_reads() {
        let t = sample_call(1, false);
        let back = CallTrajectory::from_json(&t.to_json().unwrap(), &KeyMap::default()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn short_observation_names_step() {
        let mut t = sample_call(3, false);
        t.steps[2].observation.pop();
        let err = t.validate().unwrap_err();
        assert!(err.to_string().contains("observations[2]"), "{err}");
    }

    #[test]
    fn mos_bound_enforced() {
        let mut t = sample_call(2, false);
        t.steps[1].r_audio = 6.2;
        assert!(matches!(t.validate(), Err(DataError::Range { .. })));
    }

    #[test]
    fn length_mismatch_detected_when_reading() {
        let t = sample_call(3, true);
        let mut v: Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        v["video_quality_reward"].as_array_mut().unwrap().pop();
        let err = CallTrajectory::from_value(&v, &KeyMap::default()).unwrap_err();
        assert!(err.to_string().starts_with("video_quality_reward"), "{err}");
    }

    #[test]
    fn ground_truth_keys_omitted_when_absent() {
        let text = sample_call(2, false).to_json().unwrap();
        assert!(!text.contains("true_capacity"));
        assert!(!text.contains("true_loss_rate"));
        let text = sample_call(2, true).to_json().unwrap();
        assert!(text.contains("true_capacity"));
    }

    #[test]
    fn serialization_is_stable() {
        let t = sample_call(4, true);
        assert_eq!(t.to_json().unwrap(), t.to_json().unwrap());
        let text = t.to_json().unwrap();
        let order = [
            "call_id",
            "policy_id",
            "observations",
            "bandwidth_predictions",
            "audio_quality_reward",
        ];
        let pos: Vec<usize> = order.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn custom_key_map() {
        let t = sample_call(2, false);
        let text = t
            .to_json()
            .unwrap()
            .replace("audio_quality_reward", "audio_quality");
        let keys = KeyMap {
            audio_reward: "audio_quality".into(),
            ..KeyMap::default()
        };
        assert_eq!(CallTrajectory::from_json(&text, &keys).unwrap(), t);
        assert!(CallTrajectory::from_json(&text, &KeyMap::default()).is_err());
    }

    #[test]
    fn file_roundtrip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let t = sample_call(5, true);
        write_call(&t, dir.path().join("a.json")).unwrap();
        Manifest {
            calls: vec![ManifestEntry {
                file: "a.json".into(),
                call_id: "c1".into(),
                policy_id: "v1".into(),
            }],
        }
        .write(dir.path())
        .unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), vec![t]);
    }

    #[derive(Debug, Clone)]
    enum Mutation {
        TruncateObs(usize),
        ExtendObs(usize),
        AudioOut(usize, f64),
        VideoOut(usize, f64),
        NonPositiveBw(usize, f64),
        DropColumnEntry(usize),
        NullObsValue(usize, usize),
        StringBw(usize),
        BadCapacity(usize, f64),
        BadLossRate(usize, f64),
        PartialCapacity(usize),
        MissingKey(usize),
    }

    fn mutation(n: usize) -> impl Strategy<Value = Mutation> {
        let step = 0..n;
        prop_oneof![
            step.clone().prop_map(Mutation::TruncateObs),
            step.clone().prop_map(Mutation::ExtendObs),
            (
                step.clone(),
                prop_oneof![-100.0f64..-1e-9, 5.0001f64..100.0]
            )
                .prop_map(|(i, v)| Mutation::AudioOut(i, v)),
            (
                step.clone(),
                prop_oneof![-100.0f64..-1e-9, 5.0001f64..100.0]
            )
                .prop_map(|(i, v)| Mutation::VideoOut(i, v)),
            (step.clone(), -1e6f64..=0.0).prop_map(|(i, v)| Mutation::NonPositiveBw(i, v)),
            (0usize..5).prop_map(Mutation::DropColumnEntry),
            (step.clone(), 0..OBS_DIM).prop_map(|(i, j)| Mutation::NullObsValue(i, j)),
            step.clone().prop_map(Mutation::StringBw),
            (step.clone(), -1e6f64..=0.0).prop_map(|(i, v)| Mutation::BadCapacity(i, v)),
            (step.clone(), prop_oneof![-1.0f64..-1e-9, 1.0001f64..10.0])
                .prop_map(|(i, v)| Mutation::BadLossRate(i, v)),
            step.clone().prop_map(Mutation::PartialCapacity),
            (0usize..4).prop_map(Mutation::MissingKey),
        ]
    }

    proptest! {
        #[test]
        fn every_single_field_violation_is_caught(m in mutation(4)) {
            let t = sample_call(4, true);
            let mut v: Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
            let cols = ["bandwidth_predictions", "audio_quality_reward", "video_quality_reward", "true_capacity", "true_loss_rate"];
            match m {
                Mutation::TruncateObs(i) => { v["observations"][i].as_array_mut().unwrap().pop(); }
                Mutation::ExtendObs(i) => { v["observations"][i].as_array_mut().unwrap().push(1.0.into()); }
                Mutation::AudioOut(i, x) => v["audio_quality_reward"][i] = x.into(),
                Mutation::VideoOut(i, x) => v["video_quality_reward"][i] = x.into(),
                Mutation::NonPositiveBw(i, x) => v["bandwidth_predictions"][i] = x.into(),
                Mutation::DropColumnEntry(c) => { v[cols[c]].as_array_mut().unwrap().pop(); }
                Mutation::NullObsValue(i, j) => v["observations"][i][j] = Value::Null,
                Mutation::StringBw(i) => v["bandwidth_predictions"][i] = "fast".into(),
                Mutation::BadCapacity(i, x) => v["true_capacity"][i] = x.into(),
                Mutation::BadLossRate(i, x) => v["true_loss_rate"][i] = x.into(),
                Mutation::PartialCapacity(i) => v["true_capacity"][i] = Value::Null,
                Mutation::MissingKey(k) => {
                    let key = ["observations", "bandwidth_predictions", "audio_quality_reward", "video_quality_reward"][k];
                    v.as_object_mut().unwrap().remove(key);
                }
            }
            prop_assert!(CallTrajectory::from_value(&v, &KeyMap::default()).is_err());
        }
    }
}
