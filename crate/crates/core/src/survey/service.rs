//! Survey assembly and the on-disk response store.
//!
//! Each survey lives in `<root>/<survey_id>/` as `survey.json` (definition,
//! server-side only), `truth.json` and an append-only `responses.jsonl`.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{survey_stats, StatsReport};
use super::{join_records, read_log, read_truth, write_truth, Judgment, LogLine, SurveyRecord, Truth, TruthMap};
use crate::error::{Error, Result};
use crate::imaging::{assign_layers, load_manifest, ImageSet, SliceImage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub item_id: String,
    pub volume_id: String,
    pub slice_index: u32,
    pub truth: Truth,
}

/// A balanced blind survey. Contains ground truth: never send it to clients.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyDefinition {
    pub survey_id: String,
    pub seed: u64,
    pub n_real: usize,
    pub n_synth: usize,
    pub real_set: String,
    pub synth_set: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth_manifest: Option<PathBuf>,
    pub items: Vec<SurveyItem>,
}

impl SurveyDefinition {
    pub fn truth_map(&self) -> TruthMap {
        self.items.iter().map(|i| (i.item_id.clone(), i.truth)).collect()
    }

    pub fn item(&self, item_id: &str) -> Option<&SurveyItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }
}

fn pool_keys(set: &ImageSet) -> Vec<(String, u32)> {
    set.iter_slices()
        .map(|(_, s)| (s.volume_id.clone(), s.slice_index))
        .collect()
}

/// Samples `n_real` and `n_synth` slices without replacement and interleaves
/// them with a seeded shuffle. Identical inputs and seed give identical surveys.
pub fn make_survey(
    real_pool: &ImageSet,
    synth_pool: &ImageSet,
    n_real: usize,
    n_synth: usize,
    seed: u64,
) -> Result<SurveyDefinition> {
    let real = pool_keys(real_pool);
    let synth = pool_keys(synth_pool);
    if real.len() < n_real || synth.len() < n_synth {
        return Err(Error::invalid(format!(
            "pools hold {} real and {} synthetic slices, {n_real} and {n_synth} requested",
            real.len(),
            synth.len()
        )));
    }
    if n_real + n_synth == 0 {
        return Err(Error::invalid("a survey needs at least one item"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<(Truth, &(String, u32))> = index::sample(&mut rng, real.len(), n_real)
        .into_iter()
        .map(|i| (Truth::Real, &real[i]))
        .chain(
            index::sample(&mut rng, synth.len(), n_synth)
                .into_iter()
                .map(|i| (Truth::Synthetic, &synth[i])),
        )
        .collect();
    picks.shuffle(&mut rng);

    let mut h = Sha256::new();
    h.update(format!("{}\n{}\n{n_real}\n{n_synth}\n{seed}\n", real_pool.set_id, synth_pool.set_id));
    for (v, i) in real.iter().chain(&synth) {
        h.update(format!("{v}/{i}\n"));
    }
    let survey_id = format!("s{}", &hex::encode(h.finalize())[..12]);
    let width = (picks.len().to_string().len()).max(2);
    let items = picks
        .into_iter()
        .enumerate()
        .map(|(k, (truth, (v, i)))| SurveyItem {
            item_id: format!("{survey_id}-{:0width$}", k + 1),
            volume_id: v.clone(),
            slice_index: *i,
            truth,
        })
        .collect();
    Ok(SurveyDefinition {
        survey_id,
        seed,
        n_real,
        n_synth,
        real_set: real_pool.set_id.clone(),
        synth_set: synth_pool.set_id.clone(),
        real_manifest: None,
        synth_manifest: None,
        items,
    })
}

const DEFINITION_FILE: &str = "survey.json";
const TRUTH_FILE: &str = "truth.json";
const LOG_FILE: &str = "responses.jsonl";

/// Writes `survey.json` and `truth.json` into `<root>/<survey_id>/`.
pub fn save_survey(def: &SurveyDefinition, root: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = root.as_ref().join(&def.survey_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join(DEFINITION_FILE);
    let mut text = serde_json::to_string_pretty(def).expect("definition serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    write_truth(dir.join(TRUTH_FILE), &def.truth_map())?;
    Ok(dir)
}

pub fn load_survey(dir: impl AsRef<Path>) -> Result<SurveyDefinition> {
    let path = dir.as_ref().join(DEFINITION_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(&path, "survey", e.to_string()))
}

/// Loads a manifest and assigns layers, the way every pool is prepared.
pub fn load_pool(manifest: &Path) -> Result<ImageSet> {
    assign_layers(load_manifest(manifest)?, None)
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("unknown survey {0}")]
    UnknownSurvey(String),
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("rater {rater_id} already answered item {item_id}")]
    Duplicate { rater_id: String, item_id: String },
    #[error(transparent)]
    Store(#[from] Error),
}

#[derive(Default)]
struct Responses {
    lines: Vec<LogLine>,
    seen: HashSet<(String, String)>,
}

pub struct SurveyEntry {
    pub definition: SurveyDefinition,
    dir: PathBuf,
    truth: TruthMap,
    responses: Mutex<Responses>,
    pools: OnceLock<std::result::Result<Arc<(ImageSet, ImageSet)>, String>>,
}

impl SurveyEntry {
    fn open(dir: PathBuf) -> Result<Self> {
        let definition = load_survey(&dir)?;
        let truth = read_truth(dir.join(TRUTH_FILE))?;
        let log = dir.join(LOG_FILE);
        let mut responses = Responses::default();
        if log.exists() {
            for line in read_log(&log)? {
                if !responses.seen.insert((line.rater_id.clone(), line.item_id.clone())) {
                    return Err(Error::malformed(&log, "responses", format!("duplicate response {}/{}", line.rater_id, line.item_id)));
                }
                responses.lines.push(line);
            }
        }
        Ok(SurveyEntry {
            definition,
            dir,
            truth,
            responses: Mutex::new(responses),
            pools: OnceLock::new(),
        })
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn truth_path(&self) -> PathBuf {
        self.dir.join(TRUTH_FILE)
    }

    pub fn records(&self) -> Result<Vec<SurveyRecord>> {
        let r = self.responses.lock().expect("response lock");
        join_records(&r.lines, &self.truth)
    }

    pub fn num_responses(&self) -> usize {
        self.responses.lock().expect("response lock").lines.len()
    }

    pub fn stats(&self) -> Result<StatsReport> {
        survey_stats(&[(self.definition.survey_id.clone(), self.records()?)], false)
    }

    fn pools(&self) -> Result<Arc<(ImageSet, ImageSet)>> {
        self.pools
            .get_or_init(|| {
                let d = &self.definition;
                let (Some(r), Some(s)) = (&d.real_manifest, &d.synth_manifest) else {
                    return Err(format!("survey {} has no manifests to load images from", d.survey_id));
                };
                let real = load_pool(r).map_err(|e| e.to_string())?;
                let synth = load_pool(s).map_err(|e| e.to_string())?;
                Ok(Arc::new((real, synth)))
            })
            .clone()
            .map_err(Error::InvalidParameter)
    }

    /// The slice shown for `item_id`.
    pub fn slice(&self, item_id: &str) -> Result<SliceImage> {
        let item = self
            .definition
            .item(item_id)
            .ok_or_else(|| Error::invalid(format!("unknown item {item_id}")))?;
        let pools = self.pools()?;
        let set = match item.truth {
            Truth::Real => &pools.0,
            Truth::Synthetic => &pools.1,
        };
        let found = set
            .iter_slices()
            .map(|(_, s)| s)
            .find(|s| s.volume_id == item.volume_id && s.slice_index == item.slice_index)
            .cloned();
        found.ok_or_else(|| Error::invalid(format!("slice {}/{} not in pool", item.volume_id, item.slice_index)))
    }

    fn attach_pools(&self, real: ImageSet, synth: ImageSet) {
        let _ = self.pools.set(Ok(Arc::new((real, synth))));
    }

    /// Appends one response. Checks and the file append happen under one lock.
    pub fn record(
        &self,
        rater_id: &str,
        item_id: &str,
        judgment: Judgment,
        rationale: Option<String>,
    ) -> std::result::Result<(), RecordError> {
        if self.definition.item(item_id).is_none() {
            return Err(RecordError::UnknownItem(item_id.to_string()));
        }
        let mut r = self.responses.lock().expect("response lock");
        let key = (rater_id.to_string(), item_id.to_string());
        if r.seen.contains(&key) {
            return Err(RecordError::Duplicate {
                rater_id: key.0,
                item_id: key.1,
            });
        }
        let line = LogLine {
            survey_id: self.definition.survey_id.clone(),
            rater_id: rater_id.to_string(),
            item_id: item_id.to_string(),
            judgment,
            rationale,
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        };
        let mut text = serde_json::to_string(&line).expect("log line serializes");
        text.push('\n');
        let path = self.log_path();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&path, e))?;
        r.seen.insert(key);
        r.lines.push(line);
        Ok(())
    }
}

/// All surveys under one root directory.
pub struct SurveyStore {
    root: PathBuf,
    surveys: RwLock<HashMap<String, Arc<SurveyEntry>>>,
}

impl SurveyStore {
    /// Opens `root`, replaying every survey found in it.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut surveys = HashMap::new();
        let entries = std::fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
        for entry in entries {
            let dir = entry.map_err(|e| Error::io(&root, e))?.path();
            if dir.join(DEFINITION_FILE).is_file() {
                let e = SurveyEntry::open(dir)?;
                surveys.insert(e.definition.survey_id.clone(), Arc::new(e));
            }
        }
        Ok(SurveyStore {
            root,
            surveys: RwLock::new(surveys),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers a survey, writing its files unless it already exists.
    pub fn insert(&self, def: SurveyDefinition, pools: Option<(ImageSet, ImageSet)>) -> Result<Arc<SurveyEntry>> {
        let mut map = self.surveys.write().expect("store lock");
        if let Some(existing) = map.get(&def.survey_id) {
            return Ok(existing.clone());
        }
        let dir = save_survey(&def, &self.root)?;
        let entry = SurveyEntry::open(dir)?;
        if let Some((r, s)) = pools {
            entry.attach_pools(r, s);
        }
        let entry = Arc::new(entry);
        map.insert(def.survey_id.clone(), entry.clone());
        Ok(entry)
    }

    pub fn get(&self, survey_id: &str) -> Option<Arc<SurveyEntry>> {
        self.surveys.read().expect("store lock").get(survey_id).cloned()
    }

    /// Survey owning an item id of the form `<survey_id>-<nn>`.
    pub fn find_item(&self, item_id: &str) -> Option<Arc<SurveyEntry>> {
        let (survey_id, _) = item_id.rsplit_once('-')?;
        self.get(survey_id).filter(|e| e.definition.item(item_id).is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{Modality, Provenance, Volume};
    use ndarray::Array2;

    pub(crate) fn pool(id: &str, provenance: Provenance, n: usize) -> ImageSet {
        let slices = (0..n)
            .map(|i| SliceImage::new("v", i as u32, Modality::Ct, Array2::from_elem((4, 4), i as f32)).unwrap())
            .collect();
        ImageSet::new(id, provenance, (-1024.0, 3071.0), vec![Volume { volume_id: "v".into(), slices }]).unwrap()
    }

    #[test]
    fn balanced_and_deterministic() {
        let (r, s) = (pool("r", Provenance::Real, 30), pool("s", Provenance::Synthetic, 30));
        let a = make_survey(&r, &s, 10, 10, 7).unwrap();
        assert_eq!(a.items.len(), 20);
        assert_eq!(a.items.iter().filter(|i| i.truth == Truth::Real).count(), 10);
        assert_eq!(a, make_survey(&r, &s, 10, 10, 7).unwrap());
        let keys: HashSet<_> = a.items.iter().map(|i| (i.truth, i.slice_index)).collect();
        assert_eq!(keys.len(), 20);
        assert!(a.items[0].item_id.starts_with(&a.survey_id));
        assert!(a.items[0].item_id.ends_with("-01"));
    }

    #[test]
    fn seeds_give_distinct_orders() {
        let (r, s) = (pool("r", Provenance::Real, 10), pool("s", Provenance::Synthetic, 10));
        let orders: HashSet<Vec<(Truth, u32)>> = (0..100u64)
            .map(|seed| {
                make_survey(&r, &s, 10, 10, seed)
                    .unwrap()
                    .items
                    .iter()
                    .map(|i| (i.truth, i.slice_index))
                    .collect()
            })
            .collect();
        assert_eq!(orders.len(), 100);
    }

    #[test]
    fn pool_too_small() {
        let (r, s) = (pool("r", Provenance::Real, 3), pool("s", Provenance::Synthetic, 30));
        assert!(matches!(make_survey(&r, &s, 10, 10, 1), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn store_replays_log() {
        let dir = tempfile::tempdir().unwrap();
        let (r, s) = (pool("r", Provenance::Real, 10), pool("s", Provenance::Synthetic, 10));
        let def = make_survey(&r, &s, 2, 2, 3).unwrap();
        let id = def.survey_id.clone();
        let store = SurveyStore::open(dir.path()).unwrap();
        let e = store.insert(def.clone(), Some((r, s))).unwrap();
        e.record("dr1", &def.items[0].item_id, Judgment::Real, None).unwrap();
        e.record("dr1", &def.items[1].item_id, Judgment::Indeterminable, Some("edges".into())).unwrap();
        assert!(matches!(
            e.record("dr1", &def.items[1].item_id, Judgment::Real, None),
            Err(RecordError::Duplicate { .. })
        ));
        assert!(matches!(e.record("dr1", "nope", Judgment::Real, None), Err(RecordError::UnknownItem(_))));
        let before = e.stats().unwrap();
        assert!(store.find_item(&def.items[2].item_id).is_some());
        drop(store);
        let reopened = SurveyStore::open(dir.path()).unwrap();
        let e2 = reopened.get(&id).unwrap();
        assert_eq!(e2.num_responses(), 2);
        assert_eq!(e2.stats().unwrap(), before);
        assert!(matches!(
            e2.record("dr1", &def.items[0].item_id, Judgment::Real, None),
            Err(RecordError::Duplicate { .. })
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn log_keeps_rationale_and_unique_pairs(
            posts in proptest::collection::vec((0usize..3, 0usize..4, proptest::option::of("\\PC{0,40}")), 1..20),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let (r, s) = (pool("r", Provenance::Real, 4), pool("s", Provenance::Synthetic, 4));
            let def = make_survey(&r, &s, 2, 2, 5).unwrap();
            let store = SurveyStore::open(dir.path()).unwrap();
            let e = store.insert(def.clone(), None).unwrap();
            let mut accepted = Vec::new();
            for (rater, item, rationale) in posts {
                let rater = format!("r{rater}");
                let item = def.items[item].item_id.clone();
                match e.record(&rater, &item, Judgment::Synthetic, rationale.clone()) {
                    Ok(()) => accepted.push((rater, item, rationale)),
                    Err(RecordError::Duplicate { .. }) => {
                        proptest::prop_assert!(accepted.iter().any(|(a, b, _)| *a == rater && *b == item));
                    }
                    Err(other) => panic!("{other:?}"),
                }
            }
            drop(store);
            let text = std::fs::read_to_string(def_dir(dir.path(), &def.survey_id)).unwrap();
            let logged: Vec<(String, String, Option<String>)> = text
                .lines()
                .map(|l| {
                    let line: LogLine = serde_json::from_str(l).unwrap();
                    (line.rater_id, line.item_id, line.rationale)
                })
                .collect();
            proptest::prop_assert_eq!(logged, accepted);
        }
    }

    fn def_dir(root: &Path, id: &str) -> PathBuf {
        SurveyStore::open(root).unwrap().get(id).unwrap().log_path()
    }
}
