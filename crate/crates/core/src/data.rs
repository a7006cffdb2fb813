//! Datasets of precomputed per-frame features, their on-disk formats, and
//! synthetic multimodal generators.
//!
//! A dataset directory holds `manifest.json` and `records.jsonl`:
//!
//! ```text
//! manifest.json  {"format":"vidfuse-dataset","version":1,
//!                 "classes":[...],"dims":{"spatial":ds,"motion":dm,"audio":da},
//!                 "splits":null | {"train":[ids],"validation":[ids],"test":[ids]}}
//! records.jsonl  one object per line:
//!                {"id":"..","label":k,"spatial":[[..],..],"motion":[[..],..],"audio":[..] | null}
//! ```
//!
//! A `null` audio field loads as a zero vector with `audio_present = false`.
//! Numbers are written as shortest round-trip decimals.
//!
//! The packed binary form (`write_packed` / `read_packed`) is
//! `b"VFDS"`, `u32` version, `u64` manifest length, manifest JSON, `u64`
//! record count, then per record: `u64` id length, id bytes, `u64` label,
//! `u8` audio flag, and the spatial, motion and audio arrays each as `u64`
//! rows, `u64` cols, then `f64` values. All integers and floats are
//! little-endian.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read as _};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::{video_level_pool, VideoLevelFeatures};
use crate::linalg::{Matrix, RngStream};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
const FORMAT_TAG: &str = "vidfuse-dataset";
const FORMAT_VERSION: u32 = 1;
const PACKED_MAGIC: &[u8; 4] = b"VFDS";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("record {id}: {message}")]
    Record { id: String, message: String },
    #[error("duplicate record id {0}")]
    DuplicateId(String),
    #[error("class {class} has {count} samples, too few for split {split}")]
    ClassTooSmall {
        class: String,
        count: usize,
        split: &'static str,
    },
    #[error("invalid split fractions: {0}")]
    Fractions(String),
    #[error("invalid synthetic config: {0}")]
    Synth(String),
    #[error("packed file: {0}")]
    Packed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDims {
    pub spatial: usize,
    pub motion: usize,
    pub audio: usize,
}

impl FeatureDims {
    pub fn as_array(&self) -> [usize; 3] {
        [self.spatial, self.motion, self.audio]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn get(&self, split: SplitName) -> &[String] {
        match split {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub dims: FeatureDims,
    pub splits: Option<Splits>,
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    manifest: DatasetManifest,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn to_json(&self) -> String {
        let file = ManifestFile {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            manifest: self.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        let file: ManifestFile =
            serde_json::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(DataError::Manifest(format!(
                "unknown format {:?}",
                file.format
            )));
        }
        if file.version != FORMAT_VERSION {
            return Err(DataError::Manifest(format!(
                "unsupported version {} (expected {FORMAT_VERSION})",
                file.version
            )));
        }
        file.manifest.validate()?;
        Ok(file.manifest)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.classes.is_empty() {
            return Err(DataError::Manifest("no classes".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.classes {
            if c.is_empty() || c.contains(['\t', '\n', '\r']) || !seen.insert(c) {
                return Err(DataError::Manifest(format!(
                    "bad or duplicate class name {c:?}"
                )));
            }
        }
        if self.dims.as_array().contains(&0) {
            return Err(DataError::Manifest("feature dims must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub label: usize,
    /// `T × d_s` frame features.
    pub spatial: Matrix,
    /// `T_m × d_m` optical-flow features.
    pub motion: Matrix,
    pub audio: Vec<f64>,
    pub audio_present: bool,
}

impl VideoRecord {
    /// Mean-pooled spatial and motion descriptors plus the audio vector.
    pub fn video_level(&self) -> VideoLevelFeatures {
        VideoLevelFeatures {
            spatial: video_level_pool(&self.spatial).expect("validated records are non-empty"),
            motion: video_level_pool(&self.motion).expect("validated records are non-empty"),
            audio: self.audio.clone(),
        }
    }

    fn validate(&self, manifest: &DatasetManifest) -> Result<(), DataError> {
        let bad = |message: String| DataError::Record {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() || self.id.contains(['\t', '\n', '\r']) {
            return Err(bad("invalid id".into()));
        }
        if self.label >= manifest.num_classes() {
            return Err(bad(format!(
                "label {} out of range for {} classes",
                self.label,
                manifest.num_classes()
            )));
        }
        for (name, m, d) in [
            ("spatial", &self.spatial, manifest.dims.spatial),
            ("motion", &self.motion, manifest.dims.motion),
        ] {
            if m.rows() == 0 {
                return Err(bad(format!("{name} sequence is empty")));
            }
            if m.cols() != d {
                return Err(bad(format!(
                    "{name} dim {} does not match manifest {d}",
                    m.cols()
                )));
            }
            if !m.is_finite() {
                return Err(bad(format!("{name} has non-finite values")));
            }
        }
        if self.audio.len() != manifest.dims.audio {
            return Err(bad(format!(
                "audio dim {} does not match manifest {}",
                self.audio.len(),
                manifest.dims.audio
            )));
        }
        if !self.audio.iter().all(|v| v.is_finite()) {
            return Err(bad("audio has non-finite values".into()));
        }
        if !self.audio_present && self.audio.iter().any(|&v| v != 0.0) {
            return Err(bad("absent audio must be a zero vector".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    label: usize,
    spatial: Vec<Vec<f64>>,
    motion: Vec<Vec<f64>>,
    audio: Option<Vec<f64>>,
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.to_vec()).collect()
}

fn rows_matrix(rows: &[Vec<f64>], name: &str) -> Result<Matrix, String> {
    if rows.is_empty() {
        return Err(format!("{name} sequence is empty"));
    }
    Matrix::from_rows(rows).map_err(|_| format!("{name} rows have unequal lengths"))
}

/// An in-memory dataset in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub records: Vec<VideoRecord>,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, records: Vec<VideoRecord>) -> Result<Self, DataError> {
        let d = Self { manifest, records };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        self.manifest.validate()?;
        let mut ids = HashSet::with_capacity(self.records.len());
        for r in &self.records {
            r.validate(&self.manifest)?;
            if !ids.insert(r.id.as_str()) {
                return Err(DataError::DuplicateId(r.id.clone()));
            }
        }
        if let Some(splits) = &self.manifest.splits {
            let mut assigned = HashSet::with_capacity(ids.len());
            for s in SplitName::ALL {
                for id in splits.get(s) {
                    if !ids.contains(id.as_str()) {
                        return Err(DataError::Manifest(format!(
                            "split {} lists unknown id {id}",
                            s.name()
                        )));
                    }
                    if !assigned.insert(id.as_str()) {
                        return Err(DataError::Manifest(format!(
                            "id {id} is in more than one split"
                        )));
                    }
                }
            }
            if let Some(r) = self
                .records
                .iter()
                .find(|r| !assigned.contains(r.id.as_str()))
            {
                return Err(DataError::Manifest(format!(
                    "record {} is in no split",
                    r.id
                )));
            }
        }
        Ok(())
    }

    /// Records of one split in file order.
    pub fn split(&self, split: SplitName) -> Result<Vec<&VideoRecord>, DataError> {
        let splits = self
            .manifest
            .splits
            .as_ref()
            .ok_or_else(|| DataError::Manifest("dataset has no split assignment".into()))?;
        let wanted: HashSet<&str> = splits.get(split).iter().map(String::as_str).collect();
        Ok(self
            .records
            .iter()
            .filter(|r| wanted.contains(r.id.as_str()))
            .collect())
    }

    pub fn records_to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = RecordLine {
                id: r.id.clone(),
                label: r.label,
                spatial: matrix_rows(&r.spatial),
                motion: matrix_rows(&r.motion),
                audio: r.audio_present.then(|| r.audio.clone()),
            };
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }
}

/// Writes `manifest.json` and `records.jsonl` into `dir`, creating it.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let m = dir.join(MANIFEST_FILE);
    std::fs::write(&m, dataset.manifest.to_json()).map_err(io_err(&m))?;
    let r = dir.join(RECORDS_FILE);
    std::fs::write(&r, dataset.records_to_jsonl()).map_err(io_err(&r))?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let m = dir.join(MANIFEST_FILE);
    let manifest = DatasetManifest::from_json(&std::fs::read_to_string(&m).map_err(io_err(&m))?)?;
    let rp: PathBuf = dir.join(RECORDS_FILE);
    let file = std::fs::File::open(&rp).map_err(io_err(&rp))?;
    let mut records = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(&rp))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| DataError::Parse {
            path: rp.display().to_string(),
            line: k + 1,
            message,
        };
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        let rec_err = |message: String| DataError::Record {
            id: raw.id.clone(),
            message,
        };
        let spatial = rows_matrix(&raw.spatial, "spatial").map_err(rec_err)?;
        let motion = rows_matrix(&raw.motion, "motion").map_err(rec_err)?;
        let (audio, audio_present) = match raw.audio {
            Some(a) => (a, true),
            None => (vec![0.0; manifest.dims.audio], false),
        };
        records.push(VideoRecord {
            id: raw.id,
            label: raw.label,
            spatial,
            motion,
            audio,
            audio_present,
        });
    }
    Dataset::new(manifest, records)
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_array(buf: &mut Vec<u8>, rows: usize, cols: usize, values: &[f64]) {
    put_u64(buf, rows as u64);
    put_u64(buf, cols as u64);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_packed(dataset: &Dataset) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PACKED_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let manifest = dataset.manifest.to_json();
    put_u64(&mut buf, manifest.len() as u64);
    buf.extend_from_slice(manifest.as_bytes());
    put_u64(&mut buf, dataset.records.len() as u64);
    for r in &dataset.records {
        put_u64(&mut buf, r.id.len() as u64);
        buf.extend_from_slice(r.id.as_bytes());
        put_u64(&mut buf, r.label as u64);
        buf.push(u8::from(r.audio_present));
        put_array(
            &mut buf,
            r.spatial.rows(),
            r.spatial.cols(),
            r.spatial.as_slice(),
        );
        put_array(
            &mut buf,
            r.motion.rows(),
            r.motion.cols(),
            r.motion.as_slice(),
        );
        put_array(&mut buf, 1, r.audio.len(), &r.audio);
    }
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DataError::Packed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn size(&mut self) -> Result<usize, DataError> {
        usize::try_from(self.u64()?).map_err(|_| DataError::Packed("size overflow".into()))
    }

    fn array(&mut self) -> Result<Matrix, DataError> {
        let rows = self.size()?;
        let cols = self.size()?;
        let n = rows
            .checked_mul(cols)
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.bytes.len()))
            .ok_or_else(|| DataError::Packed("array too large".into()))?;
        let raw = self.take(n * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Matrix::from_vec(rows, cols, data).expect("length matches"))
    }
}

pub fn from_packed(bytes: &[u8]) -> Result<Dataset, DataError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != PACKED_MAGIC {
        return Err(DataError::Packed("bad magic".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(DataError::Packed(format!("unsupported version {version}")));
    }
    let mlen = c.size()?;
    let text = std::str::from_utf8(c.take(mlen)?)
        .map_err(|_| DataError::Packed("manifest is not UTF-8".into()))?;
    let manifest = DatasetManifest::from_json(text)?;
    let n = c.size()?;
    let mut records = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let idlen = c.size()?;
        let id = String::from_utf8(c.take(idlen)?.to_vec())
            .map_err(|_| DataError::Packed("id is not UTF-8".into()))?;
        let label = c.size()?;
        let audio_present = match c.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(DataError::Packed(format!("bad audio flag {b}"))),
        };
        let spatial = c.array()?;
        let motion = c.array()?;
        let audio = c.array()?.into_vec();
        records.push(VideoRecord {
            id,
            label,
            spatial,
            motion,
            audio,
            audio_present,
        });
    }
    if c.pos != bytes.len() {
        return Err(DataError::Packed("trailing bytes".into()));
    }
    Dataset::new(manifest, records)
}

pub fn write_packed(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, to_packed(dataset)).map_err(io_err(path))
}

pub fn read_packed(path: &Path) -> Result<Dataset, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    from_packed(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

/// Stratified split: each class's records are shuffled and cut by rounded
/// fractions. Splits with a positive fraction must receive at least one
/// record of every class.
pub fn split_dataset(
    dataset: &Dataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    let f = [fractions.train, fractions.validation, fractions.test];
    if f.iter().any(|v| !(0.0..=1.0).contains(v)) || ((f[0] + f[1] + f[2]) - 1.0).abs() > 1e-9 {
        return Err(DataError::Fractions(format!(
            "{} + {} + {} must be nonnegative and sum to 1",
            f[0], f[1], f[2]
        )));
    }
    let rng = RngStream::new(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, r) in dataset.records.iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }
    let mut assignment: HashMap<usize, SplitName> = HashMap::with_capacity(dataset.records.len());
    for (&class, members) in &by_class {
        let n = members.len();
        let mut order = members.clone();
        rng.fork(class as u64).shuffle(&mut order);
        let n_val = (n as f64 * f[1]).round() as usize;
        let n_test = (n as f64 * f[2]).round() as usize;
        let counts = [n.saturating_sub(n_val + n_test), n_val, n_test];
        for (k, s) in SplitName::ALL.iter().enumerate() {
            if f[k] > 0.0 && counts[k] == 0 || n_val + n_test > n {
                return Err(DataError::ClassTooSmall {
                    class: dataset.manifest.classes[class].clone(),
                    count: n,
                    split: s.name(),
                });
            }
        }
        for (pos, &i) in order.iter().enumerate() {
            let s = if pos < counts[0] {
                SplitName::Train
            } else if pos < counts[0] + counts[1] {
                SplitName::Validation
            } else {
                SplitName::Test
            };
            assignment.insert(i, s);
        }
    }
    let mut splits = Splits::default();
    for (i, r) in dataset.records.iter().enumerate() {
        let list = match assignment[&i] {
            SplitName::Train => &mut splits.train,
            SplitName::Validation => &mut splits.validation,
            SplitName::Test => &mut splits.test,
        };
        list.push(r.id.clone());
    }
    Ok(DatasetManifest {
        splits: Some(splits),
        ..dataset.manifest.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalMode {
    #[default]
    Stateless,
    OrderedSegments,
}

/// Synthetic generator settings. Per-modality arrays are ordered
/// spatial, motion, audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub samples_per_class: usize,
    /// Dimension of the class latent shared by all modalities.
    pub shared_dim: usize,
    /// Dimension of each modality's private latent.
    pub unique_dims: [usize; 3],
    /// Observed feature dims produced by the mixing maps.
    pub feature_dims: [usize; 3],
    /// Extra pure-noise feature columns appended per modality.
    pub nuisance_dims: [usize; 3],
    pub seq_len: usize,
    pub motion_seq_len: usize,
    pub noise: f64,
    /// Multipliers on `noise` for the observation noise of each modality.
    pub modality_noise: [f64; 3],
    /// Scale of the per-class shared latent means.
    pub class_separation: f64,
    /// Scale of the per-class private latent means.
    pub unique_separation: f64,
    pub temporal_mode: TemporalMode,
    pub segments: usize,
    pub segment_scale: f64,
    /// Give every class the same segment set, so order is the only
    /// temporal cue and it carries no information about the pair.
    pub shared_segments: bool,
    /// Per-modality multiplier on the class latent means. `0` removes all
    /// class level information from that modality.
    pub level_signal: [f64; 3],
    /// Disjoint class pairs. In ordered-segments mode the second class
    /// replays the first's segments in reverse order.
    pub confusable_pairs: Vec<(usize, usize)>,
    /// Distance between the latent means of paired classes.
    pub pair_offset: f64,
    pub audio_missing_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 6,
            samples_per_class: 40,
            shared_dim: 4,
            unique_dims: [2, 2, 2],
            feature_dims: [8, 8, 6],
            nuisance_dims: [0, 0, 0],
            seq_len: 6,
            motion_seq_len: 6,
            noise: 0.5,
            modality_noise: [1.0, 1.0, 1.0],
            class_separation: 1.0,
            unique_separation: 1.0,
            temporal_mode: TemporalMode::Stateless,
            segments: 3,
            segment_scale: 1.0,
            shared_segments: false,
            level_signal: [1.0, 1.0, 1.0],
            confusable_pairs: Vec::new(),
            pair_offset: 0.1,
            audio_missing_fraction: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Synth(m.into()));
        if self.num_classes == 0 || self.samples_per_class == 0 {
            return bad("num_classes and samples_per_class must be positive");
        }
        if self.shared_dim == 0 || self.unique_dims.contains(&0) || self.feature_dims.contains(&0) {
            return bad("latent and feature dims must be positive");
        }
        if self.seq_len == 0 || self.motion_seq_len == 0 {
            return bad("sequence lengths must be positive");
        }
        for v in [
            self.noise,
            self.class_separation,
            self.unique_separation,
            self.segment_scale,
            self.pair_offset,
        ]
        .iter()
        .chain(&self.modality_noise)
        .chain(&self.level_signal)
        {
            if !(v.is_finite() && *v >= 0.0) {
                return bad("scales must be finite and nonnegative");
            }
        }
        if !(0.0..=1.0).contains(&self.audio_missing_fraction) {
            return bad("audio_missing_fraction must be in [0, 1]");
        }
        if self.temporal_mode == TemporalMode::OrderedSegments
            && (self.segments == 0
                || self.seq_len % self.segments != 0
                || self.motion_seq_len % self.segments != 0)
        {
            return bad("sequence lengths must be multiples of segments");
        }
        let mut used = HashSet::new();
        for &(a, b) in &self.confusable_pairs {
            if a == b || a >= self.num_classes || b >= self.num_classes {
                return bad("confusable pairs must name two distinct classes in range");
            }
            if !used.insert(a) || !used.insert(b) {
                return bad("confusable pairs must be disjoint");
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> FeatureDims {
        FeatureDims {
            spatial: self.feature_dims[0] + self.nuisance_dims[0],
            motion: self.feature_dims[1] + self.nuisance_dims[1],
            audio: self.feature_dims[2] + self.nuisance_dims[2],
        }
    }
}

/// Sampled generative parameters of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthModel {
    config: SynthConfig,
    /// Per modality, `feature_dim × (shared + unique)`.
    mixing: [Matrix; 3],
    shared_means: Vec<Vec<f64>>,
    unique_means: Vec<[Vec<f64>; 3]>,
    /// Per class, the segment offsets in playback order.
    segment_offsets: Vec<Vec<Vec<f64>>>,
}

fn normal_vec(rng: &mut RngStream, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

impl SynthModel {
    pub fn sample(config: &SynthConfig) -> Result<Self, DataError> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed).fork(1);
        let k = config.shared_dim;
        let mixing = std::array::from_fn(|m| {
            let cols = k + config.unique_dims[m];
            let data = normal_vec(
                &mut rng,
                config.feature_dims[m] * cols,
                1.0 / (cols as f64).sqrt(),
            );
            Matrix::from_vec(config.feature_dims[m], cols, data).expect("sized")
        });
        let c = config.num_classes;
        let mut shared_means: Vec<Vec<f64>> = (0..c)
            .map(|_| normal_vec(&mut rng, k, config.class_separation))
            .collect();
        let mut unique_means: Vec<[Vec<f64>; 3]> = (0..c)
            .map(|_| {
                std::array::from_fn(|m| {
                    normal_vec(&mut rng, config.unique_dims[m], config.unique_separation)
                })
            })
            .collect();
        let mut partner: Vec<Option<usize>> = vec![None; c];
        for &(a, b) in &config.confusable_pairs {
            partner[b] = Some(a);
            let off = normal_vec(&mut rng, k, config.pair_offset);
            shared_means[b] = shared_means[a]
                .iter()
                .zip(&off)
                .map(|(x, o)| x + o)
                .collect();
            for m in 0..3 {
                let off = normal_vec(&mut rng, config.unique_dims[m], config.pair_offset);
                unique_means[b][m] = unique_means[a][m]
                    .iter()
                    .zip(&off)
                    .map(|(x, o)| x + o)
                    .collect();
            }
        }
        let mut segment_offsets = vec![Vec::new(); c];
        if config.temporal_mode == TemporalMode::OrderedSegments {
            let draw = |rng: &mut RngStream| -> Vec<Vec<f64>> {
                (0..config.segments)
                    .map(|_| normal_vec(rng, k, config.segment_scale))
                    .collect()
            };
            let common = config.shared_segments.then(|| draw(&mut rng));
            for class in 0..c {
                if partner[class].is_none() {
                    segment_offsets[class] = match &common {
                        Some(set) => set.clone(),
                        None => draw(&mut rng),
                    };
                }
            }
            for class in 0..c {
                if let Some(a) = partner[class] {
                    let mut rev = segment_offsets[a].clone();
                    rev.reverse();
                    segment_offsets[class] = rev;
                }
            }
        }
        Ok(Self {
            config: config.clone(),
            mixing,
            shared_means,
            unique_means,
            segment_offsets,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    fn observe(&self, m: usize, z: &[f64], offset: Option<&[f64]>, u: &[f64]) -> Vec<f64> {
        let mut latent: Vec<f64> = match offset {
            Some(d) => z.iter().zip(d).map(|(a, b)| a + b).collect(),
            None => z.to_vec(),
        };
        latent.extend_from_slice(u);
        let mut x = self.mixing[m].matvec(&latent).expect("sized");
        x.resize(x.len() + self.config.nuisance_dims[m], 0.0);
        x
    }

    fn segment_of(&self, t: usize, len: usize) -> usize {
        t * self.config.segments / len
    }

    fn mean_offset(&self, class: usize) -> Option<Vec<f64>> {
        let segs = &self.segment_offsets[class];
        if segs.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.config.shared_dim];
        for s in segs {
            mean.iter_mut()
                .zip(s)
                .for_each(|(a, b)| *a += b / segs.len() as f64);
        }
        Some(mean)
    }

    fn latent_means(&self, class: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let level = self.config.level_signal[m];
        (
            self.shared_means[class].iter().map(|v| level * v).collect(),
            self.unique_means[class][m]
                .iter()
                .map(|v| level * v)
                .collect(),
        )
    }

    /// Noise-free frame `t` of modality `m` (0 spatial, 1 motion) for `class`.
    pub fn frame_mean(&self, class: usize, m: usize, t: usize) -> Vec<f64> {
        let len = if m == 0 {
            self.config.seq_len
        } else {
            self.config.motion_seq_len
        };
        let offset = self.segment_offsets[class]
            .get(self.segment_of(t, len))
            .map(Vec::as_slice);
        let (z, u) = self.latent_means(class, m);
        self.observe(m, &z, offset, &u)
    }

    /// Noise-free audio vector for `class`.
    pub fn audio_mean(&self, class: usize) -> Vec<f64> {
        let off = self.mean_offset(class);
        let (z, u) = self.latent_means(class, 2);
        self.observe(2, &z, off.as_deref(), &u)
    }

    /// Generates `samples_per_class` records per class, ordered by class.
    pub fn generate(&self) -> Dataset {
        let cfg = &self.config;
        let mut rng = RngStream::new(cfg.seed).fork(2);
        let sigma = cfg.noise;
        let mut records = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
        for class in 0..cfg.num_classes {
            for i in 0..cfg.samples_per_class {
                let eps_z = normal_vec(&mut rng, cfg.shared_dim, sigma);
                let eps_u: [Vec<f64>; 3] =
                    std::array::from_fn(|m| normal_vec(&mut rng, cfg.unique_dims[m], sigma));
                let add = |a: Vec<f64>, b: &[f64]| -> Vec<f64> {
                    a.iter().zip(b).map(|(x, e)| x + e).collect()
                };
                let latent: [(Vec<f64>, Vec<f64>); 3] = std::array::from_fn(|m| {
                    let (z, u) = self.latent_means(class, m);
                    (add(z, &eps_z), add(u, &eps_u[m]))
                });
                let mut seqs = Vec::with_capacity(2);
                for (m, len) in [(0, cfg.seq_len), (1, cfg.motion_seq_len)] {
                    let mut data =
                        Vec::with_capacity(len * (cfg.feature_dims[m] + cfg.nuisance_dims[m]));
                    for t in 0..len {
                        let offset = self.segment_offsets[class]
                            .get(self.segment_of(t, len))
                            .map(Vec::as_slice);
                        let x = self.observe(m, &latent[m].0, offset, &latent[m].1);
                        data.extend(self.noisy(&mut rng, x, m));
                    }
                    let cols = cfg.feature_dims[m] + cfg.nuisance_dims[m];
                    seqs.push(Matrix::from_vec(len, cols, data).expect("sized"));
                }
                let off = self.mean_offset(class);
                let audio = self.noisy(
                    &mut rng,
                    self.observe(2, &latent[2].0, off.as_deref(), &latent[2].1),
                    2,
                );
                let audio_present = !(cfg.audio_missing_fraction > 0.0
                    && rng.next_f64() < cfg.audio_missing_fraction);
                let motion = seqs.pop().expect("two sequences");
                let spatial = seqs.pop().expect("two sequences");
                records.push(VideoRecord {
                    id: format!("v{class:03}-{i:04}"),
                    label: class,
                    spatial,
                    motion,
                    audio: if audio_present {
                        audio
                    } else {
                        vec![0.0; cfg.dims().audio]
                    },
                    audio_present,
                });
            }
        }
        Dataset {
            manifest: DatasetManifest {
                classes: (0..cfg.num_classes)
                    .map(|c| format!("class_{c:03}"))
                    .collect(),
                dims: cfg.dims(),
                splits: None,
            },
            records,
        }
    }

    fn noisy(&self, rng: &mut RngStream, mut x: Vec<f64>, m: usize) -> Vec<f64> {
        let f = self.config.feature_dims[m];
        let obs = self.config.noise * self.config.modality_noise[m];
        for (j, v) in x.iter_mut().enumerate() {
            let s = if j < f { obs } else { self.config.noise };
            *v += s * rng.normal();
        }
        x
    }
}

pub fn synth_generate(config: &SynthConfig) -> Result<Dataset, DataError> {
    Ok(SynthModel::sample(config)?.generate())
}

/// Canonical text of a dataset, used for byte-level comparisons.
pub fn dataset_fingerprint(dataset: &Dataset) -> String {
    let mut s = dataset.manifest.to_json();
    let _ = write!(s, "{}", dataset.records_to_jsonl());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> SynthConfig {
        SynthConfig {
            num_classes: 3,
            samples_per_class: 10,
            seq_len: 4,
            motion_seq_len: 2,
            ..Default::default()
        }
    }

    #[test]
    fn synth_shapes_and_histogram() {
        let d = synth_generate(&small()).unwrap();
        assert_eq!(d.records.len(), 30);
        for c in 0..3 {
            assert_eq!(d.records.iter().filter(|r| r.label == c).count(), 10);
        }
        let r = &d.records[0];
        assert_eq!(r.spatial.shape(), (4, 8));
        assert_eq!(r.motion.shape(), (2, 8));
        assert_eq!(r.audio.len(), 6);
        assert_eq!(r.id, "v000-0000");
    }

    #[test]
    fn synth_deterministic() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(dataset_fingerprint(&a), dataset_fingerprint(&b));
        let c = synth_generate(&SynthConfig { seed: 1, ..small() }).unwrap();
        assert_ne!(dataset_fingerprint(&a), dataset_fingerprint(&c));
    }

    #[test]
    fn noiseless_means_equal_generative_means() {
        let cfg = SynthConfig {
            noise: 0.0,
            nuisance_dims: [2, 1, 1],
            ..small()
        };
        let model = SynthModel::sample(&cfg).unwrap();
        let d = model.generate();
        for r in &d.records {
            for t in 0..cfg.seq_len {
                assert_eq!(r.spatial.row(t), model.frame_mean(r.label, 0, t).as_slice());
            }
            assert_eq!(r.audio, model.audio_mean(r.label));
        }
    }

    #[test]
    fn noisy_sample_means_within_four_sigma() {
        let cfg = SynthConfig {
            noise: 0.3,
            samples_per_class: 400,
            num_classes: 2,
            seq_len: 1,
            motion_seq_len: 1,
            ..Default::default()
        };
        let model = SynthModel::sample(&cfg).unwrap();
        let d = model.generate();
        for c in 0..2 {
            let xs: Vec<&VideoRecord> = d.records.iter().filter(|r| r.label == c).collect();
            let n = xs.len() as f64;
            let target = model.audio_mean(c);
            // Per-coordinate variance of a mixed latent plus observation noise.
            let cols = cfg.shared_dim + cfg.unique_dims[2];
            for j in 0..target.len() {
                let row_sq: f64 = (0..cols).map(|q| model.mixing[2][(j, q)].powi(2)).sum();
                let sd = cfg.noise * (row_sq + 1.0).sqrt();
                let mean = xs.iter().map(|r| r.audio[j]).sum::<f64>() / n;
                assert!(
                    (mean - target[j]).abs() <= 4.0 * sd / n.sqrt(),
                    "class {c} coord {j}"
                );
            }
        }
    }

    #[test]
    fn reversed_twin_has_equal_pooled_expectation() {
        let cfg = SynthConfig {
            num_classes: 2,
            samples_per_class: 1000,
            temporal_mode: TemporalMode::OrderedSegments,
            segments: 3,
            seq_len: 6,
            confusable_pairs: vec![(0, 1)],
            pair_offset: 0.0,
            noise: 0.5,
            ..Default::default()
        };
        let d = synth_generate(&cfg).unwrap();
        let pooled = |c: usize| {
            let xs: Vec<Vec<f64>> = d
                .records
                .iter()
                .filter(|r| r.label == c)
                .map(|r| r.video_level().spatial)
                .collect();
            let n = xs.len() as f64;
            (0..xs[0].len())
                .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n)
                .collect::<Vec<f64>>()
        };
        let (a, b) = (pooled(0), pooled(1));
        for (x, y) in a.iter().zip(&b) {
            // Two independent means with per-coordinate sd below 1.5 sigma.
            assert!(
                (x - y).abs() < 4.0 * 1.5 * 0.5 * (2.0f64 / 1000.0).sqrt(),
                "{x} vs {y}"
            );
        }
        let model = SynthModel::sample(&cfg).unwrap();
        assert_ne!(model.frame_mean(0, 0, 0), model.frame_mean(1, 0, 0));
        assert_eq!(model.frame_mean(0, 0, 0), model.frame_mean(1, 0, 5));
    }

    #[test]
    fn missing_audio_is_zero_and_flagged() {
        let d = synth_generate(&SynthConfig {
            audio_missing_fraction: 0.5,
            ..small()
        })
        .unwrap();
        let missing: Vec<&VideoRecord> = d.records.iter().filter(|r| !r.audio_present).collect();
        assert!(!missing.is_empty() && missing.len() < d.records.len());
        assert!(missing.iter().all(|r| r.audio.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn directory_round_trip_and_stable_bytes() {
        let mut d = synth_generate(&SynthConfig {
            audio_missing_fraction: 0.3,
            ..small()
        })
        .unwrap();
        d.manifest = split_dataset(&d, SplitFractions::default(), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, d);
        let first = std::fs::read(dir.path().join(RECORDS_FILE)).unwrap();
        write_dataset(&back, dir.path()).unwrap();
        assert_eq!(std::fs::read(dir.path().join(RECORDS_FILE)).unwrap(), first);
    }

    #[test]
    fn null_audio_loads_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = DatasetManifest {
            classes: vec!["a".into()],
            dims: FeatureDims {
                spatial: 1,
                motion: 1,
                audio: 2,
            },
            splits: None,
        };
        std::fs::write(dir.path().join(MANIFEST_FILE), manifest.to_json()).unwrap();
        std::fs::write(
            dir.path().join(RECORDS_FILE),
            "{\"id\":\"x\",\"label\":0,\"spatial\":[[1.0]],\"motion\":[[2.0]],\"audio\":null}\n",
        )
        .unwrap();
        let d = load_dataset(dir.path()).unwrap();
        assert_eq!(d.records[0].audio, vec![0.0, 0.0]);
        assert!(!d.records[0].audio_present);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let d = Dataset::new(synth_generate(&small()).unwrap().manifest, Vec::new()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), d);
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let d = synth_generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&d, dir.path()).unwrap();
        let p = dir.path().join(RECORDS_FILE);
        let text = std::fs::read_to_string(&p).unwrap();
        std::fs::write(&p, &text[..text.len() - 20]).unwrap();
        match load_dataset(dir.path()) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 30),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dim_mismatch_names_record() {
        let mut d = synth_generate(&small()).unwrap();
        d.records[4].audio.push(1.0);
        let err = d.validate().unwrap_err();
        assert!(err.to_string().contains(&d.records[4].id), "{err}");
    }

    #[test]
    fn packed_round_trip() {
        let mut d = synth_generate(&SynthConfig {
            audio_missing_fraction: 0.3,
            ..small()
        })
        .unwrap();
        d.manifest = split_dataset(&d, SplitFractions::default(), 1).unwrap();
        let bytes = to_packed(&d);
        assert_eq!(&bytes[..4], b"VFDS");
        assert_eq!(from_packed(&bytes).unwrap(), d);
        assert!(from_packed(&bytes[..bytes.len() - 1]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.vfds");
        write_packed(&d, &p).unwrap();
        assert_eq!(read_packed(&p).unwrap(), d);
    }

    #[test]
    fn split_all_train_and_too_small() {
        let d = synth_generate(&small()).unwrap();
        let m = split_dataset(
            &d,
            SplitFractions {
                train: 1.0,
                validation: 0.0,
                test: 0.0,
            },
            0,
        )
        .unwrap();
        let s = m.splits.unwrap();
        assert_eq!(s.train.len(), 30);
        assert!(s.validation.is_empty() && s.test.is_empty());
        let tiny = synth_generate(&SynthConfig {
            samples_per_class: 2,
            ..small()
        })
        .unwrap();
        assert!(matches!(
            split_dataset(&tiny, SplitFractions::default(), 0),
            Err(DataError::ClassTooSmall { .. })
        ));
        assert!(split_dataset(
            &d,
            SplitFractions {
                train: 0.5,
                validation: 0.1,
                test: 0.1
            },
            0
        )
        .is_err());
    }

    #[test]
    fn bad_synth_configs() {
        for cfg in [
            SynthConfig {
                noise: -1.0,
                ..small()
            },
            SynthConfig {
                shared_dim: 0,
                ..small()
            },
            SynthConfig {
                confusable_pairs: vec![(0, 1), (1, 2)],
                ..small()
            },
            SynthConfig {
                temporal_mode: TemporalMode::OrderedSegments,
                segments: 3,
                ..small()
            },
        ] {
            assert!(synth_generate(&cfg).is_err(), "{cfg:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn split_is_stratified_and_deterministic(seed in any::<u64>(), n in 10usize..40) {
            let d = synth_generate(&SynthConfig { samples_per_class: n, ..small() }).unwrap();
            let a = split_dataset(&d, SplitFractions::default(), seed).unwrap();
            prop_assert_eq!(&a, &split_dataset(&d, SplitFractions::default(), seed).unwrap());
            let mut with = d.clone();
            with.manifest = a;
            with.validate().unwrap();
            for (s, f) in [(SplitName::Validation, 0.1), (SplitName::Test, 0.2)] {
                let recs = with.split(s).unwrap();
                for c in 0..3 {
                    let k = recs.iter().filter(|r| r.label == c).count();
                    prop_assert_eq!(k, (n as f64 * f).round() as usize);
                }
            }
        }
    }
}
