//! Labelled image trees, stratified splits, shuffled batches and the ELA tensor cache.
//!
//! A dataset root holds one directory per class (`Au/` for authentic and `Tp/`
//! for tampered by default). Every regular file below a class directory, at
//! any depth, is a candidate image.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use image::ImageReader;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ela::{ela_transform, ElaConfig, RgbImage};
use crate::error::{ensure, Error, Result};
use crate::loss::Label;
use crate::tensor::Tensor;

/// Environment variable that overrides the default cache directory.
pub const CACHE_DIR_ENV: &str = "ELACNN_CACHE_DIR";

/// Names of the per-class directories below a dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDirs {
    pub authentic: String,
    pub tampered: String,
}

impl Default for ClassDirs {
    fn default() -> Self {
        Self { authentic: "Au".into(), tampered: "Tp".into() }
    }
}

impl ClassDirs {
    fn get(&self, label: Label) -> &str {
        match label {
            Label::Authentic => &self.authentic,
            Label::Tampered => &self.tampered,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub path: PathBuf,
    pub label: Label,
}

/// A file that was found but not admitted to the manifest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skipped {
    pub path: PathBuf,
    pub reason: String,
}

/// Labelled image paths in sorted path order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    root: PathBuf,
    entries: Vec<Entry>,
    skipped: Vec<Skipped>,
}

impl DatasetManifest {
    /// Builds a manifest from explicit entries, sorted by path.
    pub fn new(root: impl Into<PathBuf>, mut entries: Vec<Entry>) -> Self {
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        Self { root: root.into(), entries, skipped: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Files under the class directories that could not be read as images.
    pub fn skipped(&self) -> &[Skipped] {
        &self.skipped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Writes `path,label` rows with a header line.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = csv::Writer::from_writer(Vec::new());
        let rows = std::iter::once(["path".to_string(), "label".to_string()])
            .chain(self.entries.iter().map(|e| [e.path.display().to_string(), e.label.to_string()]));
        for row in rows {
            out.write_record(&row).expect("writing to memory cannot fail");
        }
        let bytes = out.into_inner().expect("writing to memory cannot fail");
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Scans `root/Au` and `root/Tp`.
pub fn scan_directory(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    scan_directory_with(root, &ClassDirs::default())
}

/// Scans the two class directories below `root` recursively.
///
/// Each file's header is probed; files that are unreadable or not a supported
/// image format are recorded in [`DatasetManifest::skipped`] instead of failing
/// the scan.
pub fn scan_directory_with(root: impl AsRef<Path>, dirs: &ClassDirs) -> Result<DatasetManifest> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Ingestion(format!("dataset root {} is not a directory", root.display())));
    }
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for label in Label::ALL {
        let dir = root.join(dirs.get(label));
        if !dir.is_dir() {
            continue;
        }
        let mut files = Vec::new();
        collect_files(&dir, &mut files)?;
        for path in files {
            match probe_image(&path) {
                Ok(()) => entries.push(Entry { path, label }),
                Err(reason) => skipped.push(Skipped { path, reason }),
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::Ingestion(format!(
            "no readable images under {}/{} or {}/{}",
            root.display(),
            dirs.authentic,
            root.display(),
            dirs.tampered
        )));
    }
    let mut manifest = DatasetManifest::new(root, entries);
    skipped.sort_by(|a, b| a.path.cmp(&b.path));
    manifest.skipped = skipped;
    Ok(manifest)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let listing = fs::read_dir(dir).map_err(|e| Error::Ingestion(format!("cannot list {}: {e}", dir.display())))?;
    for item in listing {
        let item = item.map_err(|e| Error::Ingestion(format!("cannot list {}: {e}", dir.display())))?;
        let path = item.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if path.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

fn probe_image(path: &Path) -> std::result::Result<(), String> {
    let reader = ImageReader::open(path).map_err(|e| e.to_string())?;
    let reader = reader.with_guessed_format().map_err(|e| e.to_string())?;
    if reader.format().is_none() {
        return Err("not a recognised image format".into());
    }
    let (w, h) = reader.into_dimensions().map_err(|e| e.to_string())?;
    if w == 0 || h == 0 {
        return Err("image has no pixels".into());
    }
    Ok(())
}

/// Manifest positions assigned to training and validation.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training items taken from a class of `n`: `⌈ratio·n⌉`, kept
/// within `1..=n-1` so both sides see every class.
pub fn train_count(n: usize, ratio: f64) -> usize {
    let wanted = (ratio * n as f64 - 1e-9).ceil().max(0.0) as usize;
    wanted.clamp(1, n.saturating_sub(1).max(1))
}

/// Shuffles each class with its own seeded stream and sends the first
/// [`train_count`] items of each to training. Both lists are sorted.
pub fn split_stratified(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<SplitIndices> {
    ensure!(ratio > 0.0 && ratio < 1.0, "split ratio must lie in (0, 1), got {ratio}");
    let mut train = Vec::new();
    let mut val = Vec::new();
    for label in Label::ALL {
        let mut members: Vec<usize> =
            manifest.entries.iter().enumerate().filter(|(_, e)| e.label == label).map(|(i, _)| i).collect();
        if members.len() < 2 {
            return Err(Error::Split(format!(
                "class {label} has {} image(s); at least 2 are needed to split",
                members.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.index() as u64);
        members.shuffle(&mut rng);
        let cut = train_count(members.len(), ratio);
        train.extend_from_slice(&members[..cut]);
        val.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(SplitIndices { train, val, seed, ratio })
}

/// Shuffles `indices` for one epoch and cuts them into batches; the last batch
/// may be short.
pub fn batches(indices: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    ensure!(batch_size >= 1, "batch size must be at least 1");
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Stacked network inputs with one-hot targets.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `(k, height, width, 3)`.
    pub inputs: Tensor,
    /// `(k, 2)`.
    pub targets: Tensor,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn from_items(items: Vec<Tensor>, labels: Vec<Label>) -> Result<Self> {
        ensure!(!items.is_empty(), "a batch needs at least one item");
        ensure!(items.len() == labels.len(), "{} items but {} labels", items.len(), labels.len());
        let inputs = Tensor::stack(&items)?;
        let targets = labels.iter().flat_map(|l| l.one_hot()).collect();
        let targets = Tensor::new(&[labels.len(), 2], targets)?;
        Ok(Self { inputs, targets, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// On-disk store of ELA tensors keyed by image content and [`ElaConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorCache {
    dir: Option<PathBuf>,
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl TensorCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    /// Every lookup misses and nothing is written.
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    /// `$ELACNN_CACHE_DIR`, or `elacnn-cache` in the system temporary directory.
    pub fn from_env() -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(std::env::temp_dir().join("elacnn-cache")),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Hex SHA-256 over the file bytes followed by the configuration.
    pub fn key(bytes: &[u8], cfg: &ElaConfig) -> String {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        hasher.update([cfg.jpeg_quality]);
        hasher.update(cfg.target_width.to_le_bytes());
        hasher.update(cfg.target_height.to_le_bytes());
        hex(&hasher.finalize())
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.f32")))
    }

    /// Returns the cached tensor, or `None` on a miss or an unusable entry.
    pub fn get(&self, key: &str, cfg: &ElaConfig) -> Option<Tensor> {
        let bytes = fs::read(self.path_for(key)?).ok()?;
        let dims = [cfg.target_height as usize, cfg.target_width as usize, 3];
        if bytes.len() != dims.iter().product::<usize>() * 4 {
            return None;
        }
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        Tensor::new(&dims, data).ok()
    }

    /// Stores `tensor` as little-endian `f32` values via a temporary file and a rename.
    pub fn put(&self, key: &str, tensor: &Tensor) -> Result<()> {
        let Some(path) = self.path_for(key) else { return Ok(()) };
        let dir = path.parent().expect("cache entries live in the cache directory");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let unique = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = dir.join(format!(".{key}.{}.{unique}.tmp", std::process::id()));
        let mut bytes = Vec::with_capacity(tensor.len() * 4);
        for v in tensor.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let write = || -> std::io::Result<()> {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)
        };
        write().map_err(|e| {
            let _ = fs::remove_file(&tmp);
            Error::io(&path, e)
        })
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// ELA tensor of one file, through the cache.
pub fn load_item(path: &Path, cfg: &ElaConfig, cache: &TensorCache) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::decode(path, e))?;
    let key = TensorCache::key(&bytes, cfg);
    if let Some(t) = cache.get(&key, cfg) {
        return Ok(t);
    }
    let img = RgbImage::decode(&bytes).map_err(|e| match e {
        Error::Codec(reason) => Error::decode(path, reason),
        other => other,
    })?;
    let t = ela_transform(&img, cfg)?;
    cache.put(&key, &t)?;
    Ok(t)
}

/// Loads the manifest entries at `indices` in parallel, in index order.
///
/// The first failing item, in index order, aborts the batch.
pub fn load_batch(manifest: &DatasetManifest, indices: &[usize], cfg: &ElaConfig, cache: &TensorCache) -> Result<Batch> {
    cfg.validate()?;
    for &i in indices {
        ensure!(i < manifest.len(), "index {i} is outside a manifest of {} entries", manifest.len());
    }
    let results: Vec<Result<Tensor>> =
        indices.par_iter().map(|&i| load_item(&manifest.entries[i].path, cfg, cache)).collect();
    let items = results.into_iter().collect::<Result<Vec<_>>>()?;
    let labels = indices.iter().map(|&i| manifest.entries[i].label).collect();
    Batch::from_items(items, labels)
}

/// A finite, indexable set of labelled examples.
pub trait Examples {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Items at positions `0..len()`, stacked in the given order.
    fn load(&self, positions: &[usize]) -> Result<Batch>;
}

/// Some manifest entries, loaded through the ELA pipeline.
#[derive(Clone, Debug)]
pub struct ManifestSubset<'a> {
    pub manifest: &'a DatasetManifest,
    pub indices: Vec<usize>,
    pub ela: ElaConfig,
    pub cache: &'a TensorCache,
}

impl Examples for ManifestSubset<'_> {
    fn len(&self) -> usize {
        self.indices.len()
    }

    fn load(&self, positions: &[usize]) -> Result<Batch> {
        let mut picked = Vec::with_capacity(positions.len());
        for &p in positions {
            ensure!(p < self.indices.len(), "position {p} is outside a subset of {}", self.indices.len());
            picked.push(self.indices[p]);
        }
        load_batch(self.manifest, &picked, &self.ela, self.cache)
    }
}

/// Preprocessed tensors held in memory.
#[derive(Clone, Debug, Default)]
pub struct InMemory {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<Label>,
}

impl InMemory {
    pub fn new(inputs: Vec<Tensor>, labels: Vec<Label>) -> Result<Self> {
        ensure!(inputs.len() == labels.len(), "{} inputs but {} labels", inputs.len(), labels.len());
        Ok(Self { inputs, labels })
    }
}

impl Examples for InMemory {
    fn len(&self) -> usize {
        self.inputs.len()
    }

    fn load(&self, positions: &[usize]) -> Result<Batch> {
        let mut items = Vec::with_capacity(positions.len());
        let mut labels = Vec::with_capacity(positions.len());
        for &p in positions {
            ensure!(p < self.inputs.len(), "position {p} is outside a set of {}", self.inputs.len());
            items.push(self.inputs[p].clone());
            labels.push(self.labels[p]);
        }
        Batch::from_items(items, labels)
    }
}
