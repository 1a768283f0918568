//! Dataset ingestion, synthesis, and splitting.
//!
//! Three sources feed the experiment harness:
//! - CSV tables (feature columns, final column = integer class label),
//! - a raw little-endian binary image format (magic `CAFD1`),
//! - seeded synthetic generators: Gaussian blobs and striped patches.
//!
//! [`split_dataset`] produces stratified train/val/test splits at fixed
//! 64/16/20 ratios with exact global sizes.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnkernel::Batch;

/// Magic prefix of the binary dataset format.
pub const DATA_MAGIC: &[u8; 5] = b"CAFD1";

/// Ratios of the train/val/test split.
pub const SPLIT_RATIOS: (f64, f64, f64) = (0.64, 0.16, 0.20);

/// An in-memory labelled dataset of dense `channels x h x w` samples.
/// Tabular data uses `h = w = 1` with one channel per feature.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub h: usize,
    pub w: usize,
    pub channels: usize,
    pub num_classes: usize,
    inputs: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        h: usize,
        w: usize,
        channels: usize,
        num_classes: usize,
        inputs: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if h == 0 || w == 0 || channels == 0 {
            return Err(Error::DataFormat("sample dimensions must be >= 1".into()));
        }
        if num_classes < 2 {
            return Err(Error::DataFormat("a labelled dataset needs at least 2 classes".into()));
        }
        let item = channels * h * w;
        if labels.len() * item != inputs.len() {
            return Err(Error::DataFormat(format!(
                "{} labels do not match {} values of {} per sample",
                labels.len(),
                inputs.len(),
                item
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::DataFormat(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset {
            h,
            w,
            channels,
            num_classes,
            inputs,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Values per sample.
    pub fn item_len(&self) -> usize {
        self.channels * self.h * self.w
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Copy the given samples into a batch, in index order.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let item = self.item_len();
        let mut inputs = Vec::with_capacity(indices.len() * item);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::DataFormat(format!("sample index {i} outside [0, {})", self.len())));
            }
            inputs.extend_from_slice(&self.inputs[i * item..(i + 1) * item]);
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, indices.len(), self.channels, self.h, self.w, labels)
    }

    /// The whole dataset as one batch.
    pub fn full_batch(&self) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::DataFormat("dataset is empty".into()));
        }
        Batch::new(
            self.inputs.clone(),
            self.len(),
            self.channels,
            self.h,
            self.w,
            self.labels.clone(),
        )
    }

    /// New dataset holding the given samples, in index order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let item = self.item_len();
        let mut inputs = Vec::with_capacity(indices.len() * item);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::DataFormat(format!("sample index {i} outside [0, {})", self.len())));
            }
            inputs.extend_from_slice(&self.inputs[i * item..(i + 1) * item]);
            labels.push(self.labels[i]);
        }
        Dataset::new(self.h, self.w, self.channels, self.num_classes, inputs, labels)
    }

    /// Concatenate two datasets with identical shape and class count.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if (self.h, self.w, self.channels, self.num_classes)
            != (other.h, other.w, other.channels, other.num_classes)
        {
            return Err(Error::DataFormat("cannot concatenate datasets of different shapes".into()));
        }
        let mut inputs = self.inputs.clone();
        inputs.extend_from_slice(&other.inputs);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(self.h, self.w, self.channels, self.num_classes, inputs, labels)
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Load a headerless CSV table: every column but the last is a feature
/// (f64), the last column is an integer class label starting at 0.
/// Samples become `1 x 1` "images" with one channel per feature.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::DataFormat(format!("{}: {e}", path.display())))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::DataFormat(format!("{}: {e}", path.display())))?;
        let cols = record.len();
        if cols < 2 {
            return Err(Error::DataFormat(format!(
                "{} row {}: need at least one feature column plus a label",
                path.display(),
                row + 1
            )));
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(Error::DataFormat(format!(
                    "{} row {}: {cols} columns, expected {w}",
                    path.display(),
                    row + 1
                )))
            }
            _ => {}
        }
        for field in record.iter().take(cols - 1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::DataFormat(format!("{} row {}: bad number {field:?}", path.display(), row + 1)))?;
            inputs.push(v);
        }
        let label_field = record.get(cols - 1).expect("checked length");
        let label: usize = label_field.trim().parse().map_err(|_| {
            Error::DataFormat(format!(
                "{} row {}: label {label_field:?} is not a non-negative integer",
                path.display(),
                row + 1
            ))
        })?;
        labels.push(label);
    }
    let width = width.ok_or_else(|| Error::DataFormat(format!("{}: empty file", path.display())))?;
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    if num_classes < 2 {
        return Err(Error::DataFormat(format!(
            "{}: labels span a single class; nothing to classify",
            path.display()
        )));
    }
    Dataset::new(1, 1, width - 1, num_classes, inputs, labels)
}

// ---------------------------------------------------------------------------
// Binary format: magic "CAFD1", little-endian header
// {u32 count, u16 h, u16 w, u16 channels, u16 num_classes},
// then per record {u16 label, f32 pixels[channels*h*w]} (channel-major).
// ---------------------------------------------------------------------------

pub fn write_binary(ds: &Dataset, out: &mut impl Write) -> Result<()> {
    let too_big = |what: &str| Error::DataFormat(format!("{what} too large for the binary format"));
    let count = u32::try_from(ds.len()).map_err(|_| too_big("sample count"))?;
    let h = u16::try_from(ds.h).map_err(|_| too_big("height"))?;
    let w = u16::try_from(ds.w).map_err(|_| too_big("width"))?;
    let c = u16::try_from(ds.channels).map_err(|_| too_big("channel count"))?;
    let ncls = u16::try_from(ds.num_classes).map_err(|_| too_big("class count"))?;
    out.write_all(DATA_MAGIC)?;
    out.write_all(&count.to_le_bytes())?;
    out.write_all(&h.to_le_bytes())?;
    out.write_all(&w.to_le_bytes())?;
    out.write_all(&c.to_le_bytes())?;
    out.write_all(&ncls.to_le_bytes())?;
    let item = ds.item_len();
    for i in 0..ds.len() {
        out.write_all(&(ds.labels[i] as u16).to_le_bytes())?;
        for &v in &ds.inputs[i * item..(i + 1) * item] {
            out.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_binary(ds: &Dataset, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_binary(ds, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn read_binary(input: &mut impl Read) -> Result<Dataset> {
    let truncated = || Error::DataFormat("binary dataset: truncated file".into());
    let mut magic = [0u8; 5];
    input.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != DATA_MAGIC {
        return Err(Error::DataFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(DATA_MAGIC)
        )));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf).map_err(|_| truncated())?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut u16buf = [0u8; 2];
    let mut read_u16 = |input: &mut dyn Read| -> Result<usize> {
        input.read_exact(&mut u16buf).map_err(|_| truncated())?;
        Ok(u16::from_le_bytes(u16buf) as usize)
    };
    let h = read_u16(input)?;
    let w = read_u16(input)?;
    let channels = read_u16(input)?;
    let num_classes = read_u16(input)?;
    if h == 0 || w == 0 || channels == 0 || num_classes < 2 {
        return Err(Error::DataFormat(format!(
            "binary dataset: bad header h={h} w={w} channels={channels} classes={num_classes}"
        )));
    }
    let item = channels * h * w;
    let mut inputs = Vec::with_capacity(count * item);
    let mut labels = Vec::with_capacity(count);
    let mut f32buf = [0u8; 4];
    let mut lblbuf = [0u8; 2];
    for _ in 0..count {
        input.read_exact(&mut lblbuf).map_err(|_| truncated())?;
        let label = u16::from_le_bytes(lblbuf) as usize;
        if label >= num_classes {
            return Err(Error::DataFormat(format!(
                "binary dataset: label {label} outside [0, {num_classes})"
            )));
        }
        labels.push(label);
        for _ in 0..item {
            input.read_exact(&mut f32buf).map_err(|_| truncated())?;
            inputs.push(f32::from_le_bytes(f32buf) as f64);
        }
    }
    let mut trailing = [0u8; 1];
    if input.read(&mut trailing)? != 0 {
        return Err(Error::DataFormat("binary dataset: trailing bytes after last record".into()));
    }
    Dataset::new(h, w, channels, num_classes, inputs, labels)
}

pub fn load_binary(path: &Path) -> Result<Dataset> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_binary(&mut file)
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Isotropic Gaussian blobs: `classes` cluster centres drawn uniformly in
/// [-1.5, 1.5]^dims, samples = centre + noise * N(0, 1). Labels cycle
/// round-robin so class counts differ by at most one. Tabular shape
/// (`h = w = 1`, one channel per dimension).
pub fn gaussian_blobs(classes: usize, dims: usize, samples: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::InvalidConfig("blobs need at least 2 classes".into()));
    }
    if dims == 0 {
        return Err(Error::InvalidConfig("blobs need at least 1 dimension".into()));
    }
    if samples < classes {
        return Err(Error::InvalidConfig(format!(
            "{samples} samples cannot cover {classes} classes"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise {noise} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<f64> = (0..classes * dims).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut inputs = Vec::with_capacity(samples * dims);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        for d in 0..dims {
            let eps: f64 = rng.sample(StandardNormal);
            inputs.push(centres[class * dims + d] + noise * eps);
        }
        labels.push(class);
    }
    Dataset::new(1, 1, dims, classes, inputs, labels)
}

/// Striped 8x8 single-channel patches, 10 classes: stripe orientation
/// (horizontal or vertical) x stripe period (2..=6). Each sample gets a
/// random phase, so class identity lives in orientation and frequency,
/// not in fixed pixel positions. `label = orientation * 5 + (period - 2)`.
pub fn striped_patches(samples: usize, noise: f64, seed: u64) -> Result<Dataset> {
    const SIDE: usize = 8;
    const PERIODS: [usize; 5] = [2, 3, 4, 5, 6];
    let classes = 2 * PERIODS.len();
    if samples < classes {
        return Err(Error::InvalidConfig(format!(
            "{samples} samples cannot cover {classes} classes"
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidConfig(format!("noise {noise} must be finite and >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(samples * SIDE * SIDE);
    let mut labels = Vec::with_capacity(samples);
    for i in 0..samples {
        let class = i % classes;
        let orientation = class / PERIODS.len();
        let period = PERIODS[class % PERIODS.len()];
        let phase = rng.random_range(0..period);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let coord = if orientation == 0 { y } else { x };
                let stripe = (coord + phase) % period < period.div_ceil(2);
                let base = if stripe { 0.8 } else { -0.8 };
                let eps: f64 = rng.sample(StandardNormal);
                inputs.push(base + noise * eps);
            }
        }
        labels.push(class);
    }
    Dataset::new(SIDE, SIDE, 1, classes, inputs, labels)
}

// ---------------------------------------------------------------------------
// Stratified splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Largest-remainder apportionment: split `total` across classes in
/// proportion to `weights`, respecting per-class `caps`. Deterministic;
/// remainder ties go to the lower class index.
fn apportion(weights: &[usize], total: usize, caps: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    debug_assert!(sum > 0);
    let mut shares: Vec<usize> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let exact = w as u128 * total as u128;
        shares.push((exact / sum) as usize);
        remainders.push((exact % sum, i));
    }
    // Hand out the apportionment residue by largest remainder.
    let assigned: usize = shares.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in remainders.iter().take(total.saturating_sub(assigned)) {
        shares[i] += 1;
    }
    // Push any excess above a class's capacity onto classes with room.
    let mut overflow = 0usize;
    for (share, &cap) in shares.iter_mut().zip(caps) {
        if *share > cap {
            overflow += *share - cap;
            *share = cap;
        }
    }
    while overflow > 0 {
        let i = (0..shares.len())
            .filter(|&i| shares[i] < caps[i])
            .max_by_key(|&i| caps[i] - shares[i])
            .expect("total never exceeds the summed caps");
        shares[i] += 1;
        overflow -= 1;
    }
    shares
}

/// Stratified train/val/test split at the given (train, val) fractions;
/// the test split takes the rest. Global sizes are exact
/// (`round(fraction * n)`); per-class quotas follow largest-remainder
/// apportionment. Each split must end up non-empty.
pub fn split_with_ratios(ds: &Dataset, train_frac: f64, val_frac: f64, seed: u64) -> Result<Splits> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fractions ({train_frac}, {val_frac}) must be positive and sum below 1"
        )));
    }
    let n = ds.len();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = (val_frac * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::DataFormat(format!(
            "dataset of {n} samples is too small for a {train_frac}/{val_frac} split"
        )));
    }
    let n_test = n - n_train - n_val;

    // Per-class index pools, shuffled once.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes];
    for i in 0..n {
        pools[ds.label(i)].push(i);
    }
    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }

    let counts: Vec<usize> = pools.iter().map(|p| p.len()).collect();
    let train_quota = apportion(&counts, n_train, &counts);
    let caps_after_train: Vec<usize> = counts.iter().zip(&train_quota).map(|(&c, &q)| c - q).collect();
    let val_quota = apportion(&counts, n_val, &caps_after_train);

    let mut train_idx = Vec::with_capacity(n_train);
    let mut val_idx = Vec::with_capacity(n_val);
    let mut test_idx = Vec::with_capacity(n_test);
    for (class, pool) in pools.iter().enumerate() {
        let t = train_quota[class];
        let v = val_quota[class];
        train_idx.extend_from_slice(&pool[..t]);
        val_idx.extend_from_slice(&pool[t..t + v]);
        test_idx.extend_from_slice(&pool[t + v..]);
    }
    debug_assert_eq!(train_idx.len(), n_train);
    debug_assert_eq!(val_idx.len(), n_val);
    debug_assert_eq!(test_idx.len(), n_test);

    Ok(Splits {
        train: ds.subset(&train_idx)?,
        val: ds.subset(&val_idx)?,
        test: ds.subset(&test_idx)?,
    })
}

/// [`split_with_ratios`] at the standard 64/16/20 ratios.
pub fn split_dataset(ds: &Dataset, seed: u64) -> Result<Splits> {
    split_with_ratios(ds, SPLIT_RATIOS.0, SPLIT_RATIOS.1, seed)
}

// ---------------------------------------------------------------------------
// Declarative source (for config files)
// ---------------------------------------------------------------------------

/// Where a dataset comes from; deserializable from experiment configs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: std::path::PathBuf,
    },
    Binary {
        path: std::path::PathBuf,
    },
    Blobs {
        classes: usize,
        dims: usize,
        samples: usize,
        #[serde(default = "default_blob_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Stripes {
        samples: usize,
        #[serde(default = "default_stripe_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_blob_noise() -> f64 {
    0.35
}

fn default_stripe_noise() -> f64 {
    0.30
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        self.load_from(std::path::Path::new("."))
    }

    /// Load with relative file paths resolved against `base` (synthetic
    /// sources ignore it).
    pub fn load_from(&self, base: &std::path::Path) -> Result<Dataset> {
        let resolve = |p: &std::path::Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match self {
            DataSource::Csv { path } => load_csv(&resolve(path)),
            DataSource::Binary { path } => load_binary(&resolve(path)),
            DataSource::Blobs {
                classes,
                dims,
                samples,
                noise,
                seed,
            } => gaussian_blobs(*classes, *dims, *samples, *noise, *seed),
            DataSource::Stripes { samples, noise, seed } => striped_patches(*samples, *noise, *seed),
        }
    }

    /// The file this source reads, if it reads one.
    pub fn file_path(&self) -> Option<std::path::PathBuf> {
        match self {
            DataSource::Csv { path } | DataSource::Binary { path } => Some(path.clone()),
            _ => None,
        }
    }
}
