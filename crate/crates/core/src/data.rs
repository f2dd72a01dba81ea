//! Dataset construction: seeded Gaussian blobs with label noise, long-tail
//! subsampling, mixup pairing, and CSV / IDX loaders.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inputs and labels, row-aligned.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.nrows() != labels.len() {
            return Err(Error::Shape {
                expected: inputs.nrows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Domain(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let mut class_counts = vec![0; num_classes];
        for &l in &labels {
            class_counts[l] += 1;
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
            class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let inputs = self.inputs.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(inputs, labels, self.num_classes).expect("subset of a valid dataset")
    }

    /// Re-labels the class count, e.g. to align a split missing a class.
    pub fn with_num_classes(self, num_classes: usize) -> Result<Dataset> {
        Dataset::new(self.inputs, self.labels, num_classes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub within_std: f64,
    pub mean_radius: f64,
    #[serde(default)]
    pub label_noise: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be >= 2"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::config("samples_per_class", "must be >= 1"));
        }
        if !(self.within_std.is_finite() && self.within_std > 0.0) {
            return Err(Error::config("within_std", "must be > 0"));
        }
        if !(self.mean_radius.is_finite() && self.mean_radius > 0.0) {
            return Err(Error::config("mean_radius", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return Err(Error::config("label_noise", "must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Class centres: Gaussian directions scaled onto the `mean_radius` sphere.
pub fn blob_means(spec: &BlobSpec) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut means = Array2::zeros((spec.num_classes, spec.dim));
    for mut row in means.rows_mut() {
        loop {
            row.mapv_inplace(|_| rng.sample::<f64, _>(StandardNormal));
            let norm = row.dot(&row).sqrt();
            if norm > 1e-12 {
                row.mapv_inplace(|v| v / norm * spec.mean_radius);
                break;
            }
        }
    }
    means
}

fn sample_blobs(
    spec: &BlobSpec,
    means: &Array2<f64>,
    per_class: usize,
    label_noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Dataset> {
    let k = spec.num_classes;
    let n = k * per_class;
    let mut inputs = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in inputs.rows_mut().into_iter().enumerate() {
        let class = i / per_class;
        for (x, m) in row.iter_mut().zip(means.row(class)) {
            *x = m + spec.within_std * rng.sample::<f64, _>(StandardNormal);
        }
        let mut label = class;
        if label_noise > 0.0 && rng.random::<f64>() < label_noise {
            // Uniform over the K − 1 wrong classes.
            let shift = rng.random_range(1..k);
            label = (class + shift) % k;
        }
        labels.push(label);
    }
    Dataset::new(inputs, labels, k)
}

/// Class-major blob samples; a `label_noise` fraction of labels is replaced
/// by a uniformly drawn wrong class.
pub fn make_blobs(spec: &BlobSpec) -> Result<Dataset> {
    spec.validate()?;
    let means = blob_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    sample_blobs(
        spec,
        &means,
        spec.samples_per_class,
        spec.label_noise,
        &mut rng,
    )
}

/// A noisy training split from [`make_blobs`] plus a clean validation split
/// drawn around the same class centres.
pub fn make_blob_splits(spec: &BlobSpec, val_per_class: usize) -> Result<(Dataset, Dataset)> {
    let train = make_blobs(spec)?;
    if val_per_class == 0 {
        return Err(Error::config("val_per_class", "must be >= 1"));
    }
    let means = blob_means(spec);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(2);
    let val = sample_blobs(spec, &means, val_per_class, 0.0, &mut rng)?;
    Ok((train, val))
}

/// Exponential class-frequency decay from class 0 to class K − 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceSpec {
    /// Most-frequent over least-frequent class count.
    pub ratio: f64,
}

/// Per-class target counts `round(n_max · ratio^(−c/(K−1)))`, at least 1.
pub fn longtail_counts(n_max: usize, num_classes: usize, ratio: f64) -> Vec<usize> {
    (0..num_classes)
        .map(|c| {
            let exponent = if num_classes > 1 {
                -(c as f64) / (num_classes - 1) as f64
            } else {
                0.0
            };
            ((n_max as f64 * ratio.powf(exponent)).round() as usize).max(1)
        })
        .collect()
}

/// Keeps a seeded random subset of each class so counts follow the
/// exponential profile. Surviving rows keep their original relative order.
pub fn subsample_longtail(d: &Dataset, spec: &ImbalanceSpec, seed: u64) -> Result<Dataset> {
    if !(spec.ratio.is_finite() && spec.ratio >= 1.0) {
        return Err(Error::Domain(format!(
            "imbalance ratio must be >= 1, got {}",
            spec.ratio
        )));
    }
    let n_max = d.class_counts.iter().copied().max().unwrap_or(0);
    let targets = longtail_counts(n_max, d.num_classes, spec.ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (class, &target) in targets.iter().enumerate() {
        let mut members: Vec<usize> = (0..d.len()).filter(|&i| d.labels[i] == class).collect();
        if members.len() < target {
            return Err(Error::Domain(format!(
                "class {class} has {} samples, needs {target}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        keep.extend_from_slice(&members[..target]);
    }
    keep.sort_unstable();
    Ok(d.select(&keep))
}

/// One mixup pair: row `i` weighted by `lambda`, row `j` by `1 − lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixPair {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
}

/// Pairs every batch position with a shuffled partner and draws
/// `λ ~ Beta(a, a)` for each pair.
pub fn mixup_pairs(batch_len: usize, a: f64, seed: u64) -> Result<Vec<MixPair>> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::Domain(format!(
            "mixup concentration must be > 0, got {a}"
        )));
    }
    let beta = Beta::new(a, a).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut partners: Vec<usize> = (0..batch_len).collect();
    partners.shuffle(&mut rng);
    Ok(partners
        .into_iter()
        .enumerate()
        .map(|(i, j)| MixPair {
            i,
            j,
            lambda: beta.sample(&mut rng).clamp(0.0, 1.0),
        })
        .collect())
}

fn format_err(path: &Path, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        location: location.into(),
        message: message.into(),
    }
}

/// Reads `label,f0,f1,...` rows. The class count is `max label + 1`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);

    let header = reader.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(format_err(path, "line 1", "first column must be `label`"));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{i}") {
            return Err(format_err(
                path,
                "line 1",
                format!("expected column `f{i}`, found `{name}`"),
            ));
        }
    }
    let dim = header.len() - 1;

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let loc = format!("line {line}");
        if record.len() != dim + 1 {
            return Err(format_err(
                path,
                loc,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        let label: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| format_err(path, loc.clone(), format!("bad label `{}`", &record[0])))?;
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(path, loc.clone(), format!("bad value `{field}`")))?;
            if !v.is_finite() {
                return Err(format_err(path, loc.clone(), "non-finite value"));
            }
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(format_err(path, "line 2", "no data rows"));
    }
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let inputs =
        Array2::from_shape_vec((labels.len(), dim), values).expect("row lengths checked above");
    Dataset::new(inputs, labels, num_classes.max(2))
}

/// Writes `label,f0,f1,...` rows with shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, inputs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let mut header = vec!["label".to_string()];
    header.extend((0..inputs.ncols()).map(|i| format!("f{i}")));
    writer.write_record(&header)?;
    let mut fields = Vec::with_capacity(inputs.ncols() + 1);
    for (row, label) in inputs.rows().into_iter().zip(labels) {
        fields.clear();
        fields.push(label.to_string());
        fields.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&fields)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    offset: usize,
}

impl IdxReader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        let end = self
            .offset
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(format_err(
                self.path,
                format!("byte {}", self.offset),
                format!(
                    "truncated {what}: need {n} bytes, {} remain",
                    self.bytes.len() - self.offset
                ),
            ));
        };
        let out = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32("magic number")?;
        if magic != expected {
            return Err(format_err(
                self.path,
                "byte 0",
                format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}"),
            ));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image file (`0x00000803`, dims n × rows × cols) and its
/// label file (`0x00000801`). Pixels are scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;

    let mut images = IdxReader {
        path: images_path,
        bytes: &image_bytes,
        offset: 0,
    };
    images.magic(IDX_IMAGES_MAGIC)?;
    let n = images.u32("image count")? as usize;
    let rows = images.u32("row count")? as usize;
    let cols = images.u32("column count")? as usize;
    let pixels = images.take(n * rows * cols, "pixel data")?;
    let inputs = Array2::from_shape_vec(
        (n, rows * cols),
        pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )
    .expect("length is n * rows * cols");

    let mut labels_reader = IdxReader {
        path: labels_path,
        bytes: &label_bytes,
        offset: 0,
    };
    labels_reader.magic(IDX_LABELS_MAGIC)?;
    let label_count = labels_reader.u32("label count")? as usize;
    if label_count != n {
        return Err(format_err(
            labels_path,
            "byte 4",
            format!("{label_count} labels for {n} images"),
        ));
    }
    let labels: Vec<usize> = labels_reader
        .take(n, "label data")?
        .iter()
        .map(|&l| l as usize)
        .collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Dataset::new(inputs, labels, num_classes.max(2))
}
