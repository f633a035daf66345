//! Dataset generation, non-IID partitioning, and an IDX image loader.
//!
//! Synthetic Gaussian blobs stand in for image data at desk scale. Client
//! heterogeneity comes from Dirichlet-distributed per-class proportions:
//! smaller concentrations give clients more skewed class mixes. Real image
//! data can be supplied as IDX files; nothing is ever downloaded.

use std::path::Path;

use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::Batch;
use crate::rng::{self, Domain};

/// Distance of each class mean from the origin in [`synth_blobs`]. The
/// ratio of this to `spread` controls how separable the classes are.
pub const BLOB_SEPARATION: f64 = 3.0;

/// A labeled dataset: row-major inputs with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    d: usize,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, d: usize, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Domain("dataset must contain at least one sample".into()));
        }
        if d == 0 {
            return Err(Error::Domain("dataset width must be positive".into()));
        }
        if inputs.len() != labels.len() * d {
            return Err(Error::Consistency(format!(
                "dataset has {} values, expected {} rows x {} columns",
                inputs.len(),
                labels.len(),
                d
            )));
        }
        if !inputs.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "dataset input".into() });
        }
        let mut seen = vec![false; n_classes];
        for label in &labels {
            if *label >= n_classes {
                return Err(Error::Domain(format!(
                    "label {label} out of range for {n_classes} classes"
                )));
            }
            seen[*label] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Consistency(format!("class {missing} has no samples")));
        }
        Ok(Self { inputs, d, labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.d
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    /// The whole dataset as one batch.
    pub fn to_batch(&self) -> Result<Batch> {
        Batch::new(self.inputs.clone(), self.d, self.labels.clone())
    }

    /// The given rows as a batch, in the given order.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::Domain("cannot gather an empty shard".into()));
        }
        let mut inputs = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Domain(format!(
                    "sample index {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, self.d, labels)
    }
}

/// Balanced Gaussian blobs: class `c` is centered at `BLOB_SEPARATION`
/// times the `c`-th standard basis vector, with isotropic noise of the
/// given spread. Rows are grouped by class; one RNG stream per class.
pub fn synth_blobs(
    n_per_class: usize,
    d: usize,
    n_classes: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || d == 0 || n_classes == 0 {
        return Err(Error::Config("blob counts must all be at least 1".into()));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::Config(format!("blob spread must be positive, got {spread}")));
    }
    if d < n_classes {
        return Err(Error::Config(format!(
            "blob dimension {d} must be at least the class count {n_classes} so each class gets its own mean"
        )));
    }
    let mut inputs = Vec::with_capacity(n_per_class * n_classes * d);
    let mut labels = Vec::with_capacity(n_per_class * n_classes);
    for class in 0..n_classes {
        let mut stream = rng::stream(seed, Domain::TrainData, class as u64, 0);
        for _ in 0..n_per_class {
            for j in 0..d {
                let mean = if j == class { BLOB_SEPARATION } else { 0.0 };
                inputs.push(mean + spread * rng::standard_normal(&mut stream));
            }
            labels.push(class);
        }
    }
    Dataset::new(inputs, d, labels, n_classes)
}

/// Disjoint client shards covering a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn n_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn client(&self, i: usize) -> &[usize] {
        &self.assignments[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Checks the partition axioms against a dataset of `total` samples:
    /// pairwise disjoint, exactly covering, no client empty.
    pub fn validate(&self, total: usize) -> Result<()> {
        let mut seen = vec![false; total];
        let mut count = 0usize;
        for (client, shard) in self.assignments.iter().enumerate() {
            if shard.is_empty() {
                return Err(Error::Consistency(format!("client {client} has an empty shard")));
            }
            for &i in shard {
                if i >= total {
                    return Err(Error::Consistency(format!(
                        "client {client} holds out-of-range index {i}"
                    )));
                }
                if seen[i] {
                    return Err(Error::Consistency(format!(
                        "sample {i} assigned to more than one client"
                    )));
                }
                seen[i] = true;
                count += 1;
            }
        }
        if count != total {
            return Err(Error::Consistency(format!(
                "partition covers {count} of {total} samples"
            )));
        }
        Ok(())
    }
}

/// Splits samples across clients with per-class Dirichlet proportions.
///
/// For each class, proportions are drawn as normalized Gamma(α, 1) samples
/// and converted to integer counts by largest-remainder rounding. Clients
/// left under `min_per_client` are topped up from the largest client so no
/// shard is too small to train on.
pub fn dirichlet_partition(
    labels: &[usize],
    n_clients: usize,
    alpha: f64,
    seed: u64,
    min_per_client: usize,
) -> Result<Partition> {
    let total = labels.len();
    if n_clients == 0 {
        return Err(Error::Config("partition needs at least one client".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("Dirichlet alpha must be positive, got {alpha}")));
    }
    if n_clients > total {
        return Err(Error::Config(format!(
            "cannot split {total} samples across {n_clients} clients"
        )));
    }
    if min_per_client == 0 {
        return Err(Error::Config("min_per_client must be at least 1".into()));
    }
    if min_per_client * n_clients > total {
        return Err(Error::Config(format!(
            "{n_clients} clients x {min_per_client} minimum samples exceeds the {total} available"
        )));
    }

    let n_classes = labels.iter().max().copied().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, label) in labels.iter().enumerate() {
        by_class[*label].push(i);
    }

    let mut stream = rng::stream(seed, Domain::Partition, 0, 0);
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::Config(format!("invalid Dirichlet alpha {alpha}: {e}")))?;

    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for mut class_indices in by_class {
        if class_indices.is_empty() {
            continue;
        }
        rng::shuffle(&mut stream, &mut class_indices);

        let mut draws: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut stream)).collect();
        let mut sum: f64 = 0.0;
        for g in &draws {
            sum += g;
        }
        // With very small alpha every draw can underflow to zero; fall
        // back to uniform proportions rather than divide by zero.
        if sum <= 0.0 {
            draws = vec![1.0; n_clients];
            sum = n_clients as f64;
        }

        let counts = largest_remainder(&draws, sum, class_indices.len());
        let mut offset = 0;
        for (client, count) in counts.into_iter().enumerate() {
            assignments[client].extend_from_slice(&class_indices[offset..offset + count]);
            offset += count;
        }
    }

    // Steal-from-largest repair for clients below the floor. The
    // feasibility check above guarantees a donor strictly above the floor
    // exists whenever some client is below it. Ties go to the lowest id.
    loop {
        let mut recipient = 0;
        let mut donor = 0;
        for i in 1..n_clients {
            if assignments[i].len() < assignments[recipient].len() {
                recipient = i;
            }
            if assignments[i].len() > assignments[donor].len() {
                donor = i;
            }
        }
        if assignments[recipient].len() >= min_per_client {
            break;
        }
        let moved = assignments[donor].pop().ok_or_else(|| {
            Error::Consistency("partition repair found no sample to move".into())
        })?;
        assignments[recipient].push(moved);
    }

    let partition = Partition { assignments };
    partition.validate(total)?;
    Ok(partition)
}

/// Largest-remainder rounding of proportional shares `draws/sum` of `m`
/// items: exact total, remainders going to the largest fractional parts.
fn largest_remainder(draws: &[f64], sum: f64, m: usize) -> Vec<usize> {
    let mut counts = Vec::with_capacity(draws.len());
    let mut fractions: Vec<(usize, f64)> = Vec::with_capacity(draws.len());
    let mut assigned = 0usize;
    for (i, g) in draws.iter().enumerate() {
        let share = g / sum * m as f64;
        let base = share.floor() as usize;
        counts.push(base);
        assigned += base;
        fractions.push((i, share - base as f64));
    }
    fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in fractions.into_iter().take(m - assigned) {
        counts[i] += 1;
    }
    counts
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image/label file pair (the MNIST container format).
/// Pixels are scaled from bytes to [0, 1].
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;

    let mut img = IdxReader::new(&images, images_path);
    let magic = img.u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let n_images = img.u32()? as usize;
    let rows = img.u32()? as usize;
    let cols = img.u32()? as usize;
    let pixels = img.bytes(n_images * rows * cols)?;

    let mut lab = IdxReader::new(&labels, labels_path);
    let magic = lab.u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }
    let n_labels = lab.u32()? as usize;
    if n_labels != n_images {
        return Err(Error::Consistency(format!(
            "{n_images} images but {n_labels} labels"
        )));
    }
    let label_bytes = lab.bytes(n_labels)?;

    let inputs: Vec<f64> = pixels.iter().map(|b| *b as f64 / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|b| *b as usize).collect();
    let n_classes = labels.iter().max().copied().map_or(0, |m| m + 1);
    Dataset::new(inputs, rows * cols, labels, n_classes)
}

struct IdxReader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> IdxReader<'a> {
    fn new(data: &'a [u8], path: &'a Path) -> Self {
        Self { data, pos: 0, path }
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!(
                    "{}: needed {n} bytes at offset {}, file has {}",
                    self.path.display(),
                    self.pos,
                    self.data.len()
                ),
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.bytes(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_balanced() {
        let a = synth_blobs(50, 8, 4, 1.0, 5).unwrap();
        let b = synth_blobs(50, 8, 4, 1.0, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_blobs(50, 8, 4, 1.0, 6).unwrap());

        assert_eq!(a.len(), 200);
        for class in 0..4 {
            assert_eq!(a.labels().iter().filter(|l| **l == class).count(), 50);
        }
    }

    #[test]
    fn tight_blobs_are_nearest_mean_separable() {
        let data = synth_blobs(20, 4, 3, 1e-6, 9).unwrap();
        for i in 0..data.len() {
            let row = data.row(i);
            let mut best = 0;
            let mut best_dist = f64::INFINITY;
            for class in 0..3 {
                let mut dist = 0.0;
                for (j, x) in row.iter().enumerate() {
                    let mean = if j == class { BLOB_SEPARATION } else { 0.0 };
                    dist += (x - mean) * (x - mean);
                }
                if dist < best_dist {
                    best_dist = dist;
                    best = class;
                }
            }
            assert_eq!(best, data.labels()[i]);
        }
    }

    #[test]
    fn blobs_reject_bad_arguments() {
        assert!(synth_blobs(0, 4, 2, 1.0, 1).is_err());
        assert!(synth_blobs(10, 4, 2, 0.0, 1).is_err());
        assert!(synth_blobs(10, 2, 3, 1.0, 1).is_err());
    }

    fn balanced_labels(per_class: usize, n_classes: usize) -> Vec<usize> {
        (0..n_classes).flat_map(|c| std::iter::repeat(c).take(per_class)).collect()
    }

    #[test]
    fn partition_axioms_hold() {
        let labels = balanced_labels(100, 4);
        let p = dirichlet_partition(&labels, 20, 0.5, 42, 2).unwrap();
        assert_eq!(p.n_clients(), 20);
        p.validate(labels.len()).unwrap();
        assert!(p.sizes().iter().all(|s| *s >= 2));
    }

    #[test]
    fn partition_is_deterministic() {
        let labels = balanced_labels(50, 4);
        let a = dirichlet_partition(&labels, 10, 0.5, 7, 2).unwrap();
        let b = dirichlet_partition(&labels, 10, 0.5, 7, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, dirichlet_partition(&labels, 10, 0.5, 8, 2).unwrap());
    }

    #[test]
    fn near_iid_alpha_gives_near_uniform_class_mixes() {
        // alpha = 1000 makes every proportion close to 1/n_clients, so each
        // client's class histogram lands near uniform.
        let labels = balanced_labels(100, 4);
        let p = dirichlet_partition(&labels, 4, 1000.0, 11, 2).unwrap();
        for client in 0..4 {
            let shard = p.client(client);
            for class in 0..4 {
                let count = shard.iter().filter(|i| labels[**i] == class).count();
                let share = count as f64 / shard.len() as f64;
                assert!(
                    (share - 0.25).abs() <= 0.05,
                    "client {client} class {class} share {share}"
                );
            }
        }
    }

    #[test]
    fn small_alpha_produces_skewed_shards() {
        let labels = balanced_labels(100, 4);
        let p = dirichlet_partition(&labels, 4, 0.1, 11, 2).unwrap();
        let mut max_share: f64 = 0.0;
        for client in 0..4 {
            let shard = p.client(client);
            for class in 0..4 {
                let count = shard.iter().filter(|i| labels[**i] == class).count();
                max_share = max_share.max(count as f64 / shard.len() as f64);
            }
        }
        assert!(max_share > 0.6, "max single-class share {max_share}");
    }

    #[test]
    fn skew_decreases_with_alpha() {
        // Statistical check over 50 seeds: the mean (over clients) maximum
        // single-class share shrinks when alpha grows.
        let labels = balanced_labels(100, 4);
        let mean_max_share = |alpha: f64| -> f64 {
            let mut total = 0.0;
            for seed in 0..50u64 {
                let p = dirichlet_partition(&labels, 8, alpha, seed, 2).unwrap();
                let mut per_partition = 0.0;
                for client in 0..8 {
                    let shard = p.client(client);
                    let max = (0..4)
                        .map(|class| shard.iter().filter(|i| labels[**i] == class).count())
                        .max()
                        .unwrap();
                    per_partition += max as f64 / shard.len() as f64;
                }
                total += per_partition / 8.0;
            }
            total / 50.0
        };
        let skewed = mean_max_share(0.1);
        let mild = mean_max_share(10.0);
        assert!(skewed > mild, "alpha 0.1 gave {skewed}, alpha 10 gave {mild}");
    }

    #[test]
    fn repair_tops_up_small_shards() {
        let labels = balanced_labels(25, 4);
        for seed in 0..100u64 {
            let p = dirichlet_partition(&labels, 10, 0.05, seed, 2).unwrap();
            p.validate(labels.len()).unwrap();
            assert!(p.sizes().iter().all(|s| *s >= 2), "seed {seed}: {:?}", p.sizes());
        }
    }

    #[test]
    fn infeasible_partitions_are_errors() {
        let labels = balanced_labels(2, 2);
        assert!(dirichlet_partition(&labels, 5, 0.5, 1, 1).is_err());
        assert!(dirichlet_partition(&labels, 3, 0.5, 1, 2).is_err());
        assert!(dirichlet_partition(&labels, 2, 0.0, 1, 1).is_err());
        assert!(dirichlet_partition(&labels, 0, 0.5, 1, 1).is_err());
    }

    fn write_idx_pair(
        dir: &Path,
        n: u32,
        rows: u32,
        cols: u32,
        pixels: &[u8],
        labels: &[u8],
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&n.to_be_bytes());
        img.extend_from_slice(&rows.to_be_bytes());
        img.extend_from_slice(&cols.to_be_bytes());
        img.extend_from_slice(pixels);

        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);

        let img_path = dir.join("images.idx");
        let lab_path = dir.join("labels.idx");
        std::fs::write(&img_path, img).unwrap();
        std::fs::write(&lab_path, lab).unwrap();
        (img_path, lab_path)
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut pixels = vec![0u8; 18];
        pixels[0] = 255;
        pixels[17] = 128;
        let (img, lab) = write_idx_pair(dir.path(), 2, 3, 3, &pixels, &[1, 0]);
        let data = load_idx(&img, &lab).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.width(), 9);
        assert_eq!(data.labels(), &[1, 0]);
        assert_eq!(data.row(0)[0], 1.0);
        assert_eq!(data.row(0)[1], 0.0);
        assert_eq!(data.row(1)[8], 128.0 / 255.0);
    }

    #[test]
    fn idx_bad_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_pair(dir.path(), 1, 1, 1, &[0], &[0]);
        let mut bytes = std::fs::read(&img).unwrap();
        bytes[3] = 9;
        std::fs::write(&img, bytes).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format(_))));
    }

    #[test]
    fn idx_count_mismatch_is_a_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_pair(dir.path(), 2, 1, 1, &[0, 1], &[0, 1, 1]);
        assert!(matches!(load_idx(&img, &lab), Err(Error::Consistency(_))));
    }

    #[test]
    fn idx_truncation_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = write_idx_pair(dir.path(), 2, 2, 2, &[7; 8], &[0, 1]);
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_idx(&img, &lab), Err(Error::Io(_))));
    }

    #[test]
    fn idx_missing_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.idx");
        assert!(matches!(load_idx(&missing, &missing), Err(Error::Io(_))));
    }
}
