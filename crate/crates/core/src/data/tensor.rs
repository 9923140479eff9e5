use std::io::{Read, Write};

use super::{DataError, Dataset, View};
use crate::metrics::{BaseMetric, MetricError};
use crate::par;
use thiserror::Error;

/// Magic bytes opening a cached tensor file.
pub const TENSOR_MAGIC: &[u8; 5] = b"MERT1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("metric {label}: channel {channel:?} not in dataset schema")]
    UnknownChannel { label: String, channel: String },
    #[error("metric {label}: {source}")]
    Metric {
        label: String,
        #[source]
        source: MetricError,
    },
    #[error("metric {label}: invalid distance {value} for probe {probe} / gallery {gallery}")]
    InvalidDistance {
        label: String,
        probe: String,
        gallery: String,
        value: f64,
    },
    #[error("tensor shape: {0}")]
    Shape(String),
    #[error("tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Per-metric distances between every probe (view A) and every gallery
/// sample (view B) of one id set. Gallery index `i` is the true match of
/// probe `i`, so `pair(i, i)` holds the matched-pair distances and the other
/// entries of row `i` the mismatched ones.
///
/// Values are stored row-major in `(probe, gallery, metric)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTensor {
    ids: Vec<String>,
    labels: Vec<String>,
    values: Vec<f64>,
}

impl DistanceTensor {
    pub fn new(ids: Vec<String>, labels: Vec<String>, values: Vec<f64>) -> Result<Self, TensorError> {
        let m = ids.len();
        let t = labels.len();
        if m < 2 {
            return Err(TensorError::Shape(format!("need at least 2 ids, got {m}")));
        }
        if t == 0 {
            return Err(TensorError::Shape("need at least one metric".into()));
        }
        if values.len() != m * m * t {
            return Err(TensorError::Shape(format!(
                "expected {m}x{m}x{t} = {} values, got {}",
                m * m * t,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            let (i, j, k) = (pos / (m * t), (pos / t) % m, pos % t);
            return Err(TensorError::InvalidDistance {
                label: labels[k].clone(),
                probe: ids[i].clone(),
                gallery: ids[j].clone(),
                value: values[pos],
            });
        }
        Ok(Self { ids, labels, values })
    }

    /// Builds a tensor from one row-major `m x m` matrix per metric.
    pub fn from_slices(ids: Vec<String>, labels: Vec<String>, slices: &[Vec<f64>]) -> Result<Self, TensorError> {
        let m = ids.len();
        let t = slices.len();
        if labels.len() != t {
            return Err(TensorError::Shape(format!("{} labels for {t} slices", labels.len())));
        }
        if let Some(bad) = slices.iter().find(|s| s.len() != m * m) {
            return Err(TensorError::Shape(format!("slice of length {} for m = {m}", bad.len())));
        }
        let mut values = vec![0.0; m * m * t];
        for (k, s) in slices.iter().enumerate() {
            for (ij, v) in s.iter().enumerate() {
                values[ij * t + k] = *v;
            }
        }
        Self::new(ids, labels, values)
    }

    /// Number of individuals (probes = gallery size).
    pub fn m(&self) -> usize {
        self.ids.len()
    }

    /// Number of base metrics `T`.
    pub fn n_metrics(&self) -> usize {
        self.labels.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn probe_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn gallery_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, probe: usize, gallery: usize, metric: usize) -> f64 {
        self.values[(probe * self.m() + gallery) * self.n_metrics() + metric]
    }

    /// Distance vector over all metrics for one (probe, gallery) pair.
    pub fn pair(&self, probe: usize, gallery: usize) -> &[f64] {
        let t = self.n_metrics();
        let start = (probe * self.m() + gallery) * t;
        &self.values[start..start + t]
    }

    /// Matched-pair distances of probe `i`.
    pub fn matched(&self, probe: usize) -> &[f64] {
        self.pair(probe, probe)
    }

    /// Row-major `m x m` matrix of one metric.
    pub fn slice(&self, metric: usize) -> Vec<f64> {
        let t = self.n_metrics();
        self.values.iter().skip(metric).step_by(t).copied().collect()
    }

    /// Restricts the tensor to the individuals at `indices` (in that order).
    pub fn subset(&self, indices: &[usize]) -> Result<Self, TensorError> {
        let m = self.m();
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(TensorError::Shape(format!("index {bad} out of range for m = {m}")));
        }
        let mut values = Vec::with_capacity(indices.len() * indices.len() * self.n_metrics());
        for &i in indices {
            for &j in indices {
                values.extend_from_slice(self.pair(i, j));
            }
        }
        Self::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            self.labels.clone(),
            values,
        )
    }

    /// Keeps only the metrics at `metrics` (in that order).
    pub fn select_metrics(&self, metrics: &[usize]) -> Result<Self, TensorError> {
        let t = self.n_metrics();
        if let Some(&bad) = metrics.iter().find(|&&k| k >= t) {
            return Err(TensorError::Shape(format!("metric {bad} out of range for T = {t}")));
        }
        let mut values = Vec::with_capacity(self.m() * self.m() * metrics.len());
        for pair in self.values.chunks_exact(t) {
            values.extend(metrics.iter().map(|&k| pair[k]));
        }
        Self::new(
            self.ids.clone(),
            metrics.iter().map(|&k| self.labels[k].clone()).collect(),
            values,
        )
    }

    /// Serializes in the cache layout: magic, `m` and `T` as u64, each label
    /// as a u64 byte length plus UTF-8 bytes, then every value as f64, all
    /// little-endian, values in `(probe, gallery, metric)` order.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(TENSOR_MAGIC)?;
        out.write_all(&(self.m() as u64).to_le_bytes())?;
        out.write_all(&(self.n_metrics() as u64).to_le_bytes())?;
        for label in &self.labels {
            out.write_all(&(label.len() as u64).to_le_bytes())?;
            out.write_all(label.as_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(21 + 8 * self.values.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Reads the cache layout. The file does not carry ids, so the caller
    /// supplies them; their count must equal the stored `m`.
    pub fn read_from<R: Read>(mut input: R, ids: Vec<String>) -> Result<Self, TensorError> {
        let mut magic = [0u8; 5];
        input.read_exact(&mut magic)?;
        if &magic != TENSOR_MAGIC {
            return Err(TensorError::Format("bad magic".into()));
        }
        let mut word = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<u64, TensorError> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let m = read_u64(&mut input)? as usize;
        let t = read_u64(&mut input)? as usize;
        if m != ids.len() {
            return Err(TensorError::Format(format!(
                "file holds m = {m}, caller supplied {} ids",
                ids.len()
            )));
        }
        let mut labels = Vec::with_capacity(t.min(1 << 16));
        for _ in 0..t {
            let len = read_u64(&mut input)? as usize;
            if len > 1 << 20 {
                return Err(TensorError::Format(format!("label length {len} too large")));
            }
            let mut bytes = vec![0u8; len];
            input.read_exact(&mut bytes)?;
            labels.push(String::from_utf8(bytes).map_err(|e| TensorError::Format(e.to_string()))?);
        }
        let n = m
            .checked_mul(m)
            .and_then(|x| x.checked_mul(t))
            .ok_or_else(|| TensorError::Format("size overflow".into()))?;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(TensorError::Format("trailing bytes".into()));
        }
        Self::new(ids, labels, values)
    }
}

/// Evaluates every metric on every (probe view A, gallery view B) pair of the
/// individuals `ids`. Output is independent of thread scheduling.
pub fn build_distance_tensor<M: BaseMetric>(
    metrics: &[M],
    dataset: &Dataset,
    ids: &[String],
) -> Result<DistanceTensor, TensorError> {
    let idx = dataset.indices_of(ids)?;
    let m = idx.len();
    let t = metrics.len();
    if m < 2 || t == 0 {
        return Err(TensorError::Shape(format!("need m >= 2 and T >= 1, got m = {m}, T = {t}")));
    }
    let slices = par::try_map_slice(metrics, |metric| -> Result<Vec<f64>, TensorError> {
        let label = metric.label().to_string();
        let channel = dataset
            .channel_index(metric.channel())
            .ok_or_else(|| TensorError::UnknownChannel {
                label: label.clone(),
                channel: metric.channel().to_string(),
            })?;
        let embed = |view: View| {
            par::try_map_slice(&idx, |&i| {
                metric
                    .embed(dataset.vector(i, view, channel))
                    .map_err(|source| TensorError::Metric {
                        label: label.clone(),
                        source,
                    })
            })
        };
        let probes = embed(View::A)?;
        let gallery = embed(View::B)?;
        let rows = par::map_range(m, |i| {
            gallery
                .iter()
                .map(|g| metric.embedded_distance(&probes[i], g))
                .collect::<Vec<f64>>()
        });
        let mut slice = Vec::with_capacity(m * m);
        for (i, row) in rows.into_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < 0.0) {
                return Err(TensorError::InvalidDistance {
                    label,
                    probe: ids[i].clone(),
                    gallery: ids[j].clone(),
                    value: row[j],
                });
            }
            slice.extend(row);
        }
        Ok(slice)
    })?;
    DistanceTensor::from_slices(
        ids.to_vec(),
        metrics.iter().map(|mt| mt.label().to_string()).collect(),
        &slices,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ChannelSchema, Individual};
    use crate::metrics::SquaredEuclidean;

    struct Broken;

    impl BaseMetric for Broken {
        fn label(&self) -> &str {
            "c/broken"
        }
        fn channel(&self) -> &str {
            "c"
        }
        fn embed(&self, x: &[f64]) -> Result<Vec<f64>, MetricError> {
            Ok(x.to_vec())
        }
        fn embedded_distance(&self, a: &[f64], b: &[f64]) -> f64 {
            a[0] - b[0]
        }
    }

    fn line_dataset(points: &[(f64, f64)]) -> Dataset {
        let individuals = points
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Individual {
                id: format!("p{i}"),
                a: vec![vec![a]],
                b: vec![vec![b]],
            })
            .collect();
        Dataset::new(
            vec![ChannelSchema {
                name: "c".into(),
                dim: 1,
            }],
            individuals,
        )
        .unwrap()
    }

    fn ids(ds: &Dataset) -> Vec<String> {
        ds.ids().map(String::from).collect()
    }

    #[test]
    fn squared_euclidean_hand_geometry() {
        let ds = line_dataset(&[(0.0, 0.0), (1.0, 1.0)]);
        let metric = SquaredEuclidean::new("c");
        let tensor = build_distance_tensor(&[metric], &ds, &ids(&ds)).unwrap();
        assert_eq!(tensor.slice(0), vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn shape_is_n_by_n_by_t() {
        let ds = line_dataset(&[(0.0, 0.5), (1.0, 1.5), (2.0, 2.0)]);
        let metrics: Vec<SquaredEuclidean> = (0..4).map(|_| SquaredEuclidean::new("c")).collect();
        let sub = vec!["p0".to_string(), "p2".to_string()];
        let tensor = build_distance_tensor(&metrics, &ds, &sub).unwrap();
        assert_eq!((tensor.m(), tensor.n_metrics()), (2, 4));
        assert_eq!(tensor.values().len(), 16);
        assert_eq!(tensor.value(0, 1, 3), 4.0);
        assert_eq!(tensor.value(1, 0, 2), 2.25);
    }

    #[test]
    fn negative_distance_is_rejected() {
        let ds = line_dataset(&[(0.0, 0.0), (1.0, 1.0)]);
        let err = build_distance_tensor(&[Broken], &ds, &ids(&ds)).unwrap_err();
        assert!(err.to_string().contains("invalid distance"), "{err}");
        assert!(err.to_string().contains("c/broken"), "{err}");
    }

    #[test]
    fn unknown_channel_and_id() {
        let ds = line_dataset(&[(0.0, 0.0), (1.0, 1.0)]);
        let err = build_distance_tensor(&[SquaredEuclidean::new("zz")], &ds, &ids(&ds)).unwrap_err();
        assert!(matches!(err, TensorError::UnknownChannel { .. }));
        let err = build_distance_tensor(&[SquaredEuclidean::new("c")], &ds, &["nope".to_string(), "p0".into()])
            .unwrap_err();
        assert!(matches!(err, TensorError::Data(DataError::UnknownId(_))));
    }

    #[test]
    fn pure_and_cache_round_trip() {
        let ds = line_dataset(&[(0.1, 0.3), (1.7, 1.1), (2.2, -0.4)]);
        let metrics = [SquaredEuclidean::new("c"), SquaredEuclidean::new("c")];
        let a = build_distance_tensor(&metrics, &ds, &ids(&ds)).unwrap();
        let b = build_distance_tensor(&metrics, &ds, &ids(&ds)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let bytes = a.to_bytes();
        assert_eq!(&bytes[..5], b"MERT1");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 2);
        let back = DistanceTensor::read_from(bytes.as_slice(), ids(&ds)).unwrap();
        assert_eq!(back, a);
        assert!(DistanceTensor::read_from(bytes.as_slice(), vec!["x".into(), "y".into()]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DistanceTensor::read_from(bad.as_slice(), ids(&ds)).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(DistanceTensor::read_from(long.as_slice(), ids(&ds)).is_err());
    }

    #[test]
    fn subset_and_select() {
        let ds = line_dataset(&[(0.0, 0.0), (1.0, 2.0), (3.0, 3.0)]);
        let metrics = [SquaredEuclidean::new("c"), SquaredEuclidean::new("c")];
        let t = build_distance_tensor(&metrics, &ds, &ids(&ds)).unwrap();
        let s = t.subset(&[2, 0]).unwrap();
        assert_eq!(s.ids(), &["p2".to_string(), "p0".to_string()]);
        assert_eq!(s.pair(0, 1), t.pair(2, 0));
        let one = t.select_metrics(&[1]).unwrap();
        assert_eq!(one.slice(0), t.slice(1));
        assert!(t.subset(&[3]).is_err());
    }
}
