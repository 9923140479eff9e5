//! Binary container for trained metrics, one file per metric plus a text
//! manifest fixing the bank order.
//!
//! Every number is little-endian; strings are a u64 byte length followed by
//! UTF-8 bytes; matrices are row-major f64.
//!
//! ```text
//! "MERM1" label channel kind:u8
//!   kind 0 (euclidean): has_dim:u8 [dim:u64]
//!   kind 1 (kissme):    pca  d:u64  M[d*d]
//!   kind 2 (klfda):     has_pca:u8 [pca]  kernel:u8 sigma2 tau beta
//!                       n:u64 D:u64 r:u64  train[n*D] coef[n*r] eigenvalues[r]
//! pca = D:u64 d:u64 mean[D] basis[D*d] variances[d] total_variance
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::kernel::{KernelKind, KernelParams};
use super::kissme::MahalanobisMetric;
use super::klfda::KlfdaModel;
use super::pca::PcaModel;
use super::{BaseMetric, MetricError, SquaredEuclidean, TrainedMetric};
use crate::fsutil::write_atomic;

pub const METRIC_MAGIC: &[u8; 5] = b"MERM1";
pub const BANK_MANIFEST: &str = "bank.manifest";

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> std::io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u64(&mut self, v: usize) -> std::io::Result<()> {
        self.0.write_all(&(v as u64).to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> std::io::Result<()> {
        self.u64(s.len())?;
        self.0.write_all(s.as_bytes())
    }
    fn floats<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) -> std::io::Result<()> {
        for v in vs {
            self.f64(*v)?;
        }
        Ok(())
    }
    fn matrix(&mut self, m: &DMatrix<f64>) -> std::io::Result<()> {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)])?;
            }
        }
        Ok(())
    }
    fn pca(&mut self, p: &PcaModel) -> std::io::Result<()> {
        self.u64(p.input_dim())?;
        self.u64(p.output_dim())?;
        self.floats(&p.mean)?;
        self.matrix(&p.basis)?;
        self.floats(&p.variances)?;
        self.f64(p.total_variance)
    }
}

struct Reader<R: Read>(R);

const MAX_LEN: usize = 1 << 28;

impl<R: Read> Reader<R> {
    fn u8(&mut self) -> Result<u8, MetricError> {
        let mut b = [0u8; 1];
        self.0.read_exact(&mut b)?;
        Ok(b[0])
    }
    fn u64(&mut self) -> Result<usize, MetricError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        let v = u64::from_le_bytes(b) as usize;
        if v > MAX_LEN {
            return Err(MetricError::Format(format!("length {v} too large")));
        }
        Ok(v)
    }
    fn f64(&mut self) -> Result<f64, MetricError> {
        let mut b = [0u8; 8];
        self.0.read_exact(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }
    fn str(&mut self) -> Result<String, MetricError> {
        let n = self.u64()?;
        let mut b = vec![0u8; n];
        self.0.read_exact(&mut b)?;
        String::from_utf8(b).map_err(|e| MetricError::Format(e.to_string()))
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>, MetricError> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>, MetricError> {
        let data = self.floats(rows.checked_mul(cols).ok_or_else(|| MetricError::Format("size overflow".into()))?)?;
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
    fn pca(&mut self) -> Result<PcaModel, MetricError> {
        let dim = self.u64()?;
        let d = self.u64()?;
        Ok(PcaModel {
            mean: self.floats(dim)?,
            basis: self.matrix(dim, d)?,
            variances: self.floats(d)?,
            total_variance: self.f64()?,
        })
    }
}

pub fn write_metric<W: Write>(metric: &TrainedMetric, out: W) -> std::io::Result<()> {
    let mut w = Writer(out);
    w.0.write_all(METRIC_MAGIC)?;
    w.str(metric.label())?;
    w.str(metric.channel())?;
    match metric {
        TrainedMetric::Euclidean(m) => {
            w.u8(0)?;
            match m.dim() {
                Some(d) => {
                    w.u8(1)?;
                    w.u64(d)
                }
                None => w.u8(0),
            }
        }
        TrainedMetric::Kissme(m) => {
            w.u8(1)?;
            w.pca(&m.pca)?;
            w.u64(m.m.nrows())?;
            w.matrix(&m.m)
        }
        TrainedMetric::Klfda(m) => {
            w.u8(2)?;
            match &m.pca {
                Some(p) => {
                    w.u8(1)?;
                    w.pca(p)?;
                }
                None => w.u8(0)?,
            }
            w.u8(match m.params.kind {
                KernelKind::Chi2Rbf => 0,
                KernelKind::GaussRbf => 1,
            })?;
            w.f64(m.params.sigma2)?;
            w.f64(m.params.tau)?;
            w.f64(m.beta)?;
            let n = m.train.len();
            let dim = m.train.first().map_or(0, Vec::len);
            w.u64(n)?;
            w.u64(dim)?;
            w.u64(m.coef.ncols())?;
            for v in &m.train {
                w.floats(v)?;
            }
            w.matrix(&m.coef)?;
            w.floats(&m.eigenvalues)
        }
    }
}

pub fn read_metric<R: Read>(input: R) -> Result<TrainedMetric, MetricError> {
    let mut r = Reader(input);
    let mut magic = [0u8; 5];
    r.0.read_exact(&mut magic)?;
    if &magic != METRIC_MAGIC {
        return Err(MetricError::Format("bad magic".into()));
    }
    let label = r.str()?;
    let channel = r.str()?;
    let metric = match r.u8()? {
        0 => {
            let mut m = SquaredEuclidean::new(channel).with_label(label);
            if r.u8()? == 1 {
                m = m.with_dim(r.u64()?);
            }
            TrainedMetric::Euclidean(m)
        }
        1 => {
            let pca = r.pca()?;
            let d = r.u64()?;
            let m = r.matrix(d, d)?;
            TrainedMetric::Kissme(MahalanobisMetric::new(label, channel, pca, m)?)
        }
        2 => {
            let pca = if r.u8()? == 1 { Some(r.pca()?) } else { None };
            let kind = match r.u8()? {
                0 => KernelKind::Chi2Rbf,
                1 => KernelKind::GaussRbf,
                k => return Err(MetricError::Format(format!("unknown kernel tag {k}"))),
            };
            let sigma2 = r.f64()?;
            let tau = r.f64()?;
            let params = KernelParams { kind, sigma2, tau };
            params.validate()?;
            let beta = r.f64()?;
            let n = r.u64()?;
            let dim = r.u64()?;
            let rank = r.u64()?;
            let train = (0..n).map(|_| r.floats(dim)).collect::<Result<Vec<_>, _>>()?;
            let coef = r.matrix(n, rank)?;
            let eigenvalues = r.floats(rank)?;
            if n == 0 || rank == 0 {
                return Err(MetricError::Format("empty kLFDA model".into()));
            }
            TrainedMetric::Klfda(KlfdaModel {
                label,
                channel,
                pca,
                train,
                params,
                coef,
                eigenvalues,
                beta,
            })
        }
        k => return Err(MetricError::Format(format!("unknown metric kind {k}"))),
    };
    let mut rest = [0u8; 1];
    if r.0.read(&mut rest)? != 0 {
        return Err(MetricError::Format("trailing bytes".into()));
    }
    Ok(metric)
}

/// Writes `metric_NNN.bin` per metric and a manifest listing index, label
/// and file name, tab separated, in bank order.
pub fn save_bank(dir: &Path, metrics: &[TrainedMetric]) -> Result<(), MetricError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("# index\tlabel\tfile\n");
    for (k, m) in metrics.iter().enumerate() {
        let file = format!("metric_{k:03}.bin");
        let mut bytes = Vec::new();
        write_metric(m, &mut bytes)?;
        write_atomic(&dir.join(&file), &bytes)?;
        manifest.push_str(&format!("{k}\t{}\t{file}\n", m.label()));
    }
    write_atomic(&dir.join(BANK_MANIFEST), manifest.as_bytes())?;
    Ok(())
}

pub fn load_bank(dir: &Path) -> Result<Vec<TrainedMetric>, MetricError> {
    let text = std::fs::read_to_string(dir.join(BANK_MANIFEST))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        let [index, label, file] = fields[..] else {
            return Err(MetricError::Format(format!("bad manifest line {line:?}")));
        };
        if index.parse::<usize>().ok() != Some(out.len()) {
            return Err(MetricError::Format(format!("manifest index {index} out of order")));
        }
        let metric = read_metric(std::fs::File::open(dir.join(file)).map(std::io::BufReader::new)?)?;
        if metric.label() != label {
            return Err(MetricError::Format(format!(
                "{file} holds {:?}, manifest says {label:?}",
                metric.label()
            )));
        }
        out.push(metric);
    }
    Ok(out)
}
