use crate::fmt17;

use super::{CmcCurve, EvalError};

pub const DEFAULT_RANKS: [usize; 7] = [1, 2, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub splits: Vec<CmcCurve>,
    /// Pointwise mean of the split curves.
    pub mean: Vec<f64>,
    /// `(rank, mean rate)` for the requested ranks within the gallery.
    pub ranks: Vec<(usize, f64)>,
    /// Set when split curves had different lengths and were cut to the
    /// shortest.
    pub truncated: bool,
}

/// Averages split curves and extracts the rank table. Ranks beyond the
/// gallery size are dropped.
pub fn aggregate(method: &str, splits: Vec<CmcCurve>, ranks: &[usize]) -> Result<EvalReport, EvalError> {
    let len = splits.iter().map(CmcCurve::gallery_size).min().ok_or(EvalError::Empty)?;
    let truncated = splits.iter().any(|c| c.gallery_size() != len);
    if truncated {
        log::warn!("{method}: split gallery sizes differ, curves truncated to {len}");
    }
    let n = splits.len() as f64;
    let mean: Vec<f64> = (0..len).map(|r| splits.iter().map(|c| c.rates[r]).sum::<f64>() / n).collect();
    let ranks = ranks.iter().filter(|&&r| r >= 1 && r <= len).map(|&r| (r, mean[r - 1])).collect();
    Ok(EvalReport { method: method.to_string(), splits, mean, ranks, truncated })
}

impl EvalReport {
    pub fn rate_at(&self, rank: usize) -> Option<f64> {
        rank.checked_sub(1).and_then(|i| self.mean.get(i)).copied()
    }

    fn header(&self) -> String {
        let mut h = String::from("rank\tmean");
        for s in 0..self.splits.len() {
            h.push_str(&format!("\tsplit_{s}"));
        }
        h.push('\n');
        h
    }

    fn line(&self, rank: usize) -> String {
        let mut line = format!("{rank}\t{}", fmt17(self.mean[rank - 1]));
        for c in &self.splits {
            line.push('\t');
            line.push_str(&fmt17(c.rates[rank - 1]));
        }
        line.push('\n');
        line
    }

    /// Tab-separated rank table: rank, mean rate, one column per split.
    pub fn rank_table(&self) -> String {
        let mut out = format!("# method\t{}\n", self.method);
        out.push_str(&self.header());
        for &(r, _) in &self.ranks {
            out.push_str(&self.line(r));
        }
        out
    }

    /// Full curve, one row per rank, same columns as the rank table.
    pub fn curve_table(&self) -> String {
        let mut out = format!("# method\t{}\n", self.method);
        out.push_str(&self.header());
        for r in 1..=self.mean.len() {
            out.push_str(&self.line(r));
        }
        out
    }
}

/// Reads a table written by [`EvalReport::curve_table`] back into
/// `(method, rank, mean)` rows.
pub fn parse_curve_table(text: &str) -> Result<(String, Vec<(usize, f64)>), EvalError> {
    let mut method = None;
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# method\t") {
            method = Some(rest.to_string());
            continue;
        }
        if line.starts_with("rank") || line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let rank = fields.next().and_then(|f| f.parse().ok());
        let mean = fields.next().and_then(|f| f.parse().ok());
        match (rank, mean) {
            (Some(r), Some(m)) => rows.push((r, m)),
            _ => return Err(EvalError::Format(format!("bad row {line:?}"))),
        }
    }
    Ok((method.ok_or_else(|| EvalError::Format("missing method line".into()))?, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(rates: &[f64]) -> CmcCurve {
        CmcCurve { rates: rates.to_vec(), n_probes: rates.len() }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate("x", vec![curve(&[0.5, 1.0])], &DEFAULT_RANKS).unwrap();
        assert_eq!(one.mean, vec![0.5, 1.0]);
        assert_eq!(one.ranks, vec![(1, 0.5), (2, 1.0)]);
        let two = aggregate("x", vec![curve(&[1.0, 1.0]), curve(&[0.0, 1.0])], &DEFAULT_RANKS).unwrap();
        assert_eq!(two.mean, vec![0.5, 1.0]);
        assert!(!two.truncated);
        assert!(aggregate("x", vec![], &DEFAULT_RANKS).is_err());
    }

    #[test]
    fn rank_table_mirrors_default_grid() {
        let rates: Vec<f64> = (1..=120).map(|r| (r as f64 / 120.0).sqrt()).collect();
        let rep = aggregate("cmc_top", vec![curve(&rates)], &DEFAULT_RANKS).unwrap();
        assert_eq!(rep.ranks.iter().map(|r| r.0).collect::<Vec<_>>(), DEFAULT_RANKS.to_vec());
        let table = rep.rank_table();
        assert_eq!(table.lines().count(), 2 + 7);
        let (method, rows) = parse_curve_table(&rep.curve_table()).unwrap();
        assert_eq!(method, "cmc_top");
        assert_eq!(rows.len(), 120);
        assert!(rows.iter().all(|&(r, m)| m.to_bits() == rates[r - 1].to_bits()));
    }

    #[test]
    fn truncation_is_flagged() {
        let rep = aggregate("u", vec![curve(&[0.2, 0.6, 1.0]), curve(&[0.4, 1.0])], &[1, 2, 3]).unwrap();
        assert!(rep.truncated);
        assert_eq!(rep.mean.len(), 2);
        assert_eq!(rep.ranks.len(), 2);
        for (r, m) in rep.mean.iter().enumerate() {
            let lo = rep.splits.iter().map(|c| c.rates[r]).fold(f64::INFINITY, f64::min);
            let hi = rep.splits.iter().map(|c| c.rates[r]).fold(f64::NEG_INFINITY, f64::max);
            assert!(*m >= lo && *m <= hi);
        }
    }
}
