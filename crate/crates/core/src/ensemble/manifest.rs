//! Text serialization of ensemble models.
//!
//! ```text
//! # metric ensemble
//! method = cmc_top
//! nu = 1.0000000000000000e2
//! ...
//! [weights]
//! 0	<weight>	<label>
//! ```
//!
//! Floats use 17 significant digits so a parsed manifest reproduces the
//! weights bit for bit. Keys the model does not know are kept as `extra`.

use crate::fmt17;

use super::train::{EnsembleModel, TrainingConfig, TrainingDiagnostics};
use super::EnsembleError;

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub model: EnsembleModel,
    pub extra: Vec<(String, String)>,
}

impl EnsembleModel {
    /// Renders the manifest; `extra` lines follow the built-in keys.
    pub fn to_manifest(&self, extra: &[(String, String)]) -> String {
        let mut out = String::from("# metric ensemble\n");
        let mut kv = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        kv("method", self.method().to_string());
        if let Some(c) = &self.config {
            kv("nu", fmt17(c.nu));
            kv("k", c.k.to_string());
            kv("epsilon", fmt17(c.epsilon));
            kv("max_iterations", c.max_iterations.to_string());
        }
        if let Some(d) = &self.diagnostics {
            kv("iterations", d.iterations.to_string());
            kv("xi", fmt17(d.xi));
            kv("violation", fmt17(d.violation));
            kv("converged", d.converged.to_string());
            kv("constraints", d.constraints.to_string());
            kv("max_kkt_residual", fmt17(d.max_kkt_residual));
            kv("objective_history", d.objective_history.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(" "));
        }
        for (k, v) in extra {
            kv(k, v.clone());
        }
        out.push_str("[weights]\n");
        for (t, (w, label)) in self.weights.iter().zip(&self.labels).enumerate() {
            out.push_str(&format!("{t}\t{}\t{label}\n", fmt17(*w)));
        }
        out
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, EnsembleError> {
    v.parse().map_err(|_| EnsembleError::Manifest(format!("bad value for {key}: {v:?}")))
}

pub fn parse_manifest(text: &str) -> Result<Manifest, EnsembleError> {
    let mut method = None;
    let mut config = TrainingConfig::default();
    let mut diag = TrainingDiagnostics::default();
    let mut has_diag = false;
    let mut extra = Vec::new();
    let mut labels = Vec::new();
    let mut weights = Vec::new();
    let mut in_weights = false;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if line == "[weights]" {
            in_weights = true;
            continue;
        }
        if in_weights {
            let mut f = line.splitn(3, '\t');
            let (Some(idx), Some(w), Some(label)) = (f.next(), f.next(), f.next()) else {
                return Err(EnsembleError::Manifest(format!("bad weight line {line:?}")));
            };
            if num::<usize>("index", idx)? != weights.len() {
                return Err(EnsembleError::Manifest(format!("weight index {idx} out of order")));
            }
            weights.push(num::<f64>("weight", w)?);
            labels.push(label.to_string());
            continue;
        }
        let Some((k, v)) = line.split_once(" = ") else {
            return Err(EnsembleError::Manifest(format!("bad line {line:?}")));
        };
        match k {
            "method" => method = Some(v.to_string()),
            "nu" => config.nu = num(k, v)?,
            "k" => config.k = num(k, v)?,
            "epsilon" => config.epsilon = num(k, v)?,
            "max_iterations" => config.max_iterations = num(k, v)?,
            "iterations" => {
                has_diag = true;
                diag.iterations = num(k, v)?
            }
            "xi" => diag.xi = num(k, v)?,
            "violation" => diag.violation = num(k, v)?,
            "converged" => diag.converged = num(k, v)?,
            "constraints" => diag.constraints = num(k, v)?,
            "max_kkt_residual" => diag.max_kkt_residual = num(k, v)?,
            "objective_history" => {
                diag.objective_history = v.split_whitespace().map(|x| num(k, x)).collect::<Result<_, _>>()?
            }
            _ => extra.push((k.to_string(), v.to_string())),
        }
    }
    let method = method.ok_or_else(|| EnsembleError::Manifest("missing method".into()))?;
    if weights.is_empty() {
        return Err(EnsembleError::Manifest("no weights".into()));
    }
    let config = if method == "uniform" {
        None
    } else {
        config.objective = method.parse()?;
        Some(config)
    };
    let diagnostics = (config.is_some() && has_diag).then_some(diag);
    Ok(Manifest { model: EnsembleModel { labels, weights, config, diagnostics }, extra })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Objective;

    #[test]
    fn learned_round_trip() {
        let model = EnsembleModel {
            labels: vec!["a/kissme/pca10".into(), "b/euclidean".into()],
            weights: vec![0.1 + 0.2, 1.0 / 3.0],
            config: Some(TrainingConfig { nu: 10f64.powf(2.3), objective: Objective::CmcTriplet, ..Default::default() }),
            diagnostics: Some(TrainingDiagnostics {
                iterations: 3,
                xi: 1e-3,
                violation: -2.5e-9,
                objective_history: vec![0.0, 0.5, 0.75],
                converged: true,
                constraints: 2,
                max_kkt_residual: 1e-16,
            }),
        };
        let extra = vec![("schema_hash".to_string(), "abc".to_string())];
        let text = model.to_manifest(&extra);
        let back = parse_manifest(&text).unwrap();
        assert_eq!(back.model, model);
        assert_eq!(back.extra, extra);
        assert_eq!(back.model.to_manifest(&back.extra), text);
    }

    #[test]
    fn uniform_round_trip() {
        let model = EnsembleModel::uniform(vec!["x".into(), "y".into(), "z".into()]);
        let back = parse_manifest(&model.to_manifest(&[])).unwrap();
        assert_eq!(back.model, model);
        assert!(back.model.is_uniform());
    }

    #[test]
    fn malformed() {
        assert!(parse_manifest("method = cmc_top\n").is_err());
        assert!(parse_manifest("method = bogus\n[weights]\n0\t1.0\ta\n").is_err());
        assert!(parse_manifest("method = uniform\n[weights]\n1\t1.0\ta\n").is_err());
        assert!(parse_manifest("method = uniform\nnu: 3\n[weights]\n0\t1.0\ta\n").is_err());
    }
}
