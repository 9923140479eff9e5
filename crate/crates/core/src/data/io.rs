//! Feature file format: one row per (individual, view, channel),
//!
//! ```text
//! id, view(A|B), channel_name, v1, v2, ..., vD
//! ```
//!
//! Fields are comma separated (rows without commas are split on whitespace).
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{ChannelSchema, DataError, Dataset, Individual, View};
use crate::fmt17;

struct Partial {
    first_seen: (PathBuf, usize),
    channels: [Vec<Option<Vec<f64>>>; 2],
    seen: [bool; 2],
    view_origin: [Option<(PathBuf, usize)>; 2],
}

#[derive(Default)]
struct Loader {
    schema: Vec<ChannelSchema>,
    channel_ix: HashMap<String, usize>,
    order: Vec<String>,
    partial: HashMap<String, Partial>,
}

impl Loader {
    fn row(&mut self, file: &Path, line_no: usize, line: &str) -> Result<(), DataError> {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return Ok(());
        }
        let fields: Vec<&str> = if trimmed.contains(',') {
            trimmed.split(',').map(str::trim).collect()
        } else {
            trimmed.split_whitespace().collect()
        };
        let parse_err = |message: String| DataError::Parse {
            file: file.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() < 4 {
            return Err(parse_err(format!(
                "expected `id, view, channel, v1, ...`, found {} fields",
                fields.len()
            )));
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(parse_err("empty individual id".into()));
        }
        let view = match fields[1] {
            "A" | "a" => View::A,
            "B" | "b" => View::B,
            other => return Err(parse_err(format!("view must be A or B, found {other:?}"))),
        };
        let channel = fields[2];
        if channel.is_empty() {
            return Err(parse_err("empty channel name".into()));
        }
        let values = fields[3..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(format!("not a number: {s:?}")))
                    .and_then(|v| {
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(parse_err(format!("non-finite value {s:?}")))
                        }
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;

        let c = match self.channel_ix.get(channel) {
            Some(&c) => {
                let expected = self.schema[c].dim;
                if values.len() != expected {
                    return Err(DataError::DimensionMismatch {
                        file: file.to_path_buf(),
                        line: line_no,
                        channel: channel.to_string(),
                        expected,
                        found: values.len(),
                    });
                }
                c
            }
            None => {
                let c = self.schema.len();
                self.schema.push(ChannelSchema {
                    name: channel.to_string(),
                    dim: values.len(),
                });
                self.channel_ix.insert(channel.to_string(), c);
                for p in self.partial.values_mut() {
                    p.channels[0].push(None);
                    p.channels[1].push(None);
                }
                c
            }
        };

        let n_channels = self.schema.len();
        let entry = self.partial.entry(id.to_string()).or_insert_with(|| {
            self.order.push(id.to_string());
            Partial {
                first_seen: (file.to_path_buf(), line_no),
                channels: [vec![None; n_channels], vec![None; n_channels]],
                seen: [false; 2],
                view_origin: [None, None],
            }
        });
        let k = view as usize;
        if entry.channels[k][c].is_some() {
            return Err(DataError::Duplicate {
                file: file.to_path_buf(),
                line: line_no,
                id: id.to_string(),
                view,
                channel: channel.to_string(),
            });
        }
        entry.channels[k][c] = Some(values);
        entry.seen[k] = true;
        if entry.view_origin[k].is_none() {
            entry.view_origin[k] = Some((file.to_path_buf(), line_no));
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Dataset, DataError> {
        let mut individuals = Vec::with_capacity(self.order.len());
        for id in &self.order {
            let p = self.partial.remove(id).expect("ordered ids are present");
            for (present, missing) in [(View::A, View::B), (View::B, View::A)] {
                if p.seen[present as usize] && !p.seen[missing as usize] {
                    let (file, line) = p.view_origin[present as usize]
                        .clone()
                        .unwrap_or_else(|| p.first_seen.clone());
                    return Err(DataError::MissingView {
                        file,
                        line,
                        id: id.clone(),
                        present,
                        missing,
                    });
                }
            }
            let [a, b] = p.channels;
            let mut views = Vec::with_capacity(2);
            for (view, chans) in [(View::A, a), (View::B, b)] {
                let vectors = chans
                    .into_iter()
                    .zip(&self.schema)
                    .map(|(v, c)| {
                        v.ok_or_else(|| DataError::MissingChannel {
                            id: id.clone(),
                            view,
                            channel: c.name.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                views.push(vectors);
            }
            let b = views.pop().unwrap();
            let a = views.pop().unwrap();
            individuals.push(Individual {
                id: id.clone(),
                a,
                b,
            });
        }
        Dataset::new(self.schema, individuals)
    }
}

/// Parses a dataset from any number of readers. `label` names each source in
/// error messages.
pub fn parse_dataset<R: BufRead>(sources: Vec<(PathBuf, R)>) -> Result<Dataset, DataError> {
    let mut loader = Loader::default();
    for (label, reader) in sources {
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| DataError::Io {
                path: label.clone(),
                source,
            })?;
            loader.row(&label, n + 1, &line)?;
        }
    }
    loader.finish()
}

/// Loads and validates a dataset spread over one or more feature files.
pub fn load_dataset<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset, DataError> {
    let mut sources = Vec::with_capacity(paths.len());
    for p in paths {
        let path = p.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        sources.push((path, BufReader::new(file)));
    }
    parse_dataset(sources)
}

/// Writes `dataset` in the feature file format, 17 significant digits per
/// value so that reloading reproduces every value exactly.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for ind in dataset.individuals() {
        for view in [View::A, View::B] {
            for (c, v) in dataset.schema().iter().zip(ind.view(view)) {
                write!(out, "{},{},{}", ind.id, view, c.name)?;
                for x in v {
                    write!(out, ",{}", fmt17(*x))?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
