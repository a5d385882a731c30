//! On-disk interchange formats.
//!
//! A recording is a pair of files sharing a base path: the sample data
//! (`<base>.csv` or `<base>.f64`) and a JSON sidecar (`<base>.json`)
//! carrying rate, unit, and per-channel modality. Events live in plain
//! CSV with columns `sample_index,condition,stimulus_class`.

use crate::error::{Error, Result};
use crate::types::{
    ChannelMeta, Condition, ConnectivityMatrix, Metric, MultichannelSeries, StimulusClass,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataFormat {
    #[serde(rename = "csv")]
    Csv,
    /// Raw little-endian f64, channel-major.
    #[serde(rename = "f64le")]
    F64le,
}

/// JSON sidecar describing a stored [`MultichannelSeries`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub fs: f64,
    pub unit: String,
    pub channels: Vec<ChannelMeta>,
    pub format: DataFormat,
    pub n_samples: usize,
}

/// Stimulus event at a raw-recording sample index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub sample_index: usize,
    pub condition: Condition,
    pub stimulus_class: StimulusClass,
}

fn data_path(base: &Path, format: DataFormat) -> PathBuf {
    match format {
        DataFormat::Csv => base.with_extension("csv"),
        DataFormat::F64le => base.with_extension("f64"),
    }
}

/// Writes `series` under `base` in the requested format plus its sidecar.
pub fn write_series(base: &Path, series: &MultichannelSeries, format: DataFormat) -> Result<()> {
    series.validate()?;
    let sidecar = Sidecar {
        fs: series.fs,
        unit: series.unit.clone(),
        channels: series.channels.clone(),
        format,
        n_samples: series.n_samples(),
    };
    let side_path = base.with_extension("json");
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::parse(&side_path, e.to_string()))?;
    fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))?;

    let path = data_path(base, format);
    match format {
        DataFormat::Csv => {
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let mut header = String::from("time");
            for c in &series.channels {
                header.push(',');
                header.push_str(&c.name);
            }
            header.push('\n');
            w.write_all(header.as_bytes()).map_err(|e| Error::io(&path, e))?;
            let mut line = String::new();
            for i in 0..series.n_samples() {
                line.clear();
                line.push_str(&fmt_f64(i as f64 / series.fs));
                for ch in 0..series.n_channels() {
                    line.push(',');
                    line.push_str(&fmt_f64(series.data[[ch, i]]));
                }
                line.push('\n');
                w.write_all(line.as_bytes()).map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        DataFormat::F64le => {
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            for v in series.data.iter() {
                w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}

/// Reads the recording stored under `base`, dispatching on the sidecar.
pub fn read_series(base: &Path) -> Result<MultichannelSeries> {
    let side_path = base.with_extension("json");
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar =
        serde_json::from_str(&text).map_err(|e| Error::parse(&side_path, e.to_string()))?;
    let path = data_path(base, sidecar.format);
    let n_ch = sidecar.channels.len();
    let data = match sidecar.format {
        DataFormat::Csv => {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let mut rows = Vec::with_capacity(sidecar.n_samples);
            let mut lines = text.lines();
            let header = lines
                .next()
                .ok_or_else(|| Error::parse(&path, "empty file"))?;
            let head_cols: Vec<&str> = header.split(',').collect();
            if head_cols.len() != n_ch + 1 || head_cols[0] != "time" {
                return Err(Error::parse(&path, "header must be time,<channels...>"));
            }
            for (ln, line) in lines.enumerate() {
                if line.is_empty() {
                    continue;
                }
                let mut cols = line.split(',');
                cols.next(); // time column is redundant with fs
                let mut row = Vec::with_capacity(n_ch);
                for c in cols {
                    let v: f64 = c.parse().map_err(|_| {
                        Error::parse(&path, format!("line {}: bad float {c:?}", ln + 2))
                    })?;
                    row.push(v);
                }
                if row.len() != n_ch {
                    return Err(Error::parse(
                        &path,
                        format!("line {}: expected {} values, got {}", ln + 2, n_ch, row.len()),
                    ));
                }
                rows.push(row);
            }
            let n = rows.len();
            let mut data = Array2::zeros((n_ch, n));
            for (i, row) in rows.iter().enumerate() {
                for ch in 0..n_ch {
                    data[[ch, i]] = row[ch];
                }
            }
            data
        }
        DataFormat::F64le => {
            let mut file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
            let mut bytes = Vec::new();
            file.read_to_end(&mut bytes).map_err(|e| Error::io(&path, e))?;
            let expected = n_ch * sidecar.n_samples * 8;
            if bytes.len() != expected {
                return Err(Error::parse(
                    &path,
                    format!("expected {expected} bytes, got {}", bytes.len()),
                ));
            }
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Array2::from_shape_vec((n_ch, sidecar.n_samples), vals)
                .map_err(|e| Error::parse(&path, e.to_string()))?
        }
    };
    let series = MultichannelSeries::new(sidecar.channels, data, sidecar.fs, sidecar.unit);
    series.validate()?;
    Ok(series)
}

pub fn write_events(path: &Path, events: &[Event]) -> Result<()> {
    let mut out = String::from("sample_index,condition,stimulus_class\n");
    for e in events {
        out.push_str(&format!(
            "{},{},{}\n",
            e.sample_index, e.condition, e.stimulus_class
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("sample_index,condition,stimulus_class") => {}
        _ => {
            return Err(Error::parse(
                path,
                "header must be sample_index,condition,stimulus_class",
            ))
        }
    }
    let mut events = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, format!("line {}: expected 3 columns", ln + 2)));
        }
        let sample_index: usize = cols[0]
            .parse()
            .map_err(|_| Error::parse(path, format!("line {}: bad index {:?}", ln + 2, cols[0])))?;
        events.push(Event {
            sample_index,
            condition: Condition::parse(cols[1])
                .map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 2)))?,
            stimulus_class: StimulusClass::parse(cols[2])
                .map_err(|e| Error::parse(path, format!("line {}: {e}", ln + 2)))?,
        });
    }
    Ok(events)
}

/// Metadata stored next to each matrix CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSidecar {
    pub metric: Metric,
    pub directed: bool,
    pub labels: Vec<String>,
    pub convention: String,
}

pub const MATRIX_CONVENTION: &str =
    "values[i][j] is the influence of source region j on sink region i";

/// Writes `<base>.csv` (row label + values) and `<base>.json`.
pub fn write_matrix(base: &Path, m: &ConnectivityMatrix) -> Result<()> {
    let side = MatrixSidecar {
        metric: m.metric,
        directed: m.directed,
        labels: m.labels.clone(),
        convention: MATRIX_CONVENTION.to_string(),
    };
    let side_path = base.with_extension("json");
    let json = serde_json::to_string_pretty(&side)
        .map_err(|e| Error::parse(&side_path, e.to_string()))?;
    fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))?;

    let path = base.with_extension("csv");
    let mut out = String::from("region");
    for l in &m.labels {
        out.push(',');
        out.push_str(l);
    }
    out.push('\n');
    for i in 0..m.n() {
        out.push_str(&m.labels[i]);
        for j in 0..m.n() {
            out.push(',');
            out.push_str(&fmt_f64(m.values[[i, j]]));
        }
        out.push('\n');
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))
}

pub fn read_matrix(base: &Path) -> Result<ConnectivityMatrix> {
    let side_path = base.with_extension("json");
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let side: MatrixSidecar =
        serde_json::from_str(&text).map_err(|e| Error::parse(&side_path, e.to_string()))?;
    let path = base.with_extension("csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let n = side.labels.len();
    let mut values = Array2::zeros((n, n));
    let mut lines = text.lines();
    lines.next().ok_or_else(|| Error::parse(&path, "empty file"))?;
    for i in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::parse(&path, format!("missing row {i}")))?;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != n + 1 {
            return Err(Error::parse(&path, format!("row {i}: expected {} columns", n + 1)));
        }
        for j in 0..n {
            values[[i, j]] = cols[j + 1]
                .parse()
                .map_err(|_| Error::parse(&path, format!("row {i}: bad float {:?}", cols[j + 1])))?;
        }
    }
    ConnectivityMatrix::new(side.metric, side.labels, values)
}

/// Shortest round-trip decimal representation of a float.
pub fn fmt_f64(v: f64) -> String {
    let mut buf = ryu_format(v);
    // keep plain integers readable in CSV output
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    // serde_json uses ryu internally; format through it for identical bytes
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}
