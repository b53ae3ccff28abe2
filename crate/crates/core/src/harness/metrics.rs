//! Evaluation rows and the `metrics.csv` format.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub timestep: u64,
    /// Training episodes started so far.
    pub episode: usize,
    pub agent_returns: Vec<f64>,
    pub mean_return: f64,
    pub wall_clock_s: f64,
}

pub fn header(n_agents: usize) -> Vec<String> {
    let mut h = vec!["timestep".to_string(), "episode".to_string()];
    h.extend((0..n_agents).map(|i| format!("agent_{i}_return")));
    h.push("mean_return".to_string());
    h.push("wall_clock_s".to_string());
    h
}

/// Streams rows to disk, flushing after each one.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    path: PathBuf,
    last: Option<u64>,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Csv {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

impl MetricsWriter {
    pub fn create(path: &Path, n_agents: usize) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(header(n_agents)).map_err(|e| csv_error(path, e))?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter {
            inner,
            path: path.to_path_buf(),
            last: None,
        })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if self.last.is_some_and(|t| row.timestep <= t) {
            return Err(Error::Input(format!("metrics timestep {} does not increase", row.timestep)));
        }
        self.last = Some(row.timestep);
        let mut rec = vec![row.timestep.to_string(), row.episode.to_string()];
        rec.extend(row.agent_returns.iter().map(|r| r.to_string()));
        rec.push(row.mean_return.to_string());
        rec.push(row.wall_clock_s.to_string());
        self.inner.write_record(&rec).map_err(|e| csv_error(&self.path, e))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Parse a metrics file. Errors carry the 1-based line of the offending row.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let bad = |line: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let n_agents = headers.iter().filter(|h| h.ends_with("_return") && h.starts_with("agent_")).count();
    if headers.iter().collect::<Vec<_>>() != header(n_agents) {
        return Err(bad(1, "unexpected header".into()));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != n_agents + 4 {
            return Err(bad(line, format!("expected {} fields, found {}", n_agents + 4, rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("field {} is not a number: `{}`", i + 1, &rec[i])))
        };
        let timestep = rec[0]
            .parse::<u64>()
            .map_err(|_| bad(line, format!("bad timestep `{}`", &rec[0])))?;
        if rows.last().is_some_and(|r| r.timestep >= timestep) {
            return Err(bad(line, "timesteps must strictly increase".into()));
        }
        rows.push(MetricsRow {
            timestep,
            episode: rec[1].parse().map_err(|_| bad(line, format!("bad episode `{}`", &rec[1])))?,
            agent_returns: (0..n_agents).map(|i| num(2 + i)).collect::<Result<_>>()?,
            mean_return: num(2 + n_agents)?,
            wall_clock_s: num(3 + n_agents)?,
        });
    }
    Ok(rows)
}
