//! File and stdout serialization. Floats are written with Rust's shortest
//! round-trip representation, so re-parsing a file gives back the same bits.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use bellint::optimizer::AngleVector;
use serde::Serialize;

use crate::Failure;

#[derive(Debug, Serialize)]
pub struct Direction {
    pub theta: f64,
    pub phi: f64,
}

#[derive(Debug, Serialize)]
#[allow(non_snake_case)]
pub struct SettingsJson {
    pub A1: Direction,
    pub A2: Direction,
    pub B1: Direction,
    pub B2: Direction,
}

impl From<&AngleVector> for SettingsJson {
    fn from(angles: &AngleVector) -> Self {
        let d = |k: usize| Direction { theta: angles.0[2 * k], phi: angles.0[2 * k + 1] };
        Self { A1: d(0), A2: d(1), B1: d(2), B2: d(3) }
    }
}

pub fn io_failure(path: &Path, err: impl std::fmt::Display) -> Failure {
    Failure::Numerical(format!("{}: {err}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(|e| io_failure(path, e))?;
    file.write_all(b"\n").and_then(|()| file.flush()).map_err(|e| io_failure(path, e))
}

/// CSV writer over a file, or stdout when `path` is `None`.
pub fn csv_writer(path: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>, Failure> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink))
}

pub fn csv_failure(path: Option<&Path>, err: impl std::fmt::Display) -> Failure {
    match path {
        Some(p) => io_failure(p, err),
        None => Failure::Numerical(format!("stdout: {err}")),
    }
}
