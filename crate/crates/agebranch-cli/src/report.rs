use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Pretty JSON whose floats carry 17 significant digits, so every double reads back
/// bit for bit. Non-finite values become null.
struct Exact<'a>(PrettyFormatter<'a>);

impl Exact<'_> {
    fn float<W: ?Sized + Write>(w: &mut W, v: f64) -> io::Result<()> {
        if v.is_finite() {
            write!(w, "{v:.16e}")
        } else {
            w.write_all(b"null")
        }
    }
}

impl Formatter for Exact<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        Self::float(w, v)
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        Self::float(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Exact(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("reports serialize");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Envelope shared by all reports.
#[derive(Debug, Serialize)]
pub struct Report<'a, T> {
    pub command: &'static str,
    pub master_seed: u64,
    pub config: &'a RunConfig,
    pub result: T,
}

/// The sidecar next to a CSV file: `<path>.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Writes either the full JSON report or the CSV table plus a JSON sidecar holding
/// everything but the table. Without a path the primary output goes to stdout and
/// the sidecar is dropped.
pub fn write<T: Serialize, S: Serialize>(config: &RunConfig, command: &'static str, full: T, summary: S, csv: impl FnOnce() -> String) -> Result<(), CliError> {
    let path = config.output.path.as_deref();
    let seed = config.sim.master_seed;
    match config.output.format {
        Format::Json => emit(path, &to_json(&Report { command, master_seed: seed, config, result: full })),
        Format::Csv => {
            emit(path, &csv())?;
            if let Some(p) = path {
                emit(Some(&meta_path(p)), &to_json(&Report { command, master_seed: seed, config, result: summary }))?;
            }
            Ok(())
        }
    }
}
