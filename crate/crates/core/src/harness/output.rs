//! CSV files with an optional provenance comment line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub type CsvFile = csv::Writer<BufWriter<File>>;

/// Opens `path` for CSV output. Unless `reproducible`, the first line is a
/// `#` comment with the crate version and the current Unix time.
pub fn create_csv(path: &Path, reproducible: bool) -> io::Result<CsvFile> {
    Ok(csv::Writer::from_writer(open_output(path, reproducible)?))
}

/// Creates `path` (and its parent directories) and writes the comment line if requested.
pub fn open_output(path: &Path, reproducible: bool) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    if !reproducible {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        writeln!(out, "# zeno-lab {} unix_time={secs}", env!("CARGO_PKG_VERSION"))?;
    }
    Ok(out)
}

/// Writes a header and rows, then flushes.
pub fn write_table<I, R>(path: &Path, reproducible: bool, header: &[&str], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = create_csv(path, reproducible)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}
