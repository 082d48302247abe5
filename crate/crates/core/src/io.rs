//! On-disk formats: grid files (JSON sidecar plus raw little-endian payload),
//! recorded data sets, metrics CSV and JSON documents. `FORMATS.md` at the
//! repository root describes the byte layout.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::acquisition::{DataSet, Survey};
use crate::error::{Error, Result};
use crate::grid::{Grid, Model};
use crate::wri::IterationMetrics;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const METRICS_HEADER: [&str; 9] = [
    "iter",
    "data_residual",
    "wave_residual",
    "model_error",
    "wavefield_error",
    "tv",
    "objective_J",
    "gamma",
    "lambda1",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64,
    C128,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F64 => 8,
            DType::C128 => 16,
        }
    }
}

/// Sidecar of a grid file. Data gathers reuse it with receivers along `nz`
/// and sources along `nx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub nz: usize,
    pub nx: usize,
    pub dz: f64,
    pub dx: f64,
    pub dtype: DType,
    pub order: String,
}

const ORDER: &str = "depth-fastest";

impl GridHeader {
    pub fn new(nz: usize, nx: usize, dz: f64, dx: f64, dtype: DType) -> Self {
        Self {
            nz,
            nx,
            dz,
            dx,
            dtype,
            order: ORDER.to_string(),
        }
    }

    pub fn for_grid(grid: &Grid, dtype: DType) -> Self {
        Self::new(grid.nz, grid.nx, grid.dz, grid.dx, dtype)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.nz, self.nx, self.dz, self.dx)
    }

    fn len(&self) -> usize {
        self.nz * self.nx
    }
}

/// `foo.bin` is described by `foo.json`.
pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn write_payload(path: &Path, header: &GridHeader, bytes: Vec<u8>) -> Result<()> {
    write_json(&sidecar_path(path), header)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_payload(path: &Path, dtype: DType) -> Result<(GridHeader, Vec<u8>)> {
    let header: GridHeader = read_json(&sidecar_path(path))?;
    if header.dtype != dtype {
        return Err(Error::format(path, format!("expected dtype {dtype:?}, found {:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(Error::format(path, format!("unsupported order {:?}", header.order)));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.len() * dtype.width();
    if bytes.len() != expected {
        return Err(Error::format(
            path,
            format!("payload holds {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    Ok((header, bytes))
}

fn f64s(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
}

pub fn write_real_grid(path: &Path, header: &GridHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.len() || header.dtype != DType::F64 {
        return Err(Error::InvalidInput(format!(
            "{} f64 values do not fit a {}x{} {:?} header",
            values.len(),
            header.nz,
            header.nx,
            header.dtype
        )));
    }
    let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write_payload(path, header, bytes)
}

pub fn read_real_grid(path: &Path) -> Result<(GridHeader, Vec<f64>)> {
    let (header, bytes) = read_payload(path, DType::F64)?;
    Ok((header, f64s(&bytes).collect()))
}

pub fn write_complex_grid(path: &Path, header: &GridHeader, values: &[Complex64]) -> Result<()> {
    if values.len() != header.len() || header.dtype != DType::C128 {
        return Err(Error::InvalidInput(format!(
            "{} c128 values do not fit a {}x{} {:?} header",
            values.len(),
            header.nz,
            header.nx,
            header.dtype
        )));
    }
    let bytes = values
        .iter()
        .flat_map(|v| v.re.to_le_bytes().into_iter().chain(v.im.to_le_bytes()))
        .collect();
    write_payload(path, header, bytes)
}

pub fn read_complex_grid(path: &Path) -> Result<(GridHeader, Vec<Complex64>)> {
    let (header, bytes) = read_payload(path, DType::C128)?;
    let flat: Vec<f64> = f64s(&bytes).collect();
    Ok((header, flat.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect()))
}

/// Writes squared slowness as an f64 grid file.
pub fn write_model(path: &Path, m: &Model) -> Result<()> {
    write_real_grid(path, &GridHeader::for_grid(&m.grid, DType::F64), &m.values)
}

/// Reads a squared-slowness grid file, rejecting nonpositive values.
pub fn read_model(path: &Path) -> Result<Model> {
    let (header, values) = read_real_grid(path)?;
    let grid = header.grid().map_err(|e| Error::format(path, e.to_string()))?;
    Model::new(grid, values).map_err(|e| Error::format(path, e.to_string()))
}

/// `data_f<millihertz>.bin`.
pub fn data_file_name(hz: f64) -> String {
    format!("data_f{}.bin", (hz * 1000.0).round() as u64)
}

/// Survey manifest written next to the data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub version: String,
    pub survey: Survey,
    pub n_sources: usize,
    pub n_receivers: usize,
    pub frequencies: Vec<f64>,
    pub files: Vec<String>,
    pub snr_db: Option<f64>,
    pub seed: Option<u64>,
    /// Norm of the injected noise per `[frequency][source]`.
    pub noise_norms: Option<Vec<Vec<f64>>>,
}

pub const DATA_MANIFEST: &str = "survey.json";

/// Writes one `M x sources` complex file per frequency plus `survey.json`.
pub fn write_dataset(dir: &Path, data: &DataSet, survey: &Survey) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(data.frequencies.len());
    for (fi, &hz) in data.frequencies.iter().enumerate() {
        let name = data_file_name(hz);
        let flat: Vec<Complex64> = data.gathers[fi].iter().flatten().copied().collect();
        let header = GridHeader::new(data.n_receivers, data.n_sources, 1.0, 1.0, DType::C128);
        write_complex_grid(&dir.join(&name), &header, &flat)?;
        files.push(name);
    }
    write_json(
        &dir.join(DATA_MANIFEST),
        &DataManifest {
            version: VERSION.to_string(),
            survey: survey.clone(),
            n_sources: data.n_sources,
            n_receivers: data.n_receivers,
            frequencies: data.frequencies.clone(),
            files,
            snr_db: data.snr_db,
            seed: data.noise_seed,
            noise_norms: data.noise_norms.clone(),
        },
    )
}

pub fn read_dataset(dir: &Path) -> Result<(DataSet, Survey)> {
    let mpath = dir.join(DATA_MANIFEST);
    let man: DataManifest = read_json(&mpath)?;
    if man.files.len() != man.frequencies.len() {
        return Err(Error::format(&mpath, "one data file per frequency expected"));
    }
    if man.n_sources != man.survey.n_sources() || man.n_receivers != man.survey.n_receivers() {
        return Err(Error::format(&mpath, "counts disagree with the survey"));
    }
    let mut gathers = Vec::with_capacity(man.files.len());
    for name in &man.files {
        let path = dir.join(name);
        let (h, flat) = read_complex_grid(&path)?;
        if h.nz != man.n_receivers || h.nx != man.n_sources {
            return Err(Error::format(
                &path,
                format!("shape {}x{} differs from {}x{}", h.nz, h.nx, man.n_receivers, man.n_sources),
            ));
        }
        gathers.push(flat.chunks_exact(h.nz).map(<[Complex64]>::to_vec).collect());
    }
    let data = DataSet {
        frequencies: man.frequencies,
        n_sources: man.n_sources,
        n_receivers: man.n_receivers,
        gathers,
        snr_db: man.snr_db,
        noise_seed: man.seed,
        noise_norms: man.noise_norms,
    };
    Ok((data, man.survey))
}

/// 17 significant digits, which round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// One row per outer iteration; absent error metrics are empty fields.
pub fn write_metrics_csv(path: &Path, metrics: &[IterationMetrics]) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(METRICS_HEADER).map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for m in metrics {
        w.write_record([
            m.iter.to_string(),
            fmt_f64(m.data_residual),
            fmt_f64(m.wave_residual),
            opt(m.model_error),
            opt(m.wavefield_error),
            fmt_f64(m.tv),
            fmt_f64(m.objective_j),
            fmt_f64(m.gamma),
            fmt_f64(m.lambda1),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A CSV file as header plus string rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> Result<Table> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok(Table { header, rows })
}

pub fn write_csv(path: &Path, table: &Table) -> Result<()> {
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_writer(BufWriter::new(file));
    w.write_record(&table.header).map_err(|e| csv_error(path, e))?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::format(path, e.to_string()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Side-by-side merge of metrics tables: one `iter` column followed by every
/// other column of each input, prefixed with its label. Shorter inputs
/// leave trailing cells empty.
pub fn merge_metrics(inputs: &[(String, Table)]) -> Result<Table> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no metrics tables to merge".into()));
    }
    let mut header = vec!["iter".to_string()];
    let mut columns = Vec::new();
    for (label, t) in inputs {
        let iter_col = t.header.iter().position(|h| h == "iter");
        for (j, h) in t.header.iter().enumerate() {
            if Some(j) != iter_col {
                header.push(format!("{label}:{h}"));
                columns.push((t, j));
            }
        }
    }
    let n_rows = inputs.iter().map(|(_, t)| t.rows.len()).max().unwrap_or(0);
    let rows = (0..n_rows)
        .map(|i| {
            let mut row = vec![(i + 1).to_string()];
            row.extend(
                columns
                    .iter()
                    .map(|(t, j)| t.rows.get(i).and_then(|r| r.get(*j)).cloned().unwrap_or_default()),
            );
            row
        })
        .collect();
    Ok(Table { header, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -2.5e-7] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn data_names() {
        assert_eq!(data_file_name(2.5), "data_f2500.bin");
        assert_eq!(data_file_name(7.0), "data_f7000.bin");
    }
}
