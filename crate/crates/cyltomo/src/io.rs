//! Binary field dumps: raw little-endian `f64` in C order with a JSON sidecar header.
//!
//! A dump `stem` is the pair `stem.bin`, `stem.json`. Several arrays may share
//! one file; the header then lists them as segments in storage order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::eikonal::TravelTimeTable;
use crate::geometry::{CartGrid, CylGrid};
use crate::inversion::{History, SemiDiscreteField};
use crate::observations::BoundaryData;
use crate::phantom::RefractiveField;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed header {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("inconsistent dump: {0}")]
    Format(String),
}

/// One named array inside a dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub dims: Vec<usize>,
    pub axis_order: Vec<String>,
    /// Offset in elements from the start of the data file.
    pub offset: usize,
}

/// Sidecar header of a dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    /// Semantic name, e.g. `refractive_index`.
    pub name: String,
    pub dtype: String,
    pub byte_order: String,
    /// Shape of the first (or only) array; the last axis varies fastest.
    pub dims: Vec<usize>,
    pub spacings: Vec<f64>,
    pub axis_order: Vec<String>,
    pub segments: Vec<Segment>,
    /// Free-form metadata: grids, sources, solver settings, configuration.
    pub attributes: Value,
}

impl DumpHeader {
    pub fn new(name: &str, dims: Vec<usize>, spacings: Vec<f64>, axis_order: &[&str], attributes: Value) -> Self {
        DumpHeader {
            name: name.to_string(),
            dtype: "f64".into(),
            byte_order: "little-endian".into(),
            dims,
            spacings,
            axis_order: axis_order.iter().map(|s| s.to_string()).collect(),
            segments: Vec::new(),
            attributes,
        }
    }

    /// Number of stored values.
    pub fn len(&self) -> usize {
        if self.segments.is_empty() {
            self.dims.iter().product()
        } else {
            self.segments.iter().map(|s| s.dims.iter().product::<usize>()).sum()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `stem.bin` and `stem.json`.
pub fn write_dump(stem: &Path, header: &DumpHeader, values: &[f64]) -> Result<(), DumpError> {
    if header.len() != values.len() {
        return Err(DumpError::Format(format!("header describes {} values, got {}", header.len(), values.len())));
    }
    let bin = with_ext(stem, "bin");
    let hdr = with_ext(stem, "json");
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DumpError::Io { path: dir.to_path_buf(), source: e })?;
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&bin, bytes).map_err(|e| DumpError::Io { path: bin.clone(), source: e })?;
    let text = serde_json::to_string_pretty(header).map_err(|e| DumpError::Json { path: hdr.clone(), source: e })?;
    fs::write(&hdr, text).map_err(|e| DumpError::Io { path: hdr, source: e })
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump(stem: &Path) -> Result<(DumpHeader, Vec<f64>), DumpError> {
    let bin = with_ext(stem, "bin");
    let hdr = with_ext(stem, "json");
    let text = fs::read_to_string(&hdr).map_err(|e| DumpError::Io { path: hdr.clone(), source: e })?;
    let header: DumpHeader = serde_json::from_str(&text).map_err(|e| DumpError::Json { path: hdr, source: e })?;
    let bytes = fs::read(&bin).map_err(|e| DumpError::Io { path: bin.clone(), source: e })?;
    if bytes.len() != 8 * header.len() {
        return Err(DumpError::Format(format!(
            "{} holds {} bytes, header expects {}",
            bin.display(),
            bytes.len(),
            8 * header.len()
        )));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Ok((header, values))
}

fn attr<T: for<'de> Deserialize<'de>>(header: &DumpHeader, key: &str) -> Result<T, DumpError> {
    let v = header.attributes.get(key).cloned().ok_or_else(|| DumpError::Format(format!("missing attribute {key}")))?;
    serde_json::from_value(v).map_err(|e| DumpError::Format(format!("attribute {key}: {e}")))
}

fn cart_header(name: &str, grid: &CartGrid, mut attributes: Value) -> DumpHeader {
    attributes["grid"] = json!(grid);
    DumpHeader::new(name, grid.dims().to_vec(), vec![grid.spacing; 3], &["x", "y", "z"], attributes)
}

/// Dumps an index field on its Cartesian grid.
pub fn write_refractive(stem: &Path, name: &str, field: &RefractiveField, attributes: Value) -> Result<(), DumpError> {
    write_dump(stem, &cart_header(name, &field.grid, attributes), &field.values)
}

pub fn read_refractive(stem: &Path) -> Result<RefractiveField, DumpError> {
    let (header, values) = read_dump(stem)?;
    let grid: CartGrid = attr(&header, "grid")?;
    if grid.len() != values.len() {
        return Err(DumpError::Format("grid does not match data".into()));
    }
    Ok(RefractiveField { grid, values })
}

/// Dumps a travel-time table with its source and solver settings.
pub fn write_table(stem: &Path, table: &TravelTimeTable, seed_radius: f64) -> Result<(), DumpError> {
    let attributes = json!({ "source_z0": table.source_z0, "causal": table.causal, "solver": { "method": "fast-marching", "seed_radius": seed_radius } });
    write_dump(stem, &cart_header("travel_time", &table.grid, attributes), &table.tau)
}

pub fn read_table(stem: &Path) -> Result<TravelTimeTable, DumpError> {
    let (header, tau) = read_dump(stem)?;
    Ok(TravelTimeTable {
        source_z0: attr(&header, "source_z0")?,
        grid: attr(&header, "grid")?,
        tau,
        causal: attr(&header, "causal")?,
    })
}

/// Dumps lateral and disc traces as three segments.
pub fn write_boundary(stem: &Path, data: &BoundaryData) -> Result<(), DumpError> {
    let g = &data.grid;
    let nl = data.z0s.len();
    let lateral = vec![nl, g.n_phi, g.nz()];
    let disc = vec![nl, g.nr(), g.n_phi];
    let seg = |name: &str, dims: &Vec<usize>, axes: &[&str], offset| Segment {
        name: name.into(),
        dims: dims.clone(),
        axis_order: axes.iter().map(|s| s.to_string()).collect(),
        offset,
    };
    let mut header = DumpHeader::new(
        "boundary_travel_times",
        lateral.clone(),
        vec![g.h_z, g.h_phi, g.h_z],
        &["z0", "phi", "z"],
        json!({ "grid": g, "sources": data.z0s, "delta": data.delta, "seed": data.seed }),
    );
    header.segments = vec![
        seg("p", &lateral, &["z0", "phi", "z"], 0),
        seg("p0", &disc, &["z0", "r", "phi"], data.p.len()),
        seg("pB", &disc, &["z0", "r", "phi"], data.p.len() + data.p0.len()),
    ];
    let mut values = data.p.clone();
    values.extend_from_slice(&data.p0);
    values.extend_from_slice(&data.pb);
    write_dump(stem, &header, &values)
}

fn slice_segment<'a>(header: &DumpHeader, values: &'a [f64], name: &str) -> Result<&'a [f64], DumpError> {
    let s = header.segment(name).ok_or_else(|| DumpError::Format(format!("missing segment {name}")))?;
    let len: usize = s.dims.iter().product();
    values.get(s.offset..s.offset + len).ok_or_else(|| DumpError::Format(format!("segment {name} out of range")))
}

pub fn read_boundary(stem: &Path) -> Result<BoundaryData, DumpError> {
    let (header, values) = read_dump(stem)?;
    Ok(BoundaryData {
        grid: attr(&header, "grid")?,
        z0s: attr(&header, "sources")?,
        p: slice_segment(&header, &values, "p")?.to_vec(),
        p0: slice_segment(&header, &values, "p0")?.to_vec(),
        pb: slice_segment(&header, &values, "pB")?.to_vec(),
        delta: attr(&header, "delta")?,
        seed: attr(&header, "seed")?,
    })
}

fn semidiscrete_header(name: &str, v: &SemiDiscreteField, attributes: Value) -> DumpHeader {
    let g = &v.grid;
    let mut attributes = attributes;
    attributes["grid"] = json!(g);
    attributes["r_nodes"] = json!(g.r_nodes());
    DumpHeader::new(
        name,
        vec![g.nr(), g.n_phi, g.nz(), v.n],
        vec![g.h_r, g.h_phi, g.h_z, 1.0],
        &["r", "phi", "z", "s"],
        attributes,
    )
}

/// Dumps basis coefficients on the cylindrical grid.
pub fn write_semidiscrete(stem: &Path, name: &str, v: &SemiDiscreteField, attributes: Value) -> Result<(), DumpError> {
    write_dump(stem, &semidiscrete_header(name, v, attributes), &v.values)
}

pub fn read_semidiscrete(stem: &Path) -> Result<SemiDiscreteField, DumpError> {
    let (header, values) = read_dump(stem)?;
    let grid: CylGrid = attr(&header, "grid")?;
    let n = *header.dims.last().ok_or_else(|| DumpError::Format("empty dims".into()))?;
    if grid.len() * n != values.len() {
        return Err(DumpError::Format("grid does not match data".into()));
    }
    Ok(SemiDiscreteField { grid, n, values })
}

/// Saves the current iterate and descent history for resumption.
pub fn write_checkpoint(stem: &Path, v: &SemiDiscreteField, history: &History, config: Value) -> Result<(), DumpError> {
    write_semidiscrete(stem, "checkpoint", v, json!({ "history": history, "config": config }))
}

pub fn read_checkpoint(stem: &Path) -> Result<(SemiDiscreteField, History, Value), DumpError> {
    let (header, _) = read_dump(stem)?;
    let v = read_semidiscrete(stem)?;
    let history: History = attr(&header, "history")?;
    let config = header.attributes.get("config").cloned().unwrap_or(Value::Null);
    Ok((v, history, config))
}
