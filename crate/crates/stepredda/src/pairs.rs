//! Long-format export of selected channels for external pairs plots.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::{LabeledSpectra, WavelengthUnit};

pub const TABLE_FILE: &str = "pairs_long.csv";
pub const MANIFEST_FILE: &str = "pairs_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairsVariable {
    pub index: usize,
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairsManifest {
    pub table: String,
    pub unit: WavelengthUnit,
    pub n_rows: usize,
    pub class_names: Vec<String>,
    pub variables: Vec<PairsVariable>,
    /// Unordered channel pairs, by column index.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairsExport {
    pub table: PathBuf,
    pub manifest_path: PathBuf,
    pub manifest: PairsManifest,
}

/// Writes `pairs_long.csv` (`row, variable, wavelength, value, class`) and
/// `pairs_manifest.json` into `out_dir`.
pub fn export_pairs_data(
    spectra: &LabeledSpectra,
    selected: &[usize],
    out_dir: impl AsRef<Path>,
) -> Result<PairsExport> {
    let out_dir = out_dir.as_ref();
    if selected.is_empty() {
        return Err(Error::Config("no variables to export".into()));
    }
    if let Some(&bad) = selected.iter().find(|&&j| j >= spectra.n_channels()) {
        return Err(Error::Config(format!("variable {bad} out of range")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let table = out_dir.join(TABLE_FILE);
    let file = File::create(&table).map_err(|e| Error::io(&table, e))?;
    let mut wtr = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let to_err = |e: csv::Error| Error::Schema(e.to_string());
    wtr.write_record(["row", "variable", "wavelength", "value", "class"])
        .map_err(to_err)?;
    for (i, row) in spectra.data.rows().into_iter().enumerate() {
        let class = match &spectra.labels {
            Some(l) => spectra.class_names[l[i]].as_str(),
            None => "",
        };
        for &j in selected {
            wtr.write_record([
                i.to_string(),
                j.to_string(),
                spectra.wavelengths[j].to_string(),
                row[j].to_string(),
                class.to_string(),
            ])
            .map_err(to_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::io(&table, e))?;

    let mut pairs = Vec::new();
    for (a, &i) in selected.iter().enumerate() {
        for &j in &selected[a + 1..] {
            pairs.push((i, j));
        }
    }
    let manifest = PairsManifest {
        table: TABLE_FILE.into(),
        unit: spectra.unit,
        n_rows: spectra.n_samples(),
        class_names: spectra.class_names.clone(),
        variables: selected
            .iter()
            .map(|&j| PairsVariable {
                index: j,
                wavelength: spectra.wavelengths[j],
            })
            .collect(),
        pairs,
    };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Schema(e.to_string()))?;
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(PairsExport {
        table,
        manifest_path,
        manifest,
    })
}
