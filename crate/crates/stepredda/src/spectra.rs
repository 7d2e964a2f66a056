//! Labeled spectra and their CSV form: one header row of wavelengths plus a
//! named label column, one sample per row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WavelengthUnit {
    /// cm⁻¹, conventionally stored in decreasing order.
    Wavenumber,
    Nanometer,
    /// Positional channel numbers; used when the header is not numeric.
    Index,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSpectra {
    pub data: Array2<f64>,
    /// 0-based class indices into `class_names`; `None` for unlabeled sets.
    pub labels: Option<Vec<usize>>,
    pub wavelengths: Vec<f64>,
    pub unit: WavelengthUnit,
    pub class_names: Vec<String>,
}

impl LabeledSpectra {
    pub fn n_samples(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::Config("the data set has no label column".into()))
    }

    pub fn validate(&self) -> Result<()> {
        let (n, p) = self.data.dim();
        if self.wavelengths.len() != p {
            return Err(Error::Config(format!(
                "{} wavelengths for {p} channels",
                self.wavelengths.len()
            )));
        }
        if let Some(((r, c), _)) = self.data.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: r + 2,
                col: c + 1,
            });
        }
        if self.unit != WavelengthUnit::Index && !strictly_monotone(&self.wavelengths) {
            return Err(Error::Config(
                "wavelength axis is not strictly monotone".into(),
            ));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Config(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            if let Some((row, &l)) = labels
                .iter()
                .enumerate()
                .find(|(_, &l)| l >= self.n_classes())
            {
                return Err(Error::UnknownLabel {
                    value: l.to_string(),
                    row: row + 2,
                });
            }
        }
        Ok(())
    }

    /// Copy restricted to the given channels.
    pub fn select_channels(&self, channels: &[usize]) -> LabeledSpectra {
        LabeledSpectra {
            data: self.data.select(ndarray::Axis(1), channels),
            labels: self.labels.clone(),
            wavelengths: channels.iter().map(|&j| self.wavelengths[j]).collect(),
            unit: self.unit,
            class_names: self.class_names.clone(),
        }
    }
}

fn strictly_monotone(w: &[f64]) -> bool {
    w.windows(2).all(|p| p[1] > p[0]) || w.windows(2).all(|p| p[1] < p[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    /// Name of the label column; `None` reads an unlabeled set.
    pub label: Option<String>,
    pub delimiter: u8,
    /// Overrides the unit inferred from the header.
    pub unit: Option<WavelengthUnit>,
    /// Fixes the class order (for test sets); values outside it are errors.
    pub class_names: Option<Vec<String>>,
    /// When false, a missing label column yields an unlabeled set.
    pub require_label: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label: Some("class".into()),
            delimiter: b',',
            unit: None,
            class_names: None,
            require_label: true,
        }
    }
}

impl CsvSchema {
    pub fn labeled(label: &str) -> Self {
        CsvSchema {
            label: Some(label.into()),
            ..CsvSchema::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledSpectra> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let spectra = read_csv(file, schema)?;
    log::info!(
        "{}: {} rows, {} channels, {} classes",
        path.display(),
        spectra.n_samples(),
        spectra.n_channels(),
        spectra.n_classes()
    );
    Ok(spectra)
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    let (row, col) = match e.position() {
        Some(pos) => (pos.line() as usize, 1),
        None => (row, 1),
    };
    Error::Parse {
        row,
        col,
        message: e.to_string(),
    }
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LabeledSpectra> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
        None => {
            return Err(Error::Parse {
                row: 1,
                col: 1,
                message: "missing header row".into(),
            })
        }
    };
    let label_col = match &schema.label {
        Some(name) => match header.iter().position(|h| h == name) {
            Some(c) => Some(c),
            None if !schema.require_label => None,
            None => {
                return Err(Error::Parse {
                    row: 1,
                    col: 1,
                    message: format!("no label column named {name:?}"),
                })
            }
        },
        None => None,
    };
    let channel_cols: Vec<usize> = (0..header.len())
        .filter(|&c| Some(c) != label_col)
        .collect();
    if channel_cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "no spectral columns".into(),
        });
    }
    let numeric: Option<Vec<f64>> = channel_cols
        .iter()
        .map(|&c| header[c].parse::<f64>().ok().filter(|v| v.is_finite()))
        .collect();
    let (wavelengths, inferred) = match numeric {
        Some(w) if strictly_monotone(&w) || w.len() == 1 => {
            let unit = if w.len() > 1 && w[1] < w[0] {
                WavelengthUnit::Wavenumber
            } else {
                WavelengthUnit::Nanometer
            };
            (w, unit)
        }
        _ => (
            (0..channel_cols.len()).map(|j| j as f64).collect(),
            WavelengthUnit::Index,
        ),
    };

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    let mut n = 0;
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_error(e, row))?;
        if rec.len() != header.len() {
            return Err(Error::Parse {
                row,
                col: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for &c in &channel_cols {
            let cell = &rec[c];
            if cell.is_empty() {
                return Err(Error::NonFinite { row, col: c + 1 });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                message: format!("{cell:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col: c + 1 });
            }
            values.push(v);
        }
        if let Some(lc) = label_col {
            raw_labels.push((row, rec[lc].to_string()));
        }
        n += 1;
    }
    let data =
        Array2::from_shape_vec((n, channel_cols.len()), values).expect("row lengths were checked");

    let (labels, class_names) = match label_col {
        None => (None, schema.class_names.clone().unwrap_or_default()),
        Some(_) => {
            let names = match &schema.class_names {
                Some(names) => names.clone(),
                None => {
                    let mut names: Vec<String> =
                        raw_labels.iter().map(|(_, l)| l.clone()).collect();
                    names.sort();
                    names.dedup();
                    names
                }
            };
            let mut labels = Vec::with_capacity(n);
            for (row, value) in raw_labels {
                match names.iter().position(|c| *c == value) {
                    Some(g) => labels.push(g),
                    None => return Err(Error::UnknownLabel { value, row }),
                }
            }
            (Some(labels), names)
        }
    };
    let spectra = LabeledSpectra {
        data,
        labels,
        wavelengths,
        unit: schema.unit.unwrap_or(inferred),
        class_names,
    };
    spectra.validate()?;
    Ok(spectra)
}

/// Header cell for one channel. Positional axes are written as `v<j>` so
/// they are read back as positional.
fn header_cell(unit: WavelengthUnit, w: f64) -> String {
    match unit {
        WavelengthUnit::Index => format!("v{w}"),
        _ => format!("{w}"),
    }
}

pub fn write_csv<W: Write>(
    writer: W,
    spectra: &LabeledSpectra,
    label: &str,
    delimiter: u8,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(writer);
    let to_err = |e: csv::Error| Error::Schema(e.to_string());
    let mut header: Vec<String> = spectra
        .wavelengths
        .iter()
        .map(|&w| header_cell(spectra.unit, w))
        .collect();
    if spectra.labels.is_some() {
        header.push(label.to_string());
    }
    wtr.write_record(&header).map_err(to_err)?;
    write_rows(&mut wtr, spectra.data.view(), |i| {
        spectra
            .labels
            .as_ref()
            .map(|l| spectra.class_names[l[i]].clone())
    })
    .map_err(to_err)?;
    wtr.flush().map_err(|e| Error::Schema(e.to_string()))?;
    Ok(())
}

fn write_rows<W: Write>(
    wtr: &mut csv::Writer<W>,
    data: ArrayView2<f64>,
    label: impl Fn(usize) -> Option<String>,
) -> std::result::Result<(), csv::Error> {
    let mut record = Vec::with_capacity(data.ncols() + 1);
    for (i, row) in data.rows().into_iter().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| format!("{v}")));
        if let Some(l) = label(i) {
            record.push(l);
        }
        wtr.write_record(&record)?;
    }
    Ok(())
}

pub fn save_csv(
    path: impl AsRef<Path>,
    spectra: &LabeledSpectra,
    label: &str,
    delimiter: u8,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), spectra, label, delimiter)
}
