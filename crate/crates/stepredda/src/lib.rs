//! File formats, simulation and the command-line pipeline around
//! `stepredda-core`.

pub mod cli;
pub mod error;
pub mod model;
pub mod pairs;
pub mod pipeline;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
pub use model::{load_model, save_model, ModelArtifact, RunManifest};
pub use pairs::{export_pairs_data, PairsExport, PairsManifest};
pub use pipeline::{FamilyChoice, PipelineConfig, SelectionRun};
pub use simulate::{
    inject_outliers, simulate_contaminated, ContaminationSpec, GroundTruth, OutlierRecipe,
    Simulation, SimulationConfig,
};
pub use spectra::{
    load_csv, read_csv, save_csv, write_csv, CsvSchema, LabeledSpectra, WavelengthUnit,
};
