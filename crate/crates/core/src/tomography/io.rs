use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{MeasurementRecord, ReconstructionResult, N_PARAMETERS, PARAMETER_NAMES};
use crate::config::TOOL_VERSION;
use crate::Error;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    mode: String,
    direction: String,
    momentum: f64,
    uncertainty: f64,
}

/// CSV with columns `mode,direction,momentum,uncertainty`; lines starting
/// with `#` are ignored.
pub fn read_measurements<R: Read>(input: R) -> Result<Vec<MeasurementRecord>, Error> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for (line, row) in r.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        let mode = row
            .mode
            .parse()
            .map_err(|e| Error::Parse(format!("measurement row {}: {e}", line + 1)))?;
        let rec = MeasurementRecord::new(mode, &row.direction, row.momentum, row.uncertainty);
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_measurements<W: Write>(records: &[MeasurementRecord], header: &str, mut out: W) -> Result<(), Error> {
    out.write_all(header.as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(Row {
            mode: r.mode.label().to_owned(),
            direction: r.direction.clone(),
            momentum: r.momentum,
            uncertainty: r.uncertainty,
        })
        .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Serialised form of a reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDocument {
    pub tool_version: String,
    pub config_hash: String,
    /// Sublevels labelling rows and columns of the matrices.
    pub m_values: Vec<i32>,
    pub rho_real: Vec<Vec<f64>>,
    pub rho_imag: Vec<Vec<f64>>,
    pub parameter_names: Vec<String>,
    pub parameters: Vec<f64>,
    pub parameter_covariance: Vec<Vec<f64>>,
    pub total_population: f64,
    pub residual_norm: f64,
    pub projected_residual_norm: f64,
    pub projection_distance: f64,
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fidelity_interval: Option<[f64; 2]>,
}

impl ResultDocument {
    pub fn new(result: &ReconstructionResult, config_hash: &str) -> Self {
        let el = result.rho_hat.elements();
        let cov = &result.parameter_covariance;
        Self {
            tool_version: TOOL_VERSION.to_owned(),
            config_hash: config_hash.to_owned(),
            m_values: (-2..=2).collect(),
            rho_real: (0..5).map(|i| (0..5).map(|j| el[(i, j)].re).collect()).collect(),
            rho_imag: (0..5).map(|i| (0..5).map(|j| el[(i, j)].im).collect()).collect(),
            parameter_names: PARAMETER_NAMES.iter().map(|s| s.to_string()).collect(),
            parameters: result.parameters.to_vec(),
            parameter_covariance: (0..N_PARAMETERS)
                .map(|i| (0..N_PARAMETERS).map(|j| cov[(i, j)]).collect())
                .collect(),
            total_population: result.total_population,
            residual_norm: result.residual_norm,
            projected_residual_norm: result.projected_residual_norm,
            projection_distance: result.projection_distance,
            condition_number: result.condition_number,
            singular_values: result.certificate.singular_values.clone(),
            fidelity: None,
            fidelity_interval: None,
        }
    }
}

pub fn write_result<W: Write>(doc: &ResultDocument, mut out: W) -> Result<(), Error> {
    serde_json::to_writer_pretty(&mut out, doc).map_err(|e| Error::Parse(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}
