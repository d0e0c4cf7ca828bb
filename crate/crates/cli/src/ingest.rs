//! Import of external recordings.
//!
//! The input is JSON lines, one recording per line:
//!
//! ```text
//! {"patient_id": 7, "sample_rate_hz": 400, "leads": [[...], ...]}
//! ```
//!
//! `leads` holds 8 rows (I, II, V1..V6) or 12 rows (I, II, III, aVR, aVL,
//! aVF, V1..V6) of samples in volts. Each recording is resampled to the
//! container rate, cut or zero-padded to the container length and
//! quantized at the default granularity.

use std::io::BufRead;

use ecg_guard::ecgstore::{
    fit_length, quantize, reduce_leads, resample, DatasetContainer, EcgRecord, DEFAULT_GRANULARITY_VOLTS,
    MODEL_LEAD_COUNT, STORED_LEAD_COUNT,
};
use ndarray::Array2;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecording {
    patient_id: u32,
    sample_rate_hz: u32,
    leads: Vec<Vec<f64>>,
}

fn convert(raw: RawRecording, sample_rate_hz: u32, n_samples: usize) -> Result<EcgRecord, String> {
    let rows = raw.leads.len();
    let cols = raw.leads.first().map_or(0, Vec::len);
    if cols == 0 || raw.leads.iter().any(|l| l.len() != cols) {
        return Err("leads must be non-empty rows of equal length".into());
    }
    if raw.leads.iter().flatten().any(|v| !v.is_finite()) {
        return Err("non-finite sample".into());
    }
    let flat: Vec<f64> = raw.leads.into_iter().flatten().collect();
    let mut volts = Array2::from_shape_vec((rows, cols), flat).expect("rectangular");
    volts = match rows {
        STORED_LEAD_COUNT => volts,
        MODEL_LEAD_COUNT => reduce_leads(volts.view()).map_err(|e| e.to_string())?,
        n => return Err(format!("{n} leads, expected {STORED_LEAD_COUNT} or {MODEL_LEAD_COUNT}")),
    };
    if raw.sample_rate_hz != sample_rate_hz {
        volts = resample(volts.view(), raw.sample_rate_hz, sample_rate_hz).map_err(|e| e.to_string())?;
    }
    let fitted = fit_length(volts.view(), n_samples).map_err(|e| e.to_string())?;
    quantize(fitted.view(), raw.patient_id, sample_rate_hz, DEFAULT_GRANULARITY_VOLTS).map_err(|e| e.to_string())
}

/// Reads JSON-lines recordings into a container. Blank lines are skipped;
/// any malformed line is a data error naming its line number.
pub fn read_jsonl<R: BufRead>(reader: R, sample_rate_hz: u32, n_samples: usize) -> Result<DatasetContainer, CliError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::Data(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecording =
            serde_json::from_str(&line).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?;
        records
            .push(convert(raw, sample_rate_hz, n_samples).map_err(|e| CliError::Data(format!("line {}: {e}", i + 1)))?);
    }
    DatasetContainer::new(sample_rate_hz, n_samples, DEFAULT_GRANULARITY_VOLTS, records)
        .map_err(|e| CliError::Data(e.to_string()))
}
