//! Canonical ECG data model.
//!
//! Recordings are stored as 8 quantized leads (I, II, V1..V6); the
//! remaining limb leads are derived on demand when building the
//! (12, 4096) model input.

mod container;
mod leads;
mod manifest;
mod signal;

use ndarray::Array2;
use thiserror::Error;

pub use container::{read_container, write_container, ContainerError, ContainerHeader, DatasetContainer};
pub use leads::{expand_leads, reduce_leads};
pub use manifest::{verify_manifest, write_manifest, ManifestEntry};
pub use signal::{dequantize, fit_length, quantize, resample};

pub const STORED_LEAD_COUNT: usize = 8;
pub const MODEL_LEAD_COUNT: usize = 12;
pub const MODEL_SAMPLES: usize = 4096;
pub const MODEL_SAMPLE_RATE_HZ: u32 = 500;

/// Volts per quantum of the stored integers (4.88 µV).
pub const DEFAULT_GRANULARITY_VOLTS: f32 = 4.88e-6;

pub const STORED_LEAD_NAMES: [&str; STORED_LEAD_COUNT] = ["I", "II", "V1", "V2", "V3", "V4", "V5", "V6"];
pub const MODEL_LEAD_NAMES: [&str; MODEL_LEAD_COUNT] =
    ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("expected {expected} lead rows, got {found}")]
    LeadCount { expected: usize, found: usize },
    #[error("expected {expected} samples per lead, got {found}")]
    SampleCount { expected: usize, found: usize },
    #[error("granularity must be positive and finite, got {0}")]
    Granularity(f32),
    #[error("sample rates must be positive (got {from_hz} -> {to_hz})")]
    SampleRate { from_hz: u32, to_hz: u32 },
    #[error("target length must be positive")]
    TargetLength,
}

/// One quantized recording: 8 stored leads of signed 16-bit samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    patient_id: u32,
    sample_rate_hz: u32,
    granularity_volts: f32,
    leads: Array2<i16>,
}

impl EcgRecord {
    pub fn new(
        patient_id: u32,
        sample_rate_hz: u32,
        granularity_volts: f32,
        leads: Array2<i16>,
    ) -> Result<Self, StoreError> {
        if leads.nrows() != STORED_LEAD_COUNT {
            return Err(StoreError::LeadCount { expected: STORED_LEAD_COUNT, found: leads.nrows() });
        }
        if !(granularity_volts.is_finite() && granularity_volts > 0.0) {
            return Err(StoreError::Granularity(granularity_volts));
        }
        if sample_rate_hz == 0 {
            return Err(StoreError::SampleRate { from_hz: 0, to_hz: 0 });
        }
        Ok(Self { patient_id, sample_rate_hz, granularity_volts, leads })
    }

    pub fn patient_id(&self) -> u32 {
        self.patient_id
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn granularity_volts(&self) -> f32 {
        self.granularity_volts
    }

    /// Stored samples, shape (8, n_samples), lead order I, II, V1..V6.
    pub fn leads(&self) -> &Array2<i16> {
        &self.leads
    }

    pub fn n_samples(&self) -> usize {
        self.leads.ncols()
    }
}

/// Network input: 12 leads by 4096 samples, in volts.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    values: Array2<f64>,
}

impl ModelInput {
    pub fn new(values: Array2<f64>) -> Result<Self, StoreError> {
        if values.nrows() != MODEL_LEAD_COUNT {
            return Err(StoreError::LeadCount { expected: MODEL_LEAD_COUNT, found: values.nrows() });
        }
        if values.ncols() != MODEL_SAMPLES {
            return Err(StoreError::SampleCount { expected: MODEL_SAMPLES, found: values.ncols() });
        }
        Ok(Self { values })
    }

    /// Builds the model input for a stored record: dequantize, resample to
    /// 500 Hz when needed, expand to 12 leads and fit to 4096 samples.
    pub fn from_record(record: &EcgRecord) -> Result<Self, StoreError> {
        let mut volts = dequantize(record);
        if record.sample_rate_hz() != MODEL_SAMPLE_RATE_HZ {
            volts = resample(volts.view(), record.sample_rate_hz(), MODEL_SAMPLE_RATE_HZ)?;
        }
        let expanded = expand_leads(volts.view())?;
        Self::new(fit_length(expanded.view(), MODEL_SAMPLES)?)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
}
