//! `ECGG` v1 container.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "ECGG"
//! version      u32      1
//! count        u32      number of records
//! rate         u32      nominal sample rate (Hz)
//! samples      u32      samples per record
//! leads        u8       stored lead count (8)
//! granularity  f32      volts per quantum
//! count x { patient_id u32, leads x samples i16 row-major }
//! ```

use ndarray::Array2;
use thiserror::Error;

use super::{EcgRecord, STORED_LEAD_COUNT};

pub const CONTAINER_MAGIC: [u8; 4] = *b"ECGG";
pub const CONTAINER_VERSION: u32 = 1;
pub(super) const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 1 + 4;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic {0:?}, expected \"ECGG\"")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {found} (expected {CONTAINER_VERSION})")]
    VersionMismatch { found: u32 },
    #[error("truncated payload: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after the last record")]
    TrailingBytes(usize),
    #[error("unsupported lead count {0}")]
    LeadCount(u8),
    #[error("record {index} is inconsistent with the container header: {reason}")]
    InconsistentRecord { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContainerHeader {
    pub version: u32,
    pub record_count: u32,
    pub sample_rate_hz: u32,
    pub samples_per_record: u32,
    pub lead_count: u8,
    pub granularity_volts: f32,
}

/// A set of equal-length records sharing one sample rate and granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetContainer {
    sample_rate_hz: u32,
    samples_per_record: usize,
    granularity_volts: f32,
    records: Vec<EcgRecord>,
}

impl DatasetContainer {
    pub fn new(
        sample_rate_hz: u32,
        samples_per_record: usize,
        granularity_volts: f32,
        records: Vec<EcgRecord>,
    ) -> Result<Self, ContainerError> {
        for (index, r) in records.iter().enumerate() {
            let reason = if r.sample_rate_hz() != sample_rate_hz {
                Some(format!("sample rate {} != {}", r.sample_rate_hz(), sample_rate_hz))
            } else if r.n_samples() != samples_per_record {
                Some(format!("{} samples != {}", r.n_samples(), samples_per_record))
            } else if r.granularity_volts().to_bits() != granularity_volts.to_bits() {
                Some(format!("granularity {} != {}", r.granularity_volts(), granularity_volts))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ContainerError::InconsistentRecord { index, reason });
            }
        }
        Ok(Self { sample_rate_hz, samples_per_record, granularity_volts, records })
    }

    pub fn header(&self) -> ContainerHeader {
        ContainerHeader {
            version: CONTAINER_VERSION,
            record_count: self.records.len() as u32,
            sample_rate_hz: self.sample_rate_hz,
            samples_per_record: self.samples_per_record as u32,
            lead_count: STORED_LEAD_COUNT as u8,
            granularity_volts: self.granularity_volts,
        }
    }

    pub fn records(&self) -> &[EcgRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EcgRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn samples_per_record(&self) -> usize {
        self.samples_per_record
    }

    pub fn granularity_volts(&self) -> f32 {
        self.granularity_volts
    }

    pub(super) fn record_block_len(&self) -> usize {
        4 + STORED_LEAD_COUNT * self.samples_per_record * 2
    }

    pub fn read_path(path: impl AsRef<std::path::Path>) -> Result<Self, ContainerError> {
        read_container(&std::fs::read(path)?)
    }

    pub fn write_path(&self, path: impl AsRef<std::path::Path>) -> Result<(), ContainerError> {
        std::fs::write(path, write_container(self))?;
        Ok(())
    }
}

pub fn write_container(container: &DatasetContainer) -> Vec<u8> {
    let h = container.header();
    let mut out = Vec::with_capacity(HEADER_LEN + container.len() * container.record_block_len());
    out.extend_from_slice(&CONTAINER_MAGIC);
    out.extend_from_slice(&h.version.to_le_bytes());
    out.extend_from_slice(&h.record_count.to_le_bytes());
    out.extend_from_slice(&h.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&h.samples_per_record.to_le_bytes());
    out.push(h.lead_count);
    out.extend_from_slice(&h.granularity_volts.to_le_bytes());
    for r in container.records() {
        out.extend_from_slice(&r.patient_id().to_le_bytes());
        for &q in r.leads().iter() {
            out.extend_from_slice(&q.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(ContainerError::Truncated { needed: self.pos + n, available: self.bytes.len() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn read_container(bytes: &[u8]) -> Result<DatasetContainer, ContainerError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != CONTAINER_MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != CONTAINER_VERSION {
        return Err(ContainerError::VersionMismatch { found: version });
    }
    let count = r.u32()? as usize;
    let rate = r.u32()?;
    let samples = r.u32()? as usize;
    let leads = r.take(1)?[0];
    if leads as usize != STORED_LEAD_COUNT {
        return Err(ContainerError::LeadCount(leads));
    }
    let granularity = f32::from_le_bytes(r.take(4)?.try_into().unwrap());

    let block = 4 + STORED_LEAD_COUNT * samples * 2;
    let needed = HEADER_LEN + count * block;
    if bytes.len() < needed {
        return Err(ContainerError::Truncated { needed, available: bytes.len() });
    }
    let mut records = Vec::with_capacity(count);
    for index in 0..count {
        let patient_id = r.u32()?;
        let raw = r.take(STORED_LEAD_COUNT * samples * 2)?;
        let values: Vec<i16> = raw.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
        let leads = Array2::from_shape_vec((STORED_LEAD_COUNT, samples), values).expect("block length checked");
        let record = EcgRecord::new(patient_id, rate, granularity, leads)
            .map_err(|e| ContainerError::InconsistentRecord { index, reason: e.to_string() })?;
        records.push(record);
    }
    if r.pos != bytes.len() {
        return Err(ContainerError::TrailingBytes(bytes.len() - r.pos));
    }
    DatasetContainer::new(rate, samples, granularity, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecgstore::DEFAULT_GRANULARITY_VOLTS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(n: usize, samples: usize, seed: u64) -> DatasetContainer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = (0..n)
            .map(|i| {
                let leads = Array2::from_shape_fn((8, samples), |_| rng.random::<i16>());
                EcgRecord::new(100 + i as u32, 500, DEFAULT_GRANULARITY_VOLTS, leads).unwrap()
            })
            .collect();
        DatasetContainer::new(500, samples, DEFAULT_GRANULARITY_VOLTS, records).unwrap()
    }

    #[test]
    fn empty_round_trip() {
        let c = DatasetContainer::new(500, 4096, DEFAULT_GRANULARITY_VOLTS, vec![]).unwrap();
        let bytes = write_container(&c);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(read_container(&bytes).unwrap(), c);
    }

    #[test]
    fn three_records_bit_exact() {
        let c = synthetic(3, 4096, 5);
        let bytes = write_container(&c);
        let back = read_container(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_container(&back), bytes);
        assert_eq!(back.header().record_count, 3);
    }

    #[test]
    fn header_count_exceeding_payload_is_truncated() {
        let c = synthetic(2, 16, 1);
        let mut bytes = write_container(&c);
        bytes[8..12].copy_from_slice(&5u32.to_le_bytes());
        match read_container(&bytes) {
            Err(ContainerError::Truncated { needed, available }) => {
                assert_eq!(available, bytes.len());
                assert!(needed > available);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn distinct_parse_errors() {
        let mut bytes = write_container(&synthetic(1, 8, 2));
        bytes[0] = b'X';
        assert!(matches!(read_container(&bytes), Err(ContainerError::BadMagic(_))));

        let mut bytes = write_container(&synthetic(1, 8, 2));
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_container(&bytes), Err(ContainerError::VersionMismatch { found: 2 })));

        let mut bytes = write_container(&synthetic(1, 8, 2));
        bytes.push(0);
        assert!(matches!(read_container(&bytes), Err(ContainerError::TrailingBytes(1))));

        assert!(matches!(read_container(b"EC"), Err(ContainerError::Truncated { .. })));
    }

    #[test]
    fn rejects_mixed_lengths() {
        let a = EcgRecord::new(1, 500, DEFAULT_GRANULARITY_VOLTS, Array2::zeros((8, 4))).unwrap();
        let b = EcgRecord::new(2, 500, DEFAULT_GRANULARITY_VOLTS, Array2::zeros((8, 5))).unwrap();
        let err = DatasetContainer::new(500, 4, DEFAULT_GRANULARITY_VOLTS, vec![a, b]).unwrap_err();
        assert!(matches!(err, ContainerError::InconsistentRecord { index: 1, .. }));
    }
}
