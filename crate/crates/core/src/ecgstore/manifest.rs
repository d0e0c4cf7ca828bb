//! Line-delimited audit manifest for a container: one
//! `patient_id<TAB>byte_offset<TAB>checksum` line per record, where the
//! checksum is the first 16 hex digits of the SHA-256 of the record block.

use sha2::{Digest, Sha256};

use super::container::{write_container, ContainerError, DatasetContainer, HEADER_LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub patient_id: u32,
    pub offset: u64,
    pub checksum: String,
}

fn checksum(block: &[u8]) -> String {
    Sha256::digest(block).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn entries(container: &DatasetContainer, bytes: &[u8]) -> Vec<ManifestEntry> {
    let block = container.record_block_len();
    container
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let offset = HEADER_LEN + i * block;
            ManifestEntry {
                patient_id: r.patient_id(),
                offset: offset as u64,
                checksum: checksum(&bytes[offset..offset + block]),
            }
        })
        .collect()
}

pub fn write_manifest(container: &DatasetContainer) -> String {
    let bytes = write_container(container);
    entries(container, &bytes).iter().map(|e| format!("{}\t{}\t{}\n", e.patient_id, e.offset, e.checksum)).collect()
}

/// Checks a manifest against serialized container bytes, returning the
/// indices of mismatching lines.
pub fn verify_manifest(bytes: &[u8], manifest: &str) -> Result<Vec<usize>, ContainerError> {
    let container = super::read_container(bytes)?;
    let expected = entries(&container, bytes);
    let lines: Vec<&str> = manifest.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut bad = Vec::new();
    for i in 0..expected.len().max(lines.len()) {
        let ok = match (expected.get(i), lines.get(i)) {
            (Some(e), Some(line)) => *line == format!("{}\t{}\t{}", e.patient_id, e.offset, e.checksum),
            _ => false,
        };
        if !ok {
            bad.push(i);
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecgstore::{EcgRecord, DEFAULT_GRANULARITY_VOLTS};
    use ndarray::Array2;

    #[test]
    fn manifest_detects_tampering() {
        let records = (0..3)
            .map(|i| {
                let leads = Array2::from_shape_fn((8, 10), |(r, c)| (r * 10 + c + i) as i16);
                EcgRecord::new(i as u32, 500, DEFAULT_GRANULARITY_VOLTS, leads).unwrap()
            })
            .collect();
        let c = DatasetContainer::new(500, 10, DEFAULT_GRANULARITY_VOLTS, records).unwrap();
        let manifest = write_manifest(&c);
        assert_eq!(manifest.lines().count(), 3);
        let mut bytes = write_container(&c);
        assert!(verify_manifest(&bytes, &manifest).unwrap().is_empty());
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert_eq!(verify_manifest(&bytes, &manifest).unwrap(), vec![2]);
    }
}
