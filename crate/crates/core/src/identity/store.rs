use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use super::{cluster_stats, likelihood, ClusterStats, IdentityError, LikelihoodStrategy};
use crate::discriminator::Discriminator;
use crate::embedder::EcgVector;
use crate::Exec;

const MAGIC: &[u8; 4] = b"ECGV";
const VERSION: u32 = 1;

/// Patient clusters keyed by id, all vectors of one dimension.
///
/// Scoring takes `&self` and may run from many threads; `insert` and
/// `register_patient` take `&mut self`, so the borrow checker enforces a
/// single writer (wrap in a `RwLock` to share across threads).
///
/// The embedder and head are supplied by the caller on every scoring call.
/// With [`VectorDatabase::with_cache`] the intra-cluster statistics are
/// memoized per head and dropped for a cluster whenever it changes.
#[derive(Debug)]
pub struct VectorDatabase {
    dim: usize,
    clusters: BTreeMap<u32, Vec<EcgVector>>,
    cache: Option<Mutex<HashMap<u32, (u64, ClusterStats)>>>,
}

impl Clone for VectorDatabase {
    fn clone(&self) -> Self {
        Self { dim: self.dim, clusters: self.clusters.clone(), cache: self.cache.as_ref().map(|_| Mutex::default()) }
    }
}

impl PartialEq for VectorDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.clusters == other.clusters
    }
}

/// Highest-scoring patient; ties go to the lowest id.
pub fn best_match(scores: &[(u32, f64)]) -> Option<(u32, f64)> {
    scores.iter().copied().fold(None, |best, (id, s)| match best {
        Some((bid, bs)) if bs > s || (bs == s && bid < id) => Some((bid, bs)),
        _ => Some((id, s)),
    })
}

impl VectorDatabase {
    pub fn new(dim: usize) -> Self {
        Self { dim, clusters: BTreeMap::new(), cache: None }
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache = enabled.then(Mutex::default);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of patients.
    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn vector_count(&self) -> usize {
        self.clusters.values().map(Vec::len).sum()
    }

    pub fn contains(&self, patient_id: u32) -> bool {
        self.clusters.contains_key(&patient_id)
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.clusters.keys().copied()
    }

    pub fn clusters(&self) -> impl Iterator<Item = (u32, &[EcgVector])> {
        self.clusters.iter().map(|(&id, v)| (id, v.as_slice()))
    }

    pub fn cluster(&self, patient_id: u32) -> Result<&[EcgVector], IdentityError> {
        self.clusters.get(&patient_id).map(Vec::as_slice).ok_or(IdentityError::UnknownPatient(patient_id))
    }

    fn check_dim(&self, v: &EcgVector) -> Result<(), IdentityError> {
        if v.dim() == self.dim {
            Ok(())
        } else {
            Err(IdentityError::DimMismatch { expected: self.dim, found: v.dim() })
        }
    }

    fn invalidate(&mut self, patient_id: u32) {
        if let Some(cache) = &mut self.cache {
            cache.get_mut().expect("cache lock").remove(&patient_id);
        }
    }

    /// Adds a new patient with at least one vector.
    pub fn register_patient(&mut self, patient_id: u32, vectors: Vec<EcgVector>) -> Result<(), IdentityError> {
        if self.clusters.contains_key(&patient_id) {
            return Err(IdentityError::DuplicatePatient(patient_id));
        }
        if vectors.is_empty() {
            return Err(IdentityError::EmptyCluster);
        }
        for v in &vectors {
            self.check_dim(v)?;
        }
        self.invalidate(patient_id);
        self.clusters.insert(patient_id, vectors);
        Ok(())
    }

    /// Appends `v` to the patient's cluster, creating it on first insert.
    /// Returns the new cluster size.
    pub fn insert(&mut self, patient_id: u32, v: EcgVector) -> Result<usize, IdentityError> {
        self.check_dim(&v)?;
        self.invalidate(patient_id);
        let cluster = self.clusters.entry(patient_id).or_default();
        cluster.push(v);
        Ok(cluster.len())
    }

    fn stats_for(
        &self,
        patient_id: u32,
        cluster: &[EcgVector],
        head: &dyn Discriminator,
    ) -> Result<Option<ClusterStats>, IdentityError> {
        let (Some(cache), Some(key)) = (&self.cache, head.cache_key()) else {
            return Ok(None);
        };
        if let Some((k, stats)) = cache.lock().expect("cache lock").get(&patient_id) {
            if *k == key {
                return Ok(Some(stats.clone()));
            }
        }
        let stats = cluster_stats(cluster, head)?;
        cache.lock().expect("cache lock").insert(patient_id, (key, stats.clone()));
        Ok(Some(stats))
    }

    /// Likelihood that `v` belongs to `patient_id`.
    pub fn score(
        &self,
        v: &EcgVector,
        patient_id: u32,
        head: &dyn Discriminator,
        strategy: LikelihoodStrategy,
    ) -> Result<f64, IdentityError> {
        self.check_dim(v)?;
        let cluster = self.cluster(patient_id)?;
        let stats = match strategy {
            LikelihoodStrategy::WeightedDiscAvg | LikelihoodStrategy::WeightedConsistency => {
                self.stats_for(patient_id, cluster, head)?
            }
            _ => None,
        };
        likelihood(v, cluster, head, strategy, stats.as_ref())
    }

    /// Scores `v` against every cluster, in ascending patient id order.
    pub fn score_all(
        &self,
        v: &EcgVector,
        head: &dyn Discriminator,
        strategy: LikelihoodStrategy,
        exec: Exec,
    ) -> Result<Vec<(u32, f64)>, IdentityError> {
        if self.is_empty() {
            return Err(IdentityError::EmptyDatabase);
        }
        self.check_dim(v)?;
        let ids: Vec<u32> = self.patient_ids().collect();
        exec.map(&ids, |&id| Ok((id, self.score(v, id, head, strategy)?))).into_iter().collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.vector_count() * self.dim * 8);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.dim as u32, self.clusters.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (&id, vectors) in &self.clusters {
            out.extend_from_slice(&id.to_le_bytes());
            out.extend_from_slice(&(vectors.len() as u32).to_le_bytes());
            for v in vectors {
                for x in v.values() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IdentityError> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IdentityError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(IdentityError::Format(format!("unsupported version {version}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()?;
        let mut db = Self::new(dim);
        for _ in 0..count {
            let id = r.u32()?;
            let n = r.u32()? as usize;
            let mut vectors = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let values = r
                    .take(dim * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect();
                vectors.push(EcgVector::new(values).map_err(|e| IdentityError::Format(e.to_string()))?);
            }
            db.register_patient(id, vectors).map_err(|e| IdentityError::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(IdentityError::Format("trailing bytes".into()));
        }
        Ok(db)
    }

    pub fn persist(&self, path: &Path) -> Result<(), IdentityError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// One line per vector: `patient_id<TAB>index<TAB>v1,v2,...` with
    /// round-trip exact number formatting.
    pub fn dump_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, vectors) in &self.clusters {
            for (i, v) in vectors.iter().enumerate() {
                let values: Vec<String> = v.values().iter().map(|x| x.to_string()).collect();
                writeln!(w, "{id}\t{i}\t{}", values.join(","))?;
            }
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdentityError> {
        let s = self.bytes.get(self.pos..self.pos + n).ok_or_else(|| IdentityError::Format("truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IdentityError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
