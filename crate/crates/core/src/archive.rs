//! Task-set archives on disk.
//!
//! An archive is a directory holding
//! - `template.json`: the template source, copied verbatim;
//! - `instances.json`: per-instance seeds and factor values;
//! - `matrix.bin`: the `n x d` factor matrix as little-endian f64, row-major;
//! - `layout.json`: the column layout.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factors::StateLayout;
use crate::init::{InstanceRecord, TaskTemplate};
use crate::metrics::TaskSet;

pub const TEMPLATE_FILE: &str = "template.json";
pub const INSTANCES_FILE: &str = "instances.json";
pub const MATRIX_FILE: &str = "matrix.bin";
pub const LAYOUT_FILE: &str = "layout.json";
pub const ARCHIVE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancesFile {
    pub schema: u32,
    pub template: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub instances: Vec<InstanceRecord>,
}

pub fn matrix_to_bytes(m: &[f64]) -> Vec<u8> {
    m.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn matrix_from_bytes(b: &[u8]) -> Result<Vec<f64>> {
    if !b.len().is_multiple_of(8) {
        return Err(Error::Archive(format!("{MATRIX_FILE} length {} is not a multiple of 8", b.len())));
    }
    Ok(b.chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Write `set`, sampled with `seed` from the template whose source is
/// `template_source`, into `dir` (created if missing).
pub fn write_archive(dir: &Path, template_source: &str, set: &TaskSet, seed: u64) -> Result<()> {
    fs::create_dir_all(dir)?;
    let records = (0..set.len())
        .map(|i| set.instance(i).map(|inst| inst.record(i, &set.template)))
        .collect::<Result<Vec<_>>>()?;
    let file = InstancesFile {
        schema: ARCHIVE_SCHEMA,
        template: set.template.name.clone(),
        seed,
        n: set.len(),
        d: set.dim(),
        instances: records,
    };
    fs::write(dir.join(TEMPLATE_FILE), template_source)?;
    fs::write(dir.join(INSTANCES_FILE), pretty(&file))?;
    fs::write(dir.join(MATRIX_FILE), matrix_to_bytes(&set.matrix))?;
    fs::write(dir.join(LAYOUT_FILE), pretty(&set.layout))?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<String> {
    fs::read_to_string(dir.join(name)).map_err(|e| Error::Archive(format!("{}: {e}", dir.join(name).display())))
}

/// A loaded archive.
#[derive(Debug, Clone)]
pub struct Archive {
    pub template_source: String,
    pub seed: u64,
    pub set: TaskSet,
}

/// Load an archive and check that its files agree with each other.
pub fn read_archive(dir: &Path) -> Result<Archive> {
    let template_source = read(dir, TEMPLATE_FILE)?;
    let template = Arc::new(TaskTemplate::from_json(&template_source)?);
    let file: InstancesFile = serde_json::from_str(&read(dir, INSTANCES_FILE)?)
        .map_err(|e| Error::Archive(format!("{INSTANCES_FILE}: {e}")))?;
    if file.schema != ARCHIVE_SCHEMA {
        return Err(Error::Archive(format!("unsupported archive schema {}", file.schema)));
    }
    let layout = StateLayout::from_json(&read(dir, LAYOUT_FILE)?)?;
    let bytes = fs::read(dir.join(MATRIX_FILE)).map_err(|e| Error::Archive(format!("{MATRIX_FILE}: {e}")))?;
    let matrix = matrix_from_bytes(&bytes)?;
    if file.instances.len() != file.n || layout.len() != file.d || matrix.len() != file.n * file.d {
        return Err(Error::Archive(format!(
            "inconsistent archive: n={} d={} but {} records, {} layout slots, {} matrix values",
            file.n,
            file.d,
            file.instances.len(),
            layout.len(),
            matrix.len()
        )));
    }
    // Regenerate to recover slot provenance and to verify the matrix.
    let instances = file
        .instances
        .iter()
        .map(|r| crate::init::sample_task(&template, r.seed))
        .collect::<Result<Vec<_>>>()?;
    let set = TaskSet::from_instances(template, &instances)?;
    if set.layout.structure() != layout.structure() && !set.is_empty() {
        return Err(Error::Archive(format!("{LAYOUT_FILE} does not match the regenerated instances")));
    }
    if set.matrix.iter().zip(&matrix).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::Archive(format!("{MATRIX_FILE} does not match the regenerated instances")));
    }
    Ok(Archive {
        template_source,
        seed: file.seed,
        set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::builtin;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = Arc::new(builtin::puttputt());
        let set = TaskSet::sample(t, 7, 3).unwrap();
        write_archive(dir.path(), builtin::PUTTPUTT, &set, 3).unwrap();
        let a = read_archive(dir.path()).unwrap();
        assert_eq!(a.seed, 3);
        assert_eq!(a.set.matrix, set.matrix);
        assert_eq!(a.set.seeds, set.seeds);
        assert_eq!(a.template_source, builtin::PUTTPUTT);
    }

    #[test]
    fn empty_archive_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let set = TaskSet::sample(Arc::new(builtin::puttputt()), 0, 1).unwrap();
        write_archive(dir.path(), builtin::PUTTPUTT, &set, 1).unwrap();
        assert!(read_archive(dir.path()).unwrap().set.is_empty());
    }

    #[test]
    fn tampered_matrix_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let set = TaskSet::sample(Arc::new(builtin::puttputt()), 2, 1).unwrap();
        write_archive(dir.path(), builtin::PUTTPUTT, &set, 1).unwrap();
        let p = dir.path().join(MATRIX_FILE);
        let mut b = fs::read(&p).unwrap();
        b[3] ^= 1;
        fs::write(&p, b).unwrap();
        assert!(read_archive(dir.path()).is_err());
    }
}
