//! Embedding file I/O.
//!
//! Binary format (little-endian): magic `RSND`, version u32 = 1, n u64,
//! d u64, flags u8 (bit0 has_labels, bit1 has_domains), n*d f32 row-major
//! features, then n i64 labels and n i64 domain ids when flagged.
//!
//! Files ending in `.csv` use the fallback text format with header
//! `f0,...,f{d-1},label,domain`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"RSND";
const VERSION: u32 = 1;
const FLAG_LABELS: u8 = 1;
const FLAG_DOMAINS: u8 = 1 << 1;

pub fn write_embeddings(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    if path.extension().is_some_and(|e| e == "csv") {
        return write_embeddings_csv(dataset, path);
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dataset.len() as u64).to_le_bytes())?;
    w.write_all(&(dataset.dim() as u64).to_le_bytes())?;
    w.write_all(&[FLAG_LABELS | FLAG_DOMAINS])?;
    for &v in dataset.features().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &l in dataset.labels() {
        w.write_all(&l.to_le_bytes())?;
    }
    for &d in dataset.domain_ids() {
        w.write_all(&d.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_embeddings_csv(dataset: &LabeledDataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let d = dataset.dim();
    let header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    writeln!(w, "{},label,domain", header.join(","))?;
    for i in 0..dataset.len() {
        let row: Vec<String> = dataset.features().row(i).iter().map(|v| v.to_string()).collect();
        writeln!(
            w,
            "{},{},{}",
            row.join(","),
            dataset.labels()[i],
            dataset.domain_ids()[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<LabeledDataset> {
    if path.extension().is_some_and(|e| e == "csv") {
        return read_embeddings_csv(path);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".into());
    let mut r = BufReader::new(File::open(path)?);
    let mut offset: u64 = 0;
    let mut take = |buf: &mut [u8], what: &str| -> Result<()> {
        r.read_exact(buf).map_err(|_| Error::Format {
            offset,
            detail: format!("truncated while reading {what}"),
        })?;
        offset += buf.len() as u64;
        Ok(())
    };

    let mut magic = [0u8; 4];
    take(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let mut b4 = [0u8; 4];
    take(&mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let mut b8 = [0u8; 8];
    take(&mut b8, "sample count")?;
    let n = u64::from_le_bytes(b8) as usize;
    take(&mut b8, "feature dimension")?;
    let d = u64::from_le_bytes(b8) as usize;
    let mut flags = [0u8; 1];
    take(&mut flags, "flags")?;
    let flags = flags[0];
    if flags & !(FLAG_LABELS | FLAG_DOMAINS) != 0 {
        return Err(Error::Format {
            offset: offset - 1,
            detail: format!("unknown flag bits {flags:#04x}"),
        });
    }

    let mut features = vec![0.0f32; n * d];
    for v in features.iter_mut() {
        take(&mut b4, "feature data")?;
        *v = f32::from_le_bytes(b4);
    }
    let mut labels = vec![0i64; n];
    if flags & FLAG_LABELS != 0 {
        for l in labels.iter_mut() {
            take(&mut b8, "labels")?;
            *l = i64::from_le_bytes(b8);
        }
    }
    let mut domains = vec![0i64; n];
    if flags & FLAG_DOMAINS != 0 {
        for dv in domains.iter_mut() {
            take(&mut b8, "domain ids")?;
            *dv = i64::from_le_bytes(b8);
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format {
            offset,
            detail: "trailing bytes after payload".into(),
        });
    }
    LabeledDataset::new(name, Tensor::matrix(n, d, features)?, labels, domains)
}

fn read_embeddings_csv(path: &Path) -> Result<LabeledDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".into());
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or(Error::Format {
        offset: 0,
        detail: "empty csv".into(),
    })??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "label" || cols[cols.len() - 1] != "domain" {
        return Err(Error::Format {
            offset: 0,
            detail: format!("csv header must end in label,domain, got '{header}'"),
        });
    }
    let d = cols.len() - 2;
    for (i, c) in cols[..d].iter().enumerate() {
        if *c != format!("f{i}") {
            return Err(Error::Format {
                offset: 0,
                detail: format!("csv feature column {i} named '{c}', expected 'f{i}'"),
            });
        }
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    let mut offset = header.len() as u64 + 1;
    for line in lines {
        let line = line?;
        let len = line.len() as u64 + 1;
        if line.trim().is_empty() {
            offset += len;
            continue;
        }
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != d + 2 {
            return Err(Error::Format {
                offset,
                detail: format!("expected {} fields, got {}", d + 2, parts.len()),
            });
        }
        for p in &parts[..d] {
            features.push(p.parse::<f32>().map_err(|e| Error::Format {
                offset,
                detail: format!("bad float '{p}': {e}"),
            })?);
        }
        labels.push(parts[d].parse::<i64>().map_err(|e| Error::Format {
            offset,
            detail: format!("bad label '{}': {e}", parts[d]),
        })?);
        domains.push(parts[d + 1].parse::<i64>().map_err(|e| Error::Format {
            offset,
            detail: format!("bad domain '{}': {e}", parts[d + 1]),
        })?);
        offset += len;
    }
    let n = labels.len();
    LabeledDataset::new(name, Tensor::matrix(n, d, features)?, labels, domains)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample() -> LabeledDataset {
        LabeledDataset::new(
            "s",
            Tensor::matrix(3, 2, vec![0.5, -1.25, 3.0, 0.0, 1e-7, 42.0]).unwrap(),
            vec![0, 1, 0],
            vec![0, 0, 1],
        )
        .unwrap()
    }

    #[test]
    fn binary_roundtrip_is_lossless() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.rsnd");
        let ds = sample();
        write_embeddings(&ds, &p).unwrap();
        let back = read_embeddings(&p).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.domain_ids(), ds.domain_ids());
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let ds = sample();
        write_embeddings(&ds, &p).unwrap();
        let back = read_embeddings(&p).unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.domain_ids(), ds.domain_ids());
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.rsnd");
        std::fs::write(&p, b"XXXX\x01\x00\x00\x00").unwrap();
        match read_embeddings(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("empty.rsnd");
        let ds = LabeledDataset::new(
            "e",
            Tensor::matrix(0, 4, vec![]).unwrap(),
            vec![],
            vec![],
        )
        .unwrap();
        write_embeddings(&ds, &p).unwrap();
        let back = read_embeddings(&p).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn truncated_file_reports_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("trunc.rsnd");
        write_embeddings(&sample(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..25]).unwrap();
        match read_embeddings(&p) {
            Err(Error::Format { offset, detail }) => {
                assert!(offset >= 25 - 4, "{offset}: {detail}")
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("v9.rsnd");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RSND");
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.extend_from_slice(&0u64.to_le_bytes());
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        match read_embeddings(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
