//! Binary checkpoint format.
//!
//! Layout (little-endian): magic `RSNM`, version u32, ModelConfig as
//! [d_in, d_feat, d_model, num_blocks, num_heads, mlp_ratio] u32 each,
//! head_mode u8, aggregation u8, seed u64, then every parameter tensor's
//! f32 data in the `ModelParams` flattening order (shapes are implied by
//! the config, so none are stored).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Aggregation, HeadMode, ModelConfig, RelationalModel};

const MAGIC: &[u8; 4] = b"RSNM";
const VERSION: u32 = 1;

fn head_mode_tag(m: HeadMode) -> u8 {
    match m {
        HeadMode::RegressionSigmoid => 0,
        HeadMode::Classification2Way => 1,
    }
}

fn aggregation_tag(a: Aggregation) -> u8 {
    match a {
        Aggregation::Transformer => 0,
        Aggregation::Max => 1,
        Aggregation::Sum => 2,
        Aggregation::Concat => 3,
    }
}

pub fn save(model: &RelationalModel<f32>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for dim in [
        model.config.d_in,
        model.config.d_feat,
        model.config.d_model,
        model.config.num_blocks,
        model.config.num_heads,
        model.config.mlp_ratio,
    ] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    w.write_all(&[head_mode_tag(model.config.head_mode)])?;
    w.write_all(&[aggregation_tag(model.config.aggregation)])?;
    w.write_all(&model.config.seed.to_le_bytes())?;
    for t in model.params.flatten() {
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        let at = self.offset;
        self.inner.read_exact(&mut buf).map_err(|_| Error::Format {
            offset: at,
            detail: format!("truncated while reading {what}"),
        })?;
        self.offset += N as u64;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take::<4>(what)?))
    }
}

pub fn load(path: &Path) -> Result<RelationalModel<f32>> {
    let mut r = Cursor {
        inner: BufReader::new(File::open(path)?),
        offset: 0,
    };
    let magic = r.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            detail: format!("bad magic {magic:?}, expected {MAGIC:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            detail: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let d_in = r.u32("d_in")? as usize;
    let d_feat = r.u32("d_feat")? as usize;
    let d_model = r.u32("d_model")? as usize;
    let num_blocks = r.u32("num_blocks")? as usize;
    let num_heads = r.u32("num_heads")? as usize;
    let mlp_ratio = r.u32("mlp_ratio")? as usize;
    let head_at = r.offset;
    let head_mode = match r.take::<1>("head_mode")?[0] {
        0 => HeadMode::RegressionSigmoid,
        1 => HeadMode::Classification2Way,
        other => {
            return Err(Error::Format {
                offset: head_at,
                detail: format!("unknown head_mode tag {other}"),
            })
        }
    };
    let agg_at = r.offset;
    let aggregation = match r.take::<1>("aggregation")?[0] {
        0 => Aggregation::Transformer,
        1 => Aggregation::Max,
        2 => Aggregation::Sum,
        3 => Aggregation::Concat,
        other => {
            return Err(Error::Format {
                offset: agg_at,
                detail: format!("unknown aggregation tag {other}"),
            })
        }
    };
    let seed = u64::from_le_bytes(r.take::<8>("seed")?);

    let config = ModelConfig {
        d_in,
        d_feat,
        d_model,
        num_blocks,
        num_heads,
        mlp_ratio,
        head_mode,
        aggregation,
        seed,
    };
    config.validate()?;
    let mut model = RelationalModel::<f32>::zeros(config)?;
    for t in model.params.flatten_mut() {
        for v in t.data_mut() {
            *v = f32::from_le_bytes(r.take::<4>("parameter data")?);
        }
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe)? != 0 {
        return Err(Error::Format {
            offset: r.offset,
            detail: "trailing bytes after parameters".into(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn save_load_roundtrip_is_bytes_identical() {
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.rsnm");
        let p2 = dir.path().join("b.rsnm");
        let model = RelationalModel::<f32>::init(ModelConfig::tiny()).unwrap();
        save(&model, &p1).unwrap();
        let loaded = load(&p1).unwrap();
        save(&loaded, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(loaded.config, model.config);
    }

    #[test]
    fn bad_magic_is_a_format_error_at_offset_zero() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("bad.rsnm");
        std::fs::write(&p, b"NOPE0000").unwrap();
        match load(&p) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_byte_offset() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("t.rsnm");
        let model = RelationalModel::<f32>::init(ModelConfig::tiny()).unwrap();
        save(&model, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
        match load(&p) {
            Err(Error::Format { offset, detail }) => {
                assert!(offset > 0, "{detail}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
