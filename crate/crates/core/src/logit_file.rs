//! Binary labeled-logit files ("SFLG").
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "SFLG"
//! version u32      1
//! n       u64      number of records
//! c       u32      number of classes
//! n × { c × f32 logits, u32 label }
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::calibration::{LabeledLogits, Logits};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SFLG";
pub const VERSION: u32 = 1;

pub fn write_logit_file(path: &Path, samples: &[LabeledLogits]) -> Result<()> {
    let c = samples.first().map_or(0, |s| s.logits.num_classes());
    if samples.iter().any(|s| s.logits.num_classes() != c) {
        return Err(Error::InvalidInput("mixed class counts in logit samples".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(samples.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&(c as u32).to_le_bytes()).map_err(io)?;
    for s in samples {
        for v in s.logits.values() {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io)?;
        }
        w.write_all(&(s.label as u32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_logit_file(path: &Path) -> Result<Vec<LabeledLogits>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; 20];
    r.read_exact(&mut header)
        .map_err(|_| Error::format(path, "truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic, expected SFLG"));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let c = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
    if c < 2 {
        return Err(Error::format(path, format!("class count {c} < 2")));
    }
    let mut record = vec![0u8; 4 * c + 4];
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for i in 0..n {
        r.read_exact(&mut record)
            .map_err(|_| Error::format(path, format!("truncated at record {i} of {n}")))?;
        let values: Vec<f64> = record[..4 * c]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let label = u32::from_le_bytes(record[4 * c..].try_into().unwrap()) as usize;
        if label >= c {
            return Err(Error::format(path, format!("record {i}: label {label} >= {c}")));
        }
        let logits = Logits::new(values).map_err(|e| Error::format(path, e.to_string()))?;
        out.push(LabeledLogits { logits, label });
    }
    Ok(out)
}
