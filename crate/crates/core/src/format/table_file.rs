use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::geometry::{FeatureCoord, MappingTable};

use super::{write_atomic, Reader, FORMAT_VERSION};

pub const TABLE_MAGIC: &[u8; 4] = b"HMAP";

/// `HMAP` | version | X | Y | Z | Hf | Wf (u32 each) | `(u, v)` i32 pairs.
pub fn encode_table(table: &MappingTable) -> Vec<u8> {
    let [x, y, z] = table.dims();
    let (hf, wf) = table.feature_dims();
    let mut out = Vec::with_capacity(28 + 8 * table.entries().len());
    out.extend_from_slice(TABLE_MAGIC);
    for v in [FORMAT_VERSION, x as u32, y as u32, z as u32, hf as u32, wf as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for e in table.entries() {
        out.extend_from_slice(&e.u.to_le_bytes());
        out.extend_from_slice(&e.v.to_le_bytes());
    }
    out
}

pub fn decode_table(bytes: &[u8]) -> Result<MappingTable> {
    let mut r = Reader::new(bytes, "mapping table");
    r.magic(TABLE_MAGIC)?;
    r.version()?;
    let dims = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
    let feature_dims = (r.u32()? as usize, r.u32()? as usize);
    let n: usize = dims.iter().product();
    let mut entries = Vec::with_capacity(n.min(bytes.len() / 8));
    for _ in 0..n {
        entries.push(FeatureCoord { u: r.i32()?, v: r.i32()? });
    }
    r.finish()?;
    MappingTable::new(dims, feature_dims, entries)
}

pub fn write_table(path: &Path, table: &MappingTable) -> Result<()> {
    Ok(write_atomic(path, &encode_table(table))?)
}

pub fn read_table(path: &Path) -> Result<MappingTable> {
    decode_table(&fs::read(path)?)
}
