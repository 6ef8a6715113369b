//! Binary and JSON artifact formats.
//!
//! * `HTEN`: one dense tensor.
//! * `HMAP`: a voxel → feature-map lookup table.
//! * parameter bundles: a JSON manifest naming one `HTEN` file per parameter.
//!
//! All integers and floats are little-endian.

mod bundle;
mod table_file;
mod tensor_file;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use bundle::{load_bundle, save_bundle, BundleEntry, BundleManifest};
pub use table_file::{decode_table, encode_table, read_table, write_table, TABLE_MAGIC};
pub use tensor_file::{decode_tensor, encode_tensor, read_tensor, write_tensor, AnyTensor, TENSOR_MAGIC};

pub const FORMAT_VERSION: u32 = 1;

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = Path::new(&tmp);
    {
        let mut f = fs::File::create(tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> crate::Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| crate::Error::Format(format!("{} truncated at byte {}", self.what, self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> crate::Result<()> {
        if self.take(4)? != magic {
            return Err(crate::Error::Format(format!(
                "{} must start with {:?}",
                self.what,
                std::str::from_utf8(magic).unwrap_or("?")
            )));
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> crate::Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn i32(&mut self) -> crate::Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u8(&mut self) -> crate::Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn version(&mut self) -> crate::Result<()> {
        let v = self.u32()?;
        if v != FORMAT_VERSION {
            return Err(crate::Error::Format(format!("{} version {v} is not supported", self.what)));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> crate::Result<()> {
        if self.pos != self.bytes.len() {
            return Err(crate::Error::Format(format!(
                "{} has {} trailing bytes",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}
