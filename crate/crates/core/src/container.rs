//! Framed little-endian binary containers.
//!
//! Every artifact written by this workspace (forward model, dataset,
//! checkpoint) shares one envelope: a 4-byte ASCII magic, a `u32` format
//! version, then a type-specific payload of little-endian scalars and
//! arrays. Readers verify the magic and version up front so a wrong file
//! fails fast with a clear message instead of decoding garbage.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Upper bound accepted for any length prefix, to reject corrupt files
/// before attempting a huge allocation.
const MAX_DECLARED_LEN: u64 = 1 << 33;

pub struct ContainerWriter<W: Write> {
    inner: W,
}

impl ContainerWriter<BufWriter<File>> {
    pub fn create(path: &Path, magic: &[u8; 4], version: u32) -> Result<Self> {
        let file = File::create(path)?;
        Self::new(BufWriter::new(file), magic, version)
    }
}

impl<W: Write> ContainerWriter<W> {
    pub fn new(mut inner: W, magic: &[u8; 4], version: u32) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_u32::<LittleEndian>(version)?;
        Ok(Self { inner })
    }

    pub fn put_u32(&mut self, v: u32) -> Result<()> {
        Ok(self.inner.write_u32::<LittleEndian>(v)?)
    }

    pub fn put_u64(&mut self, v: u64) -> Result<()> {
        Ok(self.inner.write_u64::<LittleEndian>(v)?)
    }

    pub fn put_f64(&mut self, v: f64) -> Result<()> {
        Ok(self.inner.write_f64::<LittleEndian>(v)?)
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) -> Result<()> {
        Ok(self.inner.write_all(bytes)?)
    }

    /// Length-prefixed vector of f64.
    pub fn put_f64_vec(&mut self, v: &Array1<f64>) -> Result<()> {
        self.put_u64(v.len() as u64)?;
        for &x in v.iter() {
            self.put_f64(x)?;
        }
        Ok(())
    }

    /// Shape-prefixed matrix of f64, written in row-major order.
    pub fn put_f64_mat(&mut self, m: &Array2<f64>) -> Result<()> {
        self.put_u64(m.nrows() as u64)?;
        self.put_u64(m.ncols() as u64)?;
        for &x in m.iter() {
            self.put_f64(x)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct ContainerReader<R: Read> {
    inner: R,
    pub version: u32,
}

impl ContainerReader<BufReader<File>> {
    pub fn open(path: &Path, magic: &[u8; 4], max_version: u32) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::new(BufReader::new(file), magic, max_version)
    }
}

impl<R: Read> ContainerReader<R> {
    pub fn new(mut inner: R, magic: &[u8; 4], max_version: u32) -> Result<Self> {
        let mut got = [0u8; 4];
        inner.read_exact(&mut got)?;
        if &got != magic {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(magic),
                String::from_utf8_lossy(&got)
            )));
        }
        let version = inner.read_u32::<LittleEndian>()?;
        if version == 0 || version > max_version {
            return Err(Error::Format(format!(
                "unsupported {} version {version} (supported: 1..={max_version})",
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(Self { inner, version })
    }

    pub fn get_u32(&mut self) -> Result<u32> {
        Ok(self.inner.read_u32::<LittleEndian>()?)
    }

    pub fn get_u64(&mut self) -> Result<u64> {
        Ok(self.inner.read_u64::<LittleEndian>()?)
    }

    pub fn get_f64(&mut self) -> Result<f64> {
        Ok(self.inner.read_f64::<LittleEndian>()?)
    }

    pub fn get_bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    pub fn get_len(&mut self) -> Result<usize> {
        let n = self.get_u64()?;
        if n > MAX_DECLARED_LEN {
            return Err(Error::Format(format!("declared length {n} is implausible")));
        }
        Ok(n as usize)
    }

    pub fn get_f64_vec(&mut self) -> Result<Array1<f64>> {
        let n = self.get_len()?;
        let mut out = Array1::zeros(n);
        for x in out.iter_mut() {
            *x = self.get_f64()?;
        }
        Ok(out)
    }

    pub fn get_f64_mat(&mut self) -> Result<Array2<f64>> {
        let nrows = self.get_len()?;
        let ncols = self.get_len()?;
        if nrows.checked_mul(ncols).map_or(true, |n| n as u64 > MAX_DECLARED_LEN) {
            return Err(Error::Format(format!(
                "declared matrix shape {nrows}x{ncols} is implausible"
            )));
        }
        let mut out = Array2::zeros((nrows, ncols));
        for x in out.iter_mut() {
            *x = self.get_f64()?;
        }
        Ok(out)
    }

    /// Asserts the stream is fully consumed; trailing bytes mean the file
    /// does not match the declared layout.
    pub fn expect_eof(mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

/// SHA-256 of an in-memory buffer.
pub fn sha256_bytes(bytes: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.finalize().into()
}

/// SHA-256 of a file's contents, streamed.
pub fn sha256_file(path: &Path) -> Result<[u8; 32]> {
    let mut file = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().into())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
