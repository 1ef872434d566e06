//! Little-endian binary containers shared by the snapshot, basis, coordinate
//! and model files: 4-byte magic, u32 version, then typed fields.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Result, RomError};

pub(crate) struct BinWriter {
    w: BufWriter<File>,
    path: PathBuf,
}

impl BinWriter {
    pub fn create(path: &Path, magic: &[u8; 4], version: u32) -> Result<Self> {
        let file = File::create(path).map_err(|e| RomError::io(path, e))?;
        let mut w = BinWriter { w: BufWriter::new(file), path: path.to_path_buf() };
        w.bytes(magic)?;
        w.u32(version)?;
        Ok(w)
    }

    fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.w.write_all(b).map_err(|e| RomError::io(&self.path, e))
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64s(&mut self, v: &[f64]) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * 4096);
        for chunk in v.chunks(4096) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            self.bytes(&buf)?;
        }
        Ok(())
    }

    /// Length-prefixed UTF-8 JSON.
    pub fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_vec(value).map_err(|e| RomError::invalid(format!("metadata encoding: {e}")))?;
        self.u64(text.len() as u64)?;
        self.bytes(&text)
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| RomError::io(&self.path, e))
    }
}

pub(crate) struct BinReader {
    r: BufReader<File>,
    path: PathBuf,
    pos: u64,
}

impl BinReader {
    /// Opens `path`, checks the magic and rejects versions above `supported`.
    pub fn open(path: &Path, magic: &[u8; 4], supported: u32) -> Result<(Self, u32)> {
        let file = File::open(path).map_err(|e| RomError::io(path, e))?;
        let mut r = BinReader { r: BufReader::new(file), path: path.to_path_buf(), pos: 0 };
        let mut m = [0u8; 4];
        r.fill(&mut m)?;
        if &m != magic {
            return Err(RomError::Format {
                offset: 0,
                message: format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), String::from_utf8_lossy(magic)),
            });
        }
        let version = r.u32()?;
        if version == 0 || version > supported {
            return Err(RomError::UnsupportedVersion { found: version, supported });
        }
        Ok((r, version))
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        match self.r.read_exact(buf) {
            Ok(()) => {
                self.pos += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => Err(RomError::Format {
                offset: self.pos,
                message: format!("truncated file: needed {} more bytes", buf.len()),
            }),
            Err(e) => Err(RomError::io(&self.path, e)),
        }
    }

    pub fn offset(&self) -> u64 {
        self.pos
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(u64::from_le_bytes(b))
    }

    /// Reads a count and checks it against a sanity bound before allocating.
    pub fn len(&mut self, what: &str, max: u64) -> Result<usize> {
        let at = self.pos;
        let n = self.u64()?;
        if n > max {
            return Err(RomError::Format { offset: at, message: format!("{what} = {n} exceeds limit {max}") });
        }
        Ok(n as usize)
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 8 * 4096];
        let mut left = n;
        while left > 0 {
            let k = left.min(4096);
            self.fill(&mut buf[..8 * k])?;
            out.extend(buf[..8 * k].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
            left -= k;
        }
        Ok(out)
    }

    pub fn json<T: DeserializeOwned>(&mut self) -> Result<T> {
        let len = self.len("metadata length", 1 << 30)?;
        let at = self.pos;
        let mut text = vec![0u8; len];
        self.fill(&mut text)?;
        serde_json::from_slice(&text).map_err(|e| RomError::Format { offset: at, message: format!("metadata: {e}") })
    }

    /// Fails if any bytes remain.
    pub fn expect_end(mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.r.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(RomError::Format { offset: self.pos, message: "trailing bytes after payload".into() }),
            Err(e) => Err(RomError::io(&self.path, e)),
        }
    }
}

const MATRIX_MAGIC: &[u8; 4] = b"KMAT";

/// Column-major `rows x cols` matrix file.
pub(crate) fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    debug_assert_eq!(rows * cols, data.len());
    let mut w = BinWriter::create(path, MATRIX_MAGIC, 1)?;
    w.u64(rows as u64)?;
    w.u64(cols as u64)?;
    w.f64s(data)?;
    w.finish()
}

pub(crate) fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let (mut r, _) = BinReader::open(path, MATRIX_MAGIC, 1)?;
    let rows = r.len("rows", 1 << 32)?;
    let cols = r.len("cols", 1 << 32)?;
    let data = r.f64s(rows * cols)?;
    r.expect_end()?;
    Ok((rows, cols, data))
}
