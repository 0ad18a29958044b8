//! Index persistence: a single binary `.ctix` file holding the corpus and
//! every index structure, written with fixed little-endian framing so a
//! save/load round trip is bit-exact.

use std::io::{self, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{CorpusIndex, Segment};
use crate::corpus::{Corpus, Document};
use crate::index::occ::RankStructure;

pub const MAGIC: &[u8; 4] = b"CTIX";
pub const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not a CTIX file (bad magic)")]
    BadMagic,
    #[error("unsupported CTIX version {0}")]
    BadVersion(u8),
    #[error("corrupt CTIX file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> io::Result<()> {
    write_u32(w, b.len() as u32)?;
    w.write_all(b)
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    write_bytes(w, s.as_bytes())
}

fn write_u32s(w: &mut impl Write, v: &[u32]) -> io::Result<()> {
    write_u32(w, v.len() as u32)?;
    for &x in v {
        write_u32(w, x)?;
    }
    Ok(())
}

fn write_u64s(w: &mut impl Write, v: &[u64]) -> io::Result<()> {
    write_u32(w, v.len() as u32)?;
    for &x in v {
        write_u64(w, x)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read) -> io::Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_str(r: &mut impl Read) -> Result<String, StoreError> {
    String::from_utf8(read_bytes(r)?).map_err(|_| StoreError::Corrupt("invalid utf-8".into()))
}

fn read_u32s(r: &mut impl Read) -> io::Result<Vec<u32>> {
    let len = read_u32(r)? as usize;
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(read_u32(r)?);
    }
    Ok(v)
}

fn read_u64s(r: &mut impl Read) -> io::Result<Vec<u64>> {
    let len = read_u32(r)? as usize;
    let mut v = Vec::with_capacity(len);
    for _ in 0..len {
        v.push(read_u64(r)?);
    }
    Ok(v)
}

/// Writes the corpus and its full index to one file.
pub fn save(path: &Path, corpus: &Corpus, index: &CorpusIndex) -> Result<(), StoreError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;

    write_u32(&mut w, corpus.len() as u32)?;
    for doc in corpus.docs() {
        write_u32(&mut w, doc.id)?;
        write_str(&mut w, &doc.title)?;
        write_str(&mut w, &doc.body)?;
    }

    write_u32(&mut w, index.sa_rate)?;
    write_bytes(&mut w, &index.bwt)?;
    let (byte_of_sym, less, ck) = index.ranks.parts();
    write_bytes(&mut w, byte_of_sym)?;
    write_u32s(&mut w, less)?;
    write_u32s(&mut w, ck)?;
    write_u64s(&mut w, &index.sampled_bits)?;
    write_u32s(&mut w, &index.sampled_rank)?;
    write_u32s(&mut w, &index.samples)?;
    write_u32(&mut w, index.segs.len() as u32)?;
    for seg in &index.segs {
        write_u32(&mut w, seg.start)?;
        write_u32(&mut w, seg.len)?;
        write_u32(&mut w, seg.doc_id)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a corpus + index pair previously written by [`save`].
pub fn load(path: &Path) -> Result<(Corpus, CorpusIndex), StoreError> {
    let mut r = io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(StoreError::BadVersion(version[0]));
    }

    let n_docs = read_u32(&mut r)? as usize;
    let mut docs = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let id = read_u32(&mut r)?;
        let title = read_str(&mut r)?;
        let body = read_str(&mut r)?;
        // Already normalized at index-build time.
        docs.push(Document { id, title, body });
    }
    let corpus = Corpus::new(docs).map_err(|e| StoreError::Corrupt(e.to_string()))?;

    let sa_rate = read_u32(&mut r)?;
    let bwt = read_bytes(&mut r)?;
    let byte_of_sym = read_bytes(&mut r)?;
    let less = read_u32s(&mut r)?;
    let ck = read_u32s(&mut r)?;
    let ranks = RankStructure::from_parts(byte_of_sym, less, ck);
    let sampled_bits = read_u64s(&mut r)?;
    let sampled_rank = read_u32s(&mut r)?;
    let samples = read_u32s(&mut r)?;
    let n_segs = read_u32(&mut r)? as usize;
    let mut segs = Vec::with_capacity(n_segs);
    for _ in 0..n_segs {
        segs.push(Segment {
            start: read_u32(&mut r)?,
            len: read_u32(&mut r)?,
            doc_id: read_u32(&mut r)?,
        });
    }

    let index = CorpusIndex {
        bwt,
        ranks,
        sa_rate,
        sampled_bits,
        sampled_rank,
        samples,
        segs,
    };
    if index.is_empty() {
        return Err(StoreError::Corrupt("empty index".into()));
    }
    Ok((corpus, index))
}
