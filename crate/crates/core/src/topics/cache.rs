//! Binary embedding cache.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "APXEMB\0\x01"
//! id_len     u32      encoder id length
//! encoder_id id_len bytes UTF-8
//! dim        u32
//! n          u64      number of rows
//! n × { u32 doc_id length, doc_id UTF-8, dim × f32 }
//! ```

use std::path::Path;

use super::{EmbeddingMatrix, TopicError};

pub const MAGIC: &[u8; 8] = b"APXEMB\0\x01";

pub fn encode_cache(m: &EmbeddingMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + m.data.len() * 4 + m.doc_ids.len() * 16);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.encoder_id.len() as u32).to_le_bytes());
    out.extend_from_slice(m.encoder_id.as_bytes());
    out.extend_from_slice(&(m.dim as u32).to_le_bytes());
    out.extend_from_slice(&(m.doc_ids.len() as u64).to_le_bytes());
    for (i, id) in m.doc_ids.iter().enumerate() {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for v in m.row(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TopicError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| {
            TopicError::Cache(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TopicError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, TopicError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, TopicError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| TopicError::Cache("invalid UTF-8".into()))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Decode a cache produced by [`encode_cache`]. Rows are re-checked for unit
/// norm; the cache never silently re-normalises.
pub fn decode_cache(bytes: &[u8]) -> Result<EmbeddingMatrix, TopicError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err(TopicError::Cache("bad magic".into()));
    }
    let encoder_id = c.string()?;
    let dim = c.u32()? as usize;
    let n = c.u64()?;
    let per_row_min = 4u64 + 4 * dim as u64;
    if n.saturating_mul(per_row_min) > c.remaining() as u64 {
        return Err(TopicError::Cache(format!("{n} rows cannot fit in {} bytes", c.remaining())));
    }
    if dim == 0 && n > 0 {
        return Err(TopicError::Cache("zero-width rows".into()));
    }
    let n = n as usize;
    let mut m = EmbeddingMatrix::empty(encoder_id, dim);
    m.doc_ids.reserve(n);
    m.data.reserve(n * dim);
    for row in 0..n {
        let id = c.string()?;
        let start = m.data.len();
        for _ in 0..dim {
            m.data.push(f32::from_le_bytes(c.take(4)?.try_into().expect("4 bytes")));
        }
        let norm: f64 = m.data[start..].iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        if norm.is_nan() || (norm - 1.0).abs() > 1e-4 {
            return Err(TopicError::Cache(format!("row {row} is not unit-normalised (norm {norm})")));
        }
        m.doc_ids.push(id);
    }
    if c.remaining() != 0 {
        return Err(TopicError::Cache(format!("{} trailing bytes", c.remaining())));
    }
    Ok(m)
}

pub fn write_cache(path: &Path, m: &EmbeddingMatrix) -> std::io::Result<()> {
    std::fs::write(path, encode_cache(m))
}

pub fn read_cache(path: &Path) -> Result<EmbeddingMatrix, TopicError> {
    let bytes = std::fs::read(path).map_err(|e| TopicError::Cache(format!("{}: {e}", path.display())))?;
    decode_cache(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topics::{embed_documents, HashingEncoder};
    use proptest::prelude::*;

    #[test]
    fn roundtrip_and_header() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let m = embed_documents(&ids, &["shelter food", "crime"], &HashingEncoder::new(16), 8, true).unwrap();
        let bytes = encode_cache(&m);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(decode_cache(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_corruption() {
        let ids = vec!["a".to_string()];
        let m = embed_documents(&ids, &["x"], &HashingEncoder::new(4), 8, true).unwrap();
        let bytes = encode_cache(&m);
        assert!(decode_cache(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_cache(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_cache(&bad).is_err());
        let mut huge = bytes;
        let n_at = 8 + 4 + m.encoder_id.len() + 4;
        huge[n_at..n_at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_cache(&huge).is_err());
    }

    proptest! {
        #[test]
        fn decode_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode_cache(&bytes);
            let mut prefixed = MAGIC.to_vec();
            prefixed.extend_from_slice(&bytes);
            let _ = decode_cache(&prefixed);
        }
    }
}
