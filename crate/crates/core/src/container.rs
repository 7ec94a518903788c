//! Framing shared by the checkpoint (`KENC`) and mask (`KENM`) containers.
//!
//! ```text
//! [0..4]    magic
//! [4..8]    version     u32 LE (= 1)
//! [8..16]   header_len  u64 LE
//! [16..16+header_len]   UTF-8 JSON header
//! [..]      payload region, entry offsets relative to its start
//! ```

use thiserror::Error;

pub const VERSION: u32 = 1;
pub const PREAMBLE_LEN: usize = 16;
pub const ALIGN: u64 = 8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("bad magic at byte offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("truncated preamble: file is {len} bytes, need at least {PREAMBLE_LEN}")]
    TruncatedPreamble { len: usize },
    #[error("unsupported container version {version} at byte offset 4")]
    UnsupportedVersion { version: u32 },
    #[error("truncated header: header_len {header_len} at byte offset 8 exceeds remaining {available} bytes")]
    TruncatedHeader { header_len: u64, available: usize },
}

/// A parsed container: the JSON header bytes and the payload region.
pub struct Frame<'a> {
    pub header: &'a [u8],
    pub payload: &'a [u8],
    /// Absolute byte offset of the payload region in the file.
    pub payload_start: u64,
}

pub fn split_frame<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Frame<'a>, FrameError> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        let found = &bytes[..bytes.len().min(4)];
        return Err(FrameError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    if bytes.len() < PREAMBLE_LEN {
        return Err(FrameError::TruncatedPreamble { len: bytes.len() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(FrameError::UnsupportedVersion { version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let available = bytes.len() - PREAMBLE_LEN;
    if header_len > available as u64 {
        return Err(FrameError::TruncatedHeader {
            header_len,
            available,
        });
    }
    let header_end = PREAMBLE_LEN + header_len as usize;
    Ok(Frame {
        header: &bytes[PREAMBLE_LEN..header_end],
        payload: &bytes[header_end..],
        payload_start: header_end as u64,
    })
}

/// Assembles a container. The JSON header is padded with trailing spaces so
/// that the payload region starts on an 8-byte boundary.
pub fn join_frame(magic: &[u8; 4], header_json: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut header = header_json.to_vec();
    while (PREAMBLE_LEN + header.len()) as u64 % ALIGN != 0 {
        header.push(b' ');
    }
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(payload);
    out
}

pub fn align_up(offset: u64) -> u64 {
    offset.div_ceil(ALIGN) * ALIGN
}

/// Lays out entries of the given byte sizes contiguously with 8-byte
/// alignment, returning each entry's offset and the total payload length.
pub fn layout(sizes: impl IntoIterator<Item = u64>) -> (Vec<u64>, u64) {
    let mut offsets = Vec::new();
    let mut cursor = 0u64;
    for size in sizes {
        cursor = align_up(cursor);
        offsets.push(cursor);
        cursor += size;
    }
    (offsets, cursor)
}
