//! Binary framing for the external denoiser subprocess.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! request  = "PNPD" | version u32 | height u32 | width u32 | epsilon f64 | pixels f64 × h·w
//! response = "PNPR" | version u32 | height u32 | width u32 | pixels f64 × h·w
//! ```

use std::io::{ErrorKind, Read, Write};

use crate::error::{PnpError, Result};
use crate::grid::ImageGrid;

pub const REQUEST_MAGIC: &[u8; 4] = b"PNPD";
pub const RESPONSE_MAGIC: &[u8; 4] = b"PNPR";
pub const PROTOCOL_VERSION: u32 = 1;
const MAX_PIXELS: usize = 1 << 26;

fn write_header(w: &mut impl Write, magic: &[u8; 4], h: usize, wd: usize) -> Result<()> {
    let (h32, w32) = match (u32::try_from(h), u32::try_from(wd)) {
        (Ok(a), Ok(b)) => (a, b),
        _ => return Err(PnpError::Protocol(format!("image {h}x{wd} too large to frame"))),
    };
    w.write_all(magic)?;
    w.write_all(&PROTOCOL_VERSION.to_le_bytes())?;
    w.write_all(&h32.to_le_bytes())?;
    w.write_all(&w32.to_le_bytes())?;
    Ok(())
}

fn write_pixels(w: &mut impl Write, x: &ImageGrid) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * x.len());
    for v in x.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => PnpError::Protocol("stream ended mid-message".into()),
        _ => PnpError::Io(e),
    })
}

// Reads magic, version and shape. Returns None on a clean end of stream.
fn read_header(r: &mut impl Read, magic: &[u8; 4]) -> Result<Option<(usize, usize)>> {
    let mut got = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut got[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(PnpError::Protocol("stream ended inside magic".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if &got != magic {
        return Err(PnpError::Protocol(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = read_u32(r)?;
    if version != PROTOCOL_VERSION {
        return Err(PnpError::Protocol(format!("unsupported version {version}")));
    }
    let h = read_u32(r)? as usize;
    let w = read_u32(r)? as usize;
    if h.checked_mul(w).is_none_or(|n| n > MAX_PIXELS) {
        return Err(PnpError::Protocol(format!("implausible image size {h}x{w}")));
    }
    Ok(Some((h, w)))
}

fn read_pixels(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; 8 * n];
    read_exact(r, &mut raw)?;
    Ok(raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn write_request(w: &mut impl Write, x: &ImageGrid, epsilon: f64) -> Result<()> {
    write_header(w, REQUEST_MAGIC, x.height(), x.width())?;
    w.write_all(&epsilon.to_le_bytes())?;
    write_pixels(w, x)?;
    w.flush()?;
    Ok(())
}

/// Reads one request; `Ok(None)` means the peer closed the stream cleanly.
pub fn read_request(r: &mut impl Read) -> Result<Option<(ImageGrid, f64)>> {
    let Some((h, w)) = read_header(r, REQUEST_MAGIC)? else {
        return Ok(None);
    };
    let eps = read_f64(r)?;
    let px = read_pixels(r, h * w)?;
    Ok(Some((ImageGrid::new(h, w, px)?, eps)))
}

pub fn write_response(w: &mut impl Write, x: &ImageGrid) -> Result<()> {
    write_header(w, RESPONSE_MAGIC, x.height(), x.width())?;
    write_pixels(w, x)?;
    w.flush()?;
    Ok(())
}

/// Reads one response and checks that its shape is `expected`.
pub fn read_response(r: &mut impl Read, expected: (usize, usize)) -> Result<ImageGrid> {
    let (h, w) = read_header(r, RESPONSE_MAGIC)?
        .ok_or_else(|| PnpError::Protocol("stream closed before response".into()))?;
    if (h, w) != expected {
        return Err(PnpError::Protocol(format!(
            "response shape {h}x{w} does not match request {}x{}",
            expected.0, expected.1
        )));
    }
    let px = read_pixels(r, h * w)?;
    if px.iter().any(|v| !v.is_finite()) {
        return Err(PnpError::Numeric("denoiser returned non-finite pixels".into()));
    }
    ImageGrid::new(h, w, px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn request_round_trip_is_bit_exact() {
        let x = ImageGrid::from_fn(3, 5, |r, c| (r as f64 + 0.1).powf(c as f64) - 0.7);
        let mut buf = Vec::new();
        write_request(&mut buf, &x, 0.0123).unwrap();
        assert_eq!(&buf[..4], b"PNPD");
        assert_eq!(buf.len(), 4 + 12 + 8 + 8 * 15);
        let (y, eps) = read_request(&mut Cursor::new(buf)).unwrap().unwrap();
        assert_eq!(y, x);
        assert_eq!(eps, 0.0123);
    }

    #[test]
    fn response_round_trip_and_shape_check() {
        let x = ImageGrid::from_fn(2, 2, |r, c| (r * 2 + c) as f64);
        let mut buf = Vec::new();
        write_response(&mut buf, &x).unwrap();
        assert_eq!(read_response(&mut Cursor::new(buf.clone()), (2, 2)).unwrap(), x);
        assert!(matches!(read_response(&mut Cursor::new(buf), (4, 1)), Err(PnpError::Protocol(_))));
    }

    #[test]
    fn malformed_streams_are_protocol_errors() {
        let mut buf = Vec::new();
        write_response(&mut buf, &ImageGrid::zeros(2, 2)).unwrap();
        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_response(&mut Cursor::new(bad_magic), (2, 2)), Err(PnpError::Protocol(_))));
        let mut bad_version = buf.clone();
        bad_version[4] = 2;
        assert!(matches!(read_response(&mut Cursor::new(bad_version), (2, 2)), Err(PnpError::Protocol(_))));
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_response(&mut Cursor::new(buf), (2, 2)), Err(PnpError::Protocol(_))));
        assert!(read_request(&mut Cursor::new(Vec::new())).unwrap().is_none());
    }

    #[test]
    fn nan_response_is_numeric_error() {
        let mut buf = Vec::new();
        write_header(&mut buf, RESPONSE_MAGIC, 1, 1).unwrap();
        buf.extend_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(read_response(&mut Cursor::new(buf), (1, 1)), Err(PnpError::Numeric(_))));
    }
}
