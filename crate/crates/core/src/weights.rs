//! Binary weight files.
//!
//! ```text
//! magic    "GDNW"
//! version  u32
//! count    u32
//! count × { name_len u16, name utf-8, rank u8, extents u32[rank], data f32[numel] }
//! ```
//!
//! All integers and reals are little-endian.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{GdNetConfig, GdNetParams};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"GDNW";
pub const VERSION: u32 = 1;

pub fn write_weights<W: Write>(params: &GdNetParams<f32>, mut w: W) -> Result<()> {
    let tensors = params.named_tensors();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, t) in tensors {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::InvalidArgument(format!("tensor name too long: {name}")))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.rank() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_weights(params: &GdNetParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_weights(params, BufWriter::new(File::create(path)?))
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn exact<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.exact(what)?))
    }
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated(format!("file ends inside {what}"))
    } else {
        Error::Io(e)
    }
}

/// Decode every named tensor without checking it against a configuration.
pub fn read_weights<R: Read>(inner: R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut r = Reader { inner };
    let mut magic = [0u8; 4];
    let got = read_up_to(&mut r.inner, &mut magic)?;
    if got < 4 || magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic[..got].to_vec(),
        });
    }
    let version = r.u32("header")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: VERSION,
        });
    }
    let count = r.u32("header")? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let what = format!("tensor {i}");
        let name_len = u16::from_le_bytes(r.exact(&what)?) as usize;
        let mut name = vec![0u8; name_len];
        r.inner.read_exact(&mut name).map_err(|e| truncated(e, &what))?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Malformed(format!("tensor {i} name is not UTF-8")))?;
        let [rank] = r.exact::<1>(&what)?;
        if rank == 0 {
            return Err(Error::Malformed(format!("tensor {name} has rank 0")));
        }
        let shape = (0..rank)
            .map(|_| r.u32(&what).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape.contains(&0) {
            return Err(Error::Malformed(format!("tensor {name} has a zero extent")));
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (1 << 31))
            .ok_or_else(|| Error::Malformed(format!("tensor {name} is implausibly large")))?;
        let mut raw = vec![0u8; numel * 4];
        r.inner.read_exact(&mut raw).map_err(|e| truncated(e, &what))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push((name, Tensor::new(&shape, data)?));
    }
    let mut extra = [0u8; 1];
    if read_up_to(&mut r.inner, &mut extra)? != 0 {
        return Err(Error::Malformed("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

/// Load a weight file and check it against the expected architecture.
pub fn load_weights(path: impl AsRef<Path>, config: &GdNetConfig) -> Result<GdNetParams<f32>> {
    let tensors = read_weights(BufReader::new(File::open(path)?))?;
    GdNetParams::from_named(config, tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_network;

    fn encoded() -> Vec<u8> {
        let p = init_network::<f32>(&GdNetConfig::default(), 5).unwrap();
        let mut buf = Vec::new();
        write_weights(&p, &mut buf).unwrap();
        buf
    }

    #[test]
    fn header_layout() {
        let buf = encoded();
        assert_eq!(&buf[..4], b"GDNW");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 27);
        let name_len = u16::from_le_bytes(buf[12..14].try_into().unwrap()) as usize;
        assert_eq!(&buf[14..14 + name_len], b"gd1.k1");
        assert_eq!(buf[14 + name_len], 4);
    }

    #[test]
    fn distinct_errors() {
        let buf = encoded();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_weights(&bad[..]), Err(Error::BadMagic { .. })));
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(matches!(
            read_weights(&bad[..]),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));
        assert!(matches!(
            read_weights(&buf[..buf.len() - 3]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(read_weights(&buf[..2]), Err(Error::BadMagic { .. })));
        let mut bad = buf.clone();
        bad.push(0);
        assert!(matches!(read_weights(&bad[..]), Err(Error::Malformed(_))));
    }

    #[test]
    fn wrong_architecture_is_shape_error() {
        let tensors = read_weights(&encoded()[..]).unwrap();
        let other = GdNetConfig {
            branch_widths: vec![8, 16, 32, 32, 32],
            ..GdNetConfig::default()
        };
        assert!(matches!(
            GdNetParams::from_named(&other, tensors),
            Err(Error::ShapeInconsistent { .. })
        ));
    }
}
