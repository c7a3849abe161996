//! Dataset files.
//!
//! An ASCII header line `"{count} {width} {height}\n"` followed by `count`
//! binary records:
//!
//! ```text
//! label     u8 (0 benign, 1 malignant)
//! diameter  f32
//! bbox      u16 width, u16 height
//! pixels    f32[width × height], row-major
//! ```
//!
//! All binary fields are little-endian.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::synth::{BBox, Label, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn write_dataset<W: Write>(samples: &[Sample], mut w: W) -> Result<()> {
    let (width, height) = match samples.first().map(|s| s.image.shape()) {
        Some(&[1, h, w]) => (w, h),
        Some(other) => {
            return Err(Error::InvalidShape(format!("dataset images must be 1×H×W, got {other:?}")))
        }
        None => (0, 0),
    };
    writeln!(w, "{} {} {}", samples.len(), width, height)?;
    for s in samples {
        if s.image.shape() != [1, height, width] {
            return Err(Error::InvalidShape("dataset images differ in size".into()));
        }
        let b = s.bbox.unwrap_or(BBox { width: 0, height: 0 });
        w.write_all(&[s.label.as_u8()])?;
        w.write_all(&s.diameter_px.to_le_bytes())?;
        w.write_all(&b.width.to_le_bytes())?;
        w.write_all(&b.height.to_le_bytes())?;
        for &v in s.image.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(samples: &[Sample], path: impl AsRef<Path>) -> Result<()> {
    write_dataset(samples, BufWriter::new(File::create(path)?))
}

fn eof(e: io::Error, i: usize) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated(format!("dataset ends inside record {i}"))
    } else {
        Error::Io(e)
    }
}

pub fn read_dataset<R: Read>(r: R) -> Result<Vec<Sample>> {
    let mut r = BufReader::new(r);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let fields: Vec<usize> = header
        .split_whitespace()
        .map(|f| f.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Malformed(format!("bad dataset header {:?}", header.trim_end())))?;
    let [count, width, height] = fields[..] else {
        return Err(Error::Malformed(format!(
            "dataset header needs count, width, height; got {:?}",
            header.trim_end()
        )));
    };
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let mut fixed = [0u8; 9];
    let mut pixels = vec![0u8; width * height * 4];
    for i in 0..count {
        r.read_exact(&mut fixed).map_err(|e| eof(e, i))?;
        r.read_exact(&mut pixels).map_err(|e| eof(e, i))?;
        let label = Label::from_u8(fixed[0])?;
        let diameter_px = f32::from_le_bytes(fixed[1..5].try_into().unwrap());
        let bw = u16::from_le_bytes(fixed[5..7].try_into().unwrap());
        let bh = u16::from_le_bytes(fixed[7..9].try_into().unwrap());
        let data = pixels
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        samples.push(Sample {
            image: Tensor::new(&[1, height, width], data)?,
            label,
            diameter_px,
            bbox: (bw > 0 && bh > 0).then_some(BBox { width: bw, height: bh }),
        });
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Malformed("trailing bytes after last dataset record".into()));
    }
    Ok(samples)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    read_dataset(File::open(path)?)
}

/// `index,label,diameter,bbox_width,bbox_height` per sample.
pub fn write_manifest<W: Write>(samples: &[Sample], mut w: W) -> Result<()> {
    writeln!(w, "index,label,diameter,bbox_width,bbox_height")?;
    for (i, s) in samples.iter().enumerate() {
        let b = s.bbox.unwrap_or(BBox { width: 0, height: 0 });
        writeln!(
            w,
            "{i},{},{},{},{}",
            s.label.as_u8(),
            s.diameter_px,
            b.width,
            b.height
        )?;
    }
    Ok(())
}
