//! PNG and raw image files.
//!
//! The raw format is `TTAIMG01`, then little-endian `u32` height, width and
//! channel count, then the pixel bytes in planar (channel-major) order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ImageBuffer;
use crate::error::{Error, Result};

pub const RAW_MAGIC: &[u8; 8] = b"TTAIMG01";
const RAW_HEADER_LEN: usize = 8 + 12;

pub fn write_raw_to<W: Write>(img: &ImageBuffer, mut w: W) -> Result<()> {
    let (h, wd, c) = img.dims();
    w.write_all(RAW_MAGIC)?;
    for d in [h, wd, c] {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut planar = Vec::with_capacity(img.data().len());
    for ch in 0..c {
        planar.extend(img.data().iter().skip(ch).step_by(c));
    }
    w.write_all(&planar)?;
    Ok(())
}

fn read_exact_counted<R: Read>(r: &mut R, buf: &mut [u8], already: usize, expected: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Truncated {
                    expected: expected as u64,
                    actual: (already + filled) as u64,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// Read one raw image record from a stream.
pub fn read_raw_from<R: Read>(mut r: R) -> Result<ImageBuffer> {
    let mut header = [0u8; RAW_HEADER_LEN];
    read_exact_counted(&mut r, &mut header, 0, RAW_HEADER_LEN)?;
    if &header[..8] != RAW_MAGIC {
        return Err(Error::Format(format!(
            "bad image magic {:?}, expected {:?}",
            String::from_utf8_lossy(&header[..8]),
            std::str::from_utf8(RAW_MAGIC).unwrap()
        )));
    }
    let dim = |i: usize| u32::from_le_bytes(header[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let len = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .filter(|&n| n > 0 && n <= 1 << 30)
        .ok_or_else(|| Error::Format(format!("implausible image dimensions {h}x{w}x{c}")))?;
    let mut planar = vec![0u8; len];
    read_exact_counted(&mut r, &mut planar, RAW_HEADER_LEN, RAW_HEADER_LEN + len)?;
    let plane = h * w;
    let data = (0..len).map(|i| planar[(i % c) * plane + i / c]).collect();
    ImageBuffer::new(h, w, c, data)
}

pub fn write_raw(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_raw_to(img, &mut w)?;
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    File::open(path)
        .map_err(Error::from)
        .and_then(|f| read_raw_from(BufReader::new(f)))
        .map_err(|e| e.at(path))
}

/// Read a PNG as 8-bit RGB (grey is replicated, alpha dropped).
pub fn read_png(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let run = || -> Result<ImageBuffer> {
        let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
        decoder.set_transformations(png::Transformations::normalize_to_color8());
        let mut reader = decoder.read_info().map_err(|e| Error::Format(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Format("PNG too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Format(e.to_string()))?;
        buf.truncate(info.buffer_size());
        let (h, w) = (info.height as usize, info.width as usize);
        let src_channels = info.color_type.samples();
        let rgb: Vec<u8> = buf
            .chunks_exact(src_channels)
            .flat_map(|px| match src_channels {
                1 | 2 => [px[0], px[0], px[0]],
                _ => [px[0], px[1], px[2]],
            })
            .collect();
        ImageBuffer::new(h, w, 3, rgb)
    };
    run().map_err(|e| e.at(path))
}

pub fn write_png(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let color = match img.channels() {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            4 => png::ColorType::Rgba,
            c => return Err(Error::Format(format!("cannot write {c}-channel image as PNG"))),
        };
        let w = BufWriter::new(File::create(path)?);
        let mut encoder = png::Encoder::new(w, img.width() as u32, img.height() as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(|e| Error::Format(e.to_string()))?;
        writer
            .write_image_data(img.data())
            .map_err(|e| Error::Format(e.to_string()))?;
        writer.finish().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Read by extension: `.png` as PNG, anything else as raw.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    if is_png(path) {
        read_png(path)
    } else {
        read_raw(path)
    }
}

pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if is_png(path) {
        write_png(img, path)
    } else {
        write_raw(img, path)
    }
}
