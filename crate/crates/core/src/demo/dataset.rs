//! Image sets as concatenated raw image records plus a label file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::imageops::{read_raw_from, write_raw_to, ImageBuffer};
use crate::predcache::LabelVector;

pub fn write_images(images: &[ImageBuffer], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let run = || -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for img in images {
            write_raw_to(img, &mut w)?;
        }
        w.flush()?;
        Ok(())
    };
    run().map_err(|e| e.at(path))
}

pub fn read_images(path: impl AsRef<Path>) -> Result<Vec<ImageBuffer>> {
    let path = path.as_ref();
    let run = || -> Result<Vec<ImageBuffer>> {
        let mut r = BufReader::new(File::open(path)?);
        let mut images = Vec::new();
        while !r.fill_buf()?.is_empty() {
            images.push(read_raw_from(&mut r)?);
        }
        Ok(images)
    };
    run().map_err(|e| e.at(path))
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, labels.to_text()).map_err(|e| Error::from(e).at(path))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).at(path))?;
    LabelVector::parse(&text).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::generate_shapes;

    #[test]
    fn images_and_labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (imgs, y) = generate_shapes(1, 0, 7);
        write_images(&imgs, dir.path().join("x.ttaimg")).unwrap();
        write_labels(&y, dir.path().join("y.txt")).unwrap();
        assert_eq!(read_images(dir.path().join("x.ttaimg")).unwrap(), imgs);
        assert_eq!(read_labels(dir.path().join("y.txt")).unwrap(), y);
    }

    #[test]
    fn truncated_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ttaimg");
        let (imgs, _) = generate_shapes(1, 0, 2);
        write_images(&imgs, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_images(&p).unwrap_err().root(), Error::Truncated { .. }));
    }
}
