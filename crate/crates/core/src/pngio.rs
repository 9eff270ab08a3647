//! PNG import for images (8-bit, 1-4 channels) and reference maps
//! (single-channel, 8 or 16 bit), plus 8-bit writers.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::raster::{ImageRaster, PixelData, RefMap};

fn png_err(path: &Path, message: impl ToString) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

struct Decoded {
    width: usize,
    height: usize,
    color: ColorType,
    depth: BitDepth,
    bytes: Vec<u8>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut bytes = vec![0; size];
    let info = reader.next_frame(&mut bytes).map_err(|e| png_err(path, e))?;
    bytes.truncate(info.line_size * info.height as usize);
    Ok(Decoded {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes,
    })
}

fn channel_count(color: ColorType) -> Option<usize> {
    match color {
        ColorType::Grayscale => Some(1),
        ColorType::GrayscaleAlpha => Some(2),
        ColorType::Rgb => Some(3),
        ColorType::Rgba => Some(4),
        ColorType::Indexed => None,
    }
}

/// Reads an 8-bit PNG with 1-4 channels into a planar `u8` image.
pub fn read_image_png(path: &Path) -> Result<ImageRaster> {
    let d = decode(path)?;
    let channels = channel_count(d.color).ok_or_else(|| png_err(path, "indexed color is not supported"))?;
    if d.depth != BitDepth::Eight {
        return Err(png_err(path, format!("images must be 8-bit, found {:?}", d.depth)));
    }
    let n = d.height * d.width;
    let mut planar = vec![0u8; channels * n];
    for (i, px) in d.bytes.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            planar[c * n + i] = v;
        }
    }
    ImageRaster::new(channels, d.height, d.width, PixelData::U8(planar))
}

/// Reads a single-channel 8- or 16-bit PNG of class ids, rejecting ids above
/// `num_classes`.
pub fn read_map_png(path: &Path, num_classes: usize) -> Result<RefMap> {
    let d = decode(path)?;
    if d.color != ColorType::Grayscale {
        return Err(png_err(path, format!("maps must be single-channel, found {:?}", d.color)));
    }
    let values: Vec<u16> = match d.depth {
        BitDepth::Eight => d.bytes.iter().map(|&v| v as u16).collect(),
        BitDepth::Sixteen => d
            .bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect(),
        other => return Err(png_err(path, format!("maps must be 8- or 16-bit, found {other:?}"))),
    };
    if let Some(&bad) = values.iter().find(|&&v| v as usize > num_classes) {
        return Err(Error::ClassOutOfRange {
            class: bad as u32,
            num_classes,
            context: Some(path.display().to_string()),
        });
    }
    RefMap::new(d.height, d.width, values.into_iter().map(|v| v as u8).collect())
}

fn write_png(path: &Path, width: usize, height: usize, color: ColorType, depth: BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(data).map_err(|e| png_err(path, e))?;
    writer.finish().map_err(|e| png_err(path, e))
}

/// Writes a `u8` image with 1-4 channels as an 8-bit PNG.
pub fn write_image_png(path: &Path, image: &ImageRaster) -> Result<()> {
    let color = match image.channels() {
        1 => ColorType::Grayscale,
        2 => ColorType::GrayscaleAlpha,
        3 => ColorType::Rgb,
        4 => ColorType::Rgba,
        c => return Err(png_err(path, format!("cannot store {c} channels"))),
    };
    let PixelData::U8(planar) = image.data() else {
        return Err(png_err(path, "only u8 images can be written as PNG"));
    };
    let (c, n) = (image.channels(), image.height() * image.width());
    let mut interleaved = vec![0u8; c * n];
    for ch in 0..c {
        for i in 0..n {
            interleaved[i * c + ch] = planar[ch * n + i];
        }
    }
    write_png(path, image.width(), image.height(), color, BitDepth::Eight, &interleaved)
}

/// Writes a map as an 8-bit grayscale PNG.
pub fn write_map_png(path: &Path, map: &RefMap) -> Result<()> {
    write_png(path, map.width(), map.height(), ColorType::Grayscale, BitDepth::Eight, map.data())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_gray16(path: &Path, w: usize, h: usize, values: &[u16]) {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_be_bytes()).collect();
        write_png(path, w, h, ColorType::Grayscale, BitDepth::Sixteen, &bytes).unwrap();
    }

    #[test]
    fn image_round_trip_all_channel_counts() {
        let dir = tempfile::tempdir().unwrap();
        for c in 1..=4 {
            let data: Vec<u8> = (0..c * 6).map(|i| (i * 11) as u8).collect();
            let img = ImageRaster::new(c, 2, 3, PixelData::U8(data)).unwrap();
            let path = dir.path().join(format!("i{c}.png"));
            write_image_png(&path, &img).unwrap();
            assert_eq!(read_image_png(&path).unwrap(), img);
        }
    }

    #[test]
    fn map_round_trip_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = RefMap::new(2, 2, vec![0, 1, 19, 3]).unwrap();
        write_map_png(&path, &m).unwrap();
        assert_eq!(read_map_png(&path, 19).unwrap(), m);
        assert!(matches!(
            read_map_png(&path, 18),
            Err(Error::ClassOutOfRange { class: 19, .. })
        ));
    }

    #[test]
    fn sixteen_bit_map_is_validated() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("ok.png");
        write_gray16(&ok, 2, 1, &[4, 19]);
        assert_eq!(read_map_png(&ok, 19).unwrap().data(), &[4, 19]);

        let bad = dir.path().join("bad.png");
        write_gray16(&bad, 2, 1, &[1, 300]);
        let err = read_map_png(&bad, 19).unwrap_err();
        assert!(matches!(err, Error::ClassOutOfRange { class: 300, num_classes: 19, .. }));
        assert!(err.to_string().contains("bad.png"));
    }

    #[test]
    fn rgb_map_and_16bit_image_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = dir.path().join("rgb.png");
        write_image_png(&rgb, &ImageRaster::new(3, 1, 1, PixelData::U8(vec![1, 2, 3])).unwrap()).unwrap();
        assert!(read_map_png(&rgb, 5).is_err());
        let deep = dir.path().join("deep.png");
        write_gray16(&deep, 1, 1, &[7]);
        assert!(read_image_png(&deep).is_err());
    }

    #[test]
    fn garbage_is_a_png_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(read_image_png(&path), Err(Error::Png { .. })));
    }
}
