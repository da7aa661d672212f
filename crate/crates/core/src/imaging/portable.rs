//! 16-bit grayscale slices stored as binary PGM (`.pgm`) or PNG (`.png`),
//! with a JSON sidecar next to the image carrying modality and calibration.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dicom::IngestConfig;
use super::slice::{Calibration, Modality, SliceImage};
use crate::error::{Error, Result};

/// Sidecar metadata. Optional fields fall back to ingestion defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub modality: Modality,
    pub calibration: Calibration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_spacing: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast_enhanced: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slice_index: Option<u32>,
    /// Free-form note, e.g. the scale applied when exporting spectra.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `scan.pgm` → `scan.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pgm,
    Png,
}

fn format_of(path: &Path) -> Result<Format> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("pgm") => Ok(Format::Pgm),
        Some("png") => Ok(Format::Png),
        _ => Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "portable slices must be .pgm or .png".into(),
        }),
    }
}

/// Raw 16-bit samples in row-major order.
pub struct RawImage {
    pub rows: usize,
    pub cols: usize,
    pub samples: Vec<u16>,
}

fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::malformed(path, "PGM header", "truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::malformed(path, "PGM header", "non-ASCII header"))
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let mut pos = 0;
    if pgm_token(bytes, &mut pos, path)? != "P5" {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: "only binary PGM (P5) is supported".into(),
        });
    }
    let mut num = |field: &str| -> Result<usize> {
        pgm_token(bytes, &mut pos, path)?
            .parse::<usize>()
            .map_err(|_| Error::malformed(path, field, "not an integer"))
    };
    let cols = num("PGM width")?;
    let rows = num("PGM height")?;
    let maxval = num("PGM maxval")?;
    if maxval != 65535 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("PGM maxval {maxval}; only 16-bit (65535) is supported"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let need = rows * cols * 2;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::malformed(path, "PGM raster", format!("expected {need} bytes")))?;
    let samples = raster
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok(RawImage { rows, cols, samples })
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<RawImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::malformed(path, "PNG", e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!(
                "PNG is {:?} at {:?}; only 16-bit single-channel grayscale is supported",
                info.color_type, info.bit_depth
            ),
        });
    }
    let (cols, rows) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(rows * cols * 2)];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::malformed(path, "PNG", e.to_string()))?;
    let samples = buf[..frame.buffer_size()]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]))
        .collect();
    Ok(RawImage { rows, cols, samples })
}

pub fn read_raw(path: &Path) -> Result<RawImage> {
    let format = format_of(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = match format {
        Format::Pgm => decode_pgm(&bytes, path)?,
        Format::Png => decode_png(&bytes, path)?,
    };
    if img.rows == 0 || img.cols == 0 {
        return Err(Error::malformed(path, "dimensions", "zero image dimension"));
    }
    Ok(img)
}

/// Writes raw 16-bit samples as PGM or PNG depending on the extension.
pub fn write_raw(path: &Path, img: &RawImage) -> Result<()> {
    let format = format_of(path)?;
    let mut out = Vec::with_capacity(img.samples.len() * 2 + 32);
    match format {
        Format::Pgm => {
            write!(out, "P5\n{} {}\n65535\n", img.cols, img.rows).expect("write to vec");
            for s in &img.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        Format::Png => {
            let mut enc = png::Encoder::new(&mut out, img.cols as u32, img.rows as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let mut w = enc
                .write_header()
                .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
            let data: Vec<u8> = img.samples.iter().flat_map(|s| s.to_be_bytes()).collect();
            w.write_image_data(&data)
                .map_err(|e| Error::invalid(format!("png encode: {e}")))?;
            w.finish().map_err(|e| Error::invalid(format!("png encode: {e}")))?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(image: &Path) -> Result<Sidecar> {
    let side = sidecar_path(image);
    let text = std::fs::read_to_string(&side)
        .map_err(|_| Error::malformed(&side, "sidecar", "missing or unreadable sidecar"))?;
    let sc: Sidecar = serde_json::from_str(&text).map_err(|e| Error::malformed(&side, "sidecar", e.to_string()))?;
    sc.calibration.validate()?;
    Ok(sc)
}

pub fn write_sidecar(image: &Path, sidecar: &Sidecar) -> Result<()> {
    let side = sidecar_path(image);
    let mut text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    text.push('\n');
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Loads a portable slice with default ingestion settings.
pub fn load_portable_slice(path: impl AsRef<Path>) -> Result<SliceImage> {
    load_portable_slice_with(path, &IngestConfig::default())
}

pub fn load_portable_slice_with(path: impl AsRef<Path>, config: &IngestConfig) -> Result<SliceImage> {
    let path = path.as_ref();
    let sidecar = read_sidecar(path)?;
    let raw = read_raw(path)?;
    let modality = config.modality.unwrap_or(sidecar.modality);
    let values: Vec<f32> = raw
        .samples
        .iter()
        .map(|&s| sidecar.calibration.apply(f64::from(s)) as f32)
        .collect();
    let values = Array2::from_shape_vec((raw.rows, raw.cols), values).expect("raster size checked");
    let mut slice = SliceImage {
        volume_id: config
            .volume_id
            .clone()
            .or_else(|| sidecar.volume_id.clone())
            .unwrap_or_default(),
        slice_index: config.slice_index.or(sidecar.slice_index).unwrap_or(0),
        pixel_spacing: sidecar.pixel_spacing.map(|[a, b]| (a, b)).unwrap_or((1.0, 1.0)),
        values,
        modality,
        contrast_enhanced: config
            .contrast_enhanced
            .or(sidecar.contrast_enhanced)
            .unwrap_or(false),
        calibration: Some(sidecar.calibration),
    };
    if modality.is_ct() {
        slice.clamp_to(config.hu_range);
    }
    Ok(slice)
}

/// Writes a slice as a portable image plus sidecar. Values are mapped back
/// through the slice's calibration (identity when absent).
pub fn save_portable_slice(slice: &SliceImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let calibration = slice.calibration.unwrap_or(Calibration::IDENTITY);
    calibration.validate()?;
    let raw = RawImage {
        rows: slice.rows(),
        cols: slice.cols(),
        samples: slice
            .values
            .iter()
            .map(|&v| calibration.invert(f64::from(v)))
            .collect(),
    };
    write_raw(path, &raw)?;
    write_sidecar(
        path,
        &Sidecar {
            modality: slice.modality,
            calibration,
            pixel_spacing: Some([slice.pixel_spacing.0, slice.pixel_spacing.1]),
            contrast_enhanced: Some(slice.contrast_enhanced),
            volume_id: Some(slice.volume_id.clone()),
            slice_index: Some(slice.slice_index),
            note: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_fixture(dir: &Path, name: &str, rows: usize, cols: usize, samples: Vec<u16>, sidecar: &Sidecar) -> PathBuf {
        let path = dir.join(name);
        write_raw(&path, &RawImage { rows, cols, samples }).unwrap();
        write_sidecar(&path, sidecar).unwrap();
        path
    }

    fn sidecar(modality: Modality, calibration: Calibration) -> Sidecar {
        Sidecar {
            modality,
            calibration,
            pixel_spacing: None,
            contrast_enhanced: None,
            volume_id: None,
            slice_index: None,
            note: None,
        }
    }

    #[test]
    fn minmax_endpoints_map_to_range() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.pgm", "a.png"] {
            let p = write_fixture(
                dir.path(),
                name,
                2,
                2,
                vec![0, 65535, 0, 65535],
                &sidecar(Modality::Ct, Calibration::MinMax { minmax: [-1024.0, 3071.0] }),
            );
            let s = load_portable_slice(&p).unwrap();
            assert_eq!(s.values.as_slice().unwrap(), &[-1024.0, 3071.0, -1024.0, 3071.0]);
        }
    }

    #[test]
    fn sidecar_modality_is_used() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_fixture(dir.path(), "m.pgm", 1, 1, vec![42], &sidecar(Modality::MrT2, Calibration::IDENTITY));
        let s = load_portable_slice(&p).unwrap();
        assert_eq!(s.modality, Modality::MrT2);
        assert_eq!(s.values[[0, 0]], 42.0);
    }

    #[test]
    fn missing_sidecar_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lonely.pgm");
        write_raw(&p, &RawImage { rows: 1, cols: 1, samples: vec![1] }).unwrap();
        match load_portable_slice(&p) {
            Err(Error::MalformedInput { field, .. }) => assert_eq!(field, "sidecar"),
            other => panic!("expected MalformedInput, got {other:?}"),
        }
    }

    #[test]
    fn rejects_8bit_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pgm");
        std::fs::write(&p, b"P5\n1 1\n255\n\x07").unwrap();
        write_sidecar(&p, &sidecar(Modality::Ct, Calibration::IDENTITY)).unwrap();
        assert!(matches!(load_portable_slice(&p), Err(Error::UnsupportedEncoding { .. })));
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.pgm");
        std::fs::write(&p, b"P5\n# made by hand\n2 1\n65535\n\x00\x01\x01\x00").unwrap();
        let raw = read_raw(&p).unwrap();
        assert_eq!(raw.samples, vec![1, 256]);
    }

    fn calibration_strategy() -> impl Strategy<Value = (Modality, Calibration, u16)> {
        prop_oneof![
            Just((Modality::Ct, Calibration::Linear { slope: 1.0, intercept: -1024.0 }, 4095)),
            Just((Modality::Ct, Calibration::MinMax { minmax: [-1024.0, 3071.0] }, u16::MAX)),
            Just((Modality::MrT2, Calibration::IDENTITY, u16::MAX)),
        ]
    }

    proptest! {
        #[test]
        fn save_of_load_is_bit_identical(
            rows in 1usize..12,
            cols in 1usize..12,
            (modality, calibration, max) in calibration_strategy(),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<u16> = (0..rows * cols).map(|_| rng.random_range(0..=max)).collect();
            let dir = tempfile::tempdir().unwrap();
            let src = write_fixture(dir.path(), "a.pgm", rows, cols, samples, &sidecar(modality, calibration));
            let slice = load_portable_slice(&src).unwrap();
            let dst = dir.path().join("b.pgm");
            save_portable_slice(&slice, &dst).unwrap();
            prop_assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());
            let again = load_portable_slice(&dst).unwrap();
            prop_assert_eq!(again.values, slice.values);
        }
    }
}
