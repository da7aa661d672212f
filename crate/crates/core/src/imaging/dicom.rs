//! Minimal DICOM reader: uncompressed, explicit VR little endian, single frame.
//!
//! Anything outside that subset is rejected with `UnsupportedEncoding`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::slice::{validate_range, Calibration, Modality, SliceImage, DEFAULT_HU_RANGE};
use crate::error::{Error, Result};

pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

type Tag = (u16, u16);

const TRANSFER_SYNTAX: Tag = (0x0002, 0x0010);
const MODALITY: Tag = (0x0008, 0x0060);
const SERIES_DESCRIPTION: Tag = (0x0008, 0x103E);
const CONTRAST_BOLUS_AGENT: Tag = (0x0018, 0x0010);
const INSTANCE_NUMBER: Tag = (0x0020, 0x0013);
const SAMPLES_PER_PIXEL: Tag = (0x0028, 0x0002);
const NUMBER_OF_FRAMES: Tag = (0x0028, 0x0008);
const ROWS: Tag = (0x0028, 0x0010);
const COLUMNS: Tag = (0x0028, 0x0011);
const PIXEL_SPACING: Tag = (0x0028, 0x0030);
const BITS_ALLOCATED: Tag = (0x0028, 0x0100);
const PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103);
const RESCALE_INTERCEPT: Tag = (0x0028, 0x1052);
const RESCALE_SLOPE: Tag = (0x0028, 0x1053);
const PIXEL_DATA: Tag = (0x7FE0, 0x0010);

const ITEM: Tag = (0xFFFE, 0xE000);
const ITEM_DELIMITATION: Tag = (0xFFFE, 0xE00D);
const SEQUENCE_DELIMITATION: Tag = (0xFFFE, 0xE0DD);
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

/// Ingestion options shared by the DICOM and portable loaders.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub hu_range: (f64, f64),
    /// Overrides the modality read from the file.
    pub modality: Option<Modality>,
    pub contrast_enhanced: Option<bool>,
    pub volume_id: Option<String>,
    pub slice_index: Option<u32>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            hu_range: DEFAULT_HU_RANGE,
            modality: None,
            contrast_enhanced: None,
            volume_id: None,
            slice_index: None,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    vr: [u8; 2],
    value: Vec<u8>,
}

/// Top-level data elements of a parsed file. Sequence contents are skipped.
#[derive(Debug, Default)]
struct DataSet {
    elements: BTreeMap<Tag, Element>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

fn has_long_length(vr: [u8; 2]) -> bool {
    matches!(
        &vr,
        b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR" | b"UT" | b"UV"
    )
}

impl<'a> Reader<'a> {
    fn truncated(&self, what: &str) -> Error {
        Error::malformed(self.path, what, format!("file truncated at byte {}", self.pos))
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or_else(|| self.truncated(what))?;
        if end > self.bytes.len() {
            return Err(self.truncated(what));
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn peek_group(&self) -> Option<u16> {
        self.bytes
            .get(self.pos..self.pos + 2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn tag(&mut self) -> Result<Tag> {
        Ok((self.u16("tag group")?, self.u16("tag element")?))
    }

    /// Reads one explicit-VR element. Sequences are consumed and returned with an empty value.
    fn element(&mut self) -> Result<(Tag, Element)> {
        let tag = self.tag()?;
        let vr_bytes = self.take(2, "VR")?;
        let vr = [vr_bytes[0], vr_bytes[1]];
        if !vr.iter().all(u8::is_ascii_uppercase) {
            return Err(Error::UnsupportedEncoding {
                path: self.path.to_path_buf(),
                detail: format!(
                    "element ({:04X},{:04X}) has no explicit VR; only explicit VR little endian is supported",
                    tag.0, tag.1
                ),
            });
        }
        let len = if has_long_length(vr) {
            self.take(2, "reserved")?;
            self.u32("value length")?
        } else {
            u32::from(self.u16("value length")?)
        };

        if len == UNDEFINED_LENGTH {
            if &vr == b"SQ" {
                self.skip_undefined_sequence()?;
                return Ok((tag, Element { vr, value: Vec::new() }));
            }
            return Err(Error::UnsupportedEncoding {
                path: self.path.to_path_buf(),
                detail: format!(
                    "element ({:04X},{:04X}) has undefined length (encapsulated or compressed data)",
                    tag.0, tag.1
                ),
            });
        }
        let value = self.take(len as usize, "element value")?;
        let value = if &vr == b"SQ" { Vec::new() } else { value.to_vec() };
        Ok((tag, Element { vr, value }))
    }

    fn skip_undefined_sequence(&mut self) -> Result<()> {
        loop {
            let tag = self.tag()?;
            let len = self.u32("item length")?;
            match tag {
                SEQUENCE_DELIMITATION => return Ok(()),
                ITEM if len == UNDEFINED_LENGTH => loop {
                    if self.peek_tag()? == ITEM_DELIMITATION {
                        self.tag()?;
                        self.u32("item delimitation length")?;
                        break;
                    }
                    self.element()?;
                },
                ITEM => {
                    self.take(len as usize, "sequence item")?;
                }
                other => {
                    return Err(Error::malformed(
                        self.path,
                        format!("({:04X},{:04X})", other.0, other.1),
                        "unexpected tag inside sequence",
                    ))
                }
            }
        }
    }

    fn peek_tag(&self) -> Result<Tag> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| self.truncated("tag"))?;
        Ok((u16::from_le_bytes([b[0], b[1]]), u16::from_le_bytes([b[2], b[3]])))
    }
}

fn parse(bytes: &[u8], path: &Path) -> Result<DataSet> {
    if bytes.len() < 132 || &bytes[128..132] != b"DICM" {
        return Err(Error::malformed(path, "preamble", "missing 128-byte preamble and DICM prefix"));
    }
    let mut reader = Reader {
        bytes,
        pos: 132,
        path,
    };
    let mut set = DataSet::default();

    // File meta group is always explicit VR little endian.
    while reader.peek_group() == Some(0x0002) {
        let (tag, el) = reader.element()?;
        set.elements.insert(tag, el);
    }
    let syntax = set
        .text(TRANSFER_SYNTAX)
        .ok_or_else(|| Error::malformed(path, "TransferSyntaxUID (0002,0010)", "missing"))?;
    if syntax != EXPLICIT_VR_LITTLE_ENDIAN {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("transfer syntax {syntax}; only {EXPLICIT_VR_LITTLE_ENDIAN} is supported"),
        });
    }

    while !reader.at_end() {
        let (tag, el) = reader.element()?;
        set.elements.insert(tag, el);
    }
    Ok(set)
}

impl DataSet {
    fn text(&self, tag: Tag) -> Option<String> {
        self.elements.get(&tag).map(|el| {
            String::from_utf8_lossy(&el.value)
                .trim_matches(|c: char| c == '\0' || c.is_whitespace())
                .to_string()
        })
    }

    fn us(&self, tag: Tag, name: &str, path: &Path) -> Result<Option<u16>> {
        match self.elements.get(&tag) {
            None => Ok(None),
            Some(el) if &el.vr == b"US" && el.value.len() >= 2 => {
                Ok(Some(u16::from_le_bytes([el.value[0], el.value[1]])))
            }
            Some(_) => Err(Error::malformed(path, name, "expected a US value")),
        }
    }

    fn numbers(&self, tag: Tag, name: &str, path: &Path) -> Result<Option<Vec<f64>>> {
        let Some(text) = self.text(tag) else {
            return Ok(None);
        };
        text.split('\\')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::malformed(path, name, format!("cannot parse number {s:?}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn number(&self, tag: Tag, name: &str, path: &Path) -> Result<Option<f64>> {
        Ok(self.numbers(tag, name, path)?.and_then(|v| v.first().copied()))
    }
}

fn infer_mr_modality(description: Option<&str>) -> Modality {
    let desc = description.unwrap_or_default().to_ascii_uppercase();
    if desc.contains("T2") {
        Modality::MrT2
    } else if desc.contains("OUT") || desc.contains("OPP") || desc.contains("OOP") {
        Modality::MrT1OutOfPhase
    } else {
        Modality::MrT1InPhase
    }
}

/// Reads one DICOM slice. CT samples are rescaled to HU and clamped to `config.hu_range`;
/// MR samples are passed through unchanged.
pub fn load_dicom_slice(path: impl AsRef<Path>, config: &IngestConfig) -> Result<SliceImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dicom(&bytes, path, config)
}

pub(crate) fn decode_dicom(bytes: &[u8], path: &Path, config: &IngestConfig) -> Result<SliceImage> {
    validate_range(config.hu_range)?;
    let set = parse(bytes, path)?;
    let require = |tag: Tag, name: &str| -> Result<u16> {
        set.us(tag, name, path)?
            .ok_or_else(|| Error::malformed(path, name, "missing mandatory tag"))
    };

    let rows = require(ROWS, "Rows (0028,0010)")? as usize;
    let cols = require(COLUMNS, "Columns (0028,0011)")? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::malformed(path, "Rows/Columns", "zero image dimension"));
    }
    let bits = set.us(BITS_ALLOCATED, "BitsAllocated (0028,0100)", path)?.unwrap_or(16);
    let signed = set.us(PIXEL_REPRESENTATION, "PixelRepresentation (0028,0103)", path)?.unwrap_or(0) == 1;
    let samples = set.us(SAMPLES_PER_PIXEL, "SamplesPerPixel (0028,0002)", path)?.unwrap_or(1);
    if samples != 1 {
        return Err(Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            detail: format!("SamplesPerPixel {samples}; only single-channel images are supported"),
        });
    }
    if let Some(frames) = set.number(NUMBER_OF_FRAMES, "NumberOfFrames (0028,0008)", path)? {
        if frames > 1.0 {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("{frames} frames; only single-frame images are supported"),
            });
        }
    }

    let pixel = set
        .elements
        .get(&PIXEL_DATA)
        .ok_or_else(|| Error::malformed(path, "PixelData (7FE0,0010)", "missing mandatory tag"))?;
    let n = rows * cols;
    let raw: Vec<f64> = match (bits, signed) {
        (16, _) => {
            if pixel.value.len() < 2 * n {
                return Err(Error::malformed(
                    path,
                    "PixelData (7FE0,0010)",
                    format!("{} bytes for {rows}x{cols} 16-bit samples", pixel.value.len()),
                ));
            }
            pixel.value[..2 * n]
                .chunks_exact(2)
                .map(|b| {
                    if signed {
                        f64::from(i16::from_le_bytes([b[0], b[1]]))
                    } else {
                        f64::from(u16::from_le_bytes([b[0], b[1]]))
                    }
                })
                .collect()
        }
        (8, _) => {
            if pixel.value.len() < n {
                return Err(Error::malformed(path, "PixelData (7FE0,0010)", "too few 8-bit samples"));
            }
            pixel.value[..n]
                .iter()
                .map(|&b| if signed { f64::from(b as i8) } else { f64::from(b) })
                .collect()
        }
        (other, _) => {
            return Err(Error::UnsupportedEncoding {
                path: path.to_path_buf(),
                detail: format!("BitsAllocated {other}; only 8 and 16 are supported"),
            })
        }
    };

    let modality = match config.modality {
        Some(m) => m,
        None => match set.text(MODALITY).as_deref() {
            Some("CT") => Modality::Ct,
            Some("MR") => infer_mr_modality(set.text(SERIES_DESCRIPTION).as_deref()),
            Some(other) => {
                return Err(Error::malformed(path, "Modality (0008,0060)", format!("unsupported modality {other:?}")))
            }
            None => return Err(Error::malformed(path, "Modality (0008,0060)", "missing mandatory tag")),
        },
    };

    let calibration = if modality.is_ct() {
        let slope = set
            .number(RESCALE_SLOPE, "RescaleSlope (0028,1053)", path)?
            .ok_or_else(|| Error::malformed(path, "RescaleSlope (0028,1053)", "missing mandatory tag for CT"))?;
        let intercept = set
            .number(RESCALE_INTERCEPT, "RescaleIntercept (0028,1052)", path)?
            .ok_or_else(|| Error::malformed(path, "RescaleIntercept (0028,1052)", "missing mandatory tag for CT"))?;
        let cal = Calibration::Linear { slope, intercept };
        cal.validate()?;
        cal
    } else {
        Calibration::IDENTITY
    };

    let values: Vec<f32> = raw.iter().map(|&r| calibration.apply(r) as f32).collect();
    let values = Array2::from_shape_vec((rows, cols), values).expect("length checked above");

    let spacing = match set.numbers(PIXEL_SPACING, "PixelSpacing (0028,0030)", path)? {
        Some(v) if v.len() >= 2 => (v[0], v[1]),
        Some(v) if v.len() == 1 => (v[0], v[0]),
        _ => (1.0, 1.0),
    };
    let contrast = config.contrast_enhanced.unwrap_or_else(|| {
        set.text(CONTRAST_BOLUS_AGENT)
            .map(|s| !s.is_empty())
            .unwrap_or(false)
    });
    let slice_index = match config.slice_index {
        Some(i) => i,
        None => set
            .number(INSTANCE_NUMBER, "InstanceNumber (0020,0013)", path)?
            .map(|n| (n.max(1.0) - 1.0) as u32)
            .unwrap_or(0),
    };

    let mut slice = SliceImage {
        volume_id: config
            .volume_id
            .clone()
            .unwrap_or_else(|| default_volume_id(path)),
        slice_index,
        pixel_spacing: spacing,
        values,
        modality,
        contrast_enhanced: contrast,
        calibration: Some(calibration),
    };
    if modality.is_ct() {
        slice.clamp_to(config.hu_range);
    }
    Ok(slice)
}

fn default_volume_id(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(path).to_string_lossy().into_owned())
}

/// Byte-level builder for explicit VR little endian files. Used by tests and fixtures.
#[doc(hidden)]
pub mod writer {
    pub struct DicomBuilder {
        meta: Vec<u8>,
        body: Vec<u8>,
    }

    fn push_element(buf: &mut Vec<u8>, tag: (u16, u16), vr: &[u8; 2], value: &[u8]) {
        buf.extend_from_slice(&tag.0.to_le_bytes());
        buf.extend_from_slice(&tag.1.to_le_bytes());
        buf.extend_from_slice(vr);
        if super::has_long_length(*vr) {
            buf.extend_from_slice(&[0, 0]);
            buf.extend_from_slice(&(value.len() as u32).to_le_bytes());
        } else {
            buf.extend_from_slice(&(value.len() as u16).to_le_bytes());
        }
        buf.extend_from_slice(value);
    }

    fn pad(mut v: Vec<u8>, fill: u8) -> Vec<u8> {
        if v.len() % 2 == 1 {
            v.push(fill);
        }
        v
    }

    impl DicomBuilder {
        pub fn new(transfer_syntax: &str) -> Self {
            let mut meta = Vec::new();
            push_element(&mut meta, (0x0002, 0x0010), b"UI", &pad(transfer_syntax.as_bytes().to_vec(), 0));
            DicomBuilder {
                meta,
                body: Vec::new(),
            }
        }

        pub fn text(mut self, tag: (u16, u16), vr: &[u8; 2], value: &str) -> Self {
            push_element(&mut self.body, tag, vr, &pad(value.as_bytes().to_vec(), b' '));
            self
        }

        pub fn us(mut self, tag: (u16, u16), value: u16) -> Self {
            push_element(&mut self.body, tag, b"US", &value.to_le_bytes());
            self
        }

        pub fn raw(mut self, bytes: &[u8]) -> Self {
            self.body.extend_from_slice(bytes);
            self
        }

        pub fn pixels_u16(mut self, samples: &[u16]) -> Self {
            let bytes: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
            push_element(&mut self.body, (0x7FE0, 0x0010), b"OW", &bytes);
            self
        }

        pub fn build(self) -> Vec<u8> {
            let mut out = vec![0u8; 128];
            out.extend_from_slice(b"DICM");
            out.extend_from_slice(&self.meta);
            out.extend_from_slice(&self.body);
            out
        }
    }
}
