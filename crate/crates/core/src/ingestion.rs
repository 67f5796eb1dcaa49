//! Input discovery and page rasterization.
//!
//! Every input file is one student's script. PDFs are rendered page by page at
//! a fixed DPI; raster images pass through as a single page.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use hayro::hayro_interpret::util::TransformExt;
use hayro::hayro_interpret::InterpreterSettings;
use hayro::hayro_syntax::{LoadPdfError, Pdf};
use hayro::kurbo::Affine;
use hayro::vello_cpu::color::palette::css::WHITE;
use hayro::vello_cpu::{Pixmap, RasterizerSettings, RenderContext, Resources, TargetInit};
use hayro::{render_into, RenderCache, RenderSettings};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rasterization resolution used when nothing else is configured.
pub const DEFAULT_DPI: u32 = 300;

const POINTS_PER_INCH: f64 = 72.0;
const PAGE_MARKER: &str = "_page_";
const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "tif", "tiff"];
pub const GROUND_TRUTH_SUFFIX: &str = ".gt.txt";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input directory {path} is not readable: {reason}")]
    InputDir { path: PathBuf, reason: String },
    #[error("invalid student id {id:?} derived from {path}: {reason}")]
    InvalidStudentId {
        id: String,
        path: PathBuf,
        reason: &'static str,
    },
    #[error("{path}: student id {id:?} already used by another input")]
    DuplicateStudent { id: String, path: PathBuf },
    #[error("{path}: failed to read: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("{path}: corrupt document: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: document is encrypted")]
    Encrypted { path: PathBuf },
    #[error("{path}: document has no pages")]
    NoPages { path: PathBuf },
    #[error("{path}: page {page_index} has unusable size {width_px}x{height_px} px")]
    PageSize {
        path: PathBuf,
        page_index: u32,
        width_px: u64,
        height_px: u64,
    },
    #[error("page indices start at 1")]
    ZeroPageIndex,
    #[error("dpi must be positive")]
    ZeroDpi,
    #[error("page buffer has {actual} bytes, expected {expected}")]
    BufferExtent { expected: usize, actual: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Pdf,
    Image,
}

impl SourceKind {
    /// Classifies a path by extension, ignoring case.
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        if ext == "pdf" {
            Some(SourceKind::Pdf)
        } else if IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            Some(SourceKind::Image)
        } else {
            None
        }
    }
}

/// One student's input document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DocumentSource {
    pub path: PathBuf,
    pub student_id: String,
    pub kind: SourceKind,
}

impl DocumentSource {
    /// Builds a source from a path, deriving the student id from the file stem.
    ///
    /// Returns `Ok(None)` for unsupported extensions.
    pub fn from_path(path: impl Into<PathBuf>) -> Result<Option<Self>, IngestError> {
        let path = path.into();
        let Some(kind) = SourceKind::from_path(&path) else {
            return Ok(None);
        };
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        validate_student_id(&id).map_err(|reason| IngestError::InvalidStudentId {
            id: id.clone(),
            path: path.clone(),
            reason,
        })?;
        Ok(Some(DocumentSource {
            path,
            student_id: id,
            kind,
        }))
    }
}

fn validate_student_id(id: &str) -> Result<(), &'static str> {
    if id.is_empty() {
        Err("empty")
    } else if id.contains('/') || id.contains('\\') {
        Err("contains a path separator")
    } else if id.contains(PAGE_MARKER) {
        Err("contains \"_page_\", which would make page labels ambiguous")
    } else {
        Ok(())
    }
}

/// Result of scanning an input directory.
#[derive(Debug, Default)]
pub struct Discovery {
    /// Accepted sources, sorted by student id.
    pub sources: Vec<DocumentSource>,
    /// Non-fatal notes, e.g. skipped files with unsupported extensions.
    pub warnings: Vec<String>,
    /// Files that looked like inputs but cannot be processed.
    pub rejected: Vec<IngestError>,
}

/// Lists processable documents in `input_dir`.
pub fn discover_inputs(input_dir: &Path) -> Result<Discovery, IngestError> {
    let dir_err = |e: std::io::Error| IngestError::InputDir {
        path: input_dir.to_path_buf(),
        reason: e.to_string(),
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(input_dir).map_err(dir_err)? {
        let entry = entry.map_err(dir_err)?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();

    let mut discovery = Discovery::default();
    for path in paths {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.starts_with('.') || name.ends_with(GROUND_TRUTH_SUFFIX) {
            continue;
        }
        match DocumentSource::from_path(&path) {
            Ok(Some(src)) => discovery.sources.push(src),
            Ok(None) => discovery
                .warnings
                .push(format!("skipping {}: unsupported file type", path.display())),
            Err(e) => discovery.rejected.push(e),
        }
    }

    discovery
        .sources
        .sort_by(|a, b| a.student_id.cmp(&b.student_id).then(a.path.cmp(&b.path)));
    let mut unique: Vec<DocumentSource> = Vec::with_capacity(discovery.sources.len());
    for src in discovery.sources.drain(..) {
        if unique.last().is_some_and(|prev| prev.student_id == src.student_id) {
            discovery.rejected.push(IngestError::DuplicateStudent {
                id: src.student_id,
                path: src.path,
            });
        } else {
            unique.push(src);
        }
    }
    discovery.sources = unique;
    Ok(discovery)
}

/// A rasterized page. `channels` is 1 (gray) or 3 (RGB) for anything this
/// module produces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageImage {
    pub student_id: String,
    pub page_index: u32,
    pub dpi: u32,
    pub width_px: u32,
    pub height_px: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

impl PageImage {
    pub fn new(
        student_id: impl Into<String>,
        page_index: u32,
        dpi: u32,
        width_px: u32,
        height_px: u32,
        channels: u8,
        pixels: Vec<u8>,
    ) -> Result<Self, IngestError> {
        if dpi == 0 {
            return Err(IngestError::ZeroDpi);
        }
        if page_index == 0 {
            return Err(IngestError::ZeroPageIndex);
        }
        let expected = width_px as usize * height_px as usize * channels as usize;
        if expected == 0 || pixels.len() != expected {
            return Err(IngestError::BufferExtent {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(PageImage {
            student_id: student_id.into(),
            page_index,
            dpi,
            width_px,
            height_px,
            channels,
            pixels,
        })
    }

    pub fn label(&self) -> String {
        page_label(&self.student_id, self.page_index)
    }

    /// Encodes the page as PNG (gray or RGB).
    pub fn to_png(&self) -> Result<Vec<u8>, image::ImageError> {
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            n => {
                return Err(image::ImageError::Unsupported(
                    image::error::UnsupportedError::from_format_and_kind(
                        image::error::ImageFormatHint::Name("raw".into()),
                        image::error::UnsupportedErrorKind::GenericFeature(format!(
                            "{n} channels"
                        )),
                    ),
                ))
            }
        };
        encode_png(&self.pixels, self.width_px, self.height_px, color)
    }
}

pub(crate) fn encode_png(
    pixels: &[u8],
    width: u32,
    height: u32,
    color: image::ExtendedColorType,
) -> Result<Vec<u8>, image::ImageError> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out).write_image(pixels, width, height, color)?;
    Ok(out)
}

/// `"<student_id>_page_<page_index>"`.
pub fn page_label(student_id: &str, page_index: u32) -> String {
    format!("{student_id}{PAGE_MARKER}{page_index}")
}

/// Inverse of [`page_label`].
pub fn parse_page_label(label: &str) -> Option<(&str, u32)> {
    let (student, index) = label.rsplit_once(PAGE_MARKER)?;
    if student.is_empty() || student.contains(PAGE_MARKER) {
        return None;
    }
    if index.is_empty() || !index.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: u32 = index.parse().ok()?;
    (index >= 1).then_some((student, index))
}

/// Pixel extent of a page side of `points` PostScript points at `dpi`,
/// rounded half-up.
pub fn pixel_extent(points: f64, dpi: u32) -> u64 {
    let px = points / POINTS_PER_INCH * f64::from(dpi);
    (px + 0.5).floor().max(0.0) as u64
}

/// Renders every page of `src` at `dpi`.
pub fn rasterize_document(src: &DocumentSource, dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    if dpi == 0 {
        return Err(IngestError::ZeroDpi);
    }
    let bytes = fs::read(&src.path).map_err(|e| IngestError::Read {
        path: src.path.clone(),
        reason: e.to_string(),
    })?;
    match src.kind {
        SourceKind::Image => decode_image(src, &bytes, dpi).map(|p| vec![p]),
        SourceKind::Pdf => {
            // The renderer is third-party code fed untrusted bytes; a panic in
            // one document must not take down the batch.
            panic::catch_unwind(AssertUnwindSafe(|| render_pdf(src, bytes, dpi))).unwrap_or_else(
                |payload| {
                    let reason = payload
                        .downcast_ref::<&str>()
                        .map(|s| s.to_string())
                        .or_else(|| payload.downcast_ref::<String>().cloned())
                        .unwrap_or_else(|| "renderer panicked".to_string());
                    Err(IngestError::Corrupt {
                        path: src.path.clone(),
                        reason,
                    })
                },
            )
        }
    }
}

fn decode_image(src: &DocumentSource, bytes: &[u8], dpi: u32) -> Result<PageImage, IngestError> {
    let img = image::load_from_memory(bytes).map_err(|e| IngestError::Corrupt {
        path: src.path.clone(),
        reason: e.to_string(),
    })?;
    let (width, height) = (img.width(), img.height());
    let (channels, pixels) = if img.color().has_color() {
        (3, img.into_rgb8().into_raw())
    } else {
        (1, img.into_luma8().into_raw())
    };
    PageImage::new(&src.student_id, 1, dpi, width, height, channels, pixels).map_err(|_| {
        IngestError::PageSize {
            path: src.path.clone(),
            page_index: 1,
            width_px: width as u64,
            height_px: height as u64,
        }
    })
}

fn render_pdf(src: &DocumentSource, bytes: Vec<u8>, dpi: u32) -> Result<Vec<PageImage>, IngestError> {
    let pdf = Pdf::new(bytes).map_err(|e| match e {
        LoadPdfError::Decryption(_) => IngestError::Encrypted {
            path: src.path.clone(),
        },
        LoadPdfError::Invalid => IngestError::Corrupt {
            path: src.path.clone(),
            reason: "unparseable PDF".to_string(),
        },
    })?;
    let pages = pdf.pages();
    if pages.is_empty() {
        return Err(IngestError::NoPages {
            path: src.path.clone(),
        });
    }

    let cache = RenderCache::new();
    let interpreter = InterpreterSettings::default();
    let settings = RenderSettings::default();
    let mut out = Vec::with_capacity(pages.len());
    for (i, page) in pages.iter().enumerate() {
        let page_index = i as u32 + 1;
        let (w_pt, h_pt) = page.render_dimensions();
        let (w_px, h_px) = (pixel_extent(w_pt as f64, dpi), pixel_extent(h_pt as f64, dpi));
        if w_px == 0 || h_px == 0 || w_px > u16::MAX as u64 || h_px > u16::MAX as u64 {
            return Err(IngestError::PageSize {
                path: src.path.clone(),
                page_index,
                width_px: w_px,
                height_px: h_px,
            });
        }

        let mut ctx = RenderContext::new(w_px as u16, h_px as u16);
        let transform = Affine::scale_non_uniform(w_px as f64 / w_pt as f64, h_px as f64 / h_pt as f64)
            * page.initial_transform(true).to_kurbo();
        render_into(page, &cache, &interpreter, &settings, &mut ctx, transform);
        ctx.flush();
        let mut pixmap = Pixmap::new(ctx.width(), ctx.height());
        ctx.render_with(
            &mut pixmap,
            &mut Resources::default(),
            RasterizerSettings {
                target_init: TargetInit::Clear(WHITE),
                ..Default::default()
            },
        );

        // Opaque background, so premultiplied RGBA is plain RGBA.
        let rgb: Vec<u8> = pixmap
            .data_as_u8_slice()
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect();
        out.push(PageImage::new(
            &src.student_id,
            page_index,
            dpi,
            w_px as u32,
            h_px as u32,
            3,
            rgb,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(page_label("student0", 2), "student0_page_2");
        assert_eq!(page_label("student3", 1), "student3_page_1");
        assert_eq!(page_label("s", 10), "s_page_10");
        assert_eq!(parse_page_label("student0_page_2"), Some(("student0", 2)));
        assert_eq!(parse_page_label("a_b_page_12"), Some(("a_b", 12)));
        assert_eq!(parse_page_label("student0"), None);
        assert_eq!(parse_page_label("x_page_0"), None);
        assert_eq!(parse_page_label("x_page_+1"), None);
    }

    #[test]
    fn extension_case_variants() {
        let stems = ["a.png", "a.PNG", "a.Png", "a.pNg", "a.JPEG", "a.TiFf"];
        for name in stems {
            let src = DocumentSource::from_path(name).unwrap().unwrap();
            assert_eq!(src.kind, SourceKind::Image, "{name}");
            assert_eq!(src.student_id, "a");
        }
        for name in ["x.pdf", "x.PDF", "x.Pdf"] {
            assert_eq!(
                DocumentSource::from_path(name).unwrap().unwrap().kind,
                SourceKind::Pdf
            );
        }
        assert!(DocumentSource::from_path("notes.docx").unwrap().is_none());
        assert!(DocumentSource::from_path("noext").unwrap().is_none());
    }

    #[test]
    fn rejects_ambiguous_student_ids() {
        assert!(matches!(
            DocumentSource::from_path("bad_page_1.png"),
            Err(IngestError::InvalidStudentId { .. })
        ));
        assert!(matches!(
            DocumentSource::from_path(".png"),
            Err(IngestError::InvalidStudentId { .. }) | Ok(None)
        ));
    }

    #[test]
    fn a4_pixel_extent() {
        // 210 x 297 mm in points.
        let w = 210.0 / 25.4 * 72.0;
        let h = 297.0 / 25.4 * 72.0;
        assert_eq!(pixel_extent(w, 300), 2480);
        assert_eq!(pixel_extent(h, 300), 3508);
        assert_eq!(pixel_extent(72.0, 300), 300);
        // half rounds up
        assert_eq!(pixel_extent(4.5, 72), 5);
        assert_eq!(pixel_extent(4.49, 72), 4);
    }

    #[test]
    fn page_image_extent_checked() {
        assert!(PageImage::new("s", 1, 300, 2, 2, 3, vec![0; 12]).is_ok());
        assert!(matches!(
            PageImage::new("s", 1, 300, 2, 2, 3, vec![0; 11]),
            Err(IngestError::BufferExtent { .. })
        ));
        assert!(matches!(
            PageImage::new("s", 1, 0, 2, 2, 1, vec![0; 4]),
            Err(IngestError::ZeroDpi)
        ));
    }
}
