//! Image-macro rendering: uppercase white text with a black outline, top
//! block anchored top-center and bottom block anchored bottom-center.

use std::io::Cursor;
use std::sync::LazyLock;

use ab_glyph::{point, Font, FontRef, Glyph, PxScale, ScaleFont};
use image::codecs::png::PngEncoder;
use image::{DynamicImage, ImageEncoder, RgbaImage};
use thiserror::Error;

use crate::captiongen::GeneratedCaption;

static FONT_BYTES: &[u8] = include_bytes!("../assets/DejaVuSans-Bold.ttf");
static FONT: LazyLock<FontRef<'static>> =
    LazyLock::new(|| FontRef::try_from_slice(FONT_BYTES).expect("bundled font parses"));

pub const MIN_SIDE: u32 = 64;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image is {width}x{height}; both sides must be at least {MIN_SIDE}")]
    TooSmall { width: u32, height: u32 },
    #[error("caption top part is empty")]
    EmptyTop,
    #[error("caption does not fit even at {min_px}px")]
    DoesNotFit { min_px: u32 },
    #[error("png encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSpec {
    /// Starting font size as a fraction of image height.
    pub font_fraction: f32,
    /// Smallest font size tried before giving up.
    pub min_font_fraction: f32,
    /// Outline width as a fraction of the font size.
    pub outline_fraction: f32,
    /// Horizontal margin on each side as a fraction of width.
    pub margin_fraction: f32,
    /// Vertical margin above the top block and below the bottom block.
    pub vertical_margin_fraction: f32,
    pub fill: [u8; 3],
    pub outline: [u8; 3],
    pub uppercase: bool,
}

impl Default for RenderSpec {
    fn default() -> Self {
        RenderSpec {
            font_fraction: 0.10,
            min_font_fraction: 0.05,
            outline_fraction: 0.05,
            margin_fraction: 0.04,
            vertical_margin_fraction: 0.02,
            fill: [255, 255, 255],
            outline: [0, 0, 0],
            uppercase: true,
        }
    }
}

/// Axis-aligned pixel rectangle, `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f32,
    pub y0: f32,
    pub x1: f32,
    pub y1: f32,
}

impl Rect {
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextBlock {
    pub lines: Vec<String>,
    /// Outer box including the outline.
    pub rect: Rect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub font_px: u32,
    pub outline_px: u32,
    pub top: TextBlock,
    pub bottom: Option<TextBlock>,
}

fn scaled(px: f32) -> ab_glyph::PxScaleFont<&'static FontRef<'static>> {
    FONT.as_scaled(PxScale::from(px))
}

fn line_width(text: &str, px: f32) -> f32 {
    let font = scaled(px);
    let mut width = 0.0;
    let mut prev = None;
    for ch in text.chars() {
        let id = font.glyph_id(ch);
        if let Some(p) = prev {
            width += font.kern(p, id);
        }
        width += font.h_advance(id);
        prev = Some(id);
    }
    width
}

/// Greedy word wrap at `px` into lines no wider than `max_width`.
///
/// A single word wider than `max_width` still gets a line of its own.
pub fn wrap_text(text: &str, px: f32, max_width: f32) -> Vec<String> {
    let mut lines: Vec<String> = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if current.is_empty() {
            current.push_str(word);
            continue;
        }
        let candidate = format!("{current} {word}");
        if line_width(&candidate, px) <= max_width {
            current = candidate;
        } else {
            lines.push(std::mem::replace(&mut current, word.to_string()));
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

fn prepare(text: &str, spec: &RenderSpec) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if spec.uppercase {
        joined.to_uppercase()
    } else {
        joined
    }
}

/// Largest font size at which both parts fit, shrinking one pixel at a time.
pub fn layout(
    width: u32,
    height: u32,
    top: &str,
    bottom: &str,
    spec: &RenderSpec,
) -> Result<Layout, RenderError> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(RenderError::TooSmall { width, height });
    }
    let top = prepare(top, spec);
    let bottom = prepare(bottom, spec);
    if top.is_empty() {
        return Err(RenderError::EmptyTop);
    }
    let (w, h) = (width as f32, height as f32);
    let margin = (w * spec.margin_fraction).ceil();
    let vmargin = (h * spec.vertical_margin_fraction).ceil();
    let start_px = (h * spec.font_fraction).round().max(1.0) as u32;
    let min_px = ((h * spec.min_font_fraction).ceil() as u32).clamp(1, start_px);

    for px in (min_px..=start_px).rev() {
        let outline = ((px as f32 * spec.outline_fraction).round() as u32).max(1);
        let o = outline as f32;
        let font = scaled(px as f32);
        let line_h = font.height().ceil();
        let avail = w - 2.0 * margin - 2.0 * o;
        if avail <= 0.0 {
            continue;
        }
        let block = |text: &str, y0: Option<f32>| -> Option<TextBlock> {
            let lines = wrap_text(text, px as f32, avail);
            let widest = lines
                .iter()
                .map(|l| line_width(l, px as f32))
                .fold(0.0f32, f32::max);
            if widest > avail {
                return None;
            }
            let bh = lines.len() as f32 * line_h + 2.0 * o;
            let y0 = y0.unwrap_or(h - vmargin - bh);
            let bw = widest + 2.0 * o;
            let x0 = ((w - bw) / 2.0).floor();
            Some(TextBlock {
                lines,
                rect: Rect {
                    x0,
                    y0,
                    x1: x0 + bw,
                    y1: y0 + bh,
                },
            })
        };
        let Some(top_block) = block(&top, Some(vmargin)) else { continue };
        if top_block.rect.y1 > h - vmargin {
            continue;
        }
        let bottom_block = if bottom.is_empty() {
            None
        } else {
            match block(&bottom, None) {
                Some(b) if b.rect.y0 >= top_block.rect.y1 => Some(b),
                _ => continue,
            }
        };
        return Ok(Layout {
            font_px: px,
            outline_px: outline,
            top: top_block,
            bottom: bottom_block,
        });
    }
    Err(RenderError::DoesNotFit { min_px })
}

/// Coverage in [0, 1] of the laid-out text, one value per pixel.
fn text_coverage(layout: &Layout, width: u32, height: u32) -> Vec<f32> {
    let mut cov = vec![0f32; (width * height) as usize];
    let px = layout.font_px as f32;
    let font = scaled(px);
    let line_h = font.height().ceil();
    let o = layout.outline_px as f32;
    let blocks = std::iter::once(&layout.top).chain(layout.bottom.as_ref());
    for block in blocks {
        for (i, line) in block.lines.iter().enumerate() {
            let lw = line_width(line, px);
            let mut x = ((width as f32 - lw) / 2.0).floor();
            let baseline = block.rect.y0 + o + i as f32 * line_h + font.ascent();
            let mut prev = None;
            for ch in line.chars() {
                let id = font.glyph_id(ch);
                if let Some(p) = prev {
                    x += font.kern(p, id);
                }
                let glyph: Glyph = id.with_scale_and_position(PxScale::from(px), point(x, baseline));
                x += font.h_advance(id);
                prev = Some(id);
                let Some(outlined) = FONT.outline_glyph(glyph) else { continue };
                let bounds = outlined.px_bounds();
                outlined.draw(|gx, gy, c| {
                    let xx = bounds.min.x as i64 + i64::from(gx);
                    let yy = bounds.min.y as i64 + i64::from(gy);
                    if xx >= 0 && yy >= 0 && (xx as u32) < width && (yy as u32) < height {
                        let slot = &mut cov[yy as usize * width as usize + xx as usize];
                        *slot = slot.max(c.clamp(0.0, 1.0));
                    }
                });
            }
        }
    }
    cov
}

/// Max filter over a disk of radius `r`.
fn dilate(cov: &[f32], width: u32, height: u32, r: u32) -> Vec<f32> {
    let (w, h, r) = (width as i64, height as i64, r as i64);
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
        .collect();
    // rows touched by text, widened by r
    let rows_with_ink: Vec<bool> = (0..h)
        .map(|y| cov[(y * w) as usize..((y + 1) * w) as usize].iter().any(|&c| c > 0.0))
        .collect();
    let mut out = vec![0f32; cov.len()];
    for y in 0..h {
        let near = (y - r).max(0)..=(y + r).min(h - 1);
        if !near.into_iter().any(|yy| rows_with_ink[yy as usize]) {
            continue;
        }
        for x in 0..w {
            let mut m = 0f32;
            for &(dx, dy) in &offsets {
                let (xx, yy) = (x + dx, y + dy);
                if xx >= 0 && yy >= 0 && xx < w && yy < h {
                    m = m.max(cov[(yy * w + xx) as usize]);
                }
            }
            out[(y * w + x) as usize] = m;
        }
    }
    out
}

fn blend(dst: u8, src: u8, alpha: f32) -> u8 {
    (f32::from(dst) * (1.0 - alpha) + f32::from(src) * alpha).round() as u8
}

/// Draws the caption onto a copy of `base`.
pub fn render_image(
    base: &DynamicImage,
    top: &str,
    bottom: &str,
    spec: &RenderSpec,
) -> Result<RgbaImage, RenderError> {
    let (width, height) = (base.width(), base.height());
    let layout = layout(width, height, top, bottom, spec)?;
    let fill = text_coverage(&layout, width, height);
    let outline = dilate(&fill, width, height, layout.outline_px);
    let mut img = base.to_rgba8();
    for (i, px) in img.pixels_mut().enumerate() {
        let (a_o, a_f) = (outline[i], fill[i]);
        if a_o <= 0.0 && a_f <= 0.0 {
            continue;
        }
        for c in 0..3 {
            let v = blend(px.0[c], spec.outline[c], a_o);
            px.0[c] = blend(v, spec.fill[c], a_f);
        }
        px.0[3] = px.0[3].max((a_o * 255.0).round() as u8);
    }
    Ok(img)
}

/// Renders and encodes as PNG. Output pixel dimensions equal the input's.
pub fn render_meme(
    base: &DynamicImage,
    top: &str,
    bottom: &str,
    spec: &RenderSpec,
) -> Result<Vec<u8>, RenderError> {
    let img = render_image(base, top, bottom, spec)?;
    let mut out = Vec::new();
    PngEncoder::new(Cursor::new(&mut out))
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgba8)
        .map_err(|e| RenderError::Encode(e.to_string()))?;
    Ok(out)
}

pub fn render_caption(
    base: &DynamicImage,
    caption: &GeneratedCaption,
    spec: &RenderSpec,
) -> Result<Vec<u8>, RenderError> {
    render_meme(base, &caption.top, &caption.bottom, spec)
}
