//! Color rendering of label maps.

use std::path::Path;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::grid::LabelMap;
use crate::io::write_bytes;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Palette {
    colors: Vec<Option<[u8; 3]>>,
}

impl Palette {
    /// The usual bit-interleaved segmentation colormap, `count` entries.
    pub fn standard(count: usize) -> Self {
        let colors = (0..count)
            .map(|id| {
                let mut c = [0u8; 3];
                let mut v = id;
                for shift in (0..8).rev() {
                    for (ch, slot) in c.iter_mut().enumerate() {
                        *slot |= (((v >> ch) & 1) as u8) << shift;
                    }
                    v >>= 3;
                }
                Some(c)
            })
            .collect();
        Self { colors }
    }

    pub fn set(&mut self, label: usize, rgb: [u8; 3]) {
        if label >= self.colors.len() {
            self.colors.resize(label + 1, None);
        }
        self.colors[label] = Some(rgb);
    }

    pub fn get(&self, label: usize) -> Option<[u8; 3]> {
        self.colors.get(label).copied().flatten()
    }

    /// Lines of `id r g b`; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                context: "palette".into(),
                line: n + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, r, g, b] = fields.as_slice() else {
                return Err(err(format!("expected `id r g b`, got {line:?}")));
            };
            let id: usize = id.parse().map_err(|_| err(format!("bad label id {id:?}")))?;
            let ch = |s: &str| s.parse::<u8>().map_err(|_| err(format!("bad channel value {s:?}")));
            if p.get(id).is_some() {
                return Err(err(format!("label {id} listed twice")));
            }
            p.set(id, [ch(r)?, ch(g)?, ch(b)?]);
        }
        Ok(p)
    }
}

pub fn render(labels: &LabelMap, palette: &Palette) -> Result<RgbImage> {
    let mut raw = Vec::with_capacity(labels.len() * 3);
    for &l in labels.labels() {
        raw.extend_from_slice(&palette.get(l).ok_or(Error::MissingPalette(l))?);
    }
    Ok(RgbImage::from_raw(labels.width() as u32, labels.height() as u32, raw).expect("buffer matches dimensions"))
}

pub fn save_visualization(labels: &LabelMap, palette: &Palette, path: &Path) -> Result<()> {
    let img = render(labels, palette)?;
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)?;
    write_bytes(path, &buf.into_inner())
}
