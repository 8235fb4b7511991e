//! Template-matching tokenizer and grid renderer.
//!
//! Frames are cut into a lattice of atlas-sized cells. After subtracting the
//! background (clamped at zero) each cell is assigned the sprite whose bitmap
//! is closest in L1 distance; ties go to the lowest id. Rendering composites
//! sprite bitmaps additively onto the background, saturating at 255.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SpriteId};

#[derive(Clone, Debug, PartialEq)]
pub struct SpriteAtlas {
    cell_width: u32,
    cell_height: u32,
    names: Vec<String>,
    sprites: Vec<RgbImage>,
    background: Option<RgbImage>,
    empty_id: SpriteId,
    exogenous_ids: Vec<SpriteId>,
}

impl SpriteAtlas {
    pub fn new(
        names: Vec<String>,
        sprites: Vec<RgbImage>,
        background: Option<RgbImage>,
        empty_id: SpriteId,
        exogenous_ids: Vec<SpriteId>,
    ) -> Result<Self> {
        if sprites.is_empty() || names.len() != sprites.len() {
            return Err(Error::InvalidAtlas(format!(
                "{} names for {} sprite bitmaps",
                names.len(),
                sprites.len()
            )));
        }
        let (cw, ch) = sprites[0].dimensions();
        if cw == 0 || ch == 0 {
            return Err(Error::InvalidAtlas("sprite bitmaps are empty".into()));
        }
        if let Some((i, s)) = sprites.iter().enumerate().find(|(_, s)| s.dimensions() != (cw, ch)) {
            return Err(Error::InvalidAtlas(format!(
                "sprite `{}` is {}x{}, expected {cw}x{ch}",
                names[i],
                s.width(),
                s.height()
            )));
        }
        if let Some(bg) = &background {
            if bg.width() % cw != 0 || bg.height() % ch != 0 {
                return Err(Error::InvalidAtlas(format!(
                    "background {}x{} is not a whole number of {cw}x{ch} cells",
                    bg.width(),
                    bg.height()
                )));
            }
        }
        if empty_id.index() >= names.len() || exogenous_ids.iter().any(|s| s.index() >= names.len()) {
            return Err(Error::InvalidAtlas("empty or exogenous id out of range".into()));
        }
        Ok(SpriteAtlas {
            cell_width: cw,
            cell_height: ch,
            names,
            sprites,
            background,
            empty_id,
            exogenous_ids,
        })
    }

    /// Deterministic atlas with pairwise-distinct sprites: the empty sprite is
    /// black, every other sprite is a solid colour with a dark one-pixel rim.
    /// The optional background stays dark enough that compositing never
    /// saturates.
    pub fn synthetic(
        names: Vec<String>,
        empty_id: SpriteId,
        exogenous_ids: Vec<SpriteId>,
        cell: u32,
        background_cells: Option<(u32, u32)>,
    ) -> Result<Self> {
        let sprites = (0..names.len())
            .map(|i| {
                if i == empty_id.index() {
                    return RgbImage::new(cell, cell);
                }
                let k = i as u32;
                let color = Rgb([
                    (40 + 67 * k % 150) as u8,
                    (40 + 101 * k % 150) as u8,
                    (40 + (29 * k + 75) % 150) as u8,
                ]);
                RgbImage::from_fn(cell, cell, |x, y| {
                    let rim = x == 0 || y == 0 || x + 1 == cell || y + 1 == cell;
                    if rim && cell > 2 {
                        Rgb([0, 0, 0])
                    } else {
                        color
                    }
                })
            })
            .collect();
        let background = background_cells.map(|(w, h)| {
            RgbImage::from_fn(w * cell, h * cell, |x, y| {
                Rgb([(x * 7 % 50) as u8, (y * 5 % 50) as u8, ((x + y) % 40) as u8])
            })
        });
        SpriteAtlas::new(names, sprites, background, empty_id, exogenous_ids)
    }

    pub fn cell_width(&self) -> u32 {
        self.cell_width
    }

    pub fn cell_height(&self) -> u32 {
        self.cell_height
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sprite(&self, s: SpriteId) -> Option<&RgbImage> {
        self.sprites.get(s.index())
    }

    pub fn background(&self) -> Option<&RgbImage> {
        self.background.as_ref()
    }

    pub fn empty_id(&self) -> SpriteId {
        self.empty_id
    }

    pub fn exogenous_ids(&self) -> &[SpriteId] {
        &self.exogenous_ids
    }

    /// Reads `atlas.json` and the PNG files it names from `dir`.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta_path = dir.join(ATLAS_FILE);
        let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: AtlasFile = serde_json::from_str(&text)
            .map_err(|e| Error::json(meta_path.display().to_string(), e))?;

        let names: Vec<String> = meta.sprites.iter().map(|s| s.name.clone()).collect();
        let lookup = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .map(|i| SpriteId(i as u16))
                .ok_or_else(|| Error::InvalidAtlas(format!("unknown sprite `{name}` in {ATLAS_FILE}")))
        };
        let empty_id = lookup(&meta.empty)?;
        let exogenous_ids = meta.exogenous.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>()?;

        let sprites = meta
            .sprites
            .iter()
            .map(|s| read_png(&dir.join(&s.file)))
            .collect::<Result<Vec<_>>>()?;
        let background = meta.background.as_ref().map(|f| read_png(&dir.join(f))).transpose()?;
        let atlas = SpriteAtlas::new(names, sprites, background, empty_id, exogenous_ids)?;
        if (atlas.cell_width, atlas.cell_height) != (meta.cell_width, meta.cell_height) {
            return Err(Error::InvalidAtlas(format!(
                "{ATLAS_FILE} declares {}x{} cells but sprites are {}x{}",
                meta.cell_width, meta.cell_height, atlas.cell_width, atlas.cell_height
            )));
        }
        Ok(atlas)
    }

    /// Writes `atlas.json` plus one PNG per sprite (and the background).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.names.len());
        for (i, (name, img)) in self.names.iter().zip(&self.sprites).enumerate() {
            let file = format!("sprite_{i:03}.png");
            write_png(&dir.join(&file), img)?;
            entries.push(AtlasSprite {
                name: name.clone(),
                file,
            });
        }
        let background = match &self.background {
            Some(bg) => {
                write_png(&dir.join("background.png"), bg)?;
                Some("background.png".to_string())
            }
            None => None,
        };
        let meta = AtlasFile {
            cell_width: self.cell_width,
            cell_height: self.cell_height,
            sprites: entries,
            background,
            empty: self.names[self.empty_id.index()].clone(),
            exogenous: self
                .exogenous_ids
                .iter()
                .map(|s| self.names[s.index()].clone())
                .collect(),
        };
        let path = dir.join(ATLAS_FILE);
        let text = serde_json::to_string_pretty(&meta).expect("atlas metadata serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

pub const ATLAS_FILE: &str = "atlas.json";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtlasFile {
    cell_width: u32,
    cell_height: u32,
    /// In id order.
    sprites: Vec<AtlasSprite>,
    #[serde(default)]
    background: Option<String>,
    empty: String,
    #[serde(default)]
    exogenous: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtlasSprite {
    name: String,
    file: String,
}

pub fn read_png(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(img.to_rgb8())
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Assigns each lattice cell of `img` its closest atlas sprite.
pub fn tokenize_frame(img: &RgbImage, atlas: &SpriteAtlas) -> Result<Grid> {
    let (cw, ch) = (atlas.cell_width, atlas.cell_height);
    if !img.width().is_multiple_of(cw) || !img.height().is_multiple_of(ch) || img.width() == 0 || img.height() == 0 {
        return Err(Error::ImageSize {
            got_width: img.width(),
            got_height: img.height(),
            want_width: img.width().div_ceil(cw).max(1) * cw,
            want_height: img.height().div_ceil(ch).max(1) * ch,
        });
    }
    if let Some(bg) = &atlas.background {
        if bg.dimensions() != img.dimensions() {
            return Err(Error::ImageSize {
                got_width: img.width(),
                got_height: img.height(),
                want_width: bg.width(),
                want_height: bg.height(),
            });
        }
    }
    let (w, h) = ((img.width() / cw) as usize, (img.height() / ch) as usize);
    let mut cells = Vec::with_capacity(w * h);
    let mut residual = vec![0u8; (cw * ch * 3) as usize];
    for gy in 0..h as u32 {
        for gx in 0..w as u32 {
            let mut k = 0;
            for y in 0..ch {
                for x in 0..cw {
                    let (px, py) = (gx * cw + x, gy * ch + y);
                    let p = img.get_pixel(px, py).0;
                    let b = atlas.background.as_ref().map_or([0; 3], |bg| bg.get_pixel(px, py).0);
                    for c in 0..3 {
                        residual[k] = p[c].saturating_sub(b[c]);
                        k += 1;
                    }
                }
            }
            let best = atlas
                .sprites
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let d: u64 = s
                        .as_raw()
                        .iter()
                        .zip(&residual)
                        .map(|(&a, &b)| (a as i32 - b as i32).unsigned_abs() as u64)
                        .sum();
                    (d, i)
                })
                .min()
                .map(|(_, i)| i)
                .expect("atlas has at least one sprite");
            cells.push(SpriteId(best as u16));
        }
    }
    Grid::from_cells(w, h, cells)
}

/// Draws `grid` onto the background (or black).
pub fn render_grid(grid: &Grid, atlas: &SpriteAtlas) -> Result<RgbImage> {
    let (cw, ch) = (atlas.cell_width, atlas.cell_height);
    let (iw, ih) = (grid.width() as u32 * cw, grid.height() as u32 * ch);
    let mut img = match &atlas.background {
        Some(bg) if bg.dimensions() == (iw, ih) => bg.clone(),
        Some(bg) => {
            return Err(Error::ImageSize {
                got_width: bg.width(),
                got_height: bg.height(),
                want_width: iw,
                want_height: ih,
            })
        }
        None => RgbImage::new(iw, ih),
    };
    for (pos, s) in grid.iter() {
        let sprite = atlas.sprite(s).ok_or(Error::SpriteOutOfRange {
            id: s.index(),
            count: atlas.sprites.len(),
        })?;
        for (x, y, p) in sprite.enumerate_pixels() {
            let (px, py) = (pos.col as u32 * cw + x, pos.row as u32 * ch + y);
            let dst = img.get_pixel_mut(px, py);
            for c in 0..3 {
                dst.0[c] = dst.0[c].saturating_add(p.0[c]);
            }
        }
    }
    Ok(img)
}
