//! PNG/PPM frame directories and raw RGB24 files.
//!
//! Frame directories hold one image per frame, ordered by the number in the
//! file name (`frame_000007.png` sorts before `frame_000010.png`). Raw files
//! are tightly packed RGB24 with a sidecar `<file>.meta` of `key = value`
//! lines giving `width`, `height`, `frames` and `fps`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::VideoVolume;
use crate::error::{Error, Result};

/// File-name pattern used when writing frames.
pub const FRAME_PATTERN: &str = "frame_%06d.png";

fn frame_name(i: usize) -> String {
    format!("frame_{i:06}.png")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMetadata {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default = "default_fps")]
    pub fps: f64,
}

fn default_fps() -> f64 {
    30.0
}

fn to_unit(b: u8) -> f32 {
    f32::from(b) / 255.0
}

/// Half-up rounding to 8 bits.
fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Loads a frame directory or a raw RGB24 file.
pub fn load_video(path: impl AsRef<Path>) -> Result<VideoVolume> {
    let path = path.as_ref();
    let mut v = if path.is_dir() {
        load_frame_dir(path)?
    } else {
        load_raw(path)?
    };
    v.source = path.display().to_string();
    Ok(v)
}

fn numeric_key(p: &Path) -> Option<u64> {
    let stem = p.file_stem()?.to_str()?;
    let digits: String = stem
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    digits.parse().ok()
}

fn load_frame_dir(dir: &Path) -> Result<VideoVolume> {
    let mut files: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm")) {
            let key = numeric_key(&p)
                .ok_or_else(|| Error::Video(format!("frame file {} has no frame number", p.display())))?;
            files.push((key, p));
        }
    }
    if files.is_empty() {
        return Err(Error::Video(format!("no PNG/PPM frames in {}", dir.display())));
    }
    files.sort();
    let frames: Vec<(usize, usize, Vec<f32>)> = files.par_iter().map(|(_, p)| read_image(p)).collect::<Result<_>>()?;
    let (w, h) = (frames[0].0, frames[0].1);
    if let Some((i, f)) = frames.iter().enumerate().find(|(_, f)| (f.0, f.1) != (w, h)) {
        return Err(Error::Video(format!(
            "frame {} is {}x{}, expected {w}x{h}",
            files[i].1.display(),
            f.0,
            f.1
        )));
    }
    VideoVolume::from_frames(w, h, frames.into_iter().map(|f| f.2).collect())
}

fn read_image(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("ppm") => read_ppm(path),
        _ => read_png(path),
    }
}

fn read_png(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Video(format!("{} is too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let rgb: Vec<f32> = match info.color_type {
        png::ColorType::Rgb => px.iter().map(|&b| to_unit(b)).collect(),
        png::ColorType::Rgba => px
            .chunks_exact(4)
            .flat_map(|c| [c[0], c[1], c[2]])
            .map(to_unit)
            .collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|&g| [g, g, g]).map(to_unit).collect(),
        png::ColorType::GrayscaleAlpha => px
            .chunks_exact(2)
            .flat_map(|c| [c[0], c[0], c[0]])
            .map(to_unit)
            .collect(),
        png::ColorType::Indexed => return Err(Error::Video(format!("{}: palette not expanded", path.display()))),
    };
    Ok((w, h, rgb))
}

fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| Error::Video(format!("{}: {m}", path.display()));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P6" {
        return Err(bad("only binary P6 PPM is supported"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit PPM is supported"));
    }
    let data = &bytes[pos + 1..];
    if data.len() < w * h * 3 {
        return Err(bad("truncated pixel data"));
    }
    Ok((w, h, data[..w * h * 3].iter().map(|&b| to_unit(b)).collect()))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn read_raw_metadata(path: impl AsRef<Path>) -> Result<RawMetadata> {
    let mp = meta_path(path.as_ref());
    let text =
        fs::read_to_string(&mp).map_err(|e| Error::Video(format!("missing raw metadata {}: {e}", mp.display())))?;
    toml::from_str(&text).map_err(|e| Error::Video(format!("bad raw metadata {}: {e}", mp.display())))
}

fn load_raw(path: &Path) -> Result<VideoVolume> {
    let meta = read_raw_metadata(path)?;
    let bytes = fs::read(path)?;
    let need = meta.width * meta.height * meta.frames * 3;
    if bytes.len() != need {
        return Err(Error::Video(format!(
            "{} has {} bytes, metadata implies {need}",
            path.display(),
            bytes.len()
        )));
    }
    VideoVolume::new(
        meta.width,
        meta.height,
        meta.frames,
        bytes.iter().map(|&b| to_unit(b)).collect(),
    )
}

fn write_png(
    path: &Path,
    w: usize,
    h: usize,
    color: png::ColorType,
    data: &[u8],
    palette: Option<&[u8]>,
) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, w as u32, h as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    if let Some(p) = palette {
        enc.set_palette(p.to_vec());
    }
    let mut writer = enc.write_header()?;
    writer.write_image_data(data)?;
    Ok(())
}

/// Writes a volume as `frame_%06d.png`, or as raw RGB24 plus sidecar when
/// `path` ends in `.rgb`.
pub fn save_video(video: &VideoVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if path.extension().and_then(|e| e.to_str()) == Some("rgb") {
        let bytes: Vec<u8> = video.data().iter().map(|&v| to_byte(v)).collect();
        fs::write(path, bytes)?;
        let meta = RawMetadata {
            width: video.width(),
            height: video.height(),
            frames: video.frames(),
            fps: 30.0,
        };
        let text = toml::to_string(&meta).map_err(|e| Error::Video(e.to_string()))?;
        fs::write(meta_path(path), text)?;
        return Ok(());
    }
    let frames: Vec<&[f32]> = (0..video.frames()).map(|t| video.frame(t)).collect();
    save_frames(&frames, video.width(), video.height(), path)
}

/// Writes RGB frames (`[y][x][c]` each) into `dir` as numbered PNGs.
pub fn save_frames<F: AsRef<[f32]> + Sync>(
    frames: &[F],
    width: usize,
    height: usize,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    frames.par_iter().enumerate().try_for_each(|(i, f)| {
        let f = f.as_ref();
        if f.len() != width * height * 3 {
            return Err(Error::Video(format!(
                "frame {i} has {} samples for {width}x{height}",
                f.len()
            )));
        }
        let bytes: Vec<u8> = f.iter().map(|&v| to_byte(v)).collect();
        write_png(
            &dir.join(frame_name(i)),
            width,
            height,
            png::ColorType::Rgb,
            &bytes,
            None,
        )
    })
}

/// Writes single-channel `[0, 1]` frames as grayscale PNGs.
pub fn save_gray_frames<F: AsRef<[f32]> + Sync>(
    frames: &[F],
    width: usize,
    height: usize,
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    frames.par_iter().enumerate().try_for_each(|(i, f)| {
        let bytes: Vec<u8> = f.as_ref().iter().map(|&v| to_byte(v)).collect();
        if bytes.len() != width * height {
            return Err(Error::Video(format!("gray frame {i} has {} samples", bytes.len())));
        }
        write_png(
            &dir.join(frame_name(i)),
            width,
            height,
            png::ColorType::Grayscale,
            &bytes,
            None,
        )
    })
}

/// Writes per-pixel class indices as palette PNGs.
pub fn save_indexed_frames(
    frames: &[Vec<u8>],
    width: usize,
    height: usize,
    palette: &[[u8; 3]],
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let flat: Vec<u8> = palette.iter().flatten().copied().collect();
    frames.par_iter().enumerate().try_for_each(|(i, f)| {
        if f.len() != width * height {
            return Err(Error::Video(format!("index frame {i} has {} samples", f.len())));
        }
        write_png(
            &dir.join(frame_name(i)),
            width,
            height,
            png::ColorType::Indexed,
            f,
            Some(&flat),
        )
    })
}
