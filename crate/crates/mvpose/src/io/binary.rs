//! Binary heatmap streams and RGB patch files (little-endian).
//!
//! Heatmap stream: `"RPHM"`, u32 version, u32 J, u32 W, u32 H, u8
//! normalized flag, then per frame a u64 frame index and J*H*W f32 values.
//! Patch file: per patch u32 width, u32 height, width*height*3 RGB8 bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use mvpose_core::heatmap::Heatmap;
use mvpose_core::tracker::RgbPatch;

use crate::{Error, Result};

pub(crate) const TRUNCATED_FRAME: &str = "truncated frame";

pub const HEATMAP_MAGIC: &[u8; 4] = b"RPHM";
pub const HEATMAP_VERSION: u32 = 1;
const HEADER_LEN: u64 = 21;
const MAX_PATCH_SIDE: u32 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeatmapHeader {
    pub joints: u32,
    pub width: u32,
    pub height: u32,
    pub normalized: bool,
}

impl HeatmapHeader {
    fn frame_values(&self) -> usize {
        self.joints as usize * self.width as usize * self.height as usize
    }

    fn frame_bytes(&self) -> u64 {
        8 + 4 * self.frame_values() as u64
    }
}

pub struct HeatmapWriter {
    path: PathBuf,
    header: HeatmapHeader,
    out: BufWriter<File>,
}

impl HeatmapWriter {
    pub fn create(path: impl AsRef<Path>, header: HeatmapHeader) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = super::jsonl::create_file(&path)?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        out.write_all(HEATMAP_MAGIC).map_err(io)?;
        out.write_u32::<LittleEndian>(HEATMAP_VERSION).map_err(io)?;
        out.write_u32::<LittleEndian>(header.joints).map_err(io)?;
        out.write_u32::<LittleEndian>(header.width).map_err(io)?;
        out.write_u32::<LittleEndian>(header.height).map_err(io)?;
        out.write_u8(header.normalized as u8).map_err(io)?;
        Ok(Self { path, header, out })
    }

    pub fn write_frame(&mut self, frame: u64, hm: &Heatmap) -> Result<()> {
        let h = &self.header;
        if (hm.joints, hm.width, hm.height) != (h.joints as usize, h.width as usize, h.height as usize) {
            return Err(Error::Config(format!(
                "heatmap {}x{}x{} does not match stream header {}x{}x{}",
                hm.joints, hm.height, hm.width, h.joints, h.height, h.width
            )));
        }
        let io = |e| Error::io(&self.path, e);
        self.out.write_u64::<LittleEndian>(frame).map_err(io)?;
        for v in &hm.values {
            self.out.write_f32::<LittleEndian>(*v as f32).map_err(io)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Iterates `(frame index, heatmap)` pairs of a stream.
pub struct HeatmapReader<R> {
    path: PathBuf,
    input: R,
    header: HeatmapHeader,
    offset: u64,
    buf: Vec<u8>,
}

impl HeatmapReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        Self::new(path, BufReader::new(file))
    }
}

impl<R: Read> HeatmapReader<R> {
    /// `path` is only used in error messages.
    pub fn new(path: PathBuf, mut input: R) -> Result<Self> {
        let fmt = |offset: u64, message: String| Error::Format { path: path.clone(), offset, message };
        let mut head = [0u8; HEADER_LEN as usize];
        let got = read_full(&mut input, &mut head).map_err(|e| Error::io(&path, e))?;
        if got < 4 || &head[..4] != HEATMAP_MAGIC {
            return Err(fmt(0, format!("bad magic {:?}, expected \"RPHM\"", &head[..got.min(4)])));
        }
        if got < HEADER_LEN as usize {
            return Err(fmt(got as u64, format!("truncated header ({got} of {HEADER_LEN} bytes)")));
        }
        let word = |i: usize| u32::from_le_bytes([head[i], head[i + 1], head[i + 2], head[i + 3]]);
        let version = word(4);
        if version != HEATMAP_VERSION {
            return Err(fmt(4, format!("unsupported version {version}")));
        }
        let header = HeatmapHeader { joints: word(8), width: word(12), height: word(16), normalized: head[20] != 0 };
        if header.joints == 0 || header.width == 0 || header.height == 0 {
            return Err(fmt(8, format!("empty heatmap shape {}x{}x{}", header.joints, header.height, header.width)));
        }
        if head[20] > 1 {
            return Err(fmt(20, format!("normalized flag must be 0 or 1, got {}", head[20])));
        }
        let buf = vec![0u8; header.frame_bytes() as usize];
        Ok(Self { path, input, header, offset: HEADER_LEN, buf })
    }

    pub fn header(&self) -> HeatmapHeader {
        self.header
    }
}

impl<R: Read> Iterator for HeatmapReader<R> {
    type Item = Result<(u64, Heatmap)>;

    fn next(&mut self) -> Option<Self::Item> {
        let got = match read_full(&mut self.input, &mut self.buf) {
            Ok(n) => n,
            Err(e) => return Some(Err(Error::io(&self.path, e))),
        };
        if got == 0 {
            return None;
        }
        let start = self.offset;
        self.offset += got as u64;
        if got < self.buf.len() {
            return Some(Err(Error::Format {
                path: self.path.clone(),
                offset: self.offset,
                message: format!("{TRUNCATED_FRAME} starting at byte {start}: {got} of {} bytes", self.buf.len()),
            }));
        }
        let frame = u64::from_le_bytes(self.buf[..8].try_into().expect("8 bytes"));
        let values: Vec<f64> =
            self.buf[8..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let h = self.header;
        Some(
            Heatmap::new(h.joints as usize, h.width as usize, h.height as usize, values)
                .map(|hm| (frame, hm))
                .map_err(Error::from),
        )
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Appends patches to a writer; returns the number of bytes written.
pub fn write_patches(out: &mut impl Write, patches: &[RgbPatch]) -> std::io::Result<u64> {
    let mut n = 0;
    for p in patches {
        out.write_u32::<LittleEndian>(p.width)?;
        out.write_u32::<LittleEndian>(p.height)?;
        out.write_all(&p.data)?;
        n += 8 + p.data.len() as u64;
    }
    Ok(n)
}

/// Reads `count` patches starting at byte `offset`.
pub fn read_patches(path: impl AsRef<Path>, offset: u64, count: usize) -> Result<Vec<RgbPatch>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    r.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(path, e))?;
    let mut pos = offset;
    let fmt = |offset: u64, message: String| Error::Format { path: path.into(), offset, message };
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (w, h) = match (r.read_u32::<LittleEndian>(), r.read_u32::<LittleEndian>()) {
            (Ok(w), Ok(h)) => (w, h),
            _ => return Err(fmt(pos, format!("truncated header of patch {i}"))),
        };
        if w == 0 || h == 0 || w > MAX_PATCH_SIDE || h > MAX_PATCH_SIDE {
            return Err(fmt(pos, format!("patch {i} has invalid size {w}x{h}")));
        }
        pos += 8;
        let mut data = vec![0u8; w as usize * h as usize * 3];
        let got = read_full(&mut r, &mut data).map_err(|e| Error::io(path, e))?;
        if got < data.len() {
            return Err(fmt(pos + got as u64, format!("truncated pixels of patch {i}")));
        }
        pos += data.len() as u64;
        out.push(RgbPatch::new(w, h, data)?);
    }
    Ok(out)
}
