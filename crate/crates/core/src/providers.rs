//! Sources of trunk masks.
//!
//! The geometric pipeline only sees [`TrunkMask`]s; where they come from is
//! chosen per request: payloads that already are masks, a stored oracle
//! directory, a classical threshold segmenter, or a remote model server
//! speaking the segment exchange of the wire protocol.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, ErrorCode, Result};
use crate::mask::{decode_mask, select_trunk_component, Provenance, TrunkMask};
use crate::service::protocol::{self, Message, SegmentRequest, Status};

/// Threshold segmenter settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineParams {
    /// Trunk is brighter than the background.
    pub invert: bool,
    /// 3x3 openings applied after thresholding, `0..=MAX_OPEN_ITERATIONS`.
    pub open_iterations: u32,
}

impl BaselineParams {
    pub const MAX_OPEN_ITERATIONS: u32 = 4;

    pub fn validate(&self) -> Result<()> {
        if self.open_iterations > Self::MAX_OPEN_ITERATIONS {
            return Err(Error::Parameter(format!(
                "open_iterations {} outside 0..={}",
                self.open_iterations,
                Self::MAX_OPEN_ITERATIONS
            )));
        }
        Ok(())
    }
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self { invert: false, open_iterations: 1 }
    }
}

/// Stored ground-truth masks: `<id>.img` next to `<id>.mask.png`.
///
/// Images are matched by content hash, so callers can hand over raw bytes
/// without knowing the id.
#[derive(Debug, Clone)]
pub struct OracleStore {
    dir: PathBuf,
    masks: HashMap<String, PathBuf>,
    by_digest: HashMap<[u8; 32], String>,
}

fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl OracleStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let mut masks = HashMap::new();
        let mut by_digest = HashMap::new();
        let entries = std::fs::read_dir(&dir)
            .map_err(|e| Error::ProviderUnavailable(format!("oracle dir {}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            let Some(id) = name.strip_suffix(".img") else { continue };
            let mask_path = dir.join(format!("{id}.mask.png"));
            if !mask_path.is_file() {
                return Err(Error::ProviderUnavailable(format!("oracle image `{id}` has no {id}.mask.png")));
            }
            by_digest.insert(digest(&std::fs::read(&path)?), id.to_owned());
            masks.insert(id.to_owned(), mask_path);
        }
        Ok(Self { dir, masks, by_digest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.masks.keys().map(String::as_str)
    }

    /// The stored mask for `id`, verbatim.
    pub fn lookup(&self, id: &str) -> Result<TrunkMask> {
        let path = self.masks.get(id).ok_or_else(|| Error::UnknownImage(id.to_owned()))?;
        decode_mask(&std::fs::read(path)?, Provenance::OracleFile)
    }

    pub fn id_of(&self, image: &[u8]) -> Option<&str> {
        self.by_digest.get(&digest(image)).map(String::as_str)
    }

    pub fn segment(&self, image: &[u8]) -> Result<TrunkMask> {
        let id = self
            .id_of(image)
            .ok_or_else(|| Error::UnknownImage(format!("no oracle entry with sha256 {}", hex(&digest(image)))))?;
        self.lookup(id)
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A remote segmenter reached over the NDJSON stream transport.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalEndpoint {
    pub address: String,
    pub timeout: Duration,
}

impl ExternalEndpoint {
    pub fn new(address: impl Into<String>) -> Self {
        Self { address: address.into(), timeout: Duration::from_secs(30) }
    }

    fn connect(&self) -> Result<TcpStream> {
        let unavailable = |e: &dyn std::fmt::Display| Error::ProviderUnavailable(format!("{}: {e}", self.address));
        let addrs = self.address.to_socket_addrs().map_err(|e| unavailable(&e))?;
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(self.timeout)).map_err(|e| unavailable(&e))?;
                    stream.set_write_timeout(Some(self.timeout)).map_err(|e| unavailable(&e))?;
                    return Ok(stream);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(match last {
            Some(e) => unavailable(&e),
            None => unavailable(&"address resolved to nothing"),
        })
    }

    /// Whether a TCP connection can be opened right now.
    pub fn probe(&self) -> Result<()> {
        self.connect().map(drop)
    }

    /// One request/response exchange on a fresh connection.
    pub fn segment(&self, image: &[u8]) -> Result<TrunkMask> {
        let mut stream = self.connect()?;
        let unavailable = |e: &dyn std::fmt::Display| Error::ProviderUnavailable(format!("{}: {e}", self.address));
        let request_id = format!("seg-{}", hex(&digest(image)[..8]));
        let frame = protocol::encode(&Message::SegmentRequest(SegmentRequest {
            request_id: request_id.clone(),
            image: image.to_vec(),
            provider: None,
        }));
        stream.write_all(&frame).map_err(|e| unavailable(&e))?;
        stream.flush().map_err(|e| unavailable(&e))?;
        let mut line = Vec::new();
        BufReader::new(stream).read_until(b'\n', &mut line).map_err(|e| unavailable(&e))?;
        if line.is_empty() {
            return Err(unavailable(&"connection closed without a reply"));
        }
        match protocol::decode(&line).map_err(|e| unavailable(&e))? {
            Message::SegmentResponse(resp) if resp.request_id == request_id => match (resp.status, resp.mask_png) {
                (Status::Ok, Some(png)) => decode_mask(&png, Provenance::External),
                (Status::Ok, None) => Err(unavailable(&"ok reply without a mask")),
                (Status::Error { code, message }, _) => Err(remote_error(&code, message)),
            },
            Message::Error(reply) => Err(remote_error(&reply.code, reply.message)),
            other => Err(unavailable(&format!("unexpected `{}` reply", other.type_name()))),
        }
    }
}

fn remote_error(code: &str, message: String) -> Error {
    match ErrorCode::parse(code) {
        Some(ErrorCode::SegmentationEmpty) => Error::SegmentationEmpty,
        Some(ErrorCode::UnknownImage) => Error::UnknownImage(message),
        Some(ErrorCode::ImageFormat) => Error::Format(message),
        _ => Error::ProviderUnavailable(format!("remote {code}: {message}")),
    }
}

#[derive(Debug, Clone)]
pub enum MaskProviderKind {
    /// Payloads already are masks.
    Precomputed,
    Oracle(OracleStore),
    Baseline(BaselineParams),
    External(ExternalEndpoint),
}

/// Produces a trunk mask with the dimensions of `image`.
pub fn segment(image: &[u8], provider: &MaskProviderKind) -> Result<TrunkMask> {
    match provider {
        MaskProviderKind::Precomputed => decode_mask(image, Provenance::External),
        MaskProviderKind::Oracle(store) => store.segment(image),
        MaskProviderKind::Baseline(params) => baseline_threshold(image, params),
        MaskProviderKind::External(endpoint) => endpoint.segment(image),
    }
}

/// ITU-R BT.601 luma, rounded to nearest.
fn luma601(image: &image::DynamicImage) -> image::GrayImage {
    use image::DynamicImage;
    match image {
        DynamicImage::ImageLuma8(g) => g.clone(),
        other => {
            let rgb = other.to_rgb8();
            image::GrayImage::from_fn(rgb.width(), rgb.height(), |c, r| {
                let [red, green, blue] = rgb.get_pixel(c, r).0;
                let y = (299 * red as u32 + 587 * green as u32 + 114 * blue as u32 + 500) / 1000;
                image::Luma([y as u8])
            })
        }
    }
}

/// Otsu's threshold: the level `t` maximizing between-class variance of
/// `{v <= t}` versus `{v > t}`. `None` for single-valued images.
pub fn otsu_level(histogram: &[u64; 256]) -> Option<u8> {
    let total: u64 = histogram.iter().sum();
    if histogram.iter().filter(|&&n| n > 0).count() < 2 {
        return None;
    }
    let sum_all: f64 = histogram.iter().enumerate().map(|(v, &n)| v as f64 * n as f64).sum();
    let (mut w0, mut sum0) = (0u64, 0f64);
    let mut best = (f64::NEG_INFINITY, 0u8);
    for t in 0..255usize {
        w0 += histogram[t];
        sum0 += t as f64 * histogram[t] as f64;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let m0 = sum0 / w0 as f64;
        let m1 = (sum_all - sum0) / w1 as f64;
        let between = w0 as f64 * w1 as f64 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, t as u8);
        }
    }
    Some(best.1)
}

/// 3x3 erosion followed by 3x3 dilation. Pixels outside the frame count as
/// set for erosion and unset for dilation.
fn open3x3(mask: &TrunkMask) -> TrunkMask {
    let erode = filter3(mask, true);
    filter3(&erode, false)
}

/// Separable 3x3 min (erode) or max (dilate) filter.
fn filter3(mask: &TrunkMask, erode: bool) -> TrunkMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let pick = |a: bool, b: bool| if erode { a && b } else { a || b };
    let border = erode;
    let mut horiz = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let left = if c > 0 { bits[r * w + c - 1] } else { border };
            let right = if c + 1 < w { bits[r * w + c + 1] } else { border };
            horiz[r * w + c] = pick(pick(left, bits[r * w + c]), right);
        }
    }
    let mut out = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            let up = if r > 0 { horiz[(r - 1) * w + c] } else { border };
            let down = if r + 1 < h { horiz[(r + 1) * w + c] } else { border };
            out[r * w + c] = pick(pick(up, horiz[r * w + c]), down);
        }
    }
    TrunkMask::new(mask.width(), mask.height(), out, mask.provenance()).expect("same dimensions")
}

/// Classical stand-in for a learned segmenter: BT.601 luma, global Otsu
/// threshold (trunk darker than background unless `invert`), 3x3 opening,
/// then the component nearest the image center.
pub fn baseline_threshold(image: &[u8], params: &BaselineParams) -> Result<TrunkMask> {
    params.validate()?;
    let decoded = image::load_from_memory(image).map_err(|e| Error::Format(e.to_string()))?;
    let gray = luma601(&decoded);
    let mut histogram = [0u64; 256];
    for p in gray.pixels() {
        histogram[p.0[0] as usize] += 1;
    }
    let level = otsu_level(&histogram).ok_or(Error::SegmentationEmpty)?;
    let (w, h) = gray.dimensions();
    let bits = gray.into_raw().into_iter().map(|v| if params.invert { v > level } else { v <= level }).collect();
    let mut mask = TrunkMask::new(w, h, bits, Provenance::BaselineSegmenter)?;
    for _ in 0..params.open_iterations {
        mask = open3x3(&mask);
    }
    if mask.is_empty() {
        return Err(Error::SegmentationEmpty);
    }
    select_trunk_component(&mask)
}
