use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::config::{DatasetSpec, SynthKind};
use crate::nn::Tensor;

/// Per-pixel amplitude of the uniform noise added to synthetic templates.
pub const SYNTH_NOISE: f32 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    /// `n × C × H × W`, values in `[0, 1]`.
    pub samples: Tensor,
    pub labels: Option<Vec<u8>>,
    /// Hex SHA-256 of the source bytes (IDX) or of the generated pixels.
    pub checksum: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.samples.shape()[1..]
    }

    pub fn load(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
        match spec {
            DatasetSpec::Synthetic { kind, modes, samples, size } => {
                synth_dataset(*kind, *modes, *samples, *size, seed)
            }
            DatasetSpec::Idx { images, labels } => load_idx(images, labels.as_deref()),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Parses an IDX header; returns the dimension sizes and the data offset.
fn idx_header(bytes: &[u8]) -> Result<(Vec<usize>, usize)> {
    let fail = |offset: usize, message: String| Error::Format {
        what: "idx",
        offset: offset as u64,
        message,
    };
    if bytes.len() < 4 {
        return Err(fail(bytes.len(), format!("truncated magic: {} of 4 bytes", bytes.len())));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(fail(0, format!("bad magic {:02x} {:02x}", bytes[0], bytes[1])));
    }
    if bytes[2] != 0x08 {
        return Err(fail(2, format!("unsupported element type 0x{:02x} (expected 0x08)", bytes[2])));
    }
    let ndim = bytes[3] as usize;
    if ndim == 0 {
        return Err(fail(3, "zero dimensions".into()));
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(fail(
            bytes.len(),
            format!("truncated header: {} bytes missing", header - bytes.len()),
        ));
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|i| {
            let o = 4 + 4 * i;
            u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        })
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() < header + count {
        return Err(fail(
            bytes.len(),
            format!("truncated data: {} bytes missing", header + count - bytes.len()),
        ));
    }
    if bytes.len() > header + count {
        return Err(fail(header + count, format!("{} trailing bytes", bytes.len() - header - count)));
    }
    Ok((dims, header))
}

/// Reads an IDX image file (`n × H × W` or `n × C × H × W`, unsigned bytes)
/// and optional label file. Pixels are scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let bytes = read_file(images)?;
    let (dims, off) = idx_header(&bytes)?;
    let shape = match dims.as_slice() {
        [n, h, w] => vec![*n, 1, *h, *w],
        [n, c, h, w] => vec![*n, *c, *h, *w],
        other => {
            return Err(Error::Format {
                what: "idx",
                offset: 3,
                message: format!("expected 3 or 4 image dimensions, got {}", other.len()),
            })
        }
    };
    let data = bytes[off..].iter().map(|&b| b as f32 / 255.0).collect();
    let samples = Tensor::new(shape, data)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);

    let labels = match labels {
        None => None,
        Some(path) => {
            let lb = read_file(path)?;
            let (ldims, loff) = idx_header(&lb)?;
            if ldims.len() != 1 {
                return Err(Error::Format {
                    what: "idx labels",
                    offset: 3,
                    message: format!("expected 1 dimension, got {}", ldims.len()),
                });
            }
            if ldims[0] != samples.batch() {
                return Err(Error::invalid(format!(
                    "{} labels for {} images",
                    ldims[0],
                    samples.batch()
                )));
            }
            hasher.update(&lb);
            Some(lb[loff..].to_vec())
        }
    };
    Ok(Dataset {
        name: images
            .file_name()
            .map_or_else(|| "idx".into(), |s| s.to_string_lossy().into_owned()),
        samples,
        labels,
        checksum: hex(&hasher.finalize()),
    })
}

/// Writes an unsigned-byte IDX file; used to build fixtures.
pub fn encode_idx(dims: &[usize], data: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 0x08, dims.len() as u8];
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(data);
    out
}

/// Largest per-sample scale-down of a template's intensity.
pub const SYNTH_AMPLITUDE_DROP: f32 = 0.3;
/// Largest per-axis offset, in pixels, of a mode's position.
pub const SYNTH_JITTER: f32 = 0.5;

/// Per-pixel bound on `|sample − template|` for single-mode data.
pub fn synth_deviation_bound(kind: SynthKind, size: usize) -> f32 {
    // Amplitude drop, plus the template's steepest slope times the largest
    // jitter displacement, plus noise.
    let slope = match kind {
        SynthKind::GaussianMixture => (-0.5f32).exp() / blob_sigma(size),
        SynthKind::Shapes => 1.0,
    };
    SYNTH_AMPLITUDE_DROP + slope * SYNTH_JITTER * std::f32::consts::SQRT_2 + SYNTH_NOISE
}

fn blob_sigma(size: usize) -> f32 {
    (size as f32 / 8.0).max(0.75)
}

/// Rendered image of one mode, shifted by `(dx, dy)` pixels.
fn render(kind: SynthKind, mode: usize, modes: usize, size: usize, dx: f32, dy: f32) -> Vec<f32> {
    let s = size as f32;
    let mut img = vec![0.0f32; size * size];
    match kind {
        SynthKind::GaussianMixture => {
            // Blobs spaced around a circle.
            let angle = std::f32::consts::TAU * mode as f32 / modes.max(1) as f32;
            let r = if modes == 1 { 0.0 } else { s / 4.0 };
            let c = (s - 1.0) / 2.0;
            let (cx, cy) = (c + r * angle.cos() + dx, c + r * angle.sin() + dy);
            let sigma = blob_sigma(size);
            for y in 0..size {
                for x in 0..size {
                    let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                    img[y * size + x] = (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        SynthKind::Shapes => {
            // Shapes are drawn with anti-aliased unit-width strokes so that
            // sub-pixel shifts change intensities smoothly.
            let lo = (size / 4) as f32;
            let hi = (size - 1 - size / 4) as f32;
            let mid = (size / 2) as f32;
            let c = (s - 1.0) / 2.0;
            let line = |d: f32| (1.0 - d.abs()).max(0.0);
            for y in 0..size {
                for x in 0..size {
                    let (fx, fy) = (x as f32 - dx, y as f32 - dy);
                    let inside = |v: f32| v >= lo - 0.5 && v <= hi + 0.5;
                    let v = match mode % 4 {
                        0 => {
                            let vert = if inside(fy) { line(fx - lo).max(line(fx - hi)) } else { 0.0 };
                            let horiz = if inside(fx) { line(fy - lo).max(line(fy - hi)) } else { 0.0 };
                            vert.max(horiz)
                        }
                        1 => line(fx - mid).max(line(fy - mid)),
                        2 => line((fx - fy) / std::f32::consts::SQRT_2)
                            .max(line((fx + fy - (s - 1.0)) / std::f32::consts::SQRT_2)),
                        _ => {
                            let d = ((fx - c).powi(2) + (fy - c).powi(2)).sqrt();
                            line(d - s / 3.0)
                        }
                    };
                    img[y * size + x] = v;
                }
            }
            if mode >= 4 {
                // Further modes reuse the four shapes, shifted by one pixel per cycle.
                let shift = (mode / 4) % size;
                img.rotate_right(shift);
            }
        }
    }
    img
}

/// Noise-free, unshifted image for one synthetic mode.
pub fn synth_template(kind: SynthKind, mode: usize, modes: usize, size: usize) -> Vec<f32> {
    render(kind, mode, modes, size, 0.0, 0.0)
}

/// Draws `n` synthetic single-channel images. Modes are drawn uniformly from
/// `allowed` (all modes when `None`). Each image is its mode's template with
/// a random sub-pixel shift, a random intensity scale and uniform noise.
pub fn synth_draw<R: Rng + ?Sized>(
    kind: SynthKind,
    modes: usize,
    size: usize,
    n: usize,
    allowed: Option<&[usize]>,
    rng: &mut R,
) -> Result<(Tensor, Vec<u8>)> {
    if modes == 0 || size == 0 {
        return Err(Error::invalid("synthetic data needs modes > 0 and size > 0"));
    }
    if modes > 256 {
        return Err(Error::invalid("at most 256 synthetic modes"));
    }
    let all: Vec<usize> = (0..modes).collect();
    let allowed = allowed.unwrap_or(&all);
    if allowed.is_empty() || allowed.iter().any(|&m| m >= modes) {
        return Err(Error::invalid(format!("allowed modes {allowed:?} not within 0..{modes}")));
    }
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let m = allowed[rng.random_range(0..allowed.len())];
        labels.push(m as u8);
        let dx = rng.random_range(-SYNTH_JITTER..=SYNTH_JITTER);
        let dy = rng.random_range(-SYNTH_JITTER..=SYNTH_JITTER);
        let amp = 1.0 - rng.random_range(0.0..=SYNTH_AMPLITUDE_DROP);
        let img = render(kind, m, modes, size, dx, dy);
        data.extend(
            img.iter()
                .map(|&v| (amp * v + rng.random_range(-SYNTH_NOISE..=SYNTH_NOISE)).clamp(0.0, 1.0)),
        );
    }
    Ok((Tensor::new(vec![n, 1, size, size], data)?, labels))
}

/// Deterministic synthetic dataset with per-mode labels.
pub fn synth_dataset(kind: SynthKind, modes: usize, n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (samples, labels) = synth_draw(kind, modes, size, n, None, &mut rng)?;
    let mut hasher = Sha256::new();
    for v in samples.data() {
        hasher.update(v.to_le_bytes());
    }
    Ok(Dataset {
        name: format!("synthetic-{kind}-{modes}x{size}"),
        samples,
        labels: Some(labels),
        checksum: hex(&hasher.finalize()),
    })
}
