//! Synthetic series with known dynamics, used as desk-scale stand-ins for
//! reanalysis data.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{self, streams, RunRng};

use super::grid::{GridExtents, GridSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    /// Gaussian bumps drifting with one shared velocity on a torus; each bump
    /// fades in and out over its lifetime.
    AdvectingBlobs,
    /// A plane sinusoid translated by a whole number of cells per frame.
    TravelingWave,
    /// I.i.d. Gaussian noise; nothing is predictable.
    NoiseFloor,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [Self::AdvectingBlobs, Self::TravelingWave, Self::NoiseFloor];

    pub fn name(self) -> &'static str {
        match self {
            Self::AdvectingBlobs => "advecting-blobs",
            Self::TravelingWave => "traveling-wave",
            Self::NoiseFloor => "noise-floor",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| Error::UnknownName {
            kind: "synthetic dataset",
            name: s.to_string(),
            known: Self::ALL.map(Self::name).join(", "),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub kind: SynthKind,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
    /// Cells moved per frame along (H, W).
    pub velocity: (i64, i64),
    /// Bumps alive at any time.
    pub blobs: usize,
    pub sigma: f64,
    /// Bump lifetime range in frames.
    pub lifetime: (usize, usize),
    pub amplitude: f64,
    /// Whole wave periods across (H, W).
    pub wavenumber: (usize, usize),
    pub noise_std: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            kind: SynthKind::AdvectingBlobs,
            frames: 2000,
            height: 8,
            width: 8,
            channels: 1,
            seed: 0,
            velocity: (0, 1),
            blobs: 3,
            sigma: 1.2,
            lifetime: (80, 160),
            amplitude: 1.0,
            wavenumber: (1, 2),
            noise_std: 1.0,
        }
    }
}

/// Copies `src` (`H × W`) into `dst` moved by `(dh, dw)` with wraparound.
fn roll(src: &[f64], height: usize, width: usize, dh: i64, dw: i64, dst: &mut [f64]) {
    let sh = dh.rem_euclid(height as i64) as usize;
    let sw = dw.rem_euclid(width as i64) as usize;
    for h in 0..height {
        for w in 0..width {
            dst[((h + sh) % height) * width + (w + sw) % width] = src[h * width + w];
        }
    }
}

/// Signed distance on a ring of length `n`, in `[−n/2, n/2)`.
fn ring_distance(a: f64, n: usize) -> f64 {
    let n = n as f64;
    (a + n / 2.0).rem_euclid(n) - n / 2.0
}

struct Blob {
    birth: f64,
    life: f64,
    center: (f64, f64),
    amplitude: f64,
    sigma: f64,
}

fn blob_schedule(p: &SynthParams, rng: &mut RunRng) -> Vec<Blob> {
    let (lo, hi) = (p.lifetime.0.max(1) as f64, p.lifetime.1.max(p.lifetime.0).max(1) as f64);
    let mut out = Vec::new();
    for _ in 0..p.blobs {
        let first = rng.gen_range(lo..=hi);
        let mut birth = -rng.gen_range(0.0..first);
        let mut life = first;
        while birth < p.frames as f64 {
            out.push(Blob {
                birth,
                life,
                center: (rng.gen_range(0.0..p.height as f64), rng.gen_range(0.0..p.width as f64)),
                amplitude: p.amplitude * rng.gen_range(0.5..1.5),
                sigma: p.sigma * rng.gen_range(0.8..1.2),
            });
            birth += life;
            life = rng.gen_range(lo..=hi);
        }
    }
    out
}

fn blobs_channel(p: &SynthParams, rng: &mut RunRng) -> Vec<f64> {
    let (hh, ww) = (p.height, p.width);
    let blobs = blob_schedule(p, rng);
    let mut out = vec![0.0; p.frames * hh * ww];
    for (t, frame) in out.chunks_exact_mut(hh * ww).enumerate() {
        let t = t as f64;
        for b in blobs.iter().filter(|b| t >= b.birth && t <= b.birth + b.life) {
            let envelope = (PI * (t - b.birth) / b.life).sin();
            let ch = b.center.0 + p.velocity.0 as f64 * (t - b.birth);
            let cw = b.center.1 + p.velocity.1 as f64 * (t - b.birth);
            for h in 0..hh {
                let dh = ring_distance(h as f64 - ch, hh);
                for w in 0..ww {
                    let dw = ring_distance(w as f64 - cw, ww);
                    let r2 = (dh * dh + dw * dw) / (2.0 * b.sigma * b.sigma);
                    frame[h * ww + w] += b.amplitude * envelope * (-r2).exp();
                }
            }
        }
    }
    out
}

fn wave_channel(p: &SynthParams, rng: &mut RunRng) -> Vec<f64> {
    let (hh, ww) = (p.height, p.width);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let (kh, kw) = (p.wavenumber.0 as f64, p.wavenumber.1 as f64);
    let first: Vec<f64> = (0..hh * ww)
        .map(|i| {
            let (h, w) = ((i / ww) as f64, (i % ww) as f64);
            p.amplitude * (2.0 * PI * (kh * h / hh as f64 + kw * w / ww as f64) + phase).sin()
        })
        .collect();
    let mut out = vec![0.0; p.frames * hh * ww];
    for (t, frame) in out.chunks_exact_mut(hh * ww).enumerate() {
        let t = t as i64;
        roll(&first, hh, ww, p.velocity.0 * t, p.velocity.1 * t, frame);
    }
    out
}

fn noise_channel(p: &SynthParams, rng: &mut RunRng) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, p.noise_std)
        .map_err(|e| Error::Config(format!("noise std {}: {e}", p.noise_std)))?;
    Ok((0..p.frames * p.height * p.width).map(|_| normal.sample(rng)).collect())
}

/// Deterministic in `params.seed`.
pub fn generate(params: &SynthParams) -> Result<GridSeq> {
    let extents = GridExtents::new(params.frames, params.height, params.width, params.channels)?;
    if params.height < 8 || params.width < 8 {
        return Err(Error::Config(format!(
            "synthetic grids need at least 8 × 8 cells, got {} × {}",
            params.height, params.width
        )));
    }
    let mut values = vec![0.0f32; extents.len()];
    for c in 0..params.channels {
        let mut rng = rng::stream(params.seed, streams::SYNTH, c as u64);
        let channel = match params.kind {
            SynthKind::AdvectingBlobs => blobs_channel(params, &mut rng),
            SynthKind::TravelingWave => wave_channel(params, &mut rng),
            SynthKind::NoiseFloor => noise_channel(params, &mut rng)?,
        };
        for (i, v) in channel.into_iter().enumerate() {
            values[i * params.channels + c] = v as f32;
        }
    }
    GridSeq::new(extents, values)
}
