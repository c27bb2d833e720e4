//! Convolution weight banks and the `NPHW` portable weight file.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NPHW"  u32 version=1  f32 mean[3]  u32 layer_count
//! per layer:
//!   u16 name_len  name (UTF-8)
//!   u32 out_channels  u32 in_channels  u32 kernel_h  u32 kernel_w
//!   f32 weights[out * in * kh * kw]   (row-major: out, in, kh, kw)
//!   f32 bias[out]
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NPHW";
pub const VERSION: u32 = 1;

/// Per-channel RGB means (0-255 scale) of the usual ImageNet preprocessing.
pub const IMAGENET_MEANS: [f32; 3] = [123.68, 116.779, 103.939];

/// Number of conv layers per block in VGG-19, up to and including `conv5_1`.
const VGG19_BLOCK_SIZES: [u8; 5] = [2, 2, 4, 4, 1];

/// A VGG convolution layer name, `conv{block}_{index}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LayerId {
    block: u8,
    index: u8,
}

impl LayerId {
    pub const fn new(block: u8, index: u8) -> Self {
        Self { block, index }
    }

    pub fn block(self) -> u8 {
        self.block
    }

    pub fn index(self) -> u8 {
        self.index
    }

    /// Number of 2x2 poolings applied before this layer.
    pub fn pool_level(self) -> u32 {
        u32::from(self.block) - 1
    }

    /// Edge length, in input pixels, of one activation cell at this layer.
    pub fn cell_size(self) -> usize {
        1 << self.pool_level()
    }

    /// Spatial size of this layer's activations for a `width x height` input.
    pub fn grid_size(self, width: usize, height: usize) -> (usize, usize) {
        let mut w = width;
        let mut h = height;
        for _ in 0..self.pool_level() {
            w /= 2;
            h /= 2;
        }
        (w, h)
    }

    /// The VGG-19 prefix through `conv5_1`, in network order.
    pub fn vgg19() -> Vec<LayerId> {
        VGG19_BLOCK_SIZES
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| (1..=n).map(move |i| LayerId::new(b as u8 + 1, i)))
            .collect()
    }
}

impl fmt::Display for LayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conv{}_{}", self.block, self.index)
    }
}

impl FromStr for LayerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownLayer(s.to_string());
        let rest = s.strip_prefix("conv").ok_or_else(bad)?;
        let (b, i) = rest.split_once('_').ok_or_else(bad)?;
        let block: u8 = b.parse().map_err(|_| bad())?;
        let index: u8 = i.parse().map_err(|_| bad())?;
        if !(1..=5).contains(&block) || index == 0 || index > VGG19_BLOCK_SIZES[block as usize - 1]
        {
            return Err(bad());
        }
        Ok(LayerId { block, index })
    }
}

impl serde::Serialize for LayerId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for LayerId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub name: LayerId,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    /// Row-major `[out][in][kh][kw]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    fn check(&self, offset: u64) -> Result<()> {
        let fail = |message: String| Error::LayerInvariant {
            layer: self.name.to_string(),
            offset,
            message,
        };
        if self.kernel_h != 3 || self.kernel_w != 3 {
            return Err(fail(format!(
                "kernel must be 3x3, found {}x{}",
                self.kernel_h, self.kernel_w
            )));
        }
        let expected = self.out_channels * self.in_channels * self.kernel_h * self.kernel_w;
        if self.weights.len() != expected {
            return Err(fail(format!(
                "weights length {} != out*in*kh*kw = {expected}",
                self.weights.len()
            )));
        }
        if self.bias.len() != self.out_channels {
            return Err(fail(format!(
                "bias length {} != out_channels {}",
                self.bias.len(),
                self.out_channels
            )));
        }
        if self.out_channels == 0 || self.in_channels == 0 {
            return Err(fail("zero channel count".into()));
        }
        Ok(())
    }
}

/// Ordered VGG-style convolution prefix. Max pooling sits between consecutive
/// layers whose block numbers differ.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBank {
    means: [f32; 3],
    layers: Vec<ConvLayer>,
}

impl WeightBank {
    pub fn new(means: [f32; 3], layers: Vec<ConvLayer>) -> Result<Self> {
        for layer in &layers {
            layer.check(0)?;
        }
        check_order(&layers, |_| 0)?;
        Ok(Self { means, layers })
    }

    pub fn means(&self) -> [f32; 3] {
        self.means
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layer_names(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.iter().map(|l| l.name)
    }

    pub fn position(&self, name: LayerId) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: LayerId) -> Option<&ConvLayer> {
        self.layers.iter().find(|l| l.name == name)
    }

    /// Randomly initialized bank (He-normal weights, small biases) for tests and
    /// demos. `layout` lists `(layer, out_channels)` in network order.
    pub fn random(layout: &[(LayerId, usize)], means: [f32; 3], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut in_channels = 3;
        let mut layers = Vec::with_capacity(layout.len());
        for &(name, out_channels) in layout {
            let fan_in = (in_channels * 9) as f64;
            let he = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            let weights = (0..out_channels * in_channels * 9)
                .map(|_| he.sample(&mut rng) as f32)
                .collect();
            let bias = (0..out_channels)
                .map(|_| rng.random_range(-0.1..0.1f32))
                .collect();
            layers.push(ConvLayer {
                name,
                out_channels,
                in_channels,
                kernel_h: 3,
                kernel_w: 3,
                weights,
                bias,
            });
            in_channels = out_channels;
        }
        Self::new(means, layers)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for m in self.means {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            let name = layer.name.to_string();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            for dim in [
                layer.out_channels,
                layer.in_channels,
                layer.kernel_h,
                layer.kernel_w,
            ] {
                out.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for w in &layer.weights {
                out.extend_from_slice(&w.to_le_bytes());
            }
            for b in &layer.bias {
                out.extend_from_slice(&b.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"NPHW\""),
            });
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let means = [r.f32("mean")?, r.f32("mean")?, r.f32("mean")?];
        let count = r.u32("layer count")? as usize;
        let mut layers = Vec::with_capacity(count.min(64));
        let mut offsets = Vec::with_capacity(count.min(64));
        for _ in 0..count {
            let start = r.pos as u64;
            let name_len = r.u16("layer name length")? as usize;
            let raw = r.take(name_len, "layer name")?;
            let text = std::str::from_utf8(raw).map_err(|_| Error::Format {
                offset: start + 2,
                message: "layer name is not UTF-8".into(),
            })?;
            let name: LayerId = text.parse().map_err(|_| Error::LayerInvariant {
                layer: text.to_string(),
                offset: start,
                message: "not a VGG-19 layer name through conv5_1".into(),
            })?;
            let ctx = |what: &str| format!("{what} of layer {text}");
            let out_channels = r.u32(&ctx("out_channels"))? as usize;
            let in_channels = r.u32(&ctx("in_channels"))? as usize;
            let kernel_h = r.u32(&ctx("kernel_h"))? as usize;
            let kernel_w = r.u32(&ctx("kernel_w"))? as usize;
            if kernel_h != 3 || kernel_w != 3 {
                return Err(Error::LayerInvariant {
                    layer: text.to_string(),
                    offset: start,
                    message: format!("kernel must be 3x3, found {kernel_h}x{kernel_w}"),
                });
            }
            let n_weights = out_channels
                .checked_mul(in_channels)
                .and_then(|n| n.checked_mul(kernel_h * kernel_w))
                .ok_or_else(|| Error::LayerInvariant {
                    layer: text.to_string(),
                    offset: start,
                    message: "weight count overflows".into(),
                })?;
            let weights = r.f32_vec(n_weights, &ctx("weights"))?;
            let bias = r.f32_vec(out_channels, &ctx("bias"))?;
            let layer = ConvLayer {
                name,
                out_channels,
                in_channels,
                kernel_h,
                kernel_w,
                weights,
                bias,
            };
            layer.check(start)?;
            layers.push(layer);
            offsets.push(start);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format {
                offset: r.pos as u64,
                message: format!("{} trailing bytes after last layer", bytes.len() - r.pos),
            });
        }
        check_order(&layers, |i| offsets[i])?;
        Ok(Self { means, layers })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn check_order(layers: &[ConvLayer], offset_of: impl Fn(usize) -> u64) -> Result<()> {
    let mut prev: Option<&ConvLayer> = None;
    for (i, layer) in layers.iter().enumerate() {
        let fail = |message: String| Error::LayerInvariant {
            layer: layer.name.to_string(),
            offset: offset_of(i),
            message,
        };
        match prev {
            None => {
                if layer.name != LayerId::new(1, 1) {
                    return Err(fail("first layer must be conv1_1".into()));
                }
                if layer.in_channels != 3 {
                    return Err(fail(format!(
                        "first layer must take 3 input channels, found {}",
                        layer.in_channels
                    )));
                }
            }
            Some(p) => {
                let next_in_block = LayerId::new(p.name.block, p.name.index + 1);
                let next_block = LayerId::new(p.name.block + 1, 1);
                if layer.name != next_in_block && layer.name != next_block {
                    return Err(fail(format!("out of VGG order after {}", p.name)));
                }
                if layer.in_channels != p.out_channels {
                    return Err(fail(format!(
                        "in_channels {} != previous out_channels {}",
                        layer.in_channels, p.out_channels
                    )));
                }
            }
        }
        prev = Some(layer);
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated payload reading {what} ({n} bytes needed, {} left)",
                    self.bytes.len() - self.pos
                ),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(n.saturating_mul(4), what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}
