use std::fmt;
use std::str::FromStr;

use super::NetError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    SegNet,
    SegNetLite,
}

impl Architecture {
    pub fn code(self) -> u8 {
        match self {
            Architecture::SegNet => 0,
            Architecture::SegNetLite => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Architecture::SegNet),
            1 => Some(Architecture::SegNetLite),
            _ => None,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::SegNet => "segnet",
            Architecture::SegNetLite => "segnet-lite",
        })
    }
}

impl FromStr for Architecture {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "segnet" => Ok(Architecture::SegNet),
            "segnet-lite" | "segnetlite" => Ok(Architecture::SegNetLite),
            other => Err(NetError::InvalidSpec(format!("unknown architecture '{other}'"))),
        }
    }
}

/// One encoder block: `convs` conv-BN-ReLU layers producing `channels`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockSpec {
    pub convs: usize,
    pub channels: usize,
}

/// One 3x3 convolution of the unrolled network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// False only for the final classifier convolution.
    pub bn_relu: bool,
}

/// Scalar counts by parameter kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParameterCounts {
    pub kernel: usize,
    pub bias: usize,
    pub batch_norm: usize,
}

impl ParameterCounts {
    pub fn total(&self) -> usize {
        self.kernel + self.bias + self.batch_norm
    }
}

/// Encoder-decoder layout. The decoder mirrors the encoder: block channel
/// sequence reversed, each block's last convolution stepping down to the
/// next block's width, the very last one mapping to `num_classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    pub in_channels: usize,
    pub num_classes: usize,
    pub blocks: Vec<BlockSpec>,
}

pub const SEGNET_BLOCKS: [(usize, usize); 5] = [(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)];
pub const SEGNET_LITE_BLOCKS: [(usize, usize); 5] = [(2, 16), (2, 32), (2, 64), (2, 128), (2, 128)];

impl NetworkSpec {
    pub fn new(architecture: Architecture, in_channels: usize, num_classes: usize) -> Result<Self, NetError> {
        if ![1, 3, 4].contains(&in_channels) {
            return Err(NetError::InvalidSpec(format!("unsupported input channel count {in_channels} (expected 1, 3 or 4)")));
        }
        if num_classes < 2 || num_classes > u8::MAX as usize {
            return Err(NetError::InvalidSpec(format!("num_classes must be in 2..=255, got {num_classes}")));
        }
        let table = match architecture {
            Architecture::SegNet => SEGNET_BLOCKS,
            Architecture::SegNetLite => SEGNET_LITE_BLOCKS,
        };
        let blocks = table.iter().map(|&(convs, channels)| BlockSpec { convs, channels }).collect();
        Ok(Self { architecture, in_channels, num_classes, blocks })
    }

    /// Spatial divisor of the input: every encoder block halves H and W.
    pub fn downsampling(&self) -> usize {
        1 << self.blocks.len()
    }

    pub fn encoder_layers(&self) -> Vec<Vec<ConvLayerSpec>> {
        let mut prev = self.in_channels;
        self.blocks
            .iter()
            .map(|b| {
                (0..b.convs)
                    .map(|_| {
                        let l = ConvLayerSpec { in_channels: prev, out_channels: b.channels, bn_relu: true };
                        prev = b.channels;
                        l
                    })
                    .collect()
            })
            .collect()
    }

    /// Decoder blocks in execution order (deepest first).
    pub fn decoder_layers(&self) -> Vec<Vec<ConvLayerSpec>> {
        let rev: Vec<&BlockSpec> = self.blocks.iter().rev().collect();
        rev.iter()
            .enumerate()
            .map(|(bi, b)| {
                let next = rev.get(bi + 1).map(|n| n.channels);
                (0..b.convs)
                    .map(|j| {
                        let last = j + 1 == b.convs;
                        match (last, next) {
                            (false, _) => ConvLayerSpec { in_channels: b.channels, out_channels: b.channels, bn_relu: true },
                            (true, Some(n)) => ConvLayerSpec { in_channels: b.channels, out_channels: n, bn_relu: true },
                            (true, None) => ConvLayerSpec { in_channels: b.channels, out_channels: self.num_classes, bn_relu: false },
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// All convolutions in forward order.
    pub fn layers(&self) -> Vec<ConvLayerSpec> {
        self.encoder_layers().into_iter().chain(self.decoder_layers()).flatten().collect()
    }

    pub fn parameter_counts(&self) -> ParameterCounts {
        self.layers().iter().fold(ParameterCounts { kernel: 0, bias: 0, batch_norm: 0 }, |mut acc, l| {
            acc.kernel += l.in_channels * l.out_channels * 9;
            acc.bias += l.out_channels;
            if l.bn_relu {
                acc.batch_norm += 2 * l.out_channels;
            }
            acc
        })
    }
}
