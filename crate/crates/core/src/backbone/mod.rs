//! VGG-19 convolutional prefix: weights, forward activations, and input gradients.

mod conv;
mod network;
mod weights;

pub use network::{conv2d, Backbone, FeatureMap, FeatureStack, ForwardTrace, Precision};
pub use weights::{ConvLayer, LayerId, WeightBank, IMAGENET_MEANS, MAGIC, VERSION};
