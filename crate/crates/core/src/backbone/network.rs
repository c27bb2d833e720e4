use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

use super::conv::{conv3x3, max_pool2x2, max_unpool2x2, relu_in_place, Kernel, Scalar};
use super::weights::{ConvLayer, LayerId, WeightBank};

/// Arithmetic used inside the network. Feature maps are always handed out as `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

/// One layer's activations, channel-major: `data[c * height * width + y * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{channels}x{height}x{width} feature map needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Number of spatial positions.
    pub fn positions(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn at(&self, c: usize, p: usize) -> f64 {
        self.data[c * self.positions() + p]
    }

    /// Activation vector (all channels) at flat position `p`.
    pub fn vector(&self, p: usize) -> Vec<f64> {
        let d = self.positions();
        (0..self.channels).map(|c| self.data[c * d + p]).collect()
    }

    pub fn add_scaled(&mut self, other: &FeatureMap, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Activations for a set of layers, in network order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStack {
    layers: Vec<(LayerId, FeatureMap)>,
}

impl FeatureStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: LayerId, map: FeatureMap) {
        match self.layers.binary_search_by_key(&layer, |(l, _)| *l) {
            Ok(i) => self.layers[i].1 = map,
            Err(i) => self.layers.insert(i, (layer, map)),
        }
    }

    pub fn get(&self, layer: LayerId) -> Option<&FeatureMap> {
        self.layers
            .binary_search_by_key(&layer, |(l, _)| *l)
            .ok()
            .map(|i| &self.layers[i].1)
    }

    pub fn get_mut(&mut self, layer: LayerId) -> Option<&mut FeatureMap> {
        self.layers
            .binary_search_by_key(&layer, |(l, _)| *l)
            .ok()
            .map(move |i| &mut self.layers[i].1)
    }

    pub fn require(&self, layer: LayerId) -> Result<&FeatureMap> {
        self.get(layer)
            .ok_or_else(|| Error::UnknownLayer(layer.to_string()))
    }

    /// Accumulates `scale * map` into `layer`, creating a zero map first if needed.
    pub fn accumulate(&mut self, layer: LayerId, map: &FeatureMap, scale: f64) {
        if self.get(layer).is_none() {
            self.insert(
                layer,
                FeatureMap::zeros(map.channels, map.height, map.width),
            );
        }
        self.get_mut(layer).unwrap().add_scaled(map, scale);
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerId> + '_ {
        self.layers.iter().map(|(l, _)| *l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LayerId, &FeatureMap)> {
        self.layers.iter().map(|(l, m)| (*l, m))
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Single-layer convolution on an `f64` map (same padding, stride 1).
pub fn conv2d(input: &FeatureMap, layer: &ConvLayer) -> Result<FeatureMap> {
    if input.channels != layer.in_channels {
        return Err(Error::Config(format!(
            "{} expects {} input channels, got {}",
            layer.name, layer.in_channels, input.channels
        )));
    }
    let kernel = Kernel::<f64>::from_f32(
        layer.out_channels,
        layer.in_channels,
        &layer.weights,
        &layer.bias,
    );
    let data = conv3x3(&input.data, input.height, input.width, &kernel);
    FeatureMap::new(layer.out_channels, input.height, input.width, data)
}

#[derive(Debug, Clone)]
enum Kernels {
    Single(Vec<Kernel<f32>>),
    Double(Vec<Kernel<f64>>),
}

/// VGG convolutional prefix evaluated on RGB images.
#[derive(Debug, Clone)]
pub struct Backbone {
    bank: WeightBank,
    kernels: Kernels,
}

impl Backbone {
    pub fn new(bank: WeightBank, precision: Precision) -> Self {
        let kernels = match precision {
            Precision::Single => Kernels::Single(prepare(&bank)),
            Precision::Double => Kernels::Double(prepare(&bank)),
        };
        Self { bank, kernels }
    }

    pub fn bank(&self) -> &WeightBank {
        &self.bank
    }

    pub fn precision(&self) -> Precision {
        match self.kernels {
            Kernels::Single(_) => Precision::Single,
            Kernels::Double(_) => Precision::Double,
        }
    }

    /// Post-ReLU activations at every layer in `wanted`.
    pub fn forward(&self, image: &Image, wanted: &[LayerId]) -> Result<FeatureStack> {
        Ok(self.forward_trace(image, wanted)?.features)
    }

    /// Forward pass that keeps what [`ForwardTrace::backward`] needs.
    pub fn forward_trace(&self, image: &Image, wanted: &[LayerId]) -> Result<ForwardTrace> {
        let plan = self.plan(image, wanted)?;
        let means = self.bank.means();
        match &self.kernels {
            Kernels::Single(k) => {
                let (features, t) = run_forward(k, &self.bank, image, means, &plan);
                Ok(ForwardTrace {
                    features,
                    inner: Trace::Single(t),
                    plan,
                })
            }
            Kernels::Double(k) => {
                let (features, t) = run_forward(k, &self.bank, image, means, &plan);
                Ok(ForwardTrace {
                    features,
                    inner: Trace::Double(t),
                    plan,
                })
            }
        }
    }

    /// Gradient of a loss with respect to the image, given its gradients at layers.
    pub fn backward(&self, image: &Image, grads: &FeatureStack) -> Result<Image> {
        let wanted: Vec<LayerId> = grads.layers().collect();
        self.forward_trace(image, &wanted)?.backward(self, grads)
    }

    fn plan(&self, image: &Image, wanted: &[LayerId]) -> Result<Plan> {
        if image.pixel_count() == 0 {
            return Err(Error::Config("empty image".into()));
        }
        let mut last = None;
        for &layer in wanted {
            let pos = self
                .bank
                .position(layer)
                .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
            let (w, h) = layer.grid_size(image.width(), image.height());
            if w < 3 || h < 3 {
                return Err(Error::ImageTooSmall {
                    width: image.width(),
                    height: image.height(),
                    layer: layer.to_string(),
                });
            }
            last = Some(last.map_or(pos, |l: usize| l.max(pos)));
        }
        let mut wanted = wanted.to_vec();
        wanted.sort();
        wanted.dedup();
        Ok(Plan {
            width: image.width(),
            height: image.height(),
            last,
            wanted,
        })
    }
}

fn prepare<T: Scalar>(bank: &WeightBank) -> Vec<Kernel<T>> {
    bank.layers()
        .iter()
        .map(|l| Kernel::from_f32(l.out_channels, l.in_channels, &l.weights, &l.bias))
        .collect()
}

#[derive(Debug, Clone)]
struct Plan {
    width: usize,
    height: usize,
    /// Index of the deepest layer to evaluate; `None` when nothing is wanted.
    last: Option<usize>,
    wanted: Vec<LayerId>,
}

#[derive(Debug, Clone)]
struct TraceData<T> {
    /// Post-ReLU output of every evaluated layer.
    outputs: Vec<Vec<T>>,
    /// Pooling argmax taken right before layer `i` (only where a pool exists).
    pools: Vec<Option<Vec<u32>>>,
    /// `(height, width)` at every evaluated layer.
    dims: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
enum Trace {
    Single(TraceData<f32>),
    Double(TraceData<f64>),
}

/// Result of a forward pass plus the ReLU gates and pooling winners needed to
/// back-propagate through it.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    features: FeatureStack,
    inner: Trace,
    plan: Plan,
}

impl ForwardTrace {
    pub fn features(&self) -> &FeatureStack {
        &self.features
    }

    pub fn into_features(self) -> FeatureStack {
        self.features
    }

    /// `dLoss/dImage` for a loss whose gradients at layers are `grads`.
    pub fn backward(&self, backbone: &Backbone, grads: &FeatureStack) -> Result<Image> {
        for (layer, g) in grads.iter() {
            let act = self.features.get(layer).ok_or_else(|| {
                Error::Shape(format!(
                    "gradient given for {layer}, which was not computed"
                ))
            })?;
            if !act.same_shape(g) {
                return Err(Error::Shape(format!(
                    "gradient at {layer} is {}x{}x{}, activation is {}x{}x{}",
                    g.channels, g.height, g.width, act.channels, act.height, act.width
                )));
            }
        }
        let data = match (&self.inner, &backbone.kernels) {
            (Trace::Single(t), Kernels::Single(k)) => {
                run_backward(k, &backbone.bank, t, &self.plan, grads)
            }
            (Trace::Double(t), Kernels::Double(k)) => {
                run_backward(k, &backbone.bank, t, &self.plan, grads)
            }
            _ => return Err(Error::Config("trace and backbone precision differ".into())),
        };
        Image::from_planar(self.plan.width, self.plan.height, data)
    }
}

fn run_forward<T: Scalar>(
    kernels: &[Kernel<T>],
    bank: &WeightBank,
    image: &Image,
    means: [f32; 3],
    plan: &Plan,
) -> (FeatureStack, TraceData<T>) {
    let mut features = FeatureStack::new();
    let mut trace = TraceData {
        outputs: Vec::new(),
        pools: Vec::new(),
        dims: Vec::new(),
    };
    let Some(last) = plan.last else {
        return (features, trace);
    };
    let (mut h, mut w) = (plan.height, plan.width);
    let plane = h * w;
    let scale = T::of_f64(255.0);
    let mut x: Vec<T> = (0..CHANNELS)
        .flat_map(|c| {
            let mean = T::of_f32(means[c]);
            image
                .plane(c)
                .iter()
                .map(move |&v| T::of_f64(v) * scale - mean)
        })
        .collect();
    debug_assert_eq!(x.len(), CHANNELS * plane);

    let layers = bank.layers();
    for i in 0..=last {
        let pool = if i > 0 && layers[i].name.block() != layers[i - 1].name.block() {
            let (pooled, arg) = max_pool2x2(&x, layers[i].in_channels, h, w);
            h /= 2;
            w /= 2;
            x = pooled;
            Some(arg)
        } else {
            None
        };
        let mut y = conv3x3(&x, h, w, &kernels[i]);
        relu_in_place(&mut y);
        if plan.wanted.binary_search(&layers[i].name).is_ok() {
            let data = y.iter().map(|v| v.as_f64()).collect();
            features.insert(
                layers[i].name,
                FeatureMap {
                    channels: layers[i].out_channels,
                    height: h,
                    width: w,
                    data,
                },
            );
        }
        trace.pools.push(pool);
        trace.dims.push((h, w));
        trace.outputs.push(y.clone());
        x = y;
    }
    (features, trace)
}

fn run_backward<T: Scalar>(
    kernels: &[Kernel<T>],
    bank: &WeightBank,
    trace: &TraceData<T>,
    plan: &Plan,
    grads: &FeatureStack,
) -> Vec<f64> {
    let plane = plan.width * plan.height;
    let Some(last) = plan.last else {
        return vec![0.0; CHANNELS * plane];
    };
    let layers = bank.layers();
    let (h, w) = trace.dims[last];
    let mut g = vec![T::zero(); layers[last].out_channels * h * w];
    for i in (0..=last).rev() {
        if let Some(extra) = grads.get(layers[i].name) {
            for (a, b) in g.iter_mut().zip(&extra.data) {
                *a = *a + T::of_f64(*b);
            }
        }
        for (gv, out) in g.iter_mut().zip(&trace.outputs[i]) {
            if !(*out > T::zero()) {
                *gv = T::zero();
            }
        }
        let (h, w) = trace.dims[i];
        g = conv3x3(&g, h, w, &kernels[i].transposed());
        if let Some(arg) = &trace.pools[i] {
            let (ph, pw) = trace.dims[i - 1];
            g = max_unpool2x2(&g, arg, layers[i].in_channels, ph, pw);
        }
    }
    // undo the x * 255 - mean preprocessing
    g.iter().map(|v| v.as_f64() * 255.0).collect()
}
