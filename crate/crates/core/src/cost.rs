//! Static parameter and FLOP accounting for layer graphs.
//!
//! Convention: one multiply-accumulate is two FLOPs. Bias adds and
//! element-wise layers (`relu`, `leaky_relu`, `add`) cost one FLOP per output
//! element. `concat` and `pixel_shuffle` only move data and are free.
//!
//! Shapes are `(H, W, C)`. The input's frame axis is folded into channels, so
//! a `36x36x1x3` input enters the first layer as `36x36x3`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::SearchSpace;

pub const FLOP_CONVENTION: &str =
    "1 MAC = 2 FLOPs; bias adds and element-wise activations/adds counted (1 per output element); concat and pixel_shuffle free";

/// Id under which graph nodes refer to the graph input.
pub const INPUT_ID: &str = "input";

#[derive(Debug, Error)]
pub enum CostError {
    #[error("layer `{id}`: expected {expected} input channels, got {got}")]
    ChannelMismatch { id: String, expected: u64, got: u64 },
    #[error("layer `{id}`: output would be empty")]
    NonPositiveOutput { id: String },
    #[error("layer `{id}`: input shapes disagree")]
    ShapeMismatch { id: String },
    #[error("layer `{id}`: input `{input}` is not defined before it")]
    DanglingInput { id: String, input: String },
    #[error("layer id `{0}` is used twice")]
    DuplicateId(String),
    #[error("layer id `{INPUT_ID}` is reserved for the graph input")]
    ReservedId,
    #[error("layer `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error("graph has no layers")]
    Empty,
    #[error("input shape must be positive")]
    BadInputShape,
    #[error("scale must be a power of two >= 2, got {0}")]
    InvalidScale(u32),
    #[error("{name} = {value} is outside its domain")]
    OutOfDomain { name: &'static str, value: u32 },
    #[error("malformed graph: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Output is `ceil(in / stride)`.
    Same,
    /// Output is `floor((in - k) / stride) + 1`.
    Valid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conv2d {
    pub in_channels: u64,
    pub out_channels: u64,
    pub kernel_h: u64,
    pub kernel_w: u64,
    #[serde(default = "one")]
    pub stride: u64,
    #[serde(default = "same")]
    pub padding: Padding,
    #[serde(default = "yes")]
    pub has_bias: bool,
}

fn one() -> u64 {
    1
}

fn same() -> Padding {
    Padding::Same
}

fn yes() -> bool {
    true
}

impl Conv2d {
    /// Square, stride-1, same-padded conv with bias.
    pub fn square(in_channels: u64, out_channels: u64, kernel: u64) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride: 1,
            padding: Padding::Same,
            has_bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d(Conv2d),
    Relu,
    LeakyRelu,
    Add,
    Concat,
    PixelShuffle { factor: u64 },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d(_) => "conv2d",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu => "leaky_relu",
            LayerSpec::Add => "add",
            LayerSpec::Concat => "concat",
            LayerSpec::PixelShuffle { .. } => "pixel_shuffle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub h: u64,
    pub w: u64,
    pub c: u64,
}

impl Shape {
    pub fn new(h: u64, w: u64, c: u64) -> Self {
        Self { h, w, c }
    }

    pub fn elements(&self) -> u64 {
        self.h * self.w * self.c
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputShape {
    pub height: u64,
    pub width: u64,
    pub channels: u64,
    pub frames: u64,
}

impl InputShape {
    pub fn new(height: u64, width: u64, channels: u64, frames: u64) -> Self {
        Self {
            height,
            width,
            channels,
            frames,
        }
    }

    /// Shape seen by the first layer: frames folded into channels.
    pub fn folded(&self) -> Shape {
        Shape::new(self.height, self.width, self.channels * self.frames)
    }
}

impl std::str::FromStr for InputShape {
    type Err = String;

    /// Parses `HxWxCxF` (frames default to 1 when omitted).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<u64> = s
            .split(['x', 'X'])
            .map(|p| p.trim().parse::<u64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("bad input shape `{s}` (expected HxWxCxF)"))?;
        match parts[..] {
            [h, w, c, f] => Ok(Self::new(h, w, c, f)),
            [h, w, c] => Ok(Self::new(h, w, c, 1)),
            _ => Err(format!("bad input shape `{s}` (expected HxWxCxF)")),
        }
    }
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}x{}", self.height, self.width, self.channels, self.frames)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub layer: LayerSpec,
    pub inputs: Vec<String>,
}

impl Node {
    pub fn new(id: impl Into<String>, layer: LayerSpec, inputs: &[&str]) -> Self {
        Self {
            id: id.into(),
            layer,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Assumptions behind a generated architecture, carried into its report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchAssumptions {
    pub kernel_size: u64,
    pub res_block: String,
    pub upsample: String,
    pub activation: String,
    pub has_bias: bool,
    pub ofr_net_included: bool,
    pub scale: u32,
}

/// Ordered layer graph; every input refers to `input` or an earlier node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct ArchitectureGraph {
    input: InputShape,
    nodes: Vec<Node>,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    assumptions: Option<ArchAssumptions>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    input: InputShape,
    nodes: Vec<Node>,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    assumptions: Option<ArchAssumptions>,
}

impl TryFrom<RawGraph> for ArchitectureGraph {
    type Error = CostError;

    fn try_from(raw: RawGraph) -> Result<Self, CostError> {
        let g = ArchitectureGraph::new(raw.input, raw.nodes)?;
        Ok(Self {
            label: raw.label,
            assumptions: raw.assumptions,
            ..g
        })
    }
}

impl ArchitectureGraph {
    /// Validates ids, ordering and shapes.
    pub fn new(input: InputShape, nodes: Vec<Node>) -> Result<Self, CostError> {
        let g = Self {
            input,
            nodes,
            label: None,
            assumptions: None,
        };
        g.shapes()?;
        Ok(g)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_assumptions(mut self, a: ArchAssumptions) -> Self {
        self.assumptions = Some(a);
        self
    }

    pub fn from_json_str(s: &str) -> Result<Self, CostError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn assumptions(&self) -> Option<&ArchAssumptions> {
        self.assumptions.as_ref()
    }

    /// Output shape of every node, in order.
    fn shapes(&self) -> Result<Vec<Shape>, CostError> {
        let i = self.input;
        if i.height == 0 || i.width == 0 || i.channels == 0 || i.frames == 0 {
            return Err(CostError::BadInputShape);
        }
        if self.nodes.is_empty() {
            return Err(CostError::Empty);
        }
        let mut known: HashMap<&str, Shape> = HashMap::new();
        known.insert(INPUT_ID, i.folded());
        let mut out = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            if node.id == INPUT_ID {
                return Err(CostError::ReservedId);
            }
            if known.contains_key(node.id.as_str()) {
                return Err(CostError::DuplicateId(node.id.clone()));
            }
            let ins = node
                .inputs
                .iter()
                .map(|name| {
                    known.get(name.as_str()).copied().ok_or_else(|| CostError::DanglingInput {
                        id: node.id.clone(),
                        input: name.clone(),
                    })
                })
                .collect::<Result<Vec<Shape>, _>>()?;
            let shape = layer_cost(&node.id, &node.layer, &ins)?.2;
            known.insert(&node.id, shape);
            out.push(shape);
        }
        Ok(out)
    }
}

fn invalid(id: &str, message: impl Into<String>) -> CostError {
    CostError::Invalid {
        id: id.to_string(),
        message: message.into(),
    }
}

fn single(id: &str, ins: &[Shape]) -> Result<Shape, CostError> {
    match ins {
        [s] => Ok(*s),
        _ => Err(invalid(id, format!("takes exactly one input, got {}", ins.len()))),
    }
}

fn conv_out(len: u64, k: u64, stride: u64, padding: Padding) -> u64 {
    match padding {
        Padding::Same => len.div_ceil(stride),
        Padding::Valid if len >= k => (len - k) / stride + 1,
        Padding::Valid => 0,
    }
}

/// `(params, flops, out_shape)` of one conv applied to `in_shape`.
pub fn conv2d_cost(conv: &Conv2d, in_shape: Shape) -> Result<(u64, u64, Shape), CostError> {
    conv_cost("conv2d", conv, in_shape)
}

fn conv_cost(id: &str, conv: &Conv2d, s: Shape) -> Result<(u64, u64, Shape), CostError> {
    if conv.in_channels == 0
        || conv.out_channels == 0
        || conv.kernel_h == 0
        || conv.kernel_w == 0
        || conv.stride == 0
    {
        return Err(invalid(id, "conv counts must be positive"));
    }
    if s.c != conv.in_channels {
        return Err(CostError::ChannelMismatch {
            id: id.to_string(),
            expected: conv.in_channels,
            got: s.c,
        });
    }
    let out = Shape::new(
        conv_out(s.h, conv.kernel_h, conv.stride, conv.padding),
        conv_out(s.w, conv.kernel_w, conv.stride, conv.padding),
        conv.out_channels,
    );
    if out.h == 0 || out.w == 0 {
        return Err(CostError::NonPositiveOutput { id: id.to_string() });
    }
    let fan_in = conv.in_channels * conv.kernel_h * conv.kernel_w;
    let bias = if conv.has_bias { conv.out_channels } else { 0 };
    let params = conv.out_channels * fan_in + bias;
    let macs = out.elements() * fan_in;
    let flops = 2 * macs + if conv.has_bias { out.elements() } else { 0 };
    Ok((params, flops, out))
}

fn layer_cost(id: &str, layer: &LayerSpec, ins: &[Shape]) -> Result<(u64, u64, Shape), CostError> {
    match layer {
        LayerSpec::Conv2d(conv) => conv_cost(id, conv, single(id, ins)?),
        LayerSpec::Relu | LayerSpec::LeakyRelu => {
            let s = single(id, ins)?;
            Ok((0, s.elements(), s))
        }
        LayerSpec::Add => {
            if ins.len() < 2 {
                return Err(invalid(id, "add takes at least two inputs"));
            }
            if ins.iter().any(|s| *s != ins[0]) {
                return Err(CostError::ShapeMismatch { id: id.to_string() });
            }
            Ok((0, ins[0].elements(), ins[0]))
        }
        LayerSpec::Concat => {
            if ins.len() < 2 {
                return Err(invalid(id, "concat takes at least two inputs"));
            }
            if ins.iter().any(|s| s.h != ins[0].h || s.w != ins[0].w) {
                return Err(CostError::ShapeMismatch { id: id.to_string() });
            }
            let c = ins.iter().map(|s| s.c).sum();
            Ok((0, 0, Shape::new(ins[0].h, ins[0].w, c)))
        }
        LayerSpec::PixelShuffle { factor } => {
            let s = single(id, ins)?;
            let f = *factor;
            if f == 0 {
                return Err(invalid(id, "factor must be positive"));
            }
            if s.c % (f * f) != 0 {
                return Err(invalid(
                    id,
                    format!("{} channels not divisible by factor^2 = {}", s.c, f * f),
                ));
            }
            Ok((0, 0, Shape::new(s.h * f, s.w * f, s.c / (f * f))))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub id: String,
    pub kind: String,
    pub params: u64,
    pub flops: u64,
    pub out_shape: Shape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub convention: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub assumptions: Option<ArchAssumptions>,
    pub input: InputShape,
    pub total_params: u64,
    pub total_flops: u64,
    pub per_layer: Vec<LayerCost>,
}

impl CostReport {
    /// Parameters in millions.
    pub fn params_m(&self) -> f64 {
        self.total_params as f64 / 1e6
    }

    /// FLOPs in units of 10^9.
    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn graph_cost(graph: &ArchitectureGraph) -> CostReport {
    let shapes = graph.shapes().expect("graph validated at construction");
    let mut by_id: HashMap<&str, Shape> = HashMap::new();
    by_id.insert(INPUT_ID, graph.input.folded());
    let mut per_layer = Vec::with_capacity(graph.nodes.len());
    for (node, shape) in graph.nodes.iter().zip(shapes) {
        let ins: Vec<Shape> = node.inputs.iter().map(|n| by_id[n.as_str()]).collect();
        let (params, flops, out) =
            layer_cost(&node.id, &node.layer, &ins).expect("graph validated at construction");
        debug_assert_eq!(out, shape);
        by_id.insert(&node.id, out);
        per_layer.push(LayerCost {
            id: node.id.clone(),
            kind: node.layer.kind().to_string(),
            params,
            flops,
            out_shape: out,
        });
    }
    CostReport {
        label: graph.label.clone(),
        convention: FLOP_CONVENTION.to_string(),
        assumptions: graph.assumptions.clone(),
        input: graph.input,
        total_params: per_layer.iter().map(|l| l.params).sum(),
        total_flops: per_layer.iter().map(|l| l.flops).sum(),
        per_layer,
    }
}

/// Standard input of the search: 36x36 luminance patches, 3 frames.
pub fn default_input() -> InputShape {
    InputShape::new(36, 36, 1, 3)
}

pub fn hofvsr_assumptions(scale: u32) -> ArchAssumptions {
    ArchAssumptions {
        kernel_size: 3,
        res_block: "conv3x3 -> leaky_relu -> conv3x3 -> add(skip)".into(),
        upsample: "log2(scale) stages of conv3x3 (up_channels*4) -> pixel_shuffle(2) -> leaky_relu".into(),
        activation: "leaky_relu".into(),
        has_bias: true,
        ofr_net_included: false,
        scale,
    }
}

/// Builds a member of the searched super-resolution family.
///
/// Entry conv (frames*channels -> res_channels), `n_res` residual blocks,
/// `log2(scale)` x2 upsampling stages and an exit conv to one channel.
pub fn hofvsr_graph(
    res_channels: u32,
    n_res: u32,
    up_channels: u32,
    scale: u32,
    input: InputShape,
) -> Result<ArchitectureGraph, CostError> {
    let space = SearchSpace::hofvsr();
    for (name, value) in [
        ("res_channels", res_channels),
        ("n_res", n_res),
        ("up_channels", up_channels),
    ] {
        let ok = space
            .domain(name)
            .is_some_and(|d| d.index_of(value as i64).is_some());
        if !ok {
            return Err(CostError::OutOfDomain { name, value });
        }
    }
    if scale < 2 || !scale.is_power_of_two() {
        return Err(CostError::InvalidScale(scale));
    }

    let (res, up) = (res_channels as u64, up_channels as u64);
    let conv = |i, o| LayerSpec::Conv2d(Conv2d::square(i, o, 3));
    let mut nodes = vec![Node::new("entry", conv(input.folded().c, res), &[INPUT_ID])];
    let mut prev = "entry".to_string();
    for b in 0..n_res {
        let names = [
            format!("res{b}.conv1"),
            format!("res{b}.act"),
            format!("res{b}.conv2"),
            format!("res{b}.add"),
        ];
        nodes.push(Node::new(&names[0], conv(res, res), &[&prev]));
        nodes.push(Node::new(&names[1], LayerSpec::LeakyRelu, &[&names[0]]));
        nodes.push(Node::new(&names[2], conv(res, res), &[&names[1]]));
        nodes.push(Node::new(&names[3], LayerSpec::Add, &[&names[2], &prev]));
        prev = names[3].clone();
    }
    let mut channels = res;
    for s in 0..scale.trailing_zeros() {
        let names = [
            format!("up{s}.conv"),
            format!("up{s}.shuffle"),
            format!("up{s}.act"),
        ];
        nodes.push(Node::new(&names[0], conv(channels, up * 4), &[&prev]));
        nodes.push(Node::new(&names[1], LayerSpec::PixelShuffle { factor: 2 }, &[&names[0]]));
        nodes.push(Node::new(&names[2], LayerSpec::LeakyRelu, &[&names[1]]));
        prev = names[2].clone();
        channels = up;
    }
    nodes.push(Node::new("exit", conv(channels, 1), &[&prev]));

    Ok(ArchitectureGraph::new(input, nodes)?
        .with_label(format!("HO-FVSR {{{res_channels},{n_res},{up_channels}}}"))
        .with_assumptions(hofvsr_assumptions(scale)))
}
