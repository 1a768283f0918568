//! Architecture graphs with grouped, searchable channel widths.
//!
//! A network is an ordered list of layers. Each layer writes its output into
//! a named *width group*; all layers writing to the same group share one
//! searchable channel count. Two group names are reserved: `"input"` (the
//! fixed network input, never produced by a layer) and `"output"` (the
//! classifier logits, produced only by the final layer, never searched).
//!
//! FLOPs here count multiply-accumulates only; bias adds and activations are
//! free. This keeps the per-layer cost an exact product of channel counts,
//! spatial size and kernel area, which in turn makes the per-group cost
//! slope (`sensitivity`) an exact finite difference of `network_flops`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved group name for the fixed network input.
pub const INPUT_GROUP: &str = "input";
/// Reserved group name for the classifier output (width = num_classes).
pub const OUTPUT_GROUP: &str = "output";

/// Layer operator kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Dense,
}

/// One layer of the target network.
///
/// `id` is the 1-based position assigned when the graph is built; it is not
/// part of the serialized form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(skip)]
    pub id: usize,
    pub kind: LayerKind,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub max_width: usize,
    pub width_group: String,
    pub input_group: String,
}

impl LayerSpec {
    pub fn conv(
        out_h: usize,
        out_w: usize,
        kernel: usize,
        max_width: usize,
        width_group: &str,
        input_group: &str,
    ) -> Self {
        LayerSpec {
            id: 0,
            kind: LayerKind::Conv,
            out_h,
            out_w,
            kernel,
            max_width,
            width_group: width_group.to_string(),
            input_group: input_group.to_string(),
        }
    }

    /// Depthwise conv: reads and writes the same group, one filter per channel.
    pub fn depthwise(out_h: usize, out_w: usize, kernel: usize, max_width: usize, group: &str) -> Self {
        LayerSpec {
            id: 0,
            kind: LayerKind::DepthwiseConv,
            out_h,
            out_w,
            kernel,
            max_width,
            width_group: group.to_string(),
            input_group: group.to_string(),
        }
    }

    pub fn dense(max_width: usize, width_group: &str, input_group: &str) -> Self {
        LayerSpec {
            id: 0,
            kind: LayerKind::Dense,
            out_h: 1,
            out_w: 1,
            kernel: 1,
            max_width,
            width_group: width_group.to_string(),
            input_group: input_group.to_string(),
        }
    }
}

/// Where a layer's input comes from or its output goes: the fixed network
/// input, the fixed classifier output, or searchable group `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Port {
    Input,
    Classes,
    Group(usize),
}

/// A searchable width group, resolved to a dense index.
#[derive(Debug, Clone)]
pub struct GroupInfo {
    pub name: String,
    pub max_width: usize,
    /// Spatial resolution of the group's activation; all producers agree.
    pub out_h: usize,
    pub out_w: usize,
    /// 0-based indices of layers writing this group.
    pub producers: Vec<usize>,
    /// 0-based indices of layers reading this group.
    pub consumers: Vec<usize>,
}

/// One point of the width search space: channel counts per searchable group,
/// in the graph's canonical group order (first appearance as producer).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WidthVector(Vec<usize>);

impl WidthVector {
    pub fn from_channels(channels: Vec<usize>) -> Self {
        WidthVector(channels)
    }

    pub fn channels(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for WidthVector {
    type Output = usize;
    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Validated, ordered layer graph. Construct with [`NetworkGraph::new`] or
/// load from JSON with [`NetworkGraph::from_json`]; both reject the first
/// invariant violation with the offending layer's id.
#[derive(Debug, Clone)]
pub struct NetworkGraph {
    input_channels: usize,
    num_classes: usize,
    layers: Vec<LayerSpec>,
    groups: Vec<GroupInfo>,
    /// (input port, output port) per layer, parallel to `layers`.
    ports: Vec<(Port, Port)>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    input_channels: usize,
    num_classes: usize,
    layers: Vec<LayerSpec>,
}

impl NetworkGraph {
    /// Validate and index a layer list. Layer ids are assigned 1..=L in order.
    ///
    /// Rules enforced (first violation wins, reported with the layer id):
    /// - dimensions and widths are ≥ 1; dense layers have out_h = out_w = K = 1;
    /// - `"input"` is never written; `"output"` is written only by the final
    ///   layer, with max_width = num_classes, and never read;
    /// - every input_group is the network input or a group written earlier;
    /// - layers sharing a width_group agree on max_width and on out_h/out_w
    ///   (their outputs are summed into one activation);
    /// - a conv or depthwise layer reading a group may only keep or shrink
    ///   its resolution by integer factors (dense layers pool to 1×1);
    /// - depthwise layers read the group they write; conv/dense layers do not
    ///   (a conv reading its own group would make its cost quadratic in one
    ///   width, breaking the linear cost model).
    pub fn new(input_channels: usize, num_classes: usize, mut layers: Vec<LayerSpec>) -> Result<Self> {
        let global = |reason: &str| Error::InvalidArch {
            layer: 0,
            reason: reason.to_string(),
        };
        if input_channels == 0 {
            return Err(global("input_channels must be ≥ 1"));
        }
        if num_classes == 0 {
            return Err(global("num_classes must be ≥ 1"));
        }
        if layers.is_empty() {
            return Err(global("network must have at least one layer"));
        }

        let mut groups: Vec<GroupInfo> = Vec::new();
        let mut by_name: BTreeMap<String, usize> = BTreeMap::new();
        let mut ports: Vec<(Port, Port)> = Vec::with_capacity(layers.len());
        let last = layers.len() - 1;

        for (idx, layer) in layers.iter_mut().enumerate() {
            layer.id = idx + 1;
            let fail = |reason: String| Error::InvalidArch {
                layer: idx + 1,
                reason,
            };

            if layer.out_h == 0 || layer.out_w == 0 {
                return Err(fail("out_h and out_w must be ≥ 1".into()));
            }
            if layer.kernel == 0 {
                return Err(fail("kernel must be ≥ 1".into()));
            }
            if layer.max_width == 0 {
                return Err(fail("max_width must be ≥ 1".into()));
            }
            if layer.kind == LayerKind::Dense && (layer.out_h != 1 || layer.out_w != 1 || layer.kernel != 1) {
                return Err(fail("dense layers must have out_h = out_w = kernel = 1".into()));
            }
            if layer.width_group == INPUT_GROUP {
                return Err(fail(format!("{INPUT_GROUP:?} is reserved and cannot be written")));
            }

            // Resolve the input side first: it may only refer to groups that
            // already exist, which is what makes the layer order topological.
            let in_port = if layer.input_group == INPUT_GROUP {
                Port::Input
            } else if layer.input_group == OUTPUT_GROUP {
                return Err(fail(format!("{OUTPUT_GROUP:?} cannot be read by a layer")));
            } else {
                match by_name.get(&layer.input_group) {
                    Some(&g) => {
                        if layer.kind != LayerKind::Dense {
                            let (gh, gw) = (groups[g].out_h, groups[g].out_w);
                            if layer.out_h > gh
                                || layer.out_w > gw
                                || gh % layer.out_h != 0
                                || gw % layer.out_w != 0
                            {
                                return Err(fail(format!(
                                    "output {}x{} must divide the {}x{} resolution of group {:?}",
                                    layer.out_h, layer.out_w, gh, gw, layer.input_group
                                )));
                            }
                        }
                        Port::Group(g)
                    }
                    None => {
                        return Err(fail(format!(
                            "input_group {:?} is not written by any earlier layer",
                            layer.input_group
                        )))
                    }
                }
            };

            match layer.kind {
                LayerKind::DepthwiseConv => {
                    if layer.input_group != layer.width_group {
                        return Err(fail("depthwise layers must read and write the same group".into()));
                    }
                }
                LayerKind::Conv | LayerKind::Dense => {
                    if layer.input_group == layer.width_group {
                        return Err(fail("conv/dense layers cannot read the group they write".into()));
                    }
                }
            }

            let out_port = if layer.width_group == OUTPUT_GROUP {
                if idx != last {
                    return Err(fail(format!("only the final layer may write {OUTPUT_GROUP:?}")));
                }
                if layer.max_width != num_classes {
                    return Err(fail(format!(
                        "final layer max_width {} must equal num_classes {}",
                        layer.max_width, num_classes
                    )));
                }
                Port::Classes
            } else {
                if idx == last {
                    return Err(fail(format!("the final layer must write {OUTPUT_GROUP:?}")));
                }
                match by_name.get(&layer.width_group) {
                    Some(&g) => {
                        if groups[g].max_width != layer.max_width {
                            return Err(fail(format!(
                                "group {:?} has max_width {} elsewhere, {} here",
                                layer.width_group, groups[g].max_width, layer.max_width
                            )));
                        }
                        if groups[g].out_h != layer.out_h || groups[g].out_w != layer.out_w {
                            return Err(fail(format!(
                                "group {:?} has resolution {}x{} elsewhere, {}x{} here",
                                layer.width_group, groups[g].out_h, groups[g].out_w, layer.out_h, layer.out_w
                            )));
                        }
                        groups[g].producers.push(idx);
                        Port::Group(g)
                    }
                    None => {
                        let g = groups.len();
                        by_name.insert(layer.width_group.clone(), g);
                        groups.push(GroupInfo {
                            name: layer.width_group.clone(),
                            max_width: layer.max_width,
                            out_h: layer.out_h,
                            out_w: layer.out_w,
                            producers: vec![idx],
                            consumers: Vec::new(),
                        });
                        Port::Group(g)
                    }
                }
            };

            if let Port::Group(g) = in_port {
                groups[g].consumers.push(idx);
            }
            ports.push((in_port, out_port));
        }

        Ok(NetworkGraph {
            input_channels,
            num_classes,
            layers,
            groups,
            ports,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawGraph = serde_json::from_str(text)?;
        NetworkGraph::new(raw.input_channels, raw.num_classes, raw.layers)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        NetworkGraph::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let raw = RawGraph {
            input_channels: self.input_channels,
            num_classes: self.num_classes,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("graph serialization cannot fail")
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Searchable groups in canonical order (first appearance as producer).
    pub fn groups(&self) -> &[GroupInfo] {
        &self.groups
    }

    pub fn group_index(&self, name: &str) -> Result<usize> {
        self.groups
            .iter()
            .position(|g| g.name == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    /// (input port, output port) of layer `idx` (0-based).
    pub fn layer_ports(&self, idx: usize) -> (Port, Port) {
        self.ports[idx]
    }

    /// Channel count carried by `port` under `widths`.
    pub fn port_width(&self, port: Port, widths: &WidthVector) -> usize {
        match port {
            Port::Input => self.input_channels,
            Port::Classes => self.num_classes,
            Port::Group(g) => widths[g],
        }
    }

    /// Channel count carried by `port` when every group is at max_width.
    pub fn port_max_width(&self, port: Port) -> usize {
        match port {
            Port::Input => self.input_channels,
            Port::Classes => self.num_classes,
            Port::Group(g) => self.groups[g].max_width,
        }
    }

    /// A copy of this graph with every searchable group's maximum width
    /// narrowed to the given channel counts (layer structure unchanged).
    /// Used to spawn a standalone network at searched widths and to shrink
    /// the supernet between search stages.
    pub fn with_group_widths(&self, widths: &WidthVector) -> Result<NetworkGraph> {
        self.validate_widths(widths)?;
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(idx, layer)| {
                let mut layer = layer.clone();
                if let Port::Group(g) = self.ports[idx].1 {
                    layer.max_width = widths[g];
                }
                layer
            })
            .collect();
        NetworkGraph::new(self.input_channels, self.num_classes, layers)
    }

    pub fn full_widths(&self) -> WidthVector {
        WidthVector(self.groups.iter().map(|g| g.max_width).collect())
    }

    pub fn min_widths(&self) -> WidthVector {
        WidthVector(vec![1; self.groups.len()])
    }

    /// Check a width vector against this graph: one entry per searchable
    /// group, each within [1, max_width].
    pub fn validate_widths(&self, widths: &WidthVector) -> Result<()> {
        if widths.len() != self.groups.len() {
            return Err(Error::InvalidWidth(format!(
                "expected {} group widths, got {}",
                self.groups.len(),
                widths.len()
            )));
        }
        for (g, info) in self.groups.iter().enumerate() {
            if widths[g] == 0 || widths[g] > info.max_width {
                return Err(Error::InvalidWidth(format!(
                    "group {:?}: width {} outside [1, {}]",
                    info.name, widths[g], info.max_width
                )));
            }
        }
        Ok(())
    }

    /// Build a width vector from a name → channels map; every searchable
    /// group must be present exactly once and in range.
    pub fn width_vector_from_map(&self, map: &BTreeMap<String, usize>) -> Result<WidthVector> {
        for name in map.keys() {
            if self.groups.iter().all(|g| &g.name != name) {
                return Err(Error::UnknownGroup(name.clone()));
            }
        }
        let mut channels = Vec::with_capacity(self.groups.len());
        for info in &self.groups {
            match map.get(&info.name) {
                Some(&c) => channels.push(c),
                None => {
                    return Err(Error::InvalidWidth(format!("missing width for group {:?}", info.name)))
                }
            }
        }
        let w = WidthVector(channels);
        self.validate_widths(&w)?;
        Ok(w)
    }

    /// Name → channels view of a width vector, for logs and result files.
    pub fn widths_to_map(&self, widths: &WidthVector) -> BTreeMap<String, usize> {
        self.groups
            .iter()
            .zip(widths.channels())
            .map(|(g, &c)| (g.name.clone(), c))
            .collect()
    }
}

/// Multiply-accumulate count of one layer at the given channel counts.
///
/// Conv and dense cost c_in · c_out · out_h · out_w · K²; depthwise costs
/// c · out_h · out_w · K² and requires c_in = c_out. Zero channels cost zero.
pub fn layer_flops(c_in: usize, c_out: usize, layer: &LayerSpec) -> Result<u64> {
    let spatial = (layer.out_h * layer.out_w * layer.kernel * layer.kernel) as u64;
    match layer.kind {
        LayerKind::Conv | LayerKind::Dense => Ok(c_in as u64 * c_out as u64 * spatial),
        LayerKind::DepthwiseConv => {
            if c_in != c_out {
                return Err(Error::InvalidWidth(format!(
                    "depthwise layer {} requires c_in = c_out, got {} and {}",
                    layer.id, c_in, c_out
                )));
            }
            Ok(c_out as u64 * spatial)
        }
    }
}

/// Total multiply-accumulate count of the network under `widths`.
pub fn network_flops(graph: &NetworkGraph, widths: &WidthVector) -> Result<u64> {
    graph.validate_widths(widths)?;
    let mut total = 0u64;
    for (idx, layer) in graph.layers().iter().enumerate() {
        let (in_port, out_port) = graph.layer_ports(idx);
        let c_in = graph.port_width(in_port, widths);
        let c_out = graph.port_width(out_port, widths);
        total += layer_flops(c_in, c_out, layer)?;
    }
    Ok(total)
}

/// FLOPs slope of one searchable group: the exact change in `network_flops`
/// when the group gains one channel, with all neighbor groups at max width.
///
/// Per layer touching the group: a conv/dense writer contributes
/// n_in · H · W · K², a conv/dense reader contributes n_out · H · W · K²,
/// and a depthwise layer contributes H · W · K² once.
pub fn sensitivity(graph: &NetworkGraph, group: &str) -> Result<u64> {
    let g = graph.group_index(group)?;
    Ok(sensitivity_by_index(graph, g))
}

/// [`sensitivity`] for group index `g` in canonical order.
pub fn sensitivity_by_index(graph: &NetworkGraph, g: usize) -> u64 {
    let mut eps = 0u64;
    for (idx, layer) in graph.layers().iter().enumerate() {
        let (in_port, out_port) = graph.layer_ports(idx);
        let spatial = (layer.out_h * layer.out_w * layer.kernel * layer.kernel) as u64;
        if layer.kind == LayerKind::DepthwiseConv {
            if out_port == Port::Group(g) {
                eps += spatial;
            }
            continue;
        }
        if out_port == Port::Group(g) {
            eps += graph.port_max_width(in_port) as u64 * spatial;
        }
        if in_port == Port::Group(g) {
            eps += graph.port_max_width(out_port) as u64 * spatial;
        }
    }
    eps
}

/// FLOPs slope of every searchable group, in canonical group order.
pub fn sensitivities(graph: &NetworkGraph) -> Vec<u64> {
    (0..graph.groups().len()).map(|g| sensitivity_by_index(graph, g)).collect()
}
