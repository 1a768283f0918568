//! Deterministic numeric engine for masked sub-networks of a supernet.
//!
//! Weights are stored once at full supernet dimensions. A [`Selection`]
//! names, per width group, which channels a sub-network keeps; forward,
//! backward and update passes gather exactly those rows and columns and
//! never touch the rest.
//!
//! Dataflow: every layer writes into its group's activation slot, and
//! multiple producers of one group *sum* their (ReLU-activated) outputs,
//! so merged branches and depthwise residuals share one width variable.
//! A conv reading a slot may keep its resolution or downsample it by an
//! integer stride (same-padding, so each output pixel always performs
//! exactly c_in·K² multiply-accumulates — this is what makes the analytic
//! FLOPs count an exact instruction count). Dense layers average-pool
//! their input to 1×1 first; the pooling itself costs no MACs. The logits
//! are the spatial mean of the final layer's output, the loss is mean
//! softmax cross-entropy, and the optimizer is SGD with momentum.
//!
//! Everything runs in double precision. Batches are processed in
//! fixed-size chunks that are independent of thread count and reduced in
//! chunk order, so parallel and single-threaded runs are bit-identical.

pub mod checkpoint;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::archgraph::{network_flops, LayerKind, NetworkGraph, Port, WidthVector};
use crate::binplan::BinPlan;
use crate::error::{Error, Result};
use crate::sharing::{channel_indices, AssignmentPattern};

/// Items per work chunk; fixed so that results never depend on thread count.
const CHUNK: usize = 16;

/// Observer for multiply-accumulate operations in forward passes.
pub trait MacSink: Default + Send {
    fn tick(&mut self);
    fn merge(&mut self, other: Self);
    fn count(&self) -> u64;
}

/// Zero-cost sink for production passes.
#[derive(Default)]
pub struct NoopMacs;

impl MacSink for NoopMacs {
    #[inline(always)]
    fn tick(&mut self) {}
    fn merge(&mut self, _other: Self) {}
    fn count(&self) -> u64 {
        0
    }
}

/// Counting sink for the FLOPs oracle.
#[derive(Default)]
pub struct CountMacs(pub u64);

impl MacSink for CountMacs {
    #[inline(always)]
    fn tick(&mut self) {
        self.0 += 1;
    }
    fn merge(&mut self, other: Self) {
        self.0 += other.0;
    }
    fn count(&self) -> u64 {
        self.0
    }
}

/// A labeled batch of dense inputs, shaped batch × channels × h × w
/// (vector data uses h = w = 1).
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub n: usize,
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, n: usize, channels: usize, h: usize, w: usize, labels: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DataFormat("batch must contain at least one item".into()));
        }
        if inputs.len() != n * channels * h * w {
            return Err(Error::DataFormat(format!(
                "inputs length {} does not match {}x{}x{}x{}",
                inputs.len(),
                n,
                channels,
                h,
                w
            )));
        }
        if labels.len() != n {
            return Err(Error::DataFormat(format!(
                "label count {} does not match batch size {n}",
                labels.len()
            )));
        }
        Ok(Batch {
            inputs,
            n,
            channels,
            h,
            w,
            labels,
        })
    }

    /// Check input channels and label range against a graph.
    pub fn validate_for(&self, graph: &NetworkGraph) -> Result<()> {
        if self.channels != graph.input_channels() {
            return Err(Error::DataFormat(format!(
                "batch has {} channels, graph expects {}",
                self.channels,
                graph.input_channels()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= graph.num_classes()) {
            return Err(Error::DataFormat(format!(
                "label {bad} outside [0, {})",
                graph.num_classes()
            )));
        }
        Ok(())
    }

    /// Copy out the items at `indices`, in order.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let item = self.channels * self.h * self.w;
        let mut inputs = Vec::with_capacity(indices.len() * item);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(&self.inputs[i * item..(i + 1) * item]);
            labels.push(self.labels[i]);
        }
        Batch {
            inputs,
            n: indices.len(),
            channels: self.channels,
            h: self.h,
            w: self.w,
            labels,
        }
    }
}

/// Channels each width group keeps, as sorted 0-based indices. The unit of
/// work for every forward/backward pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    per_group: Vec<Vec<usize>>,
}

impl Selection {
    /// Leftmost-prefix selection for a plain width vector.
    pub fn fixed(graph: &NetworkGraph, widths: &WidthVector) -> Result<Selection> {
        graph.validate_widths(widths)?;
        Ok(Selection {
            per_group: widths.channels().iter().map(|&c| (0..c).collect()).collect(),
        })
    }

    /// Everything selected: the supernet itself.
    pub fn full(graph: &NetworkGraph) -> Selection {
        Selection {
            per_group: graph.groups().iter().map(|g| (0..g.max_width).collect()).collect(),
        }
    }

    /// Expand a bin-level assignment pattern to channel indices.
    pub fn from_pattern(graph: &NetworkGraph, plan: &BinPlan, pattern: &AssignmentPattern) -> Result<Selection> {
        if plan.group_count() != graph.groups().len() || pattern.groups.len() != plan.group_count() {
            return Err(Error::InvalidPattern(format!(
                "pattern covers {} groups, plan {}, graph {}",
                pattern.groups.len(),
                plan.group_count(),
                graph.groups().len()
            )));
        }
        let mut per_group = Vec::with_capacity(pattern.groups.len());
        for (g, (ga, info)) in pattern.groups.iter().zip(graph.groups()).enumerate() {
            if ga.group != info.name {
                return Err(Error::InvalidPattern(format!(
                    "pattern group {:?} does not match graph group {:?}",
                    ga.group, info.name
                )));
            }
            let channels = channel_indices(plan, g, &ga.units());
            if channels.is_empty() || *channels.last().unwrap() >= info.max_width {
                return Err(Error::InvalidPattern(format!(
                    "pattern for group {:?} selects channels outside [0, {})",
                    info.name, info.max_width
                )));
            }
            per_group.push(channels);
        }
        Ok(Selection { per_group })
    }

    pub fn group_channels(&self, g: usize) -> &[usize] {
        &self.per_group[g]
    }

    /// Channel counts per group.
    pub fn widths(&self) -> WidthVector {
        WidthVector::from_channels(self.per_group.iter().map(|c| c.len()).collect())
    }
}

/// Full-dimension tensors of one layer, plus matching momentum buffers.
///
/// Layout: conv `w[o][i][ky][kx]`, depthwise `w[c][ky][kx]`, dense `w[o][i]`
/// (row-major, dense behaves as k = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTensors {
    pub kind: LayerKind,
    pub n_out: usize,
    pub n_in: usize,
    pub k: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub mw: Vec<f64>,
    pub mb: Vec<f64>,
}

impl LayerTensors {
    fn weight_len(kind: LayerKind, n_out: usize, n_in: usize, k: usize) -> usize {
        match kind {
            LayerKind::DepthwiseConv => n_out * k * k,
            LayerKind::Conv | LayerKind::Dense => n_out * n_in * k * k,
        }
    }

    #[inline]
    fn widx(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        match self.kind {
            LayerKind::DepthwiseConv => (o * self.k + ky) * self.k + kx,
            LayerKind::Conv | LayerKind::Dense => ((o * self.n_in + i) * self.k + ky) * self.k + kx,
        }
    }
}

/// All supernet weights, biases and momentum buffers at full dimensions,
/// with a global update counter.
#[derive(Debug, Clone, PartialEq)]
pub struct SupernetState {
    pub layers: Vec<LayerTensors>,
    pub step: u64,
}

impl SupernetState {
    /// Fan-in-scaled uniform weights, zero biases and momentum.
    pub fn init(graph: &NetworkGraph, seed: u64) -> SupernetState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = graph
            .layers()
            .iter()
            .enumerate()
            .map(|(idx, layer)| {
                let (in_port, out_port) = graph.layer_ports(idx);
                let n_in = graph.port_max_width(in_port);
                let n_out = graph.port_max_width(out_port);
                let k = layer.kernel;
                let fan_in = match layer.kind {
                    LayerKind::Conv => n_in * k * k,
                    LayerKind::DepthwiseConv => k * k,
                    LayerKind::Dense => n_in,
                };
                let bound = 1.0 / (fan_in as f64).sqrt();
                let wlen = LayerTensors::weight_len(layer.kind, n_out, n_in, k);
                let w = (0..wlen).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound).collect();
                LayerTensors {
                    kind: layer.kind,
                    n_out,
                    n_in,
                    k,
                    w,
                    b: vec![0.0; n_out],
                    mw: vec![0.0; wlen],
                    mb: vec![0.0; n_out],
                }
            })
            .collect();
        SupernetState { layers, step: 0 }
    }

    /// FNV-1a hash of every stored bit (weights, biases, momentum, step).
    /// Equal hashes across runs are the bit-identity check used in tests.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&self.step.to_le_bytes());
        for layer in &self.layers {
            for vec in [&layer.w, &layer.b, &layer.mw, &layer.mb] {
                for &v in vec.iter() {
                    eat(&v.to_bits().to_le_bytes());
                }
            }
        }
        h
    }
}

/// Dense 4-d array, batch × channels × h × w.
#[derive(Debug, Clone)]
struct Tensor {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn zeros(n: usize, c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    #[inline]
    fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.idx(n, c, y, x);
        self.data[i] = v;
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Per-layer gather lists and output geometry for one selection.
struct LayerCtx {
    rows: Vec<usize>,
    cols: Vec<usize>,
    out_h: usize,
    out_w: usize,
}

fn port_channels(graph: &NetworkGraph, sel: &Selection, port: Port) -> Vec<usize> {
    match port {
        Port::Input => (0..graph.input_channels()).collect(),
        Port::Classes => (0..graph.num_classes()).collect(),
        Port::Group(g) => sel.group_channels(g).to_vec(),
    }
}

fn layer_ctxs(graph: &NetworkGraph, sel: &Selection) -> Vec<LayerCtx> {
    graph
        .layers()
        .iter()
        .enumerate()
        .map(|(idx, layer)| {
            let (in_port, out_port) = graph.layer_ports(idx);
            LayerCtx {
                rows: port_channels(graph, sel, out_port),
                cols: port_channels(graph, sel, in_port),
                out_h: layer.out_h,
                out_w: layer.out_w,
            }
        })
        .collect()
}

/// Same-padding geometry for a (possibly strided) window pass.
struct Geometry {
    sh: usize,
    sw: usize,
    pad_top: usize,
    pad_left: usize,
    ph: usize,
    pw: usize,
}

fn geometry(layer_id: usize, src_h: usize, src_w: usize, out_h: usize, out_w: usize, k: usize) -> Result<Geometry> {
    if out_h > src_h || out_w > src_w || !src_h.is_multiple_of(out_h) || !src_w.is_multiple_of(out_w) {
        return Err(Error::InvalidArch {
            layer: layer_id,
            reason: format!("input resolution {src_h}x{src_w} incompatible with declared output {out_h}x{out_w}"),
        });
    }
    let sh = src_h / out_h;
    let sw = src_w / out_w;
    let total_h = ((out_h - 1) * sh + k).saturating_sub(src_h);
    let total_w = ((out_w - 1) * sw + k).saturating_sub(src_w);
    Ok(Geometry {
        sh,
        sw,
        pad_top: total_h / 2,
        pad_left: total_w / 2,
        ph: src_h + total_h,
        pw: src_w + total_w,
    })
}

fn pad_tensor(src: &Tensor, geo: &Geometry) -> Tensor {
    let mut out = Tensor::zeros(src.n, src.c, geo.ph, geo.pw);
    for n in 0..src.n {
        for c in 0..src.c {
            for y in 0..src.h {
                let dst = out.idx(n, c, y + geo.pad_top, geo.pad_left);
                let s = src.idx(n, c, y, 0);
                out.data[dst..dst + src.w].copy_from_slice(&src.data[s..s + src.w]);
            }
        }
    }
    out
}

/// Saved forward intermediates of one layer, for the backward pass.
struct LayerFwd {
    /// Padded input actually convolved (conv/depthwise), or None for dense.
    padded: Option<Tensor>,
    /// Average-pooled input (dense only), chunk_n × c_in.
    gap: Option<Vec<f64>>,
    /// Pre-activation output.
    z: Tensor,
    geo: Option<Geometry>,
    /// Unpadded source dims, for cropping input gradients.
    src_h: usize,
    src_w: usize,
}

struct ChunkFwd {
    records: Vec<LayerFwd>,
    /// chunk_n × num_classes, after spatial averaging.
    logits: Vec<f64>,
}

fn chunk_input(batch: &Batch, range: std::ops::Range<usize>) -> Tensor {
    let item = batch.channels * batch.h * batch.w;
    Tensor {
        n: range.len(),
        c: batch.channels,
        h: batch.h,
        w: batch.w,
        data: batch.inputs[range.start * item..range.end * item].to_vec(),
    }
}

fn forward_chunk<M: MacSink>(
    state: &SupernetState,
    graph: &NetworkGraph,
    ctxs: &[LayerCtx],
    input: &Tensor,
    macs: &mut M,
) -> Result<ChunkFwd> {
    let n = input.n;
    let n_groups = graph.groups().len();
    // Slot g holds group g's running activation sum; the last slot is the
    // classifier output.
    let mut slots: Vec<Option<Tensor>> = vec![None; n_groups + 1];
    let slot_of = |port: Port| match port {
        Port::Group(g) => g,
        Port::Classes => n_groups,
        Port::Input => unreachable!("input is never an output port"),
    };
    let mut records = Vec::with_capacity(graph.layers().len());

    for (idx, layer) in graph.layers().iter().enumerate() {
        let (in_port, out_port) = graph.layer_ports(idx);
        let ctx = &ctxs[idx];
        let tensors = &state.layers[idx];
        let src: &Tensor = match in_port {
            Port::Input => input,
            Port::Group(g) => slots[g].as_ref().expect("validated: group written before read"),
            Port::Classes => unreachable!("validated: classes are never read"),
        };
        debug_assert_eq!(src.c, ctx.cols.len());

        let (out_c, k) = (ctx.rows.len(), layer.kernel);
        let mut z = Tensor::zeros(n, out_c, ctx.out_h, ctx.out_w);
        let mut rec = LayerFwd {
            padded: None,
            gap: None,
            z: Tensor::zeros(0, 0, 0, 0),
            geo: None,
            src_h: src.h,
            src_w: src.w,
        };

        match layer.kind {
            LayerKind::Conv => {
                let geo = geometry(layer.id, src.h, src.w, ctx.out_h, ctx.out_w, k)?;
                let padded = pad_tensor(src, &geo);
                for ni in 0..n {
                    for (o_pos, &row) in ctx.rows.iter().enumerate() {
                        for oy in 0..ctx.out_h {
                            for ox in 0..ctx.out_w {
                                let mut acc = tensors.b[row];
                                for (i_pos, &col) in ctx.cols.iter().enumerate() {
                                    for ky in 0..k {
                                        let p = padded.idx(ni, i_pos, oy * geo.sh + ky, ox * geo.sw);
                                        let wi = tensors.widx(row, col, ky, 0);
                                        for kx in 0..k {
                                            acc += tensors.w[wi + kx] * padded.data[p + kx];
                                            macs.tick();
                                        }
                                    }
                                }
                                z.set(ni, o_pos, oy, ox, acc);
                            }
                        }
                    }
                }
                rec.padded = Some(padded);
                rec.geo = Some(geo);
            }
            LayerKind::DepthwiseConv => {
                let geo = geometry(layer.id, src.h, src.w, ctx.out_h, ctx.out_w, k)?;
                let padded = pad_tensor(src, &geo);
                for ni in 0..n {
                    for (c_pos, &chan) in ctx.rows.iter().enumerate() {
                        for oy in 0..ctx.out_h {
                            for ox in 0..ctx.out_w {
                                let mut acc = tensors.b[chan];
                                for ky in 0..k {
                                    let p = padded.idx(ni, c_pos, oy * geo.sh + ky, ox * geo.sw);
                                    let wi = tensors.widx(chan, 0, ky, 0);
                                    for kx in 0..k {
                                        acc += tensors.w[wi + kx] * padded.data[p + kx];
                                        macs.tick();
                                    }
                                }
                                z.set(ni, c_pos, oy, ox, acc);
                            }
                        }
                    }
                }
                rec.padded = Some(padded);
                rec.geo = Some(geo);
            }
            LayerKind::Dense => {
                let area = (src.h * src.w) as f64;
                let mut gap = vec![0.0; n * src.c];
                for ni in 0..n {
                    for c in 0..src.c {
                        let base = src.idx(ni, c, 0, 0);
                        let sum: f64 = src.data[base..base + src.h * src.w].iter().sum();
                        gap[ni * src.c + c] = sum / area;
                    }
                }
                for ni in 0..n {
                    for (o_pos, &row) in ctx.rows.iter().enumerate() {
                        let mut acc = tensors.b[row];
                        for (i_pos, &col) in ctx.cols.iter().enumerate() {
                            acc += tensors.w[tensors.widx(row, col, 0, 0)] * gap[ni * src.c + i_pos];
                            macs.tick();
                        }
                        z.set(ni, o_pos, 0, 0, acc);
                    }
                }
                rec.gap = Some(gap);
            }
        }

        // ReLU everywhere except on the classifier logits, then sum into
        // the destination slot.
        let slot = slot_of(out_port);
        let activated = if out_port == Port::Classes {
            z.clone()
        } else {
            let mut a = z.clone();
            for v in a.data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            a
        };
        match &mut slots[slot] {
            Some(t) => t.add_assign(&activated),
            none => *none = Some(activated),
        }
        rec.z = z;
        records.push(rec);
    }

    let classes = slots[n_groups].as_ref().expect("final layer writes the classifier slot");
    let area = (classes.h * classes.w) as f64;
    let ncls = classes.c;
    let mut logits = vec![0.0; n * ncls];
    for ni in 0..n {
        for c in 0..ncls {
            let base = classes.idx(ni, c, 0, 0);
            let sum: f64 = classes.data[base..base + classes.h * classes.w].iter().sum();
            logits[ni * ncls + c] = sum / area;
        }
    }
    Ok(ChunkFwd { records, logits })
}

/// Stable mean-reduced softmax cross-entropy pieces for one item.
fn item_loss(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = m + sum.ln() - logits[label];
    for e in exps.iter_mut() {
        *e /= sum;
    }
    (loss, exps) // exps now holds the softmax probabilities
}

fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(CHUNK)).map(|i| i * CHUNK..((i + 1) * CHUNK).min(n)).collect()
}

fn forward_impl<M: MacSink>(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<(f64, Vec<f64>, u64)> {
    batch.validate_for(graph)?;
    let ctxs = layer_ctxs(graph, sel);
    let ncls = graph.num_classes();
    let parts: Vec<(f64, Vec<f64>, M)> = chunk_ranges(batch.n)
        .into_par_iter()
        .map(|range| -> Result<(f64, Vec<f64>, M)> {
            let mut macs = M::default();
            let input = chunk_input(batch, range.clone());
            let fwd = forward_chunk(state, graph, &ctxs, &input, &mut macs)?;
            let mut loss_sum = 0.0;
            for (i, item) in range.clone().enumerate() {
                let (l, _) = item_loss(&fwd.logits[i * ncls..(i + 1) * ncls], batch.labels[item]);
                loss_sum += l;
            }
            Ok((loss_sum, fwd.logits, macs))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut loss = 0.0;
    let mut logits = Vec::with_capacity(batch.n * ncls);
    let mut macs = M::default();
    for (l, lg, m) in parts {
        loss += l;
        logits.extend_from_slice(&lg);
        macs.merge(m);
    }
    loss /= batch.n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            layer: 0,
            reason: format!("non-finite loss {loss}"),
        });
    }
    Ok((loss, logits, macs.count()))
}

/// Forward the masked sub-network over a batch.
///
/// Returns mean cross-entropy loss and the batch × num_classes logits;
/// the supernet state is not touched.
pub fn masked_forward(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<(f64, Vec<f64>)> {
    let (loss, logits, _) = forward_impl::<NoopMacs>(state, graph, sel, batch)?;
    Ok((loss, logits))
}

/// [`masked_forward`] with an instrumented multiply-accumulate counter.
/// The count covers the whole batch: per item it equals
/// [`network_flops`] of the selection's widths.
pub fn masked_forward_counted(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<(f64, Vec<f64>, u64)> {
    forward_impl::<CountMacs>(state, graph, sel, batch)
}

/// Smallest |pre-activation| feeding a ReLU anywhere in the network: the
/// distance to the nearest gradient kink. Finite-difference checks against
/// the analytic gradient are only meaningful when the probe step cannot
/// push any unit across its kink, i.e. when this margin is comfortably
/// larger than the step's influence.
pub fn activation_margin(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<f64> {
    batch.validate_for(graph)?;
    let ctxs = layer_ctxs(graph, sel);
    let mins: Vec<f64> = chunk_ranges(batch.n)
        .into_par_iter()
        .map(|range| -> Result<f64> {
            let input = chunk_input(batch, range);
            let mut noop = NoopMacs;
            let fwd = forward_chunk(state, graph, &ctxs, &input, &mut noop)?;
            let mut min = f64::INFINITY;
            for (idx, rec) in fwd.records.iter().enumerate() {
                let (_, out_port) = graph.layer_ports(idx);
                if out_port == Port::Classes {
                    continue;
                }
                for &z in &rec.z.data {
                    min = min.min(z.abs());
                }
            }
            Ok(min)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mins.into_iter().fold(f64::INFINITY, f64::min))
}

/// Assert the instrumented MAC count of one forward equals the analytic
/// per-item count times the batch size.
pub fn verify_flops_oracle(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<bool> {
    let (_, _, counted) = masked_forward_counted(state, graph, sel, batch)?;
    let analytic = network_flops(graph, &sel.widths())?;
    Ok(counted == analytic * batch.n as u64)
}

/// Gradients of the selected entries, at full tensor dimensions
/// (unselected entries stay exactly zero).
#[derive(Debug, Clone)]
pub struct Grads {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>, // (d_weight, d_bias) per layer
}

impl Grads {
    fn zeros_like(state: &SupernetState) -> Grads {
        Grads {
            layers: state
                .layers
                .iter()
                .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &Grads) {
        for ((gw, gb), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in gw.iter_mut().zip(ow) {
                *a += b;
            }
            for (a, b) in gb.iter_mut().zip(ob) {
                *a += b;
            }
        }
    }
}

fn grad_chunk(
    state: &SupernetState,
    graph: &NetworkGraph,
    ctxs: &[LayerCtx],
    batch: &Batch,
    range: std::ops::Range<usize>,
    n_total: usize,
) -> Result<(Grads, f64)> {
    let input = chunk_input(batch, range.clone());
    let mut noop = NoopMacs;
    let fwd = forward_chunk(state, graph, ctxs, &input, &mut noop)?;
    let n = input.n;
    let ncls = graph.num_classes();
    let n_groups = graph.groups().len();

    // Loss and d(logits); the 1/n_total factor makes chunk gradients sum to
    // the full-batch mean gradient.
    let mut loss_sum = 0.0;
    let mut dlogits = vec![0.0; n * ncls];
    for i in 0..n {
        let label = batch.labels[range.start + i];
        let (l, probs) = item_loss(&fwd.logits[i * ncls..(i + 1) * ncls], label);
        loss_sum += l;
        for c in 0..ncls {
            let onehot = if c == label { 1.0 } else { 0.0 };
            dlogits[i * ncls + c] = (probs[c] - onehot) / n_total as f64;
        }
    }

    // Slot gradient accumulators; producers read them without clearing, so
    // every producer sees exactly the consumers that ran after it.
    let mut gslots: Vec<Option<Tensor>> = vec![None; n_groups + 1];
    let (cls_h, cls_w) = {
        let (_, out_port) = graph.layer_ports(graph.layers().len() - 1);
        debug_assert_eq!(out_port, Port::Classes);
        let z = &fwd.records.last().unwrap().z;
        (z.h, z.w)
    };
    let mut gcls = Tensor::zeros(n, ncls, cls_h, cls_w);
    let area = (cls_h * cls_w) as f64;
    for ni in 0..n {
        for c in 0..ncls {
            let g = dlogits[ni * ncls + c] / area;
            for y in 0..cls_h {
                for x in 0..cls_w {
                    gcls.set(ni, c, y, x, g);
                }
            }
        }
    }
    gslots[n_groups] = Some(gcls);

    let mut grads = Grads::zeros_like(state);

    for idx in (0..graph.layers().len()).rev() {
        let layer = &graph.layers()[idx];
        let (in_port, out_port) = graph.layer_ports(idx);
        let ctx = &ctxs[idx];
        let tensors = &state.layers[idx];
        let rec = &fwd.records[idx];
        let slot = match out_port {
            Port::Group(g) => g,
            Port::Classes => n_groups,
            Port::Input => unreachable!(),
        };
        let Some(gout) = gslots[slot].as_ref() else {
            continue; // group never consumed downstream: zero gradient
        };

        // d(pre-activation): ReLU mask except on the classifier logits.
        let mut gz = gout.clone();
        if out_port != Port::Classes {
            for (g, &z) in gz.data.iter_mut().zip(&rec.z.data) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }

        let (gw, gb) = &mut grads.layers[idx];
        let k = layer.kernel;
        let want_input_grad = matches!(in_port, Port::Group(_));
        let mut ginput: Option<Tensor> = None;

        match layer.kind {
            LayerKind::Conv => {
                let geo = rec.geo.as_ref().unwrap();
                let padded = rec.padded.as_ref().unwrap();
                let mut gpad = Tensor::zeros(n, ctx.cols.len(), geo.ph, geo.pw);
                for ni in 0..n {
                    for (o_pos, &row) in ctx.rows.iter().enumerate() {
                        for oy in 0..ctx.out_h {
                            for ox in 0..ctx.out_w {
                                let g = gz.data[gz.idx(ni, o_pos, oy, ox)];
                                if g == 0.0 {
                                    continue;
                                }
                                gb[row] += g;
                                for (i_pos, &col) in ctx.cols.iter().enumerate() {
                                    for ky in 0..k {
                                        let p = padded.idx(ni, i_pos, oy * geo.sh + ky, ox * geo.sw);
                                        let wi = tensors.widx(row, col, ky, 0);
                                        for kx in 0..k {
                                            gw[wi + kx] += g * padded.data[p + kx];
                                            if want_input_grad {
                                                gpad.data[p + kx] += g * tensors.w[wi + kx];
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if want_input_grad {
                    ginput = Some(crop_pad(&gpad, geo, rec.src_h, rec.src_w));
                }
            }
            LayerKind::DepthwiseConv => {
                let geo = rec.geo.as_ref().unwrap();
                let padded = rec.padded.as_ref().unwrap();
                let mut gpad = Tensor::zeros(n, ctx.rows.len(), geo.ph, geo.pw);
                for ni in 0..n {
                    for (c_pos, &chan) in ctx.rows.iter().enumerate() {
                        for oy in 0..ctx.out_h {
                            for ox in 0..ctx.out_w {
                                let g = gz.data[gz.idx(ni, c_pos, oy, ox)];
                                if g == 0.0 {
                                    continue;
                                }
                                gb[chan] += g;
                                for ky in 0..k {
                                    let p = padded.idx(ni, c_pos, oy * geo.sh + ky, ox * geo.sw);
                                    let wi = tensors.widx(chan, 0, ky, 0);
                                    for kx in 0..k {
                                        gw[wi + kx] += g * padded.data[p + kx];
                                        gpad.data[p + kx] += g * tensors.w[wi + kx];
                                    }
                                }
                            }
                        }
                    }
                }
                // Depthwise always reads its own group: deposit the input
                // gradient (the residual identity path was already handled
                // by consumers after this layer).
                ginput = Some(crop_pad(&gpad, geo, rec.src_h, rec.src_w));
            }
            LayerKind::Dense => {
                let gap = rec.gap.as_ref().unwrap();
                let c_in = ctx.cols.len();
                let mut ggap = vec![0.0; n * c_in];
                for ni in 0..n {
                    for (o_pos, &row) in ctx.rows.iter().enumerate() {
                        let g = gz.data[gz.idx(ni, o_pos, 0, 0)];
                        if g == 0.0 {
                            continue;
                        }
                        gb[row] += g;
                        for (i_pos, &col) in ctx.cols.iter().enumerate() {
                            let wi = tensors.widx(row, col, 0, 0);
                            gw[wi] += g * gap[ni * c_in + i_pos];
                            ggap[ni * c_in + i_pos] += g * tensors.w[wi];
                        }
                    }
                }
                if want_input_grad {
                    // Average pooling spreads gradients uniformly.
                    let area = (rec.src_h * rec.src_w) as f64;
                    let mut gi = Tensor::zeros(n, c_in, rec.src_h, rec.src_w);
                    for ni in 0..n {
                        for c in 0..c_in {
                            let g = ggap[ni * c_in + c] / area;
                            for y in 0..rec.src_h {
                                for x in 0..rec.src_w {
                                    gi.set(ni, c, y, x, g);
                                }
                            }
                        }
                    }
                    ginput = Some(gi);
                }
            }
        }

        if let (Some(gi), Port::Group(g)) = (ginput, in_port) {
            match &mut gslots[g] {
                Some(t) => t.add_assign(&gi),
                none => *none = Some(gi),
            }
        }
    }

    Ok((grads, loss_sum))
}

fn crop_pad(gpad: &Tensor, geo: &Geometry, src_h: usize, src_w: usize) -> Tensor {
    let mut out = Tensor::zeros(gpad.n, gpad.c, src_h, src_w);
    for n in 0..gpad.n {
        for c in 0..gpad.c {
            for y in 0..src_h {
                let s = gpad.idx(n, c, y + geo.pad_top, geo.pad_left);
                let d = out.idx(n, c, y, 0);
                out.data[d..d + src_w].copy_from_slice(&gpad.data[s..s + src_w]);
            }
        }
    }
    out
}

/// Mean loss over the batch and the full gradient of the selected
/// sub-network's parameters (entries outside the selection are zero).
pub fn loss_and_gradients(
    state: &SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
) -> Result<(f64, Grads)> {
    batch.validate_for(graph)?;
    let ctxs = layer_ctxs(graph, sel);
    let parts: Vec<(Grads, f64)> = chunk_ranges(batch.n)
        .into_par_iter()
        .map(|range| grad_chunk(state, graph, &ctxs, batch, range, batch.n))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Grads::zeros_like(state);
    let mut loss = 0.0;
    for (g, l) in &parts {
        grads.add_assign(g);
        loss += l;
    }
    loss /= batch.n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric {
            layer: 0,
            reason: format!("non-finite loss {loss}"),
        });
    }
    for (idx, (gw, gb)) in grads.layers.iter().enumerate() {
        if gw.iter().chain(gb.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                layer: idx + 1,
                reason: "non-finite gradient".into(),
            });
        }
    }
    Ok((loss, grads))
}

/// One SGD-with-momentum step on exactly the selected entries.
///
/// Update rule per selected entry: g ← ∂L/∂w + weight_decay·w,
/// m ← momentum·m + g, w ← w − lr·m. Every entry outside the selection
/// (weights and momentum alike) is bit-identical afterwards. Returns the
/// batch loss under the pre-update weights. `lr = 0` performs no state
/// change at all.
pub fn backward_and_step(
    state: &mut SupernetState,
    graph: &NetworkGraph,
    sel: &Selection,
    batch: &Batch,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<f64> {
    if lr.is_nan() || lr < 0.0 || !(0.0..1.0).contains(&momentum) || weight_decay.is_nan() || weight_decay < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "bad optimizer parameters lr={lr}, momentum={momentum}, weight_decay={weight_decay}"
        )));
    }
    if lr == 0.0 {
        let (loss, _) = masked_forward(state, graph, sel, batch)?;
        return Ok(loss);
    }
    let (loss, grads) = loss_and_gradients(state, graph, sel, batch)?;

    for (idx, _layer) in graph.layers().iter().enumerate() {
        let ctx_rows = {
            let (in_port, out_port) = graph.layer_ports(idx);
            (port_channels(graph, sel, out_port), port_channels(graph, sel, in_port))
        };
        let (rows, cols) = ctx_rows;
        let t = &mut state.layers[idx];
        let (gw, gb) = &grads.layers[idx];
        let k = t.k;
        match t.kind {
            LayerKind::DepthwiseConv => {
                for &c in &rows {
                    for ky in 0..k {
                        for kx in 0..k {
                            let i = t.widx(c, 0, ky, kx);
                            let g = gw[i] + weight_decay * t.w[i];
                            t.mw[i] = momentum * t.mw[i] + g;
                            t.w[i] -= lr * t.mw[i];
                        }
                    }
                }
            }
            LayerKind::Conv | LayerKind::Dense => {
                for &row in &rows {
                    for &col in &cols {
                        for ky in 0..k {
                            for kx in 0..k {
                                let i = t.widx(row, col, ky, kx);
                                let g = gw[i] + weight_decay * t.w[i];
                                t.mw[i] = momentum * t.mw[i] + g;
                                t.w[i] -= lr * t.mw[i];
                            }
                        }
                    }
                }
            }
        }
        for &row in &rows {
            let g = gb[row] + weight_decay * t.b[row];
            t.mb[row] = momentum * t.mb[row] + g;
            t.b[row] -= lr * t.mb[row];
        }
    }
    state.step += 1;
    Ok(loss)
}

/// Fraction of argmax-correct predictions (ties resolve to the lowest
/// class index). Deterministic for a fixed state.
pub fn evaluate(state: &SupernetState, graph: &NetworkGraph, sel: &Selection, batch: &Batch) -> Result<f64> {
    let (_, logits) = masked_forward(state, graph, sel, batch)?;
    let ncls = graph.num_classes();
    let mut correct = 0usize;
    for i in 0..batch.n {
        let row = &logits[i * ncls..(i + 1) * ncls];
        let mut best = 0usize;
        for c in 1..ncls {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == batch.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / batch.n as f64)
}
