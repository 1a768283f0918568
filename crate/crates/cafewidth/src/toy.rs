//! Ready-made desk-scale networks and a seeded random-graph generator.
//!
//! These are the models used by the examples, the test suite, and the
//! built-in experiment configurations: a dense chain for tabular blobs, a
//! small CNN for 8x8 striped patches, and a generator of random valid
//! graphs for oracle tests (FLOPs accounting, gradient checks).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archgraph::{LayerSpec, NetworkGraph, INPUT_GROUP, OUTPUT_GROUP};
use crate::error::Result;

/// Fully-connected chain for tabular data: one dense layer per entry of
/// `hidden` (its searchable group's maximum width), then a dense classifier.
pub fn dense_chain(input_dims: usize, hidden: &[usize], num_classes: usize) -> Result<NetworkGraph> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut prev = INPUT_GROUP.to_string();
    for (i, &n) in hidden.iter().enumerate() {
        let name = format!("h{}", i + 1);
        layers.push(LayerSpec::dense(n, &name, &prev));
        prev = name;
    }
    layers.push(LayerSpec::dense(num_classes, OUTPUT_GROUP, &prev));
    NetworkGraph::new(input_dims, num_classes, layers)
}

/// Small CNN for 8x8 single-channel patches: four searchable conv groups
/// (3x3 kernels, one 2x downsampling step in the middle) and a dense
/// classifier head. `width` is the per-group maximum channel count.
pub fn patch_cnn(width: usize, num_classes: usize) -> Result<NetworkGraph> {
    NetworkGraph::new(
        1,
        num_classes,
        vec![
            LayerSpec::conv(8, 8, 3, width, "s1", INPUT_GROUP),
            LayerSpec::conv(8, 8, 3, width, "s2", "s1"),
            LayerSpec::conv(4, 4, 3, width, "s3", "s2"),
            LayerSpec::conv(4, 4, 3, width, "s4", "s3"),
            LayerSpec::dense(num_classes, OUTPUT_GROUP, "s4"),
        ],
    )
}

/// Two-group CNN small enough for exhaustive search-space sweeps.
pub fn tiny_cnn(h: usize, w: usize, widths: (usize, usize), num_classes: usize) -> Result<NetworkGraph> {
    NetworkGraph::new(
        1,
        num_classes,
        vec![
            LayerSpec::conv(h, w, 3, widths.0, "a", INPUT_GROUP),
            LayerSpec::conv(h, w, 3, widths.1, "b", "a"),
            LayerSpec::dense(num_classes, OUTPUT_GROUP, "b"),
        ],
    )
}

/// A random valid graph plus its input resolution `(h, w)`.
///
/// Structure is drawn from a seeded stream: 1-5 hidden layers (conv,
/// depthwise conv, occasional group re-use for skip-style merges,
/// occasional 2x downsampling), then a dense classifier. Group maxima stay
/// at 8 channels or below, so exhaustive oracles stay cheap.
pub fn random_graph(seed: u64) -> (NetworkGraph, usize, usize) {
    struct Grp {
        name: String,
        res: usize,
        max: usize,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input_channels = rng.random_range(1..=3);
    let num_classes = rng.random_range(2..=4);
    let side = *[4usize, 6, 8].choose(&mut rng).unwrap();
    let n_hidden = rng.random_range(1..=5);

    let mut groups: Vec<Grp> = Vec::new();
    let mut layers: Vec<LayerSpec> = Vec::new();
    for _ in 0..n_hidden {
        if !groups.is_empty() && rng.random_range(0..100) < 20 {
            // Depthwise refinement of an existing group (reads and writes it).
            let g = &groups[rng.random_range(0..groups.len())];
            let k = *[1usize, 3].choose(&mut rng).unwrap();
            layers.push(LayerSpec::depthwise(g.res, g.res, k, g.max, &g.name));
            continue;
        }
        let from_input = groups.is_empty() || rng.random_range(0..100) < 30;
        let (in_name, in_res) = if from_input {
            (INPUT_GROUP.to_string(), side)
        } else {
            let g = &groups[rng.random_range(0..groups.len())];
            (g.name.clone(), g.res)
        };
        let out_res = if in_res % 2 == 0 && rng.random_range(0..100) < 35 {
            in_res / 2
        } else {
            in_res
        };
        let k = *[1usize, 3, 3].choose(&mut rng).unwrap();
        // Sometimes merge into an existing group of matching resolution
        // (a second producer); a conv may not read the group it writes.
        let mergeable: Vec<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.res == out_res && g.name != in_name)
            .map(|(i, _)| i)
            .collect();
        if !mergeable.is_empty() && rng.random_range(0..100) < 30 {
            let g = &groups[*mergeable.choose(&mut rng).unwrap()];
            layers.push(LayerSpec::conv(out_res, out_res, k, g.max, &g.name, &in_name));
        } else {
            let name = format!("g{}", groups.len() + 1);
            let max = rng.random_range(1..=8);
            layers.push(LayerSpec::conv(out_res, out_res, k, max, &name, &in_name));
            groups.push(Grp {
                name,
                res: out_res,
                max,
            });
        }
    }
    let head_input = if groups.is_empty() {
        INPUT_GROUP.to_string()
    } else {
        groups[rng.random_range(0..groups.len())].name.clone()
    };
    layers.push(LayerSpec::dense(num_classes, OUTPUT_GROUP, &head_input));
    let graph = NetworkGraph::new(input_channels, num_classes, layers).expect("generated graph must validate");
    (graph, side, side)
}

/// A random batch of standard-normal inputs and uniform labels matching
/// the graph's input shape; for kernel-level oracle tests.
pub fn random_batch(graph: &NetworkGraph, n: usize, h: usize, w: usize, seed: u64) -> crate::nnkernel::Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = graph.input_channels();
    let inputs = (0..n * c * h * w)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let labels = (0..n).map(|_| rng.random_range(0..graph.num_classes())).collect();
    crate::nnkernel::Batch::new(inputs, n, c, h, w, labels).expect("shape is consistent")
}
