//! Synthetic weight tensors with planted block redundancy.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::tensor::{DenseTensor, LayerKind, TensorError};

/// Grid step every planted value is a multiple of. Quantizing planted data on
/// a grid with this step (and any bit width >= 13) is the identity.
pub const PLANTED_STEP: f32 = 1.0 / 256.0;

/// Planted values are `k * PLANTED_STEP` with `1 <= |k| <= PLANTED_MAX_INDEX`.
pub const PLANTED_MAX_INDEX: i32 = 2047;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("extents must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },

    #[error("block width {block_w} does not divide {cols} columns")]
    WidthDoesNotDivide { block_w: usize, cols: usize },

    #[error("{n_unique} unique patterns requested but the matrix has {blocks} blocks")]
    TooManyPatterns { n_unique: usize, blocks: usize },

    #[error("{n_unique} distinct patterns of width {block_w} cannot be drawn from the value range")]
    PatternSpaceExhausted { n_unique: usize, block_w: usize },

    #[error("at least one unique pattern is required")]
    NoPatterns,

    #[error("sparsity must lie in [0, 1], got {0}")]
    BadSparsity(f64),

    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A `rows x cols` fully connected tensor whose nonzero `1 x block_w` blocks
/// use exactly `min(n_unique, nonzero blocks)` distinct patterns.
///
/// `round(sparsity * blocks)` blocks are all-zero; every element of a nonzero
/// block is nonzero, so element sparsity equals block sparsity.
pub fn synth_planted(
    rows: usize,
    cols: usize,
    block_w: usize,
    n_unique: usize,
    sparsity: f64,
    seed: u64,
) -> Result<DenseTensor, SynthError> {
    if rows == 0 || cols == 0 {
        return Err(SynthError::EmptyShape { rows, cols });
    }
    if block_w == 0 || !cols.is_multiple_of(block_w) {
        return Err(SynthError::WidthDoesNotDivide { block_w, cols });
    }
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(SynthError::BadSparsity(sparsity));
    }
    if n_unique == 0 {
        return Err(SynthError::NoPatterns);
    }
    let blocks = rows * cols / block_w;
    if n_unique > blocks {
        return Err(SynthError::TooManyPatterns { n_unique, blocks });
    }
    let space = (2.0 * PLANTED_MAX_INDEX as f64).powi(block_w.min(64) as i32);
    if n_unique as f64 > space / 2.0 {
        return Err(SynthError::PatternSpaceExhausted { n_unique, block_w });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut seen = HashSet::with_capacity(n_unique);
    let mut patterns = Vec::with_capacity(n_unique);
    while patterns.len() < n_unique {
        let p: Vec<i32> = (0..block_w).map(|_| nonzero_index(&mut rng)).collect();
        if seen.insert(p.clone()) {
            patterns.push(p);
        }
    }

    let zero_blocks = ((sparsity * blocks as f64).round() as usize).min(blocks);
    let nonzero_blocks = blocks - zero_blocks;
    let mut layout: Vec<Option<usize>> = Vec::with_capacity(blocks);
    for i in 0..nonzero_blocks {
        let pick = if i < n_unique {
            i
        } else {
            rng.random_range(0..n_unique)
        };
        layout.push(Some(pick));
    }
    layout.resize(blocks, None);
    layout.shuffle(&mut rng);

    let mut values = Vec::with_capacity(rows * cols);
    for slot in layout {
        match slot {
            Some(p) => values.extend(patterns[p].iter().map(|&k| k as f32 * PLANTED_STEP)),
            None => values.extend(std::iter::repeat_n(0.0f32, block_w)),
        }
    }
    Ok(DenseTensor::f32(
        "planted",
        vec![rows, cols],
        LayerKind::FullyConnected,
        values,
    )?)
}

fn nonzero_index(rng: &mut ChaCha8Rng) -> i32 {
    let k = rng.random_range(1..=PLANTED_MAX_INDEX);
    if rng.random_bool(0.5) {
        -k
    } else {
        k
    }
}

/// Planted tensor with an arbitrary layer shape. Convolution layers plant
/// kernel-row patterns (block width = kernel width); fully connected layers
/// use `fc_block_w`. `n_unique` is clamped to the available block count.
pub fn synth_layer(
    name: &str,
    shape: &[usize],
    kind: LayerKind,
    fc_block_w: usize,
    n_unique: usize,
    sparsity: f64,
    seed: u64,
) -> Result<DenseTensor, SynthError> {
    if shape.len() < 2 || shape.contains(&0) {
        return Err(SynthError::EmptyShape {
            rows: shape.first().copied().unwrap_or(0),
            cols: shape.get(1).copied().unwrap_or(0),
        });
    }
    let total: usize = shape.iter().product();
    let (rows, cols, block_w) = match kind {
        LayerKind::Convolutional => {
            let kw = shape[shape.len() - 1];
            (total / kw, kw, kw)
        }
        LayerKind::FullyConnected => (shape[0], total / shape[0], fc_block_w),
    };
    let blocks = (rows * cols).checked_div(block_w).unwrap_or(0);
    let t = synth_planted(rows, cols, block_w, n_unique.min(blocks.max(1)), sparsity, seed)?;
    Ok(t.reshaped(shape.to_vec(), kind)?.renamed(name))
}

/// Layer shapes of the classic LeNet-5 (Caffe variant).
pub const LENET_SHAPES: [(&str, [usize; 4], LayerKind); 4] = [
    ("conv1", [20, 1, 5, 5], LayerKind::Convolutional),
    ("conv2", [50, 20, 5, 5], LayerKind::Convolutional),
    ("ip1", [500, 800, 0, 0], LayerKind::FullyConnected),
    ("ip2", [10, 500, 0, 0], LayerKind::FullyConnected),
];

/// Planted tensors with LeNet-5 layer shapes; layer `i` uses seed `seed + i`.
pub fn lenet_preset(
    fc_block_w: usize,
    n_unique: usize,
    sparsity: f64,
    seed: u64,
) -> Result<Vec<DenseTensor>, SynthError> {
    LENET_SHAPES
        .iter()
        .enumerate()
        .map(|(i, (name, dims, kind))| {
            let shape: Vec<usize> = dims.iter().copied().filter(|&d| d > 0).collect();
            synth_layer(name, &shape, *kind, fc_block_w, n_unique, sparsity, seed + i as u64)
        })
        .collect()
}
