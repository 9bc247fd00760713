//! Cascade-forward neural network.
//!
//! A cascade network is a layered net in which the input and every layer
//! feed all later layers, not only the next one: for layer sizes
//! `n0-n1-...-nL` there is a weight block for every pair `(src, dst)` with
//! `src < dst`, plus one bias vector per non-input layer. Hidden layers use
//! the hyperbolic tangent sigmoid, the output layer is pure linear.
//!
//! All parameters live in one flat `Vec<f64>` ordered by `(src, dst)`
//! lexicographically with the bias vectors last; gradients, step sizes and
//! checkpoints all share that layout.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{Dataset, Pattern, Scaler};
use crate::motor::full;
use crate::rng::SplitMix64;

#[derive(Debug, Error)]
pub enum CfnnError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("checkpoint, line {line}: {msg}")]
    Checkpoint { line: usize, msg: String },
    #[error("checkpoint version {found:?} is not supported (expected {expected:?})")]
    Version {
        found: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Hyperbolic tangent sigmoid transfer function,
/// `f(n) = 2 / (1 + e^(-2n)) - 1` (equal to `tanh(n)`).
#[inline]
pub fn tansig(net: f64) -> f64 {
    net.tanh()
}

/// Pure linear transfer function, `f(n) = n`.
#[inline]
pub fn purelin(net: f64) -> f64 {
    net
}

/// One cascade weight block: `rows x cols` connecting layer `src` to layer
/// `dst`, stored row-major at `offset` in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSpec {
    pub src: usize,
    pub dst: usize,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Layer sizes plus the derived parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CfnnTopology {
    sizes: Vec<usize>,
    input_tansig: bool,
    blocks: Vec<BlockSpec>,
    bias_offsets: Vec<usize>,
    n_params: usize,
}

impl CfnnTopology {
    /// Builds the full lower-triangular cascade over `sizes`. When
    /// `input_tansig` is set the input values are passed through the
    /// sigmoid before feeding the network (off by default; inputs are
    /// normally a plain pass-through of the normalized channels).
    pub fn new(sizes: Vec<usize>, input_tansig: bool) -> Result<Self, CfnnError> {
        if sizes.len() < 2 {
            return Err(CfnnError::InvalidTopology(format!(
                "need at least input and output layers, got {} sizes",
                sizes.len()
            )));
        }
        if sizes.contains(&0) {
            return Err(CfnnError::InvalidTopology(
                "all layer sizes must be >= 1".into(),
            ));
        }
        let n_layers = sizes.len();
        let mut blocks = Vec::new();
        let mut offset = 0;
        for src in 0..n_layers - 1 {
            for dst in src + 1..n_layers {
                let rows = sizes[dst];
                let cols = sizes[src];
                blocks.push(BlockSpec {
                    src,
                    dst,
                    offset,
                    rows,
                    cols,
                });
                offset += rows * cols;
            }
        }
        let mut bias_offsets = Vec::with_capacity(n_layers - 1);
        for &size in &sizes[1..] {
            bias_offsets.push(offset);
            offset += size;
        }
        Ok(Self {
            sizes,
            input_tansig,
            blocks,
            bias_offsets,
            n_params: offset,
        })
    }

    /// Parses a spec string like `2-10-8-3`, optionally suffixed with
    /// `;input-tansig`.
    pub fn parse(spec: &str) -> Result<Self, CfnnError> {
        let spec = spec.trim();
        let (sizes_part, input_tansig) = match spec.split_once(';') {
            Some((s, "input-tansig")) => (s, true),
            Some((_, other)) => {
                return Err(CfnnError::InvalidTopology(format!(
                    "unknown topology option {other:?}"
                )))
            }
            None => (spec, false),
        };
        let sizes: Result<Vec<usize>, _> = sizes_part
            .split('-')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CfnnError::InvalidTopology(format!("bad layer size {s:?}")))
            })
            .collect();
        Self::new(sizes?, input_tansig)
    }

    pub fn spec_string(&self) -> String {
        let sizes = self
            .sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("-");
        if self.input_tansig {
            format!("{sizes};input-tansig")
        } else {
            sizes
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn input_tansig(&self) -> bool {
        self.input_tansig
    }

    /// Weight blocks in `(src, dst)` lexicographic order.
    pub fn blocks(&self) -> &[BlockSpec] {
        &self.blocks
    }

    /// Offset of the bias vector of layer `k` (1-based over non-input
    /// layers).
    pub fn bias_offset(&self, layer: usize) -> usize {
        self.bias_offsets[layer - 1]
    }

    /// Activation tags per non-input layer, e.g. `tansig,tansig,purelin`.
    pub fn activation_tags(&self) -> String {
        let n = self.sizes.len() - 1;
        (0..n)
            .map(|k| if k + 1 == n { "purelin" } else { "tansig" })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// How fresh weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Uniform in `[-bound, bound]`.
    Uniform { bound: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::Uniform { bound: 0.5 }
    }
}

/// Network weights: topology plus the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CfnnWeights {
    pub topology: CfnnTopology,
    pub data: Vec<f64>,
}

/// Seeded deterministic weight initialization.
pub fn init_weights(topology: &CfnnTopology, seed: u64, scheme: InitScheme) -> CfnnWeights {
    let mut rng = SplitMix64::new(seed);
    let data = (0..topology.n_params())
        .map(|_| match scheme {
            InitScheme::Uniform { bound } => rng.next_range(-bound, bound),
        })
        .collect();
    CfnnWeights {
        topology: topology.clone(),
        data,
    }
}

/// Gradient of the sum-squared error with respect to every parameter, in
/// the same flat layout as [`CfnnWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub data: Vec<f64>,
}

/// Reusable per-thread buffers for forward/backward passes.
#[derive(Debug, Clone)]
pub struct Scratch {
    /// Activations per layer (index 0 = input pass-through).
    pub acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn new(topology: &CfnnTopology) -> Self {
        let acts = topology.sizes().iter().map(|&s| vec![0.0; s]).collect();
        let deltas = topology.sizes().iter().map(|&s| vec![0.0; s]).collect();
        Self { acts, deltas }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

/// Patterns in a shape the network consumes directly (row-major flat
/// input and target matrices). Built from a [`Dataset`] or assembled by
/// hand in tests.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub n_in: usize,
    pub n_out: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) {
        assert_eq!(input.len(), self.n_in);
        assert_eq!(target.len(), self.n_out);
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
    }

    pub fn from_patterns(patterns: &[Pattern]) -> Self {
        let mut set = Self::new(crate::dataset::N_INPUTS, crate::dataset::N_TARGETS);
        for p in patterns {
            set.push(&p.input, &p.target);
        }
        set
    }

    pub fn from_dataset_indices(dataset: &Dataset, indices: &[usize]) -> Self {
        let mut set = Self::new(crate::dataset::N_INPUTS, crate::dataset::N_TARGETS);
        for &i in indices {
            set.push(&dataset.patterns[i].input, &dataset.patterns[i].target);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.inputs.len().checked_div(self.n_in).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.n_in..(k + 1) * self.n_in]
    }

    pub fn target(&self, k: usize) -> &[f64] {
        &self.targets[k * self.n_out..(k + 1) * self.n_out]
    }
}

impl CfnnWeights {
    /// Forward pass into reusable buffers. After the call `scratch.acts`
    /// holds every layer's activations (the cache consumed by the backward
    /// pass) and `scratch.output()` the network output.
    pub fn forward_into(&self, input: &[f64], scratch: &mut Scratch) {
        let topo = &self.topology;
        assert_eq!(input.len(), topo.n_in(), "input length must equal n_in");
        let n_layers = topo.n_layers();
        if topo.input_tansig() {
            for (a, &x) in scratch.acts[0].iter_mut().zip(input) {
                *a = tansig(x);
            }
        } else {
            scratch.acts[0].copy_from_slice(input);
        }
        for dst in 1..n_layers {
            // net = bias + sum over all earlier layers
            let bias_off = topo.bias_offset(dst);
            let (head, tail) = scratch.acts.split_at_mut(dst);
            let net = &mut tail[0];
            let len = net.len();
            net.copy_from_slice(&self.data[bias_off..bias_off + len]);
            for block in topo.blocks() {
                if block.dst != dst {
                    continue;
                }
                let src_act = &head[block.src];
                let w = &self.data[block.offset..block.offset + block.rows * block.cols];
                for (r, n) in net.iter_mut().enumerate() {
                    let row = &w[r * block.cols..(r + 1) * block.cols];
                    let mut acc = 0.0;
                    for (wv, av) in row.iter().zip(src_act.iter()) {
                        acc += wv * av;
                    }
                    *n += acc;
                }
            }
            if dst + 1 < n_layers {
                for n in net.iter_mut() {
                    *n = tansig(*n);
                }
            }
            // output layer: purelin, nets are already the activations
        }
    }

    /// Convenience forward pass; allocates a fresh cache.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, CfnnError> {
        if input.len() != self.topology.n_in() {
            return Err(CfnnError::DimMismatch(format!(
                "input has {} values, network expects {}",
                input.len(),
                self.topology.n_in()
            )));
        }
        let mut scratch = Scratch::new(&self.topology);
        self.forward_into(input, &mut scratch);
        Ok(scratch.output().to_vec())
    }
}

fn check_set(w: &CfnnWeights, set: &TrainingSet) -> Result<(), CfnnError> {
    if set.is_empty() {
        return Err(CfnnError::DimMismatch("empty pattern set".into()));
    }
    if set.n_in != w.topology.n_in() || set.n_out != w.topology.n_out() {
        return Err(CfnnError::DimMismatch(format!(
            "set is {}->{}, network is {}->{}",
            set.n_in,
            set.n_out,
            w.topology.n_in(),
            w.topology.n_out()
        )));
    }
    Ok(())
}

/// Patterns per parallel work unit. Fixed so the floating-point reduction
/// order, and therefore every result bit, is independent of thread count.
const CHUNK: usize = 1024;

fn chunk_ranges(n: usize) -> Vec<(usize, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n)))
        .collect()
}

/// Sum-squared error `E = sum over patterns and outputs of (y_d - y)^2`.
pub fn sse(w: &CfnnWeights, set: &TrainingSet) -> Result<f64, CfnnError> {
    check_set(w, set)?;
    let partials: Vec<f64> = chunk_ranges(set.len())
        .par_iter()
        .map(|&(a, b)| {
            let mut scratch = Scratch::new(&w.topology);
            let mut acc = 0.0;
            for k in a..b {
                w.forward_into(set.input(k), &mut scratch);
                for (y, yd) in scratch.output().iter().zip(set.target(k)) {
                    let e = yd - y;
                    acc += e * e;
                }
            }
            acc
        })
        .collect();
    Ok(partials.iter().sum())
}

/// Batch gradient of the sum-squared error over `set`, together with the
/// error itself, via reverse accumulation through the cascade: each
/// layer's error signal collects contributions from every later layer it
/// feeds, not only the next one.
pub fn gradient(w: &CfnnWeights, set: &TrainingSet) -> Result<(f64, GradientBundle), CfnnError> {
    check_set(w, set)?;
    let topo = &w.topology;
    let n_layers = topo.n_layers();

    let partials: Vec<(f64, Vec<f64>)> = chunk_ranges(set.len())
        .par_iter()
        .map(|&(a, b)| {
            let mut scratch = Scratch::new(topo);
            let mut grad = vec![0.0; topo.n_params()];
            let mut err = 0.0;
            for k in a..b {
                w.forward_into(set.input(k), &mut scratch);
                let target = set.target(k);
                // output layer error signal (pure linear): dE/dnet = 2 (y - y_d)
                let last = n_layers - 1;
                for (j, d) in scratch.deltas[last].iter_mut().enumerate() {
                    let e = scratch.acts[last][j] - target[j];
                    err += e * e;
                    *d = 2.0 * e;
                }
                // hidden layers, back to front; gather from every later layer
                for layer in (1..last).rev() {
                    let (dh, dt) = scratch.deltas.split_at_mut(layer + 1);
                    let own = &mut dh[layer];
                    own.iter_mut().for_each(|d| *d = 0.0);
                    for block in topo.blocks() {
                        if block.src != layer {
                            continue;
                        }
                        let wsl = &w.data[block.offset..block.offset + block.rows * block.cols];
                        let ddst = &dt[block.dst - layer - 1];
                        for (r, dd) in ddst.iter().enumerate() {
                            let row = &wsl[r * block.cols..(r + 1) * block.cols];
                            for (c, o) in own.iter_mut().enumerate() {
                                *o += dd * row[c];
                            }
                        }
                    }
                    let acts = &scratch.acts[layer];
                    for (o, a) in own.iter_mut().zip(acts.iter()) {
                        *o *= 1.0 - a * a; // tansig'(net) from the cached activation
                    }
                }
                // accumulate parameter gradients
                for block in topo.blocks() {
                    let d = &scratch.deltas[block.dst];
                    let a = &scratch.acts[block.src];
                    let g = &mut grad[block.offset..block.offset + block.rows * block.cols];
                    for (r, dv) in d.iter().enumerate() {
                        let row = &mut g[r * block.cols..(r + 1) * block.cols];
                        for (c, av) in a.iter().enumerate() {
                            row[c] += dv * av;
                        }
                    }
                }
                for layer in 1..n_layers {
                    let off = topo.bias_offset(layer);
                    let d = &scratch.deltas[layer];
                    for (j, dv) in d.iter().enumerate() {
                        grad[off + j] += dv;
                    }
                }
            }
            (err, grad)
        })
        .collect();

    let mut total_err = 0.0;
    let mut total_grad = vec![0.0; topo.n_params()];
    for (err, grad) in &partials {
        total_err += err;
        for (t, g) in total_grad.iter_mut().zip(grad.iter()) {
            *t += g;
        }
    }
    Ok((total_err, GradientBundle { data: total_grad }))
}

const CHECKPOINT_VERSION: &str = "cfnn-v1";

/// Writes a checkpoint: version line, topology spec, activation tags,
/// scaler spec, one line per weight block in `(src, dst)` order
/// (row-major, full precision), bias vectors last. Trailing `#` comment
/// lines (e.g. a config echo) are permitted and ignored by the loader.
pub fn save_checkpoint<W: Write>(
    w: &CfnnWeights,
    scaler: &Scaler,
    mut out: W,
    trailing_comments: &[(String, String)],
) -> Result<(), CfnnError> {
    writeln!(out, "{CHECKPOINT_VERSION}")?;
    writeln!(out, "{}", w.topology.spec_string())?;
    writeln!(out, "{}", w.topology.activation_tags())?;
    writeln!(out, "{}", scaler.spec_string())?;
    let mut write_slice = |slice: &[f64]| -> std::io::Result<()> {
        let line = slice.iter().map(|x| full(*x)).collect::<Vec<_>>().join(" ");
        writeln!(out, "{line}")
    };
    for block in w.topology.blocks() {
        write_slice(&w.data[block.offset..block.offset + block.rows * block.cols])?;
    }
    for layer in 1..w.topology.n_layers() {
        let off = w.topology.bias_offset(layer);
        write_slice(&w.data[off..off + w.topology.sizes()[layer]])?;
    }
    for (k, v) in trailing_comments {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

pub fn save_checkpoint_file(
    w: &CfnnWeights,
    scaler: &Scaler,
    path: &Path,
    trailing_comments: &[(String, String)],
) -> Result<(), CfnnError> {
    let mut buf = Vec::new();
    save_checkpoint(w, scaler, &mut buf, trailing_comments)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Loads a checkpoint, validating version, topology shape congruence and
/// value counts.
pub fn load_checkpoint<R: std::io::Read>(r: R) -> Result<(CfnnWeights, Scaler), CfnnError> {
    let reader = BufReader::new(r);
    let mut lines = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().starts_with('#') {
            continue;
        }
        lines.push(line);
    }
    let line_at = |i: usize| -> Result<&str, CfnnError> {
        lines
            .get(i)
            .map(|s| s.as_str())
            .ok_or(CfnnError::Checkpoint {
                line: i + 1,
                msg: "file truncated".into(),
            })
    };
    let version = line_at(0)?.trim();
    if version != CHECKPOINT_VERSION {
        return Err(CfnnError::Version {
            found: version.into(),
            expected: CHECKPOINT_VERSION,
        });
    }
    let topology = CfnnTopology::parse(line_at(1)?).map_err(|e| CfnnError::Checkpoint {
        line: 2,
        msg: e.to_string(),
    })?;
    let tags = line_at(2)?.trim();
    if tags != topology.activation_tags() {
        return Err(CfnnError::Checkpoint {
            line: 3,
            msg: format!(
                "activation tags {tags:?} do not match topology (expected {:?})",
                topology.activation_tags()
            ),
        });
    }
    let scaler = Scaler::parse_spec(line_at(3)?).map_err(|e| CfnnError::Checkpoint {
        line: 4,
        msg: e.to_string(),
    })?;

    let mut data = vec![0.0; topology.n_params()];
    let mut expected: Vec<(usize, usize)> = topology
        .blocks()
        .iter()
        .map(|b| (b.offset, b.rows * b.cols))
        .collect();
    for layer in 1..topology.n_layers() {
        expected.push((topology.bias_offset(layer), topology.sizes()[layer]));
    }
    for (i, (offset, len)) in expected.iter().enumerate() {
        let lineno = 4 + i;
        let line = line_at(lineno)?;
        let values: Result<Vec<f64>, CfnnError> = line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>().map_err(|_| CfnnError::Checkpoint {
                    line: lineno + 1,
                    msg: format!("bad number {s:?}"),
                })
            })
            .collect();
        let values = values?;
        if values.len() != *len {
            return Err(CfnnError::Checkpoint {
                line: lineno + 1,
                msg: format!("expected {len} values, got {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CfnnError::Checkpoint {
                line: lineno + 1,
                msg: "non-finite weight".into(),
            });
        }
        data[*offset..offset + len].copy_from_slice(&values);
    }
    if lines.len() > 4 + expected.len() {
        let extra = lines[4 + expected.len()..]
            .iter()
            .any(|l| !l.trim().is_empty());
        if extra {
            return Err(CfnnError::Checkpoint {
                line: 4 + expected.len() + 1,
                msg: "unexpected trailing data".into(),
            });
        }
    }
    Ok((CfnnWeights { topology, data }, scaler))
}

pub fn load_checkpoint_file(path: &Path) -> Result<(CfnnWeights, Scaler), CfnnError> {
    load_checkpoint(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_scaler() -> Scaler {
        Scaler {
            ranges: [(-1.0, 1.0); 5],
        }
    }

    fn random_set(n_in: usize, n_out: usize, n: usize, seed: u64) -> TrainingSet {
        let mut rng = SplitMix64::new(seed);
        let mut set = TrainingSet::new(n_in, n_out);
        for _ in 0..n {
            let input: Vec<f64> = (0..n_in).map(|_| rng.next_range(-1.0, 1.0)).collect();
            let target: Vec<f64> = (0..n_out).map(|_| rng.next_range(-1.0, 1.0)).collect();
            set.push(&input, &target);
        }
        set
    }

    fn fd_gradient(w: &CfnnWeights, set: &TrainingSet, h: f64) -> Vec<f64> {
        (0..w.data.len())
            .map(|i| {
                let mut wp = w.clone();
                wp.data[i] += h;
                let mut wm = w.clone();
                wm.data[i] -= h;
                (sse(&wp, set).unwrap() - sse(&wm, set).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn tansig_reference_values() {
        assert_eq!(tansig(0.0), 0.0);
        assert!((tansig(1.0) - 0.7615941559557649).abs() < 1e-15);
        // matches the explicit sigmoid form
        for x in [-3.0f64, -0.7, 0.3, 2.2] {
            let explicit = 2.0 / (1.0 + (-2.0 * x).exp()) - 1.0;
            assert!((tansig(x) - explicit).abs() < 1e-15);
            assert!((tansig(-x) + tansig(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn purelin_is_the_identity() {
        assert_eq!(purelin(0.0), 0.0);
        assert_eq!(purelin(3.7), 3.7);
        assert_eq!(purelin(1.5 + 2.25), purelin(1.5) + purelin(2.25));
    }

    #[test]
    fn topology_layout_covers_the_full_cascade() {
        let t = CfnnTopology::parse("2-10-8-3").unwrap();
        // blocks: (0,1),(0,2),(0,3),(1,2),(1,3),(2,3)
        let pairs: Vec<(usize, usize)> = t.blocks().iter().map(|b| (b.src, b.dst)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        let weight_count: usize = t.blocks().iter().map(|b| b.rows * b.cols).sum();
        assert_eq!(weight_count, 20 + 16 + 6 + 80 + 30 + 24);
        assert_eq!(t.n_params(), weight_count + 10 + 8 + 3);
        assert_eq!(t.activation_tags(), "tansig,tansig,purelin");
        assert_eq!(t.spec_string(), "2-10-8-3");
    }

    #[test]
    fn topology_rejects_degenerate_specs() {
        assert!(CfnnTopology::parse("5").is_err());
        assert!(CfnnTopology::parse("2-0-3").is_err());
        assert!(CfnnTopology::parse("2-a-3").is_err());
        assert!(CfnnTopology::parse("2-3;bogus").is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let t = CfnnTopology::parse("2-10-8-3").unwrap();
        let a = init_weights(&t, 42, InitScheme::default());
        let b = init_weights(&t, 42, InitScheme::default());
        assert_eq!(a, b);
        assert!(a.data.iter().all(|w| w.abs() <= 0.5));
        let c = init_weights(&t, 43, InitScheme::default());
        assert!(a.data.iter().zip(c.data.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn forward_zero_weights_gives_zero_output() {
        let t = CfnnTopology::parse("2-4-3").unwrap();
        let w = CfnnWeights {
            topology: t.clone(),
            data: vec![0.0; t.n_params()],
        };
        let y = w.forward(&[0.3, -0.8]).unwrap();
        assert_eq!(y, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn forward_without_hidden_layers_is_affine() {
        let t = CfnnTopology::parse("2-3").unwrap();
        let mut w = CfnnWeights {
            topology: t.clone(),
            data: vec![0.0; t.n_params()],
        };
        // W = [[1,2],[3,4],[5,6]], b = [0.5, -0.5, 0.25]
        w.data[..6].copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let boff = t.bias_offset(1);
        w.data[boff..boff + 3].copy_from_slice(&[0.5, -0.5, 0.25]);
        let x = [0.7, -0.2];
        let y = w.forward(&x).unwrap();
        assert!((y[0] - (1.0 * 0.7 + 2.0 * -0.2 + 0.5)).abs() < 1e-15);
        assert!((y[1] - (3.0 * 0.7 + 4.0 * -0.2 - 0.5)).abs() < 1e-15);
        assert!((y[2] - (5.0 * 0.7 + 6.0 * -0.2 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let t = CfnnTopology::parse("2-3").unwrap();
        let w = init_weights(&t, 1, InitScheme::default());
        assert!(matches!(w.forward(&[1.0]), Err(CfnnError::DimMismatch(_))));
    }

    /// Independent plain feed-forward network used as an oracle: with all
    /// skip blocks zeroed, the cascade must reduce to this.
    fn plain_ffnn_forward(
        sizes: &[usize],
        chain: &[Vec<f64>],
        biases: &[Vec<f64>],
        input: &[f64],
    ) -> Vec<f64> {
        let mut act = input.to_vec();
        for k in 1..sizes.len() {
            let w = &chain[k - 1];
            let b = &biases[k - 1];
            let mut next = vec![0.0; sizes[k]];
            for r in 0..sizes[k] {
                let mut n = b[r];
                for (c, a) in act.iter().enumerate() {
                    n += w[r * sizes[k - 1] + c] * a;
                }
                next[r] = if k + 1 < sizes.len() { tansig(n) } else { n };
            }
            act = next;
        }
        act
    }

    #[test]
    fn zeroing_skip_blocks_reduces_to_plain_feedforward() {
        let t = CfnnTopology::parse("2-5-4-3").unwrap();
        let mut w = init_weights(&t, 7, InitScheme::default());
        for block in t.blocks() {
            if block.dst != block.src + 1 {
                w.data[block.offset..block.offset + block.rows * block.cols].fill(0.0);
            }
        }
        let sizes = t.sizes().to_vec();
        let chain: Vec<Vec<f64>> = t
            .blocks()
            .iter()
            .filter(|b| b.dst == b.src + 1)
            .map(|b| w.data[b.offset..b.offset + b.rows * b.cols].to_vec())
            .collect();
        let biases: Vec<Vec<f64>> = (1..sizes.len())
            .map(|k| {
                let off = t.bias_offset(k);
                w.data[off..off + sizes[k]].to_vec()
            })
            .collect();
        let x = [0.37, -0.81];
        let cascade = w.forward(&x).unwrap();
        let plain = plain_ffnn_forward(&sizes, &chain, &biases, &x);
        for (a, b) in cascade.iter().zip(plain.iter()) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn sse_examples() {
        let t = CfnnTopology::parse("2-3").unwrap();
        let w = CfnnWeights {
            topology: t.clone(),
            data: vec![0.0; t.n_params()],
        };
        let mut set = TrainingSet::new(2, 3);
        set.push(&[0.0, 0.0], &[1.0, 0.0, 0.0]);
        assert_eq!(sse(&w, &set).unwrap(), 1.0);
        let mut zero = TrainingSet::new(2, 3);
        zero.push(&[0.5, 0.5], &[0.0, 0.0, 0.0]);
        assert_eq!(sse(&w, &zero).unwrap(), 0.0);
        assert!(sse(&w, &random_set(2, 3, 20, 3)).unwrap() >= 0.0);
    }

    #[test]
    fn gradient_is_zero_at_zero_residual() {
        let t = CfnnTopology::parse("2-3-2").unwrap();
        let w = init_weights(&t, 5, InitScheme::default());
        let mut set = TrainingSet::new(2, 2);
        let x = [0.4, -0.6];
        let y = w.forward(&x).unwrap();
        set.push(&x, &y);
        let (e, g) = gradient(&w, &set).unwrap();
        assert!(e < 1e-28);
        assert!(g.data.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn gradient_matches_finite_differences_on_a_cascade() {
        let t = CfnnTopology::parse("2-3-2-3").unwrap();
        let w = init_weights(&t, 11, InitScheme::default());
        let set = random_set(2, 3, 5, 13);
        let (e, g) = gradient(&w, &set).unwrap();
        assert!((e - sse(&w, &set).unwrap()).abs() < 1e-12);
        let fd = fd_gradient(&w, &set, 1e-6);
        for (i, (a, b)) in g.data.iter().zip(fd.iter()).enumerate() {
            let rel = (a - b).abs() / (a.abs() + b.abs()).max(1e-8);
            assert!(rel < 1e-6, "param {i}: bp {a} fd {b} rel {rel}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_input_tansig() {
        let t = CfnnTopology::parse("2-3-2;input-tansig").unwrap();
        let w = init_weights(&t, 17, InitScheme::default());
        let set = random_set(2, 2, 4, 19);
        let (_, g) = gradient(&w, &set).unwrap();
        let fd = fd_gradient(&w, &set, 1e-6);
        for (a, b) in g.data.iter().zip(fd.iter()) {
            let rel = (a - b).abs() / (a.abs() + b.abs()).max(1e-8);
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn linear_network_gradient_equals_least_squares_gradient() {
        // no hidden layers: E = sum ||W x + b - y||^2, so
        // dE/dW = 2 sum (W x + b - y) x^T and dE/db = 2 sum (W x + b - y)
        let t = CfnnTopology::parse("3-2").unwrap();
        let w = init_weights(&t, 23, InitScheme::default());
        let set = random_set(3, 2, 8, 29);
        let (_, g) = gradient(&w, &set).unwrap();
        let mut expect = vec![0.0; t.n_params()];
        let boff = t.bias_offset(1);
        for k in 0..set.len() {
            let x = set.input(k);
            let y = w.forward(x).unwrap();
            for r in 0..2 {
                let resid = 2.0 * (y[r] - set.target(k)[r]);
                for (c, xv) in x.iter().enumerate() {
                    expect[r * 3 + c] += resid * xv;
                }
                expect[boff + r] += resid;
            }
        }
        for (a, b) in g.data.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_is_independent_of_chunking_order() {
        // more patterns than one chunk: the ordered reduction must give the
        // same bits as a single-chunk pass
        let t = CfnnTopology::parse("2-4-3").unwrap();
        let w = init_weights(&t, 31, InitScheme::default());
        let big = random_set(2, 3, 3000, 37);
        let (e1, g1) = gradient(&w, &big).unwrap();
        let (e2, g2) = gradient(&w, &big).unwrap();
        assert_eq!(e1.to_bits(), e2.to_bits());
        assert_eq!(g1, g2);
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let t = CfnnTopology::parse("2-10-8-3").unwrap();
        let w = init_weights(&t, 41, InitScheme::default());
        let scaler = identity_scaler();
        let mut buf = Vec::new();
        save_checkpoint(&w, &scaler, &mut buf, &[("cfg.seed".into(), "41".into())]).unwrap();
        let (w2, s2) = load_checkpoint(&buf[..]).unwrap();
        assert_eq!(w, w2);
        assert_eq!(scaler, s2);
    }

    #[test]
    fn checkpoint_rejects_truncation_and_version_mismatch() {
        let t = CfnnTopology::parse("2-3-2").unwrap();
        let w = init_weights(&t, 1, InitScheme::default());
        let mut buf = Vec::new();
        save_checkpoint(&w, &identity_scaler(), &mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            load_checkpoint(truncated.as_bytes()),
            Err(CfnnError::Checkpoint { .. })
        ));
        let wrong_version = text.replacen("cfnn-v1", "cfnn-v9", 1);
        assert!(matches!(
            load_checkpoint(wrong_version.as_bytes()),
            Err(CfnnError::Version { .. })
        ));
    }

    #[test]
    fn checkpoint_rejects_edited_topology() {
        let t = CfnnTopology::parse("2-3-2").unwrap();
        let w = init_weights(&t, 1, InitScheme::default());
        let mut buf = Vec::new();
        save_checkpoint(&w, &identity_scaler(), &mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // claim a different hidden size: value counts no longer match
        let edited = text.replacen("2-3-2", "2-4-2", 1);
        assert!(matches!(
            load_checkpoint(edited.as_bytes()),
            Err(CfnnError::Checkpoint { .. })
        ));
    }
}
