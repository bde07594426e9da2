//! Dropout deep network `Φ(x, R_i, θ)`: layout, masks, forward pass and the
//! weight Jacobian.
//!
//! Layer `j` maps `Φ̂_{j-1}` to `Φ̂_j = (R_{i,j} V_j)ᵀ φ_j(Φ̂_{j-1})` with
//! `V_j ∈ ℝ^{L_j × L_{j+1}}`, `φ_j = tanh` for hidden layers and the raw
//! (optionally bias-augmented) input at layer 0.
//!
//! Weight layout: the block for layer `j` is the column-stacked `vec(V_jᵀ)`,
//! i.e. row `p` of `V_j` occupies the contiguous range
//! `offset_j + p·L_{j+1} .. offset_j + (p+1)·L_{j+1}`. With this layout the
//! per-layer Jacobian block is exactly `((aᵀ R_{i,j}) ⊗ I_{L_{j+1}})` pre-multiplied
//! by the back-propagated chain, and a dropped neuron owns one contiguous run
//! of parameters.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::linalg::{self, kronecker, right_to_left_product, LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: {what} has length {found}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value produced in layer {layer}")]
    Overflow { layer: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Layer widths of the network and the flat weight layout they induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkShape {
    input_dim: usize,
    hidden_widths: Vec<usize>,
    output_dim: usize,
    bias_augmented: bool,
}

impl NetworkShape {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        bias_augmented: bool,
    ) -> Result<Self, NetworkError> {
        if input_dim == 0 || output_dim == 0 {
            return Err(NetworkError::Config("input and output dims must be positive".into()));
        }
        if hidden_widths.is_empty() {
            return Err(NetworkError::Config("at least one hidden layer is required".into()));
        }
        if hidden_widths.contains(&0) {
            return Err(NetworkError::Config("hidden widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
            output_dim,
            bias_augmented,
        })
    }

    /// 3 inputs plus bias, seven hidden layers of ten tanh units, 3 outputs:
    /// 670 weights.
    pub fn paper() -> Self {
        Self::new(3, vec![10; 7], 3, true).expect("static shape is valid")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn bias_augmented(&self) -> bool {
        self.bias_augmented
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    /// Number of hidden layers `k`.
    pub fn hidden_layers(&self) -> usize {
        self.hidden_widths.len()
    }

    /// `L_j` for `j = 0..=k+1`.
    pub fn width(&self, j: usize) -> usize {
        let k = self.hidden_layers();
        match j {
            0 => self.input_dim + usize::from(self.bias_augmented),
            j if j <= k => self.hidden_widths[j - 1],
            j if j == k + 1 => self.output_dim,
            _ => panic!("layer {j} out of range"),
        }
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        (0..=self.hidden_layers() + 1).map(|j| self.width(j)).collect()
    }

    /// Parameters in `V_j`.
    pub fn layer_param_count(&self, j: usize) -> usize {
        self.width(j) * self.width(j + 1)
    }

    /// Total parameter count `P = Σ L_j L_{j+1}`.
    pub fn param_count(&self) -> usize {
        (0..=self.hidden_layers()).map(|j| self.layer_param_count(j)).sum()
    }

    /// Start of the `V_j` block in the flat weight vector.
    pub fn layer_offset(&self, j: usize) -> usize {
        (0..j).map(|l| self.layer_param_count(l)).sum()
    }

    /// Flat index of `V_j[p][q]`.
    pub fn weight_index(&self, j: usize, p: usize, q: usize) -> usize {
        debug_assert!(p < self.width(j) && q < self.width(j + 1));
        self.layer_offset(j) + p * self.width(j + 1) + q
    }

    /// Total size of the block-diagonal randomization matrix, `Σ_{j=0..k} L_j`.
    pub fn mask_dim(&self) -> usize {
        (0..=self.hidden_layers()).map(|j| self.width(j)).sum()
    }

    /// Appends the constant 1 when bias augmentation is on.
    pub fn augment_input(&self, x: &[f64]) -> Vec<f64> {
        let mut xa = x.to_vec();
        if self.bias_augmented {
            xa.push(1.0);
        }
        xa
    }
}

/// Flat weight vector `[vec(V_0ᵀ); …; vec(V_kᵀ)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Independent `N(0, std_dev²)` draws, consumed in layout order.
    pub fn sample_normal<R: Rng + ?Sized>(len: usize, std_dev: f64, rng: &mut R) -> Self {
        if std_dev == 0.0 {
            return Self::zeros(len);
        }
        let normal = Normal::new(0.0, std_dev).expect("finite positive std dev");
        Self((0..len).map(|_| normal.sample(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.0)
    }

    /// `V_j` as an `L_j × L_{j+1}` matrix.
    pub fn layer_matrix(&self, shape: &NetworkShape, j: usize) -> Matrix {
        let off = shape.layer_offset(j);
        let cols = shape.width(j + 1);
        Matrix::from_fn(shape.width(j), cols, |p, q| self.0[off + p * cols + q])
    }

    /// Assembles the flat vector from `[V_0, …, V_k]`.
    pub fn from_layer_matrices(shape: &NetworkShape, layers: &[Matrix]) -> Result<Self, NetworkError> {
        if layers.len() != shape.hidden_layers() + 1 {
            return Err(NetworkError::Dimension {
                what: "layer list",
                expected: shape.hidden_layers() + 1,
                found: layers.len(),
            });
        }
        let mut out = Vec::with_capacity(shape.param_count());
        for (j, v) in layers.iter().enumerate() {
            if v.shape() != (shape.width(j), shape.width(j + 1)) {
                return Err(NetworkError::Contract(format!(
                    "V_{j} is {:?}, expected {:?}",
                    v.shape(),
                    (shape.width(j), shape.width(j + 1))
                )));
            }
            out.extend(linalg::vectorize(&v.transpose()));
        }
        Ok(Self(out))
    }
}

/// Active neurons of one layer, with the diagonal of `R_{i,j}` cached.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMask {
    active: Vec<usize>,
    gate: Vec<f64>,
}

impl LayerMask {
    fn full(width: usize) -> Self {
        Self {
            active: (0..width).collect(),
            gate: vec![1.0; width],
        }
    }

    fn from_active(width: usize, mut active: Vec<usize>, scale: f64) -> Self {
        active.sort_unstable();
        let mut gate = vec![0.0; width];
        for &p in &active {
            gate[p] = scale;
        }
        Self { active, gate }
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Diagonal of `R_{i,j}`.
    pub fn gate(&self) -> &[f64] {
        &self.gate
    }

    pub fn width(&self) -> usize {
        self.gate.len()
    }

    pub fn is_full(&self) -> bool {
        self.active.len() == self.gate.len() && self.gate.iter().all(|&g| g == 1.0)
    }
}

/// Randomization matrix `R_i`, stored as per-layer active-index sets for
/// layers `0..=k`. Layer 0 is always full.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    switch_index: usize,
    layers: Vec<LayerMask>,
}

impl DropoutMask {
    /// All-active mask.
    pub fn identity(shape: &NetworkShape, switch_index: usize) -> Self {
        Self {
            switch_index,
            layers: (0..=shape.hidden_layers())
                .map(|j| LayerMask::full(shape.width(j)))
                .collect(),
        }
    }

    /// Mask from explicit active sets for hidden layers `1..=k`.
    pub fn from_active_sets(
        shape: &NetworkShape,
        active: Vec<Vec<usize>>,
        switch_index: usize,
    ) -> Result<Self, NetworkError> {
        if active.len() != shape.hidden_layers() {
            return Err(NetworkError::Dimension {
                what: "active sets",
                expected: shape.hidden_layers(),
                found: active.len(),
            });
        }
        let mut layers = vec![LayerMask::full(shape.width(0))];
        for (j, set) in active.into_iter().enumerate() {
            let width = shape.width(j + 1);
            if set.iter().any(|&p| p >= width) {
                return Err(NetworkError::Config(format!("active index out of range in layer {}", j + 1)));
            }
            let mut sorted = set.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != set.len() {
                return Err(NetworkError::Config(format!("duplicate active index in layer {}", j + 1)));
            }
            layers.push(LayerMask::from_active(width, set, 1.0));
        }
        Ok(Self { switch_index, layers })
    }

    pub fn switch_index(&self) -> usize {
        self.switch_index
    }

    pub fn layer(&self, j: usize) -> &LayerMask {
        &self.layers[j]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn is_active(&self, j: usize, p: usize) -> bool {
        self.layers[j].gate[p] != 0.0
    }

    pub fn is_identity(&self) -> bool {
        self.layers.iter().all(LayerMask::is_full)
    }

    /// Scales every surviving hidden unit by `L_j / n_j` (inverted dropout).
    pub fn with_rescaling(mut self) -> Self {
        for layer in self.layers.iter_mut().skip(1) {
            let scale = layer.width() as f64 / layer.active.len() as f64;
            for &p in &layer.active {
                layer.gate[p] = scale;
            }
        }
        self
    }

    /// Dense `R_{i,j}`.
    pub fn dense_layer(&self, j: usize) -> Matrix {
        Matrix::diagonal(&self.layers[j].gate)
    }

    /// Dense block-diagonal `R_i` of size `Σ_{j=0..k} L_j`.
    pub fn dense(&self) -> Matrix {
        let diag: Vec<f64> = self.layers.iter().flat_map(|l| l.gate.iter().copied()).collect();
        Matrix::diagonal(&diag)
    }

    /// Flat indices of weights whose row is dropped, in ascending order.
    pub fn dropped_parameters(&self, shape: &NetworkShape) -> Vec<usize> {
        let mut out = Vec::new();
        for (j, layer) in self.layers.iter().enumerate() {
            let cols = shape.width(j + 1);
            for (p, &g) in layer.gate.iter().enumerate() {
                if g == 0.0 {
                    let start = shape.weight_index(j, p, 0);
                    out.extend(start..start + cols);
                }
            }
        }
        out
    }

    fn check_shape(&self, shape: &NetworkShape) -> Result<(), NetworkError> {
        if self.layers.len() != shape.hidden_layers() + 1
            || self
                .layers
                .iter()
                .enumerate()
                .any(|(j, l)| l.width() != shape.width(j))
        {
            return Err(NetworkError::Contract("mask does not match network shape".into()));
        }
        Ok(())
    }
}

/// Draws a mask with exactly `keep_counts[j-1]` active units in hidden layer `j`.
///
/// Each hidden layer, in order `1..=k`, partially shuffles `0..L_j` and keeps
/// the first `n_j` entries.
pub fn generate_mask<R: Rng + ?Sized>(
    shape: &NetworkShape,
    keep_counts: &[usize],
    rng: &mut R,
    switch_index: usize,
) -> Result<DropoutMask, NetworkError> {
    validate_keep_counts(shape, keep_counts)?;
    let mut layers = vec![LayerMask::full(shape.width(0))];
    for (j, &keep) in keep_counts.iter().enumerate() {
        let width = shape.width(j + 1);
        let mut pool: Vec<usize> = (0..width).collect();
        let (chosen, _) = pool.partial_shuffle(rng, keep);
        layers.push(LayerMask::from_active(width, chosen.to_vec(), 1.0));
    }
    Ok(DropoutMask { switch_index, layers })
}

pub fn validate_keep_counts(shape: &NetworkShape, keep_counts: &[usize]) -> Result<(), NetworkError> {
    if keep_counts.len() != shape.hidden_layers() {
        return Err(NetworkError::Config(format!(
            "expected {} keep counts, got {}",
            shape.hidden_layers(),
            keep_counts.len()
        )));
    }
    for (j, &n) in keep_counts.iter().enumerate() {
        let width = shape.width(j + 1);
        if n == 0 || n > width {
            return Err(NetworkError::Config(format!(
                "keep count {n} for hidden layer {} must lie in 1..={width}",
                j + 1
            )));
        }
    }
    Ok(())
}

/// When and how the randomization matrix changes.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskScheduleConfig {
    pub switch_period: f64,
    /// `None` keeps dropout on for the whole run.
    pub deactivate_at: Option<f64>,
    pub keep_counts: Vec<usize>,
    pub rescale: bool,
}

// Relative slack when mapping a time onto a switch interval, so that
// `n·h / δt` lands on the intended integer despite rounding.
const INDEX_SLACK: f64 = 1e-9;

/// Piecewise-constant mask sequence `R_0, R_1, …` switching every `δt`,
/// replaced by the identity from `deactivate_at` on.
///
/// Masks are drawn lazily in index order and memoized, so the sequence only
/// depends on the generator seed, never on the query order.
#[derive(Debug, Clone)]
pub struct MaskSchedule<R> {
    shape: NetworkShape,
    config: MaskScheduleConfig,
    rng: R,
    drawn: Vec<DropoutMask>,
}

impl<R: Rng> MaskSchedule<R> {
    pub fn new(shape: NetworkShape, config: MaskScheduleConfig, rng: R) -> Result<Self, NetworkError> {
        if !(config.switch_period.is_finite() && config.switch_period > 0.0) {
            return Err(NetworkError::Config("switch period must be positive".into()));
        }
        if let Some(off) = config.deactivate_at {
            if !(off.is_finite() && off >= 0.0) {
                return Err(NetworkError::Config("deactivation time must be nonnegative".into()));
            }
        }
        validate_keep_counts(&shape, &config.keep_counts)?;
        Ok(Self {
            shape,
            config,
            rng,
            drawn: Vec::new(),
        })
    }

    pub fn config(&self) -> &MaskScheduleConfig {
        &self.config
    }

    /// Whether randomization is still running at `t`.
    pub fn is_randomizing(&self, t: f64) -> bool {
        match self.config.deactivate_at {
            None => true,
            Some(off) => t < off - INDEX_SLACK * self.config.switch_period,
        }
    }

    /// `floor(t / δt)`, frozen at the first index after deactivation.
    pub fn index_at(&self, t: f64) -> usize {
        let raw = (t / self.config.switch_period + INDEX_SLACK).floor().max(0.0) as usize;
        match self.config.deactivate_at {
            Some(off) if !self.is_randomizing(t) => {
                ((off / self.config.switch_period) - INDEX_SLACK).ceil().max(0.0) as usize
            }
            _ => raw,
        }
    }

    pub fn mask_at(&mut self, t: f64) -> Result<DropoutMask, NetworkError> {
        let index = self.index_at(t);
        if !self.is_randomizing(t) {
            return Ok(DropoutMask::identity(&self.shape, index));
        }
        while self.drawn.len() <= index {
            let i = self.drawn.len();
            let mut mask = generate_mask(&self.shape, &self.config.keep_counts, &mut self.rng, i)?;
            if self.config.rescale {
                mask = mask.with_rescaling();
            }
            self.drawn.push(mask);
        }
        Ok(self.drawn[index].clone())
    }
}

/// Elementwise `tanh` and its derivative `1 - tanh²` (the diagonal of `φ′`).
pub fn activation(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let phi: Vec<f64> = v.iter().map(|x| x.tanh()).collect();
    let dphi = phi.iter().map(|t| 1.0 - t * t).collect();
    (phi, dphi)
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    /// Layer inputs: `x_a` for layer 0, `φ̂_j = φ_j(Φ̂_{j-1})` for `j ≥ 1`.
    inputs: Vec<Vec<f64>>,
    /// `Φ̂_0 … Φ̂_k`.
    outputs: Vec<Vec<f64>>,
    /// Diagonals of `φ̂′_1 … φ̂′_k`.
    derivatives: Vec<Vec<f64>>,
    switch_index: usize,
}

impl ForwardCache {
    pub fn layer_input(&self, j: usize) -> &[f64] {
        &self.inputs[j]
    }

    pub fn layer_output(&self, j: usize) -> &[f64] {
        &self.outputs[j]
    }

    /// Diagonal of `φ̂′_j`, `j ≥ 1`.
    pub fn activation_derivative(&self, j: usize) -> &[f64] {
        &self.derivatives[j - 1]
    }

    pub fn output(&self) -> &[f64] {
        self.outputs.last().expect("at least one layer")
    }
}

fn check_weights(theta: &WeightVector, shape: &NetworkShape) -> Result<(), NetworkError> {
    if theta.len() != shape.param_count() {
        return Err(NetworkError::Dimension {
            what: "weight vector",
            expected: shape.param_count(),
            found: theta.len(),
        });
    }
    Ok(())
}

/// `Φ̂_j = Σ_p gate[p]·a[p]·V_j[p][·]` using the flat layout.
fn layer_forward(theta: &[f64], shape: &NetworkShape, j: usize, gate: &[f64], a: &[f64]) -> Vec<f64> {
    let cols = shape.width(j + 1);
    let off = shape.layer_offset(j);
    let mut out = vec![0.0; cols];
    for (p, (&g, &ap)) in gate.iter().zip(a).enumerate() {
        let s = g * ap;
        if s == 0.0 {
            continue;
        }
        let row = &theta[off + p * cols..off + (p + 1) * cols];
        for (o, w) in out.iter_mut().zip(row) {
            *o += s * w;
        }
    }
    out
}

/// Evaluates the masked network and records what the Jacobian needs.
pub fn forward(
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
) -> Result<(Vec<f64>, ForwardCache), NetworkError> {
    if x.len() != shape.input_dim() {
        return Err(NetworkError::Dimension {
            what: "input",
            expected: shape.input_dim(),
            found: x.len(),
        });
    }
    check_weights(theta, shape)?;
    mask.check_shape(shape)?;

    let k = shape.hidden_layers();
    let w = theta.as_slice();
    let mut inputs = Vec::with_capacity(k + 1);
    let mut outputs = Vec::with_capacity(k + 1);
    let mut derivatives = Vec::with_capacity(k);

    let mut a = shape.augment_input(x);
    for j in 0..=k {
        let out = layer_forward(w, shape, j, mask.layer(j).gate(), &a);
        if !linalg::all_finite(&out) {
            return Err(NetworkError::Overflow { layer: j });
        }
        if j < k {
            let (phi, dphi) = activation(&out);
            derivatives.push(dphi);
            inputs.push(std::mem::replace(&mut a, phi));
        } else {
            inputs.push(std::mem::take(&mut a));
        }
        outputs.push(out);
    }
    let output = outputs[k].clone();
    Ok((
        output,
        ForwardCache {
            inputs,
            outputs,
            derivatives,
            switch_index: mask.switch_index(),
        },
    ))
}

fn check_cache(
    cache: &ForwardCache,
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
) -> Result<(), NetworkError> {
    check_weights(theta, shape)?;
    mask.check_shape(shape)?;
    let k = shape.hidden_layers();
    let consistent = cache.inputs.len() == k + 1
        && cache.derivatives.len() == k
        && cache.switch_index == mask.switch_index()
        && cache.inputs[0] == shape.augment_input(x)
        && (0..=k).all(|j| cache.inputs[j].len() == shape.width(j));
    if !consistent {
        return Err(NetworkError::Contract(
            "forward cache was produced for different arguments".into(),
        ));
    }
    Ok(())
}

/// Weight Jacobian `Φ̂′ = [Φ̂′_0, …, Φ̂′_k]` (`L_{k+1} × P`).
///
/// Walks the layers from the output back, keeping the running product
/// `M_j = ∏^{↶}_{l=j+1..k} (R_{i,l} V̂_l)ᵀ φ̂′_l` and writing the block
/// `M_j ((aᵀ R_{i,j}) ⊗ I)`, whose column `p·L_{j+1} + q` is `gate_p a_p M_j[:, q]`.
pub fn jacobian(
    cache: &ForwardCache,
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
) -> Result<Matrix, NetworkError> {
    check_cache(cache, x, mask, theta, shape)?;
    let k = shape.hidden_layers();
    let out_dim = shape.output_dim();
    let p_total = shape.param_count();
    let w = theta.as_slice();
    let mut jac = Matrix::zeros(out_dim, p_total);

    // Running chain, row-major out_dim × L_{j+1}.
    let mut chain = Matrix::identity(out_dim);
    for j in (0..=k).rev() {
        let cols = shape.width(j + 1);
        let off = shape.layer_offset(j);
        let gate = mask.layer(j).gate();
        let a = &cache.inputs[j];
        for (p, (&g, &ap)) in gate.iter().zip(a).enumerate() {
            let s = g * ap;
            if s == 0.0 {
                continue;
            }
            for q in 0..cols {
                let col = off + p * cols + q;
                for r in 0..out_dim {
                    jac[(r, col)] = s * chain[(r, q)];
                }
            }
        }
        if j == 0 {
            break;
        }
        // chain ← chain · (R_{i,j} V̂_j)ᵀ · diag(φ̂′_j)
        let rows_j = shape.width(j);
        let dphi = &cache.derivatives[j - 1];
        let mut next = Matrix::zeros(out_dim, rows_j);
        for p in 0..rows_j {
            let s = gate[p] * dphi[p];
            if s == 0.0 {
                continue;
            }
            let row = &w[off + p * cols..off + (p + 1) * cols];
            for r in 0..out_dim {
                let acc: f64 = (0..cols).map(|q| chain[(r, q)] * row[q]).sum();
                next[(r, p)] = s * acc;
            }
        }
        chain = next;
    }
    if !jac.is_finite() {
        return Err(NetworkError::Overflow { layer: 0 });
    }
    Ok(jac)
}

/// The same Jacobian assembled literally from dense `R_{i,j}`, `V̂_j`,
/// Kronecker products and right-to-left products.
///
/// Much slower than [`jacobian`]; kept as a second algebraic route.
pub fn jacobian_kronecker(
    cache: &ForwardCache,
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
) -> Result<Matrix, NetworkError> {
    check_cache(cache, x, mask, theta, shape)?;
    let k = shape.hidden_layers();
    // (R_{i,l} V̂_l)ᵀ φ̂′_l for l = 1..=k
    let mut factors = Vec::with_capacity(k);
    for l in 1..=k {
        let rv = mask.dense_layer(l).matmul(&theta.layer_matrix(shape, l))?;
        factors.push(
            rv.transpose()
                .matmul(&Matrix::diagonal(cache.activation_derivative(l)))?,
        );
    }
    let mut blocks = Vec::with_capacity(k + 1);
    for j in 0..=k {
        let chain = right_to_left_product(&factors[j..], shape.width(j + 1))?;
        let a_r = Matrix::row(&cache.inputs[j]).matmul(&mask.dense_layer(j))?;
        let block = chain.matmul(&kronecker(&a_r, &Matrix::identity(shape.width(j + 1))))?;
        blocks.push(block);
    }
    let out_dim = shape.output_dim();
    let mut jac = Matrix::zeros(out_dim, shape.param_count());
    for (j, block) in blocks.iter().enumerate() {
        let off = shape.layer_offset(j);
        for r in 0..out_dim {
            for c in 0..block.cols() {
                jac[(r, off + c)] = block[(r, c)];
            }
        }
    }
    Ok(jac)
}

/// Convenience: forward pass followed by [`jacobian`].
pub fn forward_with_jacobian(
    x: &[f64],
    mask: &DropoutMask,
    theta: &WeightVector,
    shape: &NetworkShape,
) -> Result<(Vec<f64>, Matrix), NetworkError> {
    let (out, cache) = forward(x, mask, theta, shape)?;
    let jac = jacobian(&cache, x, mask, theta, shape)?;
    Ok((out, jac))
}
