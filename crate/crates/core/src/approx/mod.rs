//! Small differentiable models with hand-coded gradients.
//!
//! Three model kinds cover everything the toolkit trains: linear maps over a
//! feature vector (one-hot inputs make these exactly tabular), multilayer
//! perceptrons, and fixed-form Fourier feature maps.

mod checkpoint;
mod gradcheck;
mod optim;

pub use checkpoint::{read_model, write_model};
pub use gradcheck::{check_gradient, value_and_gradient, FnObjective, GradCheck, Objective};
pub use optim::{optimizer_step, Method, OptimizerState};

use std::fmt;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `y = W x`, a single weight block and no bias.
    LinearInFeatures,
    /// Hidden layers with an activation, then a linear output layer.
    Multilayer,
    /// `y = c · [cos(W x), sin(W x)]` with frequency block `W` and scalar `c`.
    Fourier,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LinearInFeatures => "linear_in_features",
            ModelKind::Multilayer => "multilayer",
            ModelKind::Fourier => "fourier",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear_in_features" => Some(ModelKind::LinearInFeatures),
            "multilayer" => Some(ModelKind::Multilayer),
            "fourier" => Some(ModelKind::Fourier),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Hidden widths; empty unless `kind` is `Multilayer`.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::LinearInFeatures,
            layer_widths: Vec::new(),
            activation: Activation::Tanh,
            input_dim,
            output_dim,
        }
    }

    pub fn multilayer(input_dim: usize, hidden: &[usize], output_dim: usize, activation: Activation) -> Self {
        Self {
            kind: ModelKind::Multilayer,
            layer_widths: hidden.to_vec(),
            activation,
            input_dim,
            output_dim,
        }
    }

    pub fn fourier(input_dim: usize, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::Fourier,
            layer_widths: Vec::new(),
            activation: Activation::Tanh,
            input_dim,
            output_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        match self.kind {
            ModelKind::LinearInFeatures if !self.layer_widths.is_empty() => {
                Err(Error::invalid("linear_in_features takes no hidden layers"))
            }
            ModelKind::Fourier if self.output_dim % 2 != 0 => {
                Err(Error::invalid("fourier output dimension must be even"))
            }
            ModelKind::Fourier if !self.layer_widths.is_empty() => {
                Err(Error::invalid("fourier takes no hidden layers"))
            }
            _ => Ok(()),
        }
    }

    /// `(name, length)` of each parameter block in storage order.
    pub fn blocks(&self) -> Vec<(String, usize)> {
        match self.kind {
            ModelKind::LinearInFeatures => vec![("w".into(), self.input_dim * self.output_dim)],
            ModelKind::Fourier => vec![
                ("freq".into(), self.output_dim / 2 * self.input_dim),
                ("scale".into(), 1),
            ],
            ModelKind::Multilayer => {
                let dims = self.layer_dims();
                let mut out = Vec::new();
                for (l, pair) in dims.windows(2).enumerate() {
                    out.push((format!("w{l}"), pair[0] * pair[1]));
                    out.push((format!("b{l}"), pair[1]));
                }
                out
            }
        }
    }

    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend_from_slice(&self.layer_widths);
        dims.push(self.output_dim);
        dims
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, n)| n).sum()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.layer_widths.iter().map(|w| w.to_string()).collect();
        write!(
            f,
            "{} in={} out={} widths={} activation={}",
            self.kind.name(),
            self.input_dim,
            self.output_dim,
            if widths.is_empty() {
                "-".to_string()
            } else {
                widths.join(",")
            },
            self.activation.name()
        )
    }
}

impl ModelSpec {
    pub fn parse(line: &str) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let kind = parts
            .next()
            .and_then(ModelKind::parse)
            .ok_or_else(|| Error::parse(format!("bad model kind in `{line}`")))?;
        let mut spec = ModelSpec::linear(1, 1);
        spec.kind = kind;
        for part in parts {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("bad model field `{part}`")))?;
            match key {
                "in" => spec.input_dim = value.parse().map_err(|_| Error::parse("bad input dim"))?,
                "out" => spec.output_dim = value.parse().map_err(|_| Error::parse("bad output dim"))?,
                "widths" if value == "-" => spec.layer_widths.clear(),
                "widths" => {
                    spec.layer_widths = value
                        .split(',')
                        .map(|w| w.parse().map_err(|_| Error::parse("bad layer width")))
                        .collect::<Result<_>>()?
                }
                "activation" => {
                    spec.activation = Activation::parse(value).ok_or_else(|| Error::parse("bad activation"))?
                }
                _ => return Err(Error::parse(format!("unknown model field `{key}`"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// A flat parameter vector partitioned into named blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Block>,
}

impl ParamVector {
    pub fn from_blocks(blocks: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut values = Vec::new();
        let mut layout = Vec::new();
        for (name, data) in blocks {
            if layout.iter().any(|b: &Block| b.name == name) {
                return Err(Error::invalid(format!("duplicate block `{name}`")));
            }
            layout.push(Block {
                name,
                offset: values.len(),
                len: data.len(),
            });
            values.extend(data);
        }
        let pv = Self { values, layout };
        pv.check_finite()?;
        Ok(pv)
    }

    pub fn zeros_like(spec: &ModelSpec) -> Self {
        Self::from_blocks(spec.blocks().into_iter().map(|(n, len)| (n, vec![0.0; len])).collect())
            .expect("spec block names are unique")
    }

    pub fn with_layout(layout: Vec<Block>, values: Vec<f64>) -> Result<Self> {
        let mut next = 0;
        for b in &layout {
            if b.offset != next {
                return Err(Error::invalid(format!("block `{}` does not start at {next}", b.name)));
            }
            next += b.len;
        }
        if next != values.len() {
            return Err(Error::shape(format!(
                "layout covers {next} values but {} were given",
                values.len()
            )));
        }
        let pv = Self { values, layout };
        pv.check_finite()?;
        Ok(pv)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &[Block] {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout
            .iter()
            .find(|b| b.name == name)
            .map(|b| &self.values[b.offset..b.offset + b.len])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let b = self.layout.iter().find(|b| b.name == name)?.clone();
        Some(&mut self.values[b.offset..b.offset + b.len])
    }

    /// Replace all values, keeping the layout.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::shape("parameter length changed"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(format!("parameter {i}"))),
            None => Ok(()),
        }
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// A model input. One-hot inputs skip the dense multiply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Input<'a> {
    Dense(&'a [f64]),
    OneHot { index: usize, dim: usize },
}

impl Input<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Input::Dense(x) => x.len(),
            Input::OneHot { dim, .. } => *dim,
        }
    }

    /// `W x` for a row-major `rows × dim` matrix `w`.
    fn matvec(&self, w: &[f64], rows: usize, out: &mut [f64]) {
        match *self {
            Input::Dense(x) => {
                let cols = x.len();
                for (r, o) in out.iter_mut().enumerate().take(rows) {
                    *o = w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            Input::OneHot { index, dim } => {
                for (r, o) in out.iter_mut().enumerate().take(rows) {
                    *o = w[r * dim + index];
                }
            }
        }
    }

    /// `gw += g xᵀ`.
    fn outer_accumulate(&self, g: &[f64], gw: &mut [f64]) {
        match *self {
            Input::Dense(x) => {
                let cols = x.len();
                for (r, &gr) in g.iter().enumerate() {
                    if gr == 0.0 {
                        continue;
                    }
                    for (w, &xc) in gw[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                        *w += gr * xc;
                    }
                }
            }
            Input::OneHot { index, dim } => {
                for (r, &gr) in g.iter().enumerate() {
                    gw[r * dim + index] += gr;
                }
            }
        }
    }
}

/// A model spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamVector,
}

impl Model {
    pub fn new(spec: ModelSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        let expected = spec.blocks();
        let got: Vec<(String, usize)> = params.layout.iter().map(|b| (b.name.clone(), b.len)).collect();
        if expected != got {
            return Err(Error::shape(format!(
                "parameter layout {got:?} does not match spec {expected:?}"
            )));
        }
        params.check_finite()?;
        Ok(Self { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        let params = ParamVector::zeros_like(&spec);
        Self::new(spec, params)
    }

    /// Multilayer weights uniform in `±√(6/(fan_in+fan_out))` with zero biases;
    /// other kinds start at zero.
    pub fn init(spec: ModelSpec, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::zeros(spec)?;
        if model.spec.kind == ModelKind::Multilayer {
            let dims = model.spec.layer_dims();
            for (l, pair) in dims.windows(2).enumerate() {
                let bound = (6.0 / (pair[0] + pair[1]) as f64).sqrt();
                for w in model.params.block_mut(&format!("w{l}")).expect("block exists") {
                    *w = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(model)
    }

    /// Every weight uniform in `±scale`; used where a zero start is a saddle.
    pub fn init_uniform(spec: ModelSpec, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut model = Self::init(spec, rng)?;
        if model.spec.kind == ModelKind::LinearInFeatures {
            for w in model.params.values_mut() {
                *w = rng.random_range(-scale..scale);
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        self.params.set_values(values)
    }

    fn check_input(&self, input: &Input) -> Result<()> {
        if input.dim() != self.spec.input_dim {
            return Err(Error::shape(format!(
                "model expects input dimension {}, got {}",
                self.spec.input_dim,
                input.dim()
            )));
        }
        if let Input::OneHot { index, dim } = *input {
            if index >= dim {
                return Err(Error::shape(format!("one-hot index {index} out of range {dim}")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: &Input) -> Result<Vec<f64>> {
        self.check_input(input)?;
        Ok(self.trace(input).output)
    }

    pub fn forward_dense(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward(&Input::Dense(x))
    }

    fn trace(&self, input: &Input) -> Trace {
        let p = &self.params;
        match self.spec.kind {
            ModelKind::LinearInFeatures => {
                let mut out = vec![0.0; self.spec.output_dim];
                input.matvec(p.block("w").expect("block exists"), self.spec.output_dim, &mut out);
                Trace {
                    hidden: Vec::new(),
                    output: out,
                }
            }
            ModelKind::Fourier => {
                let m = self.spec.output_dim / 2;
                let mut z = vec![0.0; m];
                input.matvec(p.block("freq").expect("block exists"), m, &mut z);
                let c = p.block("scale").expect("block exists")[0];
                let mut out = Vec::with_capacity(2 * m);
                out.extend(z.iter().map(|v| c * v.cos()));
                out.extend(z.iter().map(|v| c * v.sin()));
                Trace {
                    hidden: vec![z],
                    output: out,
                }
            }
            ModelKind::Multilayer => {
                let dims = self.spec.layer_dims();
                let layers = dims.len() - 1;
                let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(layers - 1);
                let mut out = Vec::new();
                for l in 0..layers {
                    let w = p.block(&format!("w{l}")).expect("block exists");
                    let b = p.block(&format!("b{l}")).expect("block exists");
                    let mut z = vec![0.0; dims[l + 1]];
                    match hidden.last() {
                        None => input.matvec(w, dims[l + 1], &mut z),
                        Some(h) => Input::Dense(h).matvec(w, dims[l + 1], &mut z),
                    }
                    for (zi, bi) in z.iter_mut().zip(b) {
                        *zi += bi;
                    }
                    if l + 1 < layers {
                        for zi in &mut z {
                            *zi = self.spec.activation.apply(*zi);
                        }
                        hidden.push(z);
                    } else {
                        out = z;
                    }
                }
                Trace { hidden, output: out }
            }
        }
    }

    /// Adds `J(input)ᵀ grad_out` into `grad_params` (same layout as the
    /// parameters) and returns the model output.
    pub fn backward(&self, input: &Input, grad_out: &[f64], grad_params: &mut [f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        if grad_out.len() != self.spec.output_dim || grad_params.len() != self.params.len() {
            return Err(Error::shape("backward buffer sizes"));
        }
        let trace = self.trace(input);
        let layout = &self.params.layout;
        let span = |name: &str| {
            let b = layout.iter().find(|b| b.name == name).expect("block exists");
            b.offset..b.offset + b.len
        };
        match self.spec.kind {
            ModelKind::LinearInFeatures => {
                input.outer_accumulate(grad_out, &mut grad_params[span("w")]);
            }
            ModelKind::Fourier => {
                let m = self.spec.output_dim / 2;
                let c = self.params.block("scale").expect("block exists")[0];
                let z = &trace.hidden[0];
                let mut gz = vec![0.0; m];
                let mut gc = 0.0;
                for i in 0..m {
                    let (cs, sn) = (z[i].cos(), z[i].sin());
                    gc += grad_out[i] * cs + grad_out[m + i] * sn;
                    gz[i] = c * (-grad_out[i] * sn + grad_out[m + i] * cs);
                }
                input.outer_accumulate(&gz, &mut grad_params[span("freq")]);
                grad_params[span("scale")][0] += gc;
            }
            ModelKind::Multilayer => {
                let dims = self.spec.layer_dims();
                let layers = dims.len() - 1;
                let mut g = grad_out.to_vec();
                for l in (0..layers).rev() {
                    for (gb, gi) in grad_params[span(&format!("b{l}"))].iter_mut().zip(&g) {
                        *gb += gi;
                    }
                    let w_span = span(&format!("w{l}"));
                    if l == 0 {
                        input.outer_accumulate(&g, &mut grad_params[w_span]);
                        break;
                    }
                    let h = &trace.hidden[l - 1];
                    Input::Dense(h).outer_accumulate(&g, &mut grad_params[w_span]);
                    let w = self.params.block(&format!("w{l}")).expect("block exists");
                    let cols = dims[l];
                    let mut gh = vec![0.0; cols];
                    for (r, &gr) in g.iter().enumerate() {
                        for (c, ghc) in gh.iter_mut().enumerate() {
                            *ghc += gr * w[r * cols + c];
                        }
                    }
                    for (ghc, &hc) in gh.iter_mut().zip(h) {
                        *ghc *= self.spec.activation.derivative_from_output(hc);
                    }
                    g = gh;
                }
            }
        }
        Ok(trace.output)
    }
}

struct Trace {
    hidden: Vec<Vec<f64>>,
    output: Vec<f64>,
}

/// Evaluates `spec` with `params` on a dense input, checking parameters first.
pub fn forward(spec: &ModelSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    let model = Model::new(spec.clone(), params.clone())?;
    model.forward_dense(input)
}
