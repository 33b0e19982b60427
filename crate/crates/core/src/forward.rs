//! Noise-free statevector evaluation of a QCNN.
//!
//! An [`ArchitectureSpec`] is an ordered list of filter layers, each acting on
//! a list of qubits. The encoded state is pushed through every projected
//! filter, qubit 0 is measured exactly, and the two outcome probabilities are
//! combined linearly into a binding free energy.

use std::fmt;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::linalg::{
    self, apply_filter_in_place, n_qubits_of, LinalgError, OrthFilter, RawFilter,
};

/// The qubit whose outcome probabilities feed the readout.
pub const MEASURED_QUBIT: usize = 0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error("architecture has no layers")]
    NoLayers,
    #[error("architecture needs at least one qubit")]
    NoQubits,
    #[error("layer {layer}: qubit {index} out of range for {n_qubits} qubits")]
    IndexOutOfRange { layer: usize, index: usize, n_qubits: usize },
    #[error("layer {layer}: qubit {index} listed twice")]
    DuplicateIndex { layer: usize, index: usize },
    #[error("layer {layer}: arity {arity} does not match {given} listed qubits")]
    ArityMismatch { layer: usize, arity: usize, given: usize },
    #[error("final layer does not act on measured qubit {MEASURED_QUBIT}")]
    FunnelViolation,
    #[error("only qubit {MEASURED_QUBIT} can be measured, got {0}")]
    MeasuredQubit(usize),
    #[error("state has {len} amplitudes but architecture expects 2^{n_qubits}")]
    StateLength { len: usize, n_qubits: usize },
    #[error("expected {expected} filters, got {got}")]
    FilterCount { expected: usize, got: usize },
    #[error("filter {layer} has arity {got}, architecture expects {expected}")]
    FilterArity { layer: usize, expected: usize, got: usize },
    #[error("unknown architecture `{0}`")]
    UnknownArch(String),
    #[error("architecture file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One filter placement: a `2^m x 2^m` filter on `qubits` (first listed is
/// the filter's most significant axis).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    qubits: Vec<usize>,
}

impl Layer {
    pub fn new(qubits: Vec<usize>) -> Self {
        Self { qubits }
    }

    pub fn arity(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchitectureSpec {
    name: String,
    n_qubits: usize,
    layers: Vec<Layer>,
}

impl ArchitectureSpec {
    /// Builds and validates an architecture.
    pub fn new(
        name: impl Into<String>,
        n_qubits: usize,
        layers: Vec<Vec<usize>>,
    ) -> Result<Self, ArchError> {
        let arch = Self {
            name: name.into(),
            n_qubits,
            layers: layers.into_iter().map(Layer::new).collect(),
        };
        validate_arch(&arch)?;
        Ok(arch)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn state_len(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn arities(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::arity).collect()
    }

    /// Filter sizes joined with `+`, e.g. `3+3+3+3`.
    pub fn filter_signature(&self) -> String {
        self.arities().iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+")
    }

    /// Renders the architecture in the text DSL accepted by [`parse_arch`].
    pub fn to_dsl(&self) -> String {
        let mut out = format!("arch {} {{\n    qubits {};\n", self.name, self.n_qubits);
        for layer in &self.layers {
            let idx: Vec<String> = layer.qubits.iter().map(|q| q.to_string()).collect();
            out.push_str(&format!("    filter {} on [{}];\n", layer.arity(), idx.join(", ")));
        }
        out.push_str(&format!("    measure {MEASURED_QUBIT}\n}}\n"));
        out
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({} qubits, {})", self.name, self.n_qubits, self.filter_signature())
    }
}

/// Structural checks: bounds, per-layer distinctness, and that the final
/// layer touches the measured qubit.
pub fn validate_arch(arch: &ArchitectureSpec) -> Result<(), ArchError> {
    if arch.n_qubits == 0 {
        return Err(ArchError::NoQubits);
    }
    if arch.layers.is_empty() {
        return Err(ArchError::NoLayers);
    }
    for (l, layer) in arch.layers.iter().enumerate() {
        for (i, &q) in layer.qubits.iter().enumerate() {
            if q >= arch.n_qubits {
                return Err(ArchError::IndexOutOfRange { layer: l, index: q, n_qubits: arch.n_qubits });
            }
            if layer.qubits[..i].contains(&q) {
                return Err(ArchError::DuplicateIndex { layer: l, index: q });
            }
        }
        if layer.qubits.is_empty() {
            return Err(ArchError::ArityMismatch { layer: l, arity: 0, given: 0 });
        }
    }
    let last = arch.layers.last().expect("non-empty");
    if !last.qubits.contains(&MEASURED_QUBIT) {
        return Err(ArchError::FunnelViolation);
    }
    Ok(())
}

/// Validation plus the encoding-length check.
pub fn validate_for_state(arch: &ArchitectureSpec, state_len: usize) -> Result<(), ArchError> {
    validate_arch(arch)?;
    if state_len != arch.state_len() {
        return Err(ArchError::StateLength { len: state_len, n_qubits: arch.n_qubits });
    }
    Ok(())
}

/// Names of the shipped architectures, in table order.
pub const BUILTIN_NAMES: [&str; 5] = ["fig1a", "fig1b", "fig1c", "fig1f", "fig1g"];

/// The five shipped architectures. Only `fig1a` has a published wiring; the
/// others follow the same funnel pattern (local layers, then a final layer
/// over the lowest qubits).
pub fn builtin_archs() -> Vec<ArchitectureSpec> {
    let spec = |name: &str, n: usize, layers: &[&[usize]]| {
        ArchitectureSpec::new(name, n, layers.iter().map(|l| l.to_vec()).collect())
            .expect("builtin architecture is valid")
    };
    vec![
        spec("fig1a", 9, &[&[0, 3, 4], &[1, 5, 6], &[2, 7, 8], &[0, 1, 2]]),
        spec("fig1b", 9, &[&[0, 3, 4, 5], &[1, 6, 7, 8], &[0, 1, 2]]),
        spec("fig1c", 9, &[&[0, 3, 4, 5, 6], &[0, 1, 2, 7, 8]]),
        spec("fig1f", 12, &[&[0, 3, 4, 5], &[1, 6, 7, 8], &[2, 9, 10, 11], &[0, 1, 2]]),
        spec("fig1g", 12, &[&[0, 4, 5, 6, 7], &[1, 8, 9, 10, 11], &[0, 1, 2, 3]]),
    ]
}

/// Looks up a builtin by name. `fig1d`/`fig1e` are accepted as aliases of
/// `fig1f`/`fig1g`.
pub fn builtin_arch(name: &str) -> Result<ArchitectureSpec, ArchError> {
    let canonical = match name {
        "fig1d" => "fig1f",
        "fig1e" => "fig1g",
        other => other,
    };
    builtin_archs()
        .into_iter()
        .find(|a| a.name == canonical)
        .ok_or_else(|| ArchError::UnknownArch(name.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Word(String),
    Number(usize),
    Sym(char),
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, ArchError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line.split('#').next().unwrap_or("");
        let mut chars = line.chars().peekable();
        while let Some(&c) = chars.peek() {
            if c.is_whitespace() {
                chars.next();
            } else if "{}[];,".contains(c) {
                out.push((line_no, Token::Sym(c)));
                chars.next();
            } else if c.is_ascii_digit() {
                let mut s = String::new();
                while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                    s.push(d);
                    chars.next();
                }
                let n = s.parse().map_err(|_| ArchError::Parse {
                    line: line_no,
                    message: format!("number `{s}` too large"),
                })?;
                out.push((line_no, Token::Number(n)));
            } else if c.is_alphanumeric() || c == '_' || c == '-' || c == '.' {
                let mut s = String::new();
                while let Some(&d) =
                    chars.peek().filter(|d| d.is_alphanumeric() || "_-.".contains(**d))
                {
                    s.push(d);
                    chars.next();
                }
                out.push((line_no, Token::Word(s)));
            } else {
                return Err(ArchError::Parse { line: line_no, message: format!("unexpected `{c}`") });
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|(l, _)| *l)
            .unwrap_or(1)
    }

    fn err(&self, message: impl Into<String>) -> ArchError {
        ArchError::Parse { line: self.line(), message: message.into() }
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn expect_sym(&mut self, c: char) -> Result<(), ArchError> {
        match self.next() {
            Some(Token::Sym(s)) if s == c => Ok(()),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected `{c}`, found {other:?}")))
            }
        }
    }

    fn expect_word(&mut self) -> Result<String, ArchError> {
        match self.next() {
            Some(Token::Word(w)) => Ok(w),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected a name, found {other:?}")))
            }
        }
    }

    fn expect_number(&mut self) -> Result<usize, ArchError> {
        match self.next() {
            Some(Token::Number(n)) => Ok(n),
            other => {
                self.pos -= 1;
                Err(self.err(format!("expected a number, found {other:?}")))
            }
        }
    }

    fn arch(&mut self) -> Result<ArchitectureSpec, ArchError> {
        if self.expect_word()? != "arch" {
            self.pos -= 1;
            return Err(self.err("expected `arch`"));
        }
        let name = self.expect_word()?;
        self.expect_sym('{')?;
        let mut n_qubits = None;
        let mut layers = Vec::new();
        let mut measured = None;
        loop {
            match self.peek() {
                Some(Token::Sym('}')) => {
                    self.pos += 1;
                    break;
                }
                Some(Token::Sym(';')) => {
                    self.pos += 1;
                    continue;
                }
                None => return Err(self.err("unterminated `arch` block")),
                _ => {}
            }
            let start = self.pos;
            let key = self.expect_word()?;
            match key.as_str() {
                "qubits" => n_qubits = Some(self.expect_number()?),
                "filter" => {
                    let line = self.line();
                    let arity = self.expect_number()?;
                    if self.expect_word()? != "on" {
                        self.pos -= 1;
                        return Err(self.err("expected `on`"));
                    }
                    self.expect_sym('[')?;
                    let mut qubits = Vec::new();
                    loop {
                        qubits.push(self.expect_number()?);
                        match self.next() {
                            Some(Token::Sym(',')) => continue,
                            Some(Token::Sym(']')) => break,
                            _ => {
                                self.pos -= 1;
                                return Err(self.err("expected `,` or `]`"));
                            }
                        }
                    }
                    if qubits.len() != arity {
                        return Err(ArchError::Parse {
                            line,
                            message: format!(
                                "filter arity {arity} but {} qubits listed",
                                qubits.len()
                            ),
                        });
                    }
                    layers.push(qubits);
                }
                "measure" => measured = Some(self.expect_number()?),
                other => {
                    self.pos = start;
                    return Err(self.err(format!("unknown statement `{other}`")));
                }
            }
        }
        let n_qubits = n_qubits.ok_or_else(|| self.err("missing `qubits` statement"))?;
        if let Some(m) = measured {
            if m != MEASURED_QUBIT {
                return Err(ArchError::MeasuredQubit(m));
            }
        }
        ArchitectureSpec::new(name, n_qubits, layers)
    }
}

/// Parses every `arch` block in a DSL document.
pub fn parse_arch_file(text: &str) -> Result<Vec<ArchitectureSpec>, ArchError> {
    let mut p = Parser { tokens: tokenize(text)?, pos: 0 };
    let mut out = Vec::new();
    while p.peek().is_some() {
        out.push(p.arch()?);
    }
    Ok(out)
}

/// Parses a DSL document holding exactly one architecture.
pub fn parse_arch(text: &str) -> Result<ArchitectureSpec, ArchError> {
    let mut archs = parse_arch_file(text)?;
    match archs.len() {
        1 => Ok(archs.remove(0)),
        n => Err(ArchError::Parse { line: 1, message: format!("expected one arch block, found {n}") }),
    }
}

/// Trainable parameters: one raw filter per layer plus the readout pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub raw_filters: Vec<RawFilter>,
    pub w0: f64,
    pub w1: f64,
}

impl ModelParams {
    pub fn check_against(&self, arch: &ArchitectureSpec) -> Result<(), ArchError> {
        if self.raw_filters.len() != arch.layers.len() {
            return Err(ArchError::FilterCount {
                expected: arch.layers.len(),
                got: self.raw_filters.len(),
            });
        }
        for (l, (f, layer)) in self.raw_filters.iter().zip(&arch.layers).enumerate() {
            if f.arity() != layer.arity() {
                return Err(ArchError::FilterArity { layer: l, expected: layer.arity(), got: f.arity() });
            }
        }
        Ok(())
    }

    /// Projects every raw filter onto the orthogonal group.
    pub fn project(&self) -> Result<Vec<OrthFilter>, LinalgError> {
        self.raw_filters.iter().map(linalg::project_orthogonal).collect()
    }

    /// Number of scalar parameters.
    pub fn len(&self) -> usize {
        self.raw_filters.iter().map(|f| f.entries().as_slice().len()).sum::<usize>() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All scalars in storage order: filters row-major, then `w0`, `w1`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .raw_filters
            .iter()
            .flat_map(|f| f.entries().as_slice().iter().copied())
            .collect();
        out.push(self.w0);
        out.push(self.w1);
        out
    }

    /// Inverse of [`flatten`](Self::flatten), reusing this model's shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.len(), "flat parameter length mismatch");
        let mut out = self.clone();
        let mut pos = 0;
        for f in &mut out.raw_filters {
            let s = f.entries_mut().as_mut_slice();
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        }
        out.w0 = flat[pos];
        out.w1 = flat[pos + 1];
        out
    }
}

/// Measurement outcome of qubit 0 and the resulting affinity estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p0: f64,
    pub p1: f64,
    pub dg_pred: f64,
}

impl Prediction {
    pub fn from_p0(p0: f64, w0: f64, w1: f64) -> Self {
        let p0 = p0.clamp(0.0, 1.0);
        let p1 = 1.0 - p0;
        Self { p0, p1, dg_pred: w0 * p0 + w1 * p1 }
    }
}

/// A model with its filters already projected, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub arch: ArchitectureSpec,
    pub filters: Vec<OrthFilter>,
    pub w0: f64,
    pub w1: f64,
}

impl CompiledModel {
    pub fn new(params: &ModelParams, arch: &ArchitectureSpec) -> Result<Self, ArchError> {
        validate_arch(arch)?;
        params.check_against(arch)?;
        Ok(Self { arch: arch.clone(), filters: params.project()?, w0: params.w0, w1: params.w1 })
    }

    /// Final statevector after all layers.
    pub fn evolve(&self, state: &[f64]) -> Result<Vec<f64>, ArchError> {
        validate_for_state(&self.arch, state.len())?;
        let mut psi = state.to_vec();
        for (filter, layer) in self.filters.iter().zip(&self.arch.layers) {
            apply_filter_in_place(&mut psi, filter, layer.qubits())?;
        }
        Ok(psi)
    }

    pub fn predict(&self, state: &[f64]) -> Result<Prediction, ArchError> {
        let psi = self.evolve(state)?;
        Ok(Prediction::from_p0(prob_zero(&psi), self.w0, self.w1))
    }
}

/// Probability of measuring qubit 0 in `|0⟩`: squared mass of the first half.
pub fn prob_zero(psi: &[f64]) -> f64 {
    psi[..psi.len() / 2].iter().map(|a| a * a).sum()
}

/// Statevector forward pass. Filters are projected on every call; use
/// [`CompiledModel`] to amortise that over a batch.
pub fn forward(
    state: &[f64],
    params: &ModelParams,
    arch: &ArchitectureSpec,
) -> Result<Prediction, ArchError> {
    CompiledModel::new(params, arch)?.predict(state)
}

/// Finite-shot estimate of `p0` from a binomial draw.
pub fn sample_p0<R: Rng + ?Sized>(p0: f64, shots: u64, rng: &mut R) -> f64 {
    if shots == 0 {
        return p0;
    }
    let hits = Binomial::new(shots, p0.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng);
    hits as f64 / shots as f64
}

/// Evaluates one `n`-qubit operator on `2^m` states at once by stacking them
/// into a single `(m + n)`-qubit register and applying
/// `diag(u_bind, ..., u_bind)`, which is `u_bind` on the low `n` qubits.
pub fn block_parallel_apply(
    states: &[Vec<f64>],
    u_bind: &OrthFilter,
) -> Result<Vec<Vec<f64>>, ArchError> {
    let n = u_bind.arity();
    let block = 1usize << n;
    if states.is_empty() || !states.len().is_power_of_two() {
        return Err(ArchError::StateLength { len: states.len(), n_qubits: n });
    }
    if let Some(bad) = states.iter().find(|s| s.len() != block) {
        return Err(ArchError::StateLength { len: bad.len(), n_qubits: n });
    }
    let m = n_qubits_of(states.len()).expect("power of two");
    let scale = (states.len() as f64).sqrt();
    let mut register: Vec<f64> = states.iter().flatten().map(|a| a / scale).collect();
    let targets: Vec<usize> = (m..m + n).collect();
    apply_filter_in_place(&mut register, u_bind, &targets)?;
    Ok(register.chunks(block).map(|c| c.iter().map(|a| a * scale).collect()).collect())
}
