//! Ising models, their dependency graphs and structural diagnostics.

mod graph;

pub use graph::DependencyGraph;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spin is `+1` or `-1`, stored as `i8`.
pub type Spin = i8;

/// Configuration `x` for bit mask `mask`: bit `i` set means `x_i = +1`.
pub fn spins_from_mask(mask: u64, n: usize) -> Vec<Spin> {
    (0..n).map(|i| if mask >> i & 1 == 1 { 1 } else { -1 }).collect()
}

pub fn mask_from_spins(x: &[Spin]) -> u64 {
    x.iter()
        .enumerate()
        .fold(0u64, |m, (i, &s)| if s > 0 { m | 1 << i } else { m })
}

pub(crate) fn check_spins(x: &[Spin], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if let Some(&bad) = x.iter().find(|&&s| s != 1 && s != -1) {
        return Err(Error::InvalidParameter(format!("spin value {bad} is not ±1")));
    }
    Ok(())
}

/// Logistic function.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[default]
    Ising,
    Tree,
}

/// On-disk model description:
/// `{"n", "couplings": [[i, j, w]...], "fields": [...], "kind"}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub n: usize,
    pub couplings: Vec<(usize, usize, f64)>,
    pub fields: Vec<f64>,
    #[serde(default)]
    pub kind: ModelKind,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Violation {
    SelfLoop(usize),
    DuplicateEdge(usize, usize),
    IndexOutOfRange { index: usize, n: usize },
    NonFiniteWeight { i: usize, j: usize },
    NonFiniteField(usize),
    FieldCount { expected: usize, got: usize },
    NotATree,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop(i) => write!(f, "self-loop at {i}"),
            Violation::DuplicateEdge(i, j) => write!(f, "duplicate edge ({i},{j})"),
            Violation::IndexOutOfRange { index, n } => {
                write!(f, "index {index} out of range for n={n}")
            }
            Violation::NonFiniteWeight { i, j } => write!(f, "non-finite weight on ({i},{j})"),
            Violation::NonFiniteField(i) => write!(f, "non-finite field at {i}"),
            Violation::FieldCount { expected, got } => {
                write!(f, "expected {expected} fields, got {got}")
            }
            Violation::NotATree => write!(f, "kind is tree but the dependency graph is not a tree"),
        }
    }
}

/// Structured list of everything wrong with a model description; empty iff
/// the description is well formed.
pub fn validate_model(file: &ModelFile) -> Vec<Violation> {
    let n = file.n;
    let mut out = Vec::new();
    if file.fields.len() != n {
        out.push(Violation::FieldCount { expected: n, got: file.fields.len() });
    }
    for (i, h) in file.fields.iter().enumerate() {
        if !h.is_finite() {
            out.push(Violation::NonFiniteField(i));
        }
    }
    let mut seen = BTreeMap::new();
    let mut edges = Vec::new();
    for &(i, j, w) in &file.couplings {
        if i >= n || j >= n {
            out.push(Violation::IndexOutOfRange { index: i.max(j), n });
            continue;
        }
        if i == j {
            out.push(Violation::SelfLoop(i));
            continue;
        }
        if !w.is_finite() {
            out.push(Violation::NonFiniteWeight { i, j });
        }
        let key = (i.min(j), i.max(j));
        if seen.insert(key, ()).is_some() {
            out.push(Violation::DuplicateEdge(key.0, key.1));
        } else if w != 0.0 {
            edges.push(key);
        }
    }
    if file.kind == ModelKind::Tree && out.is_empty() {
        let g = DependencyGraph::from_edges(n, edges).expect("edges already validated");
        if !g.is_tree() {
            out.push(Violation::NotATree);
        }
    }
    out
}

/// Ising model `mu(x) ∝ exp(½ xᵀAx + hᵀx)` on `{±1}^n`. The diagonal of `A`
/// is always zero here; it only shifts the log-weight by a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    n: usize,
    couplings: Vec<(usize, usize, f64)>,
    fields: Vec<f64>,
    kind: ModelKind,
    weighted: Vec<Vec<(usize, f64)>>,
    graph: DependencyGraph,
}

impl IsingModel {
    /// Builds a model from an edge list; rejects anything
    /// [`validate_model`] would flag. Zero couplings are dropped.
    pub fn new(n: usize, couplings: Vec<(usize, usize, f64)>, fields: Vec<f64>) -> Result<Self> {
        Self::from_file(&ModelFile { n, couplings, fields, kind: ModelKind::Ising })
    }

    pub fn from_file(file: &ModelFile) -> Result<Self> {
        let violations = validate_model(file);
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidModel(text.join("; ")));
        }
        let mut couplings: Vec<(usize, usize, f64)> = file
            .couplings
            .iter()
            .filter(|c| c.2 != 0.0)
            .map(|&(i, j, w)| (i.min(j), i.max(j), w))
            .collect();
        couplings.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let n = file.n;
        let mut weighted = vec![Vec::new(); n];
        for &(i, j, w) in &couplings {
            weighted[i].push((j, w));
            weighted[j].push((i, w));
        }
        for list in &mut weighted {
            list.sort_by_key(|e| e.0);
        }
        let graph = DependencyGraph::from_edges(n, couplings.iter().map(|c| (c.0, c.1)))?;
        Ok(Self { n, couplings, fields: file.fields.clone(), kind: file.kind, weighted, graph })
    }

    /// Builds a model from a dense symmetric matrix; the diagonal is ignored.
    pub fn from_dense(a: &nalgebra::DMatrix<f64>, fields: Vec<f64>) -> Result<Self> {
        let n = fields.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        let mut couplings = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * (1.0 + a[(i, j)].abs()) {
                    return Err(Error::InvalidModel(format!("matrix not symmetric at ({i},{j})")));
                }
                if a[(i, j)] != 0.0 {
                    couplings.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::new(n, couplings, fields)
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(n, Vec::new(), vec![0.0; n]).expect("empty model is valid")
    }

    /// Rows x cols lattice with coupling `beta` on every edge and field `h`.
    pub fn grid(rows: usize, cols: usize, beta: f64, h: f64) -> Self {
        let g = DependencyGraph::grid(rows, cols);
        let couplings = g.edges().map(|(u, v)| (u, v, beta)).collect();
        Self::new(rows * cols, couplings, vec![h; rows * cols]).expect("grid model is valid")
    }

    pub fn path(n: usize, beta: f64, h: f64) -> Self {
        let couplings = (1..n).map(|i| (i - 1, i, beta)).collect();
        let mut m = Self::new(n, couplings, vec![h; n]).expect("path model is valid");
        m.kind = ModelKind::Tree;
        m
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Result<Self> {
        if kind == ModelKind::Tree && !self.graph.is_tree() {
            return Err(Error::NotATree);
        }
        self.kind = kind;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[(usize, usize, f64)] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn graph(&self) -> &DependencyGraph {
        &self.graph
    }

    /// Weighted neighbor list `(j, A_vj)` of `v`.
    pub fn weighted_neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.weighted[v]
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.weighted[i]
            .binary_search_by_key(&j, |e| e.0)
            .map(|k| self.weighted[i][k].1)
            .unwrap_or(0.0)
    }

    /// Whether the dependency graph is acyclic (tree inference applies).
    pub fn is_forest(&self) -> bool {
        self.graph.is_forest()
    }

    pub fn dense_couplings(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j, w) in &self.couplings {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            n: self.n,
            couplings: self.couplings.clone(),
            fields: self.fields.clone(),
            kind: self.kind,
        }
    }

    /// The law of the unpinned variables given `pinning`, as an Ising model on
    /// those variables (ascending original index) with the pinned couplings
    /// folded into the fields. Returns the model and the original indices.
    pub fn conditional_model(&self, pinning: &PartialConfiguration) -> Result<(IsingModel, Vec<usize>)> {
        pinning.check(self.n)?;
        let free: Vec<usize> = (0..self.n).filter(|&v| !pinning.contains(v)).collect();
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in free.iter().enumerate() {
            index[v] = k;
        }
        let fields = free
            .iter()
            .map(|&v| {
                self.fields[v]
                    + self.weighted[v]
                        .iter()
                        .filter_map(|&(j, w)| pinning.get(j).map(|s| w * f64::from(s)))
                        .sum::<f64>()
            })
            .collect();
        let couplings = self
            .couplings
            .iter()
            .filter(|c| index[c.0] != usize::MAX && index[c.1] != usize::MAX)
            .map(|&(i, j, w)| (index[i], index[j], w))
            .collect();
        let m = IsingModel::new(free.len(), couplings, fields)?;
        Ok((m, free))
    }

    /// The model induced on `vars` (couplings among them, their own fields).
    /// Exact for marginals when `vars` is a union of connected components.
    pub fn induced(&self, vars: &[usize]) -> Result<IsingModel> {
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in vars.iter().enumerate() {
            if v >= self.n {
                return Err(Error::IndexOutOfRange { index: v, n: self.n });
            }
            index[v] = k;
        }
        let couplings = self
            .couplings
            .iter()
            .filter(|c| index[c.0] != usize::MAX && index[c.1] != usize::MAX)
            .map(|&(i, j, w)| (index[i], index[j], w))
            .collect();
        IsingModel::new(vars.len(), couplings, vars.iter().map(|&v| self.fields[v]).collect())
    }

    /// `½ xᵀAx + hᵀx` with zero diagonal.
    pub fn log_weight(&self, x: &[Spin]) -> Result<f64> {
        check_spins(x, self.n)?;
        Ok(self.log_weight_unchecked(x))
    }

    pub(crate) fn log_weight_unchecked(&self, x: &[Spin]) -> f64 {
        let pair: f64 = self
            .couplings
            .iter()
            .map(|&(i, j, w)| w * f64::from(x[i]) * f64::from(x[j]))
            .sum();
        let field: f64 = self.fields.iter().zip(x).map(|(h, &s)| h * f64::from(s)).sum();
        pair + field
    }

    /// Log-weight of configuration `mask`.
    pub(crate) fn log_weight_mask(&self, mask: u64) -> f64 {
        let s = |i: usize| if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        let pair: f64 = self.couplings.iter().map(|&(i, j, w)| w * s(i) * s(j)).sum();
        let field: f64 = self.fields.iter().enumerate().map(|(i, h)| h * s(i)).sum();
        pair + field
    }

    /// Local field `Σ_j A_vj x_j + h_v` seen by `v` under configuration `x`.
    pub fn local_field(&self, v: usize, x: &[Spin]) -> f64 {
        self.fields[v]
            + self.weighted[v].iter().map(|&(j, w)| w * f64::from(x[j])).sum::<f64>()
    }

    pub(crate) fn local_field_mask(&self, v: usize, mask: u64) -> f64 {
        self.fields[v]
            + self.weighted[v]
                .iter()
                .map(|&(j, w)| if mask >> j & 1 == 1 { w } else { -w })
                .sum::<f64>()
    }

    /// Row-wise l1 width `Σ_{j≠i} |A_ij| + |h_i|`.
    pub fn row_widths(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                self.weighted[i].iter().map(|e| e.1.abs()).sum::<f64>() + self.fields[i].abs()
            })
            .collect()
    }

    pub fn diagnostics(&self) -> ModelDiagnostics {
        let width = self.row_widths().into_iter().fold(0.0, f64::max);
        let mut growth_profile = vec![1.min(self.n)];
        if self.n > 0 {
            let mut r = 1;
            loop {
                let size = self.graph.max_ball_size(r);
                let prev = *growth_profile.last().unwrap();
                growth_profile.push(size);
                if size == prev {
                    break;
                }
                r += 1;
            }
            growth_profile.pop();
            if growth_profile.is_empty() {
                growth_profile.push(1);
            }
        }
        ModelDiagnostics {
            width,
            eta: (-2.0 * width).exp().min(0.5),
            marginal_bound: sigmoid(-2.0 * width),
            max_degree: self.graph.max_degree(),
            growth_profile,
        }
    }
}

/// Structural summary: l1 width, marginal lower bounds, max degree and
/// per-radius maximum ball size (indexed by radius, until it saturates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDiagnostics {
    pub width: f64,
    /// `min(exp(−2·width), ½)`, the customary width-based marginal bound.
    pub eta: f64,
    /// `σ(−2·width) = 1/(1 + e^{2·width})`: the exact minimum of any
    /// conditional spin probability over all pinnings. It is slightly below
    /// `eta`, and it is the value samplers rely on.
    pub marginal_bound: f64,
    pub max_degree: usize,
    pub growth_profile: Vec<usize>,
}

impl ModelDiagnostics {
    /// `max_v |B_r(v)|` for any radius, saturating past the profile.
    pub fn ball_size(&self, r: usize) -> usize {
        *self.growth_profile.get(r).or(self.growth_profile.last()).unwrap_or(&0)
    }
}

/// A pinning: spins fixed on a subset of variables.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialConfiguration {
    assignments: BTreeMap<usize, Spin>,
}

impl PartialConfiguration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, Spin)>) -> Result<Self> {
        let mut out = Self::new();
        for (i, s) in pairs {
            out.pin(n, i, s)?;
        }
        Ok(out)
    }

    /// Restriction of a full configuration to `vars`.
    pub fn restrict(x: &[Spin], vars: &[usize]) -> Self {
        Self { assignments: vars.iter().map(|&v| (v, x[v])).collect() }
    }

    pub fn pin(&mut self, n: usize, i: usize, s: Spin) -> Result<()> {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        if s != 1 && s != -1 {
            return Err(Error::InvalidParameter(format!("spin value {s} is not ±1")));
        }
        if let Some(&old) = self.assignments.get(&i) {
            if old != s {
                return Err(Error::InvalidParameter(format!("variable {i} pinned twice")));
            }
        }
        self.assignments.insert(i, s);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Option<Spin> {
        self.assignments.get(&i).copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.assignments.contains_key(&i)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Spin)> + '_ {
        self.assignments.iter().map(|(&i, &s)| (i, s))
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        match self.assignments.keys().next_back() {
            Some(&i) if i >= n => Err(Error::IndexOutOfRange { index: i, n }),
            _ => Ok(()),
        }
    }
}
