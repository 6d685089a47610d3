//! Meshes, nodal functions and the weakly singular integrals built on them.
//!
//! Every nodal function is read as the piecewise-linear interpolant of its
//! values. The Abel integral `∫ y(s) (t − s)^(−β) ds` then has a closed form
//! on each cell (product integration), so the singular point `s = t` is never
//! sampled. The same model is used when `t` falls strictly between nodes.
//!
//! The Caputo derivative follows the L1 scheme: the derivative of `h` is the
//! constant difference quotient on each cell and the kernel `(t − s)^(−α)` is
//! integrated exactly against it.

use crate::error::{config, domain, Error, Result};
use crate::format::fmt_f64;
use crate::specfun::gamma_fn;
use std::io::{Read, Write};
use std::sync::Arc;

/// Strictly increasing node sequence on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    grading: Option<f64>,
}

impl Mesh {
    /// Graded mesh with `n` cells: node `i` is `a + (b − a)(i/n)^r`.
    pub fn graded(a: f64, b: f64, n: usize, r: f64) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return config(format!("mesh needs a < b, got [{a}, {b}]"));
        }
        if n < 2 {
            return config(format!("mesh needs at least 2 cells, got {n}"));
        }
        if !(r >= 1.0) || !r.is_finite() {
            return config(format!("grading exponent must be >= 1, got {r}"));
        }
        let len = b - a;
        let mut nodes: Vec<f64> = (0..=n)
            .map(|i| a + len * (i as f64 / n as f64).powf(r))
            .collect();
        nodes[n] = b;
        let mesh = Self {
            nodes,
            grading: Some(r),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::graded(a, b, n, 1.0)
    }

    /// Mesh from explicit nodes; they must be finite and strictly increasing.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let mesh = Self {
            nodes,
            grading: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Uniform cells on `[0, split]` followed by a graded mesh on `[split, b]`.
    ///
    /// Used for solutions that vanish up to `split` and grow like a power of
    /// `t − split` afterwards. `split` is always a node.
    pub fn split_graded(split: f64, b: f64, n_left: usize, n_right: usize, r: f64) -> Result<Self> {
        let right = Self::graded(split, b, n_right, r)?;
        if split == 0.0 {
            return Ok(right);
        }
        if !(split > 0.0) {
            return config(format!("split point must be >= 0, got {split}"));
        }
        let n_left = n_left.max(1);
        let mut nodes: Vec<f64> = (0..n_left)
            .map(|i| split * i as f64 / n_left as f64)
            .collect();
        nodes.extend_from_slice(&right.nodes);
        let mesh = Self {
            nodes,
            grading: Some(r),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        if self.nodes.len() < 2 {
            return config("mesh needs at least two nodes");
        }
        if self.nodes.iter().any(|x| !x.is_finite()) {
            return config("mesh nodes must be finite");
        }
        if let Some(i) = self.nodes.windows(2).position(|w| !(w[0] < w[1])) {
            return config(format!(
                "mesh nodes must be strictly increasing (nodes {} and {})",
                i,
                i + 1
            ));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn grading(&self) -> Option<f64> {
        self.grading
    }

    /// Index of the first node `>= t` (up to a relative 1e-14 snap).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.nodes.partition_point(|&x| x < t);
        let snap = 1e-14 * (1.0 + t.abs());
        if i < self.nodes.len() && (self.nodes[i] - t).abs() <= snap {
            Some(i)
        } else if i > 0 && (self.nodes[i - 1] - t).abs() <= snap {
            Some(i - 1)
        } else {
            None
        }
    }

    fn check_inside(&self, t: f64) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return domain(format!(
                "t = {t} outside mesh [{}, {}]",
                self.start(),
                self.end()
            ));
        }
        Ok(())
    }

    /// Cell `[nodes[k], nodes[k+1]]` containing `t`, preferring the left cell
    /// at interior nodes.
    fn cell_left_of(&self, t: f64) -> usize {
        let i = self.nodes.partition_point(|&x| x < t);
        i.saturating_sub(1).min(self.nodes.len() - 2)
    }
}

/// Nodal values on a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return config(format!(
                "{} values for a mesh of {} nodes",
                values.len(),
                mesh.len()
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("non-finite value {} at node {i}", values[i]));
        }
        Ok(Self { mesh, values })
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&t| f(t)).collect();
        Self::new(mesh, values)
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let values = vec![0.0; mesh.len()];
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn nodes(&self) -> &[f64] {
        self.mesh.nodes()
    }

    /// Piecewise-linear interpolation.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        self.mesh.check_inside(t)?;
        let k = self.mesh.cell_left_of(t);
        let (l, r) = (self.mesh.nodes[k], self.mesh.nodes[k + 1]);
        let w = (t - l) / (r - l);
        Ok(self.values[k] + w * (self.values[k + 1] - self.values[k]))
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Nodal sup-distance; both functions must live on the same nodes.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if !Arc::ptr_eq(&self.mesh, &other.mesh) && self.mesh.nodes != other.mesh.nodes {
            return config("sup_distance needs functions on the same mesh");
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// CSV with header `t,value`, one row per node, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (t, v) in self.nodes().iter().zip(&self.values) {
            writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*v))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let rows = read_two_column_csv(input, ("t", "value"))?;
        let (nodes, values): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
        let mesh = Arc::new(Mesh::from_nodes(nodes)?);
        Self::new(mesh, values)
    }
}

/// Reads a headed two-column numeric CSV. Line numbers in errors are 1-based
/// and count the header.
pub(crate) fn read_two_column_csv<R: Read>(
    input: R,
    header: (&str, &str),
) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let head = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    if head.len() != 2 || &head[0] != header.0 || &head[1] != header.1 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header \"{},{}\"", header.0, header.1),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: "expected two columns".into(),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: format!("{s:?}: {e}"),
            })
        };
        rows.push((parse(&record[0])?, parse(&record[1])?));
    }
    Ok(rows)
}

/// `(1 + x)^q − 1 − q x` without cancellation for small `x`.
fn power_excess(q: f64, x: f64) -> f64 {
    if x < 0.05 {
        let mut term = q * (q - 1.0) / 2.0 * x * x;
        let mut sum = term;
        for k in 3..16 {
            term *= (q - (k - 1) as f64) / k as f64 * x;
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        (1.0 + x).powf(q) - 1.0 - q * x
    }
}

/// Moments of the kernel `(t − s)^(−β)` over a cell `[l, l + h]` that ends
/// at distance `gap = t − (l + h) >= 0` from `t`.
///
/// Returns `(∫ k(s) ds, ∫ k(s)(s − l) ds)`.
fn cell_moments(gap: f64, h: f64, beta: f64) -> (f64, f64) {
    let p = 1.0 - beta;
    if gap == 0.0 {
        let hp = h.powf(p);
        return (hp / p, hp * h / (p * (p + 1.0)));
    }
    let x = h / gap;
    let ap = gap.powf(p);
    let m0 = ap * (p * x.ln_1p()).exp_m1() / p;
    let m1 = ap * gap * power_excess(p + 1.0, x) / (p * (p + 1.0));
    (m0, m1)
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return domain(format!(
            "kernel exponent beta must lie in [0, 1), got {beta}"
        ));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("order alpha must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

/// `∫_{a}^{t} y(s) (t − s)^(−β) ds` for the piecewise-linear interpolant of `y`.
pub fn abel_integral(y: &GridFunction, beta: f64, t: f64) -> Result<f64> {
    check_beta(beta)?;
    let mesh = y.mesh();
    mesh.check_inside(t)?;
    let nodes = mesh.nodes();
    let v = y.values();
    let mut acc = 0.0;
    for k in 0..nodes.len() - 1 {
        let (l, r) = (nodes[k], nodes[k + 1]);
        if l >= t {
            break;
        }
        let h = r - l;
        if r <= t {
            let (m0, m1) = cell_moments(t - r, h, beta);
            let slope_part = m1 / h;
            acc += v[k] * (m0 - slope_part).max(0.0) + v[k + 1] * slope_part;
        } else {
            let slope = (v[k + 1] - v[k]) / h;
            let (m0, m1) = cell_moments(0.0, t - l, beta);
            acc += v[k] * m0 + slope * m1;
        }
    }
    Ok(acc)
}

/// Riemann–Liouville integral `I^α y(t) = Γ(α)^(−1) ∫ y(s)(t − s)^(α−1) ds`.
pub fn rl_fractional_integral(y: &GridFunction, alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(abel_integral(y, 1.0 - alpha, t)? / gamma_fn(alpha)?)
}

/// L1 approximation of the Caputo derivative of order `α` at `t`.
///
/// `α = 1` degenerates to the slope of the cell ending at (or containing) `t`.
pub fn caputo_derivative(h: &GridFunction, alpha: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let mesh = h.mesh();
    if !(t > mesh.start()) {
        return domain(format!(
            "Caputo derivative needs t > {}, got {t}",
            mesh.start()
        ));
    }
    mesh.check_inside(t)?;
    let nodes = mesh.nodes();
    let v = h.values();
    if alpha == 1.0 {
        let k = mesh.cell_left_of(t);
        return Ok((v[k + 1] - v[k]) / (nodes[k + 1] - nodes[k]));
    }
    let beta = alpha;
    let mut acc = 0.0;
    for k in 0..nodes.len() - 1 {
        let (l, r) = (nodes[k], nodes[k + 1]);
        if l >= t {
            break;
        }
        let slope = (v[k + 1] - v[k]) / (r - l);
        let weight = if r <= t {
            cell_moments(t - r, r - l, beta).0
        } else {
            cell_moments(0.0, t - l, beta).0
        };
        acc += slope * weight;
    }
    Ok(acc / gamma_fn(1.0 - alpha)?)
}

/// Product-integration weights of the Abel integral at every node of a mesh.
///
/// Row `i` holds the weights of nodes `0..=i`, so
/// `J(t_i) = Σ_j w[i][j] y_j`. Building the table costs `O(n²)` kernel
/// moments once; every application afterwards is a triangular mat-vec.
#[derive(Debug, Clone)]
pub struct AbelWeights {
    mesh: Arc<Mesh>,
    beta: f64,
    // row i starts at offset i(i+1)/2 and has i + 1 entries
    weights: Vec<f64>,
}

impl AbelWeights {
    pub fn new(mesh: Arc<Mesh>, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let nodes = mesh.nodes();
        let n = nodes.len();
        let mut weights = vec![0.0; n * (n + 1) / 2];
        for i in 1..n {
            let row = &mut weights[i * (i + 1) / 2..(i + 1) * (i + 2) / 2];
            let t = nodes[i];
            for k in 0..i {
                let h = nodes[k + 1] - nodes[k];
                let (m0, m1) = cell_moments(t - nodes[k + 1], h, beta);
                let right = m1 / h;
                row[k] += (m0 - right).max(0.0);
                row[k + 1] += right;
            }
        }
        Ok(Self {
            mesh,
            beta,
            weights,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * (i + 1) / 2..(i + 1) * (i + 2) / 2]
    }

    /// Abel integral at every node.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.mesh.len());
        (0..y.len())
            .map(|i| self.row(i).iter().zip(y).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn apply_grid(&self, y: &GridFunction) -> Result<GridFunction> {
        if y.mesh().nodes() != self.mesh.nodes() {
            return config("grid function and weight table use different meshes");
        }
        GridFunction::new(self.mesh.clone(), self.apply(y.values()))
    }
}

/// Riemann–Liouville integral of `y` at every node.
pub fn rl_integral_grid(y: &GridFunction, alpha: f64) -> Result<GridFunction> {
    check_alpha(alpha)?;
    let weights = AbelWeights::new(y.mesh().clone(), 1.0 - alpha)?;
    let scale = gamma_fn(alpha)?;
    let values = weights
        .apply(y.values())
        .into_iter()
        .map(|v| v / scale)
        .collect();
    GridFunction::new(y.mesh().clone(), values)
}
