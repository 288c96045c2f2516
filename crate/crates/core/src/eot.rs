//! The static Schrödinger problem on discrete marginals: cost construction,
//! Sinkhorn iterations (scaling and log domain), an exact min-cost-flow
//! transport solver with Kantorovich potentials, the static rate
//! `c + psi - phi`, and coupling sampling.
//!
//! Potentials are stored so that complementary slackness reads
//! `c(x_i, y_j) = -psi_i + phi_j` on the optimal support, with the gauge
//! fixed by `psi_0 = 0`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{limit_cost, DiffusionModel};
use crate::rng::path_rng;

/// Sinkhorn switches to log-domain updates below this regularization.
pub const LOG_DOMAIN_THRESHOLD: f64 = 0.05;
/// Default `n * m` cap for [`exact_ot`].
pub const DEFAULT_SIZE_CAP: usize = 40_000;

const WEIGHT_TOL: f64 = 1e-12;
const FLOW_EPS: f64 = 1e-14;

/// Finitely supported probability measure on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarginal {
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMarginal {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidArgument(format!(
                "{} atoms with {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let d = atoms[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("atoms must have dimension >= 1".into()));
        }
        for a in &atoms {
            check_dim(d, a.len())?;
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("atoms must be finite".into()));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn uniform(atoms: Vec<Vec<f64>>) -> Result<Self> {
        let n = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].len()
    }

    /// Index of the atom equal to `x` (within `1e-12` per coordinate).
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.atoms
            .iter()
            .position(|a| a.len() == x.len() && a.iter().zip(x).all(|(u, v)| (u - v).abs() <= 1e-12))
    }

    /// Half-width of the smallest origin-centred box holding every atom.
    pub fn support_radius(&self) -> f64 {
        self.atoms.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn reversed(&self) -> Self {
        Self {
            atoms: self.atoms.iter().rev().cloned().collect(),
            weights: self.weights.iter().rev().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMode {
    /// `-eta log p_eta(0, x; 1, y)` at the model's noise level.
    FiniteEta,
    /// The small-noise limit `c(x, y)`.
    Limit,
}

pub fn build_cost(
    model: &DiffusionModel,
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    mode: CostMode,
) -> Result<DMatrix<f64>> {
    let mut cost = DMatrix::zeros(mu.len(), nu.len());
    for (i, x) in mu.atoms.iter().enumerate() {
        for (j, y) in nu.atoms.iter().enumerate() {
            cost[(i, j)] = match mode {
                CostMode::FiniteEta => -model.eta() * model.transition_log_density(0.0, x, 1.0, y)?,
                CostMode::Limit => limit_cost(model, x, y)?,
            };
        }
    }
    Ok(cost)
}

/// Entropic coupling returned by [`sinkhorn`].
#[derive(Debug, Clone)]
pub struct DiscreteCoupling {
    pub mu: DiscreteMarginal,
    pub nu: DiscreteMarginal,
    pub cost: DMatrix<f64>,
    pub plan: DMatrix<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub eta: f64,
    /// `sum plan c + eta KL(plan || mu x nu)`.
    pub objective: f64,
    pub transport_cost: f64,
    pub iterations: usize,
    /// L1 violation of both marginal constraints.
    pub marginal_error: f64,
    pub converged: bool,
    pub log_domain: bool,
}

impl DiscreteCoupling {
    /// Turns a non-converged result into [`Error::NoConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence { iterations: self.iterations, error: self.marginal_error })
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Sinkhorn's algorithm for `min <c, P> + eta KL(P || mu x nu)` over couplings.
///
/// A full row update is followed by a full column update, and the loop stops
/// once the L1 marginal violation drops to `tol`. Regularizations below
/// [`LOG_DOMAIN_THRESHOLD`], or a scaling-domain underflow, run in the log domain.
/// Exhausting `max_iter` returns the last iterate with `converged = false`.
pub fn sinkhorn(
    cost: &DMatrix<f64>,
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DiscreteCoupling> {
    sinkhorn_warm(cost, mu, nu, eta, tol, max_iter, None)
}

/// [`sinkhorn`] started from column potentials `phi0` (for example those of a
/// larger `eta`).
pub fn sinkhorn_warm(
    cost: &DMatrix<f64>,
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    eta: f64,
    tol: f64,
    max_iter: usize,
    phi0: Option<&[f64]>,
) -> Result<DiscreteCoupling> {
    let (n, m) = (mu.len(), nu.len());
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::InvalidArgument(format!(
            "cost is {}x{}, marginals are {n} and {m}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if !(eta > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("sinkhorn needs eta > 0 and tol > 0".into()));
    }
    if mu.weights.iter().chain(&nu.weights).any(|w| *w <= 0.0) {
        return Err(Error::InvalidArgument("sinkhorn needs strictly positive weights".into()));
    }
    let mut g: Vec<f64> = match phi0 {
        Some(p) => {
            check_dim(m, p.len())?;
            p.to_vec()
        }
        None => vec![0.0; m],
    };
    let mut f = vec![0.0; n];
    let mut log_domain = eta < LOG_DOMAIN_THRESHOLD;
    let mut iterations = 0;
    let mut err = f64::INFINITY;

    if !log_domain {
        match scaling_iterations(cost, mu, nu, eta, tol, max_iter, &g) {
            Some((fs, gs, it, e)) => {
                f = fs;
                g = gs;
                iterations = it;
                err = e;
            }
            None => log_domain = true,
        }
    }
    if log_domain {
        let log_mu: Vec<f64> = mu.weights.iter().map(|w| w.ln()).collect();
        let log_nu: Vec<f64> = nu.weights.iter().map(|w| w.ln()).collect();
        while iterations < max_iter {
            for i in 0..n {
                f[i] = eta * log_mu[i] - eta * log_sum_exp((0..m).map(|j| (g[j] - cost[(i, j)]) / eta));
            }
            for j in 0..m {
                g[j] = eta * log_nu[j] - eta * log_sum_exp((0..n).map(|i| (f[i] - cost[(i, j)]) / eta));
            }
            iterations += 1;
            err = row_error(cost, mu, eta, &f, &g);
            if err <= tol {
                break;
            }
        }
    }

    let plan = DMatrix::from_fn(n, m, |i, j| ((f[i] + g[j] - cost[(i, j)]) / eta).exp());
    let marginal_error = marginal_violation(&plan, mu, nu);
    let mut transport_cost = 0.0;
    let mut entropy = 0.0;
    for i in 0..n {
        for j in 0..m {
            let p = plan[(i, j)];
            transport_cost += p * cost[(i, j)];
            if p > 0.0 {
                entropy += p * (p / (mu.weights[i] * nu.weights[j])).ln();
            }
        }
    }
    let shift = -f[0];
    let psi: Vec<f64> = f.iter().map(|v| -v - shift).collect();
    let phi: Vec<f64> = g.iter().map(|v| v - shift).collect();
    Ok(DiscreteCoupling {
        mu: mu.clone(),
        nu: nu.clone(),
        cost: cost.clone(),
        plan,
        psi,
        phi,
        eta,
        objective: transport_cost + eta * entropy,
        transport_cost,
        iterations,
        marginal_error,
        converged: err <= tol && marginal_error <= tol,
        log_domain,
    })
}

/// Classical `u / v` scaling; `None` on underflow or non-finite scalings.
fn scaling_iterations(
    cost: &DMatrix<f64>,
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    eta: f64,
    tol: f64,
    max_iter: usize,
    g0: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, usize, f64)> {
    let (n, m) = (mu.len(), nu.len());
    let kernel = cost.map(|c| (-c / eta).exp());
    if (0..n).any(|i| (0..m).all(|j| kernel[(i, j)] == 0.0)) || (0..m).any(|j| (0..n).all(|i| kernel[(i, j)] == 0.0))
    {
        return None;
    }
    let mut u = vec![1.0; n];
    let mut v: Vec<f64> = g0.iter().map(|g| (g / eta).exp()).collect();
    let mut err = f64::INFINITY;
    let mut it = 0;
    while it < max_iter {
        for i in 0..n {
            let kv: f64 = (0..m).map(|j| kernel[(i, j)] * v[j]).sum();
            u[i] = mu.weights[i] / kv;
        }
        for j in 0..m {
            let ku: f64 = (0..n).map(|i| kernel[(i, j)] * u[i]).sum();
            v[j] = nu.weights[j] / ku;
        }
        it += 1;
        if u.iter().chain(&v).any(|s| !s.is_finite() || *s == 0.0) {
            return None;
        }
        err = (0..n)
            .map(|i| (u[i] * (0..m).map(|j| kernel[(i, j)] * v[j]).sum::<f64>() - mu.weights[i]).abs())
            .sum();
        if err <= tol {
            break;
        }
    }
    let f = u.iter().map(|x| eta * x.ln()).collect();
    let g = v.iter().map(|x| eta * x.ln()).collect();
    Some((f, g, it, err))
}

fn row_error(cost: &DMatrix<f64>, mu: &DiscreteMarginal, eta: f64, f: &[f64], g: &[f64]) -> f64 {
    (0..mu.len())
        .map(|i| {
            let row: f64 = (0..g.len()).map(|j| ((f[i] + g[j] - cost[(i, j)]) / eta).exp()).sum();
            (row - mu.weights[i]).abs()
        })
        .sum()
}

/// L1 distance of the plan's row and column sums to the marginal weights.
pub fn marginal_violation(plan: &DMatrix<f64>, mu: &DiscreteMarginal, nu: &DiscreteMarginal) -> f64 {
    let rows: f64 = (0..plan.nrows()).map(|i| (plan.row(i).sum() - mu.weights[i]).abs()).sum();
    let cols: f64 = (0..plan.ncols()).map(|j| (plan.column(j).sum() - nu.weights[j]).abs()).sum();
    rows + cols
}

/// Unregularized transport solution with Kantorovich potentials.
#[derive(Debug, Clone)]
pub struct ExactOt {
    pub mu: DiscreteMarginal,
    pub nu: DiscreteMarginal,
    pub cost: DMatrix<f64>,
    pub plan: DMatrix<f64>,
    pub value: f64,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// `max|c| + max|psi| + max|phi|`, the magnitude that sets rounding in `I_S`.
    pub scale: f64,
}

impl ExactOt {
    /// `I_S = c_ij + psi_i - phi_j`, with rounding residue below zero snapped to zero.
    pub fn static_rate_at(&self, i: usize, j: usize) -> f64 {
        snap_rate(self.cost[(i, j)] + self.psi[i] - self.phi[j], self.scale)
    }

    pub fn on_support(&self, i: usize, j: usize) -> bool {
        self.plan[(i, j)] > FLOW_EPS
    }

    /// Matrix of static rates over all atom pairs.
    pub fn static_rate_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.mu.len(), self.nu.len(), |i, j| self.static_rate_at(i, j))
    }
}

/// Exact optimal transport by successive shortest paths with the default size cap.
pub fn exact_ot(cost: &DMatrix<f64>, mu: &DiscreteMarginal, nu: &DiscreteMarginal) -> Result<ExactOt> {
    exact_ot_capped(cost, mu, nu, DEFAULT_SIZE_CAP)
}

pub fn exact_ot_capped(
    cost: &DMatrix<f64>,
    mu: &DiscreteMarginal,
    nu: &DiscreteMarginal,
    size_cap: usize,
) -> Result<ExactOt> {
    let (n, m) = (mu.len(), nu.len());
    if cost.nrows() != n || cost.ncols() != m {
        return Err(Error::InvalidArgument(format!(
            "cost is {}x{}, marginals are {n} and {m}",
            cost.nrows(),
            cost.ncols()
        )));
    }
    if n * m > size_cap {
        return Err(Error::SizeCapExceeded { size: n * m, cap: size_cap });
    }
    let mut flow = DMatrix::<f64>::zeros(n, m);
    let mut supply = mu.weights.clone();
    let mut demand = nu.weights.clone();
    // nodes: left i -> i, right j -> n + j
    let total = n + m;
    let mut dist = vec![f64::INFINITY; total];
    let mut pred = vec![usize::MAX; total];
    let mut in_queue = vec![false; total];
    loop {
        if supply.iter().all(|s| *s <= FLOW_EPS) || demand.iter().all(|r| *r <= FLOW_EPS) {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        pred.iter_mut().for_each(|p| *p = usize::MAX);
        let mut queue = VecDeque::new();
        for i in 0..n {
            if supply[i] > FLOW_EPS {
                dist[i] = 0.0;
                queue.push_back(i);
                in_queue[i] = true;
            }
        }
        while let Some(u) = queue.pop_front() {
            in_queue[u] = false;
            if u < n {
                for j in 0..m {
                    let nd = dist[u] + cost[(u, j)];
                    if nd < dist[n + j] - 1e-15 {
                        dist[n + j] = nd;
                        pred[n + j] = u;
                        if !in_queue[n + j] {
                            in_queue[n + j] = true;
                            queue.push_back(n + j);
                        }
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[(i, j)] > FLOW_EPS {
                        let nd = dist[u] - cost[(i, j)];
                        if nd < dist[i] - 1e-15 {
                            dist[i] = nd;
                            pred[i] = u;
                            if !in_queue[i] {
                                in_queue[i] = true;
                                queue.push_back(i);
                            }
                        }
                    }
                }
            }
        }
        let target = (0..m)
            .filter(|&j| demand[j] > FLOW_EPS && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(jt) = target else { break };
        // walk back to a source, collecting the bottleneck
        let mut bottleneck = demand[jt];
        let mut node = n + jt;
        while pred[node] != usize::MAX {
            let p = pred[node];
            if node < n {
                bottleneck = bottleneck.min(flow[(node, p - n)]);
            }
            node = p;
        }
        bottleneck = bottleneck.min(supply[node]);
        let source = node;
        let mut node = n + jt;
        while pred[node] != usize::MAX {
            let p = pred[node];
            if node >= n {
                flow[(p, node - n)] += bottleneck;
            } else {
                flow[(node, p - n)] -= bottleneck;
            }
            node = p;
        }
        supply[source] -= bottleneck;
        demand[jt] -= bottleneck;
    }
    flow.iter_mut().for_each(|f| {
        if *f <= FLOW_EPS {
            *f = 0.0;
        }
    });
    let (psi, phi) = kantorovich_potentials(cost, &flow);
    let value = flow.component_mul(cost).sum();
    let scale = [cost.amax(), amax(&psi), amax(&phi)].iter().sum::<f64>();
    Ok(ExactOt { mu: mu.clone(), nu: nu.clone(), cost: cost.clone(), plan: flow, value, psi, phi, scale })
}

/// Shortest-path distances in the residual graph of an optimal flow; these
/// are dual feasible and tight on the flow's support.
fn kantorovich_potentials(cost: &DMatrix<f64>, flow: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, m) = (cost.nrows(), cost.ncols());
    let mut d = vec![0.0; n + m];
    for _ in 0..(n + m) {
        let mut changed = false;
        for i in 0..n {
            for j in 0..m {
                let via = d[i] + cost[(i, j)];
                if via < d[n + j] - 1e-15 {
                    d[n + j] = via;
                    changed = true;
                }
                if flow[(i, j)] > 0.0 {
                    let back = d[n + j] - cost[(i, j)];
                    if back < d[i] - 1e-15 {
                        d[i] = back;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    let shift = d[0];
    let psi = d[..n].iter().map(|v| v - shift).collect();
    let phi = d[n..].iter().map(|v| v - shift).collect();
    (psi, phi)
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Zero for rates that are negative only by rounding at the instance `scale`.
fn snap_rate(r: f64, scale: f64) -> f64 {
    if r < 0.0 && r >= -64.0 * f64::EPSILON * scale {
        0.0
    } else {
        r
    }
}

/// `I_S(x, y) = c(x, y) + psi(x) - phi(y)`; `+inf` off the discrete supports.
pub fn static_rate(ot: &ExactOt, x: &[f64], y: &[f64], cost_fn: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
    match (ot.mu.locate(x), ot.nu.locate(y)) {
        (Some(i), Some(j)) => snap_rate(cost_fn(x, y) + ot.psi[i] - ot.phi[j], ot.scale),
        _ => f64::INFINITY,
    }
}

/// Largest change of `I_S` over all atom pairs when the instance is re-solved
/// with both atom orders reversed. Values above `1e-8` flag non-unique duals
/// that matter for the static rate.
pub fn dual_ambiguity(cost: &DMatrix<f64>, mu: &DiscreteMarginal, nu: &DiscreteMarginal) -> Result<f64> {
    let a = exact_ot(cost, mu, nu)?;
    let (n, m) = (mu.len(), nu.len());
    let rc = DMatrix::from_fn(n, m, |i, j| cost[(n - 1 - i, m - 1 - j)]);
    let b = exact_ot(&rc, &mu.reversed(), &nu.reversed())?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            worst = worst.max((a.static_rate_at(i, j) - b.static_rate_at(n - 1 - i, m - 1 - j)).abs());
        }
    }
    Ok(worst)
}

/// Categorical sampler over the cells of a transport plan.
#[derive(Debug, Clone)]
pub struct CouplingSampler {
    index: WeightedIndex<f64>,
    cols: usize,
}

impl CouplingSampler {
    pub fn new(plan: &DMatrix<f64>) -> Result<Self> {
        let cols = plan.ncols();
        // row-major cell order
        let weights: Vec<f64> = (0..plan.nrows()).flat_map(|i| (0..cols).map(move |j| (i, j))).map(|(i, j)| plan[(i, j)].max(0.0)).collect();
        let index = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(format!("invalid plan: {e}")))?;
        Ok(Self { index, cols })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let cell = self.index.sample(rng);
        (cell / self.cols, cell % self.cols)
    }
}

/// `n` i.i.d. index pairs `(i, j)` drawn from `plan`.
pub fn sample_static_coupling(plan: &DMatrix<f64>, n: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    let sampler = CouplingSampler::new(plan)?;
    let mut rng = path_rng(seed, 0);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Pearson chi-square statistic of index-pair counts against a plan, over
/// cells with positive mass. Returns `(statistic, degrees of freedom)`.
pub fn plan_chi_square(plan: &DMatrix<f64>, draws: &[(usize, usize)]) -> (f64, usize) {
    let mut counts = DMatrix::<f64>::zeros(plan.nrows(), plan.ncols());
    for &(i, j) in draws {
        counts[(i, j)] += 1.0;
    }
    let n = draws.len() as f64;
    let mut stat = 0.0;
    let mut cells: usize = 0;
    for (c, p) in counts.iter().zip(plan.iter()) {
        if *p > 0.0 {
            stat += (c - n * p).powi(2) / (n * p);
            cells += 1;
        }
    }
    (stat, cells.saturating_sub(1))
}

/// The three terms of the relative-entropy chain rule for a path law on
/// `slices` time points and `states` states per slice, conditioning on the
/// first and last slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyChain {
    pub joint: f64,
    pub endpoint: f64,
    pub bridges: f64,
}

/// `H(pi || R) = H(pi_01 || R_01) + sum_{xy} pi_01(x, y) H(pi^{xy} || R^{xy})`
/// evaluated term by term on row-major path probabilities.
pub fn entropy_chain(pi: &[f64], reference: &[f64], states: usize, slices: usize) -> Result<EntropyChain> {
    if slices < 2 {
        return Err(Error::InvalidArgument("need at least two time slices".into()));
    }
    let total = states.pow(slices as u32);
    check_dim(total, pi.len())?;
    check_dim(total, reference.len())?;
    let endpoint_index = |k: usize| -> usize {
        let first = k / states.pow(slices as u32 - 1);
        let last = k % states;
        first * states + last
    };
    let kl = |p: f64, q: f64| if p > 0.0 { p * (p / q).ln() } else { 0.0 };
    let joint: f64 = pi.iter().zip(reference).map(|(p, q)| kl(*p, *q)).sum();
    let mut pi01 = vec![0.0; states * states];
    let mut r01 = vec![0.0; states * states];
    for k in 0..total {
        pi01[endpoint_index(k)] += pi[k];
        r01[endpoint_index(k)] += reference[k];
    }
    let endpoint: f64 = pi01.iter().zip(&r01).map(|(p, q)| kl(*p, *q)).sum();
    let mut bridges = 0.0;
    for e in 0..states * states {
        if pi01[e] <= 0.0 {
            continue;
        }
        let mut h = 0.0;
        for k in (0..total).filter(|&k| endpoint_index(k) == e) {
            h += kl(pi[k] / pi01[e], reference[k] / r01[e]);
        }
        bridges += pi01[e] * h;
    }
    Ok(EntropyChain { joint, endpoint, bridges })
}
