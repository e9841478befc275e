//! Full-covariance Gaussian mixtures: EM fitting, sampling, and sampling
//! conditioned on a prefix of the coordinates.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Diagonal jitter added to every covariance estimate.
pub const COV_JITTER: f64 = 1e-6;
const MAX_ITERS: usize = 200;
const LL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub mixture: GaussianMixture,
    /// Training log-likelihood of every iterate, starting at the initial guess.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let d = rows.len();
    DMatrix::from_fn(d, d, |i, j| rows[i][j])
}

/// Cholesky factor, retrying with growing jitter. Returns the lower factor.
pub(crate) fn robust_cholesky(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MixtureError> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let d = m.nrows();
    let mut jitter = COV_JITTER;
    for _ in 0..8 {
        let mut j = m.clone();
        for i in 0..d {
            j[(i, i)] += jitter;
        }
        if let Some(c) = j.cholesky() {
            return Ok(c.l());
        }
        jitter *= 10.0;
    }
    Err(MixtureError::DegenerateModel(
        "covariance is not positive definite".into(),
    ))
}

/// A square root `S` with `S S^T = m` for a positive semi-definite `m`.
/// Exact zero blocks stay exactly zero, so point masses sample exactly.
pub(crate) fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, MixtureError> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(m.clone());
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let mut root = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-8 * scale.max(1.0) {
            return Err(MixtureError::DegenerateModel(format!(
                "covariance has negative eigenvalue {lambda}"
            )));
        }
        let s = lambda.max(0.0).sqrt();
        for i in 0..root.nrows() {
            root[(i, j)] *= s;
        }
    }
    Ok(root)
}

/// Log-density evaluator for one Gaussian.
#[derive(Debug, Clone)]
struct GaussianLogPdf {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianLogPdf {
    fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self, MixtureError> {
        let chol = robust_cholesky(cov)?;
        let d = mean.len() as f64;
        let log_det: f64 = 2.0 * chol.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        Ok(GaussianLogPdf {
            mean,
            chol,
            log_norm: -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_fn(x.len(), |i, _| x[i] - self.mean[i]);
        let z = self
            .chol
            .solve_lower_triangular(&diff)
            .expect("cholesky factor is non-singular");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn standard_normal_vec<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

fn pick_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

impl GaussianMixture {
    /// Single component with zero covariance: samples are exactly `mean`.
    pub fn point_mass(mean: Vec<f64>) -> Self {
        let d = mean.len();
        GaussianMixture {
            k: 1,
            weights: vec![1.0],
            means: vec![mean],
            covs: vec![vec![vec![0.0; d]; d]],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, |m| m.len())
    }

    pub fn validate(&self) -> Result<(), MixtureError> {
        let bad = |msg: &str| Err(MixtureError::DegenerateModel(msg.to_string()));
        if self.k == 0 || self.weights.len() != self.k || self.means.len() != self.k {
            return bad("component count mismatch");
        }
        if self.covs.len() != self.k {
            return bad("component count mismatch");
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return bad("weights are not on the simplex");
        }
        let d = self.dim();
        for (m, c) in self.means.iter().zip(&self.covs) {
            if m.len() != d || c.len() != d || c.iter().any(|r| r.len() != d) {
                return bad("inconsistent dimensions");
            }
            if m.iter().chain(c.iter().flatten()).any(|x| !x.is_finite()) {
                return bad("non-finite parameter");
            }
            psd_sqrt(&to_matrix(c))?;
        }
        Ok(())
    }

    fn log_pdfs(&self) -> Result<Vec<GaussianLogPdf>, MixtureError> {
        self.means
            .iter()
            .zip(&self.covs)
            .map(|(m, c)| GaussianLogPdf::new(DVector::from_vec(m.clone()), &to_matrix(c)))
            .collect()
    }

    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> Result<f64, MixtureError> {
        let pdfs = self.log_pdfs()?;
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut total = 0.0;
        let mut buf = vec![0.0; self.k];
        for x in data {
            for (j, p) in pdfs.iter().enumerate() {
                buf[j] = log_w[j] + p.eval(x);
            }
            total += log_sum_exp(&buf);
        }
        Ok(total)
    }

    pub fn sampler(&self) -> Result<MixtureSampler, MixtureError> {
        self.validate()?;
        let roots = self
            .covs
            .iter()
            .map(|c| psd_sqrt(&to_matrix(c)))
            .collect::<Result<_, _>>()?;
        Ok(MixtureSampler {
            weights: self.weights.clone(),
            means: self.means.iter().map(|m| DVector::from_vec(m.clone())).collect(),
            roots,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, MixtureError> {
        Ok(self.sampler()?.sample(rng))
    }

    /// Fits a `k`-component mixture by EM with k-means++ seeding.
    pub fn fit(data: &[Vec<f64>], k: usize, seed: u64) -> Result<FitReport, MixtureError> {
        let d = data.first().map_or(0, |x| x.len());
        let needed = 10 * k.max(1) * d.max(1);
        if k == 0 || data.len() < needed {
            return Err(MixtureError::InsufficientData {
                needed,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|x| x.len() != d) {
            return Err(MixtureError::Dimension {
                expected: d,
                got: bad.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = kmeans_pp(data, k, &mut rng);
        let n = data.len();

        // hard assignment to the nearest seed, then a first M-step
        let mut resp = vec![vec![0.0; k]; n];
        for (i, x) in data.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_dist(x, &centers[a]).total_cmp(&sq_dist(x, &centers[b])))
                .unwrap();
            resp[i][best] = 1.0;
        }
        let mut mixture = m_step(data, &resp, &centers);

        let mut trace = Vec::new();
        let mut iterations = 0;
        loop {
            let ll = e_step(&mixture, data, &mut resp)?;
            if let Some(&prev) = trace.last() {
                if ll - prev < LL_TOL {
                    trace.push(ll);
                    break;
                }
            }
            trace.push(ll);
            if iterations >= MAX_ITERS {
                break;
            }
            mixture = m_step(data, &resp, &mixture.means);
            iterations += 1;
        }
        Ok(FitReport {
            mixture,
            log_likelihood: trace,
            iterations,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp<R: Rng + ?Sized>(data: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut d2: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let next = if d2.iter().sum::<f64>() > 0.0 {
            pick_index(&d2, rng)
        } else {
            rng.random_range(0..data.len())
        };
        centers.push(data[next].clone());
        for (i, x) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, centers.last().unwrap()));
        }
    }
    centers
}

/// Responsibilities in place; returns the log-likelihood of `mixture`.
fn e_step(
    mixture: &GaussianMixture,
    data: &[Vec<f64>],
    resp: &mut [Vec<f64>],
) -> Result<f64, MixtureError> {
    let pdfs = mixture.log_pdfs()?;
    let log_w: Vec<f64> = mixture
        .weights
        .iter()
        .map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY })
        .collect();
    let mut ll = 0.0;
    for (x, r) in data.iter().zip(resp.iter_mut()) {
        for j in 0..mixture.k {
            r[j] = log_w[j] + pdfs[j].eval(x);
        }
        let norm = log_sum_exp(r);
        for v in r.iter_mut() {
            *v = (*v - norm).exp();
        }
        ll += norm;
    }
    if !ll.is_finite() {
        return Err(MixtureError::DegenerateModel("non-finite log-likelihood".into()));
    }
    Ok(ll)
}

/// Weighted means and covariances. Components that lost all mass keep
/// their previous mean with a unit covariance and a negligible weight.
fn m_step(data: &[Vec<f64>], resp: &[Vec<f64>], fallback_means: &[Vec<f64>]) -> GaussianMixture {
    let n = data.len();
    let k = resp[0].len();
    let d = data[0].len();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        if nk < 1e-10 {
            weights.push(1e-10);
            means.push(fallback_means[j].clone());
            let mut c = vec![vec![0.0; d]; d];
            for (i, row) in c.iter_mut().enumerate() {
                row[i] = 1.0;
            }
            covs.push(c);
            continue;
        }
        let mut mean = vec![0.0; d];
        for (x, r) in data.iter().zip(resp) {
            for a in 0..d {
                mean[a] += r[j] * x[a];
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = vec![vec![0.0; d]; d];
        for (x, r) in data.iter().zip(resp) {
            let w = r[j];
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = x[a] - mean[a];
                for b in a..d {
                    cov[a][b] += w * da * (x[b] - mean[b]);
                }
            }
        }
        for a in 0..d {
            for b in a..d {
                let v = cov[a][b] / nk;
                cov[a][b] = v;
                cov[b][a] = v;
            }
            cov[a][a] += COV_JITTER;
        }
        weights.push(nk / n as f64);
        means.push(mean);
        covs.push(cov);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    GaussianMixture {
        k,
        weights,
        means,
        covs,
    }
}

/// Pre-factored mixture for repeated sampling.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    roots: Vec<DMatrix<f64>>,
}

impl MixtureSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let j = pick_index(&self.weights, rng);
        let z = standard_normal_vec(self.means[j].len(), rng);
        (&self.means[j] + &self.roots[j] * z).as_slice().to_vec()
    }
}

struct ConditionalComponent {
    log_weight: f64,
    marginal: GaussianLogPdf,
    mean_y: DVector<f64>,
    /// `Σ_yx Σ_xx^{-1}`
    gain: DMatrix<f64>,
    root: DMatrix<f64>,
}

/// Samples the trailing coordinates `y` of a joint mixture over `(x, y)`
/// given `x`: the component is drawn from its posterior responsibility for
/// `x`, then `y` from the Schur-complement conditional Gaussian.
pub struct ConditionalSampler {
    cond_dim: usize,
    components: Vec<ConditionalComponent>,
}

impl ConditionalSampler {
    pub fn new(mixture: &GaussianMixture, cond_dim: usize) -> Result<Self, MixtureError> {
        mixture.validate()?;
        let d = mixture.dim();
        if cond_dim == 0 || cond_dim >= d {
            return Err(MixtureError::Dimension {
                expected: d,
                got: cond_dim,
            });
        }
        let out = d - cond_dim;
        let mut components = Vec::with_capacity(mixture.k);
        for j in 0..mixture.k {
            let cov = to_matrix(&mixture.covs[j]);
            let mean = DVector::from_vec(mixture.means[j].clone());
            let sxx = cov.view((0, 0), (cond_dim, cond_dim)).into_owned();
            let syx = cov.view((cond_dim, 0), (out, cond_dim)).into_owned();
            let syy = cov.view((cond_dim, cond_dim), (out, out)).into_owned();
            let chol = robust_cholesky(&sxx)?;
            // Σ_xx^{-1} Σ_xy via two triangular solves
            let tmp = chol
                .solve_lower_triangular(&syx.transpose())
                .ok_or_else(|| MixtureError::DegenerateModel("singular conditioning".into()))?;
            let solved = chol
                .transpose()
                .solve_upper_triangular(&tmp)
                .ok_or_else(|| MixtureError::DegenerateModel("singular conditioning".into()))?;
            let gain = solved.transpose();
            let schur = &syy - &gain * syx.transpose();
            let schur = (&schur + schur.transpose()) * 0.5;
            let root = psd_sqrt(&schur)?;
            components.push(ConditionalComponent {
                log_weight: mixture.weights[j].ln(),
                marginal: GaussianLogPdf::new(mean.rows(0, cond_dim).into_owned(), &sxx)?,
                mean_y: mean.rows(cond_dim, out).into_owned(),
                gain,
                root,
            });
        }
        Ok(ConditionalSampler {
            cond_dim,
            components,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    /// Posterior component probabilities given the conditioning value.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weight + c.marginal.eval(x))
            .collect();
        let norm = log_sum_exp(&logs);
        logs.iter().map(|l| (l - norm).exp()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let resp = self.responsibilities(x);
        let c = &self.components[pick_index(&resp, rng)];
        let xv = DVector::from_fn(self.cond_dim, |i, _| x[i] - c.marginal.mean[i]);
        let z = standard_normal_vec(c.mean_y.len(), rng);
        let y = &c.mean_y + &c.gain * xv + &c.root * z;
        y.as_slice().to_vec()
    }
}
