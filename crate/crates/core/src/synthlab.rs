//! Desk-scale simulation lab: a sparse-teacher synthetic generator, an
//! invertible dense (cross-column) encoder, a bi-Lipschitz coordinate
//! encoder, and the two experiments built on them — the added-noise-column
//! ablation and the nearest-neighbor error-rate contrast.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exec::{FeatureColumn, FeatureColumnData, FeatureMatrix};
use crate::icl::{knn_predict, Normalizer};
use crate::mpgnn::derive_seed;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// small dense linear algebra (dimensions stay < 100)

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..=n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = m[row][n];
        for k in row + 1..n {
            s -= m[row][k] * x[k];
        }
        x[row] = s / m[row][row];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a, &e)?);
    }
    // cols[j] is the j-th column of the inverse; transpose into rows
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect())
}

/// Maximum absolute column sum.
fn norm1(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    (0..n)
        .map(|j| m.iter().map(|row| row[j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn cond1(a: &[Vec<f64>]) -> Option<f64> {
    let inv = invert(a)?;
    Some(norm1(a) * norm1(&inv))
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    let scale = 1.0 / (d as f64).sqrt();
    (0..d)
        .map(|_| (0..d).map(|_| randn(rng) * scale).collect())
        .collect()
}

/// Random orthonormal matrix: Gram–Schmidt over Gaussian rows.
fn random_orthonormal(rng: &mut ChaCha8Rng, d: usize) -> Vec<Vec<f64>> {
    loop {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut ok = true;
        for _ in 0..d {
            let mut v: Vec<f64> = (0..d).map(|_| randn(rng)).collect();
            for prev in &q {
                let dot: f64 = prev.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, pi) in v.iter_mut().zip(prev) {
                    *vi -= dot * pi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for vi in &mut v {
                *vi /= norm;
            }
            q.push(v);
        }
        if ok {
            return q;
        }
    }
}

// ---------------------------------------------------------------------------
// synthetic generator

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiKind {
    /// y = w · x restricted to the informative columns.
    Affine,
    /// y = 1 iff the logistic of w · x clears 1/2 (equivalently w · x ≥ 0).
    LogisticThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureDist {
    Normal,
    Uniform,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Train sample count; one extra test row is always generated.
    pub n: usize,
    pub d: usize,
    /// Number of informative columns, chosen uniformly at random.
    pub kappa: usize,
    pub pi: PiKind,
    pub dist: FeatureDist,
    pub noise: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    /// n+1 rows by d columns; the final row is the held-out test point.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Sorted informative column indices (length kappa).
    pub informative: Vec<usize>,
    /// Teacher weights aligned with `informative`.
    pub w: Vec<f64>,
}

pub fn label_of(pi: PiKind, w: &[f64], informative: &[usize], row: &[f64]) -> f64 {
    let s: f64 = w.iter().zip(informative).map(|(wj, &j)| wj * row[j]).sum();
    match pi {
        PiKind::Affine => s,
        PiKind::LogisticThreshold => {
            if s >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

pub fn gen_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    if cfg.kappa == 0 || cfg.kappa > cfg.d {
        return Err(Error::Config(format!(
            "kappa must be in 1..={}, got {}",
            cfg.d, cfg.kappa
        )));
    }
    if cfg.n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    if cfg.noise < 0.0 {
        return Err(Error::Config("noise must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut idx: Vec<usize> = (0..cfg.d).collect();
    for i in 0..cfg.kappa {
        let j = rng.gen_range(i..cfg.d);
        idx.swap(i, j);
    }
    let mut informative: Vec<usize> = idx[..cfg.kappa].to_vec();
    informative.sort_unstable();
    let w: Vec<f64> = (0..cfg.kappa).map(|_| randn(&mut rng)).collect();
    let rows = cfg.n + 1;
    let x: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            (0..cfg.d)
                .map(|_| match cfg.dist {
                    FeatureDist::Normal => randn(&mut rng),
                    FeatureDist::Uniform => rng.gen::<f64>(),
                })
                .collect()
        })
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|row| {
            let mut v = label_of(cfg.pi, &w, &informative, row);
            if cfg.noise > 0.0 && cfg.pi == PiKind::Affine {
                v += cfg.noise * randn(&mut rng);
            }
            v
        })
        .collect();
    Ok(SynthDataset {
        x,
        y,
        informative,
        w,
    })
}

/// Least-squares fit of the teacher over the true informative columns;
/// returns the maximum absolute residual. For a noiseless affine teacher
/// with n > kappa this recovers the labels exactly.
pub fn affine_recover(ds: &SynthDataset) -> Result<f64> {
    let k = ds.informative.len();
    let n = ds.x.len();
    if n <= k {
        return Err(Error::Config("need more samples than informative columns".into()));
    }
    // normal equations over the restricted design matrix
    let mut ata = vec![vec![0.0; k]; k];
    let mut aty = vec![0.0; k];
    for (row, &yv) in ds.x.iter().zip(&ds.y) {
        for (i, &ci) in ds.informative.iter().enumerate() {
            for (j, &cj) in ds.informative.iter().enumerate() {
                ata[i][j] += row[ci] * row[cj];
            }
            aty[i] += row[ci] * yv;
        }
    }
    let w = solve(&ata, &aty)
        .ok_or_else(|| Error::Config("degenerate design matrix".into()))?;
    let mut max_res = 0.0f64;
    for (row, &yv) in ds.x.iter().zip(&ds.y) {
        let pred: f64 = w
            .iter()
            .zip(&ds.informative)
            .map(|(wj, &j)| wj * row[j])
            .sum();
        max_res = max_res.max((pred - yv).abs());
    }
    Ok(max_res)
}

// ---------------------------------------------------------------------------
// dense cross-column encoder

const COND_LIMIT: f64 = 1e6;

/// Invertible two-layer mixing map: z = B · leaky(A · x). Both matrices are
/// redrawn until their condition numbers clear the invertibility threshold.
#[derive(Debug, Clone)]
pub struct DenseEncoder {
    pub d: usize,
    slope: f64,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    a_inv: Vec<Vec<f64>>,
    b_inv: Vec<Vec<f64>>,
}

impl DenseEncoder {
    pub fn random(d: usize, slope: f64, rng: &mut ChaCha8Rng) -> Result<DenseEncoder> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Config("leaky slope must be positive".into()));
        }
        let draw = |rng: &mut ChaCha8Rng| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            for _ in 0..200 {
                let m = random_matrix(rng, d);
                if let Some(c) = cond1(&m) {
                    if c < COND_LIMIT {
                        let inv = invert(&m).expect("conditioned matrix inverts");
                        return Ok((m, inv));
                    }
                }
            }
            Err(Error::Internal("could not draw a well-conditioned matrix".into()))
        };
        let (a, a_inv) = draw(rng)?;
        let (b, b_inv) = draw(rng)?;
        Ok(DenseEncoder {
            d,
            slope,
            a,
            b,
            a_inv,
            b_inv,
        })
    }

    /// Layers drawn Haar-like orthogonal instead of Gaussian: the same
    /// invertible mixing family, but distance-preserving up to the leaky
    /// fold. Used by the column ablation so that metric distortion does not
    /// confound the mixing effect under a plain nearest-neighbor decoder.
    pub fn random_orthogonal(d: usize, slope: f64, rng: &mut ChaCha8Rng) -> Result<DenseEncoder> {
        if !(slope > 0.0 && slope.is_finite()) {
            return Err(Error::Config("leaky slope must be positive".into()));
        }
        let draw = |rng: &mut ChaCha8Rng| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
            let q = random_orthonormal(rng, d);
            match cond1(&q) {
                Some(c) if c < COND_LIMIT => {
                    let inv = invert(&q).expect("orthonormal matrix inverts");
                    Ok((q, inv))
                }
                _ => Err(Error::Internal("orthonormal draw was ill-conditioned".into())),
            }
        };
        let (a, a_inv) = draw(rng)?;
        let (b, b_inv) = draw(rng)?;
        Ok(DenseEncoder {
            d,
            slope,
            a,
            b,
            a_inv,
            b_inv,
        })
    }

    pub fn identity(d: usize) -> DenseEncoder {
        let eye: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect())
            .collect();
        DenseEncoder {
            d,
            slope: 1.0,
            a: eye.clone(),
            b: eye.clone(),
            a_inv: eye.clone(),
            b_inv: eye,
        }
    }

    fn leaky(&self, x: f64) -> f64 {
        if x >= 0.0 {
            x
        } else {
            self.slope * x
        }
    }

    fn leaky_inv(&self, y: f64) -> f64 {
        if y >= 0.0 {
            y
        } else {
            y / self.slope
        }
    }

    pub fn encode_row(&self, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = mat_vec(&self.a, x).into_iter().map(|v| self.leaky(v)).collect();
        mat_vec(&self.b, &h)
    }

    pub fn decode_row(&self, z: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = mat_vec(&self.b_inv, z)
            .into_iter()
            .map(|v| self.leaky_inv(v))
            .collect();
        mat_vec(&self.a_inv, &h)
    }

    pub fn encode(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.encode_row(r)).collect()
    }
}

// ---------------------------------------------------------------------------
// bi-Lipschitz coordinate encoder on the unit cube

/// Coordinate-wise smooth monotone warps composed with a random rotation,
/// rescaled back onto the unit cube. Bijective with Lipschitz inverse.
#[derive(Debug, Clone)]
pub struct BiLipEncoder {
    beta: Vec<f64>,
    freq: Vec<f64>,
    q: Vec<Vec<f64>>,
    lo: Vec<f64>,
    inv_span: Vec<f64>,
}

impl BiLipEncoder {
    pub fn random(d: usize, rng: &mut ChaCha8Rng) -> BiLipEncoder {
        let beta: Vec<f64> = (0..d).map(|_| rng.gen_range(0.3..0.8)).collect();
        let freq: Vec<f64> = (0..d).map(|_| rng.gen_range(1..4) as f64).collect();
        let q = random_orthonormal(rng, d);
        // the rotated cube fits the box [lo, lo + span] coordinate-wise
        let lo: Vec<f64> = q
            .iter()
            .map(|row| row.iter().map(|v| v.min(0.0)).sum())
            .collect();
        let inv_span: Vec<f64> = q
            .iter()
            .map(|row| 1.0 / row.iter().map(|v| v.abs()).sum::<f64>())
            .collect();
        BiLipEncoder {
            beta,
            freq,
            q,
            lo,
            inv_span,
        }
    }

    fn warp(&self, i: usize, t: f64) -> f64 {
        let tau = std::f64::consts::TAU * self.freq[i];
        t + self.beta[i] * (tau * t).sin() / tau
    }

    fn warp_inv(&self, i: usize, y: f64) -> f64 {
        // strictly increasing on [0,1]; bisection is plenty
        let (mut a, mut b) = (0.0f64, 1.0f64);
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if self.warp(i, mid) < y {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    pub fn encode_row(&self, x: &[f64]) -> Vec<f64> {
        let warped: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &t)| self.warp(i, t))
            .collect();
        mat_vec(&self.q, &warped)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v - self.lo[i]) * self.inv_span[i])
            .collect()
    }

    pub fn decode_row(&self, z: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = z
            .iter()
            .enumerate()
            .map(|(i, &zi)| zi / self.inv_span[i] + self.lo[i])
            .collect();
        // transpose of an orthonormal matrix is its inverse
        let d = self.q.len();
        let warped: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| self.q[j][i] * v[j]).sum())
            .collect();
        warped
            .into_iter()
            .enumerate()
            .map(|(i, w)| self.warp_inv(i, w))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// shared experiment plumbing

fn matrix_from_rows(rows: &[&[f64]], cols: &[usize]) -> FeatureMatrix {
    let columns = cols
        .iter()
        .map(|&j| FeatureColumn {
            name: format!("f{j}"),
            data: FeatureColumnData::Num(rows.iter().map(|r| Some(r[j])).collect()),
        })
        .collect();
    FeatureMatrix {
        n_rows: rows.len(),
        columns,
    }
}

fn accuracy(preds: &[f64], labels: &[f64]) -> f64 {
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= 0.5) == (**y > 0.5))
        .count();
    hits as f64 / preds.len() as f64
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Normalize on train, k-NN, 0/1 accuracy at threshold 1/2.
fn knn_accuracy(
    train_rows: &[&[f64]],
    train_y: &[f64],
    test_rows: &[&[f64]],
    test_y: &[f64],
    cols: &[usize],
    k: usize,
) -> Result<f64> {
    let train = matrix_from_rows(train_rows, cols);
    let test = matrix_from_rows(test_rows, cols);
    let norm = Normalizer::fit(&train);
    let preds = knn_predict(&norm.apply(&train)?, train_y, &norm.apply(&test)?, k)?;
    Ok(accuracy(&preds, test_y))
}

fn knn_mse(
    train_rows: &[&[f64]],
    train_y: &[f64],
    test_rows: &[&[f64]],
    test_y: &[f64],
    cols: &[usize],
    k: usize,
) -> Result<f64> {
    let train = matrix_from_rows(train_rows, cols);
    let test = matrix_from_rows(test_rows, cols);
    let preds = knn_predict(&train, train_y, &test, k)?;
    Ok(preds
        .iter()
        .zip(test_y)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / preds.len() as f64)
}

// ---------------------------------------------------------------------------
// added-column ablation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Added columns are pure noise; labels keep depending on the base
    /// columns only.
    Uninformative,
    /// The teacher is extended so labels depend on the added columns too.
    Informative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationParams {
    pub base_d: usize,
    pub added_grid: Vec<usize>,
    pub trials: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
    /// Leaky slope of the dense encoder.
    pub slope: f64,
    /// Standard deviation of the added columns (base columns are unit).
    /// Column-wise normalization absorbs the scale when columns stay
    /// aligned; the encoder mixes it into every coordinate first.
    pub noise_sd: f64,
    pub mode: AblationMode,
    pub seed: u64,
}

impl Default for AblationParams {
    fn default() -> AblationParams {
        AblationParams {
            base_d: 8,
            added_grid: vec![0, 2, 4, 8, 12, 16],
            trials: 100,
            n_train: 1000,
            n_test: 200,
            k: 5,
            slope: 0.9,
            noise_sd: 3.0,
            mode: AblationMode::Uninformative,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationPoint {
    pub x: usize,
    pub raw_mean: f64,
    pub raw_std: f64,
    pub encoded_mean: f64,
    pub encoded_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCurve {
    pub mode: AblationMode,
    pub points: Vec<AblationPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationSummary {
    pub gap_at_zero: f64,
    pub gap_at_max: f64,
}

impl AblationCurve {
    /// raw minus encoded accuracy at an added-column count.
    pub fn gap_at(&self, x: usize) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.x == x)
            .map(|p| p.raw_mean - p.encoded_mean)
    }

    pub fn summary(&self) -> AblationSummary {
        AblationSummary {
            gap_at_zero: self.points.first().map(|p| p.raw_mean - p.encoded_mean).unwrap_or(0.0),
            gap_at_max: self.points.last().map(|p| p.raw_mean - p.encoded_mean).unwrap_or(0.0),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,arm,mean,std\n");
        for p in &self.points {
            s.push_str(&format!("{},raw,{},{}\n", p.x, p.raw_mean, p.raw_std));
            s.push_str(&format!(
                "{},encoded,{},{}\n",
                p.x, p.encoded_mean, p.encoded_std
            ));
        }
        s
    }
}

/// Paired accuracy of the built-in k-NN on raw vs dense-encoded features as
/// noise columns are appended. Both arms of each (trial, point) consume the
/// identical dataset draw; column pools are nested across the grid so a
/// point's dataset extends the previous one.
pub fn run_ablation(params: &AblationParams) -> Result<AblationCurve> {
    if params.trials == 0 || params.added_grid.is_empty() {
        return Err(Error::Config("ablation needs trials and a grid".into()));
    }
    let max_added = *params.added_grid.iter().max().unwrap();
    let d_max = params.base_d + max_added;
    let n = params.n_train + params.n_test;
    let per_trial: Vec<Vec<(f64, f64)>> = (0..params.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<(f64, f64)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            // In Uninformative mode the appended columns are noise at
            // `noise_sd`; in Informative mode they are features like the
            // base columns, and the teacher extends over them.
            let added_sd = match params.mode {
                AblationMode::Uninformative => params.noise_sd,
                AblationMode::Informative => 1.0,
            };
            let x_pool: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..d_max)
                        .map(|j| {
                            let sd = if j < params.base_d { 1.0 } else { added_sd };
                            sd * randn(&mut rng)
                        })
                        .collect()
                })
                .collect();
            let w_pool: Vec<f64> = (0..d_max).map(|_| randn(&mut rng)).collect();
            let mut out = Vec::with_capacity(params.added_grid.len());
            for (gi, &m) in params.added_grid.iter().enumerate() {
                let d = params.base_d + m;
                let informative = match params.mode {
                    AblationMode::Uninformative => params.base_d,
                    AblationMode::Informative => d,
                };
                let w = &w_pool[..informative];
                let idx: Vec<usize> = (0..informative).collect();
                let labels: Vec<f64> = x_pool
                    .iter()
                    .map(|row| label_of(PiKind::LogisticThreshold, w, &idx, row))
                    .collect();
                let cols: Vec<usize> = (0..d).collect();
                let raw_rows: Vec<&[f64]> = x_pool.iter().map(|r| r.as_slice()).collect();
                let raw_acc = knn_accuracy(
                    &raw_rows[..params.n_train],
                    &labels[..params.n_train],
                    &raw_rows[params.n_train..],
                    &labels[params.n_train..],
                    &cols,
                    params.k,
                )?;
                let mut enc_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    params.seed,
                    (t as u64) << 16 | (gi as u64 + 1),
                ));
                let encoder = DenseEncoder::random_orthogonal(d, params.slope, &mut enc_rng)?;
                let encoded: Vec<Vec<f64>> = x_pool
                    .iter()
                    .map(|r| encoder.encode_row(&r[..d]))
                    .collect();
                let enc_rows: Vec<&[f64]> = encoded.iter().map(|r| r.as_slice()).collect();
                let enc_acc = knn_accuracy(
                    &enc_rows[..params.n_train],
                    &labels[..params.n_train],
                    &enc_rows[params.n_train..],
                    &labels[params.n_train..],
                    &cols,
                    params.k,
                )?;
                out.push((raw_acc, enc_acc));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let points = params
        .added_grid
        .iter()
        .enumerate()
        .map(|(gi, &m)| {
            let raw: Vec<f64> = per_trial.iter().map(|t| t[gi].0).collect();
            let enc: Vec<f64> = per_trial.iter().map(|t| t[gi].1).collect();
            let (raw_mean, raw_std) = mean_std(&raw);
            let (encoded_mean, encoded_std) = mean_std(&enc);
            AblationPoint {
                x: m,
                raw_mean,
                raw_std,
                encoded_mean,
                encoded_std,
            }
        })
        .collect();
    Ok(AblationCurve {
        mode: params.mode,
        points,
    })
}

// ---------------------------------------------------------------------------
// nearest-neighbor rate contrast

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateParams {
    pub kappa: usize,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for RateParams {
    fn default() -> RateParams {
        RateParams {
            kappa: 1,
            d: 4,
            n_grid: (6..=13).map(|e| 1usize << e).collect(),
            trials: 20,
            n_test: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub restricted_mean: f64,
    pub restricted_std: f64,
    pub encoded_mean: f64,
    pub encoded_std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub points: Vec<RatePoint>,
    pub slope_restricted: f64,
    pub slope_encoded: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateSummary {
    pub slope_restricted: f64,
    pub slope_encoded: f64,
    pub margin: f64,
}

impl RateReport {
    pub fn summary(&self) -> RateSummary {
        RateSummary {
            slope_restricted: self.slope_restricted,
            slope_encoded: self.slope_encoded,
            margin: self.slope_encoded - self.slope_restricted,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,arm,mean,std\n");
        for p in &self.points {
            s.push_str(&format!(
                "{},restricted,{},{}\n",
                p.n, p.restricted_mean, p.restricted_std
            ));
            s.push_str(&format!(
                "{},encoded,{},{}\n",
                p.n, p.encoded_mean, p.encoded_std
            ));
        }
        s
    }
}

/// One-nearest-neighbor mean squared error versus train size, for features
/// restricted to the informative coordinates against the same data pushed
/// through a bi-Lipschitz full-dimensional encoder. Log-log slopes quantify
/// the decay rates; the restricted arm should decay like the informative
/// dimension dictates, the encoded arm like the ambient one.
pub fn run_rate_experiment(params: &RateParams) -> Result<RateReport> {
    if params.kappa == 0 || params.kappa > params.d || params.n_grid.is_empty() {
        return Err(Error::Config("invalid rate-experiment parameters".into()));
    }
    let n_max = *params.n_grid.iter().max().unwrap();
    let per_trial: Vec<Vec<(f64, f64)>> = (0..params.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<(f64, f64)>> {
            let seed = derive_seed(params.seed, t as u64);
            let ds = gen_dataset(&SynthConfig {
                n: n_max + params.n_test - 1,
                d: params.d,
                kappa: params.kappa,
                pi: PiKind::Affine,
                dist: FeatureDist::Uniform,
                noise: 0.0,
                seed,
            })?;
            let mut enc_rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, (t as u64) | 1 << 40));
            let encoder = BiLipEncoder::random(params.d, &mut enc_rng);
            let encoded: Vec<Vec<f64>> = ds.x.iter().map(|r| encoder.encode_row(r)).collect();
            let raw_rows: Vec<&[f64]> = ds.x.iter().map(|r| r.as_slice()).collect();
            let enc_rows: Vec<&[f64]> = encoded.iter().map(|r| r.as_slice()).collect();
            let all_cols: Vec<usize> = (0..params.d).collect();
            let test_lo = n_max;
            let mut out = Vec::with_capacity(params.n_grid.len());
            for &n in &params.n_grid {
                let restricted = knn_mse(
                    &raw_rows[..n],
                    &ds.y[..n],
                    &raw_rows[test_lo..],
                    &ds.y[test_lo..],
                    &ds.informative,
                    1,
                )?;
                let enc = knn_mse(
                    &enc_rows[..n],
                    &ds.y[..n],
                    &enc_rows[test_lo..],
                    &ds.y[test_lo..],
                    &all_cols,
                    1,
                )?;
                out.push((restricted, enc));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let points: Vec<RatePoint> = params
        .n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let r: Vec<f64> = per_trial.iter().map(|t| t[gi].0).collect();
            let e: Vec<f64> = per_trial.iter().map(|t| t[gi].1).collect();
            let (restricted_mean, restricted_std) = mean_std(&r);
            let (encoded_mean, encoded_std) = mean_std(&e);
            RatePoint {
                n,
                restricted_mean,
                restricted_std,
                encoded_mean,
                encoded_std,
            }
        })
        .collect();
    let ns: Vec<f64> = points.iter().map(|p| p.n as f64).collect();
    let slope_restricted = loglog_slope(
        &ns,
        &points.iter().map(|p| p.restricted_mean).collect::<Vec<_>>(),
    );
    let slope_encoded = loglog_slope(
        &ns,
        &points.iter().map(|p| p.encoded_mean).collect::<Vec<_>>(),
    );
    Ok(RateReport {
        points,
        slope_restricted,
        slope_encoded,
    })
}
