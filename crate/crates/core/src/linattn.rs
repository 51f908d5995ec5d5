//! ReLU attention reference kernels.
//!
//! [`naive_relu_attention`] materializes the full `n x n` attention matrix with
//! `A_ij = ReLU(q'_i . k_j) / sum_j' ReLU(q'_i . k_j')`, where `q' = q / sqrt(d_k)`.
//! [`factored_linear_attention`] uses the ReLU feature map instead,
//! `ReLU(q'_i) . (ReLU(K)^T V) / ReLU(q'_i) . (ReLU(K)^T 1)`, and never forms the
//! `n x n` matrix. Both agree whenever queries and keys are non-negative, which
//! is the regime the check suite samples from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Resolution;
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Queries, keys and values, one row per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInput<T> {
    pub q: Matrix<T>,
    pub k: Matrix<T>,
    pub v: Matrix<T>,
}

impl<T: Real> AttentionInput<T> {
    pub fn new(q: Matrix<T>, k: Matrix<T>, v: Matrix<T>) -> Result<Self> {
        if q.rows != k.rows || k.rows != v.rows {
            return Err(Error::Shape(format!(
                "patch counts differ: q {}, k {}, v {}",
                q.rows, k.rows, v.rows
            )));
        }
        if q.cols != k.cols {
            return Err(Error::Shape(format!(
                "query dim {} != key dim {}",
                q.cols, k.cols
            )));
        }
        let finite = |m: &Matrix<T>| m.data.iter().all(|x| x.is_finite());
        if !(finite(&q) && finite(&k) && finite(&v)) {
            return Err(Error::Shape("non-finite attention input".into()));
        }
        Ok(Self { q, k, v })
    }

    pub fn patches(&self) -> usize {
        self.q.rows
    }

    pub fn key_dim(&self) -> usize {
        self.q.cols
    }

    pub fn value_dim(&self) -> usize {
        self.v.cols
    }

    fn query_scale(&self) -> T {
        T::one() / T::lit(self.key_dim() as f64).sqrt()
    }
}

/// Counts scalar multiplications (and divisions) performed by a kernel.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MulCounter {
    pub muls: u64,
}

impl MulCounter {
    fn add(&mut self, n: usize) {
        self.muls += n as u64;
    }
}

fn relu<T: Real>(x: T) -> T {
    x.max(T::zero())
}

fn scaled_queries<T: Real>(input: &AttentionInput<T>, counter: &mut MulCounter) -> Matrix<T> {
    let s = input.query_scale();
    counter.add(input.q.data.len());
    Matrix {
        rows: input.q.rows,
        cols: input.q.cols,
        data: input.q.data.iter().map(|&x| x * s).collect(),
    }
}

/// Row-normalized attention weights. A row with zero total similarity is all zeros.
pub fn naive_attention_weights<T: Real>(input: &AttentionInput<T>) -> Matrix<T> {
    naive_weights_counted(input, &mut MulCounter::default())
}

fn naive_weights_counted<T: Real>(input: &AttentionInput<T>, counter: &mut MulCounter) -> Matrix<T> {
    let n = input.patches();
    let dk = input.key_dim();
    let q = scaled_queries(input, counter);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        let qi = q.row(i);
        let row = a.row_mut(i);
        let mut denom = T::zero();
        for (j, slot) in row.iter_mut().enumerate() {
            let kj = input.k.row(j);
            let dot = qi.iter().zip(kj).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
            *slot = relu(dot);
            denom += *slot;
        }
        counter.add(n * dk);
        if denom > T::zero() {
            for slot in row.iter_mut() {
                *slot /= denom;
            }
            counter.add(n);
        } else {
            row.iter_mut().for_each(|s| *s = T::zero());
        }
    }
    a
}

pub fn naive_relu_attention<T: Real>(input: &AttentionInput<T>) -> Matrix<T> {
    naive_relu_attention_counted(input, &mut MulCounter::default())
}

pub fn naive_relu_attention_counted<T: Real>(
    input: &AttentionInput<T>,
    counter: &mut MulCounter,
) -> Matrix<T> {
    let n = input.patches();
    let dv = input.value_dim();
    let a = naive_weights_counted(input, counter);
    let mut out = Matrix::zeros(n, dv);
    for i in 0..n {
        let ai = a.row(i);
        let oi = out.row_mut(i);
        for (j, &w) in ai.iter().enumerate() {
            for (o, &x) in oi.iter_mut().zip(input.v.row(j)) {
                *o += w * x;
            }
        }
        counter.add(n * dv);
    }
    out
}

pub fn factored_linear_attention<T: Real>(input: &AttentionInput<T>) -> Matrix<T> {
    factored_linear_attention_counted(input, &mut MulCounter::default())
}

pub fn factored_linear_attention_counted<T: Real>(
    input: &AttentionInput<T>,
    counter: &mut MulCounter,
) -> Matrix<T> {
    let n = input.patches();
    let dk = input.key_dim();
    let dv = input.value_dim();
    let q = scaled_queries(input, counter);

    // ReLU(K)^T V  (dk x dv) and ReLU(K)^T 1  (dk)
    let mut kv = Matrix::zeros(dk, dv);
    let mut ksum = vec![T::zero(); dk];
    for j in 0..n {
        let vj = input.v.row(j);
        for (c, &kjc) in input.k.row(j).iter().enumerate() {
            let kr = relu(kjc);
            ksum[c] += kr;
            for (slot, &x) in kv.row_mut(c).iter_mut().zip(vj) {
                *slot += kr * x;
            }
        }
        counter.add(dk * dv);
    }

    let mut out = Matrix::zeros(n, dv);
    for i in 0..n {
        let qr: Vec<T> = q.row(i).iter().map(|&x| relu(x)).collect();
        let denom = qr.iter().zip(&ksum).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
        counter.add(dk);
        if !(denom > T::zero()) {
            continue;
        }
        let oi = out.row_mut(i);
        for (c, &qc) in qr.iter().enumerate() {
            for (o, &x) in oi.iter_mut().zip(kv.row(c)) {
                *o += qc * x;
            }
        }
        for o in oi.iter_mut() {
            *o /= denom;
        }
        counter.add(dk * dv + dv);
    }
    out
}

fn patch_count(r: Resolution, patch: u32) -> Result<u64> {
    if patch == 0 || r.is_zero() {
        return Err(Error::ZeroResolution(r.width, r.height));
    }
    if !r.width.is_multiple_of(patch) || !r.height.is_multiple_of(patch) {
        return Err(Error::NotDivisible {
            width: r.width,
            height: r.height,
            patch,
        });
    }
    Ok(u64::from(r.width / patch) * u64::from(r.height / patch))
}

/// Ratio of linear-attention cost at `full` versus `low`: the patch-count ratio.
pub fn attention_mac_ratio<T: Real>(full: Resolution, low: Resolution, patch: u32) -> Result<T> {
    let nf = patch_count(full, patch)?;
    let nl = patch_count(low, patch)?;
    Ok(T::lit(nf as f64) / T::lit(nl as f64))
}

/// Max-norm error of `got` relative to the max-norm of `want`.
pub fn relative_error<T: Real>(got: &Matrix<T>, want: &Matrix<T>) -> T {
    let diff = got
        .data
        .iter()
        .zip(&want.data)
        .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
    let scale = want.max_abs();
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}

/// Uniform `[0, 1)` queries, keys and values.
pub fn random_nonnegative_input(
    rng: &mut impl Rng,
    n: usize,
    dk: usize,
    dv: usize,
) -> AttentionInput<f64> {
    let mut m = |r, c| Matrix::from_fn(r, c, |_, _| rng.random::<f64>());
    let q = m(n, dk);
    let k = m(n, dk);
    let v = m(n, dv);
    AttentionInput { q, k, v }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnCheckConfig {
    pub n_values: Vec<usize>,
    pub d: usize,
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for AttnCheckConfig {
    fn default() -> Self {
        Self {
            n_values: vec![8, 16, 32, 64],
            d: 16,
            trials: 100,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttnReport {
    pub checks: Vec<CheckLine>,
}

impl AttnReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs the equivalence suite of `kernel` against the naive kernel, plus the
/// multiply-count scaling checks of the reference kernels.
pub fn run_attention_suite(
    cfg: &AttnCheckConfig,
    kernel: &dyn Fn(&AttentionInput<f64>) -> Matrix<f64>,
) -> AttnReport {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut ns = vec![1usize];
    ns.extend(cfg.n_values.iter().copied().filter(|&n| n != 1));
    for n in ns {
        let mut worst = 0.0f64;
        for _ in 0..cfg.trials.max(1) {
            let input = random_nonnegative_input(&mut rng, n, cfg.d, cfg.d);
            let want = naive_relu_attention(&input);
            let got = kernel(&input);
            let err = if got.rows == want.rows && got.cols == want.cols {
                relative_error(&got, &want)
            } else {
                f64::INFINITY
            };
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
            if n == 1 {
                worst = worst.max(relative_error(&got, &input.v));
            }
        }
        checks.push(CheckLine {
            name: format!("equivalence n={n} d={}", cfg.d),
            passed: worst <= cfg.tolerance,
            detail: format!("max relative error {worst:.3e} (tolerance {:.1e})", cfg.tolerance),
        });
    }

    let count = |n: usize, factored: bool, rng: &mut ChaCha8Rng| {
        let input = random_nonnegative_input(rng, n, cfg.d, cfg.d);
        let mut c = MulCounter::default();
        if factored {
            factored_linear_attention_counted(&input, &mut c);
        } else {
            naive_relu_attention_counted(&input, &mut c);
        }
        c.muls as f64
    };
    for (factored, label, lo, hi) in [(true, "factored", 1.9, 2.1), (false, "naive", 3.8, 4.2)] {
        let ratio = count(64, factored, &mut rng) / count(32, factored, &mut rng);
        checks.push(CheckLine {
            name: format!("scaling {label} n=64/n=32"),
            passed: (lo..=hi).contains(&ratio),
            detail: format!("multiply-count ratio {ratio:.3} (expected [{lo}, {hi}])"),
        });
    }
    AttnReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(q: Vec<f64>, k: Vec<f64>, v: Vec<f64>, n: usize, d: usize, dv: usize) -> AttentionInput<f64> {
        AttentionInput::new(
            Matrix::from_vec(n, d, q).unwrap(),
            Matrix::from_vec(n, d, k).unwrap(),
            Matrix::from_vec(n, dv, v).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_patch_returns_values() {
        let x = input(vec![0.3, 0.7], vec![0.2, 0.9], vec![1.0, -2.0, 5.0], 1, 2, 3);
        assert_eq!(naive_relu_attention(&x), x.v);
        let f = factored_linear_attention(&x);
        assert!(relative_error(&f, &x.v) < 1e-15);
    }

    #[test]
    fn identical_keys_average_values() {
        let n = 4;
        let x = input(
            vec![0.5, 1.0, 0.2, 0.3, 0.9, 0.1, 0.4, 0.4],
            [0.6, 0.2].repeat(n),
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            n,
            2,
            2,
        );
        let a = naive_attention_weights(&x);
        for w in a.as_slice() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        let out = naive_relu_attention(&x);
        for i in 0..n {
            assert!((out.get(i, 0) - 4.0).abs() < 1e-12);
            assert!((out.get(i, 1) - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_denominator_rows_are_zero() {
        let x = input(vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 1.0, 1.0], vec![3.0, 4.0], 2, 2, 1);
        let naive = naive_relu_attention(&x);
        let fact = factored_linear_attention(&x);
        assert_eq!(naive.get(0, 0), 0.0);
        assert_eq!(fact.get(0, 0), 0.0);
        assert!((naive.get(1, 0) - 3.5).abs() < 1e-12);
        assert!((fact.get(1, 0) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn kernels_agree_on_small_nonnegative_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = random_nonnegative_input(&mut rng, 4, 3, 3);
        let err = relative_error(&factored_linear_attention(&x), &naive_relu_attention(&x));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn signed_inputs_break_the_factorization() {
        // ReLU(q.k) differs from ReLU(q).ReLU(k) once signs mix.
        let x = input(vec![1.0, -1.0, 1.0, 1.0], vec![1.0, 1.0, 0.5, -2.0], vec![1.0, 0.0], 2, 2, 1);
        let err = relative_error(&factored_linear_attention(&x), &naive_relu_attention(&x));
        assert!(err > 1e-3);
    }

    #[test]
    fn rows_of_attention_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2, 5, 17] {
            let x = random_nonnegative_input(&mut rng, n, 8, 4);
            let a = naive_attention_weights(&x);
            for i in 0..n {
                let s: f64 = a.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
                assert!(a.row(i).iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn factored_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_nonnegative_input(&mut rng, 6, 4, 3);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permute = |m: &Matrix<f64>| Matrix::from_fn(m.rows(), m.cols(), |i, j| m.get(perm[i], j));
        let px = AttentionInput::new(permute(&x.q), permute(&x.k), permute(&x.v)).unwrap();
        let out = factored_linear_attention(&x);
        let pout = factored_linear_attention(&px);
        assert!(relative_error(&pout, &permute(&out)) < 1e-12);
    }

    #[test]
    fn multiply_counts_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let counts = |n, rng: &mut ChaCha8Rng| {
            let x = random_nonnegative_input(rng, n, 16, 16);
            let (mut a, mut b) = (MulCounter::default(), MulCounter::default());
            naive_relu_attention_counted(&x, &mut a);
            factored_linear_attention_counted(&x, &mut b);
            (a.muls as f64, b.muls as f64)
        };
        let (n32, f32_) = counts(32, &mut rng);
        let (n64, f64_) = counts(64, &mut rng);
        assert!((1.9..=2.1).contains(&(f64_ / f32_)));
        assert!((3.8..=4.2).contains(&(n64 / n32)));
    }

    #[test]
    fn mac_ratio_examples() {
        let r = |a, b, p| attention_mac_ratio::<f64>(Resolution::new(a, a), Resolution::new(b, b), p);
        assert!((r(320, 192, 8).unwrap() - 1600.0 / 576.0).abs() < 1e-12);
        assert!((r(320, 192, 8).unwrap() - 2.78).abs() < 0.005);
        assert_eq!(r(320, 320, 16).unwrap(), 1.0);
        assert_eq!(r(320, 160, 32).unwrap(), 4.0);
        assert!(matches!(r(320, 192, 7), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn shape_validation() {
        let q = Matrix::<f64>::zeros(3, 2);
        let k = Matrix::<f64>::zeros(2, 2);
        assert!(AttentionInput::new(q, k, Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn suite_passes_and_catches_sign_error() {
        let cfg = AttnCheckConfig {
            trials: 5,
            ..Default::default()
        };
        assert!(run_attention_suite(&cfg, &|x| factored_linear_attention(x)).passed());
        let broken = |x: &AttentionInput<f64>| {
            let mut out = factored_linear_attention(x);
            let r = out.rows() - 1;
            out.row_mut(r)[0] = -out.get(r, 0);
            out
        };
        assert!(!run_attention_suite(&cfg, &broken).passed());
    }

    #[test]
    fn single_precision_kernels() {
        let x = AttentionInput::<f32>::new(
            Matrix::from_vec(2, 2, vec![0.5, 0.1, 0.2, 0.9]).unwrap(),
            Matrix::from_vec(2, 2, vec![0.3, 0.3, 0.8, 0.1]).unwrap(),
            Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap(),
        )
        .unwrap();
        let err = relative_error(&factored_linear_attention(&x), &naive_relu_attention(&x));
        assert!(err < 1e-5);
    }
}
