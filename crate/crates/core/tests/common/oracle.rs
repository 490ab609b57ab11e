//! Reference implementations used as test oracles. Nothing here calls into the
//! library's solver or screening code; inputs are plain arrays and index lists.

#![allow(dead_code)]

use ndarray::{Array1, Array2};

/// One norm term `weight · ‖B[coords]‖₂` of the penalty.
#[derive(Debug, Clone)]
pub struct Term {
    pub coords: Vec<(usize, usize)>,
    pub weight: f64,
}

/// Every term of `λ1‖B‖₁ + λ2 Σ_k Σ_g ‖β_k^g‖ + λ3 Σ_j Σ_h ‖β_h^j‖` with unit
/// group weights. ℓ1 entries become one-coordinate terms.
pub fn penalty_terms(
    k: usize,
    j: usize,
    input_groups: &[Vec<usize>],
    output_groups: &[Vec<usize>],
    l1: f64,
    l2: f64,
    l3: f64,
) -> Vec<Term> {
    let mut terms = Vec::new();
    if l1 > 0.0 {
        for r in 0..k {
            for c in 0..j {
                terms.push(Term {
                    coords: vec![(r, c)],
                    weight: l1,
                });
            }
        }
    }
    if l2 > 0.0 {
        for r in 0..k {
            for g in input_groups {
                terms.push(Term {
                    coords: g.iter().map(|&c| (r, c)).collect(),
                    weight: l2,
                });
            }
        }
    }
    if l3 > 0.0 {
        for c in 0..j {
            for h in output_groups {
                terms.push(Term {
                    coords: h.iter().map(|&r| (r, c)).collect(),
                    weight: l3,
                });
            }
        }
    }
    terms
}

pub fn naive_penalty(b: &Array2<f64>, terms: &[Term]) -> f64 {
    terms
        .iter()
        .map(|t| {
            t.weight
                * t.coords
                    .iter()
                    .map(|&(r, c)| b[[r, c]] * b[[r, c]])
                    .sum::<f64>()
                    .sqrt()
        })
        .sum()
}

/// `½‖Y − BX‖²` by explicit loops.
pub fn naive_loss(b: &Array2<f64>, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let (k, j) = b.dim();
    let n = x.ncols();
    let mut total = 0.0;
    for r in 0..k {
        for s in 0..n {
            let mut pred = 0.0;
            for c in 0..j {
                pred += b[[r, c]] * x[[c, s]];
            }
            let e = y[[r, s]] - pred;
            total += e * e;
        }
    }
    0.5 * total
}

/// `Y Xᵀ` by explicit loops.
pub fn naive_correlation(x: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let (k, n) = y.dim();
    let j = x.nrows();
    let mut c = Array2::zeros((k, j));
    for r in 0..k {
        for col in 0..j {
            let mut acc = 0.0;
            for s in 0..n {
                acc += y[[r, s]] * x[[col, s]];
            }
            c[[r, col]] = acc;
        }
    }
    c
}

/// `Σ_k ½ b_kᵀ Q b_k − lin_kᵀ b_k + constant + Σ_t w_t‖b_t‖`, the common form of
/// the regression objective (`Q = XXᵀ`, `lin = YXᵀ`) and the proximal
/// objective (`Q = I`, `lin = V`).
pub struct Composite {
    pub q: Array2<f64>,
    pub lin: Array2<f64>,
    pub constant: f64,
    pub terms: Vec<Term>,
}

impl Composite {
    pub fn regression(x: &Array2<f64>, y: &Array2<f64>, terms: Vec<Term>) -> Self {
        Composite {
            q: x.dot(&x.t()),
            lin: naive_correlation(x, y),
            constant: 0.5 * y.iter().map(|v| v * v).sum::<f64>(),
            terms,
        }
    }

    /// `½‖Z − V‖² + Σ_t (step·w_t)‖z_t‖`.
    pub fn proximal(v: &Array2<f64>, step: f64, terms: &[Term]) -> Self {
        let j = v.ncols();
        Composite {
            q: Array2::eye(j),
            lin: v.clone(),
            constant: 0.5 * v.iter().map(|a| a * a).sum::<f64>(),
            terms: terms
                .iter()
                .map(|t| Term {
                    coords: t.coords.clone(),
                    weight: t.weight * step,
                })
                .collect(),
        }
    }

    pub fn value(&self, b: &Array2<f64>) -> f64 {
        let mut smooth = self.constant;
        for (row, lin) in b.rows().into_iter().zip(self.lin.rows()) {
            smooth += 0.5 * row.dot(&self.q.dot(&row)) - lin.dot(&row);
        }
        smooth + naive_penalty(b, &self.terms)
    }

    /// Consensus ADMM with one copy per norm term; each copy's update is an
    /// exact block soft-threshold. Runs until both residuals fall below `tol`
    /// (relative to the scale of `lin`) or `max_iters`.
    pub fn admm(&self, max_iters: usize, tol: f64) -> AdmmResult {
        let (k, j) = self.lin.dim();
        let rho = (0..j).map(|c| self.q[[c, c]]).sum::<f64>() / j as f64;
        let mut count = Array2::<f64>::zeros((k, j));
        for t in &self.terms {
            for &(r, c) in &t.coords {
                count[[r, c]] += 1.0;
            }
        }
        // One factorization per row: (Q + ρ diag(count_k)).
        let factors: Vec<Array2<f64>> = (0..k)
            .map(|r| {
                let mut m = self.q.clone();
                for c in 0..j {
                    m[[c, c]] += rho * count[[r, c]];
                }
                cholesky(&m)
            })
            .collect();

        let mut b = Array2::<f64>::zeros((k, j));
        let mut z: Vec<Vec<f64>> = self
            .terms
            .iter()
            .map(|t| vec![0.0; t.coords.len()])
            .collect();
        let mut u = z.clone();
        let scale = self.lin.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let mut iterations = 0;
        let mut residual = f64::INFINITY;
        for it in 1..=max_iters {
            iterations = it;
            let mut rhs = self.lin.clone();
            for (t, (zt, ut)) in self.terms.iter().zip(z.iter().zip(&u)) {
                for (i, &(r, c)) in t.coords.iter().enumerate() {
                    rhs[[r, c]] += rho * (zt[i] - ut[i]);
                }
            }
            for (r, factor) in factors.iter().enumerate() {
                let sol = cholesky_solve(factor, &rhs.row(r).to_owned());
                b.row_mut(r).assign(&sol);
            }
            let mut primal: f64 = 0.0;
            let mut dual: f64 = 0.0;
            for (t, (zt, ut)) in self.terms.iter().zip(z.iter_mut().zip(u.iter_mut())) {
                let w: Vec<f64> = t
                    .coords
                    .iter()
                    .zip(ut.iter())
                    .map(|(&(r, c), ui)| b[[r, c]] + ui)
                    .collect();
                let nrm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let shrink = if nrm > 0.0 {
                    (1.0 - t.weight / (rho * nrm)).max(0.0)
                } else {
                    0.0
                };
                for (i, &(r, c)) in t.coords.iter().enumerate() {
                    let next = shrink * w[i];
                    dual = dual.max(rho * (next - zt[i]).abs());
                    zt[i] = next;
                    let gap = b[[r, c]] - next;
                    primal = primal.max(gap.abs());
                    ut[i] += gap;
                }
            }
            residual = primal.max(dual / rho);
            if primal <= tol * scale && dual <= tol * scale {
                break;
            }
        }
        AdmmResult {
            objective: self.value(&b),
            b,
            iterations,
            residual,
        }
    }
}

pub struct AdmmResult {
    pub b: Array2<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Lower-triangular `L` with `L Lᵀ = m`.
pub fn cholesky(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            if i == j {
                assert!(s > 0.0, "matrix is not positive definite");
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    l
}

pub fn cholesky_solve(l: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = rhs[i];
        for p in 0..i {
            s -= l[[i, p]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s -= l[[p, i]] * x[p];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Single-task (`K = 1`, `λ3 = 0`) test that a group is zero at `B = 0`, from
/// the subgradient equation `c_j = λ1 s_j + λ2 c̃_j`: the best `s_j ∈ [−1, 1]`
/// leaves residuals whose ℓ1 total must fit in the group budget `λ2`.
pub fn single_task_zero_group(
    x: &Array2<f64>,
    y: &Array1<f64>,
    group: &[usize],
    lambda1: f64,
    lambda2: f64,
) -> bool {
    let mut total = 0.0;
    for &j in group {
        let c: f64 = (0..y.len()).map(|s| y[s] * x[[j, s]]).sum();
        let s = if lambda1 > 0.0 {
            (c / lambda1).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        total += (c - lambda1 * s).abs();
    }
    total <= lambda2
}

/// Sum of the group's soft-thresholded correlations in ℓ2 norm; the
/// zero-group condition of the overlapping group lasso proximal problem.
pub fn soft_l2_norm(x: &Array2<f64>, y: &Array1<f64>, group: &[usize], lambda1: f64) -> f64 {
    group
        .iter()
        .map(|&j| {
            let c: f64 = (0..y.len()).map(|s| y[s] * x[[j, s]]).sum();
            (c.abs() - lambda1).max(0.0).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Subgradient-equation residual at every nonzero coefficient of `b`:
/// `|∇_kj f + λ1 sign(β) + Σ_terms w_t β_kj/‖β_t‖|`. Coefficients in a zero
/// norm term are skipped (their subgradient is set-valued).
pub fn nonzero_kkt_residuals(
    b: &Array2<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
    group_terms: &[Term],
    lambda1: f64,
    zero_tol: f64,
) -> Vec<f64> {
    let r = y - &b.dot(x);
    let grad = -r.dot(&x.t());
    let mut eq = grad.clone();
    let mut determined = Array2::from_elem(b.dim(), true);
    for ((k, j), &v) in b.indexed_iter() {
        if v.abs() > zero_tol {
            eq[[k, j]] += lambda1 * v.signum();
        } else {
            determined[[k, j]] = false;
        }
    }
    for t in group_terms {
        let nrm = t
            .coords
            .iter()
            .map(|&(r, c)| b[[r, c]] * b[[r, c]])
            .sum::<f64>()
            .sqrt();
        if nrm == 0.0 {
            continue;
        }
        for &(r, c) in &t.coords {
            eq[[r, c]] += t.weight * b[[r, c]] / nrm;
        }
    }
    eq.indexed_iter()
        .filter(|(idx, _)| determined[*idx])
        .map(|(_, v)| v.abs())
        .collect()
}
