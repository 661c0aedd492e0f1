//! Primal-dual path-following solver for small conic programs over a
//! product of complex Hermitian PSD blocks and a nonnegative orthant:
//!
//! ```text
//! min ⟨C, X⟩  s.t.  ⟨A_k, X⟩ = b_k,  X ⪰ 0
//! max bᵀy     s.t.  Σ y_k A_k + S = C,  S ⪰ 0
//! ```
//!
//! Search directions are HKM with a Mehrotra predictor-corrector; the Schur
//! complement is assembled densely (a few dozen rows at most).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

type CMat = DMatrix<Complex64>;

/// One linear constraint: Hermitian coefficients on some PSD blocks plus
/// coefficients on some orthant coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub blocks: Vec<(usize, CMat)>,
    pub lp: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub block_dim: usize,
    pub c_blocks: Vec<CMat>,
    pub c_lp: DVector<f64>,
    pub rows: Vec<Row>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Optimal,
    MaxIterations,
    /// Iterates blew up, which for these programs signals infeasibility.
    Diverged,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x_blocks: Vec<CMat>,
    pub x_lp: DVector<f64>,
    pub y: DVector<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct IpmSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub step_fraction: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            step_fraction: 0.98,
        }
    }
}

pub(crate) fn re_tr_prod(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[(i, j)];
            let y = b[(j, i)];
            acc += x.re * y.re - x.im * y.im;
        }
    }
    acc
}

fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

fn identity(n: usize, scale: f64) -> CMat {
    CMat::from_diagonal_element(n, n, Complex64::new(scale, 0.0))
}

fn hermitian_inverse(m: &CMat) -> Option<CMat> {
    let chol = m.clone().cholesky()?;
    Some(hermitian_part(&chol.inverse()))
}

/// Largest `α` with `X + α ΔX ⪰ 0` (∞ when unbounded).
fn max_step_psd(x: &CMat, dx: &CMat) -> Option<f64> {
    let chol = x.clone().cholesky()?;
    let l = chol.l();
    let t = l.solve_lower_triangular(dx)?;
    let m = l.solve_lower_triangular(&t.adjoint())?;
    let eig = SymmetricEigen::new(hermitian_part(&m.adjoint()));
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&v, &d)| -v / d)
        .fold(f64::INFINITY, f64::min)
}

impl ConicProblem {
    fn num_blocks(&self) -> usize {
        self.c_blocks.len()
    }

    fn num_lp(&self) -> usize {
        self.c_lp.len()
    }

    fn apply(&self, xb: &[CMat], xl: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows.iter().map(|r| {
                r.blocks.iter().map(|(b, a)| re_tr_prod(a, &xb[*b])).sum::<f64>()
                    + r.lp.iter().map(|(v, a)| a * xl[*v]).sum::<f64>()
            }),
        )
    }

    fn apply_adjoint(&self, y: &DVector<f64>) -> (Vec<CMat>, DVector<f64>) {
        let n = self.block_dim;
        let mut blocks = vec![CMat::zeros(n, n); self.num_blocks()];
        let mut lp = DVector::zeros(self.num_lp());
        for (k, r) in self.rows.iter().enumerate() {
            for (b, a) in &r.blocks {
                blocks[*b] += a.scale(y[k]);
            }
            for (v, a) in &r.lp {
                lp[*v] += a * y[k];
            }
        }
        (blocks, lp)
    }

    /// Per-block list of `(row, coefficient)` pairs.
    fn block_rows(&self) -> Vec<Vec<(usize, &CMat)>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (k, r) in self.rows.iter().enumerate() {
            for (b, a) in &r.blocks {
                out[*b].push((k, a));
            }
        }
        out
    }

    fn lp_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut out = vec![Vec::new(); self.num_lp()];
        for (k, r) in self.rows.iter().enumerate() {
            for (v, a) in &r.lp {
                out[*v].push((k, *a));
            }
        }
        out
    }

    pub fn solve(&self, settings: &IpmSettings) -> IpmResult {
        let n = self.block_dim;
        let nb = self.num_blocks();
        let nl = self.num_lp();
        let m = self.rows.len();
        let nu = (nb * n + nl).max(1) as f64;
        let block_rows = self.block_rows();
        let lp_rows = self.lp_rows();

        // Starting point scaled to the data.
        let row_norm = |r: &Row| {
            (r.blocks.iter().map(|(_, a)| a.norm_squared()).sum::<f64>() + r.lp.iter().map(|(_, a)| a * a).sum::<f64>())
                .sqrt()
        };
        let mut zeta = 10f64.max((n as f64).sqrt());
        let mut eta = 10f64.max((n as f64).sqrt());
        for (k, r) in self.rows.iter().enumerate() {
            let nr = row_norm(r);
            zeta = zeta.max(n as f64 * (1.0 + self.b[k].abs()) / (1.0 + nr));
            eta = eta.max(nr);
        }
        let c_norm = (self.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + self.c_lp.norm_squared()).sqrt();
        eta = eta.max(c_norm);
        let mut xb: Vec<CMat> = vec![identity(n, zeta); nb];
        let mut xl = DVector::from_element(nl, zeta);
        let mut sb: Vec<CMat> = vec![identity(n, eta); nb];
        let mut sl = DVector::from_element(nl, eta);
        let mut y = DVector::zeros(m);

        let b_norm = self.b.norm();
        let mut status = IpmStatus::MaxIterations;
        let mut iterations = 0;

        let finish = |status, xb: Vec<CMat>, xl: DVector<f64>, y: DVector<f64>, it| {
            let pobj = xb
                .iter()
                .zip(&self.c_blocks)
                .map(|(x, c)| re_tr_prod(c, x))
                .sum::<f64>()
                + self.c_lp.dot(&xl);
            let dobj = self.b.dot(&y);
            IpmResult {
                status,
                x_blocks: xb,
                x_lp: xl,
                y,
                primal_objective: pobj,
                dual_objective: dobj,
                iterations: it,
            }
        };

        for it in 0..settings.max_iter {
            iterations = it;
            let ax = self.apply(&xb, &xl);
            let rp = &self.b - ax;
            let (aty_b, aty_l) = self.apply_adjoint(&y);
            let rd_b: Vec<CMat> = (0..nb).map(|i| &self.c_blocks[i] - &sb[i] - &aty_b[i]).collect();
            let rd_l = &self.c_lp - &sl - aty_l;
            let gap = xb.iter().zip(&sb).map(|(x, s)| re_tr_prod(x, s)).sum::<f64>() + xl.dot(&sl);
            let mu = gap / nu;
            let pobj = xb
                .iter()
                .zip(&self.c_blocks)
                .map(|(x, c)| re_tr_prod(c, x))
                .sum::<f64>()
                + self.c_lp.dot(&xl);
            let dobj = self.b.dot(&y);
            let pinf = rp.norm() / (1.0 + b_norm);
            let dinf =
                (rd_b.iter().map(|r| r.norm_squared()).sum::<f64>() + rd_l.norm_squared()).sqrt() / (1.0 + c_norm);
            let rel_gap = gap.abs() / (1.0 + pobj.abs() + dobj.abs());
            if pinf <= settings.tol && dinf <= settings.tol && rel_gap <= settings.tol {
                status = IpmStatus::Optimal;
                break;
            }
            let blowup = xb.iter().map(|x| x.norm()).fold(xl.amax(), f64::max).max(y.amax());
            if !blowup.is_finite() || blowup > 1e14 {
                status = IpmStatus::Diverged;
                break;
            }

            let Some(sinv): Option<Vec<CMat>> = sb.iter().map(hermitian_inverse).collect() else {
                status = IpmStatus::Breakdown;
                break;
            };

            // Schur complement M_kl = Re tr(A_k X A_l S⁻¹) + Σ a_k a_l x/s.
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for bi in 0..nb {
                for &(k, ak) in &block_rows[bi] {
                    let p = &xb[bi] * ak * &sinv[bi];
                    for &(l, al) in &block_rows[bi] {
                        schur[(l, k)] += re_tr_prod(al, &p);
                    }
                }
            }
            for v in 0..nl {
                let ratio = xl[v] / sl[v];
                for &(k, ak) in &lp_rows[v] {
                    for &(l, al) in &lp_rows[v] {
                        schur[(l, k)] += ak * al * ratio;
                    }
                }
            }
            let schur = (&schur + schur.transpose()) * 0.5;
            let solver = SchurSolver::new(schur);

            // Direction for a given centering target and second-order term.
            let direction = |sigma_mu: f64, corr: Option<(&[CMat], &DVector<f64>, &[CMat], &DVector<f64>)>| {
                // H = σμ S⁻¹ − X − X R_d S⁻¹ − ΔX_a ΔS_a S⁻¹
                let hb: Vec<CMat> = (0..nb)
                    .map(|i| {
                        let mut h = sinv[i].scale(sigma_mu) - &xb[i] - &xb[i] * &rd_b[i] * &sinv[i];
                        if let Some((dxa, _, dsa, _)) = corr {
                            h -= &dxa[i] * &dsa[i] * &sinv[i];
                        }
                        h
                    })
                    .collect();
                let hl = DVector::from_fn(nl, |v, _| {
                    let mut h = sigma_mu / sl[v] - xl[v] - xl[v] * rd_l[v] / sl[v];
                    if let Some((_, dxa, _, dsa)) = corr {
                        h -= dxa[v] * dsa[v] / sl[v];
                    }
                    h
                });
                let rhs = &rp - self.apply(&hb, &hl);
                let dy = solver.solve(&rhs)?;
                let (atdy_b, atdy_l) = self.apply_adjoint(&dy);
                let dsb: Vec<CMat> = (0..nb).map(|i| &rd_b[i] - &atdy_b[i]).collect();
                let dsl = &rd_l - &atdy_l;
                let dxb: Vec<CMat> = (0..nb)
                    .map(|i| hermitian_part(&(&hb[i] + &xb[i] * &atdy_b[i] * &sinv[i])))
                    .collect();
                let dxl = DVector::from_fn(nl, |v, _| hl[v] + xl[v] * atdy_l[v] / sl[v]);
                Some((dxb, dxl, dy, dsb, dsl))
            };

            let step_lengths =
                |dxb: &[CMat], dxl: &DVector<f64>, dsb: &[CMat], dsl: &DVector<f64>| -> Option<(f64, f64)> {
                    let mut ap = max_step_lp(&xl, dxl);
                    let mut ad = max_step_lp(&sl, dsl);
                    for i in 0..nb {
                        ap = ap.min(max_step_psd(&xb[i], &dxb[i])?);
                        ad = ad.min(max_step_psd(&sb[i], &dsb[i])?);
                    }
                    Some((ap, ad))
                };

            let Some((dxa_b, dxa_l, _, dsa_b, dsa_l)) = direction(0.0, None) else {
                status = IpmStatus::Breakdown;
                break;
            };
            let Some((ap, ad)) = step_lengths(&dxa_b, &dxa_l, &dsa_b, &dsa_l) else {
                status = IpmStatus::Breakdown;
                break;
            };
            let (ap, ad) = (ap.min(1.0), ad.min(1.0));
            let gap_aff = (0..nb)
                .map(|i| re_tr_prod(&(&xb[i] + dxa_b[i].scale(ap)), &(&sb[i] + dsa_b[i].scale(ad))))
                .sum::<f64>()
                + (&xl + &dxa_l * ap).dot(&(&sl + &dsa_l * ad));
            let sigma = ((gap_aff / nu) / mu).clamp(0.0, 1.0).powi(3);

            let Some((dxb, dxl, dy, dsb, dsl)) = direction(sigma * mu, Some((&dxa_b, &dxa_l, &dsa_b, &dsa_l))) else {
                status = IpmStatus::Breakdown;
                break;
            };
            let Some((ap, ad)) = step_lengths(&dxb, &dxl, &dsb, &dsl) else {
                status = IpmStatus::Breakdown;
                break;
            };
            let ap = (settings.step_fraction * ap).min(1.0);
            let ad = (settings.step_fraction * ad).min(1.0);
            for i in 0..nb {
                xb[i] = hermitian_part(&(&xb[i] + dxb[i].scale(ap)));
                sb[i] = hermitian_part(&(&sb[i] + dsb[i].scale(ad)));
            }
            xl += &dxl * ap;
            sl += &dsl * ad;
            y += &dy * ad;
            iterations = it + 1;
        }
        finish(status, xb, xl, y, iterations)
    }
}

struct SchurSolver {
    chol: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SchurSolver {
    fn new(m: DMatrix<f64>) -> Self {
        Self {
            chol: m.clone().cholesky(),
            lu: m.lu(),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.chol {
            Some(c) => Some(c.solve(rhs)),
            None => self.lu.solve(rhs),
        }
    }
}
