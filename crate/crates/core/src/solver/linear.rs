//! Normal equations with the factor-graph sparsity pattern: a block
//! tridiagonal time part (one 13-dim block per timestep holding `x_a`, `x_b`,
//! `q`) bordered by 12 global dims (`T_twist`, `nu`).

use nalgebra::{Cholesky, DMatrix, DVector, SMatrix, SVector};

use crate::error::{Error, Result};
use crate::factor_graph::{LinearizedFactor, VarRef};

pub const TIME_DIM: usize = 13;
pub const GLOBAL_DIM: usize = 12;

type Blk = SMatrix<f64, TIME_DIM, TIME_DIM>;
type Border = SMatrix<f64, TIME_DIM, GLOBAL_DIM>;
type Glob = SMatrix<f64, GLOBAL_DIM, GLOBAL_DIM>;
type TVec = SVector<f64, TIME_DIM>;
type GVec = SVector<f64, GLOBAL_DIM>;
type Mat6 = SMatrix<f64, 6, 6>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Loc {
    Time(usize, usize),
    Global(usize),
}

fn locate(v: &VarRef) -> Loc {
    match *v {
        VarRef::Pose { slot, t } => Loc::Time(t, 6 * slot),
        VarRef::Q { t } => Loc::Time(t, 12),
        VarRef::TTwist => Loc::Global(0),
        VarRef::Nu => Loc::Global(6),
    }
}

/// Offset of a variable in the flat tangent vector.
pub fn flat_offset(v: &VarRef, horizon: usize) -> usize {
    match locate(v) {
        Loc::Time(t, o) => TIME_DIM * t + o,
        Loc::Global(o) => TIME_DIM * horizon + o,
    }
}

pub fn flat_dim(horizon: usize) -> usize {
    TIME_DIM * horizon + GLOBAL_DIM
}

/// Gauss-Newton system `H dx = -g` accumulated from linearized factors.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    diag: Vec<Blk>,
    /// `lower[t]` is the block at (t+1, t).
    lower: Vec<Blk>,
    border: Vec<Border>,
    global: Glob,
    g_time: Vec<TVec>,
    g_global: GVec,
}

impl NormalEquations {
    pub fn new(horizon: usize) -> Self {
        NormalEquations {
            diag: vec![Blk::zeros(); horizon],
            lower: vec![Blk::zeros(); horizon.saturating_sub(1)],
            border: vec![Border::zeros(); horizon],
            global: Glob::zeros(),
            g_time: vec![TVec::zeros(); horizon],
            g_global: GVec::zeros(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.diag.len()
    }

    pub fn add(&mut self, f: &LinearizedFactor) -> Result<()> {
        let (r, js, vars) = (&f.residual, &f.jac, &f.vars[..f.len]);
        for (i, vi) in vars.iter().enumerate() {
            let li = locate(vi);
            let ci = vi.dim();
            let gi = js[i].tr_mul(r);
            match li {
                Loc::Time(t, o) => {
                    for k in 0..ci {
                        self.g_time[t][o + k] += gi[k];
                    }
                }
                Loc::Global(o) => {
                    for k in 0..ci {
                        self.g_global[o + k] += gi[k];
                    }
                }
            }
            for (j, vj) in vars.iter().enumerate().skip(i) {
                let h = js[i].tr_mul(&js[j]);
                self.add_block(li, locate(vj), &h, (ci, vj.dim()), vi == vj)?;
            }
        }
        Ok(())
    }

    /// Adds the leading `dims` of `h` at (li, lj) and, unless on the
    /// diagonal, its transpose at (lj, li).
    fn add_block(&mut self, li: Loc, lj: Loc, h: &Mat6, dims: (usize, usize), same: bool) -> Result<()> {
        let (r, c) = dims;
        match (li, lj) {
            (Loc::Time(ti, oi), Loc::Time(tj, oj)) if ti == tj => {
                let b = &mut self.diag[ti];
                for a in 0..r {
                    for k in 0..c {
                        b[(oi + a, oj + k)] += h[(a, k)];
                        if !same {
                            b[(oj + k, oi + a)] += h[(a, k)];
                        }
                    }
                }
            }
            (Loc::Time(ti, oi), Loc::Time(tj, oj)) if ti + 1 == tj || tj + 1 == ti => {
                // stored as the (later, earlier) block
                let b = &mut self.lower[ti.min(tj)];
                for a in 0..r {
                    for k in 0..c {
                        if tj > ti {
                            b[(oj + k, oi + a)] += h[(a, k)];
                        } else {
                            b[(oi + a, oj + k)] += h[(a, k)];
                        }
                    }
                }
            }
            (Loc::Time(..), Loc::Time(..)) => {
                return Err(Error::InvalidProblem("factor couples non-adjacent timesteps".into()));
            }
            (Loc::Time(t, o), Loc::Global(og)) => {
                let b = &mut self.border[t];
                for a in 0..r {
                    for k in 0..c {
                        b[(o + a, og + k)] += h[(a, k)];
                    }
                }
            }
            (Loc::Global(og), Loc::Time(t, o)) => {
                let b = &mut self.border[t];
                for a in 0..r {
                    for k in 0..c {
                        b[(o + k, og + a)] += h[(a, k)];
                    }
                }
            }
            (Loc::Global(oi), Loc::Global(oj)) => {
                for a in 0..r {
                    for k in 0..c {
                        self.global[(oi + a, oj + k)] += h[(a, k)];
                        if !same {
                            self.global[(oj + k, oi + a)] += h[(a, k)];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient `J^T r` in flat layout.
    pub fn gradient(&self) -> DVector<f64> {
        let n = self.horizon();
        let mut g = DVector::zeros(flat_dim(n));
        for t in 0..n {
            g.rows_mut(TIME_DIM * t, TIME_DIM).copy_from(&self.g_time[t]);
        }
        g.rows_mut(TIME_DIM * n, GLOBAL_DIM).copy_from(&self.g_global);
        g
    }

    /// Dense `H` in flat layout.
    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let n = self.horizon();
        let mut h = DMatrix::zeros(flat_dim(n), flat_dim(n));
        let go = TIME_DIM * n;
        for t in 0..n {
            h.view_mut((TIME_DIM * t, TIME_DIM * t), (TIME_DIM, TIME_DIM)).copy_from(&self.diag[t]);
            h.view_mut((TIME_DIM * t, go), (TIME_DIM, GLOBAL_DIM)).copy_from(&self.border[t]);
            h.view_mut((go, TIME_DIM * t), (GLOBAL_DIM, TIME_DIM)).copy_from(&self.border[t].transpose());
            if t + 1 < n {
                h.view_mut((TIME_DIM * (t + 1), TIME_DIM * t), (TIME_DIM, TIME_DIM)).copy_from(&self.lower[t]);
                h.view_mut((TIME_DIM * t, TIME_DIM * (t + 1)), (TIME_DIM, TIME_DIM))
                    .copy_from(&self.lower[t].transpose());
            }
        }
        h.view_mut((go, go), (GLOBAL_DIM, GLOBAL_DIM)).copy_from(&self.global);
        h
    }

    /// Solves `(H + lambda * D) dx = -g` with `D = clamp(diag(H))`. Flat
    /// indices in `pinned` are held at zero.
    pub fn solve_damped(&self, lambda: f64, pinned: &[usize]) -> Result<DVector<f64>> {
        let n = self.horizon();
        let damp = |x: f64| x + lambda * x.clamp(MIN_DIAG, MAX_DIAG);
        let mut diag = self.diag.clone();
        let mut border = self.border.clone();
        let mut lower = self.lower.clone();
        let mut g_time = self.g_time.clone();
        let mut g_global = self.g_global;
        let mut global = self.global;
        for b in diag.iter_mut() {
            for k in 0..TIME_DIM {
                b[(k, k)] = damp(b[(k, k)]);
            }
        }
        for k in 0..GLOBAL_DIM {
            global[(k, k)] = damp(global[(k, k)]);
        }
        for &p in pinned {
            if p < TIME_DIM * n {
                let (t, o) = (p / TIME_DIM, p % TIME_DIM);
                diag[t].row_mut(o).fill(0.0);
                diag[t].column_mut(o).fill(0.0);
                diag[t][(o, o)] = 1.0;
                border[t].row_mut(o).fill(0.0);
                g_time[t][o] = 0.0;
                if t + 1 < n {
                    lower[t].column_mut(o).fill(0.0);
                }
                if t > 0 {
                    lower[t - 1].row_mut(o).fill(0.0);
                }
            } else {
                let o = p - TIME_DIM * n;
                global.row_mut(o).fill(0.0);
                global.column_mut(o).fill(0.0);
                global[(o, o)] = 1.0;
                for b in border.iter_mut() {
                    b.column_mut(o).fill(0.0);
                }
                g_global[o] = 0.0;
            }
        }

        let coupled: Vec<bool> = lower.iter().map(|l| l.iter().any(|x| *x != 0.0)).collect();
        let not_pd = |what: String| Error::SolverFailure(format!("{what} not positive definite"));

        // Block Cholesky of the bordered tridiagonal matrix. For each t the
        // factor holds C_t (diagonal), F_t^T = C_t^-1 E_t^T (sub-diagonal)
        // and K_t^T (border), with y the forward-substituted right-hand side.
        let mut cs: Vec<Blk> = Vec::with_capacity(n);
        let mut ft: Vec<Option<Blk>> = Vec::with_capacity(n);
        let mut kt: Vec<Border> = Vec::with_capacity(n);
        let mut ys: Vec<TVec> = Vec::with_capacity(n);
        let mut schur = global;
        let mut rhs = -g_global;
        let mut carry = diag[0];
        for t in 0..n {
            let c = Cholesky::new(carry).ok_or_else(|| not_pd(format!("time block {t}")))?.unpack();
            let mut k = border[t];
            let mut y = -g_time[t];
            if t > 0 {
                if let Some(f) = &ft[t - 1] {
                    k -= f.tr_mul(&kt[t - 1]);
                    y -= f.tr_mul(&ys[t - 1]);
                }
            }
            solve_lower(&c, &mut k);
            solve_lower(&c, &mut y);
            schur -= k.tr_mul(&k);
            rhs -= k.tr_mul(&y);
            if t + 1 < n {
                carry = diag[t + 1];
                if coupled[t] {
                    let mut f = lower[t].transpose();
                    solve_lower(&c, &mut f);
                    carry -= f.tr_mul(&f);
                    ft.push(Some(f));
                } else {
                    ft.push(None);
                }
            }
            cs.push(c);
            kt.push(k);
            ys.push(y);
        }
        let schur = 0.5 * (schur + schur.transpose());
        let y = Cholesky::new(schur).ok_or_else(|| not_pd("global block".into()))?.solve(&rhs);

        let mut dx = DVector::zeros(flat_dim(n));
        let mut next = TVec::zeros();
        for t in (0..n).rev() {
            let mut r = ys[t] - kt[t] * y;
            if let Some(Some(f)) = ft.get(t) {
                r -= f * next;
            }
            if !cs[t].tr_solve_lower_triangular_mut(&mut r) {
                return Err(Error::SolverFailure(format!("time block {t} is singular")));
            }
            dx.rows_mut(TIME_DIM * t, TIME_DIM).copy_from(&r);
            next = r;
        }
        dx.rows_mut(TIME_DIM * n, GLOBAL_DIM).copy_from(&y);
        for &p in pinned {
            dx[p] = 0.0;
        }
        if dx.iter().all(|x| x.is_finite()) {
            Ok(dx)
        } else {
            Err(Error::SolverFailure("non-finite step".into()))
        }
    }
}

fn solve_lower<const C: usize>(l: &Blk, b: &mut SMatrix<f64, TIME_DIM, C>) {
    // `l` comes from a successful Cholesky, so its diagonal is positive.
    let ok = l.solve_lower_triangular_mut(b);
    debug_assert!(ok);
}

pub const MIN_DIAG: f64 = 1e-6;
pub const MAX_DIAG: f64 = 1e32;

/// Reference dense solve of the same damped system.
pub fn solve_dense(h: &DMatrix<f64>, g: &DVector<f64>, lambda: f64, pinned: &[usize]) -> Result<DVector<f64>> {
    let mut a = h.clone();
    let mut b = -g.clone();
    for k in 0..a.nrows() {
        a[(k, k)] += lambda * a[(k, k)].clamp(MIN_DIAG, MAX_DIAG);
    }
    for &p in pinned {
        a.row_mut(p).fill(0.0);
        a.column_mut(p).fill(0.0);
        a[(p, p)] = 1.0;
        b[p] = 0.0;
    }
    Cholesky::new(a)
        .map(|c| c.solve(&b))
        .ok_or_else(|| Error::SolverFailure("dense system not positive definite".into()))
}
