use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::matrix::{deinterleave, interleave, Matrix};
use super::{ArrayKind, ArrayShape, JobKind, TileJob};
use crate::error::{bail, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Load,
    Compute,
    Drain,
}

/// Per-cycle PE occupancy. A PE is busy when it multiplies two operands that
/// are both real (not padding).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleTrace {
    rows: usize,
    cols: usize,
    phases: Vec<Phase>,
    busy: Vec<Vec<bool>>,
}

impl CycleTrace {
    fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, phases: Vec::new(), busy: Vec::new() }
    }

    fn idle(&mut self, phase: Phase, cycles: usize) {
        for _ in 0..cycles {
            self.phases.push(phase);
            self.busy.push(vec![false; self.rows * self.cols]);
        }
    }

    fn push(&mut self, phase: Phase, busy: Vec<bool>) {
        debug_assert_eq!(busy.len(), self.rows * self.cols);
        self.phases.push(phase);
        self.busy.push(busy);
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phase(&self, cycle: usize) -> Phase {
        self.phases[cycle]
    }

    pub fn phase_cycles(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|&&p| p == phase).count()
    }

    pub fn busy_count(&self, cycle: usize) -> usize {
        self.busy[cycle].iter().filter(|&&b| b).count()
    }

    pub fn is_busy(&self, cycle: usize, row: usize, col: usize) -> bool {
        self.busy[cycle][row * self.cols + col]
    }

    pub fn pes(&self) -> usize {
        self.rows * self.cols
    }

    /// Busy PE-cycles over all cycles.
    pub fn busy_total(&self) -> usize {
        (0..self.len()).map(|c| self.busy_count(c)).sum()
    }

    /// `(cycle, pe_row, pe_col, busy)` for every PE of every cycle.
    pub fn records(&self) -> impl Iterator<Item = (usize, usize, usize, bool)> + '_ {
        self.busy.iter().enumerate().flat_map(move |(cycle, b)| {
            b.iter().enumerate().map(move |(i, &busy)| (cycle, i / self.cols, i % self.cols, busy))
        })
    }
}

/// Where each output element sits in the PE grid when a dataflow finishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLayout {
    Natural,
    /// `P = interleave(Y^T)^T`
    RowSkewed,
    /// `P = interleave(Y)^T`
    ColSkewed,
    /// `P = Y^T`
    Transposed,
}

/// Recovers `Y` from the raw PE grid.
pub fn restore_output(raw: &Matrix, layout: OutputLayout) -> Result<Matrix> {
    Ok(match layout {
        OutputLayout::Natural => raw.clone(),
        OutputLayout::RowSkewed => deinterleave(&raw.transpose())?.transpose(),
        OutputLayout::ColSkewed => deinterleave(&raw.transpose())?,
        OutputLayout::Transposed => raw.transpose(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutput {
    /// Contents of the PE accumulators at the end of the run.
    pub raw: Matrix,
    pub layout: OutputLayout,
    /// `X W`, cropped to `m x n`.
    pub y: Matrix,
    pub trace: CycleTrace,
}

#[derive(Clone, Copy, Default)]
struct Reg {
    v: i64,
    real: bool,
}

type Grid = Vec<Reg>;

fn grid(r: usize, f: impl Fn(usize, usize) -> Reg) -> Grid {
    (0..r * r).map(|i| f(i / r, i % r)).collect()
}

fn shift_right(g: &Grid, r: usize) -> Grid {
    grid(r, |i, j| g[i * r + (j + r - 1) % r])
}

fn shift_down(g: &Grid, r: usize) -> Grid {
    grid(r, |i, j| g[((i + r - 1) % r) * r + j])
}

fn shift_right_acc(p: &[i64], r: usize) -> Vec<i64> {
    (0..r * r).map(|x| p[(x / r) * r + (x % r + r - 1) % r]).collect()
}

fn shift_down_acc(p: &[i64], r: usize) -> Vec<i64> {
    (0..r * r).map(|x| p[((x / r + r - 1) % r) * r + x % r]).collect()
}

/// Runs one tile through the chosen dataflow, PE by PE and cycle by cycle.
///
/// `x` is `m x k` and `w` is `k x n`, matching the job. For GEMV kinds each
/// row of `x` is an independent input vector.
pub fn functional_sim(job: &TileJob, array: &ArrayShape, x: &Matrix, w: &Matrix) -> Result<SimOutput> {
    array.validate()?;
    let (m, k, n) = (job.m as usize, job.k as usize, job.n as usize);
    if m == 0 || k == 0 || n == 0 {
        bail!(Shape, "tile dimensions must be positive");
    }
    if x.rows() != m || x.cols() != k || w.rows() != k || w.cols() != n {
        bail!(
            Shape,
            "operands {}x{} * {}x{} do not match job {m}x{k}x{n}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        );
    }
    let r = array.rows as usize;
    let c = array.cols as usize;
    if m > r || k > r || n > c {
        bail!(Shape, "tile {m}x{k}x{n} overflows a {r}x{c} array");
    }
    let (raw, layout, trace) = match (array.kind, job.kind) {
        (ArrayKind::Array3d, JobKind::GemmOs) => sim_os(x, w, m, k, n, r)?,
        (ArrayKind::Array3d, JobKind::GemmIs) => sim_is(x, w, m, k, n, r)?,
        (ArrayKind::Array3d, JobKind::GemmWs) => sim_ws(x, w, m, k, n, r)?,
        (ArrayKind::Array3d, JobKind::Gemv | JobKind::GemvVcache) => sim_gemv(x, w, m, k, n, r)?,
        (ArrayKind::Nsa, JobKind::GemmWs) => sim_nsa_ws(x, w, m, k, n, r, c),
        (ArrayKind::Nsa, JobKind::Gemv) => {
            if m != 1 {
                bail!(Shape, "edge-fed GEMV takes one vector per tile, got {m}");
            }
            sim_nsa_gemv(x, w, k, n, r, c)
        }
        (ArrayKind::Nsa, kind) => bail!(UnsupportedMode, "{kind:?} is not available on an edge-fed array"),
    };
    let y = restore_output(&raw, layout)?.resized(m, n);
    Ok(SimOutput { raw, layout, y, trace })
}

/// Two parallel TSV load cycles, `r` compute cycles, one drain cycle.
fn ring_gemm(
    r: usize,
    stationary: Grid,
    mut moving: Grid,
    move_moving: fn(&Grid, usize) -> Grid,
    move_psum: fn(&[i64], usize) -> Vec<i64>,
) -> (Vec<i64>, CycleTrace) {
    let mut trace = CycleTrace::new(r, r);
    trace.idle(Phase::Load, 2);
    let mut acc = vec![0i64; r * r];
    for _ in 0..r {
        let mut busy = vec![false; r * r];
        for p in 0..r * r {
            acc[p] += stationary[p].v * moving[p].v;
            busy[p] = stationary[p].real && moving[p].real;
        }
        trace.push(Phase::Compute, busy);
        moving = move_moving(&moving, r);
        acc = move_psum(&acc, r);
    }
    trace.idle(Phase::Drain, 1);
    (acc, trace)
}

fn padded(x: &Matrix, r: usize) -> Matrix {
    x.resized(r, r)
}

fn to_matrix(acc: Vec<i64>, r: usize) -> Matrix {
    Matrix::from_fn(r, r, |i, j| acc[i * r + j])
}

/// Output stationary: `Y[i][j]` stays in PE(i, j); inputs move right and
/// interleaved weights move down, both around the rings.
fn sim_os(x: &Matrix, w: &Matrix, m: usize, k: usize, n: usize, r: usize) -> Result<(Matrix, OutputLayout, CycleTrace)> {
    let xp = padded(x, r);
    let wi = interleave(&padded(w, r))?;
    let a = grid(r, |i, j| {
        let kk = (i + j) % r;
        Reg { v: xp[(i, kk)], real: i < m && kk < k }
    });
    let b = grid(r, |i, j| Reg { v: wi[(i, j)], real: (i + j) % r < k && j < n });
    let mut trace = CycleTrace::new(r, r);
    trace.idle(Phase::Load, 2);
    let (mut a, mut b) = (a, b);
    let mut acc = vec![0i64; r * r];
    for _ in 0..r {
        let mut busy = vec![false; r * r];
        for p in 0..r * r {
            acc[p] += a[p].v * b[p].v;
            busy[p] = a[p].real && b[p].real;
        }
        trace.push(Phase::Compute, busy);
        a = shift_right(&a, r);
        b = shift_down(&b, r);
    }
    trace.idle(Phase::Drain, 1);
    Ok((to_matrix(acc, r), OutputLayout::Natural, trace))
}

/// Input stationary: `X[i][j]` stays in PE(i, j); interleaved `W^T` moves
/// down and partial sums move right.
fn sim_is(x: &Matrix, w: &Matrix, m: usize, k: usize, n: usize, r: usize) -> Result<(Matrix, OutputLayout, CycleTrace)> {
    let xp = padded(x, r);
    let wt = interleave(&padded(w, r).transpose())?;
    let s = grid(r, |i, j| Reg { v: xp[(i, j)], real: i < m && j < k });
    let b = grid(r, |i, j| Reg { v: wt[(i, j)], real: j < k && (i + j) % r < n });
    let (acc, trace) = ring_gemm(r, s, b, shift_down, shift_right_acc);
    Ok((to_matrix(acc, r), OutputLayout::RowSkewed, trace))
}

/// Weight stationary: `W[j][i]` stays in PE(i, j); interleaved `X` moves
/// down and partial sums move right.
fn sim_ws(x: &Matrix, w: &Matrix, m: usize, k: usize, n: usize, r: usize) -> Result<(Matrix, OutputLayout, CycleTrace)> {
    let wp = padded(w, r);
    let xi = interleave(&padded(x, r))?;
    let s = grid(r, |i, j| Reg { v: wp[(j, i)], real: j < k && i < n });
    let a = grid(r, |i, j| Reg { v: xi[(i, j)], real: (i + j) % r < m && j < k });
    let (acc, trace) = ring_gemm(r, s, a, shift_down, shift_right_acc);
    Ok((to_matrix(acc, r), OutputLayout::ColSkewed, trace))
}

/// GEMV: column `j` holds input vector `j`, stationary. Each compute cycle a
/// weight slab arrives over the TSVs, one value per PE row broadcast along
/// the row, and partial sums move down the column ring.
fn sim_gemv(x: &Matrix, w: &Matrix, m: usize, k: usize, n: usize, r: usize) -> Result<(Matrix, OutputLayout, CycleTrace)> {
    let xp = padded(x, r);
    let panel = interleave(&padded(w, r).transpose())?;
    let s = grid(r, |i, j| Reg { v: xp[(j, i)], real: j < m && i < k });
    let mut trace = CycleTrace::new(r, r);
    trace.idle(Phase::Load, 2);
    let mut acc = vec![0i64; r * r];
    for t in 0..r {
        let slab = (r - t % r) % r;
        let mut busy = vec![false; r * r];
        for i in 0..r {
            let wv = panel[(slab, i)];
            let w_real = i < k && (slab + i) % r < n;
            for j in 0..r {
                let p = i * r + j;
                acc[p] += s[p].v * wv;
                busy[p] = s[p].real && w_real;
            }
        }
        trace.push(Phase::Compute, busy);
        acc = shift_down_acc(&acc, r);
    }
    trace.idle(Phase::Drain, 1);
    Ok((to_matrix(acc, r), OutputLayout::Transposed, trace))
}

/// Classic weight-stationary array: `r` cycles to shift weights in from the
/// top edge, then skewed input rows enter from the left and partial sums
/// leave from the bottom.
fn sim_nsa_ws(x: &Matrix, w: &Matrix, m: usize, k: usize, n: usize, r: usize, c: usize) -> (Matrix, OutputLayout, CycleTrace) {
    let mt = r;
    let wp = w.resized(r, c);
    let w_real = |i: usize, j: usize| i < k && j < n;
    let mut trace = CycleTrace::new(r, c);
    trace.idle(Phase::Load, r);
    let mut xreg = vec![Reg::default(); r * c];
    let mut preg = vec![0i64; r * c];
    let xp = x.resized(mt, r);
    let mut y = Matrix::zeros(mt, c);
    for cyc in 0..mt + 2 * r - 2 {
        let mut nx = vec![Reg::default(); r * c];
        let mut np = vec![0i64; r * c];
        let mut busy = vec![false; r * c];
        for i in 0..r {
            for j in 0..c {
                nx[i * c + j] = if j == 0 {
                    match cyc.checked_sub(i) {
                        Some(mm) if mm < mt => Reg { v: xp[(mm, i)], real: mm < m && i < k },
                        _ => Reg::default(),
                    }
                } else {
                    xreg[i * c + j - 1]
                };
                let above = if i == 0 { 0 } else { preg[(i - 1) * c + j] };
                np[i * c + j] = above + nx[i * c + j].v * wp[(i, j)];
                busy[i * c + j] = nx[i * c + j].real && w_real(i, j);
            }
        }
        for j in 0..c {
            if let Some(mm) = cyc.checked_sub(r - 1 + j) {
                if mm < mt {
                    y[(mm, j)] = np[(r - 1) * c + j];
                }
            }
        }
        trace.push(Phase::Compute, busy);
        xreg = nx;
        preg = np;
    }
    (y, OutputLayout::Natural, trace)
}

/// Edge-fed GEMV: after the weight preload, element `x[i]` meets row `i` in
/// cycle `i` while the partial sums of every column flow down one row per
/// cycle. Only one PE row is active at a time.
fn sim_nsa_gemv(x: &Matrix, w: &Matrix, k: usize, n: usize, r: usize, c: usize) -> (Matrix, OutputLayout, CycleTrace) {
    let wp = w.resized(r, c);
    let mut trace = CycleTrace::new(r, c);
    trace.idle(Phase::Load, r);
    let mut preg = vec![0i64; r * c];
    for cyc in 0..r {
        let mut np = vec![0i64; r * c];
        let mut busy = vec![false; r * c];
        for i in 0..r {
            let xv = if cyc == i && i < k { x[(0, i)] } else { 0 };
            for j in 0..c {
                let above = if i == 0 { 0 } else { preg[(i - 1) * c + j] };
                np[i * c + j] = above + xv * wp[(i, j)];
                busy[i * c + j] = cyc == i && i < k && j < n;
            }
        }
        trace.push(Phase::Compute, busy);
        preg = np;
    }
    trace.idle(Phase::Drain, r - 1);
    let y = Matrix::from_fn(1, c, |_, j| preg[(r - 1) * c + j]);
    (y, OutputLayout::Natural, trace)
}
