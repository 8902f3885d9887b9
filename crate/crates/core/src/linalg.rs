//! Small dense kernels on row-major ndarray matrices. The network is tiny,
//! so these stay as straight loops over contiguous slices.

use ndarray::Array2;

/// `out += w · x`
#[inline]
pub fn gemv_acc(w: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    let cols = w.ncols();
    debug_assert_eq!(x.len(), cols);
    debug_assert_eq!(out.len(), w.nrows());
    let data = w.as_slice().expect("row-major weights");
    for (o, row) in out.iter_mut().zip(data.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `out += wᵀ · g`
#[inline]
pub fn gemv_t_acc(w: &Array2<f64>, g: &[f64], out: &mut [f64]) {
    let cols = w.ncols();
    debug_assert_eq!(g.len(), w.nrows());
    debug_assert_eq!(out.len(), cols);
    let data = w.as_slice().expect("row-major weights");
    for (gi, row) in g.iter().zip(data.chunks_exact(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += gi * a;
        }
    }
}

/// `acc += g ⊗ x`
#[inline]
pub fn outer_acc(acc: &mut Array2<f64>, g: &[f64], x: &[f64]) {
    let cols = acc.ncols();
    debug_assert_eq!(g.len(), acc.nrows());
    debug_assert_eq!(x.len(), cols);
    let data = acc.as_slice_mut().expect("row-major gradient");
    for (gi, row) in g.iter().zip(data.chunks_exact_mut(cols)) {
        if *gi == 0.0 {
            continue;
        }
        for (o, b) in row.iter_mut().zip(x) {
            *o += gi * b;
        }
    }
}

#[inline]
pub fn add_assign(out: &mut [f64], x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += v;
    }
}

/// In-place softmax over one slice.
pub fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in v.iter_mut() {
        *x /= total;
    }
}
