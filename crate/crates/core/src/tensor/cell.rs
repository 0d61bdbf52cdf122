//! Row kernels for the fused LSTM cell.
//!
//! Cached activations are stored per row as six contiguous blocks of `h`
//! values: `i, f, o, g, c', tanh(c')`. Every loop is elementwise, so the
//! wide-vector build computes exactly what the portable one does.

use super::math;

pub(crate) const ACTS: usize = 6;

/// Fills `acts: [n×6h]` and `out: [n×2h]` (hidden block, then cell block).
pub(crate) fn forward(z: &[f64], c: &[f64], h: usize, acts: &mut [f64], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { forward_avx512(z, c, h, acts, out) };
    }
    forward_rows(z, c, h, acts, out)
}

/// Writes `dz: [n×4h]` and `dc: [n×h]` from the output adjoint `g: [n×2h]`.
pub(crate) fn backward(
    acts: &[f64],
    c: &[f64],
    g: &[f64],
    h: usize,
    dz: &mut [f64],
    dc: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx512f") {
        // SAFETY: the feature was detected at runtime.
        return unsafe { backward_avx512(acts, c, g, h, dz, dc) };
    }
    backward_rows(acts, c, g, h, dz, dc)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn forward_avx512(z: &[f64], c: &[f64], h: usize, acts: &mut [f64], out: &mut [f64]) {
    forward_rows(z, c, h, acts, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn backward_avx512(
    acts: &[f64],
    c: &[f64],
    g: &[f64],
    h: usize,
    dz: &mut [f64],
    dc: &mut [f64],
) {
    backward_rows(acts, c, g, h, dz, dc)
}

#[inline(always)]
fn forward_rows(z: &[f64], c: &[f64], h: usize, acts: &mut [f64], out: &mut [f64]) {
    let rows = acts
        .chunks_exact_mut(ACTS * h)
        .zip(out.chunks_exact_mut(2 * h))
        .zip(z.chunks_exact(4 * h).zip(c.chunks_exact(h)));
    for ((a, y), (zr, cr)) in rows {
        let (ifo, rest) = a.split_at_mut(3 * h);
        let (g, rest) = rest.split_at_mut(h);
        let (cn, tc) = rest.split_at_mut(h);
        for (s, &x) in ifo.iter_mut().zip(&zr[..3 * h]) {
            *s = math::sigmoid(x);
        }
        for (s, &x) in g.iter_mut().zip(&zr[3 * h..]) {
            *s = math::tanh(x);
        }
        let (i, fo) = ifo.split_at(h);
        let (f, o) = fo.split_at(h);
        for ((((cn, &f), &cp), &i), &g) in cn.iter_mut().zip(f).zip(cr).zip(i).zip(g.iter()) {
            *cn = f * cp + i * g;
        }
        for (t, &x) in tc.iter_mut().zip(cn.iter()) {
            *t = math::tanh(x);
        }
        let (yh, yc) = y.split_at_mut(h);
        for ((y, &o), &t) in yh.iter_mut().zip(o).zip(tc.iter()) {
            *y = o * t;
        }
        yc.copy_from_slice(cn);
    }
}

#[inline(always)]
fn backward_rows(acts: &[f64], c: &[f64], g: &[f64], h: usize, dz: &mut [f64], dc: &mut [f64]) {
    let rows = acts
        .chunks_exact(ACTS * h)
        .zip(c.chunks_exact(h))
        .zip(g.chunks_exact(2 * h))
        .zip(dz.chunks_exact_mut(4 * h).zip(dc.chunks_exact_mut(h)));
    for (((a, cr), gr), (dzr, dcr)) in rows {
        let [i, f, o, cand, _, tc] = [0, 1, 2, 3, 4, 5].map(|k| &a[k * h..(k + 1) * h]);
        let (gh, gc) = gr.split_at(h);
        // dcr holds d(loss)/d(c') first, then is scaled by f in place.
        for ((((d, &gc), &gh), &o), &tc) in dcr.iter_mut().zip(gc).zip(gh).zip(o).zip(tc) {
            *d = gc + gh * o * (1.0 - tc * tc);
        }
        let (dzi, rest) = dzr.split_at_mut(h);
        let (dzf, rest) = rest.split_at_mut(h);
        let (dzo, dzg) = rest.split_at_mut(h);
        for (((dz, &d), &g), &i) in dzi.iter_mut().zip(dcr.iter()).zip(cand).zip(i) {
            *dz = d * g * i * (1.0 - i);
        }
        for (((dz, &d), &cp), &f) in dzf.iter_mut().zip(dcr.iter()).zip(cr).zip(f) {
            *dz = d * cp * f * (1.0 - f);
        }
        for (((dz, &gh), &tc), &o) in dzo.iter_mut().zip(gh).zip(tc).zip(o) {
            *dz = gh * tc * o * (1.0 - o);
        }
        for (((dz, &d), &i), &g) in dzg.iter_mut().zip(dcr.iter()).zip(i).zip(cand) {
            *dz = d * i * (1.0 - g * g);
        }
        for (d, &f) in dcr.iter_mut().zip(f) {
            *d *= f;
        }
    }
}
