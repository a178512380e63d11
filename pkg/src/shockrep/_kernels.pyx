# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled stepping kernels.

Same contract and same floating-point operation order as _kernels_py (the
numpy reference backend): Philox4x64-10 streams keyed by (seed, path), one
uint64 word per normal via the shared rational inverse-CDF, Euler-Maruyama
update, face-restricted flooring, per-population renormalization.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

BACKEND_NAME = "compiled"

cdef extern from *:
    """
    #include <stdint.h>

    static const uint64_t SR_PHILOX_M0 = 0xD2E7470EE14C6C93ULL;
    static const uint64_t SR_PHILOX_M1 = 0xCA5A826395121157ULL;
    static const uint64_t SR_PHILOX_W0 = 0x9E3779B97F4A7C15ULL;
    static const uint64_t SR_PHILOX_W1 = 0xBB67AE8584CAA73BULL;

    static inline void sr_philox_block(uint64_t block, uint64_t k0, uint64_t k1,
                                       uint64_t* out) {
        uint64_t c0 = block, c1 = 0, c2 = 0, c3 = 0;
        uint64_t t0, t1, hi0, hi1, lo0, lo1;
        int i;
        for (i = 0; i < 10; i++) {
            if (i > 0) { k0 += SR_PHILOX_W0; k1 += SR_PHILOX_W1; }
            {
                __uint128_t p0 = (__uint128_t)SR_PHILOX_M0 * c0;
                __uint128_t p1 = (__uint128_t)SR_PHILOX_M1 * c2;
                hi0 = (uint64_t)(p0 >> 64); lo0 = (uint64_t)p0;
                hi1 = (uint64_t)(p1 >> 64); lo1 = (uint64_t)p1;
                t0 = hi1 ^ c1 ^ k0;
                t1 = hi0 ^ c3 ^ k1;
                c0 = t0; c1 = lo1; c2 = t1; c3 = lo0;
            }
        }
        out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
    }

    /* Inverse standard-normal CDF, same coefficients and Horner order as the
       numpy backend.  The bulk transform evaluates the central rational for
       every element first (a branch-free loop the compiler can vectorize;
       SIMD keeps the per-element operation order, unlike FMA contraction,
       which stays disabled), then overwrites the ~15% of tail elements. */

    static const double SR_TWO_M52 = 2.220446049250313e-16;

    static inline double sr_portable_log(double x) {
        int e;
        double m = frexp(x, &e);
        double t, s, p;
        if (m < 0.7071067811865476) { m = m + m; e = e - 1; }
        t = (m - 1.0) / (m + 1.0);
        s = t * t;
        p = 1.0 / 19.0;
        p = p * s + 1.0 / 17.0;
        p = p * s + 1.0 / 15.0;
        p = p * s + 1.0 / 13.0;
        p = p * s + 1.0 / 11.0;
        p = p * s + 1.0 / 9.0;
        p = p * s + 1.0 / 7.0;
        p = p * s + 1.0 / 5.0;
        p = p * s + 1.0 / 3.0;
        p = p * s + 1.0;
        return (double)e * 0.6931471805599453 + 2.0 * t * p;
    }

    static inline double sr_inv_norm_central(double u) {
        double q = u - 0.5;
        double r = 0.180625 - q * q;
        double num, den;
        num = 2.5090809287301226727e3;
        num = num * r + 3.3430575583588128105e4;
        num = num * r + 6.7265770927008700853e4;
        num = num * r + 4.5921953931549871457e4;
        num = num * r + 1.3731693765509461125e4;
        num = num * r + 1.9715909503065514427e3;
        num = num * r + 1.3314166789178437745e2;
        num = num * r + 3.3871328727963666080e0;
        den = 5.2264952788528545610e3;
        den = den * r + 2.8729085735721942674e4;
        den = den * r + 3.9307895800092710610e4;
        den = den * r + 2.1213794301586595867e4;
        den = den * r + 5.3941960214247511077e3;
        den = den * r + 6.8718700749205790830e2;
        den = den * r + 4.2313330701600911252e1;
        den = den * r + 1.0;
        return q * num / den;
    }

    static inline double sr_inv_norm_tail(double u) {
        double q = u - 0.5;
        double r = (q < 0.0) ? u : 1.0 - u;
        double num, den, z;
        r = sqrt(-sr_portable_log(r));
        if (r <= 5.0) {
            r = r - 1.6;
            num = 7.74545014278341407640e-4;
            num = num * r + 2.27238449892691845833e-2;
            num = num * r + 2.41780725177450611770e-1;
            num = num * r + 1.27045825245236838258e0;
            num = num * r + 3.64784832476320460504e0;
            num = num * r + 5.76949722146069140550e0;
            num = num * r + 4.63033784615654529590e0;
            num = num * r + 1.42343711074968357734e0;
            den = 1.05075007164441684324e-9;
            den = den * r + 5.47593808499534494600e-4;
            den = den * r + 1.51986665636164571966e-2;
            den = den * r + 1.48103976427480074590e-1;
            den = den * r + 6.89767334985100004550e-1;
            den = den * r + 1.67638483018380384940e0;
            den = den * r + 2.05319162663775882187e0;
            den = den * r + 1.0;
        } else {
            r = r - 5.0;
            num = 2.01033439929228813265e-7;
            num = num * r + 2.71155556874348757815e-5;
            num = num * r + 1.24266094738807843860e-3;
            num = num * r + 2.65321895265761230930e-2;
            num = num * r + 2.96560571828504891230e-1;
            num = num * r + 1.78482653991729133580e0;
            num = num * r + 5.46378491116411436990e0;
            num = num * r + 6.65790464350110377720e0;
            den = 2.04426310338993978564e-15;
            den = den * r + 1.42151175831644588870e-7;
            den = den * r + 1.84631831751005468180e-5;
            den = den * r + 7.86869131145613259100e-4;
            den = den * r + 1.48753612908506148525e-2;
            den = den * r + 1.36929880922735805310e-1;
            den = den * r + 5.99832206555887937690e-1;
            den = den * r + 1.0;
        }
        z = num / den;
        return (q < 0.0) ? -z : z;
    }

    static inline double sr_inv_norm_cdf(double u) {
        double q = u - 0.5;
        if (q <= 0.425 && q >= -0.425) return sr_inv_norm_central(u);
        return sr_inv_norm_tail(u);
    }

    static void sr_bulk_normals(const uint64_t* restrict raw,
                                double* restrict out, ptrdiff_t n) {
        ptrdiff_t j;
        for (j = 0; j < n; j++) {
            double u = ((double)(raw[j] >> 12) + 0.5) * SR_TWO_M52;
            out[j] = sr_inv_norm_central(u);
        }
        for (j = 0; j < n; j++) {
            double u = ((double)(raw[j] >> 12) + 0.5) * SR_TWO_M52;
            double q = u - 0.5;
            if (q > 0.425 || q < -0.425) {
                out[j] = sr_inv_norm_tail(u);
            }
        }
    }
    """
    void sr_philox_block(uint64_t block, uint64_t k0, uint64_t k1,
                         uint64_t* out) nogil
    double sr_inv_norm_cdf(double u) nogil
    void sr_bulk_normals(const uint64_t* raw, double* out, Py_ssize_t n) nogil


DEF NBUF = 4096  # normals buffered per refill (per path, stack scratch)


cdef void _gen_raw(uint64_t key0, uint64_t key1, uint64_t start, Py_ssize_t count,
                   uint64_t* out) noexcept nogil:
    # the counter is pre-incremented per block: output g comes from
    # the block with counter word (g >> 2) + 1 (matches numpy's Philox)
    cdef uint64_t g = start
    cdef uint64_t buf4[4]
    cdef Py_ssize_t i = 0
    while i < count and (g & 3) != 0:
        if i == 0:
            sr_philox_block((g >> 2) + 1, key0, key1, buf4)
        out[i] = buf4[g & 3]
        i += 1
        g += 1
    while count - i >= 4:
        sr_philox_block((g >> 2) + 1, key0, key1, &out[i])
        i += 4
        g += 4
    if i < count:
        sr_philox_block((g >> 2) + 1, key0, key1, buf4)
        while i < count:
            out[i] = buf4[g & 3]
            i += 1
            g += 1


cdef void _gen_normals(uint64_t key0, uint64_t key1, uint64_t start,
                       Py_ssize_t count, uint64_t* raw, double* out) noexcept nogil:
    _gen_raw(key0, key1, start, count, raw)
    sr_bulk_normals(raw, out, count)


cdef struct NormalStream:
    uint64_t key0
    uint64_t key1
    uint64_t pos          # next stream index to hand out
    uint64_t limit        # total indices this run will consume
    Py_ssize_t avail      # unread normals in buf
    Py_ssize_t used
    uint64_t raw[NBUF]
    double buf[NBUF]


cdef inline void _stream_init(NormalStream* st, uint64_t key0, uint64_t key1,
                              uint64_t start, uint64_t limit) noexcept nogil:
    st.key0 = key0
    st.key1 = key1
    st.pos = start
    st.limit = limit
    st.avail = 0
    st.used = 0


cdef inline double _stream_next(NormalStream* st) noexcept nogil:
    cdef uint64_t left
    if st.used == st.avail:
        left = st.limit - st.pos
        st.avail = NBUF if left > <uint64_t> NBUF else <Py_ssize_t> left
        st.used = 0
        _gen_normals(st.key0, st.key1, st.pos, st.avail, st.raw, st.buf)
    st.pos += 1
    st.used += 1
    return st.buf[st.used - 1]


def philox_raw(seed, path, start, count):
    """Raw Philox words [start, start+count) of the (seed, path) stream."""
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(count, dtype=np.uint64)
    if count == 0:
        return out
    _gen_raw(<uint64_t> (int(seed) & ((1 << 64) - 1)),
             <uint64_t> (int(path) & ((1 << 64) - 1)),
             <uint64_t> int(start), count, <uint64_t*> out.data)
    return out


def philox_normals(seed, path, start, count):
    """Standard normals [start, start+count) of the (seed, path) stream."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(count, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] raw = np.empty(count, dtype=np.uint64)
    if count == 0:
        return out
    _gen_normals(<uint64_t> (int(seed) & ((1 << 64) - 1)),
                 <uint64_t> (int(path) & ((1 << 64) - 1)),
                 <uint64_t> int(start), count,
                 <uint64_t*> raw.data, <double*> out.data)
    return out


def run_first_order(model, v, V, sigma, x0, dt, n_steps, floor, seed, path0,
                    n_paths, rec_steps, want_snapshots, ref=None):
    """Compiled twin of _kernels_py.run_first_order (same contract)."""
    cdef int imodel = model
    cdef Py_ssize_t n = x0.size
    cdef bint use_matrix = V is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v_arr = (
        np.zeros(n) if v is None else np.ascontiguousarray(v, dtype=np.float64))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V_arr = (
        np.zeros((n, n)) if V is None
        else np.ascontiguousarray(V, dtype=np.float64))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sig_arr = \
        np.ascontiguousarray(sigma, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x0_arr = \
        np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rec = \
        np.ascontiguousarray(rec_steps, dtype=np.int64)
    cdef bint want_snaps = want_snapshots
    cdef bint have_ref = ref is not None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ref_arr = (
        np.zeros(n) if ref is None
        else np.ascontiguousarray(ref, dtype=np.float64))

    cdef Py_ssize_t P = n_paths
    cdef Py_ssize_t R = rec.size
    cdef cnp.ndarray[cnp.float64_t, ndim=2] terminal = np.empty((P, n))
    snapshots = np.empty((P, R, n)) if want_snapshots else None
    cdef cnp.ndarray[cnp.float64_t, ndim=3] snaps = (
        snapshots if want_snapshots else np.empty((1, 1, 1)))
    cdef cnp.ndarray[cnp.int64_t, ndim=2] floor_count = \
        np.zeros((P, n), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] floor_first = \
        np.full((P, n), -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] max_drift = np.zeros(P)
    max_dev_out = np.zeros(P) if have_ref else None
    cdef cnp.ndarray[cnp.float64_t, ndim=1] max_dev = (
        max_dev_out if have_ref else np.empty(1))

    cdef cnp.ndarray[cnp.float64_t, ndim=1] xbuf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] vvbuf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dbuf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dwbuf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sig2 = sig_arr * sig_arr
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] pos_mask = \
        (x0_arr > 0.0).astype(np.uint8)

    cdef double ddt = dt
    cdef double sqdt = sqrt(ddt)
    cdef double dfloor = floor
    cdef uint64_t key0 = <uint64_t> (int(seed) & ((1 << 64) - 1))
    cdef uint64_t base_path = <uint64_t> (int(path0) & ((1 << 64) - 1))
    cdef int64_t steps = n_steps
    cdef NormalStream st

    cdef double[:] x = xbuf
    cdef double[:] vv = vvbuf
    cdef double[:] d = dbuf
    cdef double[:] dw = dwbuf
    cdef double[:] vvec = v_arr
    cdef double[:, :] Vm = V_arr
    cdef double[:] sg = sig_arr
    cdef double[:] sg2 = sig2
    cdef double[:] xz = x0_arr
    cdef double[:] refv = ref_arr
    cdef cnp.uint8_t[:] pos = pos_mask
    cdef int64_t[:] recv = rec
    cdef double[:, :] term = terminal
    cdef double[:, :, :] sn = snaps
    cdef int64_t[:, :] fcount = floor_count
    cdef int64_t[:, :] ffirst = floor_first
    cdef double[:] mdrift = max_drift
    cdef double[:] mdev = max_dev

    cdef Py_ssize_t p, a, b, rec_ptr
    cdef int64_t k
    cdef double vbar, qsum, bsum, mix, tmp, s, mxd, dev, xa
    cdef bint nonfinite = False

    with nogil:
        for p in range(P):
            for a in range(n):
                x[a] = xz[a]
            if imodel != 0:
                _stream_init(&st, key0, base_path + <uint64_t> p, 0,
                             <uint64_t> (steps * n))
            rec_ptr = 0
            if recv[0] == 0:
                if want_snaps:
                    for a in range(n):
                        sn[p, 0, a] = x[a]
                rec_ptr = 1
            if have_ref:
                dev = 0.0
                for a in range(n):
                    tmp = fabs(x[a] - refv[a])
                    if tmp > dev:
                        dev = tmp
                if dev > mdev[p]:
                    mdev[p] = dev
            for k in range(steps):
                if use_matrix:
                    for a in range(n):
                        tmp = 0.0
                        for b in range(n):
                            tmp = tmp + Vm[a, b] * x[b]
                        vv[a] = tmp
                else:
                    for a in range(n):
                        vv[a] = vvec[a]
                vbar = 0.0
                for a in range(n):
                    vbar = vbar + x[a] * vv[a]
                for a in range(n):
                    d[a] = x[a] * (vv[a] - vbar)
                if imodel == 2:
                    qsum = 0.0
                    for a in range(n):
                        qsum = qsum + sg2[a] * x[a] * x[a]
                    for a in range(n):
                        d[a] = d[a] + (-(x[a] * (sg2[a] * x[a] - qsum)))
                elif imodel == 3:
                    bsum = 0.0
                    for a in range(n):
                        bsum = bsum + sg2[a] * x[a] * (1.0 - 2.0 * x[a])
                    for a in range(n):
                        d[a] = d[a] + 0.5 * x[a] * (
                            sg2[a] * (1.0 - 2.0 * x[a]) - bsum)
                if imodel != 0:
                    for a in range(n):
                        dw[a] = sqdt * _stream_next(&st)
                    mix = 0.0
                    for a in range(n):
                        mix = mix + x[a] * sg[a] * dw[a]
                    for a in range(n):
                        x[a] = x[a] + d[a] * ddt + x[a] * (sg[a] * dw[a] - mix)
                else:
                    for a in range(n):
                        x[a] = x[a] + d[a] * ddt
                for a in range(n):
                    xa = x[a]
                    if xa < dfloor and pos[a]:
                        if ffirst[p, a] < 0:
                            ffirst[p, a] = k + 1
                        fcount[p, a] += 1
                        xa = dfloor
                    if xa > 1.0:
                        xa = 1.0
                    x[a] = xa
                s = 0.0
                for a in range(n):
                    s = s + x[a]
                for a in range(n):
                    x[a] = x[a] / s
                mxd = 0.0
                for a in range(n):
                    tmp = fabs(d[a])
                    if tmp > mxd:
                        mxd = tmp
                if mxd > mdrift[p]:
                    mdrift[p] = mxd
                if have_ref:
                    dev = 0.0
                    for a in range(n):
                        tmp = fabs(x[a] - refv[a])
                        if tmp > dev:
                            dev = tmp
                    if dev > mdev[p]:
                        mdev[p] = dev
                if rec_ptr < R and k + 1 == recv[rec_ptr]:
                    if want_snaps:
                        for a in range(n):
                            sn[p, rec_ptr, a] = x[a]
                    rec_ptr += 1
            for a in range(n):
                term[p, a] = x[a]
                if x[a] != x[a]:
                    nonfinite = True

    if nonfinite:
        raise FloatingPointError("nonfinite state produced by the kernel")
    return {
        "terminal": terminal,
        "snapshots": snapshots,
        "floor_count": floor_count,
        "floor_first": floor_first,
        "max_drift": max_drift,
        "max_dev": max_dev_out,
    }


def run_hitting(a, b, dt, n_steps, seed, path0, n_paths):
    """Compiled twin of _kernels_py.run_hitting (same contract)."""
    cdef Py_ssize_t P = n_paths
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] hit = np.zeros(P, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_hit = np.full(P, np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] log_surv = np.zeros(P)

    cdef double aa = a
    cdef double bb = b
    cdef double ddt = dt
    cdef double sqdt = sqrt(ddt)
    cdef int64_t steps = n_steps
    cdef uint64_t key0 = <uint64_t> (int(seed) & ((1 << 64) - 1))
    cdef uint64_t base_path = <uint64_t> (int(path0) & ((1 << 64) - 1))

    if aa == 0.0:
        return {"hit": np.ones(P, dtype=bool),
                "t_hit": np.zeros(P),
                "log_surv": np.full(P, -np.inf)}

    cdef cnp.uint8_t[:] hv = hit
    cdef double[:] tv = t_hit
    cdef double[:] lv = log_surv
    cdef NormalStream st
    cdef Py_ssize_t p
    cdef int64_t k
    cdef double w, d_prev, d, barrier, frac, expo, ls
    cdef bint crossed

    with nogil:
        for p in range(P):
            _stream_init(&st, key0, base_path + <uint64_t> p, 0,
                         <uint64_t> steps)
            w = 0.0
            d_prev = -aa
            ls = 0.0
            for k in range(1, steps + 1):
                w = w + sqdt * _stream_next(&st)
                barrier = aa + bb * (ddt * <double> k)
                d = w - barrier
                crossed = (d == 0.0) or (d > 0.0) != (d_prev > 0.0)
                if crossed:
                    frac = d_prev / (d_prev - d)
                    tv[p] = ddt * <double> (k - 1) + ddt * frac
                    hv[p] = 1
                    ls = -1.0 / 0.0
                    break
                expo = 2.0 * d_prev * d / ddt
                if expo < 37.0:
                    ls += log1p(-exp(-expo))
                d_prev = d
            lv[p] = ls

    return {"hit": hit.astype(bool), "t_hit": t_hit, "log_surv": log_surv}
