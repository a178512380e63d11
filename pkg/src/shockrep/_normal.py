"""Portable scalar math for the noise pipeline.

The compiled kernels re-implement `portable_log` and `inv_norm_cdf` with the
same coefficients and the same Horner ordering, so both backends map a raw
64-bit Philox word to the exact same double.  Keep the two in sync: any change
here must be mirrored in _kernels.pyx.
"""

import numpy as np

_SQRT_HALF = 0.7071067811865476
_LN2 = 0.6931471805599453

# atanh-series coefficients 1/(2k+1), highest order first (k = 9 .. 1).
_LOG_COEFFS = (
    1.0 / 19.0,
    1.0 / 17.0,
    1.0 / 15.0,
    1.0 / 13.0,
    1.0 / 11.0,
    1.0 / 9.0,
    1.0 / 7.0,
    1.0 / 5.0,
    1.0 / 3.0,
)


def portable_log(x):
    """Natural log, identical bit pattern in both backends for x > 0."""
    x = np.asarray(x, dtype=np.float64)
    m, e = np.frexp(x)
    low = m < _SQRT_HALF
    m = np.where(low, m + m, m)
    e = (e - low).astype(np.float64)
    t = (m - 1.0) / (m + 1.0)
    s = t * t
    p = np.full_like(s, _LOG_COEFFS[0])
    for c in _LOG_COEFFS[1:]:
        p = p * s + c
    p = p * s + 1.0
    return e * _LN2 + 2.0 * t * p


# Rational minimax coefficients for the inverse standard-normal CDF
# (double precision; central branch |u - 1/2| <= 0.425, two tail regimes).
_A = (
    2.5090809287301226727e3,
    3.3430575583588128105e4,
    6.7265770927008700853e4,
    4.5921953931549871457e4,
    1.3731693765509461125e4,
    1.9715909503065514427e3,
    1.3314166789178437745e2,
    3.3871328727963666080e0,
)
_B = (
    5.2264952788528545610e3,
    2.8729085735721942674e4,
    3.9307895800092710610e4,
    2.1213794301586595867e4,
    5.3941960214247511077e3,
    6.8718700749205790830e2,
    4.2313330701600911252e1,
    1.0,
)
_C = (
    7.74545014278341407640e-4,
    2.27238449892691845833e-2,
    2.41780725177450611770e-1,
    1.27045825245236838258e0,
    3.64784832476320460504e0,
    5.76949722146069140550e0,
    4.63033784615654529590e0,
    1.42343711074968357734e0,
)
_D = (
    1.05075007164441684324e-9,
    5.47593808499534494600e-4,
    1.51986665636164571966e-2,
    1.48103976427480074590e-1,
    6.89767334985100004550e-1,
    1.67638483018380384940e0,
    2.05319162663775882187e0,
    1.0,
)
_E = (
    2.01033439929228813265e-7,
    2.71155556874348757815e-5,
    1.24266094738807843860e-3,
    2.65321895265761230930e-2,
    2.96560571828504891230e-1,
    1.78482653991729133580e0,
    5.46378491116411436990e0,
    6.65790464350110377720e0,
)
_F = (
    2.04426310338993978564e-15,
    1.42151175831644588870e-7,
    1.84631831751005468180e-5,
    7.86869131145613259100e-4,
    1.48753612908506148525e-2,
    1.36929880922735805310e-1,
    5.99832206555887937690e-1,
    1.0,
)


def _horner(coeffs, r):
    p = np.full_like(r, coeffs[0])
    for c in coeffs[1:]:
        p = p * r + c
    return p


def inv_norm_cdf(u):
    """Quantile of the standard normal for u in the open interval (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    if np.any(central):
        qc = q[central]
        r = 0.180625 - qc * qc
        out[central] = qc * _horner(_A, r) / _horner(_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        ut = u[tail]
        r = np.where(qt < 0.0, ut, 1.0 - ut)
        r = np.sqrt(-portable_log(r))
        near = r <= 5.0
        rn = np.where(near, r - 1.6, r - 5.0)
        z = np.where(
            near,
            _horner(_C, rn) / _horner(_D, rn),
            _horner(_E, rn) / _horner(_F, rn),
        )
        out[tail] = np.where(qt < 0.0, -z, z)
    return out


def uniform_open01(raw):
    """Map raw uint64 words to doubles strictly inside (0, 1).

    52 mantissa bits, offset by half a step: every value of bits + 0.5 is
    exact and the result stays in [2^-53, 1 - 2^-53] (a 53-bit mapping would
    round the top of the range to exactly 1.0).
    """
    bits = np.asarray(raw, dtype=np.uint64) >> np.uint64(12)
    return (bits.astype(np.float64) + 0.5) * (2.0 ** -52)
