# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trial loops; statement-for-statement twin of ``_fallback.run_trials``."""

from libc.math cimport log, sqrt, cos, M_PI
from libc.stdint cimport uint32_t, uint64_t, int64_t, int8_t

cdef double TWO_PI = 2.0 * M_PI
cdef double INV_2_53 = 1.0 / 9007199254740992.0

cdef int ACCEPT = 0
cdef int REJECT = 1
cdef int CENSORED = 2

cdef int ROLE_OBS = 0
cdef int ROLE_THRESHOLD = 1
cdef int ROLE_QUERY = 2


cdef struct Stream:
    uint32_t k0
    uint32_t k1
    uint64_t counter


cdef inline uint64_t splitmix64(uint64_t x) noexcept nogil:
    cdef uint64_t z = x + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline void stream_init(Stream* s, uint64_t seed, uint64_t trial, uint64_t role) noexcept nogil:
    cdef uint64_t k = splitmix64(seed)
    k = splitmix64(k ^ trial)
    k = splitmix64(k ^ role)
    s.k0 = <uint32_t>(k & 0xFFFFFFFFULL)
    s.k1 = <uint32_t>(k >> 32)
    s.counter = 0


cdef inline void philox(uint64_t ctr, uint32_t key0, uint32_t key1, uint32_t* out) noexcept nogil:
    cdef uint32_t c0 = <uint32_t>(ctr & 0xFFFFFFFFULL)
    cdef uint32_t c1 = <uint32_t>(ctr >> 32)
    cdef uint32_t c2 = 0
    cdef uint32_t c3 = 0
    cdef uint32_t k0 = key0
    cdef uint32_t k1 = key1
    cdef uint64_t p0, p1
    cdef uint32_t n0, n1, n2, n3
    cdef int i
    for i in range(10):
        if i:
            k0 = k0 + 0x9E3779B9U
            k1 = k1 + 0xBB67AE85U
        p0 = <uint64_t>0xD2511F53U * <uint64_t>c0
        p1 = <uint64_t>0xCD9E8D57U * <uint64_t>c2
        n0 = (<uint32_t>(p1 >> 32)) ^ c1 ^ k0
        n1 = <uint32_t>(p1 & 0xFFFFFFFFULL)
        n2 = (<uint32_t>(p0 >> 32)) ^ c3 ^ k1
        n3 = <uint32_t>(p0 & 0xFFFFFFFFULL)
        c0 = n0
        c1 = n1
        c2 = n2
        c3 = n3
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline void next_pair(Stream* s, double* u1, double* u2) noexcept nogil:
    cdef uint32_t w[4]
    philox(s.counter, s.k0, s.k1, w)
    s.counter += 1
    cdef uint64_t x1 = ((<uint64_t>w[1]) << 32) | w[0]
    cdef uint64_t x2 = ((<uint64_t>w[3]) << 32) | w[2]
    u1[0] = (<double>(x1 >> 11) + 0.5) * INV_2_53
    u2[0] = (<double>(x2 >> 11) + 0.5) * INV_2_53


cdef inline double draw_uniform(Stream* s) noexcept nogil:
    cdef double u1, u2
    next_pair(s, &u1, &u2)
    return u1


cdef inline double draw_normal(Stream* s) noexcept nogil:
    cdef double u1, u2
    next_pair(s, &u1, &u2)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


cdef inline double draw_noise(Stream* s, int kind, double scale) noexcept nogil:
    cdef double u
    if kind == 1:
        return scale * draw_normal(s)
    u = draw_uniform(s)
    if u < 0.5:
        return scale * log(2.0 * u)
    return -scale * log(2.0 * (1.0 - u))


def philox_block(uint64_t counter, uint64_t key):
    """Expose the block function for cross-checking against the Python twin."""
    cdef uint32_t w[4]
    philox(counter, <uint32_t>(key & 0xFFFFFFFFULL), <uint32_t>(key >> 32), w)
    return (w[0], w[1], w[2], w[3])


def normals(uint64_t seed, uint64_t trial, uint64_t role, Py_ssize_t n):
    cdef Stream s
    stream_init(&s, seed, trial, role)
    return [draw_normal(&s) for _ in range(n)]


def run_trials(
    int obs_kind,
    double param_h,
    double llr_p,
    double llr_q,
    double a_trunc,
    double a,
    double b,
    int noisy,
    int noise_kind,
    double s1,
    double s2,
    int64_t t_max,
    uint64_t seed,
    int64_t start,
    int8_t[::1] dec,
    int64_t[::1] stop,
    double[::1] llr_sum,
    double[::1] stat,
):
    cdef Py_ssize_t n = dec.shape[0]
    cdef Py_ssize_t i
    cdef Stream obs, thr, qry
    cdef double lo, hi, ell, raw, v, x, qa, qb
    cdef int d
    cdef int64_t t
    cdef bint thr_on = noisy and noise_kind != 0 and s1 > 0.0
    cdef bint qry_on = noisy and noise_kind != 0 and s2 > 0.0
    with nogil:
        for i in range(n):
            stream_init(&obs, seed, <uint64_t>(start + i), ROLE_OBS)
            lo = -a
            hi = b
            if thr_on:
                stream_init(&thr, seed, <uint64_t>(start + i), ROLE_THRESHOLD)
                lo = -a + draw_noise(&thr, noise_kind, s1)
                hi = b + draw_noise(&thr, noise_kind, s1)
            if qry_on:
                stream_init(&qry, seed, <uint64_t>(start + i), ROLE_QUERY)
            ell = 0.0
            raw = 0.0
            d = CENSORED
            t = 0
            while t < t_max:
                t += 1
                if obs_kind == 0:
                    if draw_uniform(&obs) < param_h:
                        v = llr_p
                    else:
                        v = llr_q
                else:
                    x = param_h + draw_normal(&obs)
                    v = llr_p * x - llr_q
                raw += v
                if v > a_trunc:
                    v = a_trunc
                elif v < -a_trunc:
                    v = -a_trunc
                ell += v
                if not noisy:
                    if ell >= hi:
                        d = REJECT
                        break
                    if ell <= lo:
                        d = ACCEPT
                        break
                else:
                    qa = ell
                    qb = ell
                    if qry_on:
                        qa = ell + draw_noise(&qry, noise_kind, s2)
                        qb = ell + draw_noise(&qry, noise_kind, s2)
                    if qb > hi:
                        d = REJECT
                        break
                    if qa < lo:
                        d = ACCEPT
                        break
            dec[i] = <int8_t>d
            stop[i] = t
            llr_sum[i] = raw
            stat[i] = ell
