# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Typed twin of search_py.search: same state packing, same step model,
same canonicalization, bit-identical results, much faster.  Kept in lock
step with the pure module by the backend-equivalence tests."""

from libc.stdint cimport uint64_t
from libc.stdlib cimport calloc, free, malloc, realloc

cdef uint64_t P_OFF = 33
cdef uint64_t N_OFF = 47
cdef uint64_t C_OFF = 51
cdef uint64_t MAX_N = 15

HIGHEST = 0
LOWEST = 1

cdef int[8] POP3 = [0, 1, 1, 2, 1, 2, 2, 3]


cdef inline uint64_t flip_values(uint64_t st) nogil:
    cdef uint64_t flipped = 0
    cdef uint64_t a, pj, chosen
    cdef int i, j
    for i in range(3):
        a = (st >> (11 * i)) & 0x7FF
        if (a >> 5) & 31:
            a ^= 1 << 10
        flipped |= a << (11 * i)
    for j in range(2):
        pj = (st >> (P_OFF + 7 * j)) & 0x7F
        if pj & 1:
            pj ^= 1 << 6
        flipped |= pj << (P_OFF + 7 * j)
    flipped |= st & (<uint64_t>15 << N_OFF)
    chosen = (st >> C_OFF) & 3
    flipped |= ((chosen >> 1) | ((chosen & 1) << 1)) << C_OFF
    return flipped


cdef inline uint64_t sort3(uint64_t a0, uint64_t a1, uint64_t a2, uint64_t rest) nogil:
    cdef uint64_t t
    if a0 > a1:
        t = a0; a0 = a1; a1 = t
    if a1 > a2:
        t = a1; a1 = a2; a2 = t
    if a0 > a1:
        t = a0; a0 = a1; a1 = t
    return a0 | (a1 << 11) | (a2 << 22) | rest


cdef inline uint64_t canon3(uint64_t a0, uint64_t a1, uint64_t a2, uint64_t rest) nogil:
    cdef uint64_t st = sort3(a0, a1, a2, rest)
    cdef uint64_t alt = flip_values(st)
    if alt < st:
        alt = sort3(alt & 0x7FF, (alt >> 11) & 0x7FF, (alt >> 22) & 0x7FF,
                    (alt >> P_OFF) << P_OFF)
        if alt < st:
            return alt
    return st


# --- open-addressing visited set (0 is never a reachable state) -----------

cdef struct HSet:
    uint64_t* slots
    size_t mask
    size_t used


cdef inline uint64_t mix(uint64_t x) nogil:
    x ^= x >> 33
    x *= <uint64_t>0xff51afd7ed558ccdU
    x ^= x >> 33
    x *= <uint64_t>0xc4ceb9fe1a85ec53U
    x ^= x >> 33
    return x


cdef int hs_init(HSet* h, size_t cap) except -1:
    cdef size_t n = 1
    while n < cap:
        n <<= 1
    h.slots = <uint64_t*>calloc(n, sizeof(uint64_t))
    if h.slots == NULL:
        raise MemoryError()
    h.mask = n - 1
    h.used = 0
    return 0


cdef int hs_grow(HSet* h) except -1:
    cdef uint64_t* old = h.slots
    cdef size_t old_n = h.mask + 1, i, j
    cdef uint64_t v
    h.slots = <uint64_t*>calloc(old_n * 2, sizeof(uint64_t))
    if h.slots == NULL:
        h.slots = old
        raise MemoryError()
    h.mask = old_n * 2 - 1
    for i in range(old_n):
        v = old[i]
        if v:
            j = mix(v) & h.mask
            while h.slots[j]:
                j = (j + 1) & h.mask
            h.slots[j] = v
    free(old)
    return 0


cdef inline int hs_add(HSet* h, uint64_t v) nogil:
    # returns 1 if newly added, 0 if already present
    cdef size_t j = mix(v) & h.mask
    while h.slots[j]:
        if h.slots[j] == v:
            return 0
        j = (j + 1) & h.mask
    h.slots[j] = v
    h.used += 1
    return 1


cdef int expand_c(uint64_t st, int rule, uint64_t* out) nogil:
    cdef int n = 0
    cdef uint64_t a0 = st & 0x7FF, a1 = (st >> 11) & 0x7FF, a2 = (st >> 22) & 0x7FF
    cdef uint64_t[3] a
    cdef uint64_t[3] na
    cdef int[3] prom
    cdef uint64_t[2] pj
    a[0] = a0; a[1] = a1; a[2] = a2
    prom[0] = <int>(a0 & 31); prom[1] = <int>(a1 & 31); prom[2] = <int>(a2 & 31)
    pj[0] = (st >> P_OFF) & 0x7F
    pj[1] = (st >> (P_OFF + 7)) & 0x7F
    cdef uint64_t next_n = (st >> N_OFF) & 15
    cdef uint64_t chosen = (st >> C_OFF) & 3
    cdef uint64_t keep = (pj[0] << P_OFF) | (pj[1] << (P_OFF + 7)) | (next_n << N_OFF) | (chosen << C_OFF)
    cdef uint64_t bumped, me, other, rest, acc_field, want, v64
    cdef int p, subset, i, b, ackmask, hi_b, lo_b, hi_v, lo_v, got_prior, v
    cdef int ab, av, changed, holders
    cdef uint64_t nch

    if next_n <= MAX_N:
        bumped = ((next_n + 1) << N_OFF) | (chosen << C_OFF)
        for p in range(2):
            b = <int>(next_n * 2) + p
            other = pj[1 - p] << (P_OFF + 7 * (1 - p))
            for subset in range(1, 8):
                ackmask = 0
                for i in range(3):
                    if (subset >> i) & 1 and b > prom[i]:
                        ackmask |= 1 << i
                if ackmask == 0:
                    continue
                na[0] = a[0]; na[1] = a[1]; na[2] = a[2]
                hi_b = -1; hi_v = 0
                lo_b = 1 << 9; lo_v = 0
                got_prior = 0
                for i in range(3):
                    if (ackmask >> i) & 1:
                        na[i] = (a[i] & ~<uint64_t>31) | <uint64_t>b
                        ab = <int>((a[i] >> 5) & 31)
                        if ab:
                            got_prior = 1
                            av = <int>((a[i] >> 10) & 1)
                            if ab > hi_b:
                                hi_b = ab; hi_v = av
                            if ab < lo_b:
                                lo_b = ab; lo_v = av
                if POP3[ackmask] >= 2:
                    if got_prior:
                        v = hi_v if rule == 0 else lo_v
                        me = (1 | (<uint64_t>b << 1) | (<uint64_t>v << 6)) << (P_OFF + 7 * p)
                        out[n] = canon3(na[0], na[1], na[2], me | other | bumped)
                        n += 1
                    else:
                        for v in range(2):
                            me = (1 | (<uint64_t>b << 1) | (<uint64_t>v << 6)) << (P_OFF + 7 * p)
                            out[n] = canon3(na[0], na[1], na[2], me | other | bumped)
                            n += 1
                else:
                    out[n] = canon3(na[0], na[1], na[2], other | bumped)
                    n += 1

    for p in range(2):
        if not (pj[p] & 1):
            continue
        b = <int>((pj[p] >> 1) & 31)
        v = <int>((pj[p] >> 6) & 1)
        v64 = <uint64_t>v
        acc_field = <uint64_t>b | (<uint64_t>b << 5) | (v64 << 10)
        want = <uint64_t>b | (v64 << 5)
        for subset in range(1, 8):
            na[0] = a[0]; na[1] = a[1]; na[2] = a[2]
            changed = 0
            for i in range(3):
                if (subset >> i) & 1 and b >= prom[i] and na[i] != acc_field:
                    na[i] = acc_field
                    changed = 1
            if not changed:
                continue
            holders = 0
            for i in range(3):
                if (na[i] >> 5) == want:
                    holders += 1
            nch = chosen | (<uint64_t>1 << v) if holders >= 2 else chosen
            rest = (keep & ~(<uint64_t>3 << C_OFF)) | (nch << C_OFF)
            out[n] = canon3(na[0], na[1], na[2], rest)
            n += 1
    return n


def search(int rule, int max_steps=8, bint stop_on_first=False):
    """Breadth-first bounded enumeration; returns (states, violations, depth)."""
    cdef uint64_t init = <uint64_t>1 << N_OFF
    cdef HSet visited
    hs_init(&visited, 1 << 16)
    hs_add(&visited, init)

    cdef size_t cap = 1 << 14
    cdef uint64_t* frontier = <uint64_t*>malloc(cap * sizeof(uint64_t))
    cdef uint64_t* nxt = <uint64_t*>malloc(cap * sizeof(uint64_t))
    cdef uint64_t* tmp
    if frontier == NULL or nxt == NULL:
        free(frontier); free(nxt); free(visited.slots)
        raise MemoryError()
    frontier[0] = init
    cdef size_t flen = 1, nlen, fi
    cdef uint64_t[64] succ
    cdef int depth = 0, cnt, si
    cdef long violations = 0
    cdef uint64_t s

    try:
        for depth in range(1, max_steps + 1):
            nlen = 0
            for fi in range(flen):
                cnt = expand_c(frontier[fi], rule, succ)
                for si in range(cnt):
                    s = succ[si]
                    if not hs_add(&visited, s):
                        continue
                    if visited.used * 4 > (visited.mask + 1) * 3:
                        hs_grow(&visited)
                    if nlen == cap:
                        cap *= 2
                        tmp = <uint64_t*>realloc(frontier, cap * sizeof(uint64_t))
                        if tmp == NULL:
                            raise MemoryError()
                        frontier = tmp
                        tmp = <uint64_t*>realloc(nxt, cap * sizeof(uint64_t))
                        if tmp == NULL:
                            raise MemoryError()
                        nxt = tmp
                    nxt[nlen] = s
                    nlen += 1
                    if (s >> C_OFF) & 3 == 3:
                        violations += 1
                        if stop_on_first:
                            return (<long>visited.used, violations, depth)
            if nlen == 0:
                return (<long>visited.used, violations, depth)
            tmp = frontier; frontier = nxt; nxt = tmp
            flen = nlen
        return (<long>visited.used, violations, depth)
    finally:
        free(frontier)
        free(nxt)
        free(visited.slots)
