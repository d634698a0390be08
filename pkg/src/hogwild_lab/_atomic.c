/*
 * Lock-free cell operations for the shared parameter vector.
 *
 * The functions take raw addresses (intptr_t) so they can be called through
 * ctypes from Python and from numba nopython code.  Doubles are updated with a
 * compare-and-swap loop on their 64-bit representation; no call ever takes a
 * lock.  The module object itself is empty: it exists so the shared library is
 * built and located like any other extension.
 */
#define PY_SSIZE_T_CLEAN
#include <Python.h>
#include <stdint.h>
#include <string.h>

static inline double bits_to_double(uint64_t b) { double v; memcpy(&v, &b, 8); return v; }
static inline uint64_t double_to_bits(double v) { uint64_t b; memcpy(&b, &v, 8); return b; }

double hw_load(intptr_t cells, int64_t i)
{
    uint64_t *p = (uint64_t *)cells + i;
    return bits_to_double(__atomic_load_n(p, __ATOMIC_ACQUIRE));
}

void hw_store(intptr_t cells, int64_t i, double v)
{
    uint64_t *p = (uint64_t *)cells + i;
    __atomic_store_n(p, double_to_bits(v), __ATOMIC_RELEASE);
}

/* Returns the value held before the addition. */
double hw_add(intptr_t cells, int64_t i, double delta)
{
    uint64_t *p = (uint64_t *)cells + i;
    uint64_t old = __atomic_load_n(p, __ATOMIC_RELAXED);
    uint64_t upd;
    do {
        upd = double_to_bits(bits_to_double(old) + delta);
    } while (!__atomic_compare_exchange_n(p, &old, upd, 1,
                                          __ATOMIC_ACQ_REL, __ATOMIC_RELAXED));
    return bits_to_double(old);
}

/* Returns the number of CAS retries, a rough contention gauge. */
int64_t hw_add_many(intptr_t cells, intptr_t idx, intptr_t deltas, int64_t n)
{
    const int64_t *ix = (const int64_t *)idx;
    const double *dv = (const double *)deltas;
    int64_t retries = 0;
    for (int64_t k = 0; k < n; k++) {
        uint64_t *p = (uint64_t *)cells + ix[k];
        uint64_t old = __atomic_load_n(p, __ATOMIC_RELAXED);
        uint64_t upd;
        for (;;) {
            upd = double_to_bits(bits_to_double(old) + dv[k]);
            if (__atomic_compare_exchange_n(p, &old, upd, 1,
                                            __ATOMIC_ACQ_REL, __ATOMIC_RELAXED))
                break;
            retries++;
        }
    }
    return retries;
}

void hw_load_many(intptr_t cells, intptr_t idx, intptr_t out, int64_t n)
{
    const int64_t *ix = (const int64_t *)idx;
    double *o = (double *)out;
    for (int64_t k = 0; k < n; k++)
        o[k] = hw_load(cells, ix[k]);
}

int64_t hw_fetch_add_i64(intptr_t counter, int64_t inc)
{
    return __atomic_fetch_add((int64_t *)counter, inc, __ATOMIC_ACQ_REL);
}

int64_t hw_load_i64(intptr_t counter)
{
    return __atomic_load_n((int64_t *)counter, __ATOMIC_ACQUIRE);
}

static struct PyModuleDef atomic_module = {
    PyModuleDef_HEAD_INIT, "_atomic",
    "Lock-free cell primitives (called through ctypes).", -1, NULL,
};

PyMODINIT_FUNC PyInit__atomic(void) { return PyModule_Create(&atomic_module); }
