"""Runtime tuning for array-churning hot loops.

Training allocates and frees many multi-megabyte buffers per iteration.
glibc serves those from fresh mmap regions by default and returns them to
the kernel on free, so every iteration pays page-fault costs again; under
sandboxed kernels those faults dominate the runtime. Raising the mmap and
trim thresholds keeps freed blocks on the heap free-list for reuse, at the
price of a larger resident set. The BLAS pool is also pinned to one thread:
every GEMM in the desk-scale network is too small to amortize the fork/join
cost, which measurably slows iterations. No-op where unavailable.
"""

import ctypes

_M_TRIM_THRESHOLD = -1
_M_TOP_PAD = -2
_M_MMAP_THRESHOLD = -3

_done = False


def tune_allocator():
    global _done
    if _done:
        return
    _done = True
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TOP_PAD, 1 << 26)
    except (OSError, AttributeError):
        pass
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1, user_api="blas")
    except Exception:
        pass
