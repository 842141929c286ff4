"""Wave-operator learning testbed.

Generates supervised data from a conservative variable-coefficient 1D wave
solver, trains FNO and DeepONet surrogates of the terminal-state map, and
reproduces in-distribution vs. structured-OOD degradation analyses.
"""

__version__ = "0.1.0"


def _tune_allocator():
    # Training churns through MB-scale numpy temporaries; with glibc defaults
    # each one is a fresh mmap/munmap round trip and page-fault storm. Raising
    # the mmap/trim thresholds keeps freed blocks in the heap free lists.
    # No-op on non-glibc platforms.
    import ctypes

    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
    except (OSError, AttributeError):
        pass


_tune_allocator()
del _tune_allocator

