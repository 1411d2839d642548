import os

if os.environ.get("RTCI_PURE_PYTHON", "").strip() not in ("", "0"):
    from rtci import _pykernels as kernels

    BACKEND = "python"
else:
    try:
        from rtci import _ckernels as kernels

        BACKEND = "cython"
    except ImportError:
        from rtci import _pykernels as kernels

        BACKEND = "python"

__all__ = ["BACKEND", "kernels"]
