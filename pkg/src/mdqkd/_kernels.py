"""Select the compiled kernel core, or the numpy fallback when it is absent.

Set ``MDQKD_PURE_PYTHON=1`` to force the fallback.
"""
import importlib
import os

from mdqkd import _fallback


def _load_compiled():
    try:
        return importlib.import_module("mdqkd._core")
    except ImportError:
        return None


_compiled = None if os.environ.get("MDQKD_PURE_PYTHON") == "1" else _load_compiled()
_impl = _compiled if _compiled is not None else _fallback

BACKEND = "compiled" if _compiled is not None else "python"


def get_backend(name=None):
    """Return a kernel namespace: ``"compiled"``, ``"python"`` or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        mod = _load_compiled()
        if mod is None:
            raise RuntimeError("compiled core is not built; run `pip install -e .`")
        return mod
    raise ValueError(f"unknown backend {name!r}")


def syndrome(bits, chk_ptr, chk_var):
    return _impl.syndrome(bits, chk_ptr, chk_var)


def bp_decode(chan_llr, target, chk_ptr, chk_var, var_ptr, var_edge, max_iter):
    return _impl.bp_decode(chan_llr, target, chk_ptr, chk_var, var_ptr, var_edge, max_iter)


def lfsr_accumulate(bits, taps, state):
    return _impl.lfsr_accumulate(bits, taps, state)
