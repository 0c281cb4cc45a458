"""Matrix products over the p-adic integers and the reflecting Poisson sea.

Submodules: ``signatures``, ``qcalc``, ``padic_linalg``, ``ensembles``,
``sea_sim``, ``generator``, ``harness`` and ``cli``.
"""
__version__ = "0.1.0"
