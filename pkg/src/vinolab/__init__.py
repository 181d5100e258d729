"""Numerical companion to the Vinogradov mean value decoupling argument.

Modules: ``counting`` (J_{s,n}(N) by enumeration), ``expsum`` (exponential sums,
extension operator, weighted norms), ``arcs`` (major/minor arcs), ``weights``
(bifurcation weights and the iteration tree), ``appendix`` (exact omega/eta
system), ``decouple`` (ratio experiments) and ``cli``.
"""

__version__ = "0.1.0"
