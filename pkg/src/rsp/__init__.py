"""Remote preparation of qubit ensembles: the classical-bit / ebit tradeoff.

Modules
-------
bloch
    Qubit states, rotations, entropies and equal-area cap partitions.
analytic
    Closed-form rate and entropy curves with quadrature cross-checks.
optimizer
    Fixed-point minimization of mutual information plus a multiple of
    posterior entropy over a discretized sphere.
coding
    Random-codebook coding simulation and the hemisphere example.
cli
    The ``rsp`` command.
"""

__version__ = "0.1.0"
