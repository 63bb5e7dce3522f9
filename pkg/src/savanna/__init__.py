"""Two-type interacting particle model with bistable local dynamics:
rate functions, mean-field and integro-differential limits, exact lattice
simulation, duality checks, block renormalisation and heterogeneous runs."""

__version__ = "0.1.0"
