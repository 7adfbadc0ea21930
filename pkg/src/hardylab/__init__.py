"""Finite element laboratory for the boundary-singular operator -Delta - lambda/|x|^2.

Modules: ``mesh`` (domains with the origin on the boundary), ``operators``
(P1 forms with singular weights), ``spectral`` (Hardy-type constants),
``elliptic`` (Dirichlet solves, Pohozaev and trace checks), ``evolution``
(conservative wave and Schrodinger integrators, multiplier identities),
``hum`` (boundary controls), ``semilinear`` (ground states) and ``cli``.
"""

__version__ = "0.1.0"
