"""Space-time domain decomposition for compressible flow in a porous medium with one fracture.

Two-point flux (lowest-order mixed) discretization in space, backward Euler
in time, and global-in-time interface solvers: a fracture-pressure Schur
method with local or Neumann-Neumann preconditioning, and optimized Schwarz
waveform relaxation with Ventcell-to-Robin transmission.  Subdomains and the
fracture may use different time grids.
"""

__version__ = "0.1.0"
