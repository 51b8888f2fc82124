"""Bosonic Pauli+ (BP+) simulation of sBs-stabilized GKP qubits.

The package covers the full pipeline: physical Lindblad dynamics of
finite-energy GKP modes, construction of the sBs basis, extraction of
PTM+/BP+ channel models, efficient two-step Monte-Carlo simulation of
Clifford circuits with error-sector tracking, and matching-based decoding
of a concatenated rotated surface code.
"""

__version__ = "0.1.0"
