"""QAOA with generated mixer Hamiltonians."""
