"""FractalSym test suite."""
