"""Least squares, residual diagnostics and the regression cell grid."""

from .diagnostics import DiagnosticError, TestResult, lm_serial_test, white_test
from .ols import CollinearError, EstimationError, OLSResult, UnderdeterminedError, design, fit_ols
from .tables import Cell, RegressionReport, SpecMatrix, build_panel, cell_grid, fit_cell, run_table

__all__ = [
    "Cell", "CollinearError", "DiagnosticError", "EstimationError", "OLSResult", "RegressionReport",
    "SpecMatrix", "TestResult", "UnderdeterminedError", "build_panel", "cell_grid", "design",
    "fit_cell", "fit_ols", "lm_serial_test", "run_table", "white_test",
]
