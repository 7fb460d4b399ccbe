"""
Grid pricing engine: interpolation, market objects, 1D/ND/hybrid grids, generalized
local vol calibration and the Monte Carlo oracle.
"""
