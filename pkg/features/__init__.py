"""
User-facing surfaces: command line, presets, jobs and result tables.
"""
