"""
Utility modules for configuration, presets, file I/O and run logging.
"""
