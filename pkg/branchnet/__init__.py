"""
branchnet
Set-valued regression with logcosh networks, residual branch classification
and hidden-feature detection on district panels.
"""

__version__ = "0.1.0"
__description__ = "Set-valued regression and hidden-feature detection"
