"""evidence_select - grounded continuous evidence selection for MIL bags"""

__version__ = "0.1.0"
