"""
simulates the Laika tensegrity spine and its foot-lifting experiments
"""
__version__ = "0.1.0"
