"""
Test package for tunable-coupler-cz-sim.
"""
