"""
BatteryTTT: physics-guided test-time training for lithium-ion battery
State-of-Health estimation from partial charging curves.
"""

__version__ = "1.0.0"
