"""Tactile pivoting at desk scale.

Simulated gel-sensor imaging, tactile representation pipelines, PPO policy
training on a quasi-static pivoting task, and a domain-shift evaluation
harness.
"""

__version__ = "0.1.0"
