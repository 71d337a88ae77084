"""Behavior-aware strategy switch advisor.

A pipeline over match logs: deck archetype clustering, player behavior
subtyping, a recurrent session encoder, switch-timing and switch-quality
heads, score fusion into Stay/Switch(target) advice, and an offline policy
evaluation harness with a live HTTP advisor on top.
"""

__version__ = "0.1.0"
