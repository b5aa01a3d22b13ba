"""Embodied agents on a 2D track and information-flow measures of their sensorimotor loop.

Modules: ``prob`` (binary joint tables, information quantities, IPF),
``measures`` (loop measures in nats), ``env`` (track, body, sensors),
``agent`` (mechanisms, sampling, experience logs), ``learner`` (em
planning), ``harness`` (batches, schedules, outputs) and ``cli``.
"""

__version__ = "0.1.0"
