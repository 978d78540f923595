"""Delay/disruption-tolerant networking simulator for ISS-ground communication.

Store-and-forward bundle transfer over an intermittently connected
station mesh, with end-to-end security, fragmentation, custody transfer
and orbit-driven link dynamics.  Runs either on a fast virtual clock
(simulation mode) or over real loopback sockets with link shaping
(emulation mode).
"""

__version__ = "0.1.0"
