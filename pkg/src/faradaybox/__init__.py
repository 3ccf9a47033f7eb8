"""Shielded-box OTA provisioning, fully in software.

Subpackages by concern: radio (link-budget math), crypto (keys, sealing,
containers, erasure proofs), backend (operator service), box (the
five-state controller), node (simulated sensor nodes), sim (deterministic
scenario runner), control (interactive API), cli (entry points).
"""

__version__ = "0.1.0"
