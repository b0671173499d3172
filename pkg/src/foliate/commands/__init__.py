"""Command modules, one per CLI verb."""

from foliate.commands import flow, functional, verify

COMMANDS = {
    "verify": verify.run,
    "flow": flow.run,
    "functional": functional.run,
}

__all__ = ["COMMANDS", "flow", "functional", "verify"]
