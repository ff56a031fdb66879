"""loopfield: 2D lattice Yang-Mills loop equations and their continuum limit."""

from loopfield.groups import GroupSpec, parse_group

__all__ = ["GroupSpec", "parse_group"]
__version__ = "0.1.0"
