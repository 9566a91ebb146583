"""Paxos consensus over named-data networking, with a deterministic simulator.

Agreement rounds run either as individual Interest/ContentObject exchanges
against each group member's own prefix, or as a single Interest multicast
to a group prefix with pushed responses.  Both modes share one wire format
and one set of role state machines.
"""

from .errors import (
    ConsensusError,
    GroupError,
    NamingError,
    ProtocolError,
    ScenarioError,
    SimError,
    WireError,
)
from .group import GroupConfig, Member, majority_size
from .naming import BallotNumber, ConsensusName, compare_ballots, encode_name, parse_name
from .wire import Entry, Message, Value, decode_payload, encode_payload, payload_digest

__version__ = "0.1.0"

__all__ = [
    "BallotNumber",
    "ConsensusName",
    "ConsensusError",
    "Entry",
    "GroupConfig",
    "GroupError",
    "Member",
    "Message",
    "NamingError",
    "ProtocolError",
    "ScenarioError",
    "SimError",
    "Value",
    "WireError",
    "compare_ballots",
    "decode_payload",
    "encode_payload",
    "encode_name",
    "majority_size",
    "parse_name",
    "payload_digest",
    "__version__",
]
