"""Exception hierarchy shared by all ccnpaxos modules."""


class ConsensusError(Exception):
    """Base class for every error raised by this package."""


# --- naming ---------------------------------------------------------------

class NamingError(ConsensusError):
    pass


class InvalidComponent(NamingError):
    pass


class UnknownVerb(NamingError):
    pass


class MalformedBallot(NamingError):
    pass


class MalformedName(NamingError):
    pass


class MixedBallotForms(NamingError):
    pass


# --- wire -----------------------------------------------------------------

class WireError(ConsensusError):
    pass


class MalformedPayload(WireError):
    pass


class BadVerbPayload(WireError):
    pass


class EmptyAggregate(WireError):
    pass


# --- protocol state machines ----------------------------------------------

class ProtocolError(ConsensusError):
    pass


class NotIdle(ProtocolError):
    pass


class NotMaster(ProtocolError):
    pass


class UnknownGrpver(ProtocolError):
    pass


# --- group membership -----------------------------------------------------

class GroupError(ConsensusError):
    pass


class EmptyGroup(GroupError):
    pass


class DuplicateMember(GroupError):
    pass


class UnknownMember(GroupError):
    pass


class WouldEmptyGroup(GroupError):
    pass


class MalformedTarget(GroupError):
    pass


# --- simulator ------------------------------------------------------------

class SimError(ConsensusError):
    pass


class NoRoute(SimError):
    pass


class LivelockGuard(SimError):
    """Raised when the event queue exceeds the configured event cap."""


# --- scenario / CLI -------------------------------------------------------

class ScenarioError(ConsensusError):
    """Configuration problem; the CLI maps this to exit status 2."""


class TraceError(ConsensusError):
    """Unreadable or malformed trace input; also exit status 2."""
