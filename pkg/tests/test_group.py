"""Versioned membership: majorities, change values, version arithmetic."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ccnpaxos.errors import (
    DuplicateMember,
    EmptyGroup,
    MalformedPayload,
    MalformedTarget,
    UnknownMember,
    WouldEmptyGroup,
)
from ccnpaxos.group import (
    Add,
    GroupConfig,
    Member,
    Remove,
    apply_learner,
    apply_membership,
    decode_learner_target,
    decode_membership,
    encode_membership,
    majority_size,
    propose_learner_change,
    propose_membership_change,
)


def group_of(n, grpver=1):
    members = tuple(Member(f"a{i}", f"/a{i}") for i in range(n))
    return GroupConfig("g", grpver, members, "/learner")


@pytest.mark.parametrize("n,want", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 3), (7, 4)])
def test_majority_floor_half_plus_one(n, want):
    assert majority_size(group_of(n)) == want
    assert group_of(n).majority == want


def test_empty_group_rejected():
    with pytest.raises(EmptyGroup):
        GroupConfig("g", 1, (), "/learner")


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateMember):
        GroupConfig("g", 1, (Member("a", "/x"), Member("a", "/y")), "/l")


@pytest.mark.parametrize("bad", ["", "x", "/", "//", "/a//b"])
def test_bad_prefixes_rejected(bad):
    with pytest.raises(MalformedTarget):
        GroupConfig("g", 1, (Member("a", bad),), "/l")


def test_membership_value_round_trip():
    g = group_of(3)
    v = encode_membership(g.members)
    assert decode_membership(v) == g.members


def test_add_produces_full_member_list():
    g = group_of(3)
    v = propose_membership_change(g, Add("a3", "/a3"))
    assert decode_membership(v) == g.members + (Member("a3", "/a3"),)


def test_add_existing_member_rejected():
    with pytest.raises(DuplicateMember):
        propose_membership_change(group_of(3), Add("a0", "/elsewhere"))


def test_remove_unknown_member_rejected():
    with pytest.raises(UnknownMember):
        propose_membership_change(group_of(3), Remove("nobody"))


def test_remove_last_member_rejected():
    with pytest.raises(WouldEmptyGroup):
        propose_membership_change(group_of(1), Remove("a0"))


def test_membership_chosen_at_iter_k_gives_grpver_k_plus_one():
    g = group_of(3, grpver=1)
    v = propose_membership_change(g, Add("a3", "/a3"))
    g2 = apply_membership(g, v, chosen_iter=4)
    assert g2.grpver == 5
    assert len(g2.members) == 4
    assert g2.majority == 3
    assert g2.learner_target == g.learner_target


def test_learner_change_keeps_grpver():
    g = group_of(3, grpver=2)
    v = propose_learner_change(g, "/learners/alt")
    g2 = apply_learner(g, v)
    assert g2.grpver == 2
    assert g2.learner_target == "/learners/alt"
    assert decode_learner_target(v) == "/learners/alt"


def test_learner_change_rejects_bad_target():
    with pytest.raises(MalformedTarget):
        propose_learner_change(group_of(3), "not-a-prefix")


def test_membership_decode_rejects_foreign_values():
    from ccnpaxos.wire import Value
    with pytest.raises(MalformedPayload):
        decode_membership(Value.opaque(b"junk"))
    with pytest.raises(MalformedPayload):
        decode_membership(Value.noop())


def test_membership_decode_rejects_truncation():
    g = group_of(3)
    raw = encode_membership(g.members).data
    from ccnpaxos.wire import Value
    for cut in range(2, len(raw)):
        with pytest.raises(MalformedPayload):
            decode_membership(Value.opaque(raw[:cut]))


member_lists = st.lists(
    st.builds(
        Member,
        st.text(st.characters(min_codepoint=33, max_codepoint=126, exclude_characters="/."),
                min_size=1, max_size=6),
        st.text(st.characters(min_codepoint=33, max_codepoint=126, exclude_characters="/"),
                min_size=1, max_size=6).map(lambda s: "/" + s),
    ),
    min_size=1, max_size=5,
    unique_by=lambda m: m.id,
)


@given(member_lists)
def test_membership_round_trip_fuzz(members):
    assert decode_membership(encode_membership(tuple(members))) == tuple(members)


@given(member_lists)
def test_majority_overlap(members):
    # any two majorities of the same version share a member
    g = GroupConfig("g", 1, tuple(members), "/l")
    assert 2 * g.majority > len(g.members)
