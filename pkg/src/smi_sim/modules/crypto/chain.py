# src/smi_sim/modules/crypto/chain.py
"""
Incremental signature chains.

Every link signs (owner parameter, previous link signature, location, time),
so a link cannot be produced without both the chain so far and the owner's
secret dialing parameter. In an epoch the two parties interleave: even link
indices belong to the initiator (parameter a), odd ones to the participant
(parameter b). Index 3 is the last dialing signature and acts as genesis.
"""

from dataclasses import dataclass
from typing import Sequence

from smi_sim.core.exceptions import ChainError
from smi_sim.domain.models import LocationReport
from smi_sim.modules.crypto.primitives import (
    Nonce,
    encode_fields,
    encode_int,
    sign,
    verify,
)

GENESIS_INDEX = 3


@dataclass(frozen=True, slots=True)
class SignatureChainState:
    last_signature: bytes
    index: int
    owner_param: Nonce


@dataclass(frozen=True, slots=True)
class ChainLink:
    index: int
    signature: bytes
    location: LocationReport
    time: int


@dataclass(frozen=True, slots=True)
class ChainGenesis:
    signature: bytes
    index: int = GENESIS_INDEX


def link_payload(
    param: Nonce, previous_signature: bytes, location: LocationReport, time: int
) -> bytes:
    return encode_fields(
        b"smi-link/v1", param.value, previous_signature, location.encode(), encode_int(time)
    )


def chain_extend(
    state: SignatureChainState, private_key: bytes, location: LocationReport, time: int
) -> SignatureChainState:
    """Sign the next link on top of state.last_signature."""
    if state.index < 1:
        raise ChainError(f"chain index must be at least 1, got {state.index}")
    if not state.last_signature:
        raise ChainError("chain has no previous signature")
    if not state.owner_param.value:
        raise ChainError("chain owner parameter is empty")
    signature = sign(private_key, link_payload(state.owner_param, state.last_signature, location, time))
    return SignatureChainState(
        last_signature=signature, index=state.index + 1, owner_param=state.owner_param
    )


def chain_verify(
    genesis: ChainGenesis,
    links: Sequence[ChainLink],
    peer_public_key: bytes,
    expected_param: Nonce,
) -> bool:
    """Check that every link was signed by one peer over the link before it."""
    if not links:
        return False
    previous = genesis.signature
    expected_index = genesis.index + 1
    for link in links:
        if link.index != expected_index:
            return False
        payload = link_payload(expected_param, previous, link.location, link.time)
        if not verify(peer_public_key, payload, link.signature):
            return False
        previous = link.signature
        expected_index += 1
    return True


def verify_interleaved_chain(
    genesis: ChainGenesis,
    links: Sequence[ChainLink],
    initiator_key: bytes,
    participant_key: bytes,
    initiator_param: Nonce,
    participant_param: Nonce,
) -> bool:
    """Whole-epoch transcript check with alternating signers."""
    if not links:
        return False
    previous = genesis.signature
    expected_index = genesis.index + 1
    for link in links:
        if link.index != expected_index:
            return False
        if link.index % 2 == 0:
            key, param = initiator_key, initiator_param
        else:
            key, param = participant_key, participant_param
        if not verify(key, link_payload(param, previous, link.location, link.time), link.signature):
            return False
        previous = link.signature
        expected_index += 1
    return True
