from smi_sim.modules.crypto.primitives import (
    CipherEnvelope,
    KeyPair,
    Nonce,
    generate_keypair,
    make_nonce,
    open_envelope,
    seal,
    sign,
    verify,
)
from smi_sim.modules.crypto.chain import (
    ChainGenesis,
    ChainLink,
    SignatureChainState,
    chain_extend,
    chain_verify,
)

__all__ = [
    "CipherEnvelope",
    "KeyPair",
    "Nonce",
    "generate_keypair",
    "make_nonce",
    "open_envelope",
    "seal",
    "sign",
    "verify",
    "ChainGenesis",
    "ChainLink",
    "SignatureChainState",
    "chain_extend",
    "chain_verify",
]
