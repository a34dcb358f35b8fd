"""Ciphertext-policy attribute-based encryption over BLS12-381.

Policies are boolean/threshold trees over attribute strings (with
numeric comparisons compiled to bit-prefix attributes); ciphertexts
carry their policy, and a key decrypts exactly when its attribute set
satisfies the tree.
"""

from .policy import (
    AccessTree,
    Gate,
    Leaf,
    PolicyError,
    canonicalize_attribute,
    expand_attributes,
    parse_policy,
    render_tree,
    satisfies,
)
from .scheme import (
    AbeCiphertext,
    AbeError,
    IntegrityFailure,
    MasterKey,
    PolicyNotSatisfied,
    PublicParams,
    SerializationError,
    UserSecretKey,
    decrypt,
    encrypt,
    keygen,
    setup,
)

__all__ = [
    "AbeCiphertext",
    "AbeError",
    "AccessTree",
    "Gate",
    "IntegrityFailure",
    "Leaf",
    "MasterKey",
    "PolicyError",
    "PolicyNotSatisfied",
    "PublicParams",
    "SerializationError",
    "UserSecretKey",
    "canonicalize_attribute",
    "decrypt",
    "encrypt",
    "expand_attributes",
    "keygen",
    "parse_policy",
    "render_tree",
    "satisfies",
    "setup",
]
