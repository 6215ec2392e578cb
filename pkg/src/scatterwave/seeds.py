"""Named sub-seeds derived from one experiment seed."""

import hashlib


def derive_seed(seed: int, *names) -> int:
    """Stable 32-bit seed for the component identified by ``names``."""
    key = ":".join([str(int(seed)), *map(str, names)]).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=4).digest(), "little")
