"""Multi-agent 6-DoF spacecraft inspection simulator whose control pipeline
is guarded by a quadratic-program safety filter over control-barrier-function
constraints."""

import hashlib
from pathlib import Path

__version__ = "0.1.0"


def core_fingerprint() -> str:
    """Content hash of the package sources, for build identification."""
    digest = hashlib.sha256()
    root = Path(__file__).parent
    for path in sorted(root.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]
