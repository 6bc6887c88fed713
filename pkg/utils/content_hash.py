"""
Content hashing for run artifacts: trace files, snapshots and coefficient arrays
"""
import hashlib
import logging
from pathlib import Path
from typing import Union

import numpy as np

logger = logging.getLogger(__name__)


class ContentHasher:
    """SHA-256 digests used to compare reruns bit for bit"""

    def __init__(self, chunk_size: int = 1 << 16) -> None:
        self.encoding = "utf-8"
        self.chunk_size = chunk_size

    def hash_content(self, content: str) -> str:
        """Create a SHA256 hash of content"""
        return hashlib.sha256(content.encode(self.encoding)).hexdigest()

    def hash_file(self, path: Union[str, Path]) -> str:
        digest = hashlib.sha256()
        with open(path, "rb") as fh:
            for chunk in iter(lambda: fh.read(self.chunk_size), b""):
                digest.update(chunk)
        return digest.hexdigest()

    def hash_array(self, values: np.ndarray) -> str:
        """Hash of the little-endian binary64 bytes, shape included"""
        arr = np.ascontiguousarray(values, dtype="<f8")
        digest = hashlib.sha256(str(arr.shape).encode(self.encoding))
        digest.update(arr.tobytes())
        return digest.hexdigest()
