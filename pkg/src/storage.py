import logging
import os
import struct
from typing import Optional

import numpy as np

from .arith_sieve import ConvolutionSpec, FnTable
from .utils import ConfigError

MAGIC = b"KAPPASV\x00"
VERSION = 1
# magic, version, reserved
HEADER = struct.Struct("<8sII")


class SieveCache:
    """
    Binary on-disk cache of convolution tables.

    One file per (spec, n_max). The cache only saves work: a table read back
    is bit-identical to the one that was stored.
    """

    def __init__(self, persist_path: str = "cache"):
        """
        Initialize the cache directory.

        Args:
            persist_path: Directory holding the .bin files
        """
        self.persist_path = persist_path
        self.logger = logging.getLogger(f"SieveCache-{os.path.basename(persist_path) or 'cache'}")
        os.makedirs(persist_path, exist_ok=True)

    def _file_for(self, spec: ConvolutionSpec, n_max: int) -> str:
        exps = "-".join(str(e) for e in spec.exponents) or "none"
        flag = "sf" if spec.squarefree_restricted else "all"
        return os.path.join(self.persist_path, f"sieve_d{spec.d}_l{exps}_{flag}_{n_max}.bin")

    def _load_from_disk(self, path: str, spec: ConvolutionSpec, n_max: int) -> Optional[FnTable]:
        """
        Read one table, checking the header against the requested (spec, n_max).

        Raises:
            ConfigError: on a bad magic, a truncated file or a header for another key
        """
        if not os.path.exists(path):
            return None
        with open(path, "rb") as f:
            try:
                magic, version, _ = HEADER.unpack(f.read(HEADER.size))
                if magic != MAGIC or version != VERSION:
                    raise ConfigError(f"{path} is not a version-{VERSION} sieve cache file")
                stored_n_max, d = struct.unpack("<qq", f.read(16))
                exponents = struct.unpack(f"<{d}q", f.read(8 * d)) if d else ()
                (flag,) = struct.unpack("<q", f.read(8))
            except struct.error:
                raise ConfigError(f"{path} has a truncated header")
            stored = (stored_n_max, d, tuple(exponents), bool(flag))
            wanted = (n_max, spec.d, tuple(spec.exponents), spec.squarefree_restricted)
            if stored != wanted:
                raise ConfigError(f"{path} holds (n_max, d, exponents, squarefree)={stored}, expected {wanted}")
            raw = f.read(8 * n_max)
            values = np.frombuffer(raw[:len(raw) - len(raw) % 8], dtype="<f8").astype(np.float64)
        if len(values) != n_max:
            raise ConfigError(f"{path} is truncated: {len(values)} of {n_max} values")
        self.logger.info(f"Loaded {spec.label} (n_max={n_max}) from {path}")
        return FnTable(n_max, values, spec.label)

    def _save_to_disk(self, path: str, spec: ConvolutionSpec, table: FnTable):
        with open(path, "wb") as f:
            f.write(HEADER.pack(MAGIC, VERSION, 0))
            f.write(struct.pack("<qq", table.n_max, spec.d))
            if spec.d:
                f.write(struct.pack(f"<{spec.d}q", *spec.exponents))
            f.write(struct.pack("<q", int(spec.squarefree_restricted)))
            f.write(np.asarray(table.values, dtype="<f8").tobytes())

    def get(self, spec: ConvolutionSpec, n_max: int) -> Optional[FnTable]:
        """
        Look a table up.

        Returns:
            The stored table, or None on a miss
        """
        table = self._load_from_disk(self._file_for(spec, n_max), spec, n_max)
        if table is None:
            self.logger.info(f"Cache miss for {spec.label} (n_max={n_max})")
        return table

    def put(self, spec: ConvolutionSpec, table: FnTable) -> str:
        path = self._file_for(spec, table.n_max)
        self._save_to_disk(path, spec, table)
        self.logger.info(f"Stored {spec.label} (n_max={table.n_max}) in {path}")
        return path
