from tubesearch.io.fmat import (
    read_fmat,
    read_fmat_bundle,
    write_fmat,
    write_fmat_bundle,
)

__all__ = [
    "read_fmat",
    "read_fmat_bundle",
    "write_fmat",
    "write_fmat_bundle",
]
