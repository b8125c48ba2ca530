from rdfront.storage.artifacts import (
    emit_figure,
    emit_heatmap,
    sha256_file,
    write_csv,
    write_manifest,
    write_text,
)
from rdfront.storage.profiles import (
    front_diagnostics,
    read_profile,
    write_front_diagnostics,
    write_profile,
)
from rdfront.storage.snapshots import (
    decode_snapshot,
    encode_snapshot,
    read_snapshot,
    read_trajectory,
    write_snapshot,
    write_trajectory,
)

__all__ = [
    "decode_snapshot",
    "emit_figure",
    "emit_heatmap",
    "encode_snapshot",
    "front_diagnostics",
    "read_profile",
    "read_snapshot",
    "read_trajectory",
    "sha256_file",
    "write_csv",
    "write_front_diagnostics",
    "write_manifest",
    "write_profile",
    "write_snapshot",
    "write_text",
    "write_trajectory",
]
