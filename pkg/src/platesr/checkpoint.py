"""Single-file npz checkpoints: a JSON config string plus named arrays."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import CheckpointError

_CONFIG_KEY = "__config__"
_PARAM_PREFIX = "param."


def save_checkpoint(path: str | os.PathLike, config: dict, arrays: dict[str, np.ndarray]) -> None:
    payload = {_CONFIG_KEY: np.frombuffer(
        json.dumps(config, sort_keys=True).encode("ascii"), dtype=np.uint8
    )}
    for name, arr in arrays.items():
        payload[_PARAM_PREFIX + name] = np.asarray(arr)
    np.savez(path, **payload)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        with np.load(path) as data:
            if _CONFIG_KEY not in data:
                raise CheckpointError(f"{path}: missing {_CONFIG_KEY} entry")
            config = json.loads(bytes(data[_CONFIG_KEY]).decode("ascii"))
            arrays = {
                name[len(_PARAM_PREFIX):]: data[name]
                for name in data.files
                if name.startswith(_PARAM_PREFIX)
            }
    except CheckpointError:
        raise
    except (OSError, ValueError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    return config, arrays


def expect_kind(config: dict, kind: str, path: str | os.PathLike) -> None:
    got = config.get("kind")
    if got != kind:
        raise CheckpointError(f"{path}: checkpoint kind {got!r}, expected {kind!r}")


def match_state(
    arrays: dict[str, np.ndarray],
    expected_shapes: dict[str, tuple[int, ...]],
    path: str | os.PathLike,
) -> None:
    """Fail loudly if parameter names or shapes disagree in either direction."""
    missing = sorted(set(expected_shapes) - set(arrays))
    extra = sorted(set(arrays) - set(expected_shapes))
    if missing or extra:
        raise CheckpointError(
            f"{path}: parameter names mismatch (missing: {missing or 'none'}, "
            f"unexpected: {extra or 'none'})"
        )
    for name, shape in expected_shapes.items():
        if tuple(arrays[name].shape) != tuple(shape):
            raise CheckpointError(
                f"{path}: parameter {name} has shape {tuple(arrays[name].shape)}, "
                f"expected {tuple(shape)}"
            )
