"""Parameter checkpoints: ``manifest.txt`` of key=value lines plus one raw
little-endian float32 file per named parameter (file name = parameter path)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .discriminators import PatchDiscriminator, RegionDiscriminator
from .errors import LoadError, ParseError
from .generator import FlameGenerator, LatentGenerator, ResnetGenerator, UNetGenerator

MODEL_KINDS = {
    cls.kind: cls
    for cls in (UNetGenerator, ResnetGenerator, LatentGenerator, FlameGenerator,
                PatchDiscriminator, RegionDiscriminator)
}


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(s: str):
    s = s.strip()
    if s in ("true", "false"):
        return s == "true"
    if s in ("none", ""):
        return None
    if "," in s:
        return tuple(parse_value(p) for p in s.split(","))
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def write_kv(path, items: dict) -> None:
    Path(path).write_text("".join(f"{k}={format_value(v)}\n" for k, v in items.items()))


def read_kv(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing {path}")
    out = {}
    for i, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(path, i, "expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_tensor(path, t: torch.Tensor) -> None:
    Path(path).write_bytes(t.detach().cpu().to(torch.float32).numpy().astype("<f4").tobytes())


def read_tensor(path, like: torch.Tensor) -> torch.Tensor:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"missing parameter file {path}")
    arr = np.frombuffer(path.read_bytes(), dtype="<f4")
    if arr.size != like.numel():
        raise LoadError(f"{path}: {arr.size} values, expected {like.numel()}")
    return torch.from_numpy(arr.astype(np.float32).reshape(like.shape)).to(like.dtype)


def save_module(module: torch.nn.Module, directory, extra: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_kv(directory / "manifest.txt", {**module.config(), **(extra or {})})
    for name, t in module.state_dict().items():
        write_tensor(directory / name, t)


def build_module(config: dict) -> torch.nn.Module:
    config = dict(config)
    kind = config.pop("kind", None)
    if kind not in MODEL_KINDS:
        raise LoadError(f"unknown model kind {kind!r}")
    cls = MODEL_KINDS[kind]
    frozen = config.pop("frozen", False)
    module = cls(**config)
    if frozen:
        module.freeze()
    return module


def load_module(directory) -> torch.nn.Module:
    """Rebuild a module from its manifest and read its parameters back."""
    directory = Path(directory)
    raw = read_kv(directory / "manifest.txt")
    arch = {k: parse_value(v) for k, v in raw.items()}
    arch = _constructor_args(arch)
    module = build_module(arch)
    state = {name: read_tensor(directory / name, t) for name, t in module.state_dict().items()}
    module.load_state_dict(state)
    return module


def _constructor_args(arch: dict) -> dict:
    import inspect

    cls = MODEL_KINDS.get(arch.get("kind"))
    if cls is None:
        raise LoadError(f"unknown model kind {arch.get('kind')!r}")
    accepted = set(inspect.signature(cls.__init__).parameters) - {"self"}
    out = {k: v for k, v in arch.items() if k in accepted or k in ("kind", "frozen")}
    for k in ("widths",):
        if k in out and not isinstance(out[k], tuple):
            out[k] = (out[k],)
    return out
