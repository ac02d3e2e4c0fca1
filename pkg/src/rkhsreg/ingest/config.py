"""JSON run configuration.

A config file has up to four sections::

    {
      "kernel":       {"sigma": 1.0,
                       "channels": [{"name": "color", "sigma": 1.0,
                                     "lengthscale": 0.1, "form": "squared_exponential"}]},
      "registration": {"init_lengthscale": 0.1, ...},   # RegistrationConfig fields
      "selector":     {"target_min": 3000, ...},        # SelectorConfig fields
      "camera":       {"fx": ..., "fy": ..., "cx": ..., "cy": ..., ...}
    }

Only ``registration.init_lengthscale`` is required. Every other field takes
the default of the matching dataclass. ``kernel.channels`` lists the feature
channels used for registration, in order; an empty list (the default) means
geometry only. The geometric lengthscale always starts at
``registration.init_lengthscale``.

Instead of a path, the name of a shipped profile (``kitti-stereo``,
``tum-rgbd``) can be given.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from ..errors import ConfigError, InvalidArgumentError
from ..kernels import ChannelKernel, KernelParams
from ..registration import RegistrationConfig
from .fast import SelectorConfig
from .images import CameraIntrinsics

SECTIONS = ("kernel", "registration", "selector", "camera")
KERNEL_KEYS = ("sigma", "channels")
CHANNEL_KEYS = ("name", "sigma", "lengthscale", "form")


class RunConfig(NamedTuple):
    kernel: KernelParams
    registration: RegistrationConfig
    selector: SelectorConfig
    camera: CameraIntrinsics | None
    channels: tuple[str, ...]
    digest: str


def profile_names() -> list[str]:
    root = resources.files("rkhsreg") / "profiles"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(source) -> tuple[str, str]:
    path = Path(source)
    if path.is_file():
        return path.read_text(encoding="utf-8"), str(path)
    name = str(source)
    if name in profile_names():
        res = resources.files("rkhsreg") / "profiles" / f"{name}.json"
        return res.read_text(encoding="utf-8"), f"profile:{name}"
    raise ConfigError(f"no config file or profile named {name!r} (profiles: {', '.join(profile_names())})")


def _check_keys(section: str, data, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{section} must be an object")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)} (allowed: {', '.join(allowed)})")


def _typed(section: str, cls, data: dict) -> dict:
    """Check value types against the dataclass field defaults."""
    out = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        default = f.default
        key = f"{section}.{f.name}"
        if isinstance(default, bool) or isinstance(value, bool):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        if isinstance(default, int) and not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            else:
                raise ConfigError(f"{key} must be an integer, got {value!r}")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"{key} must be a string, got {value!r}")
        elif value is not None and not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        out[f.name] = value
    return out


def _build(section: str, cls, data: dict):
    try:
        return cls(**_typed(section, cls, data))
    except InvalidArgumentError as exc:
        raise ConfigError(f"{section}: {exc}") from None
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from None


def parse_config(raw: dict) -> RunConfig:
    _check_keys("config", raw, SECTIONS)
    reg_raw = raw.get("registration")
    if reg_raw is None or (isinstance(reg_raw, dict) and "init_lengthscale" not in reg_raw):
        raise ConfigError("missing required key registration.init_lengthscale")
    names = tuple(f.name for f in dataclasses.fields(RegistrationConfig))
    _check_keys("registration", reg_raw, names)
    registration = _build("registration", RegistrationConfig, reg_raw)

    kern_raw = raw.get("kernel", {})
    _check_keys("kernel", kern_raw, KERNEL_KEYS)
    channels = kern_raw.get("channels", [])
    if not isinstance(channels, list):
        raise ConfigError("kernel.channels must be a list")
    per_channel, channel_names = [], []
    for k, ch in enumerate(channels):
        where = f"kernel.channels[{k}]"
        _check_keys(where, ch, CHANNEL_KEYS)
        if "name" not in ch:
            raise ConfigError(f"missing required key {where}.name")
        if ch["name"] in channel_names:
            raise ConfigError(f"{where}: channel {ch['name']!r} listed twice")
        channel_names.append(ch["name"])
        per_channel.append(_build(where, ChannelKernel, {key: v for key, v in ch.items() if key != "name"}))
    geo = {"lengthscale": registration.init_lengthscale}
    if "sigma" in kern_raw:
        geo["sigma"] = kern_raw["sigma"]
    try:
        kernel = KernelParams(**_typed("kernel", KernelParams, geo), per_channel=tuple(per_channel))
    except InvalidArgumentError as exc:
        raise ConfigError(f"kernel: {exc}") from None

    sel_raw = raw.get("selector", {})
    _check_keys("selector", sel_raw, tuple(f.name for f in dataclasses.fields(SelectorConfig)))
    selector = _build("selector", SelectorConfig, sel_raw)

    camera = None
    if "camera" in raw:
        cam_raw = raw["camera"]
        _check_keys("camera", cam_raw, tuple(f.name for f in dataclasses.fields(CameraIntrinsics)))
        for key in ("fx", "fy", "cx", "cy"):
            if key not in cam_raw:
                raise ConfigError(f"missing required key camera.{key}")
        camera = _build("camera", CameraIntrinsics, cam_raw)

    digest = hashlib.sha256(json.dumps(raw, sort_keys=True).encode("utf-8")).hexdigest()
    return RunConfig(kernel, registration, selector, camera, tuple(channel_names), digest)


def load_config(source) -> RunConfig:
    """Load a config file, or a shipped profile by name."""
    text, where = _resolve(source)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
