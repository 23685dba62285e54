"""Persistable model bundles: networks, fixed seed, config and region.

A bundle is a zip archive holding a JSON manifest plus raw little-endian
float32 parameter blocks and the optional fixed-seed block.  Entries are
written with fixed metadata so identical bundles are byte-identical.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .config import TrainingConfig
from .images import NPHASE, Micrograph, Region, region_from_json
from .networks import CriticNet, GeneratorNet, SeedTensor, activation_for_kind

BUNDLE_VERSION = 1

METHOD_GOPT = "gopt"
METHOD_WGAN = "wgan"


@dataclass
class ModelBundle:
    generator: GeneratorNet
    critic: CriticNet
    kind: str
    config: TrainingConfig
    method: str
    n_phases: int | None = None
    phase_values: tuple[float, ...] | None = None
    region: Region | None = None
    fixed_seed: SeedTensor | None = None
    source_hash: str = ""
    partial: bool = False

    def check_image(self, m: Micrograph) -> None:
        if m.kind != self.kind:
            raise ValueError(f"bundle was trained on {self.kind} data, got {m.kind}")
        if self.kind == NPHASE and m.n_phases != self.n_phases:
            raise ValueError(
                f"bundle expects {self.n_phases} phases, image has {m.n_phases}"
            )

    def parameter_digest(self) -> str:
        h = hashlib.sha256()
        for net in (self.generator, self.critic):
            for name, t in net.state_dict().items():
                h.update(name.encode())
                h.update(t.detach().cpu().numpy().astype("<f4").tobytes())
        return h.hexdigest()

    def flagged_partial(self) -> "ModelBundle":
        return replace(self, partial=True)


def build_networks(
    kind: str,
    channels: int,
    cfg: TrainingConfig,
    init_rng: torch.Generator | None = None,
) -> tuple[GeneratorNet, CriticNet]:
    g = GeneratorNet(
        channels,
        activation=activation_for_kind(kind),
        widths=cfg.g_widths,
        latent_depth=cfg.latent_depth,
        init_rng=init_rng,
    )
    d = CriticNet(channels, widths=cfg.d_widths, init_rng=init_rng)
    return g, d


def _param_blocks(bundle: ModelBundle) -> tuple[list[dict], bytes]:
    entries = []
    blob = io.BytesIO()
    for owner, net in (("generator", bundle.generator), ("critic", bundle.critic)):
        for name, t in net.state_dict().items():
            arr = t.detach().cpu().numpy().astype("<f4")
            entries.append({"owner": owner, "name": name, "shape": list(arr.shape)})
            blob.write(arr.tobytes())
    return entries, blob.getvalue()


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    entries, params = _param_blocks(bundle)
    seed_bytes = b""
    seed_meta = None
    if bundle.fixed_seed is not None:
        arr = bundle.fixed_seed.values.detach().cpu().numpy().astype("<f4")
        seed_bytes = arr.tobytes()
        seed_meta = {"shape": list(arr.shape)}
    manifest = {
        "v": BUNDLE_VERSION,
        "format": "microinpaint-bundle",
        "method": bundle.method,
        "kind": bundle.kind,
        "n_phases": bundle.n_phases,
        "phase_values": list(bundle.phase_values) if bundle.phase_values else None,
        "config": bundle.config.to_dict(),
        "region": bundle.region.to_json() if bundle.region is not None else None,
        "annulus_width": bundle.region.annulus_width if bundle.region is not None else None,
        "source_hash": bundle.source_hash,
        "partial": bundle.partial,
        "generator": {
            "out_channels": bundle.generator.out_channels,
            "activation": bundle.generator.activation,
            "widths": list(bundle.generator.widths),
            "latent_depth": bundle.generator.latent_depth,
        },
        "critic": {
            "in_channels": bundle.critic.in_channels,
            "widths": list(bundle.critic.widths),
        },
        "params": entries,
        "fixed_seed": seed_meta,
        "blocks_sha256": hashlib.sha256(params + seed_bytes).hexdigest(),
    }
    data = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, payload in (
            ("manifest.json", data),
            ("params.bin", params),
            ("seed.bin", seed_bytes),
        ):
            if name == "seed.bin" and not seed_bytes:
                continue
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, payload)


def load_bundle(path: str | Path) -> ModelBundle:
    with zipfile.ZipFile(path, "r") as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("v") != BUNDLE_VERSION:
            raise ValueError(f"unsupported bundle version: {manifest.get('v')}")
        params = zf.read("params.bin")
        seed_bytes = zf.read("seed.bin") if manifest.get("fixed_seed") else b""
    if hashlib.sha256(params + seed_bytes).hexdigest() != manifest["blocks_sha256"]:
        raise ValueError("corrupted bundle: parameter digest mismatch")

    gmeta, cmeta = manifest["generator"], manifest["critic"]
    g = GeneratorNet(
        gmeta["out_channels"],
        activation=gmeta["activation"],
        widths=tuple(gmeta["widths"]),
        latent_depth=gmeta["latent_depth"],
    )
    d = CriticNet(cmeta["in_channels"], widths=tuple(cmeta["widths"]))

    offset = 0
    states: dict[str, dict[str, torch.Tensor]] = {"generator": {}, "critic": {}}
    for entry in manifest["params"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(params, dtype="<f4", count=n, offset=offset).reshape(entry["shape"])
        offset += n * 4
        states[entry["owner"]][entry["name"]] = torch.from_numpy(arr.copy())
    if offset != len(params):
        raise ValueError("corrupted bundle: trailing parameter bytes")
    g.load_state_dict(states["generator"])
    d.load_state_dict(states["critic"])

    fixed_seed = None
    if manifest.get("fixed_seed"):
        shape = manifest["fixed_seed"]["shape"]
        arr = np.frombuffer(seed_bytes, dtype="<f4").reshape(shape)
        fixed_seed = SeedTensor(torch.from_numpy(arr.copy()))

    region = None
    if manifest.get("region") is not None:
        region = region_from_json(
            manifest["region"], annulus_width=manifest.get("annulus_width") or 16
        )
    return ModelBundle(
        generator=g,
        critic=d,
        kind=manifest["kind"],
        config=TrainingConfig.from_dict(manifest["config"]),
        method=manifest["method"],
        n_phases=manifest["n_phases"],
        phase_values=tuple(manifest["phase_values"]) if manifest["phase_values"] else None,
        region=region,
        fixed_seed=fixed_seed,
        source_hash=manifest["source_hash"],
        partial=manifest.get("partial", False),
    )


def bundle_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
