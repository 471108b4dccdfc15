"""One-shot export of an upstream pretrained encoder checkpoint into a DLT
bundle plus engine vocabulary tables and a conversion manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dlt_writer import write_dlt
from .families import (
    ExportError,
    detect_family,
    expected_shapes,
    extract_engine_config,
    is_ignorable,
    remapping,
    strip_prefix,
)
from .tokenizer_tables import export_tokenizer


@dataclass
class ConversionManifest:
    source: str
    family: str
    config: dict
    tokenizer: dict[str, str]
    remapping: dict[str, str]
    filled: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "family": self.family,
            "config": self.config,
            "tokenizer": self.tokenizer,
            "remapping": dict(sorted(self.remapping.items())),
            "filled": sorted(self.filled),
        }


def _load_state_dict(source: Path) -> dict[str, np.ndarray]:
    st_path = source / "model.safetensors"
    if st_path.exists():
        from safetensors.numpy import load_file

        return {k: np.asarray(v) for k, v in load_file(str(st_path)).items()}
    bin_path = source / "pytorch_model.bin"
    if bin_path.exists():
        import torch

        state = torch.load(bin_path, map_location="cpu", weights_only=True)
        return {k: v.detach().to(torch.float32).numpy() for k, v in state.items()}
    raise ExportError(f"no model.safetensors or pytorch_model.bin in {source}")


def export_checkpoint(
    source: str | Path,
    out: str | Path,
    family: str = "auto",
    pooling: str | None = None,
) -> ConversionManifest:
    """Convert `source` (a standard encoder checkpoint directory) into
    `out/model.dlt` plus vocabulary tables and `out/manifest.json`.

    Every canonical parameter is produced exactly once and shape-checked
    before anything is written; unmappable upstream parameters abort the
    export. Running twice produces byte-identical outputs.
    """
    source = Path(source)
    out = Path(out)
    config_path = source / "config.json"
    if not config_path.exists():
        raise ExportError(f"no config.json in {source}")
    hf_config = json.loads(config_path.read_text(encoding="utf-8"))
    fam = detect_family(hf_config.get("model_type", "") if family == "auto" else family)
    cfg = extract_engine_config(hf_config, fam, pooling)

    raw_state = _load_state_dict(source)
    state: dict[str, np.ndarray] = {}
    for name, arr in raw_state.items():
        stripped = strip_prefix(name)
        if is_ignorable(stripped):
            continue
        state[stripped] = arr

    table = remapping(cfg["layers"])
    shapes = expected_shapes(cfg)
    entries: list[tuple[str, np.ndarray]] = []
    used: set[str] = set()
    manifest = ConversionManifest(
        source=str(source),
        family=fam.name,
        config=cfg,
        tokenizer={"kind": fam.tokenizer_kind},
        remapping={},
    )

    for canonical in shapes:  # canonical order fixes the bundle entry order
        upstream, transform = table[canonical]
        if upstream not in state:
            if canonical == "embed.type":
                # roberta-style sources may omit the token-type table; the
                # engine always adds row 0, so a zero row is a no-op fill.
                entries.append((canonical, np.zeros((1, cfg["hidden"]), dtype=np.float32)))
                manifest.filled.append(canonical)
                continue
            raise ExportError(f"source is missing parameter for {canonical!r} ({upstream!r})")
        arr = np.asarray(state[upstream], dtype=np.float32)
        if transform == "transpose":
            arr = arr.T
        want = shapes[canonical]
        if want[0] == -1:
            ok = arr.ndim == 2 and arr.shape[0] >= 1 and arr.shape[1] == want[1]
        else:
            ok = arr.shape == want
        if not ok:
            raise ExportError(
                f"shape mismatch for {canonical!r}: source {upstream!r} gives "
                f"{arr.shape}, engine expects {want}"
            )
        entries.append((canonical, arr))
        used.add(upstream)
        manifest.remapping[canonical] = upstream

    leftovers = sorted(set(state) - used)
    if leftovers:
        raise ExportError(f"unmappable source parameters: {leftovers}")

    out.mkdir(parents=True, exist_ok=True)
    tok_meta = export_tokenizer(fam.tokenizer_kind, source, out)
    manifest.tokenizer.update(tok_meta)

    metadata = {
        "kind": "encoder",
        "vocab_size": str(cfg["vocab_size"]),
        "hidden": str(cfg["hidden"]),
        "layers": str(cfg["layers"]),
        "heads": str(cfg["heads"]),
        "ffn": str(cfg["ffn"]),
        "max_positions": str(cfg["max_positions"]),
        "layer_norm_eps": repr(cfg["layer_norm_eps"]),
        "position_offset": str(cfg["position_offset"]),
        "pooling": cfg["pooling"],
        "tokenizer_kind": fam.tokenizer_kind,
        "source_family": fam.name,
    }
    metadata.update(tok_meta)
    write_dlt(entries, metadata, out / "model.dlt")
    (out / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return manifest
