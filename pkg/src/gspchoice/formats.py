"""On-disk formats: offer-set and transaction CSVs, JSON model files.

Floats go through ``repr`` (via :mod:`json`), which round-trips exactly, so a
reloaded model predicts bit-for-bit what the saved one did.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .core import Behavior, ChoiceModel, ModelError, OfferSet, Transaction
from .datagen import GroundTruth, GspType, GtKind
from .halo_mnl import InteractionMatrix

FORMAT_VERSION = 1


def _write_text(path: str | Path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def offer_set_ids(offer_sets: Sequence[OfferSet]) -> dict[OfferSet, int]:
    """Stable ids: position in canonical sorted order."""
    return {s: k for k, s in enumerate(sorted(set(offer_sets)))}


def write_offer_sets(path: str | Path, offer_sets: Sequence[OfferSet]) -> dict[OfferSet, int]:
    ids = offer_set_ids(offer_sets)
    lines = ["offer_set_id,items"]
    lines += [f"{k},{';'.join(map(str, s.items))}" for s, k in ids.items()]
    _write_text(path, "\n".join(lines) + "\n")
    return ids


def read_offer_sets(path: str | Path) -> dict[int, OfferSet]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["offer_set_id", "items"]:
            raise ModelError(f"{path}: expected header offer_set_id,items")
        out = {}
        for row in reader:
            key = int(row["offer_set_id"])
            if key in out:
                raise ModelError(f"{path}: duplicate offer_set_id {key}")
            out[key] = OfferSet.of(int(j) for j in row["items"].split(";") if j != "")
        return out


def write_transactions(path: str | Path, transactions: Sequence[Transaction],
                       ids: dict[OfferSet, int]) -> None:
    lines = ["offer_set_id,chosen"]
    lines += [f"{ids[t.offer_set]},{t.chosen}" for t in transactions]
    _write_text(path, "\n".join(lines) + "\n")


def read_transactions(path: str | Path, offer_sets: dict[int, OfferSet]) -> list[Transaction]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["offer_set_id", "chosen"]:
            raise ModelError(f"{path}: expected header offer_set_id,chosen")
        out = []
        for row in reader:
            key = int(row["offer_set_id"])
            if key not in offer_sets:
                raise ModelError(f"{path}: unknown offer_set_id {key}")
            out.append(Transaction(offer_sets[key], int(row["chosen"])))
    if not out:
        raise ModelError(f"{path}: no transactions")
    return out


def _behaviors_payload(model: ChoiceModel) -> list[dict[str, Any]]:
    return [{**b.to_dict(), "weight": float(w)} for b, w in zip(model.behaviors, model.weights)]


def model_to_dict(obj: ChoiceModel | InteractionMatrix | GroundTruth, n_products: int,
                  extra: dict[str, Any] | None = None) -> dict[str, Any]:
    out: dict[str, Any] = {"format_version": FORMAT_VERSION, "n_products": n_products}
    if isinstance(obj, ChoiceModel):
        out["kind"] = "behavior_mixture"
        out["behaviors"] = _behaviors_payload(obj)
    elif isinstance(obj, InteractionMatrix):
        out["kind"] = "halo_mnl"
        out["segments"] = [{"weight": 1.0, "u": obj.u.tolist()}]
    elif isinstance(obj, GroundTruth):
        out["kind"] = "ground_truth"
        out["ground_truth"] = obj.kind.value
        if obj.kind is GtKind.GSP:
            out["types"] = [{"ranking": list(t.ranking), "level": t.level, "weight": t.weight}
                            for t in obj.types]
        else:
            out["segments"] = [{"weight": w, "u": u.u.tolist()} for u, w in obj.segments]
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    if extra:
        out["info"] = extra
    return out


def model_from_dict(data: dict[str, Any]) -> ChoiceModel | InteractionMatrix | GroundTruth:
    if data.get("format_version") != FORMAT_VERSION:
        raise ModelError(f"unsupported model format version {data.get('format_version')!r}")
    kind = data.get("kind")
    n = int(data["n_products"])
    if kind == "behavior_mixture":
        rows = data["behaviors"]
        behaviors = tuple(Behavior(tuple(r["ranked"]), frozenset(r["indifference"]), int(r["level"]))
                          for r in rows)
        for b in behaviors:
            b.validate(n)
        return ChoiceModel(behaviors, np.array([float(r["weight"]) for r in rows]))
    if kind == "halo_mnl":
        (segment,) = data["segments"]
        return InteractionMatrix(np.array(segment["u"], dtype=float))
    if kind == "ground_truth":
        if data["ground_truth"] == GtKind.GSP.value:
            types = tuple(GspType(tuple(t["ranking"]), int(t["level"]), float(t["weight"]))
                          for t in data["types"])
            return GroundTruth(GtKind.GSP, n, types=types)
        segments = tuple((InteractionMatrix(np.array(s["u"], dtype=float)), float(s["weight"]))
                         for s in data["segments"])
        return GroundTruth(GtKind.HALO_MNL, n, segments=segments)
    raise ModelError(f"unknown model kind {kind!r}")


def dumps(data: dict[str, Any]) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def save_model(path: str | Path, obj: ChoiceModel | InteractionMatrix | GroundTruth,
               n_products: int, extra: dict[str, Any] | None = None) -> None:
    _write_text(path, dumps(model_to_dict(obj, n_products, extra)))


def load_model(path: str | Path) -> tuple[ChoiceModel | InteractionMatrix | GroundTruth, int]:
    """Model object and catalog size."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: not a JSON model file ({exc})") from exc
    return model_from_dict(data), int(data["n_products"])


__all__ = [
    "FORMAT_VERSION",
    "dumps",
    "load_model",
    "model_from_dict",
    "model_to_dict",
    "offer_set_ids",
    "read_offer_sets",
    "read_transactions",
    "save_model",
    "write_offer_sets",
    "write_transactions",
]
