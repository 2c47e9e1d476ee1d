"""On-disk formats: dataset directories, checkpoints and evidence exports.

Dataset directory:
    meta.json   generator config, concept map and the anchor bank
    bags.bin    per bag: uint32 N, then N*d features and N*2 coords (<f4)
    index.tsv   bag_id, byte offset, N, label, split, planted indices

Checkpoint: a magic line, a YAML header (length-prefixed) describing every
parameter array, then the arrays as little-endian f32 in header order.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import yaml

from . import __version__
from .constants import DATASET_FORMAT_VERSION
from .coverage import ClassAnchorWeights
from .errors import ContractError, DatasetFormatError
from .grounding import GroundingParams
from .model import ModelState
from .predictor import PredictorParams
from .recovery import EvidenceSubset
from .selector import SelectorParams
from .synthbag import AnchorBank, Bag, Dataset, GenConfig


logger = logging.getLogger(__name__)

META_FILE = "meta.json"
BAGS_FILE = "bags.bin"
INDEX_FILE = "index.tsv"
INDEX_HEADER = ["bag_id", "offset", "num_patches", "label", "split", "planted"]
CHECKPOINT_MAGIC = b"EVSELCKPT\n"
F32 = np.dtype("<f4")

PathLike = Union[str, Path]


def write_dataset(dataset: Dataset, path: PathLike) -> None:
    """Write ``dataset`` into directory ``path`` (created if missing)."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "generator": dataset.config.to_dict(),
        "concept_classes": list(dataset.concept_classes),
        "anchors": {
            "names": list(dataset.anchors.names),
            "vectors": dataset.anchors.anchors.tolist(),
        },
    }
    with open(out / META_FILE, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)

    rows = ["\t".join(INDEX_HEADER)]
    offset = 0
    with open(out / BAGS_FILE, "wb") as f:
        for bag in dataset.bags:
            n = bag.num_patches
            payload = (
                struct.pack("<I", n)
                + np.ascontiguousarray(bag.features, dtype=F32).tobytes()
                + np.ascontiguousarray(bag.coords, dtype=F32).tobytes()
            )
            f.write(payload)
            planted = ",".join(str(i) for i in (bag.planted or []))
            rows.append(f"{bag.id}\t{offset}\t{n}\t{bag.label}\t{bag.split}\t{planted}")
            offset += len(payload)
    with open(out / INDEX_FILE, "w", encoding="utf-8") as f:
        f.write("\n".join(rows) + "\n")
    logger.info("wrote %d bags to %s", len(dataset.bags), out)


def _read_meta(path: Path) -> dict:
    meta_path = path / META_FILE
    if not meta_path.exists():
        raise DatasetFormatError(f"{meta_path} not found")
    try:
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{meta_path}: {e}")
    if meta.get("format_version") != DATASET_FORMAT_VERSION:
        raise DatasetFormatError(f"unsupported dataset format {meta.get('format_version')!r}")
    return meta


def _parse_index_row(line: str, lineno: int):
    fields = line.split("\t")
    bag_id = fields[0] if fields else None
    if len(fields) != len(INDEX_HEADER):
        raise DatasetFormatError(f"index line {lineno}: expected {len(INDEX_HEADER)} fields", bag_id)
    try:
        offset, n, label = int(fields[1]), int(fields[2]), int(fields[3])
        planted = [int(v) for v in fields[5].split(",")] if fields[5] else []
    except ValueError:
        raise DatasetFormatError(f"index line {lineno}: malformed number", bag_id)
    return bag_id, offset, n, label, fields[4], planted


def read_dataset(path: PathLike) -> Dataset:
    """Read a dataset directory written by ``write_dataset``.

    Raises:
        DatasetFormatError: On any malformed file, naming the offending bag
    """
    root = Path(path)
    meta = _read_meta(root)
    try:
        cfg = GenConfig(**meta["generator"])
        bank = AnchorBank(
            anchors=np.asarray(meta["anchors"]["vectors"], dtype=np.float64),
            names=list(meta["anchors"]["names"]),
        )
        concept_classes = [int(c) for c in meta["concept_classes"]]
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"{root / META_FILE}: missing or invalid field {e}")
    d = cfg.feature_dim

    index_path = root / INDEX_FILE
    if not index_path.exists():
        raise DatasetFormatError(f"{index_path} not found")
    blob = (root / BAGS_FILE).read_bytes() if (root / BAGS_FILE).exists() else b""
    lines = index_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].split("\t") != INDEX_HEADER:
        raise DatasetFormatError(f"{index_path}: bad header")

    bags: List[Bag] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        bag_id, offset, n, label, split, planted = _parse_index_row(line, lineno)
        if n < 1:
            raise DatasetFormatError("bag has no patches", bag_id)
        size = 4 + 4 * n * (d + 2)
        if offset < 0 or offset + size > len(blob):
            raise DatasetFormatError("record extends past the end of bags.bin", bag_id)
        (stored,) = struct.unpack_from("<I", blob, offset)
        if stored != n:
            raise DatasetFormatError(f"length prefix {stored} disagrees with index {n}", bag_id)
        features = np.frombuffer(blob, dtype=F32, count=n * d, offset=offset + 4).reshape(n, d).copy()
        coords = np.frombuffer(blob, dtype=F32, count=n * 2, offset=offset + 4 + 4 * n * d).reshape(n, 2).copy()
        bag = Bag(id=bag_id, features=features, coords=coords, label=label, planted=planted, split=split)
        try:
            bag.validate(cfg.num_classes)
        except ContractError as e:
            raise DatasetFormatError(str(e), bag_id)
        bags.append(bag)

    logger.debug("read %d bags from %s", len(bags), root)
    return Dataset(bags=bags, anchors=bank, concept_classes=concept_classes, config=cfg)


def _array_specs(state: ModelState):
    return [(name, np.asarray(value)) for name, value in state.named_arrays().items()]


def save_checkpoint(state: ModelState, path: PathLike, extra: Optional[Dict] = None) -> None:
    """Write ``state``; parameters are stored as f32, anchors exactly in the header."""
    specs = _array_specs(state)
    header = {
        "version": __version__,
        "mode": state.mode,
        "temperature": float(state.temperature),
        "use_selector": bool(state.use_selector),
        "grounding": {
            "gamma": float(state.grounding.gamma),
            "delta": float(state.grounding.delta),
            "constrained": bool(state.grounding.constrained),
            "bridge_input": state.grounding.bridge_input,
        },
        "selector": {"center": float(state.selector.center)},
        "anchors": {
            "names": list(state.anchors.names),
            "vectors": state.anchors.anchors.tolist(),
        },
        "arrays": [{"name": name, "shape": list(value.shape)} for name, value in specs],
        "extra": extra or {},
    }
    text = yaml.dump(header, default_flow_style=False, sort_keys=False).encode("utf-8")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Q", len(text)))
        f.write(text)
        for _, value in specs:
            f.write(np.ascontiguousarray(value, dtype=F32).tobytes())
    logger.info("saved checkpoint to %s", out)


def _read_header(source: Path):
    """Parsed YAML header, the raw bytes and the offset where the arrays start."""
    if not source.exists():
        raise DatasetFormatError(f"checkpoint {source} not found")
    blob = source.read_bytes()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise DatasetFormatError(f"{source} is not a checkpoint")
    start = len(CHECKPOINT_MAGIC)
    if len(blob) < start + 8:
        raise DatasetFormatError(f"{source}: truncated header")
    (length,) = struct.unpack_from("<Q", blob, start)
    if start + 8 + length > len(blob):
        raise DatasetFormatError(f"{source}: truncated header")
    try:
        header = yaml.safe_load(blob[start + 8:start + 8 + length].decode("utf-8"))
    except (yaml.YAMLError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"{source}: bad header: {e}")
    if not isinstance(header, dict) or not isinstance(header.get("arrays"), list):
        raise DatasetFormatError(f"{source}: header is not a checkpoint description")
    return header, blob, start + 8 + length


def load_checkpoint(path: PathLike) -> ModelState:
    """Read a checkpoint written by ``save_checkpoint``.

    Raises:
        DatasetFormatError: If the file is truncated or not a checkpoint
    """
    source = Path(path)
    header, blob, offset = _read_header(source)
    arrays: Dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 4 * count > len(blob):
            raise DatasetFormatError(f"{source}: truncated payload at {entry['name']}")
        values = np.frombuffer(blob, dtype=F32, count=count, offset=offset)
        arrays[entry["name"]] = values.astype(np.float64).reshape(shape)
        offset += 4 * count

    try:
        g = header["grounding"]
        return ModelState(
            predictor=PredictorParams(
                W1=arrays["predictor.W1"], w2=arrays["predictor.w2"],
                Wc=arrays["predictor.Wc"], b=arrays["predictor.b"],
            ),
            grounding=GroundingParams(
                U=arrays["grounding.U"], V=arrays["grounding.V"], B=arrays["grounding.B"],
                gamma=g["gamma"], delta=g["delta"],
                constrained=g["constrained"], bridge_input=g["bridge_input"],
            ),
            selector=SelectorParams(
                W=arrays["selector.W"], c=arrays["selector.c"],
                v=arrays["selector.v"], o=arrays["selector.o"],
                center=header["selector"]["center"],
            ),
            weights=ClassAnchorWeights(raw=arrays["weights.raw"]),
            anchors=AnchorBank(
                anchors=np.asarray(header["anchors"]["vectors"], dtype=np.float64),
                names=list(header["anchors"]["names"]),
            ),
            mode=header["mode"],
            temperature=header["temperature"],
            use_selector=header["use_selector"],
        )
    except (KeyError, TypeError) as e:
        raise DatasetFormatError(f"{source}: missing field {e}")


def read_checkpoint_extra(path: PathLike) -> Dict:
    """The free-form ``extra`` section of a checkpoint header (training config, history)."""
    header, _, _ = _read_header(Path(path))
    return header.get("extra") or {}


def export_evidence(records: Dict[str, EvidenceSubset], path: PathLike) -> None:
    """One JSON line per bag, in the given order."""
    with open(path, "w", encoding="utf-8") as f:
        for bag_id, subset in records.items():
            f.write(json.dumps(subset.to_record(bag_id), sort_keys=True) + "\n")


def read_evidence(path: PathLike) -> Dict[str, EvidenceSubset]:
    """Parse an evidence export back into subsets keyed by bag id."""
    result: Dict[str, EvidenceSubset] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                result[record["bag_id"]] = EvidenceSubset(
                    indices=[int(i) for i in record["indices"]],
                    provenance=list(record["provenance"]),
                    coverage=float(record["coverage"]),
                    saturated=bool(record["saturated"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise DatasetFormatError(f"{path} line {lineno}: {e}")
    return result
