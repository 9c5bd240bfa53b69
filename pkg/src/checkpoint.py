"""
Checkpoint container
Layout: magic b"CACK", u32 index length, UTF-8 JSON index, then little-endian float32 tensor data
"""
import copy
import json
import logging
import struct
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel, ConfigDict, Field

from .encoders import CattleActModel
from .errors import CheckpointMismatch
from .file_matcher import require_file
from .schemas import ACTION_CLASSES, INTERACTION_CLASSES, EncoderConfig

logger = logging.getLogger(__name__)

MAGIC = b"CACK"
FORMAT_VERSION = 1


class TensorEntry(BaseModel):
    name: str
    shape: List[int]
    offset: int = Field(description="Byte offset into the data section")
    count: int


class CheckpointIndex(BaseModel):
    """JSON index stored ahead of the tensor data"""
    version: int = FORMAT_VERSION
    stage: str = "pretrain"
    encoder: EncoderConfig
    embedding_dim: int
    action_classes: List[str]
    interaction_classes: List[str]
    step: int = 0
    metrics: Dict[str, float] = Field(default_factory=dict)
    config: Dict = Field(default_factory=dict, description="Echo of the training config")
    tensors: List[TensorEntry] = Field(default_factory=list)


class Checkpoint(BaseModel):
    """Model parameters plus the config echo, step counter and metrics snapshot"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: CattleActModel
    stage: str = "pretrain"
    step: int = 0
    metrics: Dict[str, float] = Field(default_factory=dict)
    config: Dict = Field(default_factory=dict)
    action_classes: List[str] = Field(default_factory=lambda: list(ACTION_CLASSES))
    interaction_classes: List[str] = Field(default_factory=lambda: list(INTERACTION_CLASSES))

    @property
    def embedding_dim(self) -> int:
        return self.model.embedding_dim

    def require_class_order(self) -> None:
        """CheckpointMismatch unless the stored class orders match the manifest taxonomy"""
        if tuple(self.action_classes) != ACTION_CLASSES:
            raise CheckpointMismatch(f"action class order {self.action_classes} != {list(ACTION_CLASSES)}")
        if tuple(self.interaction_classes) != INTERACTION_CLASSES:
            raise CheckpointMismatch(
                f"interaction class order {self.interaction_classes} != {list(INTERACTION_CLASSES)}"
            )

    def copy_model(self) -> CattleActModel:
        """Independent copy of the model (for fine-tuning without touching this checkpoint)"""
        return copy.deepcopy(self.model)

    def to_bytes(self) -> bytes:
        """
        Serialize to the CACK container

        The JSON index is written with sorted keys and compact separators so
        that identical parameters always give identical bytes.
        """
        entries = []
        chunks = []
        offset = 0
        for name, tensor in self.model.state_dict().items():
            data = tensor.detach().cpu().numpy().astype("<f4", copy=False).tobytes()
            entries.append(TensorEntry(name=name, shape=list(tensor.shape), offset=offset, count=tensor.numel()))
            chunks.append(data)
            offset += len(data)

        index = CheckpointIndex(
            stage=self.stage,
            encoder=self.model.config,
            embedding_dim=self.model.embedding_dim,
            action_classes=list(self.action_classes),
            interaction_classes=list(self.interaction_classes),
            step=self.step,
            metrics=self.metrics,
            config=self.config,
            tensors=entries,
        )
        index_bytes = json.dumps(index.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + struct.pack("<I", len(index_bytes)) + index_bytes + b"".join(chunks)

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        logger.info(f"Saved {self.stage} checkpoint (step {self.step}) to {path}")
        return path

    @classmethod
    def from_bytes(cls, data: bytes, expected_dim: Optional[int] = None) -> "Checkpoint":
        """
        Parse a CACK container

        Args:
            data: Raw file content
            expected_dim: Embedding dimension the caller requires, if any

        Returns:
            Checkpoint with a model in inference mode
        """
        if data[:4] != MAGIC:
            raise CheckpointMismatch(f"not a checkpoint (magic {data[:4]!r}, expected {MAGIC!r})")
        (index_len,) = struct.unpack("<I", data[4:8])
        try:
            index = CheckpointIndex.model_validate_json(data[8:8 + index_len])
        except Exception as e:
            raise CheckpointMismatch(f"corrupt checkpoint index: {e}")

        if index.version != FORMAT_VERSION:
            raise CheckpointMismatch(f"unsupported checkpoint version {index.version}")
        if expected_dim is not None and index.embedding_dim != expected_dim:
            raise CheckpointMismatch(f"checkpoint has D={index.embedding_dim}, expected D={expected_dim}")

        model = CattleActModel(index.encoder)
        expected = model.state_dict()
        payload = memoryview(data)[8 + index_len:]
        state = {}
        for entry in index.tensors:
            if entry.name not in expected:
                raise CheckpointMismatch(f"unexpected tensor '{entry.name}'")
            if list(expected[entry.name].shape) != entry.shape:
                raise CheckpointMismatch(
                    f"tensor '{entry.name}' has shape {entry.shape}, model expects {list(expected[entry.name].shape)}"
                )
            end = entry.offset + 4 * entry.count
            if end > len(payload):
                raise CheckpointMismatch(f"tensor '{entry.name}' extends past the end of the file")
            array = np.frombuffer(payload[entry.offset:end], dtype="<f4").reshape(entry.shape)
            state[entry.name] = torch.from_numpy(array.astype(np.float32))

        missing = sorted(set(expected) - set(state))
        if missing:
            raise CheckpointMismatch(f"checkpoint is missing tensors: {missing[:5]}")

        model.load_state_dict(state)
        model.eval()
        checkpoint = cls(model=model, stage=index.stage, step=index.step, metrics=index.metrics, config=index.config,
                         action_classes=index.action_classes, interaction_classes=index.interaction_classes)
        checkpoint.require_class_order()
        return checkpoint

    @classmethod
    def load(cls, path: Union[str, Path], expected_dim: Optional[int] = None) -> "Checkpoint":
        path = require_file(path, "Checkpoint")
        checkpoint = cls.from_bytes(path.read_bytes(), expected_dim)
        logger.info(f"Loaded {checkpoint.stage} checkpoint (step {checkpoint.step}) from {path}")
        return checkpoint
