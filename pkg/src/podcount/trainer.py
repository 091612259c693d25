"""End-to-end optimization loop with validation-based model selection.

Each step: augment a batch, run the network, match proposals to ground truth
per image, accumulate the composite loss in fixed item order, backpropagate,
and apply one Adam update.  Per epoch, counting MAE on the validation split
picks the best checkpoint (ties go to the earliest epoch).  Everything is
driven by explicit seeds, so a (seed, config, data) triple reproduces the
history bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .backbone import BackboneConfig, variant_config
from .checkpoint import load_checkpoint, save_checkpoint
from .data import AnnotatedImage, augment, item_rng
from .loss import LossConfig, LossReport, cls_loss, loc_loss, total_loss
from .matcher import MatchConfig, match
from .model import PointProposalNetwork
from .optim import AdamState, adam_step
from .tensor import Tensor, no_grad


class NumericFailure(RuntimeError):
    """Training hit a non-finite loss; carries step index and item ids."""

    def __init__(self, step: int, item_ids: list[str]):
        super().__init__(f"non-finite loss at step {step} (items: {', '.join(item_ids)})")
        self.step = step
        self.item_ids = item_ids


@dataclass
class TrainConfig:
    variant: str = "T"
    batch_size: int = 4
    epochs: int = 100
    lr: float = 2e-4
    weight_decay: float = 1e-7
    seed: int = 0
    tau: float = 5e-2
    lambda1: float = 2e-4
    lambda2: float = 0.5
    anchors_per_cell: int = 1
    # free-form overrides for desk-scale variants; None = use the named variant
    embed_dim: int | None = None
    depths: tuple[int, int, int] | None = None
    window: int = 7
    heads: tuple[int, int, int] | None = None
    rel_pos_bias: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.depths is not None:
            self.depths = tuple(int(d) for d in self.depths)
        if self.heads is not None:
            self.heads = tuple(int(h) for h in self.heads)

    def backbone_config(self) -> BackboneConfig:
        cfg = variant_config(self.variant, window=self.window,
                             rel_pos_bias=self.rel_pos_bias)
        if self.embed_dim is not None:
            cfg = BackboneConfig(embed_dim=self.embed_dim,
                                 depths=self.depths or cfg.depths,
                                 window=self.window, heads=self.heads,
                                 rel_pos_bias=self.rel_pos_bias)
        elif self.depths is not None or self.heads is not None:
            cfg = BackboneConfig(embed_dim=cfg.embed_dim,
                                 depths=self.depths or cfg.depths,
                                 window=self.window, heads=self.heads,
                                 rel_pos_bias=self.rel_pos_bias)
        return cfg


@dataclass
class TrainHistory:
    loc: list[float] = field(default_factory=list)
    cls: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)
    val_mae: list[float] = field(default_factory=list)
    best_epoch: int = -1

    def record(self, loc: float, cls: float, total: float, val_mae: float) -> None:
        self.loc.append(loc)
        self.cls.append(cls)
        self.total.append(total)
        self.val_mae.append(val_mae)
        self.best_epoch = int(np.argmin(self.val_mae))  # first minimum wins ties

    def epoch_record(self, epoch: int) -> dict:
        return {
            "epoch": epoch,
            "loc": self.loc[epoch],
            "cls": self.cls[epoch],
            "total": self.total[epoch],
            "val_mae": self.val_mae[epoch],
        }


def build_model(config: TrainConfig, dtype=np.float32) -> PointProposalNetwork:
    rng = np.random.default_rng([config.seed, 0xC0FFEE])
    return PointProposalNetwork(config.backbone_config(),
                                anchors_per_cell=config.anchors_per_cell,
                                rng=rng, dtype=dtype)


def train_step(model: PointProposalNetwork, batch: list[AnnotatedImage],
               match_cfg: MatchConfig, loss_cfg: LossConfig,
               params: dict[str, Tensor], adam: AdamState,
               step_index: int = 0) -> LossReport:
    """One forward / match / loss / backward / Adam update on a batch.

    Batch items are augmented 224 crops (any extents that are a multiple of
    16 work).  Losses are batch means accumulated in item order, which keeps
    runs deterministic.
    """
    images = Tensor(np.stack([item.image for item in batch]))
    proposal_sets = model.propose(images)

    loc_terms = []
    cls_terms = []
    for item, props in zip(batch, proposal_sets):
        if not (np.isfinite(props.points.data).all()
                and np.isfinite(props.confidences.data).all()):
            raise NumericFailure(step_index, [item.id for item in batch])
        result = match(item.points, props, match_cfg)
        if result.pairs:
            gt_order = [i for i, _ in result.pairs]
            prop_order = [j for _, j in result.pairs]
            matched_pts = props.points.take(prop_order, axis=0)
            loc_terms.append(loc_loss(item.points[gt_order], matched_pts))
        else:
            loc_terms.append(loc_loss(np.empty((0, 2)), None))
        positives = [j for _, j in result.pairs]
        cls_terms.append(cls_loss(props.confidences, positives, loss_cfg))

    batch_loc = sum(loc_terms[1:], loc_terms[0]) / len(batch)
    batch_cls = sum(cls_terms[1:], cls_terms[0]) / len(batch)
    batch_total = total_loss(batch_loc, batch_cls, loss_cfg)

    if not np.isfinite(batch_total.data).all():
        raise NumericFailure(step_index, [item.id for item in batch])

    for p in params.values():
        p.zero_grad()
    batch_total.backward()
    grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
             for name, p in params.items()}
    adam_step(params, grads, adam)
    return LossReport(loc=batch_loc.item(), cls=batch_cls.item(),
                      total=batch_total.item())


def validation_mae(model: PointProposalNetwork, items: list[AnnotatedImage],
                   threshold: float = 0.5) -> float:
    """Counting MAE over a validation split at the given confidence cutoff."""
    from .evaluator import infer  # late import; evaluator also imports the model

    errors = []
    with no_grad():
        for item in items:
            _, count = infer(model, item.image, threshold=threshold)
            errors.append(abs(count - item.count))
    return float(np.mean(errors))


def fit(train_items: list[AnnotatedImage], val_items: list[AnnotatedImage],
        config: TrainConfig, out_dir: str | Path | None = None,
        resume: str | Path | None = None,
        log_fn=None) -> tuple[PointProposalNetwork, TrainHistory]:
    """Run the configured number of epochs and return the best model.

    ``out_dir`` (optional) receives ``train_log.jsonl`` (one record per
    epoch), ``last.ckpt`` (for resuming) and ``best.ckpt`` (lowest validation
    MAE).  ``resume`` restores parameters, optimizer state, and epoch
    numbering from a previous ``last.ckpt``.
    """
    if not train_items or not val_items:
        raise ValueError("train and validation splits must be non-empty")

    model = build_model(config)
    params = model.param_dict()
    adam = AdamState.init(params, lr=config.lr, weight_decay=config.weight_decay)
    match_cfg = MatchConfig(tau=config.tau)
    loss_cfg = LossConfig(lambda1=config.lambda1, lambda2=config.lambda2)
    history = TrainHistory()
    start_epoch = 0
    best_state: dict[str, np.ndarray] | None = None
    best_mae = np.inf

    if resume is not None:
        tensors, meta = load_checkpoint(resume)
        model.load_state_dict({k[len("param/"):]: v for k, v in tensors.items()
                               if k.startswith("param/")})
        params = model.param_dict()
        adam = AdamState.init(params, lr=config.lr, weight_decay=config.weight_decay)
        for name in adam.m:
            adam.m[name] = tensors[f"adam.m/{name}"].copy()
            adam.v[name] = tensors[f"adam.v/{name}"].copy()
        adam.step = int(meta["adam_step"])
        start_epoch = int(meta["epoch_next"])
        hist = meta["history"]
        history = TrainHistory(loc=list(hist["loc"]), cls=list(hist["cls"]),
                               total=list(hist["total"]),
                               val_mae=list(hist["val_mae"]),
                               best_epoch=int(hist["best_epoch"]))
        if history.val_mae:
            best_mae = min(history.val_mae)
            # prefer the on-disk best checkpoint; last.ckpt holds the final
            # epoch's weights, which need not be the best ones
            best_ckpt = Path(resume).parent / "best.ckpt"
            if best_ckpt.exists():
                best_tensors, _ = load_checkpoint(best_ckpt)
                best_state = {k[len("param/"):]: v for k, v in best_tensors.items()
                              if k.startswith("param/")}
            else:
                best_state = {k: v.copy() for k, v in model.state_dict().items()}

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_file = out_path / "train_log.jsonl"
        if start_epoch == 0 and log_file.exists():
            log_file.unlink()

    step = start_epoch * max(1, int(np.ceil(len(train_items) / config.batch_size)))
    for epoch in range(start_epoch, config.epochs):
        order = np.random.default_rng([config.seed, 1, epoch]).permutation(len(train_items))
        epoch_loc, epoch_cls, epoch_total = [], [], []
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo: lo + config.batch_size]
            batch = [
                augment(train_items[i], item_rng(config.seed, epoch, train_items[i].id))
                for i in idx
            ]
            report = train_step(model, batch, match_cfg, loss_cfg, params, adam,
                                step_index=step)
            step += 1
            epoch_loc.append(report.loc)
            epoch_cls.append(report.cls)
            epoch_total.append(report.total)
        val = validation_mae(model, val_items)
        history.record(float(np.mean(epoch_loc)), float(np.mean(epoch_cls)),
                       float(np.mean(epoch_total)), val)
        record = history.epoch_record(epoch)
        if log_fn is not None:
            log_fn(record)
        is_new_best = val < best_mae  # strict: ties keep the earliest epoch
        if is_new_best:
            best_mae = val
            best_state = {k: v.copy() for k, v in model.state_dict().items()}
        if out_path is not None:
            with open(out_path / "train_log.jsonl", "a", encoding="utf-8") as f:
                f.write(json.dumps(record, sort_keys=True) + "\n")
            _save_training_checkpoint(out_path / "last.ckpt", model, adam, config,
                                      epoch + 1, history)
            if is_new_best:
                _save_training_checkpoint(out_path / "best.ckpt", model, adam, config,
                                          epoch + 1, history)

    if best_state is not None:
        model.load_state_dict(best_state)
    return model, history


def _save_training_checkpoint(path: Path, model: PointProposalNetwork,
                              adam: AdamState, config: TrainConfig,
                              epoch_next: int, history: TrainHistory) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in model.state_dict().items():
        tensors[f"param/{name}"] = arr
    for name, arr in adam.m.items():
        tensors[f"adam.m/{name}"] = arr
    for name, arr in adam.v.items():
        tensors[f"adam.v/{name}"] = arr
    meta = {
        "config": asdict(config),
        "adam_step": adam.step,
        "epoch_next": epoch_next,
        "history": {
            "loc": history.loc,
            "cls": history.cls,
            "total": history.total,
            "val_mae": history.val_mae,
            "best_epoch": history.best_epoch,
        },
    }
    save_checkpoint(path, tensors, meta)


def save_model(path: str | Path, model: PointProposalNetwork,
               config: TrainConfig, extra_meta: dict | None = None) -> None:
    """Persist parameters plus the config needed to rebuild the network."""
    tensors = {f"param/{name}": arr for name, arr in model.state_dict().items()}
    meta = {"config": asdict(config)}
    if extra_meta:
        meta.update(extra_meta)
    save_checkpoint(path, tensors, meta)


def load_model(path: str | Path) -> tuple[PointProposalNetwork, TrainConfig, dict]:
    """Rebuild a network from any checkpoint written by this module."""
    tensors, meta = load_checkpoint(path)
    cfg_dict = dict(meta["config"])
    for key in ("depths", "heads"):
        if cfg_dict.get(key) is not None:
            cfg_dict[key] = tuple(cfg_dict[key])
    config = TrainConfig(**cfg_dict)
    model = build_model(config)
    model.load_state_dict({k[len("param/"):]: v for k, v in tensors.items()
                           if k.startswith("param/")})
    return model, config, meta
