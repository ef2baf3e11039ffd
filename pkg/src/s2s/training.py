"""Multi-discriminator GAN training.

Per step, every discriminator is updated independently on (real, detached
fake) pairs, then the generator takes one step on the weighted adversarial
loss plus the lambda-scaled L1 term. All log terms run through the stable
logit-form BCE; a non-finite loss aborts the run rather than corrupting
checkpoints.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset as ds
from . import tensor as T
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigError
from .networks import (
    DiscriminatorNet,
    DiscriminatorSpec,
    GeneratorNet,
    build_discriminator,
    build_generator,
)
from .tensor import Adam, Tensor

WEIGHT_SUM_TOL = 1e-9


class TrainingDiverged(RuntimeError):
    """A loss term went non-finite; the run is aborted, nothing is written."""


@dataclass
class TrainConfig:
    discriminators: list[DiscriminatorSpec]
    lam: float = 100.0
    resolution: int = 64
    batch_size: int = 16
    epochs: int = 20
    seed: int = 7
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    base_channels: int = 32
    checkpoint_every: int = 0  # epochs between snapshots; 0 = final only

    def validate(self) -> None:
        if not self.discriminators:
            raise ConfigError("need at least one discriminator")
        total = sum(d.weight for d in self.discriminators)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ConfigError(f"discriminator weights must sum to 1, got {total!r}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")

    @property
    def weights(self) -> list[float]:
        return [d.weight for d in self.discriminators]


@dataclass
class StepRecord:
    step: int
    loss_g: float
    adversarial: tuple[float, ...]
    l1: float
    loss_d: tuple[float, ...]


@dataclass
class TrainReport:
    records: list[StepRecord] = field(default_factory=list)
    wall_time: float = 0.0

    def to_jsonl(self, path) -> None:
        with open(path, "w") as f:
            for r in self.records:
                row = {"step": r.step, "loss_g": r.loss_g, "l1": r.l1}
                for i, v in enumerate(r.adversarial):
                    row[f"adv_{i}"] = v
                for i, v in enumerate(r.loss_d):
                    row[f"loss_d_{i}"] = v
                f.write(json.dumps(row) + "\n")


def _check_finite(value: float, term: str) -> float:
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss term: {term} = {value}")
    return float(value)


def generator_loss_terms(disc_logits: Sequence[Tensor], weights: Sequence[float],
                         fake: Tensor, real: Tensor, lam: float):
    """(total, per-D adversarial terms, l1 term) of the generator objective.

    The adversarial part is -sum_i w_i * mean(log sigma(z_i)), evaluated as
    BCE-with-logits against an all-ones target so saturated discriminators
    cannot overflow.
    """
    if len(disc_logits) != len(weights):
        raise ConfigError(
            f"{len(disc_logits)} logit maps but {len(weights)} weights"
        )
    total_w = sum(weights)
    if abs(total_w - 1.0) > WEIGHT_SUM_TOL:
        raise ConfigError(f"weights must sum to 1, got {total_w!r}")
    adv = [T.bce_with_logits(z, Tensor(np.ones(z.shape, dtype=z.dtype)))
           for z in disc_logits]
    l1 = T.l1_loss(real, fake)
    total = lam * l1
    for w, a in zip(weights, adv):
        total = total + w * a
    return total, adv, l1


def generator_loss(disc_logits: Sequence[Tensor], weights: Sequence[float],
                   fake: Tensor, real: Tensor, lam: float) -> Tensor:
    total, _, _ = generator_loss_terms(disc_logits, weights, fake, real, lam)
    return total


def discriminator_loss(d: DiscriminatorNet, real: Tensor, fake: Tensor,
                       condition: Optional[Tensor] = None) -> Tensor:
    """Half-sum BCE on real-vs-one and fake-vs-zero patch maps.

    The caller passes a detached fake so no gradient reaches the generator.
    """
    real_logits = d(real, condition)
    fake_logits = d(fake, condition)
    ones = Tensor(np.ones(real_logits.shape, dtype=real_logits.dtype))
    zeros = Tensor(np.zeros(fake_logits.shape, dtype=fake_logits.dtype))
    return 0.5 * (T.bce_with_logits(real_logits, ones)
                  + T.bce_with_logits(fake_logits, zeros))


def train_step(gen: GeneratorNet, discs: Sequence[DiscriminatorNet],
               g_opt: Adam, d_opts: Sequence[Adam],
               y: Tensor, x: Tensor, weights: Sequence[float], lam: float,
               step: int = 0) -> StepRecord:
    """One optimization step: all D updates first, then one G update."""
    fake = gen(y)
    fake_detached = fake.detach()

    d_losses = []
    for i, (d, opt) in enumerate(zip(discs, d_opts)):
        opt.zero_grad()
        dl = discriminator_loss(d, x, fake_detached,
                                y if d.conditional else None)
        d_losses.append(_check_finite(dl.item(), f"discriminator {i} loss"))
        dl.backward()
        opt.step()

    logits = [d(fake, y if d.conditional else None) for d in discs]
    total, adv, l1 = generator_loss_terms(logits, weights, fake, x, lam)
    adv_vals = tuple(_check_finite(a.item(), f"adversarial term {i}")
                     for i, a in enumerate(adv))
    l1_val = _check_finite(l1.item(), "l1 term")
    g_val = _check_finite(total.item(), "generator loss")
    g_opt.zero_grad()
    total.backward()
    g_opt.step()

    return StepRecord(step=step, loss_g=g_val, adversarial=adv_vals,
                      l1=l1_val, loss_d=tuple(d_losses))


def build_nets(config: TrainConfig):
    """Seeded generator + discriminators for a config."""
    ss = np.random.SeedSequence(config.seed)
    children = ss.spawn(1 + len(config.discriminators))
    gen = build_generator(config.resolution, seed=children[0],
                          base_channels=config.base_channels)
    discs = [
        build_discriminator(spec, in_channels=1, resolution=config.resolution,
                            seed=children[1 + i],
                            base_channels=config.base_channels)
        for i, spec in enumerate(config.discriminators)
    ]
    return gen, discs


def train(config: TrainConfig, data, out_dir=None):
    """Run the full loop over (y, x) pairs; returns (gen, discs, report).

    ``data`` is a (contours, structures) array pair shaped (N,1,R,R) in the
    (-1,1) range. Deterministic for a fixed config.
    """
    config.validate()
    y_all, x_all = data
    n = len(y_all)
    if n == 0:
        raise ConfigError("dataset is empty")
    if y_all.shape[-1] != config.resolution:
        raise ConfigError(
            f"dataset resolution {y_all.shape[-1]} != config {config.resolution}"
        )

    gen, discs = build_nets(config)
    g_opt = Adam(gen.parameters(), lr=config.lr, beta1=config.beta1,
                 beta2=config.beta2)
    d_opts = [Adam(d.parameters(), lr=config.lr, beta1=config.beta1,
                   beta2=config.beta2) for d in discs]

    report = TrainReport()
    started = time.perf_counter()
    step = 0
    for epoch in range(config.epochs):
        for batch in ds.iter_batches(np.arange(n), config.batch_size,
                                     epoch_seed=(config.seed, epoch)):
            y = Tensor(y_all[batch])
            x = Tensor(x_all[batch])
            record = train_step(gen, discs, g_opt, d_opts, y, x,
                                config.weights, config.lam, step=step)
            report.records.append(record)
            step += 1
        if (out_dir is not None and config.checkpoint_every
                and (epoch + 1) % config.checkpoint_every == 0
                and epoch + 1 < config.epochs):
            save_run(out_dir, gen, discs, config)
    report.wall_time = time.perf_counter() - started

    if out_dir is not None:
        save_run(out_dir, gen, discs, config)
        report.to_jsonl(Path(out_dir) / "train_log.jsonl")
    return gen, discs, report


# -- checkpoint directory layout ----------------------------------------------


def save_run(out_dir, gen: GeneratorNet, discs: Sequence[DiscriminatorNet],
             config: TrainConfig) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_tensors(out / "g.s2s1", gen.state_dict())
    for i, d in enumerate(discs):
        save_tensors(out / f"d{i}.s2s1", d.state_dict())
    meta = {
        "resolution": config.resolution,
        "base_channels": config.base_channels,
        "in_channels": 1,
        "lambda": config.lam,
        "seed": config.seed,
        "discriminators": [
            {
                "patch_size": d.spec.patch_size,
                "weight": d.spec.weight,
                "conditional": d.spec.conditional,
                "effective_patch_size": d.effective_patch_size,
            }
            for d in discs
        ],
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_generator(path) -> GeneratorNet:
    """Rebuild a generator from a checkpoint dir or a g.s2s1 file path."""
    p = Path(path)
    ckpt_file = p / "g.s2s1" if p.is_dir() else p
    meta_file = ckpt_file.parent / "meta.json"
    if not meta_file.exists():
        raise ConfigError(f"missing meta.json next to {ckpt_file}")
    meta = json.loads(meta_file.read_text())
    gen = build_generator(meta["resolution"], seed=0,
                          in_channels=meta.get("in_channels", 1),
                          base_channels=meta["base_channels"])
    gen.load_state_dict(load_tensors(ckpt_file))
    return gen
