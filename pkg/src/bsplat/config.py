"""Run configuration: every hyperparameter and engineering knob in one record.

The record is in serializable plain-data form so a run can be reproduced from
its checkpoint alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field


OPEN = "open"
CLOSED = "closed"

DEFAULT_ITERS = {OPEN: 15_000, CLOSED: 10_000}
DEFAULT_ADAPT_UNTIL = {OPEN: 14_000, CLOSED: 9_200}


@dataclass
class TrainerConfig:
    """All knobs of a vectorization run.

    ``iters`` and ``adapt_until`` default to mode-dependent values
    (open: 15000 / 14000, closed: 10000 / 9200) when left at None.

    ``lr_points`` is expressed per normalized canvas unit; the effective
    pixel-space rate is ``lr_points * canvas_w`` for x and
    ``lr_points * canvas_h`` for y (equivalent to running Adam on points
    stored in [0,1] coordinates).
    """

    mode: str = OPEN
    n_curves: int = 256
    iters: int | None = None

    # learning rates (Adam, per parameter class)
    lr_color: float = 0.01
    lr_points: float = 2e-4
    lr_opacity: float = 0.1
    lr_width: float = 2e-3

    # step-decay schedule applied to all rates
    lr_decay_every: int = 5_000
    lr_decay_factor: float = 0.5

    # adaptive prune/densify
    adapt_enabled: bool = True
    adapt_every: int = 400
    adapt_until: int | None = None
    opacity_threshold: float = 0.02
    opacity_threshold_start: float | None = None  # set to e.g. 0.05 for a linear decay schedule
    area_threshold: float = 4.0
    mid_dip_ratio: float = 0.5
    color_sim_threshold: float = 0.05
    aabb_overlap_threshold: float = 0.9

    # curve -> gaussian sampling
    samples_per_segment: int = 32   # K
    interp_curves: int = 20         # R, interior curves per closed region
    rho: float = 3.0
    sigma_floor: float = 0.3
    width_min: float = 0.5
    width_init: float = 2.0
    opacity_init: float = 0.9
    opacity_count: int = 3          # 1 ties the three opacity slots together
    init_color: str = "target"      # "target" | "random"

    # rasterizer
    tile_size: int = 16
    t_eps: float = 1e-6
    alpha_max: float = 0.99
    radius_mult: float = 6.0
    background: tuple = (1.0, 1.0, 1.0)

    # loss
    lambda1: float = 1.0
    lambda2: float = 0.01
    xing_hard_sign: bool = False

    # run control
    seed: int = 0
    trace_every: int = 100
    threads: int = 0                # 0 = all available cores
    deterministic: bool = True
    dtype: str = "float32"          # render precision; gradient checks force float64

    def __post_init__(self):
        if self.mode not in (OPEN, CLOSED):
            raise ValueError(f"mode must be 'open' or 'closed', got {self.mode!r}")
        if self.opacity_count not in (1, 3):
            raise ValueError(f"opacity_count must be 1 or 3, got {self.opacity_count}")
        if self.init_color not in ("target", "random"):
            raise ValueError(f"init_color must be 'target' or 'random', got {self.init_color!r}")
        for name in ("lr_color", "lr_points", "lr_opacity", "lr_width"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.samples_per_segment < 2:
            raise ValueError("samples_per_segment must be >= 2")
        if self.interp_curves < 0:
            raise ValueError("interp_curves must be >= 0")
        if self.width_min < self.sigma_floor:
            raise ValueError("width_min must be >= sigma_floor (stroke sigma_y is the width)")
        if self.resolved_adapt_until() >= self.resolved_iters() and self.adapt_enabled \
                and self.resolved_iters() > 0:
            # adapt_until strictly below iters keeps a stabilization tail
            if self.adapt_until is not None:
                raise ValueError("adapt_until must be < iters")

    def resolved_iters(self) -> int:
        return DEFAULT_ITERS[self.mode] if self.iters is None else self.iters

    def resolved_adapt_until(self) -> int:
        if self.adapt_until is not None:
            return self.adapt_until
        return min(DEFAULT_ADAPT_UNTIL[self.mode], max(self.resolved_iters() - 1, 0))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "background" in d:
            d = {**d, "background": tuple(d["background"])}
        return cls(**d)

    def replace(self, **kw) -> "TrainerConfig":
        return dataclasses.replace(self, **kw)
