"""Configuration and report models for planesweep-glr."""

from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator


class Variant(str, Enum):
    """Weight layout of the global latent rendering stages."""

    SHARED = "shared"
    SPECIALIZED = "specialized"


class UpsampleMode(str, Enum):
    """Interpolation used by the upsampling head."""

    NEAREST = "nearest"
    BILINEAR = "bilinear"


class SamplingMode(str, Enum):
    """Placement of depth planes between the near and far bounds."""

    UNIFORM_DEPTH = "depth"
    UNIFORM_DISPARITY = "disparity"


class LossSchedule(str, Enum):
    """Training loss selection."""

    SCHEDULE = "schedule"  # l2, then l1 for the last 10% of steps
    L1 = "l1"
    L2 = "l2"


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


class ModelConfig(BaseModel):
    """Architecture hyperparameters of the convolutional renderer."""

    model_config = ConfigDict(frozen=True)

    num_depths: int = Field(default=128, ge=1, description="Number of depth planes D")
    group_size: int = Field(default=4, ge=1, description="Depth planes per group G")
    channels: int = Field(default=128, ge=1, description="Base channel count C")
    num_views: int = Field(default=2, ge=1, description="Number of input views V")
    variant: Variant = Field(default=Variant.SHARED, description="Rendering weight layout")
    upsample_mode: UpsampleMode = Field(default=UpsampleMode.NEAREST, description="Upsampling interpolation")
    with_positional: bool = Field(default=True, description="Append global pixel coordinates")
    with_angular: bool = Field(default=True, description="Append the angular encoding channel")

    @model_validator(mode="after")
    def _check_grouping(self) -> "ModelConfig":
        if self.num_depths % self.group_size != 0:
            raise ValueError(
                f"D={self.num_depths} is not divisible by G={self.group_size}"
            )
        groups = self.num_depths // self.group_size
        if groups < 2 or not _is_power_of_two(groups):
            raise ValueError(f"D_G={groups} must be a power of two >= 2")
        return self

    @property
    def num_groups(self) -> int:
        """Number of depth groups D_G."""
        return self.num_depths // self.group_size

    @property
    def color_channels(self) -> int:
        """Channels per (depth, view) PSV slice."""
        return 4 if self.with_angular else 3

    @property
    def input_channels(self) -> int:
        """Channels of one grouped PSV depth group fed to the network."""
        extra = 2 if self.with_positional else 0
        return self.color_channels * self.group_size * self.num_views + extra

    @property
    def render_stages(self) -> int:
        """Number of pairwise depth-collapsing stages, log2(D_G)."""
        return self.num_groups.bit_length() - 1


class TrainConfig(BaseModel):
    """Training run configuration.

    Field aliases are the keys of the ``key = value`` config file format.
    """

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    scene_dirs: list[str] = Field(default_factory=list, alias="scene_dir", description="Scene directories")
    input_views: list[int] = Field(default_factory=list, description="View ids used as inputs")
    target_views: list[int] = Field(default_factory=list, description="View ids used as training targets")
    num_depths: int = Field(default=32, alias="D", description="Number of depth planes")
    group_size: int = Field(default=2, alias="G", description="Depth planes per group")
    channels: int = Field(default=16, alias="C", description="Base channel count")
    variant: Variant = Field(default=Variant.SHARED, description="Rendering weight layout")
    upsample: UpsampleMode = Field(default=UpsampleMode.NEAREST, description="Upsampling interpolation")
    pos_enc: bool = Field(default=True, description="Positional encoding channels")
    ang_enc: bool = Field(default=True, description="Angular encoding channel")
    near: float | None = Field(default=None, description="Near bound (defaults to the scene bounds file)")
    far: float | None = Field(default=None, description="Far bound (defaults to the scene bounds file)")
    sampling: SamplingMode = Field(default=SamplingMode.UNIFORM_DEPTH, description="Depth plane placement")
    patch: int = Field(default=64, ge=4, description="Square training patch size in pixels")
    batch: int = Field(default=1, ge=1, description="Patches averaged per optimizer step")
    steps: int = Field(default=1000, ge=1, description="Total optimizer steps")
    lr: float = Field(default=1.5e-4, gt=0, description="Base learning rate")
    final_drop: bool = Field(default=False, description="Drop the lr to base/100 for the last 5%")
    clip_norm: float = Field(default=1.0, gt=0, description="Global gradient norm threshold")
    seed: int = Field(default=0, description="Random seed")
    loss: LossSchedule = Field(default=LossSchedule.SCHEDULE, description="Loss selection")
    slices: int = Field(default=1, ge=1, description="Split each patch into slices x slices pieces")
    ckpt_every: int = Field(default=0, ge=0, description="Checkpoint cadence in steps (0 = final only)")
    log_every: int = Field(default=10, ge=1, description="Console log cadence in steps")
    eval_every: int = Field(default=0, ge=0, description="Target PSNR/SSIM cadence in steps (0 = off)")
    out_dir: str = Field(default="runs/glr", description="Output directory")

    @field_validator("patch")
    @classmethod
    def _patch_divisible(cls, value: int) -> int:
        if value % 4 != 0:
            raise ValueError(f"patch={value} must be divisible by 4")
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "TrainConfig":
        if self.near is not None and self.far is not None and not 0 < self.near < self.far:
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        if (self.patch // self.slices) % 4 != 0 or self.patch % self.slices != 0:
            raise ValueError(
                f"patch={self.patch} cannot be sliced {self.slices}x{self.slices} into multiples of 4"
            )
        overlap = set(self.input_views) & set(self.target_views)
        if overlap:
            raise ValueError(f"views {sorted(overlap)} are both inputs and targets")
        return self

    def to_model_config(self) -> ModelConfig:
        """Derive the architecture configuration."""
        return ModelConfig(
            num_depths=self.num_depths,
            group_size=self.group_size,
            channels=self.channels,
            num_views=max(len(self.input_views), 1),
            variant=self.variant,
            upsample_mode=self.upsample,
            with_positional=self.pos_enc,
            with_angular=self.ang_enc,
        )


class TrainLogEntry(BaseModel):
    """One optimizer step."""

    step: int
    loss: float
    lr: float
    grad_norm: float


class EvalEntry(BaseModel):
    """Periodic evaluation on the training targets."""

    step: int
    psnr: float
    ssim: float


class TrainLog(BaseModel):
    """Append-only training history."""

    entries: list[TrainLogEntry] = Field(default_factory=list)
    evals: list[EvalEntry] = Field(default_factory=list)

    def append(self, entry: TrainLogEntry) -> None:
        """Append a step record; step indices must increase."""
        if self.entries and entry.step <= self.entries[-1].step:
            raise ValueError(
                f"step {entry.step} does not follow step {self.entries[-1].step}"
            )
        self.entries.append(entry)

    def append_eval(self, entry: EvalEntry) -> None:
        """Append an evaluation record."""
        if self.evals and entry.step <= self.evals[-1].step:
            raise ValueError(
                f"eval step {entry.step} does not follow step {self.evals[-1].step}"
            )
        self.evals.append(entry)

    def to_csv(self) -> str:
        """Render the step records as CSV."""
        lines = ["step,loss,lr,grad_norm"]
        lines.extend(
            f"{e.step},{e.loss!r},{e.lr!r},{e.grad_norm!r}" for e in self.entries
        )
        return "\n".join(lines) + "\n"


class ViewMetrics(BaseModel):
    """Image quality of one rendered target view."""

    view_id: int = Field(..., description="Target view id")
    psnr: float = Field(..., description="Peak signal-to-noise ratio in dB")
    ssim: float = Field(..., description="Structural similarity")


class EvalReport(BaseModel):
    """Per-view and mean metrics for an evaluation run."""

    scene: str = Field(default="", description="Scene directory")
    rows: list[ViewMetrics] = Field(default_factory=list)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def mean_psnr(self) -> float:
        """Mean PSNR over target views."""
        if not self.rows:
            return 0.0
        return sum(r.psnr for r in self.rows) / len(self.rows)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def mean_ssim(self) -> float:
        """Mean SSIM over target views."""
        if not self.rows:
            return 0.0
        return sum(r.ssim for r in self.rows) / len(self.rows)
