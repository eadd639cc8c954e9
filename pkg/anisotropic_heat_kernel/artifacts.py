"""
Run artifacts on the filesystem.

Implements the ArtifactWriter interface used by the CLI for JSON reports, CSV grids, CSV tables
and SVG heatmaps, plus the reader for tabulated coefficient grids.
"""

import json
from pathlib import Path
from typing import Any, Iterable, Optional, Protocol, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, ConfigDict, Field  # noqa: E402

from anisotropic_heat_kernel.errors import ParameterError, ResolutionError  # noqa: E402
from anisotropic_heat_kernel.models import Domain2D  # noqa: E402

GRID_HEADER = "n1,n2,x1_min,x1_max,x2_min,x2_max"


class ArtifactWriter(Protocol):
    """Protocol defining where run outputs go."""

    def write_json(self, name: str, report: BaseModel) -> Path:
        ...

    def write_grid_csv(self, name: str, domain: Domain2D, values: np.ndarray) -> Path:
        ...

    def write_table_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        ...

    def write_svg_heatmap(
        self, name: str, domain: Domain2D, values: np.ndarray, title: str
    ) -> Path:
        ...


class ArtifactWriterConfig(BaseModel):
    """Configuration for RunArtifactWriter."""

    model_config = ConfigDict(frozen=True)

    output_directory: str = Field(..., description="Directory where run artifacts are written")


class RunArtifactWriter:
    """
    Writes the artifacts of one run below a single directory.

    Every write records the absolute path in `written`, in order, so the CLI can list the files in
    its metadata record.
    """

    def __init__(self, config: ArtifactWriterConfig):
        self.config = config
        self.written: list[str] = []

    @property
    def directory(self) -> Path:
        path = Path(self.config.output_directory).resolve()
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _target(self, name: str) -> Path:
        if not name or Path(name).name != name:
            raise ParameterError(f"artifact name must be a plain file name, got '{name}'")
        path = self.directory / name
        self.written.append(str(path))
        return path

    def write_json(self, name: str, report: BaseModel) -> Path:
        path = self._target(name)
        path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    def write_schema(self, name: str, model: type[BaseModel]) -> Path:
        path = self._target(name)
        schema = model.model_json_schema()
        path.write_text(json.dumps(schema, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    def write_grid_csv(self, name: str, domain: Domain2D, values: np.ndarray) -> Path:
        path = self._target(name)
        write_grid_csv(path, domain, values)
        return path

    def write_table_csv(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        path = self._target(name)
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_format_cell(cell) for cell in row))
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def write_svg_heatmap(
        self, name: str, domain: Domain2D, values: np.ndarray, title: str
    ) -> Path:
        """Rectilinear heatmap with a fixed colormap; NaN cells are left blank."""
        path = self._target(name)
        figure, axes = plt.subplots(figsize=(5.0, 4.2))
        try:
            image = axes.imshow(
                np.asarray(values, dtype=float).T,
                origin="lower",
                extent=(domain.x1_min, domain.x1_max, domain.x2_min, domain.x2_max),
                cmap="viridis",
                aspect="equal",
                interpolation="nearest",
            )
            figure.colorbar(image, ax=axes)
            axes.set_title(title)
            axes.set_xlabel("x1")
            axes.set_ylabel("x2")
            figure.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(figure)
        return path


def _format_cell(cell: Any) -> str:
    if isinstance(cell, (float, np.floating)):
        return f"{float(cell):.17g}"
    if isinstance(cell, (tuple, list)):
        return " ".join(_format_cell(c) for c in cell)
    return str(cell)


def write_grid_csv(path: Path, domain: Domain2D, values: np.ndarray) -> None:
    """
    Header line with the field names, one line with their values, then n1 rows of n2 values.

    Row i holds the nodes with x1 = x1_min + i h1.
    """
    values = np.asarray(values)
    if values.shape != domain.shape:
        raise ParameterError(f"grid has shape {values.shape}, domain expects {domain.shape}")
    meta = (
        f"{domain.n1},{domain.n2},{domain.x1_min:.17g},{domain.x1_max:.17g},"
        f"{domain.x2_min:.17g},{domain.x2_max:.17g}"
    )
    body = "\n".join(",".join(_format_value(v) for v in row) for row in values)
    Path(path).write_text(f"{GRID_HEADER}\n{meta}\n{body}\n", encoding="utf-8")


def _format_value(value: Any) -> str:
    if np.iscomplexobj(value) and np.imag(value) != 0.0:
        return f"{complex(value)!r}".strip("()")
    return f"{float(np.real(value)):.17g}"


def read_grid_csv(path: Path, boundary_kind: Optional[str] = None) -> tuple[Domain2D, np.ndarray]:
    """
    Read a grid written by write_grid_csv (real or complex entries).

    Raises:
        ParameterError: If the header or the body does not match the format.
        ResolutionError: If the table has fewer than 4 nodes per axis.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2 or lines[0].strip().replace(" ", "") != GRID_HEADER:
        raise ParameterError(f"{path}: first line must be '{GRID_HEADER}'")
    try:
        n1_text, n2_text, *bounds_text = lines[1].split(",")
        n1, n2 = int(n1_text), int(n2_text)
        x1_min, x1_max, x2_min, x2_max = (float(b) for b in bounds_text)
    except ValueError as exc:
        raise ParameterError(f"{path}: malformed grid metadata line: {exc}") from exc
    if n1 < 4 or n2 < 4:
        raise ResolutionError(
            f"{path}: tabulated grid needs at least 4 nodes per axis, got {n1}x{n2}"
        )

    body = [line for line in lines[2:] if line.strip()]
    try:
        values = np.array(
            [[complex(cell.strip().replace(" ", "")) for cell in line.split(",")] for line in body]
        )
    except ValueError as exc:
        raise ParameterError(f"{path}: non-numeric grid entry: {exc}") from exc
    if values.shape != (n1, n2):
        raise ParameterError(f"{path}: body has shape {values.shape}, header says {(n1, n2)}")
    if not np.any(values.imag):
        values = values.real

    extra = {"boundary_kind": boundary_kind} if boundary_kind else {}
    domain = Domain2D(
        x1_min=x1_min, x1_max=x1_max, x2_min=x2_min, x2_max=x2_max, n1=n1, n2=n2, **extra
    )
    return domain, values
