"""
Tests for run artifacts and the tabulated grid format.
"""

import json

import numpy as np
import pytest

from anisotropic_heat_kernel.artifacts import (
    GRID_HEADER,
    ArtifactWriterConfig,
    RunArtifactWriter,
    read_grid_csv,
    write_grid_csv,
)
from anisotropic_heat_kernel.errors import ParameterError, ResolutionError
from anisotropic_heat_kernel.models import Domain2D, KernelMetadata, KernelMethod


@pytest.fixture
def domain():
    return Domain2D(x1_min=-1.0, x1_max=2.0, x2_min=0.0, x2_max=1.0, n1=7, n2=5)


@pytest.fixture
def writer(tmp_path):
    return RunArtifactWriter(ArtifactWriterConfig(output_directory=str(tmp_path / "run")))


class TestGridCsv:
    """Tests for write_grid_csv and read_grid_csv."""

    def test_header_and_metadata_lines(self, domain, tmp_path):
        path = tmp_path / "grid.csv"
        write_grid_csv(path, domain, np.zeros(domain.shape))
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == GRID_HEADER
        assert lines[1].split(",")[:2] == ["7", "5"]
        assert len(lines) == 2 + domain.n1

    def test_complex_values_survive(self, domain, tmp_path):
        path = tmp_path / "grid.csv"
        x1, x2 = domain.mesh()
        values = x1 + 1j * x2**2
        write_grid_csv(path, domain, values)
        read_domain, read_values = read_grid_csv(path)
        assert read_domain == domain
        np.testing.assert_array_equal(read_values, values)

    def test_real_values_read_as_real(self, domain, tmp_path):
        path = tmp_path / "grid.csv"
        write_grid_csv(path, domain, np.full(domain.shape, 0.1))
        _, values = read_grid_csv(path)
        assert not np.iscomplexobj(values)
        assert values[3, 2] == 0.1

    def test_shape_mismatch(self, domain, tmp_path):
        with pytest.raises(ParameterError, match="shape"):
            write_grid_csv(tmp_path / "grid.csv", domain, np.zeros((3, 3)))

    def test_bad_header(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text("a,b,c\n1,2,3\n", encoding="utf-8")
        with pytest.raises(ParameterError, match="first line"):
            read_grid_csv(path)

    def test_body_must_match_metadata(self, domain, tmp_path):
        path = tmp_path / "grid.csv"
        write_grid_csv(path, domain, np.zeros(domain.shape))
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(ParameterError, match="body"):
            read_grid_csv(path)

    def test_coarse_table(self, tmp_path):
        path = tmp_path / "grid.csv"
        path.write_text(f"{GRID_HEADER}\n3,3,0,1,0,1\n0,0,0\n0,0,0\n0,0,0\n", encoding="utf-8")
        with pytest.raises(ResolutionError):
            read_grid_csv(path)


class TestRunArtifactWriter:
    """Tests for RunArtifactWriter."""

    def test_writes_json_and_records_paths(self, writer, domain):
        metadata = KernelMetadata(
            source=(3, 2),
            source_point=(0.5, 0.5),
            times=[0.01],
            method=KernelMethod.FOURIER_CONSTANT,
            domain=domain,
            mass=[1.0],
        )
        path = writer.write_json("kernel.json", metadata)
        assert json.loads(path.read_text(encoding="utf-8"))["method"] == "fourier_constant"
        assert writer.written == [str(path)]

    def test_rejects_nested_names(self, writer):
        with pytest.raises(ParameterError, match="plain file name"):
            writer.write_table_csv("../escape.csv", ["a"], [])

    def test_table_csv(self, writer):
        path = writer.write_table_csv("rows.csv", ["t", "angle"], [(0.1, 0.5), (0.2, (1.0, 2.0))])
        assert path.read_text(encoding="utf-8").splitlines() == [
            "t,angle",
            "0.10000000000000001,0.5",
            "0.20000000000000001,1 2",
        ]

    def test_schema(self, writer):
        path = writer.write_schema("kernel_metadata.schema.json", KernelMetadata)
        schema = json.loads(path.read_text(encoding="utf-8"))
        assert "times" in schema["properties"]

    def test_svg_heatmap(self, writer, domain):
        values = np.log10(np.arange(1, 36, dtype=float).reshape(domain.shape))
        path = writer.write_svg_heatmap("grid.svg", domain, values, "log10 |G|")
        assert path.read_text(encoding="utf-8").lstrip().startswith("<?xml")
