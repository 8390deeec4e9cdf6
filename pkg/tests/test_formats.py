"""
Tests for the files exchanged by the command-line tools.
"""

import json
import math
import os

import numpy as np
import pytest

from lunakit.core import ValidationError
from lunakit.formats import (
    TRUTH_SCHEMA, read_csv, read_json, read_manifest, read_observations_csv,
    read_solution_json, read_truth_csv, write_csv, write_json, write_manifest,
    write_observations_csv, write_solution_json, write_truth_csv,
)
from lunakit.lunar_constants import SolverStep
from lunakit.measurement import SCHEMA as OBSERVATIONS_SCHEMA
from lunakit.measurement import ObservationSet
from lunakit.solver import SolverEstimate, StepRecord

OBS_HEADER = f"# schema: {OBSERVATIONS_SCHEMA}\nt_R,D_Hz,cn0_dBHz,sigma_tot_kmps,pass_id\n"


def _observations(n=5):
    t = np.arange(float(n))
    return ObservationSet(t, np.linspace(-100.0, 100.0, n), np.full(n, 45.0),
                          np.full(n, 1e-6), np.zeros(n, dtype=int))


class TestCsv:
    """Test schema-tagged CSV files."""

    def test_truth_round_trip(self, orbit, out_dir):
        """Truth trajectories read back exactly."""
        series = orbit.sample(0.0, 20.0, 1.0)
        path = str(out_dir / 'truth.csv')
        write_truth_csv(path, series)
        restored = read_truth_csv(path)
        assert np.array_equal(restored.times, series.times)
        assert np.array_equal(restored.positions, series.positions)
        assert np.array_equal(restored.velocities, series.velocities)

    def test_schema_line(self, out_dir):
        """The first line names the schema."""
        path = str(out_dir / 'obs.csv')
        write_observations_csv(path, _observations())
        with open(path) as f:
            assert f.readline() == f"# schema: {OBSERVATIONS_SCHEMA}\n"

    def test_observations_round_trip(self, out_dir):
        """Observation columns survive a write and read."""
        observations = _observations()
        path = str(out_dir / 'obs.csv')
        write_observations_csv(path, observations)
        restored = read_observations_csv(path)
        assert np.array_equal(restored.doppler_hz, observations.doppler_hz)
        assert restored.pass_ids() == [0]

    def test_wrong_schema(self, out_dir):
        """A file with another schema is rejected."""
        path = str(out_dir / 'obs.csv')
        write_observations_csv(path, _observations())
        with pytest.raises(ValidationError, match='schema'):
            read_truth_csv(path)

    def test_wrong_columns(self, out_dir):
        """A header with other columns is rejected."""
        path = out_dir / 'truth.csv'
        path.write_text(f"# schema: {TRUTH_SCHEMA}\nt,x,y\n0,1,2\n")
        with pytest.raises(ValidationError, match='columns'):
            read_truth_csv(str(path))

    def test_unparsable_field_reports_line(self, out_dir):
        """A bad number is reported with its line in the file."""
        path = out_dir / 'obs.csv'
        path.write_text(OBS_HEADER + "0,1.0,45,1e-6,0\n1,2.0,45,1e-6,0\n2,abc,45,1e-6,0\n")
        with pytest.raises(ValidationError) as info:
            read_observations_csv(str(path))
        assert info.value.row == 5
        assert 'row 5' in str(info.value)

    def test_out_of_range_doppler_reports_line(self, out_dir):
        """Range checks also report the file line."""
        path = out_dir / 'obs.csv'
        path.write_text(OBS_HEADER + "0,1.0,45,1e-6,0\n1,1e6,45,1e-6,0\n")
        with pytest.raises(ValidationError) as info:
            read_observations_csv(str(path))
        assert info.value.row == 4

    def test_wrong_field_count(self, out_dir):
        """Short rows are rejected with their line."""
        path = out_dir / 'obs.csv'
        path.write_text(OBS_HEADER + "0,1.0,45\n")
        with pytest.raises(ValidationError) as info:
            read_observations_csv(str(path))
        assert info.value.row == 3

    def test_empty_file(self, out_dir):
        """A file with no data rows is rejected."""
        path = out_dir / 'obs.csv'
        path.write_text(OBS_HEADER)
        with pytest.raises(ValidationError):
            read_observations_csv(str(path))

    def test_generic_rows(self, out_dir):
        """Generic rows come back as strings with line numbers."""
        path = str(out_dir / 'x.csv')
        write_csv(path, 'test/1', ['a', 'b'], [[1, 0.5], [2, 0.25]])
        assert read_csv(path, 'test/1', ['a', 'b']) == [(3, ['1', '0.5']), (4, ['2', '0.25'])]


class TestJson:
    """Test schema-tagged JSON files."""

    def test_non_finite_as_strings(self, out_dir):
        """Infinite and NaN values are written as strings."""
        path = str(out_dir / 'x.json')
        write_json(path, {'schema': 'test/1', 'gdop': math.inf, 'bad': float('nan'),
                          'n': np.int64(3)})
        with open(path) as f:
            data = json.load(f)
        assert data['gdop'] == 'inf'
        assert data['bad'] == 'nan'
        assert data['n'] == 3

    def test_schema_checked(self, out_dir):
        """Reading with the wrong schema fails."""
        path = str(out_dir / 'x.json')
        write_json(path, {'schema': 'test/1'})
        assert read_json(path, 'test/1') == {'schema': 'test/1'}
        with pytest.raises(ValidationError):
            read_json(path, 'test/2')

    def test_invalid_json(self, out_dir):
        """Malformed JSON is a validation error."""
        path = out_dir / 'x.json'
        path.write_text('{"schema": ')
        with pytest.raises(ValidationError):
            read_json(str(path), 'test/1')

    def test_solution_round_trip(self, out_dir):
        """Solutions keep their position, steps and flags."""
        estimate = SolverEstimate(
            [1.0, 2.0, 1737.0],
            [StepRecord(SolverStep.ALGEBRAIC, [0.0, 0.0, 1737.4], 2.0),
             StepRecord(SolverStep.UNCONSTRAINED, [1.0, 2.0, 1737.0], 0.5, 4)],
            ['mirror_ambiguous'],
        )
        path = str(out_dir / 'solution.json')
        write_solution_json(path, estimate, {'n_observations': 600})
        restored = read_solution_json(path)
        assert np.array_equal(restored.position, estimate.position)
        assert restored.flags == ['mirror_ambiguous']
        assert restored.steps[1].iterations == 4
        with open(path) as f:
            assert json.load(f)['n_observations'] == 600

    def test_manifest_schema(self, out_dir):
        """Manifests are tagged with their schema."""
        path = str(out_dir / 'manifest.json')
        write_manifest(path, {'seed': 0})
        assert read_manifest(path)['seed'] == 0


class TestAtomicWrite:
    """Test the write-then-rename behaviour."""

    def test_no_temporary_left(self, out_dir):
        """Only the target file remains after a write."""
        write_json(str(out_dir / 'a.json'), {'schema': 'test/1'})
        assert os.listdir(out_dir) == ['a.json']

    def test_creates_directory(self, tmp_path):
        """Missing parent directories are created."""
        path = tmp_path / 'nested' / 'dir' / 'a.json'
        write_json(str(path), {'schema': 'test/1'})
        assert path.exists()

    def test_identical_bytes(self, out_dir):
        """Writing the same data twice gives identical files."""
        first, second = out_dir / 'a.json', out_dir / 'b.json'
        data = {'schema': 'test/1', 'values': [0.1, 0.2], 'z': 1, 'a': 2}
        write_json(str(first), data)
        write_json(str(second), data)
        assert first.read_bytes() == second.read_bytes()
