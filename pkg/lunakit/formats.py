"""
File formats exchanged by the command-line tools

JSON files carry a top-level "schema" field and CSV files start with a
"# schema: <name>/<version>" line. Files are written to a temporary name in
the target directory and renamed into place, and contain no wall-clock data,
so reruns with the same configuration produce identical bytes.
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import DEFAULT_CONSTANTS, LunarConstants, ValidationError
from .dop import SCHEMA as GDOP_SCHEMA
from .dop import GdopGrid
from .ephemeris import SCHEMA as EPHEMERIS_SCHEMA
from .ephemeris import EphemerisSet
from .measurement import SCHEMA as OBSERVATIONS_SCHEMA
from .measurement import ObservationSet
from .montecarlo import TRIALS_SCHEMA, TrialResult
from .orbit import SatelliteStateSeries
from .solver import SCHEMA as SOLUTION_SCHEMA
from .solver import SolverEstimate

logger = logging.getLogger(__name__)

TRUTH_SCHEMA = 'lunakit.truth/1'
MANIFEST_SCHEMA = 'lunakit.manifest/1'

TRUTH_COLUMNS = ['t', 'x', 'y', 'z', 'vx', 'vy', 'vz']
OBSERVATION_COLUMNS = ['t_R', 'D_Hz', 'cn0_dBHz', 'sigma_tot_kmps', 'pass_id']
TRIAL_COLUMNS = [
    'trial', 'lat_deg', 'lon_deg', 'alt_km', 'error_m', 'step1_error_m', 'step2_error_m',
    'step3_error_m', 'step2_iterations', 'step3_iterations', 'converged', 'mirror_correct',
    'n_observations', 'flags', 'message',
]
GDOP_COLUMNS = ['lat', 'lon', 'gdop']

# Schema line and column header precede the first data row
FIRST_DATA_LINE = 3


def atomic_write(path: str, text: str):
    """Write text to path through a temporary file and an atomic rename"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temporary = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            f.write(text)
        os.replace(temporary, path)
    except BaseException:
        if os.path.exists(temporary):
            os.remove(temporary)
        raise
    logger.info(f"Wrote {path}")


def _json_value(value: Any) -> Any:
    """Non-finite floats become strings so the output stays standard JSON"""
    if isinstance(value, dict):
        return {key: _json_value(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(item) for item in value]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(path: str, data: Dict[str, Any]):
    atomic_write(path, json.dumps(_json_value(data), indent=2, sort_keys=True) + '\n')


def read_json(path: str, schema: str) -> Dict[str, Any]:
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict) or data.get('schema') != schema:
        found = data.get('schema') if isinstance(data, dict) else None
        raise ValidationError(f"{path}: expected schema {schema}, got {found!r}")
    return data


def _format(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, schema: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]):
    buffer = io.StringIO()
    buffer.write(f"# schema: {schema}\n")
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format(value) for value in row])
    atomic_write(path, buffer.getvalue())


def read_csv(path: str, schema: str, columns: Sequence[str]) -> List[Tuple[int, List[str]]]:
    """Data rows of a schema-tagged CSV file with their line numbers"""
    with open(path, 'r', newline='') as f:
        first = f.readline().strip()
        if first != f"# schema: {schema}":
            raise ValidationError(f"{path}: expected '# schema: {schema}' on line 1, got {first!r}")
        reader = csv.reader(f)
        header = next(reader, None)
        if header != list(columns):
            raise ValidationError(f"{path}: expected columns {','.join(columns)}, got {header}")
        rows = []
        for line, row in enumerate(reader, start=FIRST_DATA_LINE):
            if not row:
                continue
            if len(row) != len(columns):
                raise ValidationError(f"{path}: expected {len(columns)} fields, got {len(row)}", row=line)
            rows.append((line, row))
    return rows


def _parse_floats(path: str, rows: List[Tuple[int, List[str]]], columns: int) -> np.ndarray:
    values = np.empty((len(rows), columns))
    for index, (line, row) in enumerate(rows):
        try:
            values[index] = [float(field) for field in row[:columns]]
        except ValueError as exc:
            raise ValidationError(f"{path}: {exc}", row=line) from exc
    return values


def write_truth_csv(path: str, series: SatelliteStateSeries):
    rows = np.column_stack([series.times, series.positions, series.velocities])
    write_csv(path, TRUTH_SCHEMA, TRUTH_COLUMNS, rows.tolist())


def read_truth_csv(path: str) -> SatelliteStateSeries:
    rows = read_csv(path, TRUTH_SCHEMA, TRUTH_COLUMNS)
    if not rows:
        raise ValidationError(f"{path}: no trajectory samples")
    values = _parse_floats(path, rows, len(TRUTH_COLUMNS))
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        raise ValidationError(f"{path}: non-finite state", row=rows[int(np.flatnonzero(bad)[0])][0])
    return SatelliteStateSeries(values[:, 0], values[:, 1:4], values[:, 4:7])


def write_observations_csv(path: str, observations: ObservationSet):
    rows = zip(observations.t_R.tolist(), observations.doppler_hz.tolist(),
               observations.cn0_dbhz.tolist(), observations.sigma_tot.tolist(),
               observations.pass_id.tolist())
    write_csv(path, OBSERVATIONS_SCHEMA, OBSERVATION_COLUMNS, rows)


def read_observations_csv(path: str, constants: LunarConstants = DEFAULT_CONSTANTS) -> ObservationSet:
    rows = read_csv(path, OBSERVATIONS_SCHEMA, OBSERVATION_COLUMNS)
    if not rows:
        raise ValidationError(f"{path}: no observations")
    values = _parse_floats(path, rows, 4)
    pass_ids = []
    for line, row in rows:
        try:
            pass_ids.append(int(row[4]))
        except ValueError as exc:
            raise ValidationError(f"{path}: pass_id {row[4]!r} is not an integer", row=line) from exc
    try:
        return ObservationSet(values[:, 0], values[:, 1], values[:, 2], values[:, 3],
                              np.array(pass_ids), constants)
    except ValidationError as exc:
        if exc.row is None:
            raise ValidationError(f"{path}: {exc}") from exc
        message = str(exc).split(': ', 1)[-1]
        raise ValidationError(f"{path}: {message}", row=rows[exc.row][0]) from exc


def write_ephemeris_json(path: str, ephemeris: EphemerisSet):
    write_json(path, ephemeris.to_dict())


def read_ephemeris_json(path: str) -> EphemerisSet:
    return EphemerisSet.from_dict(read_json(path, EPHEMERIS_SCHEMA))


def write_solution_json(path: str, estimate: SolverEstimate, extra: Optional[Dict[str, Any]] = None):
    data = estimate.to_dict()
    data.update(extra or {})
    write_json(path, data)


def read_solution_json(path: str) -> SolverEstimate:
    data = read_json(path, SOLUTION_SCHEMA)
    return SolverEstimate.from_dict(data)


def write_manifest(path: str, data: Dict[str, Any]):
    write_json(path, dict(data, schema=MANIFEST_SCHEMA))


def read_manifest(path: str) -> Dict[str, Any]:
    return read_json(path, MANIFEST_SCHEMA)


def write_trials_csv(path: str, results: List[TrialResult]):
    rows = []
    for result in results:
        record = result.to_row()
        rows.append([record[column] for column in TRIAL_COLUMNS])
    write_csv(path, TRIALS_SCHEMA, TRIAL_COLUMNS, rows)


def write_gdop_csv(path: str, grid: GdopGrid):
    write_csv(path, GDOP_SCHEMA, GDOP_COLUMNS,
              ([row['lat'], row['lon'], row['gdop']] for row in grid.rows()))
