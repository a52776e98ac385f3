import csv
import json
import logging
import os
from contextlib import suppress
from dataclasses import asdict, is_dataclass
from pathlib import Path
from tempfile import mkstemp

import numpy as np

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def _atomic_write(path, write):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = mkstemp(dir=path.parent, prefix=f'.{path.name}.', suffix='.tmp')
    try:
        with os.fdopen(fd, 'w', newline='') as f:
            write(f)
        os.replace(temp_path, path)
    except BaseException:
        with suppress(FileNotFoundError):
            os.unlink(temp_path)
        raise
    logger.info('Wrote %s', path)
    return path


def to_plain(value):
    """Convert dataclasses, numpy values, tuples and paths into JSON-friendly
    Python objects.
    """
    if is_dataclass(value) and not isinstance(value, type):
        return to_plain(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, payload):
    """Atomically write *payload* as JSON to *path*. Floats are written with
    their shortest round-tripping representation.
    """
    return _atomic_write(
        path, lambda f: json.dump(to_plain(payload), f, indent=2, sort_keys=True)
    )


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return value


def schema_path(path):
    path = Path(path)
    return path.with_name(f'{path.stem}.schema.json')


def write_csv(path, columns, rows, descriptions=None):
    """Atomically write a CSV table and its sidecar schema:

    * *columns* are the column names.
    * *rows* is an iterable of sequences, one value per column. Floats are
      written with 17 significant digits.
    * *descriptions* optionally maps column names to a one-line description
      for the sidecar ``<name>.schema.json`` file.

    Return value: the path of the CSV file.

    .. code-block:: python

        from aggregation_stopping.artifacts import write_csv

        write_csv(
            'out/barrier_map.csv',
            ['x', 'a_lo', 'a_hi'],
            [(0.85, 2 / 3, 2 / 3)],
            {'x': 'state', 'a_lo': 'lowest maximizer', 'a_hi': 'highest maximizer'},
        )
    """
    descriptions = descriptions or {}
    rows = [[_cell(v) for v in row] for row in rows]

    def write(f):
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows(rows)

    _atomic_write(path, write)
    schema = {
        'format': 'csv',
        'float_format': FLOAT_FORMAT,
        'columns': [
            {'name': c, 'description': descriptions.get(c, '')} for c in columns
        ],
    }
    write_json(schema_path(path), schema)
    return Path(path)


def _parse(cell):
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(path):
    """Read a table written by :func:`write_csv`; numeric cells come back as
    ``float``. Return value: ``(columns, rows)``.
    """
    with open(path, newline='') as f:
        reader = csv.reader(f)
        columns = next(reader)
        rows = [[_parse(cell) for cell in row] for row in reader]
    return columns, rows
