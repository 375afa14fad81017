"""
CSV and JSON readers/writers for measures, reports, replicate vectors and
run manifests.
"""

import csv
import hashlib
import json
import logging
import os

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)


def _fmt(value):
    """Format a float with round-trip precision"""
    return format(float(value), '.17g')


def ensure_dir(path):
    """Create the parent directory of path if needed"""
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as e:
        raise InputError(f"Cannot create output directory {parent}: {e}")
    if not os.access(parent, os.W_OK):
        raise InputError(f"Output directory is not writable: {parent}")


def load_json(filepath):
    """Load JSON file"""
    try:
        with open(filepath, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise InputError(f"File not found: {filepath}")
    except json.JSONDecodeError as e:
        raise InputError(f"Error parsing JSON {filepath}: {e}")


def write_json(filepath, payload):
    """Write payload as indented JSON with sorted keys"""
    ensure_dir(filepath)
    with open(filepath, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')
    log.info("wrote %s", filepath)
    return filepath


def write_rows_csv(filepath, rows, fieldnames):
    """Write dict rows to CSV; missing fields are left empty"""
    normalized_rows = []
    for row in rows:
        normalized_row = {}
        for field in fieldnames:
            value = row.get(field, '')
            if isinstance(value, (float, np.floating)):
                value = _fmt(value)
            normalized_row[field] = value
        normalized_rows.append(normalized_row)

    ensure_dir(filepath)
    with open(filepath, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(normalized_rows)
    log.info("wrote %d rows to %s", len(normalized_rows), filepath)
    return filepath


def write_column_csv(filepath, values):
    """Write one value per line, no header"""
    ensure_dir(filepath)
    with open(filepath, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        for value in np.asarray(values, dtype=float).ravel():
            writer.writerow([_fmt(value)])
    return filepath


def read_column_csv(filepath):
    """Read a one-value-per-line CSV back into an array"""
    with open(filepath, 'r', encoding='utf-8') as f:
        return np.array([float(row[0]) for row in csv.reader(f) if row])


def write_matrix_csv(filepath, matrix, header=None):
    """Write a dense matrix, one row per line"""
    ensure_dir(filepath)
    with open(filepath, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        if header is not None:
            writer.writerow(header)
        for row in np.atleast_2d(matrix):
            writer.writerow([_fmt(x) for x in row])
    return filepath


def write_labeled_matrix_csv(filepath, labels, matrix):
    """Write a square table with row and column labels (p-value tables)"""
    ensure_dir(filepath)
    with open(filepath, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow([''] + [str(label) for label in labels])
        for label, row in zip(labels, np.atleast_2d(matrix)):
            writer.writerow([str(label)] + [_fmt(x) for x in row])
    return filepath


def file_digest(filepath):
    """sha256 of a file's bytes"""
    h = hashlib.sha256()
    with open(filepath, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            h.update(chunk)
    return h.hexdigest()
