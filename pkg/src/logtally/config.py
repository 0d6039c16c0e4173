"""Settings loader.

Defaults live in ``configs/logtally.yaml``. The project root is the first
directory, walking up from the working directory, with a ``configs/``
directory holding that file. Environment variables
win over the file:

- ``LOGTALLY_CONFIG``  alternative YAML file
- ``LOGTALLY_PORT``    service port
- ``LOGTALLY_LEDGER``  ledger path
"""
from __future__ import annotations
from pathlib import Path
import copy, os
import yaml

from .errors import InvalidInputError

CONFIG_RELPATH = Path('configs') / 'logtally.yaml'

DEFAULTS: dict = {
    'pipeline': {
        'binarize': {'mode': 'red-dominant', 'threshold': 127, 'channel': None},
        'erosion': {'enabled': False, 'se': 'square3', 'iterations': 15, 'dynamic_radius': None},
        'connectivity': 8,
        'min_area': 0,
        'counter': 'cc',
        'overlay': False,
        'resize_to': None,
        'h': 2.0,
    },
    'hough': {
        'r_min': 5,
        'r_max': 60,
        'vote_threshold': 0.4,
        'nms_min_center_dist': None,
        'radius_step': 1,
    },
    'match': {'coverage_tau': 0.5},
    'eval': {'jobs': None},
    'service': {'host': '127.0.0.1', 'port': 8080, 'max_body_bytes': 32 * 1024 * 1024},
    'ledger': {'enabled': True, 'path': 'reports/ledger.jsonl'},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (override or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def find_project_root(start: Path | None = None) -> Path | None:
    cwd = (start or Path.cwd()).resolve()
    while True:
        if (cwd / CONFIG_RELPATH).exists():
            return cwd
        if cwd == cwd.parent:
            return None
        cwd = cwd.parent


class Settings:
    def __init__(self, path: str | Path | None = None):
        path = path or os.getenv('LOGTALLY_CONFIG')
        self.project_root = None
        self.source = None
        loaded: dict = {}
        if path:
            p = Path(path)
            if not p.exists():
                raise InvalidInputError(f'config file not found: {p}')
            self.source = p
            self.project_root = p.resolve().parent.parent
        else:
            root = find_project_root()
            if root is not None:
                self.project_root = root
                self.source = root / CONFIG_RELPATH
        if self.source is not None:
            loaded = yaml.safe_load(self.source.read_text(encoding='utf-8')) or {}
            if not isinstance(loaded, dict):
                raise InvalidInputError(f'config root must be a mapping: {self.source}')
        self.cfg = _merge(DEFAULTS, loaded)

        port = os.getenv('LOGTALLY_PORT')
        if port:
            try:
                self.cfg['service']['port'] = int(port)
            except ValueError:
                raise InvalidInputError(f'LOGTALLY_PORT is not an integer: {port!r}') from None
        ledger = os.getenv('LOGTALLY_LEDGER')
        if ledger:
            self.cfg['ledger']['path'] = ledger

    def section(self, name: str) -> dict:
        return copy.deepcopy(self.cfg.get(name, {}))

    @property
    def port(self) -> int:
        return int(self.cfg['service']['port'])

    @property
    def max_body_bytes(self) -> int:
        return int(self.cfg['service']['max_body_bytes'])

    def ledger_path(self) -> Path | None:
        led = self.cfg['ledger']
        if not led.get('enabled', True):
            return None
        p = Path(led['path'])
        if not p.is_absolute() and self.project_root is not None:
            p = self.project_root / p
        return p
