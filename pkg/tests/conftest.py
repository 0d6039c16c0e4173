from __future__ import annotations
from collections import deque
from io import BytesIO

import numpy as np
import pytest
from PIL import Image

from logtally import ledger


@pytest.fixture(autouse=True)
def isolated_ledger(tmp_path, monkeypatch):
    path = tmp_path / 'ledger.jsonl'
    monkeypatch.setenv('LOGTALLY_LEDGER', str(path))
    ledger.configure(path)
    yield path
    ledger.configure(None)


def disc(shape, center, radius) -> np.ndarray:
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]]
    return np.hypot(yy - center[0], xx - center[1]) <= radius


def discs_labels(shape, discs) -> np.ndarray:
    out = np.zeros(shape, dtype=np.int32)
    for k, (center, radius) in enumerate(discs, start=1):
        out[disc(shape, center, radius)] = k
    return out


def red_png(mask: np.ndarray) -> bytes:
    rgb = np.zeros(mask.shape + (3,), dtype=np.uint8)
    rgb[mask, 0] = 255
    buf = BytesIO()
    Image.fromarray(rgb).save(buf, format='PNG')
    return buf.getvalue()


def flood_fill_labels(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Breadth-first reference labelling, raster order of first pixel."""
    h, w = mask.shape
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx]
    out = np.zeros((h, w), dtype=np.int32)
    k = 0
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or out[r, c]:
                continue
            k += 1
            out[r, c] = k
            queue = deque([(r, c)])
            while queue:
                y, x = queue.popleft()
                for dy, dx in steps:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not out[ny, nx]:
                        out[ny, nx] = k
                        queue.append((ny, nx))
    return out, k


def same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    if not np.array_equal(a != 0, b != 0):
        return False
    pairs = set(zip(a[a != 0].tolist(), b[b != 0].tolist()))
    left = {p[0] for p in pairs}
    right = {p[1] for p in pairs}
    return len(pairs) == len(left) == len(right)
