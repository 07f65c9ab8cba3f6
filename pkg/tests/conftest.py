import struct

import numpy as np
import pytest


def write_idx(path, magic, arr):
    path.write_bytes(struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape)
                     + arr.astype(np.uint8).tobytes())


def synthetic_digits(n, seed):
    """Ten classes, each a bright 7x7 block at its own place, plus noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, n)
    images = rng.integers(0, 40, (n, 28, 28))
    for i, c in enumerate(labels):
        r, col = divmod(int(c), 5)
        images[i, 2 + 12 * r:9 + 12 * r, 1 + 5 * col:8 + 5 * col] = 230
    return images.astype(np.uint8), labels.astype(np.uint8)


@pytest.fixture(scope="session")
def tiny_mnist(tmp_path_factory):
    root = tmp_path_factory.mktemp("mnist")
    for split, n, seed in (("train", 600, 0), ("t10k", 200, 1)):
        images, labels = synthetic_digits(n, seed)
        write_idx(root / f"{split}-images-idx3-ubyte", 2051, images)
        write_idx(root / f"{split}-labels-idx1-ubyte", 2049, labels)
    return root


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def _report(number, ok: bool, detail: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def saccade_events(image, rng, levels=(32, 96, 160, 224)):
    """Event stream of a 28x28 image on a 34x34 sensor moved along three saccades.

    Each 100 ms saccade moves the image one pixel per 10 ms; a pixel emits an
    ON or OFF event for every brightness level it crosses between positions.
    """
    from biograd.data import EventList

    path = [(0, 0), (1, 1), (2, 2), (3, 3), (2, 3), (1, 3), (0, 3), (0, 2), (0, 1), (0, 0)]
    prev = np.zeros((34, 34), np.int64)
    xs, ys, ps, ts = [], [], [], []
    t0 = 0
    for saccade in range(3):
        for k, (dy, dx) in enumerate(path):
            frame = np.zeros((34, 34), np.int64)
            frame[1 + dy:29 + dy, 1 + dx:29 + dx] = np.searchsorted(levels, image, "right")
            diff = frame - prev
            for pol, count in ((1, np.maximum(diff, 0)), (0, np.maximum(-diff, 0))):
                y, x = np.nonzero(count)
                reps = count[y, x]
                x, y = np.repeat(x, reps), np.repeat(y, reps)
                xs.append(x)
                ys.append(y)
                ps.append(np.full(len(x), pol))
                ts.append(t0 + k * 10000 + rng.integers(0, 10000, len(x)))
            prev = frame
        t0 += 100000
    cat = [np.concatenate(a) for a in (xs, ys, ps, ts)]
    order = np.argsort(cat[3], kind="stable")
    return EventList(*(c[order] for c in cat))
