#!/usr/bin/env python3
"""Reduce a directory of HDF5 snapshots to per-field statistics."""
import sys

import h5py
import numpy as np

from stats import running_moments


def main(paths):
    acc = None
    for p in paths:
        with h5py.File(p, "r") as f:
            acc = running_moments(np.asarray(f["field"]), acc)
    print(acc)


if __name__ == "__main__":
    main(sys.argv[1:])
