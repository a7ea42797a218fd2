import numpy as np


def running_moments(block, acc=None):
    n = block.size
    s = float(np.sum(block))
    if acc is None:
        return (n, s)
    return (acc[0] + n, acc[1] + s)
