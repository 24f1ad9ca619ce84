import numpy as np
import pytest


def write_trajectory_csv(path, times, arrays):
    """Synthetic long-format trajectory file matching the schema."""
    arr0 = np.asarray(arrays[0])
    ndim = arr0.ndim
    headers = ["t"] + [f"i{k}" for k in range(ndim)] + ["value"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(headers) + "\n")
        for t, arr in zip(times, arrays):
            arr = np.asarray(arr, dtype=float)
            for idx in np.ndindex(arr.shape):
                coords = ",".join(str(i) for i in idx)
                fh.write(f"{float(t)!r},{coords},{float(arr[idx])!r}\n")
    return path


def write_convergence_csv(path, eps, errors, stderr=None, slope=1.0):
    with open(path, "w", newline="") as fh:
        if stderr is None:
            fh.write("eps,dist_sq_T,slope\n")
            for e, v in zip(eps, errors):
                fh.write(f"{e!r},{v!r},{slope!r}\n")
        else:
            fh.write("eps,dist_sq_T,stderr_T,slope\n")
            for e, v, s in zip(eps, errors, stderr):
                fh.write(f"{e!r},{v!r},{s!r},{slope!r}\n")
    return path


@pytest.fixture
def demo_grid():
    rng = np.random.default_rng(0)
    times = [0.0, 0.25, 0.5, 1.0]
    fields = [np.cumsum(rng.random((6, 5)), axis=1) * t for t in times]
    return times, fields
