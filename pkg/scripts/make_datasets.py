"""Generate the three binary-classification datasets used by the logistic
regression targets.

Each file is comma-delimited text, one record per line, label (0/1) last.
Shapes match the benchmark datasets: heart 532x(13+1), australian 690x(14+1),
german 1000x(24+1). Features are a mix of continuous and small-integer
columns with heterogeneous scales (so the loader's standardization matters);
labels come from a fixed ground-truth logistic model plus noise.

Deterministic: re-running this script reproduces the files byte for byte.
"""

import os

import numpy as np

SPECS = {
    # name: (rows, continuous cols, integer cols, label noise)
    "heart": (532, 7, 6, 0.08),
    "australian": (690, 8, 6, 0.10),
    "german": (1000, 14, 10, 0.12),
}


def make_dataset(name, n_rows, n_cont, n_int, flip_prob, seed):
    rng = np.random.default_rng(seed)
    cols = []
    scales = rng.uniform(0.5, 40.0, size=n_cont)
    shifts = rng.uniform(-5.0, 120.0, size=n_cont)
    for j in range(n_cont):
        cols.append(shifts[j] + scales[j] * rng.standard_normal(n_rows))
    for j in range(n_int):
        k = int(rng.integers(2, 6))
        cols.append(rng.integers(0, k, size=n_rows).astype(float))
    X = np.column_stack(cols)

    Xs = (X - X.mean(axis=0)) / X.std(axis=0)
    beta = rng.standard_normal(X.shape[1]) * 1.2
    beta0 = rng.uniform(-0.5, 0.5)
    logits = Xs @ beta + beta0
    y = (rng.uniform(size=n_rows) < 1.0 / (1.0 + np.exp(-logits))).astype(int)
    flip = rng.uniform(size=n_rows) < flip_prob
    y[flip] = 1 - y[flip]
    return X, y


def write_csv(path, X, y):
    with open(path, "w") as f:
        f.write(f"# synthetic benchmark dataset: {X.shape[0]} rows, "
                f"{X.shape[1]} features, binary label last\n")
        for row, label in zip(X, y):
            f.write(",".join(f"{v:.6f}" for v in row) + f",{label}\n")


def main():
    out_dir = os.path.join(os.path.dirname(__file__), "..", "data")
    os.makedirs(out_dir, exist_ok=True)
    for i, (name, (n_rows, n_cont, n_int, flip)) in enumerate(sorted(SPECS.items())):
        X, y = make_dataset(name, n_rows, n_cont, n_int, flip, seed=9000 + i)
        path = os.path.join(out_dir, f"{name}.csv")
        write_csv(path, X, y)
        print(f"{name}: {X.shape[0]}x{X.shape[1]} features + label -> {path} "
              f"(positives {y.mean():.2f})")


if __name__ == "__main__":
    main()
