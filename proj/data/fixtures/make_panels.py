# Regenerates the example panels used by the CLI tests and README.
# three_unit.csv: one treated unit and two donors it is an exact mix of.
# example_panel.csv: 12 units, 20 periods, treated unit "u01" from period 16,
# with two time-invariant covariates.
import numpy as np

with open("three_unit.csv", "w") as f:
    f.write("unit,time,outcome\n")
    for t in range(1, 9):
        a, b = 1.0 + 0.3 * t, 2.0 - 0.1 * t * t / 4
        f.write(f"A,{t},{a:.6f}\nB,{t},{b:.6f}\n")
        f.write(f"T,{t},{0.25 * a + 0.75 * b + (0.5 if t > 6 else 0):.6f}\n")

rng = np.random.default_rng(2024)
N, T, T0, J = 12, 20, 15, 2
s = np.arange(T) / (T - 1)
mu = np.column_stack([np.sin(2 * np.pi * s), s - 0.5])
phi = rng.normal(size=(N, J))
alpha = rng.normal(size=N)
y = alpha[:, None] + phi @ mu.T + 0.1 * rng.normal(size=(N, T))
y[0, T0:] += 1.0
size = alpha + 0.2 * rng.normal(size=N)
region = phi[:, 0] + 0.2 * rng.normal(size=N)
with open("example_panel.csv", "w") as f:
    f.write("unit,time,outcome,size,region\n")
    for i in range(N):
        for t in range(T):
            f.write(f"u{i + 1:02d},{t + 1},{y[i, t]:.6f},{size[i]:.6f},{region[i]:.6f}\n")
