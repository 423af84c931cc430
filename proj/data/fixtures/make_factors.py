# Regenerates factors.csv. The latent factors are synthetic, over 105
# periods: two mean-zero smooth cycles and one differential trend, plus a
# common time effect nu. Values are rounded to 6
# decimals.
import numpy as np

T = 105
s = np.arange(T) / (T - 1)
nu = 0.5 * s + 0.1 * np.sin(2 * np.pi * 3 * s)
mu1 = np.sin(2 * np.pi * 2 * s + 0.3)
mu2 = np.sin(2 * np.pi * 3.5 * s + 1.1)
mu3 = 2.0 * (s - 0.5)

with open("factors.csv", "w") as f:
    f.write("t,nu,mu1,mu2,mu3\n")
    for t in range(T):
        f.write(f"{t + 1},{nu[t]:.6f},{mu1[t]:.6f},{mu2[t]:.6f},{mu3[t]:.6f}\n")
