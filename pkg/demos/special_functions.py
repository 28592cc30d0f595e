"""Tour of the special functions behind the closed-form error probability."""
import math

import numpy as np

from wetfbl import bessel_k, gauss_q, hyp1f2, product_pdf, zpk0_antiderivative

# K0 has a logarithmic pole at the origin and decays like exp(-x)/sqrt(x).
# The scaled variant keeps large arguments representable.
for x in (1e-6, 0.5, 2.0, 50.0, 800.0):
    print(f"x={x:<8g} K0={bessel_k(0, x):.6e}  exp(x)K0={bessel_k(0, x, scaled=True):.6e}")

# 1F2(1; b1, b2; z) grows roughly like exp(2 sqrt z); log_scale divides that out.
z = 4.0e4
print("\n1F2(1;3,4;400)       =", hyp1f2(3, 4, 400.0))
print("exp(-400) 1F2(1;3,4;4e4) =", hyp1f2(3, 4, z, log_scale=2 * math.sqrt(z)))

# The product of two unit-mean gamma variates (times m^2) has density
# 2/Gamma(m)^2 z^(m-1) K0(2 sqrt z); its CDF is the antiderivative scaled by 2/Gamma(m)^2.
m = 3.0
for z in (0.5, 5.0, 50.0):
    cdf = 2 / math.gamma(m) ** 2 * zpk0_antiderivative(m - 1, z)
    print(f"\nP(Z <= {z:>4}) = {cdf:.6f}   density there {product_pdf(z, m):.3e}")

# Cross-check the CDF against samples.
rng = np.random.default_rng(1)
zs = rng.gamma(m, 1.0, 10 ** 6) * rng.gamma(m, 1.0, 10 ** 6)
print("empirical P(Z <= 5)  =", np.mean(zs <= 5.0))

# The Gaussian tail stays accurate far into the tail.
for x in (1.0, 5.0, 10.0, 37.0):
    print(f"Q({x}) = {gauss_q(x):.6e}")
