"""Compare the error-probability evaluators on one scenario."""
import warnings

from wetfbl import BlockAllocation, SystemParams, eps_monte_carlo, evaluate
from wetfbl.model import ShortBlocklengthWarning

warnings.simplefilter("ignore", ShortBlocklengthWarning)

# Reference link: 1 W source at 12 m, path-loss exponent 3, Nakagami m=3.
params = SystemParams()
k, n = 216, 300

# As more channel uses go to energy transfer, the harvested power grows and
# the error probability falls. The linearized closed form tracks the exact
# average closely; the outage baseline ignores the finite-blocklength penalty.
methods = ["quadrature_exact", "quadrature_linearized", "closed_form", "asymptotic"]
print("v".rjust(6), "monte_carlo (+/- se)".rjust(26), *(m.rjust(22) for m in methods))
for v in (300, 1000, 2000, 3000, 5000):
    alloc = BlockAllocation(v, n, k)
    mc = eps_monte_carlo(params, alloc, 10 ** 6, stream=v)
    row = [evaluate(params, alloc, method).value for method in methods]
    print(str(v).rjust(6), f"{mc.value:14.4e} +/- {mc.uncertainty:.1e}",
          *(f"{e:22.4e}" for e in row))
