"""Adaptive transmit power versus the best fixed power at equal delay."""
from wetfbl import SystemParams, best_fixed_power, min_error_given_delay

params = SystemParams()
k = 216

# With adaptive power the sensor spends whatever it harvested. With a fixed
# power it must first have harvested enough, otherwise it stays silent; that
# energy-outage event dominates and keeps the error probability high.
print(" delay   adaptive eps   n*    fixed eps   n*   best power [W]")
for delta in range(500, 3001, 500):
    eps_a, n_a = min_error_given_delay(params, k, delta)
    p_hat, eps_f, n_f = best_fixed_power(params, k, delta)
    print(f"{delta:6d} {eps_a:14.4e} {n_a:4d} {eps_f:12.4e} {n_f:4d} {p_hat:14.4e}")
