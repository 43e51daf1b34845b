# Regenerates stats_reference.json. Needs numpy and scipy.
import json, numpy as np
from scipy import stats
rng = np.random.default_rng(7)
cases = []
for i in range(100):
    na, nb = int(rng.integers(3, 60)), int(rng.integers(3, 60))
    a = np.round(rng.normal(rng.uniform(0, 1), rng.uniform(0.05, 0.5), na), 6)
    b = np.round(rng.normal(rng.uniform(0, 1), rng.uniform(0.05, 0.5), nb), 6)
    t = stats.ttest_ind(a, b, equal_var=False)
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    df = (va + vb) ** 2 / (va**2 / (na - 1) + vb**2 / (nb - 1))
    n1, n2 = int(rng.integers(20, 5000)), int(rng.integers(20, 5000))
    k1, k2 = int(rng.integers(1, n1)), int(rng.integers(1, n2))
    pool = (k1 + k2) / (n1 + n2)
    z = (k1 / n1 - k2 / n2) / np.sqrt(pool * (1 - pool) * (1 / n1 + 1 / n2))
    pz = 2 * stats.norm.sf(abs(z))
    level = float(rng.choice([0.90, 0.95, 0.99]))
    p = float(rng.uniform(0.01, 0.99)); n = int(rng.integers(10, 50000))
    hw = stats.norm.ppf(1 - (1 - level) / 2) * np.sqrt(p * (1 - p) / n)
    cases.append(dict(a=a.tolist(), b=b.tolist(), welch_t=float(t.statistic), welch_p=float(t.pvalue), welch_df=float(df),
                      k1=k1, n1=n1, k2=k2, n2=n2, z=float(z), z_p=float(pz), p=p, n=n, level=level, wald=float(hw)))
json.dump(cases, open("stats_reference.json", "w"), indent=1)
