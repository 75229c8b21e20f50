"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from budgetbo.kernels import RBF, ExpDecay, kernel_eval


def fd_grad_t(spec, t, t2, h=1e-6):
    """Central difference in the epoch of the second argument."""
    return (kernel_eval(spec, [t], [t2 + h]) - kernel_eval(spec, [t], [t2 - h])) / (2 * h)


def fd_hess_tt(spec, t, t2, h=1e-4):
    """Four-point mixed central difference."""
    k = lambda a, b: kernel_eval(spec, [a], [b])
    return (k(t + h, t2 + h) - k(t + h, t2 - h) - k(t - h, t2 + h) + k(t - h, t2 - h)) / (4 * h * h)


def rel_err(a, b, floor):
    return abs(a - b) / max(abs(b), floor)


def random_tkernel(rng, family):
    if family == "ED":
        return ExpDecay(rng.uniform(0.2, 3.0), rng.uniform(0.2, 3.0), rng.uniform(0.0, 1.0))
    return RBF((rng.uniform(0.1, 2.0),), 1.0)


def derivative_errors(rng, family, n_pairs=5):
    """Worst grad / hess relative errors for one random t-kernel.

    The relative error floor is a small fraction of the derivative's natural
    magnitude, so zero crossings of the exact value do not blow up the ratio.
    """
    k = random_tkernel(rng, family)
    if family == "ED":
        g_floor = 1e-3 * k.alpha / k.beta
        h_floor = 1e-3 * k.alpha * (k.alpha + 1) / k.beta**2
    else:
        l = k.lengthscales[0]
        g_floor, h_floor = 1e-3 / l, 1e-3 / l**2
    eg = eh = 0.0
    for _ in range(n_pairs):
        t, t2 = rng.uniform(0.05, 1.0, 2)
        g = float(k.grad_t([t], [t2])[0, 0])
        h = float(k.hess_tt([t], [t2])[0, 0])
        eg = max(eg, rel_err(g, fd_grad_t(k, t, t2), g_floor))
        eh = max(eh, rel_err(h, fd_hess_tt(k, t, t2), h_floor))
    return eg, eh


def dense_lml(K, y):
    """Gaussian log density via a dense determinant and solve."""
    n = len(y)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * y @ np.linalg.solve(K, y) - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi))


def dense_posterior(K_ss, K_sz, K_zz, y):
    """Posterior mean and variance from explicit inverses."""
    Kinv = np.linalg.inv(K_zz)
    return K_sz @ Kinv @ y, np.diag(K_ss - K_sz @ Kinv @ K_sz.T)


def with_jitter(K, rel=1e-8):
    """The diagonal jitter every Gram matrix carries, relative to its mean diagonal."""
    return K + rel * np.mean(np.diag(K)) * np.eye(K.shape[0])


def learning_curve_dataset(rng, monotone=True, n_configs=2):
    """Saturating curves sampled at regular epochs, one per random 1-D config.

    With ``monotone=False`` every curve turns down after a random epoch, as an
    overfitting learner would.
    """
    xs = rng.random((n_configs, 1))
    Z, y = [], []
    for x in xs:
        n = rng.integers(5, 11)
        ts = np.arange(1, n + 1) / n
        a, b = rng.uniform(0.3, 1.0), rng.uniform(0.05, 0.4)
        f = a * (1 - np.exp(-ts / b)) + 0.2 * x[0]
        if not monotone:
            f = f - rng.uniform(0.4, 1.0) * a * np.maximum(ts - rng.uniform(0.3, 0.6), 0.0)
        y.extend(f)
        Z.extend([x[0], t] for t in ts)
    return np.array(Z), np.array(y), xs


def brute_force_qei(mu, cov, y_best, n=200_000, seed=12345):
    """q-EI by direct multivariate-normal draws (eigen-based sampler, not Cholesky)."""
    rng = np.random.default_rng(seed)
    y = rng.multivariate_normal(mu, cov, size=n, method="eigh")
    imp = np.maximum(y.max(axis=1) - y_best, 0.0)
    return imp.mean(), imp.std(ddof=1) / np.sqrt(n)


def toy_discrete_model(rng, n_points=5):
    """GP over a few 1-D configs at t = 1, conditioned on random data elsewhere."""
    from budgetbo.gp import GPModel
    from budgetbo.kernels import RBF, ExpDecay, Product

    k = Product(RBF((rng.uniform(0.15, 0.5),)), ExpDecay(1.0, 0.5, 0.1), 1.0)
    Z = np.column_stack([rng.random(4), rng.uniform(0.2, 1.0, 4)])
    m = GPModel(k, Z, rng.standard_normal(4), noise=1e-3)
    cands = np.sort(rng.random(n_points))[:, None]
    return m, cands


class CurveBackend:
    """Backend whose every config follows the same curve ``f(epoch)``; unit cost per epoch."""

    def __init__(self, f, t_max, dim, noise=0.005, seed=0):
        self.f, self.t_max, self.dim, self.noise, self.seed = f, t_max, dim, noise, seed

    def train(self, x, start, end):
        rows = []
        for t in range(start + 1, end + 1):
            e = np.random.default_rng([self.seed, t]).standard_normal()
            rows.append((t, float(self.f(t) + self.noise * e), 1.0))
        return rows


def early_stop_scenario(kind, seed, t_max=20, config=None):
    """Optimizer state plus the config to evaluate, for the two early-stop scenarios.

    ``plateau``: past curves saturate quickly; the new curve levels off at 0.4
    while the incumbent is 0.6.  ``late``: past curves rise late (sigmoids)
    and the new config sits about one lengthscale from its nearest neighbour,
    so the model is unsure about its final epochs; the new curve is flat for
    the first half and then rises to 0.9.
    Kernel hyperparameters are fixed (RBF lengthscale 0.2) so the scenario
    controls how far the new config is from the data.
    """
    from budgetbo.kernels import RBF, ExpDecay, Product
    from budgetbo.planner import BAPIConfig, OptState

    rng = np.random.default_rng(seed)
    hist_x = rng.uniform(0.2, 0.8, (6, 2))
    Z, y = [], []
    for hx in hist_x:
        a = rng.uniform(0.3, 0.9)
        mid = rng.uniform(0.5, 0.7) * t_max
        for t in (2, 5, 10, 15, 20):
            if kind == "plateau":
                v = a * (1 - np.exp(-t / 2.0))
            else:
                v = 0.2 + a / (1 + np.exp(-(t - mid) / 1.5))
            Z.append([*hx, t / t_max])
            y.append(v + 0.005 * rng.standard_normal())
    th = rng.uniform(0, 2 * np.pi)
    x = np.clip(hist_x[0] + 0.2 * np.array([np.cos(th), np.sin(th)]), 0, 1)
    if kind == "plateau":
        f = lambda t: 0.4 * (1 - np.exp(-t / 1.5))  # noqa: E731
        incumbent = 0.6
    else:
        f = lambda t: 0.2 + 0.7 / (1 + np.exp(-(t - 0.7 * t_max) / 1.5))  # noqa: E731
        incumbent = max(max(y), 0.9)
    state = OptState(CurveBackend(f, t_max, 2, seed=seed), 1e9, config or BAPIConfig(), seed=seed)
    state.obj_Z, state.obj_y = np.array(Z), np.array(y)
    state.incumbent = incumbent
    state.obj_gp = state.obj_gp.with_params(Product(RBF((0.2, 0.2)), ExpDecay(1.0, 0.5, 0.1), 1.0), 1e-4)
    state.refit(optimize=False)
    return state, x
