"""Independent reference implementations used only by the tests."""
import itertools

import numpy as np


def cox_de_boor(knots, i, p, x):
    if p == 0:
        return 1.0 if knots[i] <= x < knots[i + 1] else 0.0
    out = 0.0
    d1 = knots[i + p] - knots[i]
    d2 = knots[i + p + 1] - knots[i + 1]
    if d1 > 0:
        out += (x - knots[i]) / d1 * cox_de_boor(knots, i, p - 1, x)
    if d2 > 0:
        out += (knots[i + p + 1] - x) / d2 * cox_de_boor(knots, i + 1, p - 1, x)
    return out


def basis_values(basis, x):
    if x >= basis.domain[1]:
        x = np.nextafter(basis.domain[1], -np.inf)
    return np.array([cox_de_boor(basis.knots, i, basis.order, x) for i in range(basis.n_funcs)])


def dense_cp_value(model, x):
    """Materialise the full coefficient tensor and contract it with basis values."""
    shape = [b.n_funcs for b in model.bases]
    T = np.zeros(shape)
    for j in range(model.rank):
        outer = model.modal_weights[j]
        for i in range(model.dims):
            outer = np.multiply.outer(outer, model.coeffs[i][j])
        T += outer
    vals = [basis_values(b, xi) for b, xi in zip(model.bases, x)]
    total = 0.0
    for idx in itertools.product(*[range(n) for n in shape]):
        w = 1.0
        for i, c in enumerate(idx):
            w *= vals[i][c]
        total += T[idx] * w
    return total


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8))


def _d1(u, h):
    """Fourth-order first derivative along both axes, second order next to the walls."""
    p = np.pad(u, 2)
    dx = (-p[4:, 2:-2] + 8 * p[3:-1, 2:-2] - 8 * p[1:-3, 2:-2] + p[:-4, 2:-2]) / (12 * h)
    dy = (-p[2:-2, 4:] + 8 * p[2:-2, 3:-1] - 8 * p[2:-2, 1:-3] + p[2:-2, :-4]) / (12 * h)
    q = np.pad(u, 1)
    dx[0] = (q[2, 1:-1] - q[0, 1:-1]) / (2 * h)
    dx[-1] = (q[-1, 1:-1] - q[-3, 1:-1]) / (2 * h)
    dy[:, 0] = (q[1:-1, 2] - q[1:-1, 0]) / (2 * h)
    dy[:, -1] = (q[1:-1, -1] - q[1:-1, -3]) / (2 * h)
    return dx, dy


def _lap(u, h):
    p = np.pad(u, 2)
    c = lambda a, b: p[2 + a:p.shape[0] - 2 + a, 2 + b:p.shape[1] - 2 + b]
    lx = (-c(2, 0) + 16 * c(1, 0) - 30 * c(0, 0) + 16 * c(-1, 0) - c(-2, 0)) / (12 * h * h)
    ly = (-c(0, 2) + 16 * c(0, 1) - 30 * c(0, 0) + 16 * c(0, -1) - c(0, -2)) / (12 * h * h)
    q = np.pad(u, 1)
    lx[0] = (q[2, 1:-1] - 2 * q[1, 1:-1] + q[0, 1:-1]) / h ** 2
    lx[-1] = (q[-1, 1:-1] - 2 * q[-2, 1:-1] + q[-3, 1:-1]) / h ** 2
    ly[:, 0] = (q[1:-1, 2] - 2 * q[1:-1, 1] + q[1:-1, 0]) / h ** 2
    ly[:, -1] = (q[1:-1, -1] - 2 * q[1:-1, -2] + q[1:-1, -3]) / h ** 2
    return lx + ly


def rotating_plume_fd(n, omega, D, t_end, center, sigma0):
    """Method-of-lines solve of u_t - omega (y-1/2) u_x + omega (x-1/2) u_y = D lap u
    on n x n interior nodes with zero walls; RK4 in time."""
    h = 1.0 / (n + 1)
    x = np.arange(1, n + 1) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    u = np.exp(-((X - center[0]) ** 2 + (Y - center[1]) ** 2) / (2 * sigma0 ** 2))
    ux_w, uy_w = omega * (Y - 0.5), -omega * (X - 0.5)

    def rhs(v):
        dx, dy = _d1(v, h)
        return ux_w * dx + uy_w * dy + D * _lap(v, h)

    steps = int(np.ceil(t_end / (0.25 * h)))
    dt = t_end / steps
    for _ in range(steps):
        k1 = rhs(u)
        k2 = rhs(u + 0.5 * dt * k1)
        k3 = rhs(u + 0.5 * dt * k2)
        k4 = rhs(u + dt * k3)
        u = u + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return X, Y, u


def burgers_godunov(u0, n, t_end, cfl=0.45):
    """First-order Godunov finite volumes for u_t + (u^2/2)_x = 0 on [0, 1]
    with odd reflection at both walls. Returns cell centres and averages."""
    x = (np.arange(n) + 0.5) / n
    h = 1.0 / n
    u = u0(x)
    t = 0.0

    def flux(ul, ur):
        f = np.maximum(0.5 * np.maximum(ul, 0) ** 2, 0.5 * np.minimum(ur, 0) ** 2)
        return np.where(ul > ur, np.maximum(0.5 * ul ** 2, 0.5 * ur ** 2), f)

    while t < t_end:
        dt = min(cfl * h / max(np.abs(u).max(), 1e-12), t_end - t)
        q = np.concatenate([[-u[0]], u, [-u[-1]]])
        F = flux(q[:-1], q[1:])
        u = u - dt / h * (F[1:] - F[:-1])
        t += dt
    return x, u
