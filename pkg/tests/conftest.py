import numpy as np
import pytest

_ROOK = ((1, 0), (-1, 0), (0, 1), (0, -1))
_QUEEN = _ROOK + ((1, 1), (1, -1), (-1, 1), (-1, -1))


def bfs_reachable(rows, cols, scheme, start_cells, max_depth):
    """Independent graph-traversal oracle: cells at graph distance 1..max_depth
    from the start set, working directly from grid coordinates."""
    offsets = _ROOK if scheme == "rook" else _QUEEN
    dist = {c: 0 for c in start_cells}
    frontier = list(start_cells)
    for depth in range(1, max_depth + 1):
        nxt = []
        for cell in frontier:
            x, y = cell % cols, cell // cols
            for dx, dy in offsets:
                nx, ny = x + dx, y + dy
                if 0 <= nx < cols and 0 <= ny < rows:
                    nb = ny * cols + nx
                    if nb not in dist:
                        dist[nb] = depth
                        nxt.append(nb)
        frontier = nxt
    return {c for c, d in dist.items() if 1 <= d <= max_depth}


def dense_mvn_logpdf(y, mean, cov):
    """Brute-force multivariate normal log density via explicit inverse and
    determinant (oracle; no Cholesky)."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = y.size
    r = y - mean
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (n * np.log(2.0 * np.pi) + logdet + r @ np.linalg.inv(cov) @ r)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def conditional_gaussian(mean, cov, obs_idx, target_idx, y_obs):
    """Closed-form Gaussian conditional of target given observed (oracle)."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    s_oo = cov[np.ix_(obs_idx, obs_idx)]
    s_to = cov[np.ix_(target_idx, obs_idx)]
    s_tt = cov[np.ix_(target_idx, target_idx)]
    solve = np.linalg.solve(s_oo, np.column_stack([y_obs - mean[obs_idx]]))
    cond_mean = mean[target_idx] + (s_to @ solve).ravel()
    cond_cov = s_tt - s_to @ np.linalg.solve(s_oo, s_to.T)
    return cond_mean, cond_cov


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
