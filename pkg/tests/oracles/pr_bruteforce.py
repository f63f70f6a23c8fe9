"""Exhaustive per-threshold precision/recall, independent of the package."""


def pr_all_thresholds(scores, hits, n_positive=None):
    if n_positive is None:
        n_positive = sum(1 for h in hits if h)
    points = []
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, h in zip(scores, hits) if s >= t and h)
        fp = sum(1 for s, h in zip(scores, hits) if s >= t and not h)
        points.append((tp / n_positive, tp / (tp + fp)))
    return points


def _gauss_legendre_line(x0, y0, x1, y1, n=1000):
    # composite midpoint rule on a fine grid; exact for linear segments up to round-off
    h = (x1 - x0) / n
    total = 0.0
    for i in range(n):
        x = x0 + (i + 0.5) * h
        total += y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    return total * h


def area_fine_grid(points):
    """Area under the piecewise-linear curve, holding the first precision back to recall 0."""
    if not points:
        return 0.0
    pts = [(0.0, points[0][1])] + list(points)
    area = 0.0
    for (r0, p0), (r1, p1) in zip(pts, pts[1:]):
        if r1 > r0:
            area += _gauss_legendre_line(r0, p0, r1, p1)
    return area
