"""Rotation, convex-hull, and distance primitives shared across the stack."""

from __future__ import annotations

import numpy as np


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-vector cross product; much cheaper than np.cross on tiny arrays."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix so that skew(a) @ b == np.cross(a, b)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rot(eta: np.ndarray) -> np.ndarray:
    """World-from-body rotation for XYZ-Euler angles (roll, pitch, yaw)."""
    phi, theta, psi = eta
    return rot_z(psi) @ rot_y(theta) @ rot_x(phi)


def rot_to_euler(R: np.ndarray) -> np.ndarray:
    """Inverse of euler_to_rot away from the pitch singularity."""
    theta = np.arcsin(np.clip(-R[2, 0], -1.0, 1.0))
    phi = np.arctan2(R[2, 1], R[2, 2])
    psi = np.arctan2(R[1, 0], R[0, 0])
    return np.array([phi, theta, psi])


def euler_rate_matrix(eta: np.ndarray) -> np.ndarray:
    """Matrix T with omega_world = T(eta) @ eta_dot for XYZ-Euler angles."""
    phi, theta, psi = eta
    ex = rot_z(psi) @ rot_y(theta) @ np.array([1.0, 0.0, 0.0])
    ey = rot_z(psi) @ np.array([0.0, 1.0, 0.0])
    ez = np.array([0.0, 0.0, 1.0])
    return np.column_stack([ex, ey, ez])


def euler_rates_from_omega(eta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    return np.linalg.solve(euler_rate_matrix(eta), omega)


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    a = np.asarray(axis, dtype=float)
    K = skew(a)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rot_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (angle in [0, pi])."""
    cos_a = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_a)
    if angle < 1e-10:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # antipodal case: extract axis from R + I
        A = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(A), 0.0))
        # fix signs from off-diagonal terms
        k = int(np.argmax(axis))
        for i in range(3):
            if i != k and A[k, i] < 0.0:
                axis[i] = -axis[i]
        axis /= np.linalg.norm(axis)
        return angle * axis
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle / (2.0 * np.sin(angle)) * w


def convex_hull_2d(points: np.ndarray) -> np.ndarray:
    """Convex hull of 2-D points, CCW order, via Andrew's monotone chain.

    Collinear input collapses to the two extreme points (a segment); a
    single point comes back as itself.
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 1e-14:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 1e-14:
            upper.pop()
        upper.append(p)
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        # collinear: keep the two extremes
        return np.array([pts[0], pts[-1]])
    return hull


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def hull_signed_distance(hull: np.ndarray, p: np.ndarray) -> float:
    """Signed distance of p to a CCW convex polygon (positive inside).

    Degenerate hulls (segment or point) give minus the distance to them.
    """
    p = np.asarray(p, dtype=float)
    if len(hull) == 0:
        return -np.inf
    if len(hull) == 1:
        return -float(np.linalg.norm(p - hull[0]))
    if len(hull) == 2:
        return -point_segment_distance(p, hull[0], hull[1])
    n = len(hull)
    inside = True
    dist = np.inf
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        edge = b - a
        # CCW: inside points have positive cross(edge, p - a)
        cr = edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0])
        if cr < 0.0:
            inside = False
        dist = min(dist, point_segment_distance(p, a, b))
    return dist if inside else -dist


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-14:
        return float(np.linalg.norm(p - a))
    t = np.clip(np.dot(p - a, ab) / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def segment_segment_closest(
    p0: np.ndarray, p1: np.ndarray, q0: np.ndarray, q1: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Closest points between segments [p0,p1] and [q0,q1] and their distance.

    Candidate-enumeration formulation: the interior stationary point plus
    the four edge projections; robust for parallel and degenerate segments.
    """
    u = p1 - p0
    v = q1 - q0
    w0 = p0 - q0
    a = float(np.dot(u, u))
    b = float(np.dot(u, v))
    c = float(np.dot(v, v))
    d = float(np.dot(u, w0))
    e = float(np.dot(v, w0))
    den = a * c - b * b

    candidates = []
    if den > 1e-14:
        s = (b * e - c * d) / den
        t = (a * e - b * d) / den
        if 0.0 <= s <= 1.0 and 0.0 <= t <= 1.0:
            candidates.append((p0 + s * u, q0 + t * v))

    def project(point, a0, a1):
        seg = a1 - a0
        dd = float(np.dot(seg, seg))
        if dd < 1e-14:
            return a0
        t = np.clip(np.dot(point - a0, seg) / dd, 0.0, 1.0)
        return a0 + t * seg

    candidates.append((project(q0, p0, p1), q0))
    candidates.append((project(q1, p0, p1), q1))
    candidates.append((p0, project(p0, q0, q1)))
    candidates.append((p1, project(p1, q0, q1)))

    best = None
    best_d2 = np.inf
    for cp, cq in candidates:
        d2 = float(np.dot(cp - cq, cp - cq))
        if d2 < best_d2:
            best_d2 = d2
            best = (cp, cq)
    cp, cq = best
    return cp, cq, float(np.sqrt(best_d2))
