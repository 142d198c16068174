"""Target distributions, noise sources, and the string grammar for both.

Targets expose vectorized ``sample``/``pdf``/``cdf``/``quantile`` plus
``breakpoints()`` (support edges where the density is non-smooth, used to
segment quadratures). Heavy-tailed families sample by inverse-cdf so a single
uniform draw maps to one sample, keeping streams easy to reason about.

Grammar examples::

    normal:4,2      uniform:-2,2      cauchy:1,2      pareto:1,1
    mix:[normal:5,2;normal:-1,1]
    mix:[normal:5,2@0.3;pareto:5,1@0.7]

Pareto takes (scale, shape): support [scale, inf), cdf 1 - (scale/x)**shape.
Mixture weights default to uniform; explicit ``@w`` weights must sum to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from . import rng as rng_mod

# Quantile arguments are clipped into this open interval before inversion so
# that float round-off at u = 0 or 1 cannot emit infinities.
_U_EPS = 1e-15


def _check_u(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("quantile argument must lie strictly inside (0, 1)")
    return u


class TargetDistribution:
    """Interface shared by every target family."""

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def cdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, u) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> list[float]:
        """Finite points where the density is discontinuous or kinked."""
        return []

    def spec_string(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.spec_string()


@dataclass(frozen=True)
class Normal(TargetDistribution):
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("normal scale must be positive")

    def sample(self, n, rng):
        return self.mu + self.sigma * rng.standard_normal(n)

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * np.sqrt(2.0 * np.pi))

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=np.float64) - self.mu) / self.sigma)

    def quantile(self, u):
        return self.mu + self.sigma * ndtri(_check_u(u))

    def spec_string(self):
        return f"normal:{self.mu:g},{self.sigma:g}"


@dataclass(frozen=True)
class Uniform(TargetDistribution):
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("uniform bounds must satisfy a < b")

    def sample(self, n, rng):
        return self.a + (self.b - self.a) * rng.random(n)

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = (x >= self.a) & (x <= self.b)
        return np.where(inside, 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def quantile(self, u):
        return self.a + (self.b - self.a) * _check_u(u)

    def breakpoints(self):
        return [self.a, self.b]

    def spec_string(self):
        return f"uniform:{self.a:g},{self.b:g}"


@dataclass(frozen=True)
class Cauchy(TargetDistribution):
    x0: float
    gamma: float

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("cauchy scale must be positive")

    def sample(self, n, rng):
        # Inverse cdf of a uniform draw (heavy tail, no rejection step).
        return np.asarray(self.quantile(np.clip(rng.random(n), _U_EPS, 1.0 - _U_EPS)))

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.x0) / self.gamma
        return 1.0 / (np.pi * self.gamma * (1.0 + z * z))

    def cdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.x0) / self.gamma
        return np.arctan(z) / np.pi + 0.5

    def quantile(self, u):
        return self.x0 + self.gamma * np.tan(np.pi * (_check_u(u) - 0.5))

    def spec_string(self):
        return f"cauchy:{self.x0:g},{self.gamma:g}"


@dataclass(frozen=True)
class Pareto(TargetDistribution):
    """Pareto with scale ``xm`` (left support edge) and shape ``alpha``."""

    xm: float
    alpha: float

    def __post_init__(self):
        if self.xm <= 0 or self.alpha <= 0:
            raise ValueError("pareto scale and shape must be positive")

    def sample(self, n, rng):
        return np.asarray(self.quantile(np.clip(rng.random(n), _U_EPS, 1.0 - _U_EPS)))

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        safe = np.maximum(x, self.xm)
        dens = self.alpha * self.xm**self.alpha / safe ** (self.alpha + 1.0)
        return np.where(x >= self.xm, dens, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        safe = np.maximum(x, self.xm)
        return np.where(x >= self.xm, 1.0 - (self.xm / safe) ** self.alpha, 0.0)

    def quantile(self, u):
        return self.xm * (1.0 - _check_u(u)) ** (-1.0 / self.alpha)

    def breakpoints(self):
        return [self.xm]

    def spec_string(self):
        return f"pareto:{self.xm:g},{self.alpha:g}"


@dataclass(frozen=True)
class Mixture(TargetDistribution):
    components: tuple[TargetDistribution, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        if len(self.components) != len(self.weights):
            raise ValueError("one weight per component required")
        if any(w < 0 for w in self.weights):
            raise ValueError("mixture weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    def sample(self, n, rng):
        if len(self.components) == 1:
            # Skip the component draw so a one-term mixture consumes the
            # stream exactly like its component does.
            return self.components[0].sample(n, rng)
        idx = rng.choice(len(self.components), size=n, p=np.asarray(self.weights))
        out = np.empty(n, dtype=np.float64)
        for c, comp in enumerate(self.components):
            mask = idx == c
            cnt = int(mask.sum())
            if cnt:
                out[mask] = comp.sample(cnt, rng)
        return out

    def pdf(self, x):
        return sum(w * c.pdf(x) for c, w in zip(self.components, self.weights))

    def cdf(self, x):
        return sum(w * c.cdf(x) for c, w in zip(self.components, self.weights))

    def quantile(self, u):
        """Invert the mixture cdf by vectorized bisection.

        The root is bracketed by the extreme component quantiles: the mixture
        cdf at min_c Q_c(u) is <= u and at max_c Q_c(u) is >= u.
        """
        u = _check_u(u)
        scalar = np.ndim(u) == 0
        u = np.atleast_1d(u)
        qs = np.stack([np.atleast_1d(np.asarray(c.quantile(u))) for c in self.components])
        lo = qs.min(axis=0)
        hi = qs.max(axis=0)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            too_low = np.asarray(self.cdf(mid)) < u
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
            if np.max(hi - lo) <= 1e-12 * max(1.0, np.max(np.abs(mid))):
                break
        out = 0.5 * (lo + hi)
        return float(out[0]) if scalar else out

    def breakpoints(self):
        pts: list[float] = []
        for c in self.components:
            pts.extend(c.breakpoints())
        return sorted(set(pts))

    def spec_string(self):
        inner = ";".join(
            f"{c.spec_string()}@{w:g}" for c, w in zip(self.components, self.weights)
        )
        return f"mix:[{inner}]"


# ---------------------------------------------------------------------------
# Noise sources


@dataclass(frozen=True)
class NoiseSource:
    """Latent noise feeding the generator: standard normal or uniform.

    ``sample`` with no generator replays the source's own seeded stream from
    the start, so repeated standalone calls are identical; pass an advancing
    generator (training loops do) to draw a continuing sequence.
    """

    kind: str = "standard_normal"
    low: float = -1.0
    high: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("standard_normal", "uniform"):
            raise ValueError(f"unknown noise kind '{self.kind}'")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform noise bounds must satisfy low < high")

    def stream(self) -> np.random.Generator:
        return rng_mod.stream(self.seed, "noise-source")

    def sample(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is None:
            rng = self.stream()
        if self.kind == "standard_normal":
            return rng.standard_normal(n)
        return self.low + (self.high - self.low) * rng.random(n)

    def cdf(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if self.kind == "standard_normal":
            return ndtr(z)
        return np.clip((z - self.low) / (self.high - self.low), 0.0, 1.0)

    def spec_string(self) -> str:
        if self.kind == "standard_normal":
            return "normal"
        return f"uniform:{self.low:g},{self.high:g}"


def optimal_transform(
    target: TargetDistribution,
    noise: NoiseSource,
    z,
    reflected: bool = False,
) -> np.ndarray:
    """The monotone map sending the noise law onto the target law.

    Composes the target quantile with the noise cdf; ``reflected`` gives the
    decreasing variant (quantile of the survival value), the only other
    continuous transport between the two laws.
    """
    u = np.clip(noise.cdf(z), _U_EPS, 1.0 - _U_EPS)
    if reflected:
        u = 1.0 - u
    return np.asarray(target.quantile(u))


# ---------------------------------------------------------------------------
# String grammar


def _split_top(s: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_target(text: str) -> TargetDistribution:
    """Parse the target grammar; raises ValueError with the offending text."""
    text = text.strip()
    kind, sep, rest = text.partition(":")
    kind = kind.strip().lower()
    if not sep:
        raise ValueError(f"malformed distribution '{text}': missing ':'")
    if kind == "mix":
        rest = rest.strip()
        if not (rest.startswith("[") and rest.endswith("]")):
            raise ValueError(f"malformed mixture '{text}': expected mix:[...]")
        items = _split_top(rest[1:-1], ";")
        comps: list[TargetDistribution] = []
        weights: list[float | None] = []
        for item in items:
            body, at, w = item.rpartition("@")
            if at and "]" not in w:
                comps.append(parse_target(body))
                weights.append(float(w))
            else:
                comps.append(parse_target(item))
                weights.append(None)
        given = [w for w in weights if w is not None]
        if given and len(given) != len(weights):
            raise ValueError(f"mixture '{text}' mixes weighted and unweighted parts")
        if not given:
            weights = [1.0 / len(comps)] * len(comps)
        return Mixture(tuple(comps), tuple(float(w) for w in weights))
    try:
        params = [float(p) for p in rest.split(",")]
    except ValueError as exc:
        raise ValueError(f"malformed parameters in '{text}'") from exc
    if kind == "normal":
        if len(params) != 2:
            raise ValueError(f"normal takes 2 parameters, got {len(params)}")
        return Normal(*params)
    if kind == "uniform":
        if len(params) != 2:
            raise ValueError(f"uniform takes 2 parameters, got {len(params)}")
        return Uniform(*params)
    if kind == "cauchy":
        if len(params) != 2:
            raise ValueError(f"cauchy takes 2 parameters, got {len(params)}")
        return Cauchy(*params)
    if kind == "pareto":
        if len(params) != 2:
            raise ValueError(f"pareto takes 2 parameters, got {len(params)}")
        return Pareto(*params)
    raise ValueError(f"unknown distribution kind '{kind}'")


def parse_noise(text: str, seed: int = 0) -> NoiseSource:
    text = text.strip().lower()
    if text in ("normal", "standard_normal", "gaussian"):
        return NoiseSource(kind="standard_normal", seed=seed)
    if text.startswith("uniform:"):
        lo, _, hi = text[len("uniform:") :].partition(",")
        return NoiseSource(kind="uniform", low=float(lo), high=float(hi), seed=seed)
    if text == "uniform":
        return NoiseSource(kind="uniform", seed=seed)
    raise ValueError(f"unknown noise source '{text}'")
