"""Synthetic drift-stream generators: LED, SEA, RBF, and a drift composer.

The semantics follow the established MOA generator family so that streams
built here pose the same learning problems as the widely used benchmark
configurations: LED swaps its first k informative attribute positions with
the first k irrelevant ones, SEA thresholds the sum of the first two
attributes, RBF drifts its centroids continuously with reflection at the
unit-cube walls, and concept transitions are mixed through the sigmoid
schedule 1 / (1 + exp(-4 (t - p) / w)).

Each concept draws from its own child generator (spawned from the stream
seed), so a composed stream is reproducible instance-by-instance from a
single 64-bit seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .streams import (
    StreamSchema,
    StreamSource,
    binary_schema,
    numeric_schema,
    seed_rng,
)

BENCHMARK_LENGTH = 1_000_000
BENCHMARK_DRIFT_POSITIONS = (250_000, 500_000, 750_000)

# Seven-segment encodings of the digits 0-9, segment order:
# top, upper-left, upper-right, middle, lower-left, lower-right, bottom.
LED_SEGMENTS = np.array(
    [
        [1, 1, 1, 0, 1, 1, 1],  # 0
        [0, 0, 1, 0, 0, 1, 0],  # 1
        [1, 0, 1, 1, 1, 0, 1],  # 2
        [1, 0, 1, 1, 0, 1, 1],  # 3
        [0, 1, 1, 1, 0, 1, 0],  # 4
        [1, 1, 0, 1, 0, 1, 1],  # 5
        [1, 1, 0, 1, 1, 1, 1],  # 6
        [1, 0, 1, 0, 0, 1, 0],  # 7
        [1, 1, 1, 1, 1, 1, 1],  # 8
        [1, 1, 1, 1, 0, 1, 1],  # 9
    ],
    dtype=np.float64,
)

LED_NUM_INFORMATIVE = 7
LED_NUM_IRRELEVANT = 17
LED_NUM_FEATURES = LED_NUM_INFORMATIVE + LED_NUM_IRRELEVANT

# The four canonical SEA concept thresholds, in function order.
SEA_THRESHOLDS = (8.0, 9.0, 7.0, 9.5)


def led_digit_segments(digit: int) -> np.ndarray:
    """Seven-segment pattern for ``digit`` as a 0/1 vector."""
    if not 0 <= digit < 10:
        raise ValueError(f"digit must be in [0, 10), got {digit}")
    return LED_SEGMENTS[digit].copy()


class LedConcept:
    """24-attribute LED concept: 7 informative segment bits, 17 noise bits.

    ``num_drift_attributes`` = k swaps output positions {0..k-1} with
    {7..7+k-1}, moving k informative bits into the irrelevant block.
    """

    def __init__(
        self,
        num_drift_attributes: int = 0,
        noise_fraction: float = 0.1,
        rng: Optional[np.random.Generator] = None,
    ):
        if not 0 <= num_drift_attributes <= LED_NUM_INFORMATIVE:
            raise ValueError("num_drift_attributes must be in [0, 7]")
        if not 0.0 <= noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")
        self.num_drift_attributes = num_drift_attributes
        self.noise_fraction = noise_fraction
        self.rng = rng if rng is not None else seed_rng(0)
        perm = np.arange(LED_NUM_FEATURES)
        for i in range(num_drift_attributes):
            perm[i], perm[LED_NUM_INFORMATIVE + i] = (
                perm[LED_NUM_INFORMATIVE + i],
                perm[i],
            )
        self._perm = perm

    @property
    def schema(self) -> StreamSchema:
        return binary_schema(LED_NUM_FEATURES, 10)

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        rng = self.rng
        digits = rng.integers(0, 10, n)
        bits = LED_SEGMENTS[digits]
        if self.noise_fraction > 0.0:
            flips = rng.random((n, LED_NUM_INFORMATIVE)) < self.noise_fraction
            bits = np.abs(bits - flips)
        irrelevant = rng.integers(0, 2, (n, LED_NUM_IRRELEVANT)).astype(np.float64)
        base = np.concatenate([bits, irrelevant], axis=1)
        return base[:, self._perm], digits.astype(np.int64)


class SeaConcept:
    """SEA concept: 3 uniform attributes on [0, 10]; label = attr0+attr1 > threshold.

    With ``balance_classes`` the candidate stream is filtered so emitted
    noise-free labels alternate 0/1; label noise is applied afterwards.
    """

    _CANDIDATE_CHUNK = 1024

    def __init__(
        self,
        threshold: float,
        noise_fraction: float = 0.1,
        balance_classes: bool = True,
        rng: Optional[np.random.Generator] = None,
    ):
        if not 0.0 <= noise_fraction <= 1.0:
            raise ValueError("noise_fraction must be in [0, 1]")
        self.threshold = threshold
        self.noise_fraction = noise_fraction
        self.balance_classes = balance_classes
        self.rng = rng if rng is not None else seed_rng(0)
        self._next_zero = True
        self._pools: list[list[np.ndarray]] = [[], []]
        self._pool_sizes = [0, 0]

    @property
    def schema(self) -> StreamSchema:
        return numeric_schema(3, 2)

    def _group_of(self, X: np.ndarray) -> np.ndarray:
        return (X[:, 0] + X[:, 1] > self.threshold).astype(np.int64)

    def _top_up(self) -> None:
        C = self.rng.random((self._CANDIDATE_CHUNK, 3)) * 10.0
        g = self._group_of(C)
        for grp in (0, 1):
            rows = C[g == grp]
            if len(rows):
                self._pools[grp].append(rows)
                self._pool_sizes[grp] += len(rows)

    def _pop(self, grp: int, n: int) -> np.ndarray:
        while self._pool_sizes[grp] < n:
            self._top_up()
        out, got = [], 0
        pool = self._pools[grp]
        while got < n:
            block = pool[0]
            need = n - got
            if len(block) <= need:
                out.append(block)
                got += len(block)
                pool.pop(0)
            else:
                out.append(block[:need])
                pool[0] = block[need:]
                got += need
        self._pool_sizes[grp] -= n
        return np.concatenate(out)

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.balance_classes:
            first = 0 if self._next_zero else 1
            groups = (np.arange(n) + first) % 2
            X = np.empty((n, 3))
            n0 = int((groups == 0).sum())
            if n0:
                X[groups == 0] = self._pop(0, n0)
            if n - n0:
                X[groups == 1] = self._pop(1, n - n0)
            if n % 2 == 1:
                self._next_zero = not self._next_zero
            labels = groups
        else:
            X = self.rng.random((n, 3)) * 10.0
            labels = self._group_of(X)
        if self.noise_fraction > 0.0:
            flips = self.rng.random(n) < self.noise_fraction
            labels = labels ^ flips
        return X, labels.astype(np.int64)


class RbfConcept:
    """Random-RBF concept with continuously moving centroids.

    Centroids live in the unit cube; each one moves ``drift_speed`` along its
    fixed unit direction per emitted instance and reflects off the [0, 1]
    walls (the motion of a point bouncing in a box, evaluated in closed form
    as a per-coordinate triangle wave).  An instance is a weighted-sampled
    centroid plus an isotropic offset of magnitude |N(0, std_i)|.
    """

    def __init__(
        self,
        num_centroids: int = 50,
        num_classes: int = 5,
        num_features: int = 10,
        drift_speed: float = 0.0,
        rng: Optional[np.random.Generator] = None,
        init_rng: Optional[np.random.Generator] = None,
        centers: Optional[np.ndarray] = None,
        stds: Optional[np.ndarray] = None,
        weights: Optional[np.ndarray] = None,
        class_labels: Optional[np.ndarray] = None,
        directions: Optional[np.ndarray] = None,
        reflect: bool = True,
    ):
        self.num_centroids = num_centroids
        self.num_classes = num_classes
        self.num_features = num_features
        self.drift_speed = drift_speed
        self.reflect = reflect
        self.rng = rng if rng is not None else seed_rng(0)
        r = init_rng if init_rng is not None else self.rng
        self.centers0 = (
            np.array(centers, dtype=np.float64)
            if centers is not None
            else r.random((num_centroids, num_features))
        )
        self.class_labels = (
            np.array(class_labels, dtype=np.int64)
            if class_labels is not None
            else r.integers(0, num_classes, num_centroids)
        )
        self.stds = (
            np.array(stds, dtype=np.float64) if stds is not None else 1.0 - r.random(num_centroids)
        )
        self.weights = (
            np.array(weights, dtype=np.float64)
            if weights is not None
            else 1.0 - r.random(num_centroids)
        )
        if np.any(self.weights <= 0):
            raise ValueError("centroid weights must be positive")
        if directions is not None:
            dirs = np.array(directions, dtype=np.float64)
        else:
            dirs = r.standard_normal((num_centroids, num_features))
        self.directions = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        self._cum = np.cumsum(self.weights) / self.weights.sum()
        self._emitted = 0

    @property
    def schema(self) -> StreamSchema:
        return numeric_schema(self.num_features, self.num_classes)

    def _centers_at(self, steps: np.ndarray) -> np.ndarray:
        """Centroid positions after ``steps`` drift advances, per row."""
        if self.drift_speed == 0.0:
            return np.broadcast_to(self.centers0, (len(steps),) + self.centers0.shape)
        disp = self.drift_speed * steps
        z = self.centers0[None, :, :] + self.directions[None, :, :] * disp[:, None, None]
        if not self.reflect:
            return z
        r = np.mod(z, 2.0)
        return 1.0 - np.abs(r - 1.0)

    def current_centers(self) -> np.ndarray:
        return self._centers_at(np.array([self._emitted]))[0]

    def sample(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        rng = self.rng
        sel = np.searchsorted(self._cum, rng.random(n), side="right")
        dirs = rng.standard_normal((n, self.num_features))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        mags = np.abs(rng.standard_normal(n)) * self.stds[sel]
        steps = self._emitted + np.arange(n)
        if self.drift_speed == 0.0:
            centers = self.centers0[sel]
        else:
            disp = self.drift_speed * steps
            z = self.centers0[sel] + self.directions[sel] * disp[:, None]
            if self.reflect:
                r = np.mod(z, 2.0)
                z = 1.0 - np.abs(r - 1.0)
            centers = z
        X = centers + dirs * mags[:, None]
        self._emitted += n
        return X, self.class_labels[sel]


class ConceptStream(StreamSource):
    """StreamSource over a single concept sampler."""

    def __init__(self, concept, length: Optional[int] = None):
        super().__init__(concept.schema, length)
        self.concept = concept

    def _generate_block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.concept.sample(n)


@dataclass(frozen=True)
class DriftStage:
    position: int
    width: int
    concept_index: int  # index into the composed stream's concept list


class ComposedDriftStream(StreamSource):
    """Splices concepts with sigmoid-mixed transitions.

    At 1-based instance index t, transition i contributes the probability
    s_i(t) = 1 / (1 + exp(-4 (t - p_i) / w_i)) of moving past concept i; the
    chain is walked in stage order and stops at the first failed draw, so
    once a transition has completed its incoming concept becomes the
    outgoing concept of the next stage.
    """

    def __init__(
        self,
        concepts: Sequence,
        stages: Sequence[DriftStage],
        mix_rng: np.random.Generator,
        length: Optional[int] = None,
        record_provenance: bool = False,
    ):
        positions = [s.position for s in stages]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("stage positions must be strictly increasing")
        if any(s.width < 1 for s in stages):
            raise ValueError("stage widths must be >= 1")
        super().__init__(concepts[0].schema, length)
        self.concepts = list(concepts)
        self.stages = list(stages)
        self.mix_rng = mix_rng
        self._t_next = 1
        self.provenance: Optional[list[np.ndarray]] = [] if record_provenance else None

    def _generate_block(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        ts = np.arange(self._t_next, self._t_next + n, dtype=np.float64)
        self._t_next += n
        u = self.mix_rng.random((n, len(self.stages)))
        sel = np.zeros(n, dtype=np.intp)
        alive = np.ones(n, dtype=bool)
        for i, stage in enumerate(self.stages):
            s = expit(4.0 * (ts - stage.position) / stage.width)
            alive &= u[:, i] < s
            sel[alive] = stage.concept_index
        if self.provenance is not None:
            self.provenance.append(sel.copy())
        d = self._schema.num_features
        X = np.empty((n, d))
        y = np.empty(n, dtype=np.int64)
        for ci in np.unique(sel):
            mask = sel == ci
            Xc, yc = self.concepts[ci].sample(int(mask.sum()))
            X[mask] = Xc
            y[mask] = yc
        return X, y


BENCHMARK_STREAMS = ("led_a", "led_g", "sea_a", "sea_g", "rbf_m", "rbf_f")


def make_benchmark_stream(
    name: str,
    seed: int,
    length: int = BENCHMARK_LENGTH,
    record_provenance: bool = False,
) -> StreamSource:
    """Fully configured benchmark stream by name.

    led_a/led_g: LED drifting 3 -> 5 -> 7 attributes at 250k/500k/750k with
    widths 50 / 50,000.  sea_a/sea_g: SEA thresholds 8 -> 9 -> 7 -> 9.5 at
    the same positions and widths, 10% label noise, balanced classes.
    rbf_m/rbf_f: 50 centroids, 5 classes, 10 features, centroid speed
    0.0001 / 0.001, no scheduled transitions.
    """
    ss = np.random.SeedSequence(seed)
    if name in ("led_a", "led_g"):
        width = 50 if name == "led_a" else 50_000
        rngs = [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(5)]
        concepts = [
            LedConcept(num_drift_attributes=k, noise_fraction=0.1, rng=r)
            for k, r in zip((0, 3, 5, 7), rngs[1:])
        ]
        stages = [
            DriftStage(p, width, i + 1)
            for i, p in enumerate(BENCHMARK_DRIFT_POSITIONS)
        ]
        return ComposedDriftStream(
            concepts, stages, rngs[0], length, record_provenance=record_provenance
        )
    if name in ("sea_a", "sea_g"):
        width = 50 if name == "sea_a" else 50_000
        rngs = [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(5)]
        concepts = [
            SeaConcept(th, noise_fraction=0.1, balance_classes=True, rng=r)
            for th, r in zip(SEA_THRESHOLDS, rngs[1:])
        ]
        stages = [
            DriftStage(p, width, i + 1)
            for i, p in enumerate(BENCHMARK_DRIFT_POSITIONS)
        ]
        return ComposedDriftStream(
            concepts, stages, rngs[0], length, record_provenance=record_provenance
        )
    if name in ("rbf_m", "rbf_f"):
        speed = 1e-4 if name == "rbf_m" else 1e-3
        init_rng, inst_rng = (np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(2))
        concept = RbfConcept(
            num_centroids=50,
            num_classes=5,
            num_features=10,
            drift_speed=speed,
            rng=inst_rng,
            init_rng=init_rng,
        )
        return ConceptStream(concept, length)
    raise ValueError(f"unknown benchmark stream {name!r}; expected one of {BENCHMARK_STREAMS}")
