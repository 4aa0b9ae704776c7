"""Training-set construction and the end-to-end denoising pipeline."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import cluster, neural, patch
from .errors import ConfigMismatch, EmptyTrainingSet
from .filters import BilateralConfig, VertexUpdateConfig, bilateral_filter, update_vertices
from .mesh import Mesh
from .noise import NoiseSpec, add_gaussian_noise
from .parallel import DEFAULT_CHUNK, chunked_map, resolve_threads, single_threaded_blas

log = logging.getLogger(__name__)

STAGES = ("descriptor", "inference", "bilateral", "vertex_update")
MODEL_KINDS = ("cvae", "ae", "identity")


@dataclass(frozen=True)
class DenoiseConfig:
    n: int = 20
    K: int = 200
    a_c: tuple[float, float, float] = (0.0, 0.0, 1.0)
    N_B: int = 1
    N_V: int = 20
    sigma2: float = 0.15
    sigma1_mode: str = "squared"
    threads: int | str = 1
    # spin patches about a_c so the nearest neighbour lies along a fixed axis
    twist: bool = True

    def __post_init__(self):
        if self.n < 1 or self.K < 1:
            raise ValueError("n and K must be >= 1")
        object.__setattr__(self, "a_c", tuple(float(x) for x in self.a_c))
        if abs(np.linalg.norm(self.a_c) - 1.0) > 1e-9:
            raise ValueError("a_c must be a unit vector")
        resolve_threads(self.threads)

    @property
    def descriptor_length(self) -> int:
        return 3 * (self.n + 1)


@dataclass(eq=False)
class TrainingSet:
    x_noisy: np.ndarray
    x_clean: np.ndarray
    labels: np.ndarray
    n: int
    twist: bool = True

    def __len__(self):
        return len(self.x_noisy)


@dataclass(eq=False)
class ModelBundle:
    kind: str
    config: DenoiseConfig
    params: neural.CvaeParams | neural.AeParams | None = None
    cluster: cluster.ClusterModel | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "cvae":
            if self.params is None or self.cluster is None:
                raise ValueError("a cvae bundle needs params and cluster centroids")
            if self.params.n_in != self.config.descriptor_length or self.params.n_labels != self.config.K:
                raise ConfigMismatch("CVAE shapes disagree with the config snapshot")
            if self.cluster.K != self.config.K or self.cluster.dim != self.config.descriptor_length:
                raise ConfigMismatch("cluster centroids disagree with the config snapshot")
        elif self.kind == "ae":
            if self.params is None or self.params.n_in != self.config.descriptor_length:
                raise ConfigMismatch("AE shapes disagree with the config snapshot")

    def predict(self, descriptors: np.ndarray) -> np.ndarray:
        """Filtered descriptors for a batch of noisy ones."""
        if self.kind == "identity":
            return np.array(descriptors, dtype=np.float64)
        if self.kind == "ae":
            return neural.infer_ae(self.params, descriptors)
        labels = cluster.assign_labels(self.cluster, descriptors)
        return neural.infer_cvae(self.params, descriptors, labels)


def identity_bundle(cfg: DenoiseConfig) -> ModelBundle:
    """Pass-through model: the decoded center normal is the noisy one."""
    return ModelBundle("identity", cfg)


# --- training set ------------------------------------------------------------


def _offsets(mesh: Mesh, faces: np.ndarray) -> np.ndarray:
    c = mesh.face_centroids
    return c[faces[:, 1:]] - c[faces[:, :1]]


def mesh_training_pairs(clean: Mesh, noisy: Mesh, n: int, a_c=patch.DEFAULT_TARGET, twist: bool = True):
    """Noisy/clean descriptor pairs for every face with a full patch.

    Patches (membership and order) come from the noisy mesh; the clean normals
    of the same faces are rotated with the noisy patch's alignment.
    """
    ps = patch.build_patches(noisy, noisy.adjacency, n)
    faces = ps.faces()
    x_noisy, axes, angles = patch.encode_batch(noisy.face_normals[faces], noisy.face_areas[faces], a_c,
                                               _offsets(noisy, faces) if twist else None)
    rot = patch.rotation_matrices(axes, angles)
    x_clean = patch.encode_normals(clean.face_normals[faces], rot)
    return x_noisy, x_clean


def build_training_set(clean_meshes: Sequence[Mesh], noise: NoiseSpec, n: int, K: int,
                       seed: int = 0, max_iter: int = 100, a_c=patch.DEFAULT_TARGET,
                       twist: bool = True) -> tuple[TrainingSet, cluster.ClusterModel]:
    """Pairs from every face of every mesh plus k-means labels on the noisy side.

    Mesh ``i`` is perturbed with seed ``noise.seed + i``.
    """
    xs_n, xs_c = [], []
    for i, clean in enumerate(clean_meshes):
        noisy = add_gaussian_noise(clean, replace(noise, seed=noise.seed + i))
        xn, xc = mesh_training_pairs(clean, noisy, n, a_c, twist)
        skipped = clean.n_faces - len(xn)
        if skipped:
            log.warning("mesh %d: %d faces without a full %d-neighbourhood skipped", i, skipped, n)
        xs_n.append(xn)
        xs_c.append(xc)
    if not xs_n or sum(len(x) for x in xs_n) == 0:
        raise EmptyTrainingSet("no training pairs produced")
    x_noisy = np.concatenate(xs_n)
    x_clean = np.concatenate(xs_c)
    km = cluster.kmeans_fit(x_noisy, K, seed=seed, max_iter=max_iter)
    labels = cluster.assign_labels(km, x_noisy)
    return TrainingSet(x_noisy, x_clean, labels, n, twist), km


def train_bundle(ts: TrainingSet, km: cluster.ClusterModel | None, cfg: DenoiseConfig,
                 train_cfg: neural.TrainConfig, kind: str = "cvae",
                 noise: NoiseSpec | None = None) -> ModelBundle:
    history: list[neural.EpochStats] = []
    if kind == "cvae":
        params = neural.train_cvae(ts.x_noisy, ts.x_clean, ts.labels, km.K, train_cfg, history.append)
    elif kind == "ae":
        params = neural.train_ae(ts.x_noisy, ts.x_clean, train_cfg, history.append)
        km = None
    else:
        raise ValueError(f"cannot train a {kind!r} model")
    prov = {
        "noise": asdict(noise) if noise is not None else None,
        "epochs": train_cfg.epochs,
        "seed": train_cfg.seed,
        "train_config": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(train_cfg).items()},
        "final_loss": history[-1].train_loss if history else None,
        "final_val_loss": history[-1].val_loss if history else None,
        "n_pairs": len(ts),
    }
    cfg = replace(cfg, n=ts.n, K=km.K if km is not None else cfg.K, twist=ts.twist)
    return ModelBundle(kind, cfg, params, km, prov)


# --- denoising ---------------------------------------------------------------


def check_compatible(bundle: ModelBundle, cfg: DenoiseConfig) -> None:
    b = bundle.config
    if b.n != cfg.n:
        raise ConfigMismatch(f"model patch size n={b.n}, config n={cfg.n}")
    if bundle.kind == "cvae" and b.K != cfg.K:
        raise ConfigMismatch(f"model K={b.K}, config K={cfg.K}")
    if not np.allclose(b.a_c, cfg.a_c, rtol=0, atol=1e-12):
        raise ConfigMismatch("alignment target differs between model and config")
    if b.twist != cfg.twist:
        raise ConfigMismatch("patch twist setting differs between model and config")


@dataclass
class DenoiseResult:
    mesh: Mesh
    cvae_normals: np.ndarray
    filtered_normals: np.ndarray
    skipped_faces: np.ndarray
    timings: dict[str, float]


def denoise(noisy: Mesh, bundle: ModelBundle, cfg: DenoiseConfig | None = None,
            chunk: int = DEFAULT_CHUNK) -> DenoiseResult:
    """Run every stage and keep intermediate normals and per-stage wall times."""
    cfg = cfg or bundle.config
    check_compatible(bundle, cfg)
    threads = resolve_threads(cfg.threads)
    a_c = np.asarray(cfg.a_c)
    timings = {}
    nf = noisy.n_faces
    with single_threaded_blas():
        t0 = time.perf_counter()
        adj = noisy.adjacency
        ps = patch.build_patches(noisy, adj, cfg.n)
        rows = np.flatnonzero(ps.valid)
        faces = ps.faces(rows)
        D = cfg.descriptor_length
        desc = np.empty((len(rows), D))
        axes = np.empty((len(rows), 3))
        angles = np.empty(len(rows))
        fn, fa = noisy.face_normals, noisy.face_areas

        def encode_chunk(lo, hi):
            f = faces[lo:hi]
            off = _offsets(noisy, f) if cfg.twist else None
            desc[lo:hi], axes[lo:hi], angles[lo:hi] = patch.encode_batch(fn[f], fa[f], a_c, off)

        chunked_map(encode_chunk, len(rows), threads, chunk)
        t1 = time.perf_counter()

        normals = np.array(fn)
        decoded = np.empty((len(rows), 3))
        ok = np.ones(len(rows), dtype=bool)

        def infer_chunk(lo, hi):
            out = bundle.predict(desc[lo:hi])
            v = 2.0 * out[:, :3] - 1.0
            nrm = np.linalg.norm(v, axis=1)
            good = nrm > 1e-12
            v[good] /= nrm[good, None]
            R = patch.rotation_matrices(axes[lo:hi], -angles[lo:hi])
            decoded[lo:hi] = np.einsum("rij,rj->ri", R, v)
            ok[lo:hi] = good

        chunked_map(infer_chunk, len(rows), threads, chunk)
        normals[rows[ok]] = decoded[ok]
        cvae_normals = normals.copy()
        t2 = time.perf_counter()

        neighborhoods = np.full((nf, cfg.n + 1), -1, dtype=np.int64)
        neighborhoods[rows] = faces
        filtered = bilateral_filter(
            noisy, normals, neighborhoods,
            BilateralConfig(cfg.sigma2, cfg.N_B, cfg.sigma1_mode), threads,
        )
        t3 = time.perf_counter()
        out_mesh = update_vertices(noisy, adj, filtered, VertexUpdateConfig(cfg.N_V), threads)
        t4 = time.perf_counter()
    timings.update(descriptor=t1 - t0, inference=t2 - t1, bilateral=t3 - t2, vertex_update=t4 - t3)
    skipped = np.flatnonzero(~ps.valid)
    if len(skipped):
        log.warning("%d faces kept their input normal (no full %d-neighbourhood)", len(skipped), cfg.n)
    if not ok.all():
        log.warning("%d faces decoded to a zero vector and kept their input normal", int((~ok).sum()))
    return DenoiseResult(out_mesh, cvae_normals, filtered, skipped, timings)


def denoise_mesh(noisy: Mesh, bundle: ModelBundle, cfg: DenoiseConfig | None = None) -> Mesh:
    return denoise(noisy, bundle, cfg).mesh
