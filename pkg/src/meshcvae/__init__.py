"""Mesh denoising with a conditional variational autoencoder on face-normal patches."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .mesh import Adjacency, Mesh, build_adjacency
from .meshio import MeshFormat, load_mesh, read_mesh, save_mesh, write_mesh
from .noise import NoiseSpec, add_gaussian_noise
from .patch import PatchSet, build_patch, build_patches, encode_descriptor
from .cluster import ClusterModel, assign_label, kmeans_fit
from .neural import CvaeParams, TrainConfig, init_cvae, train_cvae
from .filters import BilateralConfig, VertexUpdateConfig, bilateral_filter, update_vertices
from .metrics import evaluate, normal_angle_alpha, one_sided_distance
from .pipeline import DenoiseConfig, ModelBundle, build_training_set, denoise, denoise_mesh, train_bundle
from .modelio import load_model, save_model
from .bench import benchmark
