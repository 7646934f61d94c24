"""
Shared constants and the root exception type.

Frame geometry, image geometry and file names used by more than one module live here
so the commands and the library agree on them.
"""

# Audio
SAMPLE_RATE = 16000
WINDOW_LEN = 512          # 32 ms at 16 kHz
HOP = 320                 # 20 ms, i.e. 37.5% overlap
N_BINS = WINDOW_LEN // 2 + 1
FRAME_RATE = SAMPLE_RATE // HOP  # 50 frames per second
CONTEXT = 2               # +/- frames around the central one
CONTEXT_WIDTH = 2 * CONTEXT + 1

# Mouth images
IMG_H = 16
IMG_W = 24
IMG_C = 3
IMG_SIZE = IMG_H * IMG_W * IMG_C   # 1152
VIDEO_FPS = 50

# Model kinds
MODEL_KINDS = ("avdcnn", "adcnn", "avdcnn_ef")

# Files
RUN_MANIFEST = "run_manifest.json"
CHECKPOINT_MANIFEST = "manifest.txt"
CORPUS_MANIFEST = "corpus.csv"
MIX_MANIFEST = "mix.csv"
TRAIN_LOG = "trainlog.csv"
FRAME_NAME = "{:05d}.ppm"

# Environment
ENV_CONFIG = "AVSE_CONFIG"
ENV_LOG_FILE = "AVSE_LOG_FILE"
ENV_JOBS = "AVSE_JOBS"


class AVSEError(Exception):
    """Base exception for everything the pipeline raises on purpose."""
    pass
