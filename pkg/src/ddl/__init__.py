"""Denoising dictionary learning as a defense against adversarial perturbations.

Sparse coding over learned patch dictionaries (OMP / ISTA), an online
dictionary learner, a from-scratch MLP classifier, FGSM and JSMA attacks,
PSNR/SSIM metrics, and a CLI harness tying them into an evaluation pipeline.
"""

from .attacks import AttackConfig, AttackResult, fgsm_perturb, jsma_attack, jsma_saliency
from .coding import CoderConfig, SparseCode, batch_encode, ista_encode, omp_encode
from .data import (
    LabeledDataset,
    load_cifar_binary,
    load_dataset,
    load_idx,
    load_matrix,
    save_dataset,
    save_matrix,
    synthesize_dataset,
)
from .dictlearn import (
    DictLearnConfig,
    Dictionary,
    dictionary_update_step,
    init_dictionary,
    learn,
    load_dictionary,
    save_dictionary,
)
from .metrics import QualityReport, accuracy_table, psnr, ssim
from .mlp import (
    MlpModel,
    TrainConfig,
    build_mlp,
    evaluate_accuracy,
    forward,
    forward_jacobian,
    input_gradient,
    load_model,
    loss,
    predict,
    save_model,
    train,
)
from .patches import (
    PatchMatrix,
    denoise_dataset,
    denoise_image,
    extract_patches,
    reassemble,
)

__version__ = "0.1.0"
