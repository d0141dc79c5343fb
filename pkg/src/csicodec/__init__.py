"""Meta-learned implicit neural codec for MIMO-OFDM CSI feedback."""

from .channel import (
    LIGHT_SPEED,
    PathSet,
    SystemConfig,
    channel_element,
    channel_matrix,
    channel_vector,
    half_wavelength_config,
    steering_vector,
)
from .dataset import (
    Dataset,
    SamplingSpec,
    generate_dataset,
    load_dataset,
    sample_paths,
    save_dataset,
    split_dataset,
)
from .model import (
    ArchConfig,
    CoordinateGrid,
    ModelParams,
    init_params,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
)
from .siren import (
    ActivationTape,
    GradientBundle,
    backward_codeword,
    backward_params,
    finite_diff_check,
    forward,
    loss_mse,
)
from .training import (
    AdamState,
    TrainConfig,
    TrainLog,
    TrainingDiverged,
    inner_adapt,
    outer_step,
    train,
)
from .entropy import (
    FrequencyTable,
    entropy_decode,
    entropy_encode,
    fit_frequency_table,
)
from .codec import (
    Bitstream,
    CodecState,
    QuantizerConfig,
    decode_sample,
    encode_sample,
    fit_codec_state,
    load_bitstream,
    load_sidecar,
    save_bitstream,
    save_sidecar,
)
from .evaluate import (
    MetricReport,
    Rates,
    SweepSpec,
    evaluate_model,
    nmse,
    rates,
    rd_sweep,
    svd_baseline,
)

__version__ = "0.1.0"
