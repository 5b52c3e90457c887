from svbrdf_uq.errors import ContractError
from svbrdf_uq.material import ImageGrid, MapStack, NormalMap, validate_stack
from svbrdf_uq.metrics import ArtifactThresholds, brdf_distance, detect_artifacts
from svbrdf_uq.predictor import Predictor, PredictorConfig, predict, train
from svbrdf_uq.renderer import RenderSet, ggx_specular, sample_render_set, shade
from svbrdf_uq.uncertainty import SampleSet, build_report, mc_sample, sigma_brdf

__version__ = "0.1.0"
